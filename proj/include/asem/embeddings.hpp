#pragma once

#include <cstdint>
#include <string>

#include "asem/tensor.hpp"
#include "asem/vocab.hpp"

namespace asem {

struct EmbeddingTable {
    Tensor<float> matrix;  // [vocab_size, dim]
    int dim = 0;
};

// Load word vectors in text format ("token v1 ... v_dim", one per line).
// In-vocab tokens found in the file get their file vectors; misses get seeded
// uniform(-0.1, 0.1) rows. The PAD row is zeroed last.
EmbeddingTable load_embeddings(const std::string& path, const Vocabulary& vocab, int dim,
                               uint64_t seed);

// All-miss variant for runs without a vector file.
EmbeddingTable random_embeddings(const Vocabulary& vocab, int dim, uint64_t seed);

}  // namespace asem
