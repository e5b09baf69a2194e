#include "asem/embeddings.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "asem/rng.hpp"

namespace asem {

namespace {

// Per-token streams keyed by the token string, so a row does not depend on
// file order or on which other tokens are present.
void fill_random_row(float* row, int dim, const std::string& token, uint64_t seed) {
    Rng rng(substream_seed(seed, token));
    for (int j = 0; j < dim; ++j) row[j] = (float)rng.uniform(-0.1, 0.1);
}

}  // namespace

EmbeddingTable random_embeddings(const Vocabulary& vocab, int dim, uint64_t seed) {
    if (dim <= 0) throw std::invalid_argument("embedding dim must be positive");
    EmbeddingTable t;
    t.dim = dim;
    t.matrix = Tensor<float>::zeros({vocab.size(), dim});
    for (int i = 0; i < vocab.size(); ++i) {
        if (i == Vocabulary::kPad) continue;
        fill_random_row(t.matrix.ptr() + (size_t)i * dim, dim, vocab.decode(i), seed);
    }
    return t;
}

EmbeddingTable load_embeddings(const std::string& path, const Vocabulary& vocab, int dim,
                               uint64_t seed) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open embedding file: " + path);
    EmbeddingTable t = random_embeddings(vocab, dim, seed);
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string token;
        ss >> token;
        if (!vocab.contains(token)) continue;
        int id = vocab.encode(token);
        float* row = t.matrix.ptr() + (size_t)id * dim;
        for (int j = 0; j < dim; ++j) {
            if (!(ss >> row[j]))
                throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                         ": expected " + std::to_string(dim) + " values");
        }
        float extra;
        if (ss >> extra)
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": row wider than dim " + std::to_string(dim));
    }
    for (int j = 0; j < dim; ++j) t.matrix.ptr()[(size_t)Vocabulary::kPad * dim + j] = 0.f;
    return t;
}

}  // namespace asem
