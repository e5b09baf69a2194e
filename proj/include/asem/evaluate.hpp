#pragma once

#include <set>
#include <vector>

#include "asem/config.hpp"
#include "asem/corpus.hpp"
#include "asem/embeddings.hpp"
#include "asem/metrics.hpp"
#include "asem/params.hpp"
#include "asem/vocab.hpp"

namespace asem {

struct EvalOptions {
    int batch_size = 16;
    DecodeConfig decode;
    std::set<int> exclude_emotions;  // dropped from the macro-F1 average
};

struct ClassifierOutputs {
    std::vector<int> emotion_pred, emotion_gold;
    std::vector<int> sentiment_pred, sentiment_gold;
    double total_nll = 0;  // response token NLL, summed
    long long token_count = 0;
};

// Teacher-forced pass over every example: response NLL plus argmax class
// predictions from the two heads.
ClassifierOutputs classify_examples(const ModelConfig& cfg, const ParameterStore<float>& store,
                                    const std::vector<EncodedExample>& examples, int batch_size);

// Beam-decoded response strings, one per example.
std::vector<std::vector<std::string>> generate_responses(const ModelConfig& cfg,
                                                         const ParameterStore<float>& store,
                                                         const std::vector<EncodedExample>& examples,
                                                         const Vocabulary& vocab,
                                                         const DecodeConfig& decode);

MetricReport evaluate_model(const ModelConfig& cfg, const ParameterStore<float>& store,
                            const std::vector<EncodedExample>& examples, const Vocabulary& vocab,
                            const EmbeddingTable& table, const EvalOptions& opts);

}  // namespace asem
