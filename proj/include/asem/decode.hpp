#pragma once

#include <memory>
#include <vector>

#include "asem/model.hpp"

namespace asem {

// Anything that can score the next token given a prefix (SOS first). Lets the
// search algorithms be tested against hand-built probability tables.
class StepScorer {
  public:
    virtual ~StepScorer() = default;
    virtual int vocab_size() const = 0;
    virtual std::vector<double> log_probs(const std::vector<int>& prefix) = 0;
};

struct DecodeResult {
    std::vector<int> tokens;  // generated tokens, SOS and final EOS stripped
    double log_prob = 0;      // cumulative over emitted tokens (EOS included)
    double score = 0;         // log_prob / length^penalty
};

// Argmax continuation; ties go to the lowest token index.
std::vector<int> greedy_decode(StepScorer& scorer, int sos, int eos, int max_new_tokens);

// Standard beam expansion; finished beams stay in the pool and compete by
// length-normalized score. Candidates come back sorted best-first.
std::vector<DecodeResult> beam_search(StepScorer& scorer, int sos, int eos, int width,
                                      int max_new_tokens, double length_penalty);

// Scores continuations with the trained model over a fixed encoded context.
class ModelScorer : public StepScorer {
  public:
    ModelScorer(const ModelConfig& cfg, const ParameterStore<float>& store,
                EncodedContext<float> enc)
        : cfg_(cfg), store_(store), enc_(std::move(enc)) {}

    int vocab_size() const override { return cfg_.vocab_size; }

    std::vector<double> log_probs(const std::vector<int>& prefix) override {
        std::vector<float> lp = next_token_log_probs(cfg_, store_, enc_, prefix);
        return std::vector<double>(lp.begin(), lp.end());
    }

  private:
    const ModelConfig& cfg_;
    const ParameterStore<float>& store_;
    EncodedContext<float> enc_;
};

}  // namespace asem
