#pragma once

#include <ostream>
#include <vector>

#include "asem/checkpoint.hpp"
#include "asem/corpus.hpp"
#include "asem/embeddings.hpp"
#include "asem/model.hpp"

namespace asem {

struct TrainLogEntry {
    long long step = 0;
    float l1 = 0, l2 = 0, l3 = 0, total = 0;
    bool has_val = false;
    double val_total = 0;
};

struct TrainOutcome {
    Checkpoint best;  // best-validation state (final state when no validation ran)
    Checkpoint last;
    bool improved = false;  // some validation beat the starting best_val
    std::vector<TrainLogEntry> log;
};

Checkpoint init_checkpoint(const ModelConfig& mc, const TrainConfig& tc, DatasetTag tag,
                           const Vocabulary& vocab, const std::vector<std::string>& emotion_names,
                           const std::vector<std::string>& sentiment_names,
                           const Tensor<float>* embedding);

// One AdamW update on the gradient of the scheduled loss. Increments the step
// and optimizer counters in place.
LossBundle<float> train_step(Checkpoint& state, const Batch& batch, bool sentiment_only = false);

double validation_loss(const ModelConfig& mc, const ParameterStore<float>& params,
                       const std::vector<Batch>& batches);

// Epoch-shuffled batches, periodic validation, early stopping on patience.
// Resumable: the shuffle order is a pure function of (seed, epoch), so a
// loaded checkpoint continues exactly where it stopped.
TrainOutcome train_loop(Checkpoint state, const std::vector<EncodedExample>& train_examples,
                        const std::vector<EncodedExample>& valid_examples,
                        std::ostream* log_jsonl = nullptr);

}  // namespace asem
