#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "asem/config.hpp"
#include "asem/params.hpp"
#include "asem/tensor.hpp"
#include "asem/vocab.hpp"

namespace asem {

// Full training state: self-describing, so loading needs no external config,
// and save -> load -> step reproduces an uninterrupted run bit-for-bit.
struct Checkpoint {
    ModelConfig model;
    TrainConfig train;
    DatasetTag dataset_tag = DatasetTag::ED;
    std::vector<std::string> vocab_tokens;
    std::vector<std::string> emotion_names;
    std::vector<std::string> sentiment_names;
    ParameterStore<float> params;
    std::unordered_map<std::string, Tensor<float>> opt_m, opt_v;
    long long step = 0;
    long long adam_steps = 0;
    long long epoch = 0;
    long long cursor = 0;  // batch index within the current epoch
    double best_val = std::numeric_limits<double>::infinity();
    long long stale_evals = 0;  // validations since the last improvement
    std::vector<double> val_history;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

std::string train_config_json(const TrainConfig& t);
TrainConfig train_config_from_json(const std::string& text);

}  // namespace asem
