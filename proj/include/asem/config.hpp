#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "asem/emotions.hpp"

namespace asem {

struct ModelConfig {
    int vocab_size = 0;
    int embed_dim = 300;
    int d_model = 64;
    int n_layers = 2;
    int n_heads = 2;
    int n_sentiments = 2;  // K: experts, one per sentiment class
    int n_emotions = 10;   // M: listener decoders, one per emotion class
    float turn_weight = 2.5f;
    int max_len = 128;
    float dropout = 0.0f;
    int ffn_dim = 128;
    bool use_weighted_concat = true;
    bool use_sae = true;
    bool use_sentiment_loss = true;
    bool single_enc_dec = false;

    void validate() const;
};

enum class LossSchedule { Joint, SentimentThenEmotion };

std::string to_string(LossSchedule s);
LossSchedule parse_loss_schedule(const std::string& s);

struct TrainConfig {
    double learning_rate = 1e-4;
    double weight_decay = 0.01;
    int max_steps = 500;
    int batch_size = 16;
    int early_stop_patience = 3;
    int eval_every = 50;
    uint64_t seed = 1;
    LossSchedule loss_schedule = LossSchedule::Joint;
    int warmup_epochs = 1;      // sentiment-only epochs under the sequential schedule
    double grad_clip_norm = 1.0;  // <= 0 disables clipping

    void validate() const;
};

struct DecodeConfig {
    int beam_width = 5;
    double length_penalty = 0.6;
    int max_new_tokens = 30;

    void validate() const;
};

struct Paths {
    std::string raw;
    std::string train_corpus;
    std::string valid_corpus;
    std::string test_corpus;
    std::string embeddings = "none";  // "none" selects seeded random rows
    std::string checkpoint;
    std::string report;
    std::string log;
};

struct RunConfig {
    DatasetTag dataset_tag = DatasetTag::ED;
    Paths paths;
    ModelConfig model;
    TrainConfig train;
    DecodeConfig decode;
    int min_freq = 1;

    void validate() const;
};

// Strict parse: unknown keys anywhere are an error.
RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& json_text);

std::string model_config_json(const ModelConfig& m);
ModelConfig model_config_from_json(const std::string& text);

// Named single-flag model variants for comparison runs.
const std::vector<std::string>& ablation_names();
void apply_ablation(const std::string& name, ModelConfig& m);

}  // namespace asem
