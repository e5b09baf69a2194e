#include "asem/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace asem {

namespace {

using ordered_json = nlohmann::ordered_json;

void reject_unknown(const ordered_json& j, const std::set<std::string>& allowed,
                    const std::string& where) {
    for (const auto& [key, _] : j.items())
        if (!allowed.count(key))
            throw std::invalid_argument("unknown config key '" + key + "' in " + where);
}

template <typename T>
void read(const ordered_json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

ModelConfig parse_model(const ordered_json& j) {
    reject_unknown(j,
                   {"vocab_size", "embed_dim", "d_model", "n_layers", "n_heads", "n_sentiments",
                    "n_emotions", "turn_weight", "max_len", "dropout", "ffn_dim",
                    "use_weighted_concat", "use_sae", "use_sentiment_loss", "single_enc_dec"},
                   "model");
    ModelConfig m;
    read(j, "vocab_size", m.vocab_size);
    read(j, "embed_dim", m.embed_dim);
    read(j, "d_model", m.d_model);
    read(j, "n_layers", m.n_layers);
    read(j, "n_heads", m.n_heads);
    read(j, "n_sentiments", m.n_sentiments);
    read(j, "n_emotions", m.n_emotions);
    read(j, "turn_weight", m.turn_weight);
    read(j, "max_len", m.max_len);
    read(j, "dropout", m.dropout);
    read(j, "ffn_dim", m.ffn_dim);
    read(j, "use_weighted_concat", m.use_weighted_concat);
    read(j, "use_sae", m.use_sae);
    read(j, "use_sentiment_loss", m.use_sentiment_loss);
    read(j, "single_enc_dec", m.single_enc_dec);
    return m;
}

TrainConfig parse_train(const ordered_json& j) {
    reject_unknown(j,
                   {"learning_rate", "weight_decay", "max_steps", "batch_size",
                    "early_stop_patience", "eval_every", "seed", "loss_schedule", "warmup_epochs",
                    "grad_clip_norm"},
                   "train");
    TrainConfig t;
    read(j, "learning_rate", t.learning_rate);
    read(j, "weight_decay", t.weight_decay);
    read(j, "max_steps", t.max_steps);
    read(j, "batch_size", t.batch_size);
    read(j, "early_stop_patience", t.early_stop_patience);
    read(j, "eval_every", t.eval_every);
    read(j, "seed", t.seed);
    if (j.contains("loss_schedule"))
        t.loss_schedule = parse_loss_schedule(j.at("loss_schedule").get<std::string>());
    read(j, "warmup_epochs", t.warmup_epochs);
    read(j, "grad_clip_norm", t.grad_clip_norm);
    return t;
}

DecodeConfig parse_decode(const ordered_json& j) {
    reject_unknown(j, {"beam_width", "length_penalty", "max_new_tokens"}, "decode");
    DecodeConfig d;
    read(j, "beam_width", d.beam_width);
    read(j, "length_penalty", d.length_penalty);
    read(j, "max_new_tokens", d.max_new_tokens);
    return d;
}

Paths parse_paths(const ordered_json& j) {
    reject_unknown(j,
                   {"raw", "train_corpus", "valid_corpus", "test_corpus", "embeddings",
                    "checkpoint", "report", "log"},
                   "paths");
    Paths p;
    read(j, "raw", p.raw);
    read(j, "train_corpus", p.train_corpus);
    read(j, "valid_corpus", p.valid_corpus);
    read(j, "test_corpus", p.test_corpus);
    read(j, "embeddings", p.embeddings);
    read(j, "checkpoint", p.checkpoint);
    read(j, "report", p.report);
    read(j, "log", p.log);
    return p;
}

}  // namespace

void ModelConfig::validate() const {
    if (vocab_size < 5) throw std::invalid_argument("vocab_size must cover the reserved tokens");
    if (embed_dim < 1 || d_model < 1 || n_layers < 1 || ffn_dim < 1 || max_len < 1)
        throw std::invalid_argument("model dimensions must be positive");
    if (n_heads < 1 || d_model % n_heads != 0)
        throw std::invalid_argument("d_model must be divisible by n_heads");
    if (n_sentiments < 2) throw std::invalid_argument("n_sentiments must be >= 2");
    if (n_emotions < 2) throw std::invalid_argument("n_emotions must be >= 2");
    if (!(turn_weight > 0.f)) throw std::invalid_argument("turn_weight must be > 0");
    if (dropout < 0.f || dropout >= 1.f) throw std::invalid_argument("dropout must be in [0,1)");
}

void TrainConfig::validate() const {
    if (!(learning_rate >= 0)) throw std::invalid_argument("learning_rate must be >= 0");
    if (!(weight_decay >= 0)) throw std::invalid_argument("weight_decay must be >= 0");
    if (max_steps < 0) throw std::invalid_argument("max_steps must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (early_stop_patience < 1) throw std::invalid_argument("early_stop_patience must be >= 1");
    if (eval_every < 1) throw std::invalid_argument("eval_every must be >= 1");
    if (warmup_epochs < 0) throw std::invalid_argument("warmup_epochs must be >= 0");
}

void DecodeConfig::validate() const {
    if (beam_width < 1) throw std::invalid_argument("beam_width must be >= 1");
    if (max_new_tokens < 0) throw std::invalid_argument("max_new_tokens must be >= 0");
}

void RunConfig::validate() const {
    // vocab_size is sized from the corpus after loading; 0 means "not yet".
    ModelConfig m = model;
    if (m.vocab_size == 0) m.vocab_size = 5;
    m.validate();
    train.validate();
    decode.validate();
    if (min_freq < 1) throw std::invalid_argument("min_freq must be >= 1");
}

std::string to_string(LossSchedule s) {
    return s == LossSchedule::Joint ? "joint" : "sentiment_then_emotion";
}

LossSchedule parse_loss_schedule(const std::string& s) {
    if (s == "joint") return LossSchedule::Joint;
    if (s == "sentiment_then_emotion") return LossSchedule::SentimentThenEmotion;
    throw std::invalid_argument("unknown loss_schedule: " + s);
}

RunConfig parse_run_config(const std::string& json_text) {
    ordered_json j;
    try {
        j = ordered_json::parse(json_text);
    } catch (const std::exception& e) {
        throw std::invalid_argument(std::string("config parse error: ") + e.what());
    }
    reject_unknown(j, {"dataset_tag", "paths", "model", "train", "decode", "min_freq"}, "config");
    RunConfig r;
    if (j.contains("dataset_tag"))
        r.dataset_tag = parse_dataset_tag(j.at("dataset_tag").get<std::string>());
    if (j.contains("paths")) r.paths = parse_paths(j.at("paths"));
    if (j.contains("model")) r.model = parse_model(j.at("model"));
    if (j.contains("train")) r.train = parse_train(j.at("train"));
    if (j.contains("decode")) r.decode = parse_decode(j.at("decode"));
    if (j.contains("min_freq")) r.min_freq = j.at("min_freq").get<int>();
    return r;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

std::string model_config_json(const ModelConfig& m) {
    ordered_json j;
    j["vocab_size"] = m.vocab_size;
    j["embed_dim"] = m.embed_dim;
    j["d_model"] = m.d_model;
    j["n_layers"] = m.n_layers;
    j["n_heads"] = m.n_heads;
    j["n_sentiments"] = m.n_sentiments;
    j["n_emotions"] = m.n_emotions;
    j["turn_weight"] = m.turn_weight;
    j["max_len"] = m.max_len;
    j["dropout"] = m.dropout;
    j["ffn_dim"] = m.ffn_dim;
    j["use_weighted_concat"] = m.use_weighted_concat;
    j["use_sae"] = m.use_sae;
    j["use_sentiment_loss"] = m.use_sentiment_loss;
    j["single_enc_dec"] = m.single_enc_dec;
    return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
    ordered_json j = ordered_json::parse(text);
    return parse_model(j);
}

const std::vector<std::string>& ablation_names() {
    static const std::vector<std::string> names = {"no_weighted_concat", "one_enc_dec",
                                                   "no_sentiment_loss", "no_sae"};
    return names;
}

void apply_ablation(const std::string& name, ModelConfig& m) {
    if (name == "no_weighted_concat")
        m.use_weighted_concat = false;
    else if (name == "one_enc_dec")
        m.single_enc_dec = true;
    else if (name == "no_sentiment_loss")
        m.use_sentiment_loss = false;
    else if (name == "no_sae")
        m.use_sae = false;
    else
        throw std::invalid_argument("unknown ablation '" + name + "'");
}

}  // namespace asem
