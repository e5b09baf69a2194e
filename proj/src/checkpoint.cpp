#include "asem/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace asem {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr char kMagic[8] = {'A', 'S', 'E', 'M', 'C', 'K', 'P', 'T'};
constexpr uint32_t kFormatVersion = 1;

void write_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {(unsigned char)(v & 0xff), (unsigned char)((v >> 8) & 0xff),
                          (unsigned char)((v >> 16) & 0xff), (unsigned char)((v >> 24) & 0xff)};
    out.write((const char*)b, 4);
}

uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read((char*)b, 4);
    if (!in) throw std::runtime_error("checkpoint truncated");
    return (uint32_t)b[0] | ((uint32_t)b[1] << 8) | ((uint32_t)b[2] << 16) | ((uint32_t)b[3] << 24);
}

void write_tensor(std::ostream& out, const std::string& name, const Tensor<float>& t) {
    write_u32(out, (uint32_t)name.size());
    out.write(name.data(), (std::streamsize)name.size());
    write_u32(out, (uint32_t)t.rank());
    for (int d : t.shape) write_u32(out, (uint32_t)d);
    static_assert(sizeof(float) == 4);
    out.write((const char*)t.data.data(), (std::streamsize)(t.data.size() * 4));
}

std::pair<std::string, Tensor<float>> read_tensor(std::istream& in) {
    uint32_t name_len = read_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    uint32_t rank = read_u32(in);
    std::vector<int> shape;
    for (uint32_t i = 0; i < rank; ++i) shape.push_back((int)read_u32(in));
    Tensor<float> t(shape);
    in.read((char*)t.data.data(), (std::streamsize)(t.data.size() * 4));
    if (!in) throw std::runtime_error("checkpoint truncated reading tensor " + name);
    return {std::move(name), std::move(t)};
}

}  // namespace

std::string train_config_json(const TrainConfig& t) {
    ordered_json j;
    j["learning_rate"] = t.learning_rate;
    j["weight_decay"] = t.weight_decay;
    j["max_steps"] = t.max_steps;
    j["batch_size"] = t.batch_size;
    j["early_stop_patience"] = t.early_stop_patience;
    j["eval_every"] = t.eval_every;
    j["seed"] = t.seed;
    j["loss_schedule"] = to_string(t.loss_schedule);
    j["warmup_epochs"] = t.warmup_epochs;
    j["grad_clip_norm"] = t.grad_clip_norm;
    return j.dump();
}

TrainConfig train_config_from_json(const std::string& text) {
    ordered_json j = ordered_json::parse(text);
    TrainConfig t;
    t.learning_rate = j.at("learning_rate").get<double>();
    t.weight_decay = j.at("weight_decay").get<double>();
    t.max_steps = j.at("max_steps").get<int>();
    t.batch_size = j.at("batch_size").get<int>();
    t.early_stop_patience = j.at("early_stop_patience").get<int>();
    t.eval_every = j.at("eval_every").get<int>();
    t.seed = j.at("seed").get<uint64_t>();
    t.loss_schedule = parse_loss_schedule(j.at("loss_schedule").get<std::string>());
    t.warmup_epochs = j.at("warmup_epochs").get<int>();
    t.grad_clip_norm = j.at("grad_clip_norm").get<double>();
    return t;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out.write(kMagic, 8);
    write_u32(out, kFormatVersion);

    ordered_json header;
    header["model"] = ordered_json::parse(model_config_json(ckpt.model));
    header["train"] = ordered_json::parse(train_config_json(ckpt.train));
    header["dataset_tag"] = to_string(ckpt.dataset_tag);
    header["vocab"] = ckpt.vocab_tokens;
    header["emotion_names"] = ckpt.emotion_names;
    header["sentiment_names"] = ckpt.sentiment_names;
    header["step"] = ckpt.step;
    header["adam_steps"] = ckpt.adam_steps;
    header["epoch"] = ckpt.epoch;
    header["cursor"] = ckpt.cursor;
    header["best_val"] = ckpt.best_val;
    header["stale_evals"] = ckpt.stale_evals;
    header["val_history"] = ckpt.val_history;
    std::string htext = header.dump();
    write_u32(out, (uint32_t)htext.size());
    out.write(htext.data(), (std::streamsize)htext.size());

    uint32_t n_tensors =
        (uint32_t)(ckpt.params.names().size() + ckpt.opt_m.size() + ckpt.opt_v.size());
    write_u32(out, n_tensors);
    for (const auto& name : ckpt.params.names()) write_tensor(out, name, ckpt.params.at(name));
    // moments in parameter order for stable bytes
    for (const auto& name : ckpt.params.names())
        if (ckpt.opt_m.count(name)) write_tensor(out, "opt/m/" + name, ckpt.opt_m.at(name));
    for (const auto& name : ckpt.params.names())
        if (ckpt.opt_v.count(name)) write_tensor(out, "opt/v/" + name, ckpt.opt_v.at(name));
    if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("not a checkpoint file: " + path);
    uint32_t version = read_u32(in);
    if (version != kFormatVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    uint32_t hlen = read_u32(in);
    std::string htext(hlen, '\0');
    in.read(htext.data(), hlen);
    if (!in) throw std::runtime_error("checkpoint truncated");
    ordered_json header = ordered_json::parse(htext);

    Checkpoint ckpt;
    ckpt.model = model_config_from_json(header.at("model").dump());
    ckpt.train = train_config_from_json(header.at("train").dump());
    ckpt.dataset_tag = parse_dataset_tag(header.at("dataset_tag").get<std::string>());
    ckpt.vocab_tokens = header.at("vocab").get<std::vector<std::string>>();
    ckpt.emotion_names = header.at("emotion_names").get<std::vector<std::string>>();
    ckpt.sentiment_names = header.at("sentiment_names").get<std::vector<std::string>>();
    ckpt.step = header.at("step").get<long long>();
    ckpt.adam_steps = header.at("adam_steps").get<long long>();
    ckpt.epoch = header.at("epoch").get<long long>();
    ckpt.cursor = header.at("cursor").get<long long>();
    // json has no infinity; a never-validated checkpoint stores null
    ckpt.best_val = header.at("best_val").is_null() ? std::numeric_limits<double>::infinity()
                                                    : header.at("best_val").get<double>();
    ckpt.stale_evals = header.at("stale_evals").get<long long>();
    ckpt.val_history = header.at("val_history").get<std::vector<double>>();

    uint32_t n_tensors = read_u32(in);
    for (uint32_t i = 0; i < n_tensors; ++i) {
        auto [name, t] = read_tensor(in);
        if (name.rfind("opt/m/", 0) == 0)
            ckpt.opt_m.emplace(name.substr(6), std::move(t));
        else if (name.rfind("opt/v/", 0) == 0)
            ckpt.opt_v.emplace(name.substr(6), std::move(t));
        else
            ckpt.params.add(name, std::move(t), name != "pe");
    }
    return ckpt;
}

}  // namespace asem
