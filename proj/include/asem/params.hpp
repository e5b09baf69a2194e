#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "asem/config.hpp"
#include "asem/rng.hpp"
#include "asem/tensor.hpp"

namespace asem {

template <typename T>
class ParameterStore {
  public:
    void add(const std::string& name, Tensor<T> t, bool trainable = true) {
        if (tensors_.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
        names_.push_back(name);
        tensors_.emplace(name, std::move(t));
        if (!trainable) frozen_.insert(name);
    }

    bool has(const std::string& name) const { return tensors_.count(name) > 0; }

    Tensor<T>& at(const std::string& name) {
        auto it = tensors_.find(name);
        if (it == tensors_.end()) throw std::out_of_range("no parameter: " + name);
        return it->second;
    }
    const Tensor<T>& at(const std::string& name) const {
        auto it = tensors_.find(name);
        if (it == tensors_.end()) throw std::out_of_range("no parameter: " + name);
        return it->second;
    }

    const std::vector<std::string>& names() const { return names_; }
    bool trainable(const std::string& name) const { return !frozen_.count(name); }

    long long param_count() const {
        long long n = 0;
        for (const auto& name : names_)
            if (trainable(name)) n += at(name).numel();
        return n;
    }

    bool all_finite() const {
        for (const auto& name : names_)
            if (!at(name).all_finite()) return false;
        return true;
    }

    const std::string* first_non_finite() const {
        for (const auto& name : names_)
            if (!at(name).all_finite()) return &name_ref(name);
        return nullptr;
    }

    template <typename U>
    ParameterStore<U> cast() const {
        ParameterStore<U> out;
        for (const auto& name : names_) {
            const Tensor<T>& src = at(name);
            Tensor<U> t(src.shape);
            for (int i = 0; i < src.numel(); ++i) t.data[(size_t)i] = (U)src.data[(size_t)i];
            out.add(name, std::move(t), trainable(name));
        }
        return out;
    }

  private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, Tensor<T>> tensors_;
    std::unordered_set<std::string> frozen_;

    const std::string& name_ref(const std::string& name) const {
        for (const auto& n : names_)
            if (n == name) return n;
        throw std::out_of_range("no parameter: " + name);
    }
};

namespace detail {

template <typename T>
Tensor<T> xavier(std::vector<int> shape, uint64_t seed) {
    int fan_in = shape[0];
    int fan_out = shape.size() > 1 ? shape[1] : shape[0];
    double bound = std::sqrt(6.0 / (double)(fan_in + fan_out));
    Rng rng(seed);
    Tensor<T> t(std::move(shape));
    for (auto& v : t.data) v = (T)rng.uniform(-bound, bound);
    return t;
}

template <typename T>
void add_linear(ParameterStore<T>& s, const std::string& prefix, int in, int out, uint64_t seed,
                bool bias = true) {
    s.add(prefix + "/w", xavier<T>({in, out}, substream_seed(seed, prefix + "/w")));
    if (bias) s.add(prefix + "/b", Tensor<T>::zeros({out}));
}

template <typename T>
void add_layer_norm(ParameterStore<T>& s, const std::string& prefix, int d) {
    s.add(prefix + "/g", Tensor<T>::full({d}, T(1)));
    s.add(prefix + "/b", Tensor<T>::zeros({d}));
}

template <typename T>
void add_attention(ParameterStore<T>& s, const std::string& prefix, int d, uint64_t seed) {
    add_linear(s, prefix + "/wq", d, d, seed);
    add_linear(s, prefix + "/wk", d, d, seed);
    add_linear(s, prefix + "/wv", d, d, seed);
    add_linear(s, prefix + "/wo", d, d, seed);
}

template <typename T>
void add_ffn(ParameterStore<T>& s, const std::string& prefix, int d, int f, uint64_t seed) {
    add_linear(s, prefix + "/w1", d, f, seed);
    add_linear(s, prefix + "/w2", f, d, seed);
}

template <typename T>
Tensor<T> sinusoidal_pe(int positions, int d) {
    Tensor<T> pe({positions, d});
    for (int p = 0; p < positions; ++p)
        for (int j = 0; j < d; ++j) {
            double angle = (double)p / std::pow(10000.0, (double)(2 * (j / 2)) / (double)d);
            pe.data[(size_t)p * d + j] = (T)(j % 2 == 0 ? std::sin(angle) : std::cos(angle));
        }
    return pe;
}

}  // namespace detail

// Positions reachable by context or SOS/EOS-framed response rows.
inline int pe_positions(const ModelConfig& cfg) { return cfg.max_len + 2; }

// Xavier-uniform matrices, zero biases, unit layer norms. Every tensor draws
// from its own name-keyed stream so adding or removing parameters never
// shifts another tensor's values, and experts/listeners differ by name.
template <typename T>
ParameterStore<T> init_params(const ModelConfig& cfg, uint64_t seed,
                              const Tensor<float>* embedding = nullptr) {
    cfg.validate();
    ParameterStore<T> s;
    if (embedding) {
        if (embedding->shape != std::vector<int>{cfg.vocab_size, cfg.embed_dim})
            throw std::invalid_argument("embedding table shape mismatch");
        Tensor<T> e(embedding->shape);
        for (int i = 0; i < embedding->numel(); ++i)
            e.data[(size_t)i] = (T)embedding->data[(size_t)i];
        s.add("embedding", std::move(e));
    } else {
        Tensor<T> e = detail::xavier<T>({cfg.vocab_size, cfg.embed_dim},
                                        substream_seed(seed, "embedding"));
        for (int j = 0; j < cfg.embed_dim; ++j) e.data[(size_t)j] = T(0);  // PAD row
        s.add("embedding", std::move(e));
    }
    // Bias-free so the PAD row maps to the zero vector in model space.
    if (cfg.embed_dim != cfg.d_model)
        detail::add_linear(s, "embed_proj", cfg.embed_dim, cfg.d_model, seed, false);

    int d = cfg.d_model, f = cfg.ffn_dim;
    for (int i = 0; i < cfg.n_layers; ++i) {
        std::string p = "enc/l" + std::to_string(i);
        detail::add_layer_norm(s, p + "/ln1", d);
        detail::add_attention(s, p + "/attn", d, seed);
        detail::add_layer_norm(s, p + "/ln2", d);
        detail::add_ffn(s, p + "/ffn", d, f, seed);
    }
    detail::add_layer_norm(s, "enc/ln_f", d);

    detail::add_linear(s, "sent", d, cfg.n_sentiments, seed);
    detail::add_linear(s, "emo", d, cfg.n_emotions, seed);

    if (!cfg.single_enc_dec) {
        for (int k = 0; k < cfg.n_sentiments; ++k) {
            std::string p = "expert" + std::to_string(k);
            detail::add_layer_norm(s, p + "/ln_q", d);
            detail::add_attention(s, p + "/attn", d, seed);
            detail::add_layer_norm(s, p + "/ln2", d);
            detail::add_ffn(s, p + "/ffn", d, f, seed);
            detail::add_layer_norm(s, p + "/ln_f", d);
        }
        for (int m = 0; m < cfg.n_emotions; ++m) {
            std::string p = "lis" + std::to_string(m);
            detail::add_layer_norm(s, p + "/ln1", d);
            detail::add_attention(s, p + "/self", d, seed);
            detail::add_layer_norm(s, p + "/ln2", d);
            detail::add_attention(s, p + "/cross", d, seed);
            detail::add_layer_norm(s, p + "/ln3", d);
            detail::add_ffn(s, p + "/ffn", d, f, seed);
        }
    }
    detail::add_layer_norm(s, "meta/ln1", d);
    detail::add_attention(s, "meta/self", d, seed);
    detail::add_layer_norm(s, "meta/ln2", d);
    detail::add_attention(s, "meta/cross", d, seed);
    detail::add_layer_norm(s, "meta/ln3", d);
    detail::add_ffn(s, "meta/ffn", d, f, seed);
    detail::add_layer_norm(s, "meta/ln_f", d);

    detail::add_linear(s, "out", d, cfg.vocab_size, seed);

    s.add("pe", detail::sinusoidal_pe<T>(pe_positions(cfg), d), /*trainable=*/false);
    return s;
}

}  // namespace asem
