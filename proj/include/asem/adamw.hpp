#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "asem/params.hpp"
#include "asem/tensor.hpp"

namespace asem {

// AdamW with decoupled weight decay: p <- p*(1 - wd) - lr * m_hat/(sqrt(v_hat)+eps).
// The decay term is deliberately not scaled by the learning rate, so lr=0
// leaves only decay acting. Moments live here, keyed by parameter name.
template <typename T>
class AdamW {
  public:
    AdamW(double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
          double eps = 1e-8)
        : lr_(lr), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    long long steps() const { return t_; }
    void set_steps(long long t) { t_ = t; }

    std::unordered_map<std::string, Tensor<T>>& moments_m() { return m_; }
    std::unordered_map<std::string, Tensor<T>>& moments_v() { return v_; }

    // grads must hold one tensor per trainable parameter (zeros are fine).
    // grad_clip_norm <= 0 disables clipping.
    void step(ParameterStore<T>& params, std::unordered_map<std::string, Tensor<T>>& grads,
              double grad_clip_norm) {
        if (grad_clip_norm > 0) {
            double sq = 0;
            for (const auto& name : params.names()) {
                if (!params.trainable(name)) continue;
                const Tensor<T>& g = grads.at(name);
                for (T x : g.data) sq += (double)x * (double)x;
            }
            double norm = std::sqrt(sq);
            if (norm > grad_clip_norm) {
                T scale = (T)(grad_clip_norm / norm);
                for (const auto& name : params.names()) {
                    if (!params.trainable(name)) continue;
                    for (T& x : grads.at(name).data) x *= scale;
                }
            }
        }
        ++t_;
        T bc1 = (T)(1.0 - std::pow(beta1_, (double)t_));
        T bc2 = (T)(1.0 - std::pow(beta2_, (double)t_));
        for (const auto& name : params.names()) {
            if (!params.trainable(name)) continue;
            Tensor<T>& p = params.at(name);
            const Tensor<T>& g = grads.at(name);
            if (!p.same_shape(g)) throw std::invalid_argument("grad shape mismatch: " + name);
            Tensor<T>& m = moment(m_, name, p);
            Tensor<T>& v = moment(v_, name, p);
            for (int i = 0; i < p.numel(); ++i) {
                size_t k = (size_t)i;
                m.data[k] = (T)beta1_ * m.data[k] + (T)(1.0 - beta1_) * g.data[k];
                v.data[k] = (T)beta2_ * v.data[k] + (T)(1.0 - beta2_) * g.data[k] * g.data[k];
                T mhat = m.data[k] / bc1;
                T vhat = v.data[k] / bc2;
                p.data[k] = p.data[k] * (T)(1.0 - wd_) -
                            (T)lr_ * mhat / (std::sqrt(vhat) + (T)eps_);
            }
        }
    }

  private:
    double lr_, wd_, beta1_, beta2_, eps_;
    long long t_ = 0;
    std::unordered_map<std::string, Tensor<T>> m_, v_;

    Tensor<T>& moment(std::unordered_map<std::string, Tensor<T>>& store, const std::string& name,
                      const Tensor<T>& like) {
        auto it = store.find(name);
        if (it == store.end()) it = store.emplace(name, Tensor<T>::zeros(like.shape)).first;
        return it->second;
    }
};

}  // namespace asem
