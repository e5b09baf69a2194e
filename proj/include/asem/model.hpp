#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "asem/config.hpp"
#include "asem/corpus.hpp"
#include "asem/graph.hpp"
#include "asem/params.hpp"
#include "asem/rng.hpp"
#include "asem/tensor.hpp"

namespace asem {

template <typename T>
struct LossBundle {
    T l1 = T(0), l2 = T(0), l3 = T(0), total = T(0);
};

template <typename T>
struct ForwardTrace {
    Tensor<T> g_h;           // [B, Lc, d]
    Tensor<T> s_att_pos;     // [B, Lc, K]
    Tensor<T> s_att_pooled;  // [B, K]
    Tensor<T> expert_out;    // [B, K, d] (zeros when the branch is off)
    Tensor<T> w_att;         // [B, Lc, d] (zeros when the branch is off)
    Tensor<T> s_h;           // [B, Lc, d]
    Tensor<T> e_att;         // [B, M]
    Tensor<T> token_logits;  // [B, Lr, V]
};

namespace net {

// A graph with parameter leaves bound; everything the block helpers need.
template <typename T>
struct Net {
    Graph<T> g;
    const ModelConfig* cfg = nullptr;
    const ParameterStore<T>* store = nullptr;
    std::unordered_map<std::string, int> pid;
    Rng* drop_rng = nullptr;  // non-null enables dropout

    int P(const std::string& name) {
        auto it = pid.find(name);
        if (it != pid.end()) return it->second;
        const Tensor<T>& t = store->at(name);
        bool want_grad = grads_enabled && store->trainable(name);
        int id = g.leaf(t, want_grad);
        pid.emplace(name, id);
        return id;
    }

    bool grads_enabled = false;
};

template <typename T>
Net<T> bind(const ModelConfig& cfg, const ParameterStore<T>& store, bool with_grads,
            Rng* drop_rng = nullptr) {
    Net<T> n;
    n.cfg = &cfg;
    n.store = &store;
    n.grads_enabled = with_grads;
    n.drop_rng = drop_rng;
    return n;
}

constexpr double kMaskOff = -1e9;

// Additive key-padding mask [B*H, Lq, Lk]: 0 on real keys, -1e9 on PAD keys.
template <typename T>
int key_mask_node(Graph<T>& g, const std::vector<float>& key_mask, int B, int H, int Lq, int Lk) {
    Tensor<T> m({B * H, Lq, Lk});
    for (int b = 0; b < B; ++b)
        for (int h = 0; h < H; ++h)
            for (int q = 0; q < Lq; ++q)
                for (int k = 0; k < Lk; ++k)
                    m.data[((((size_t)b * H + h) * Lq + q) * Lk) + k] =
                        key_mask[(size_t)b * Lk + k] > 0.f ? T(0) : T(kMaskOff);
    return g.constant(std::move(m));
}

template <typename T>
int causal_mask_node(Graph<T>& g, int B, int H, int L) {
    Tensor<T> m({B * H, L, L});
    for (int r = 0; r < B * H; ++r)
        for (int q = 0; q < L; ++q)
            for (int k = 0; k < L; ++k)
                m.data[(((size_t)r * L + q) * L) + k] = k <= q ? T(0) : T(kMaskOff);
    return g.constant(std::move(m));
}

template <typename T>
int dropout(Net<T>& n, int x) {
    float p = n.cfg->dropout;
    if (p <= 0.f || !n.drop_rng) return x;
    const Tensor<T>& v = n.g.value(x);
    Tensor<T> mask(v.shape);
    T keep_scale = T(1) / (T(1) - (T)p);
    for (auto& m : mask.data) m = n.drop_rng->uniform() < (double)p ? T(0) : keep_scale;
    return n.g.mul(x, n.g.constant(std::move(mask)));
}

template <typename T>
int linear(Net<T>& n, const std::string& prefix, int x2d) {
    int y = n.g.matmul(x2d, n.P(prefix + "/w"));
    if (n.store->has(prefix + "/b")) y = n.g.add_bias(y, n.P(prefix + "/b"));
    return y;
}

template <typename T>
int layer_norm(Net<T>& n, const std::string& prefix, int x) {
    return n.g.layer_norm(x, n.P(prefix + "/g"), n.P(prefix + "/b"), T(1e-5));
}

// q_in [B,Lq,d], kv_in [B,Lk,d] -> [B,Lq,d]; mask_id < 0 means no mask.
template <typename T>
int mha(Net<T>& n, const std::string& prefix, int q_in, int kv_in, int B, int Lq, int Lk,
        int mask_id) {
    int d = n.cfg->d_model, H = n.cfg->n_heads, dh = d / H;
    auto heads = [&](int x, int L, const char* name) {
        int y = linear(n, prefix + "/" + name, n.g.reshape(x, {B * L, d}));
        y = n.g.reshape(y, {B, L, H, dh});
        y = n.g.swap_dims_1_2(y);
        return n.g.reshape(y, {B * H, L, dh});
    };
    int q = heads(q_in, Lq, "wq");
    int k = heads(kv_in, Lk, "wk");
    int v = heads(kv_in, Lk, "wv");
    int scores = n.g.scale(n.g.bmm(q, n.g.transpose_last2(k)), T(1) / (T)std::sqrt((double)dh));
    if (mask_id >= 0) scores = n.g.add(scores, mask_id);
    int att = n.g.softmax_last(scores);
    int ctx = n.g.bmm(att, v);
    ctx = n.g.reshape(ctx, {B, H, Lq, dh});
    ctx = n.g.swap_dims_1_2(ctx);
    ctx = n.g.reshape(ctx, {B * Lq, d});
    int out = linear(n, prefix + "/wo", ctx);
    return n.g.reshape(out, {B, Lq, d});
}

template <typename T>
int ffn(Net<T>& n, const std::string& prefix, int x, int B, int L) {
    int d = n.cfg->d_model;
    int h = n.g.relu(linear(n, prefix + "/w1", n.g.reshape(x, {B * L, d})));
    h = dropout(n, h);
    int o = linear(n, prefix + "/w2", h);
    return n.g.reshape(o, {B, L, d});
}

template <typename T>
int encoder_block(Net<T>& n, const std::string& prefix, int x, int B, int L, int mask_id) {
    int h1 = layer_norm(n, prefix + "/ln1", x);
    x = n.g.add(x, dropout(n, mha(n, prefix + "/attn", h1, h1, B, L, L, mask_id)));
    int h2 = layer_norm(n, prefix + "/ln2", x);
    x = n.g.add(x, dropout(n, ffn(n, prefix + "/ffn", h2, B, L)));
    return x;
}

// Cross-attention block, mean-pooled over non-PAD query positions -> [B, d].
template <typename T>
int expert_block(Net<T>& n, const std::string& prefix, int q, int kv, int B, int L, int mask_id,
                 const std::vector<float>& pool_mask) {
    int h = layer_norm(n, prefix + "/ln_q", q);
    int x = n.g.add(q, dropout(n, mha(n, prefix + "/attn", h, kv, B, L, L, mask_id)));
    int h2 = layer_norm(n, prefix + "/ln2", x);
    x = n.g.add(x, dropout(n, ffn(n, prefix + "/ffn", h2, B, L)));
    x = layer_norm(n, prefix + "/ln_f", x);
    std::vector<T> m(pool_mask.begin(), pool_mask.end());
    return n.g.masked_mean_rows(x, m);
}

template <typename T>
int decoder_block(Net<T>& n, const std::string& prefix, int x, int mem, int B, int Lr, int Lc,
                  int self_mask_id, int mem_mask_id, bool final_ln) {
    int h1 = layer_norm(n, prefix + "/ln1", x);
    x = n.g.add(x, dropout(n, mha(n, prefix + "/self", h1, h1, B, Lr, Lr, self_mask_id)));
    int h2 = layer_norm(n, prefix + "/ln2", x);
    x = n.g.add(x, dropout(n, mha(n, prefix + "/cross", h2, mem, B, Lr, Lc, mem_mask_id)));
    int h3 = layer_norm(n, prefix + "/ln3", x);
    x = n.g.add(x, dropout(n, ffn(n, prefix + "/ffn", h3, B, Lr)));
    if (final_ln) x = layer_norm(n, prefix + "/ln_f", x);
    return x;
}

// Token ids -> positioned model-space embeddings [B, L, d]. pe_rows[b*L + j]
// selects the positional-encoding row for each slot.
template <typename T>
int embed_sequence(Net<T>& n, const std::vector<int>& ids, const std::vector<T>& row_scale,
                   const std::vector<int>& pe_rows, int B, int L) {
    int e = n.cfg->embed_dim, d = n.cfg->d_model;
    int x = n.g.embed_rows(n.P("embedding"), ids, {B, L, e});
    if (!row_scale.empty()) x = n.g.scale_rows(x, row_scale);
    if (e != d) {
        x = n.g.matmul(n.g.reshape(x, {B * L, e}), n.P("embed_proj/w"));
        x = n.g.reshape(x, {B, L, d});
    }
    const Tensor<T>& pe = n.store->at("pe");
    Tensor<T> pos({B, L, d});
    for (int r = 0; r < B * L; ++r) {
        int row = pe_rows[(size_t)r];
        for (int j = 0; j < d; ++j) pos.data[(size_t)r * d + j] = pe.data[(size_t)row * d + j];
    }
    return n.g.add(x, n.g.constant(std::move(pos)));
}

// Listener decoders, emotion-weighted mixing, meta decoder, output projection.
// With single_enc_dec the embedded response goes straight to the meta block.
// Returns raw logits [B, Lr, V]; d_nodes gets the per-listener outputs.
template <typename T>
int decode_response_side(Net<T>& n, int emb_r, int mem, int e_att, const std::vector<float>& ctx_mask,
                         int B, int Lr, int Lc, std::vector<int>* d_nodes) {
    const ModelConfig& cfg = *n.cfg;
    int H = cfg.n_heads;
    int self_mask = causal_mask_node(n.g, B, H, Lr);
    int mem_mask = key_mask_node(n.g, ctx_mask, B, H, Lr, Lc);
    int meta_in;
    if (cfg.single_enc_dec) {
        meta_in = emb_r;
    } else {
        int mixed = -1;
        for (int m = 0; m < cfg.n_emotions; ++m) {
            int dm = decoder_block(n, "lis" + std::to_string(m), emb_r, mem, B, Lr, Lc, self_mask,
                                   mem_mask, false);
            if (d_nodes) d_nodes->push_back(dm);
            int weighted = n.g.mul_per_example(dm, e_att, m);
            mixed = mixed < 0 ? weighted : n.g.add(mixed, weighted);
        }
        meta_in = mixed;
    }
    int x = decoder_block(n, "meta", meta_in, mem, B, Lr, Lc, self_mask, mem_mask, true);
    int logits = linear(n, "out", n.g.reshape(x, {B * Lr, cfg.d_model}));
    return n.g.reshape(logits, {B, Lr, cfg.vocab_size});
}

}  // namespace net

// One forward pass. Build, call run() (or run_context() for the encoder side
// only), then read node values, losses, or gradients off the graph.
template <typename T>
class ModelForward {
  public:
    ModelForward(const ModelConfig& cfg, const ParameterStore<T>& store, bool with_grads,
                 Rng* drop_rng = nullptr)
        : net_(net::bind(cfg, store, with_grads, drop_rng)) {}

    void run(const Batch& batch) {
        run_context(batch);
        build_response(batch);
        build_losses(batch);
    }

    void run_context(const Batch& batch) {
        const ModelConfig& cfg = *net_.cfg;
        int B = batch.size, Lc = batch.context_len, H = cfg.n_heads;
        build_context_embedding(batch);

        int ctx_mask_id = net::key_mask_node(net_.g, batch.context_mask, B, H, Lc, Lc);
        int x = ctx_emb_;
        for (int i = 0; i < cfg.n_layers; ++i)
            x = net::encoder_block(net_, "enc/l" + std::to_string(i), x, B, Lc, ctx_mask_id);
        g_h_ = net::layer_norm(net_, "enc/ln_f", x);

        // Sentiment head: per-position distributions for expert weighting,
        // pooled logits for the classification loss. PAD rows are zeroed
        // before the softmax so they come out uniform (and are never pooled).
        int s_logits = net::linear(net_, "sent", net_.g.reshape(g_h_, {B * Lc, cfg.d_model}));
        s_logits = net_.g.reshape(s_logits, {B, Lc, cfg.n_sentiments});
        Tensor<T> rowmask({B, Lc, cfg.n_sentiments});
        for (int r = 0; r < B * Lc; ++r)
            for (int k = 0; k < cfg.n_sentiments; ++k)
                rowmask.data[(size_t)r * cfg.n_sentiments + k] =
                    batch.context_mask[(size_t)r] > 0.f ? T(1) : T(0);
        sat_pos_ = net_.g.softmax_last(net_.g.mul(s_logits, net_.g.constant(std::move(rowmask))));
        std::vector<T> pool_mask(batch.context_mask.begin(), batch.context_mask.end());
        int pooled = net_.g.masked_mean_rows(s_logits, pool_mask);
        sat_pooled_logp_ = net_.g.log_softmax_last(pooled);

        if (cfg.use_sae && !cfg.single_enc_dec) {
            std::vector<int> experts;
            for (int k = 0; k < cfg.n_sentiments; ++k)
                experts.push_back(net::expert_block(net_, "expert" + std::to_string(k), g_h_,
                                                    ctx_emb_, B, Lc, ctx_mask_id,
                                                    batch.context_mask));
            expert_stack_ = net_.g.stack_rows(experts);
            w_att_ = net_.g.bmm(sat_pos_, expert_stack_);
            s_h_ = net_.g.add(w_att_, g_h_);
        } else {
            expert_stack_ = -1;
            w_att_ = -1;
            s_h_ = g_h_;
        }

        int pooled_sh = net_.g.masked_mean_rows(s_h_, pool_mask);
        int emo_logits = net::linear(net_, "emo", pooled_sh);
        emo_logp_ = net_.g.log_softmax_last(emo_logits);
        e_att_ = net_.g.softmax_last(emo_logits);
    }

    Graph<T>& graph() { return net_.g; }
    net::Net<T>& net() { return net_; }
    int param_id(const std::string& name) { return net_.P(name); }
    bool has_param_leaf(const std::string& name) const { return net_.pid.count(name) > 0; }

    int ctx_emb_weighted() const { return ctx_emb_weighted_; }
    int ctx_emb() const { return ctx_emb_; }
    int g_h() const { return g_h_; }
    int s_att_pos() const { return sat_pos_; }
    int s_att_pooled_logp() const { return sat_pooled_logp_; }
    int expert_stack() const { return expert_stack_; }
    int w_att() const { return w_att_; }
    int s_h() const { return s_h_; }
    int emo_logp() const { return emo_logp_; }
    int e_att() const { return e_att_; }
    int token_logits() const { return token_logits_; }
    int token_logp() const { return token_logp_; }
    const std::vector<int>& listener_nodes() const { return d_nodes_; }

    int loss_l1() const { return l1_; }
    int loss_l2() const { return l2_; }
    int loss_l3() const { return l3_; }
    int loss_total() const { return total_; }

    LossBundle<T> losses() const {
        LossBundle<T> b;
        b.l1 = net_.g.value(l1_).data[0];
        b.l2 = net_.g.value(l2_).data[0];
        b.l3 = net_.g.value(l3_).data[0];
        b.total = net_.g.value(total_).data[0];
        return b;
    }

    // Number of response positions L3 averaged over.
    long long target_token_count() const { return target_tokens_; }

    ForwardTrace<T> trace() const {
        ForwardTrace<T> t;
        const ModelConfig& cfg = *net_.cfg;
        t.g_h = net_.g.value(g_h_);
        t.s_att_pos = net_.g.value(sat_pos_);
        t.s_att_pooled = net_.g.value(sat_pooled_logp_);
        for (auto& v : t.s_att_pooled.data) v = std::exp(v);
        int B = t.g_h.dim(0);
        if (expert_stack_ >= 0) {
            t.expert_out = net_.g.value(expert_stack_);
            t.w_att = net_.g.value(w_att_);
        } else {
            t.expert_out = Tensor<T>::zeros({B, cfg.n_sentiments, cfg.d_model});
            t.w_att = Tensor<T>::zeros(t.g_h.shape);
        }
        t.s_h = net_.g.value(s_h_);
        t.e_att = net_.g.value(e_att_);
        if (token_logits_ >= 0) t.token_logits = net_.g.value(token_logits_);
        return t;
    }

  private:
    net::Net<T> net_;
    int ctx_emb_weighted_ = -1, ctx_emb_ = -1, g_h_ = -1;
    int sat_pos_ = -1, sat_pooled_logp_ = -1;
    int expert_stack_ = -1, w_att_ = -1, s_h_ = -1;
    int emo_logp_ = -1, e_att_ = -1;
    std::vector<int> d_nodes_;
    int token_logits_ = -1, token_logp_ = -1;
    int l1_ = -1, l2_ = -1, l3_ = -1, total_ = -1;
    long long target_tokens_ = 0;

    void build_context_embedding(const Batch& batch) {
        const ModelConfig& cfg = *net_.cfg;
        int B = batch.size, Lc = batch.context_len, e = cfg.embed_dim;
        // Current-turn rows get the turn weight; an explicit 1.0 elsewhere
        // keeps flag-off runs bit-identical to weight-1 runs.
        std::vector<T> coeffs((size_t)B * Lc, T(1));
        T w = cfg.use_weighted_concat ? (T)cfg.turn_weight : T(1);
        for (int b = 0; b < B; ++b)
            for (int j = batch.boundary[(size_t)b].first; j < batch.boundary[(size_t)b].second; ++j)
                coeffs[(size_t)b * Lc + j] = w;
        // Positions realize the current-turn-first concatenation: the current
        // turn counts from 0, history follows it.
        std::vector<int> pe_rows((size_t)B * Lc, 0);
        for (int b = 0; b < B; ++b) {
            auto [cb, ce] = batch.boundary[(size_t)b];
            int cur_len = ce - cb;
            for (int j = 0; j < Lc; ++j) {
                int row;
                if (j >= cb && j < ce) row = j - cb;
                else if (j < cb) row = cur_len + j;
                else row = j;  // PAD tail, never consumed
                pe_rows[(size_t)b * Lc + j] = row;
            }
        }
        int x = net_.g.embed_rows(net_.P("embedding"), batch.context_ids, {B, Lc, e});
        ctx_emb_weighted_ = net_.g.scale_rows(x, coeffs);
        int y = ctx_emb_weighted_;
        if (e != cfg.d_model) {
            y = net_.g.matmul(net_.g.reshape(y, {B * Lc, e}), net_.P("embed_proj/w"));
            y = net_.g.reshape(y, {B, Lc, cfg.d_model});
        }
        const Tensor<T>& pe = net_.store->at("pe");
        Tensor<T> pos({B, Lc, cfg.d_model});
        for (int r = 0; r < B * Lc; ++r) {
            int row = pe_rows[(size_t)r];
            for (int j = 0; j < cfg.d_model; ++j)
                pos.data[(size_t)r * cfg.d_model + j] = pe.data[(size_t)row * cfg.d_model + j];
        }
        ctx_emb_ = net_.g.add(y, net_.g.constant(std::move(pos)));
    }

    void build_response(const Batch& batch) {
        int B = batch.size, Lr = batch.response_len;
        std::vector<int> pe_rows((size_t)B * Lr);
        for (int r = 0; r < B * Lr; ++r) pe_rows[(size_t)r] = r % Lr;
        int emb_r = net::embed_sequence(net_, batch.response_ids, {}, pe_rows, B, Lr);
        d_nodes_.clear();
        token_logits_ = net::decode_response_side(net_, emb_r, s_h_, e_att_, batch.context_mask, B,
                                                  Lr, batch.context_len, &d_nodes_);
        token_logp_ = net_.g.log_softmax_last(token_logits_);
    }

    void build_losses(const Batch& batch) {
        const ModelConfig& cfg = *net_.cfg;
        int B = batch.size, Lr = batch.response_len;
        if (cfg.use_sentiment_loss) {
            l1_ = net_.g.pick_nll_mean(sat_pooled_logp_, batch.sentiment_targets);
        } else {
            l1_ = net_.g.constant(Tensor<T>::scalar(T(0)));
        }
        l2_ = net_.g.pick_nll_mean(emo_logp_, batch.emotion_targets);
        // Predict token t+1 from position t; the final position has nothing
        // to predict and PAD rows are excluded.
        std::vector<int> targets((size_t)B * Lr, 0);
        std::vector<T> mask((size_t)B * Lr, T(0));
        long long count = 0;
        for (int b = 0; b < B; ++b)
            for (int t = 0; t + 1 < Lr; ++t) {
                size_t at = (size_t)b * Lr + t;
                if (batch.response_mask[at + 1] > 0.f) {
                    targets[at] = batch.response_ids[at + 1];
                    mask[at] = T(1);
                    ++count;
                }
            }
        target_tokens_ = count;
        l3_ = net_.g.masked_token_nll(token_logp_, std::move(targets), std::move(mask));
        total_ = net_.g.add(net_.g.add(l1_, l2_), l3_);
    }
};

// Context-side snapshot for autoregressive decoding.
template <typename T>
struct EncodedContext {
    Tensor<T> s_h;     // [1, Lc, d]
    Tensor<T> e_att;   // [1, M]
    Tensor<T> s_att;   // [1, K] pooled sentiment distribution
    std::vector<float> context_mask;
    int context_len = 0;
};

template <typename T>
EncodedContext<T> encode_context(const ModelConfig& cfg, const ParameterStore<T>& store,
                                 const Batch& batch) {
    if (batch.size != 1) throw std::invalid_argument("encode_context expects a single example");
    ModelForward<T> f(cfg, store, false);
    f.run_context(batch);
    EncodedContext<T> enc;
    enc.s_h = f.graph().value(f.s_h());
    enc.e_att = f.graph().value(f.e_att());
    enc.s_att = f.graph().value(f.s_att_pooled_logp());
    for (auto& v : enc.s_att.data) v = std::exp(v);
    enc.context_mask = batch.context_mask;
    enc.context_len = batch.context_len;
    return enc;
}

// Log-probabilities of the next token after the given prefix (SOS first).
template <typename T>
std::vector<T> next_token_log_probs(const ModelConfig& cfg, const ParameterStore<T>& store,
                                    const EncodedContext<T>& enc, const std::vector<int>& prefix) {
    if (prefix.empty()) throw std::invalid_argument("prefix must start with SOS");
    int Lr = (int)prefix.size();
    net::Net<T> n = net::bind(cfg, store, false);
    std::vector<int> pe_rows((size_t)Lr);
    for (int t = 0; t < Lr; ++t) pe_rows[(size_t)t] = t;
    int emb_r = net::embed_sequence(n, prefix, {}, pe_rows, 1, Lr);
    int mem = n.g.constant(enc.s_h);
    int e_att = cfg.single_enc_dec ? -1 : n.g.constant(enc.e_att);
    int logits = net::decode_response_side(n, emb_r, mem, e_att, enc.context_mask, 1, Lr,
                                           enc.context_len, nullptr);
    int logp = n.g.log_softmax_last(logits);
    const Tensor<T>& v = n.g.value(logp);
    std::vector<T> out((size_t)cfg.vocab_size);
    for (int j = 0; j < cfg.vocab_size; ++j)
        out[(size_t)j] = v.data[(size_t)(Lr - 1) * cfg.vocab_size + j];
    return out;
}

}  // namespace asem
