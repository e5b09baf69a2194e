#include <doctest.h>

#include <cmath>
#include <vector>

#include "asem/corpus.hpp"
#include "asem/model.hpp"
#include "asem/params.hpp"
#include "support/reference_forward.hpp"

using namespace asem;

namespace {

ModelConfig tiny_cfg() {
    ModelConfig c;
    c.vocab_size = 20;
    c.embed_dim = 6;
    c.d_model = 8;
    c.n_layers = 1;
    c.n_heads = 2;
    c.n_sentiments = 2;
    c.n_emotions = 3;
    c.max_len = 16;
    c.ffn_dim = 12;
    return c;
}

// Two examples with unequal context and response lengths.
Batch tiny_batch(const ModelConfig& cfg) {
    EncodedExample a, b;
    a.context_turns = {{4, 5}};
    a.current_turn = {6, 7, 8};
    a.response = {9, 10};
    a.sentiment = 0;
    a.emotion = 1;
    b.current_turn = {11, 12};
    b.response = {13, 14, 15};
    b.sentiment = 1;
    b.emotion = 2;
    auto batches = make_batches({a, b}, 4, cfg.max_len);
    REQUIRE(batches.size() == 1);
    return batches[0];
}

Batch pad_batch(const Batch& b, int extra_ctx, int extra_resp) {
    Batch out = b;
    out.context_len = b.context_len + extra_ctx;
    out.response_len = b.response_len + extra_resp;
    out.context_ids.assign((size_t)b.size * out.context_len, Vocabulary::kPad);
    out.context_mask.assign((size_t)b.size * out.context_len, 0.f);
    out.response_ids.assign((size_t)b.size * out.response_len, Vocabulary::kPad);
    out.response_mask.assign((size_t)b.size * out.response_len, 0.f);
    for (int i = 0; i < b.size; ++i) {
        for (int j = 0; j < b.context_len; ++j) {
            out.context_ids[(size_t)i * out.context_len + j] =
                b.context_ids[(size_t)i * b.context_len + j];
            out.context_mask[(size_t)i * out.context_len + j] =
                b.context_mask[(size_t)i * b.context_len + j];
        }
        for (int j = 0; j < b.response_len; ++j) {
            out.response_ids[(size_t)i * out.response_len + j] =
                b.response_ids[(size_t)i * b.response_len + j];
            out.response_mask[(size_t)i * out.response_len + j] =
                b.response_mask[(size_t)i * b.response_len + j];
        }
    }
    return out;
}

void zero_tensor(Tensor<float>& t) {
    for (auto& x : t.data) x = 0.f;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("current-turn rows are scaled before the positional add") {
    ModelConfig cfg = tiny_cfg();
    cfg.turn_weight = 2.5f;
    auto store = init_params<float>(cfg, 1);
    Batch batch = tiny_batch(cfg);
    ModelForward<float> fwd(cfg, store, false);
    fwd.run(batch);
    const Tensor<float>& weighted = fwd.graph().value(fwd.ctx_emb_weighted());
    const Tensor<float>& emb = store.at("embedding");
    int e = cfg.embed_dim;
    for (int b = 0; b < batch.size; ++b)
        for (int j = 0; j < batch.context_len; ++j) {
            int id = batch.context_ids[(size_t)b * batch.context_len + j];
            bool current = j >= batch.boundary[(size_t)b].first &&
                           j < batch.boundary[(size_t)b].second;
            float w = current ? 2.5f : 1.0f;
            for (int k = 0; k < e; ++k)
                CHECK(weighted.data[((size_t)b * batch.context_len + j) * e + k] ==
                      w * emb.data[(size_t)id * e + k]);
        }
}

TEST_CASE("weight 1.0 equals a plain lookup and PAD rows stay zero") {
    ModelConfig cfg = tiny_cfg();
    cfg.turn_weight = 1.0f;
    auto store = init_params<float>(cfg, 1);
    Batch batch = tiny_batch(cfg);
    ModelForward<float> fwd(cfg, store, false);
    fwd.run(batch);
    const Tensor<float>& weighted = fwd.graph().value(fwd.ctx_emb_weighted());
    const Tensor<float>& emb = store.at("embedding");
    int e = cfg.embed_dim;
    for (int b = 0; b < batch.size; ++b)
        for (int j = 0; j < batch.context_len; ++j) {
            int id = batch.context_ids[(size_t)b * batch.context_len + j];
            for (int k = 0; k < e; ++k) {
                float v = weighted.data[((size_t)b * batch.context_len + j) * e + k];
                CHECK(v == emb.data[(size_t)id * e + k]);
                if (batch.context_mask[(size_t)b * batch.context_len + j] == 0.f)
                    CHECK(v == 0.0f);
            }
        }
}

TEST_CASE("probability outputs normalize and stay in the convex envelope") {
    ModelConfig cfg = tiny_cfg();
    auto store = init_params<float>(cfg, 5);
    Batch batch = tiny_batch(cfg);
    ModelForward<float> fwd(cfg, store, false);
    fwd.run(batch);
    ForwardTrace<float> tr = fwd.trace();
    int K = cfg.n_sentiments, Lc = batch.context_len;
    for (int b = 0; b < batch.size; ++b) {
        for (int j = 0; j < Lc; ++j) {
            float sum = 0;
            for (int k = 0; k < K; ++k) sum += tr.s_att_pos.data[((size_t)b * Lc + j) * K + k];
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
        }
        float pooled_sum = 0, e_sum = 0;
        for (int k = 0; k < K; ++k) pooled_sum += tr.s_att_pooled.data[(size_t)b * K + k];
        for (int m = 0; m < cfg.n_emotions; ++m)
            e_sum += tr.e_att.data[(size_t)b * cfg.n_emotions + m];
        CHECK(pooled_sum == doctest::Approx(1.0).epsilon(1e-5));
        CHECK(e_sum == doctest::Approx(1.0).epsilon(1e-5));
        // W_att within the expert min/max envelope, coordinate-wise
        for (int j = 0; j < Lc; ++j)
            for (int d = 0; d < cfg.d_model; ++d) {
                float lo = 1e30f, hi = -1e30f;
                for (int k = 0; k < K; ++k) {
                    float v = tr.expert_out.data[((size_t)b * K + k) * cfg.d_model + d];
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
                float w = tr.w_att.data[((size_t)b * Lc + j) * cfg.d_model + d];
                CHECK(w >= lo - 1e-5f);
                CHECK(w <= hi + 1e-5f);
            }
    }
}

TEST_CASE("zeroed heads give closed-form distributions") {
    ModelConfig cfg = tiny_cfg();
    auto store = init_params<float>(cfg, 2);
    zero_tensor(store.at("sent/w"));
    store.at("sent/b").data = {std::log(3.f), 0.f};
    zero_tensor(store.at("emo/w"));
    store.at("emo/b").data = {0.f, 0.f, std::log(2.f)};
    Batch batch = tiny_batch(cfg);
    ModelForward<float> fwd(cfg, store, false);
    fwd.run(batch);
    ForwardTrace<float> tr = fwd.trace();
    int K = cfg.n_sentiments, Lc = batch.context_len;
    for (int b = 0; b < batch.size; ++b) {
        CHECK(tr.s_att_pooled.data[(size_t)b * K + 0] == doctest::Approx(0.75).epsilon(1e-6));
        CHECK(tr.s_att_pooled.data[(size_t)b * K + 1] == doctest::Approx(0.25).epsilon(1e-6));
        CHECK(tr.e_att.data[(size_t)b * 3 + 0] == doctest::Approx(0.25).epsilon(1e-6));
        CHECK(tr.e_att.data[(size_t)b * 3 + 1] == doctest::Approx(0.25).epsilon(1e-6));
        CHECK(tr.e_att.data[(size_t)b * 3 + 2] == doctest::Approx(0.5).epsilon(1e-6));
        for (int j = 0; j < Lc; ++j) {
            bool real = batch.context_mask[(size_t)b * Lc + j] > 0.f;
            float p0 = tr.s_att_pos.data[((size_t)b * Lc + j) * K + 0];
            CHECK(p0 == doctest::Approx(real ? 0.75 : 0.5).epsilon(1e-6));
        }
    }
}

TEST_CASE("uniform sentiment weights average the experts exactly") {
    ModelConfig cfg = tiny_cfg();
    auto store = init_params<float>(cfg, 3);
    zero_tensor(store.at("sent/w"));
    zero_tensor(store.at("sent/b"));
    Batch batch = tiny_batch(cfg);
    ModelForward<float> fwd(cfg, store, false);
    fwd.run(batch);
    ForwardTrace<float> tr = fwd.trace();
    int K = cfg.n_sentiments, Lc = batch.context_len, d = cfg.d_model;
    for (int b = 0; b < batch.size; ++b)
        for (int j = 0; j < Lc; ++j)
            for (int k = 0; k < d; ++k) {
                float expect = 0.5f * tr.expert_out.data[((size_t)b * K + 0) * d + k] +
                               0.5f * tr.expert_out.data[((size_t)b * K + 1) * d + k];
                CHECK(tr.w_att.data[((size_t)b * Lc + j) * d + k] == expect);
            }
}

TEST_CASE("near-one-hot sentiment weights select one expert") {
    ModelConfig cfg = tiny_cfg();
    auto store = init_params<float>(cfg, 4);
    zero_tensor(store.at("sent/w"));
    store.at("sent/b").data = {40.f, 0.f};
    Batch batch = tiny_batch(cfg);
    ModelForward<float> fwd(cfg, store, false);
    fwd.run(batch);
    ForwardTrace<float> tr = fwd.trace();
    int K = cfg.n_sentiments, Lc = batch.context_len, d = cfg.d_model;
    for (int b = 0; b < batch.size; ++b)
        for (int j = 0; j < Lc; ++j) {
            if (batch.context_mask[(size_t)b * Lc + j] == 0.f) continue;
            for (int k = 0; k < d; ++k)
                CHECK(tr.w_att.data[((size_t)b * Lc + j) * d + k] ==
                      doctest::Approx(tr.expert_out.data[((size_t)b * K + 0) * d + k])
                          .epsilon(1e-5));
        }
}

TEST_CASE("the enriched state is the exact sum of mixture and encoder output") {
    ModelConfig cfg = tiny_cfg();
    auto store = init_params<float>(cfg, 6);
    Batch batch = tiny_batch(cfg);
    ModelForward<float> fwd(cfg, store, false);
    fwd.run(batch);
    ForwardTrace<float> tr = fwd.trace();
    for (size_t i = 0; i < tr.s_h.data.size(); ++i)
        CHECK(tr.s_h.data[i] == tr.w_att.data[i] + tr.g_h.data[i]);
}

TEST_CASE("identical experts produce identical mixture rows") {
    ModelConfig cfg = tiny_cfg();
    auto store = init_params<float>(cfg, 7);
    for (const char* part :
         {"ln_q/g", "ln_q/b", "attn/wq/w", "attn/wq/b", "attn/wk/w", "attn/wk/b", "attn/wv/w",
          "attn/wv/b", "attn/wo/w", "attn/wo/b", "ln2/g", "ln2/b", "ffn/w1/w", "ffn/w1/b",
          "ffn/w2/w", "ffn/w2/b", "ln_f/g", "ln_f/b"})
        store.at(std::string("expert1/") + part) = store.at(std::string("expert0/") + part);
    Batch batch = tiny_batch(cfg);
    ModelForward<float> fwd(cfg, store, false);
    fwd.run(batch);
    ForwardTrace<float> tr = fwd.trace();
    int K = cfg.n_sentiments, d = cfg.d_model;
    for (int b = 0; b < batch.size; ++b)
        for (int k = 0; k < d; ++k)
            CHECK(tr.expert_out.data[((size_t)b * K + 0) * d + k] ==
                  tr.expert_out.data[((size_t)b * K + 1) * d + k]);
}

TEST_CASE("identical listeners make the emotion mixture irrelevant") {
    ModelConfig cfg = tiny_cfg();
    auto store = init_params<float>(cfg, 8);
    for (int m = 1; m < cfg.n_emotions; ++m)
        for (const char* part :
             {"ln1/g", "ln1/b", "self/wq/w", "self/wq/b", "self/wk/w", "self/wk/b", "self/wv/w",
              "self/wv/b", "self/wo/w", "self/wo/b", "ln2/g", "ln2/b", "cross/wq/w", "cross/wq/b",
              "cross/wk/w", "cross/wk/b", "cross/wv/w", "cross/wv/b", "cross/wo/w", "cross/wo/b",
              "ln3/g", "ln3/b", "ffn/w1/w", "ffn/w1/b", "ffn/w2/w", "ffn/w2/b"})
            store.at("lis" + std::to_string(m) + "/" + part) = store.at(std::string("lis0/") + part);
    Batch batch = tiny_batch(cfg);

    auto logits_with_bias = [&](std::vector<float> emo_bias) {
        auto s = store;
        zero_tensor(s.at("emo/w"));
        s.at("emo/b").data = std::move(emo_bias);
        ModelForward<float> fwd(cfg, s, false);
        fwd.run(batch);
        return fwd.graph().value(fwd.token_logits());
    };
    Tensor<float> uniform = logits_with_bias({0.f, 0.f, 0.f});
    Tensor<float> onehot = logits_with_bias({40.f, 0.f, 0.f});
    REQUIRE(uniform.shape == onehot.shape);
    for (size_t i = 0; i < uniform.data.size(); ++i)
        CHECK(uniform.data[i] == doctest::Approx(onehot.data[i]).epsilon(1e-5));
}

TEST_CASE("padding never leaks into real positions or losses") {
    ModelConfig cfg = tiny_cfg();
    auto store = init_params<float>(cfg, 9);
    Batch batch = tiny_batch(cfg);
    Batch padded = pad_batch(batch, 3, 2);
    ModelForward<float> f1(cfg, store, false);
    f1.run(batch);
    ModelForward<float> f2(cfg, store, false);
    f2.run(padded);
    LossBundle<float> a = f1.losses(), b = f2.losses();
    CHECK(a.l1 == b.l1);
    CHECK(a.l2 == b.l2);
    CHECK(a.l3 == b.l3);
    CHECK(a.total == b.total);
    ForwardTrace<float> t1 = f1.trace(), t2 = f2.trace();
    int d = cfg.d_model, V = cfg.vocab_size;
    for (int bi = 0; bi < batch.size; ++bi) {
        for (int j = 0; j < batch.context_len; ++j) {
            if (batch.context_mask[(size_t)bi * batch.context_len + j] == 0.f) continue;
            for (int k = 0; k < d; ++k)
                CHECK(t1.g_h.data[((size_t)bi * batch.context_len + j) * d + k] ==
                      t2.g_h.data[((size_t)bi * padded.context_len + j) * d + k]);
        }
        for (int m = 0; m < cfg.n_emotions; ++m)
            CHECK(t1.e_att.data[(size_t)bi * cfg.n_emotions + m] ==
                  t2.e_att.data[(size_t)bi * cfg.n_emotions + m]);
        for (int t = 0; t < batch.response_len; ++t) {
            if (batch.response_mask[(size_t)bi * batch.response_len + t] == 0.f) continue;
            for (int v = 0; v < V; ++v)
                CHECK(t1.token_logits.data[((size_t)bi * batch.response_len + t) * V + v] ==
                      t2.token_logits.data[((size_t)bi * padded.response_len + t) * V + v]);
        }
    }
}

TEST_CASE("future response tokens cannot influence earlier logits") {
    ModelConfig cfg = tiny_cfg();
    auto store = init_params<float>(cfg, 10);
    Batch batch = tiny_batch(cfg);
    Batch mutated = batch;
    // flip the last real response token of example 0
    int last_real = -1;
    for (int t = 0; t < batch.response_len; ++t)
        if (batch.response_mask[(size_t)t] > 0.f) last_real = t;
    REQUIRE(last_real >= 2);
    mutated.response_ids[(size_t)last_real] =
        batch.response_ids[(size_t)last_real] == 5 ? 6 : 5;
    ModelForward<float> f1(cfg, store, false);
    f1.run(batch);
    ModelForward<float> f2(cfg, store, false);
    f2.run(mutated);
    const Tensor<float>& a = f1.graph().value(f1.token_logits());
    const Tensor<float>& b = f2.graph().value(f2.token_logits());
    int V = cfg.vocab_size;
    bool later_changed = false;
    for (int t = 0; t < batch.response_len; ++t)
        for (int v = 0; v < V; ++v) {
            float x = a.data[((size_t)0 * batch.response_len + t) * V + v];
            float y = b.data[((size_t)0 * batch.response_len + t) * V + v];
            if (t < last_real) CHECK(x == y);
            else if (x != y) later_changed = true;
        }
    CHECK(later_changed);
}

TEST_CASE("forward is deterministic") {
    ModelConfig cfg = tiny_cfg();
    auto store = init_params<float>(cfg, 11);
    Batch batch = tiny_batch(cfg);
    ModelForward<float> f1(cfg, store, false);
    f1.run(batch);
    ModelForward<float> f2(cfg, store, false);
    f2.run(batch);
    ForwardTrace<float> t1 = f1.trace(), t2 = f2.trace();
    CHECK(t1.g_h.data == t2.g_h.data);
    CHECK(t1.token_logits.data == t2.token_logits.data);
    CHECK(f1.losses().total == f2.losses().total);
}

TEST_CASE("loss closed forms under neutralized heads") {
    ModelConfig cfg = tiny_cfg();
    cfg.n_emotions = 7;
    auto store = init_params<float>(cfg, 12);
    zero_tensor(store.at("emo/w"));
    zero_tensor(store.at("emo/b"));
    zero_tensor(store.at("out/w"));
    zero_tensor(store.at("out/b"));
    zero_tensor(store.at("sent/w"));
    store.at("sent/b").data = {60.f, 0.f};
    EncodedExample a;
    a.current_turn = {4, 5, 6};
    a.response = {7, 8};
    a.sentiment = 0;  // matches the forced one-hot head
    a.emotion = 3;
    Batch batch = make_batches({a}, 4, cfg.max_len)[0];
    ModelForward<float> fwd(cfg, store, false);
    fwd.run(batch);
    LossBundle<float> l = fwd.losses();
    CHECK(std::abs(l.l1) <= 1e-6f);
    CHECK(l.l2 == doctest::Approx(std::log(7.0)).epsilon(1e-6));
    CHECK(l.l3 == doctest::Approx(std::log((double)cfg.vocab_size)).epsilon(1e-6));
    CHECK(l.total == (l.l1 + l.l2) + l.l3);
}

TEST_CASE("disabling the sentiment loss zeroes exactly that term") {
    ModelConfig cfg = tiny_cfg();
    cfg.use_sentiment_loss = false;
    auto store = init_params<float>(cfg, 13);
    Batch batch = tiny_batch(cfg);
    ModelForward<float> fwd(cfg, store, false);
    fwd.run(batch);
    LossBundle<float> l = fwd.losses();
    CHECK(l.l1 == 0.0f);
    CHECK(l.total == (0.0f + l.l2) + l.l3);
    CHECK(l.l2 > 0.0f);
    CHECK(l.l3 > 0.0f);
}

TEST_CASE("weighted-concat flag off equals turn weight one, bit for bit") {
    ModelConfig off = tiny_cfg();
    off.use_weighted_concat = false;
    off.turn_weight = 2.5f;
    ModelConfig one = tiny_cfg();
    one.use_weighted_concat = true;
    one.turn_weight = 1.0f;
    auto store_off = init_params<float>(off, 14);
    auto store_one = init_params<float>(one, 14);
    Batch batch = tiny_batch(off);
    ModelForward<float> f1(off, store_off, false);
    f1.run(batch);
    ModelForward<float> f2(one, store_one, false);
    f2.run(batch);
    ForwardTrace<float> t1 = f1.trace(), t2 = f2.trace();
    CHECK(t1.g_h.data == t2.g_h.data);
    CHECK(t1.s_h.data == t2.s_h.data);
    CHECK(t1.token_logits.data == t2.token_logits.data);
    LossBundle<float> a = f1.losses(), b = f2.losses();
    CHECK(a.l1 == b.l1);
    CHECK(a.l2 == b.l2);
    CHECK(a.l3 == b.l3);
    CHECK(a.total == b.total);
}

TEST_CASE("without the expert branch the trace ignores expert parameters") {
    ModelConfig cfg = tiny_cfg();
    cfg.use_sae = false;
    auto store = init_params<float>(cfg, 15);
    Batch batch = tiny_batch(cfg);
    ModelForward<float> f1(cfg, store, false);
    f1.run(batch);
    ForwardTrace<float> t1 = f1.trace();
    CHECK(t1.s_h.data == t1.g_h.data);
    for (float v : t1.w_att.data) CHECK(v == 0.0f);
    // violent perturbation of every expert tensor changes nothing
    for (const auto& name : store.names())
        if (name.rfind("expert", 0) == 0)
            for (auto& x : store.at(name).data) x += 37.0f;
    ModelForward<float> f2(cfg, store, false);
    f2.run(batch);
    ForwardTrace<float> t2 = f2.trace();
    CHECK(t1.s_h.data == t2.s_h.data);
    CHECK(t1.token_logits.data == t2.token_logits.data);
    CHECK(f1.losses().total == f2.losses().total);
}

TEST_CASE("single encoder-decoder variant drops the expert and listener blocks") {
    ModelConfig full = tiny_cfg();
    ModelConfig single = tiny_cfg();
    single.single_enc_dec = true;
    auto store_full = init_params<float>(full, 16);
    auto store_single = init_params<float>(single, 16);
    CHECK(store_single.param_count() < store_full.param_count());
    CHECK(!store_single.has("expert0/attn/wq/w"));
    CHECK(!store_single.has("lis0/self/wq/w"));
    Batch batch = tiny_batch(single);
    ModelForward<float> fwd(single, store_single, false);
    fwd.run(batch);
    LossBundle<float> l = fwd.losses();
    CHECK(std::isfinite(l.total));
    ForwardTrace<float> tr = fwd.trace();
    for (float v : tr.expert_out.data) CHECK(v == 0.0f);
    float esum = 0;
    for (int m = 0; m < single.n_emotions; ++m) esum += tr.e_att.data[(size_t)m];
    CHECK(esum == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("batched forward matches the scalar reference") {
    ModelConfig cfg = tiny_cfg();
    auto store = init_params<double>(cfg, 17);
    EncodedExample a, b;
    a.context_turns = {{4, 5}, {6, 7, 8}};
    a.current_turn = {9, 10, 11};
    a.response = {12, 13};
    a.sentiment = 0;
    a.emotion = 1;
    b.current_turn = {14, 15};
    b.response = {16, 17, 18};
    b.sentiment = 1;
    b.emotion = 2;
    std::vector<EncodedExample> examples = {a, b};
    Batch batch = make_batches(examples, 4, cfg.max_len)[0];
    ModelForward<double> fwd(cfg, store, false);
    fwd.run(batch);
    ForwardTrace<double> tr = fwd.trace();
    LossBundle<double> losses = fwd.losses();

    ref::Forward reference(cfg, store);
    double l1_sum = 0, l2_sum = 0, l3_weighted = 0;
    long long tokens = 0;
    for (int bi = 0; bi < batch.size; ++bi) {
        ref::Example rex;
        for (int j = 0; j < batch.context_len; ++j)
            if (batch.context_mask[(size_t)bi * batch.context_len + j] > 0.f)
                rex.context_ids.push_back(batch.context_ids[(size_t)bi * batch.context_len + j]);
        rex.current_begin = batch.boundary[(size_t)bi].first;
        rex.current_end = batch.boundary[(size_t)bi].second;
        for (int t = 0; t < batch.response_len; ++t)
            if (batch.response_mask[(size_t)bi * batch.response_len + t] > 0.f)
                rex.response_ids.push_back(batch.response_ids[(size_t)bi * batch.response_len + t]);
        rex.sentiment = batch.sentiment_targets[(size_t)bi];
        rex.emotion = batch.emotion_targets[(size_t)bi];
        ref::Outputs ro = reference.run(rex);

        int lc = (int)rex.context_ids.size(), d = cfg.d_model, V = cfg.vocab_size;
        for (int j = 0; j < lc; ++j)
            for (int k = 0; k < d; ++k) {
                CHECK(tr.g_h.data[((size_t)bi * batch.context_len + j) * d + k] ==
                      doctest::Approx(ro.g_h[(size_t)j][(size_t)k]).epsilon(1e-9));
                CHECK(tr.s_h.data[((size_t)bi * batch.context_len + j) * d + k] ==
                      doctest::Approx(ro.s_h[(size_t)j][(size_t)k]).epsilon(1e-9));
            }
        for (int k = 0; k < cfg.n_sentiments; ++k)
            CHECK(tr.s_att_pooled.data[(size_t)bi * cfg.n_sentiments + k] ==
                  doctest::Approx(ro.s_att_pooled[(size_t)k]).epsilon(1e-9));
        for (int m = 0; m < cfg.n_emotions; ++m)
            CHECK(tr.e_att.data[(size_t)bi * cfg.n_emotions + m] ==
                  doctest::Approx(ro.e_att[(size_t)m]).epsilon(1e-9));
        int lr = (int)rex.response_ids.size();
        for (int t = 0; t < lr; ++t)
            for (int v = 0; v < V; ++v)
                CHECK(tr.token_logits.data[((size_t)bi * batch.response_len + t) * V + v] ==
                      doctest::Approx(ro.token_logits[(size_t)t][(size_t)v]).epsilon(1e-9));
        l1_sum += ro.l1;
        l2_sum += ro.l2;
        l3_weighted += ro.l3 * (double)(lr - 1);
        tokens += lr - 1;
    }
    CHECK(losses.l1 == doctest::Approx(l1_sum / batch.size).epsilon(1e-9));
    CHECK(losses.l2 == doctest::Approx(l2_sum / batch.size).epsilon(1e-9));
    CHECK(losses.l3 == doctest::Approx(l3_weighted / (double)tokens).epsilon(1e-9));
}

TEST_CASE("analytic gradients match finite differences on representative tensors") {
    ModelConfig cfg = tiny_cfg();
    auto store = init_params<double>(cfg, 18);
    Batch batch = tiny_batch(cfg);

    auto loss_of = [&](const ParameterStore<double>& s) {
        ModelForward<double> f(cfg, s, false);
        f.run(batch);
        return (double)f.losses().total;
    };

    ModelForward<double> fwd(cfg, store, true);
    fwd.run(batch);
    fwd.graph().backward(fwd.loss_total());

    const double h = 1e-5, rel_tol = 1e-3;
    for (const char* name :
         {"embedding", "embed_proj/w", "enc/l0/attn/wq/w", "enc/l0/ln1/g", "enc/l0/ffn/w1/b",
          "enc/ln_f/b", "sent/w", "sent/b", "emo/w", "expert0/attn/wk/w", "expert1/ffn/w1/w",
          "expert0/ln_f/g", "lis0/self/wq/w", "lis1/cross/wv/w", "lis2/ffn/w2/w", "meta/ffn/w2/b",
          "meta/ln_f/g", "out/w", "out/b"}) {
        CAPTURE(name);
        Tensor<double> analytic = fwd.graph().grad(fwd.param_id(name));
        int n = analytic.numel();
        for (int idx : {0, n / 2, n - 1}) {
            auto plus = store;
            plus.at(name).data[(size_t)idx] += h;
            auto minus = store;
            minus.at(name).data[(size_t)idx] -= h;
            double fd = (loss_of(plus) - loss_of(minus)) / (2 * h);
            double an = analytic.data[(size_t)idx];
            double scale = std::max(std::abs(an), std::abs(fd));
            CAPTURE(idx);
            if (scale <= 1e-6) continue;  // both effectively zero
            CHECK(std::abs(an - fd) / scale < rel_tol);
        }
    }
}

}  // TEST_SUITE
