#include "asem/train.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "asem/adamw.hpp"

namespace asem {

namespace {

std::vector<size_t> epoch_order(size_t n, uint64_t seed, long long epoch) {
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), (size_t)0);
    Rng rng(substream_seed(seed, "epoch", (uint64_t)epoch));
    rng.shuffle(order);
    return order;
}

std::vector<Batch> epoch_batches(const std::vector<EncodedExample>& examples,
                                 const TrainConfig& tc, const ModelConfig& mc, long long epoch) {
    auto order = epoch_order(examples.size(), tc.seed, epoch);
    std::vector<EncodedExample> shuffled;
    shuffled.reserve(examples.size());
    for (size_t i : order) shuffled.push_back(examples[i]);
    return make_batches(shuffled, tc.batch_size, mc.max_len);
}

void write_log_line(std::ostream& out, const TrainLogEntry& e) {
    nlohmann::ordered_json j;
    j["step"] = e.step;
    j["l1"] = e.l1;
    j["l2"] = e.l2;
    j["l3"] = e.l3;
    j["total"] = e.total;
    if (e.has_val) j["val_total"] = e.val_total;
    out << j.dump() << "\n";
}

}  // namespace

Checkpoint init_checkpoint(const ModelConfig& mc, const TrainConfig& tc, DatasetTag tag,
                           const Vocabulary& vocab, const std::vector<std::string>& emotion_names,
                           const std::vector<std::string>& sentiment_names,
                           const Tensor<float>* embedding) {
    mc.validate();
    tc.validate();
    if (vocab.size() != mc.vocab_size)
        throw std::invalid_argument("vocab size does not match model config");
    Checkpoint c;
    c.model = mc;
    c.train = tc;
    c.dataset_tag = tag;
    c.vocab_tokens = vocab.tokens();
    c.emotion_names = emotion_names;
    c.sentiment_names = sentiment_names;
    c.params = init_params<float>(mc, tc.seed, embedding);
    return c;
}

LossBundle<float> train_step(Checkpoint& state, const Batch& batch, bool sentiment_only) {
    Rng drop_rng(substream_seed(state.train.seed, "dropout", (uint64_t)state.step));
    ModelForward<float> f(state.model, state.params, /*with_grads=*/true,
                          state.model.dropout > 0.f ? &drop_rng : nullptr);
    f.run(batch);
    LossBundle<float> lb = f.losses();
    if (!std::isfinite(lb.total)) {
        const std::string* bad = state.params.first_non_finite();
        throw std::runtime_error("non-finite loss at step " + std::to_string(state.step) +
                                 (bad ? "; first non-finite tensor: " + *bad
                                      : "; parameters are finite, loss diverged"));
    }
    f.graph().backward(sentiment_only ? f.loss_l1() : f.loss_total());

    std::unordered_map<std::string, Tensor<float>> grads;
    for (const auto& name : state.params.names()) {
        if (!state.params.trainable(name)) continue;
        if (f.has_param_leaf(name))
            grads.emplace(name, f.graph().grad(f.param_id(name)));
        else
            grads.emplace(name, Tensor<float>::zeros(state.params.at(name).shape));
    }

    AdamW<float> opt(state.train.learning_rate, state.train.weight_decay);
    opt.set_steps(state.adam_steps);
    opt.moments_m() = std::move(state.opt_m);
    opt.moments_v() = std::move(state.opt_v);
    opt.step(state.params, grads, state.train.grad_clip_norm);
    state.opt_m = std::move(opt.moments_m());
    state.opt_v = std::move(opt.moments_v());
    state.adam_steps = opt.steps();
    ++state.step;
    return lb;
}

double validation_loss(const ModelConfig& mc, const ParameterStore<float>& params,
                       const std::vector<Batch>& batches) {
    if (batches.empty()) throw std::invalid_argument("empty validation set");
    double weighted = 0;
    long long n = 0;
    for (const Batch& b : batches) {
        ModelForward<float> f(mc, params, false);
        f.run(b);
        weighted += (double)f.losses().total * b.size;
        n += b.size;
    }
    return weighted / (double)n;
}

TrainOutcome train_loop(Checkpoint state, const std::vector<EncodedExample>& train_examples,
                        const std::vector<EncodedExample>& valid_examples,
                        std::ostream* log_jsonl) {
    state.model.validate();
    state.train.validate();
    if (train_examples.empty()) throw std::invalid_argument("empty train split");
    if (valid_examples.empty()) throw std::invalid_argument("empty validation split");
    const TrainConfig& tc = state.train;
    auto valid_batches = make_batches(valid_examples, tc.batch_size, state.model.max_len);

    TrainOutcome out;
    if (state.step >= tc.max_steps) {
        out.best = state;
        out.last = std::move(state);
        return out;
    }

    Checkpoint best;
    bool have_best = false;
    int bad = (int)state.stale_evals;
    bool stop = false;
    while (!stop) {
        auto batches = epoch_batches(train_examples, tc, state.model, state.epoch);
        while (state.cursor < (long long)batches.size()) {
            bool sentiment_only = tc.loss_schedule == LossSchedule::SentimentThenEmotion &&
                                  state.epoch < tc.warmup_epochs;
            LossBundle<float> lb = train_step(state, batches[(size_t)state.cursor], sentiment_only);
            ++state.cursor;
            TrainLogEntry entry;
            entry.step = state.step;
            entry.l1 = lb.l1;
            entry.l2 = lb.l2;
            entry.l3 = lb.l3;
            entry.total = lb.total;
            if (state.step % tc.eval_every == 0) {
                double val = validation_loss(state.model, state.params, valid_batches);
                state.val_history.push_back(val);
                entry.has_val = true;
                entry.val_total = val;
                if (val < state.best_val) {
                    state.best_val = val;
                    state.stale_evals = 0;
                    bad = 0;
                    best = state;
                    have_best = true;
                } else {
                    state.stale_evals = ++bad;
                    if (bad >= tc.early_stop_patience) stop = true;
                }
            }
            out.log.push_back(entry);
            if (log_jsonl) write_log_line(*log_jsonl, entry);
            if (state.step >= tc.max_steps) stop = true;
            if (stop) break;
        }
        if (!stop) {
            state.cursor = 0;
            ++state.epoch;
        }
    }
    out.improved = have_best;
    out.best = have_best ? std::move(best) : state;
    out.last = std::move(state);
    return out;
}

}  // namespace asem
