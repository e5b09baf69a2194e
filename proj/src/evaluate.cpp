#include "asem/evaluate.hpp"

#include <stdexcept>

#include "asem/decode.hpp"
#include "asem/model.hpp"

namespace asem {

namespace {

int argmax_row(const Tensor<float>& t, int row) {
    int cols = t.dim((int)t.shape.size() - 1);
    const float* p = t.ptr() + (size_t)row * cols;
    int best = 0;
    for (int j = 1; j < cols; ++j)
        if (p[j] > p[best]) best = j;
    return best;
}

}  // namespace

ClassifierOutputs classify_examples(const ModelConfig& cfg, const ParameterStore<float>& store,
                                    const std::vector<EncodedExample>& examples, int batch_size) {
    ClassifierOutputs out;
    for (const Batch& batch : make_batches(examples, batch_size, cfg.max_len)) {
        ModelForward<float> fwd(cfg, store, /*with_grads=*/false);
        fwd.run(batch);
        LossBundle<float> loss = fwd.losses();
        out.total_nll += (double)loss.l3 * (double)fwd.target_token_count();
        out.token_count += fwd.target_token_count();
        ForwardTrace<float> tr = fwd.trace();
        for (int b = 0; b < batch.size; ++b) {
            out.emotion_pred.push_back(argmax_row(tr.e_att, b));
            out.emotion_gold.push_back(batch.emotion_targets[(size_t)b]);
            out.sentiment_pred.push_back(argmax_row(tr.s_att_pooled, b));
            out.sentiment_gold.push_back(batch.sentiment_targets[(size_t)b]);
        }
    }
    return out;
}

std::vector<std::vector<std::string>> generate_responses(
    const ModelConfig& cfg, const ParameterStore<float>& store,
    const std::vector<EncodedExample>& examples, const Vocabulary& vocab,
    const DecodeConfig& decode) {
    std::vector<std::vector<std::string>> out;
    out.reserve(examples.size());
    for (const EncodedExample& ex : examples) {
        std::vector<Batch> single = make_batches({ex}, 1, cfg.max_len);
        EncodedContext<float> enc = encode_context(cfg, store, single[0]);
        ModelScorer scorer(cfg, store, std::move(enc));
        std::vector<DecodeResult> beams =
            beam_search(scorer, Vocabulary::kSos, Vocabulary::kEos, decode.beam_width,
                        decode.max_new_tokens, decode.length_penalty);
        if (beams.empty()) throw std::runtime_error("beam search returned no candidates");
        out.push_back(vocab.decode(beams[0].tokens));
    }
    return out;
}

MetricReport evaluate_model(const ModelConfig& cfg, const ParameterStore<float>& store,
                            const std::vector<EncodedExample>& examples, const Vocabulary& vocab,
                            const EmbeddingTable& table, const EvalOptions& opts) {
    if (examples.empty()) throw std::invalid_argument("nothing to evaluate");
    ClassifierOutputs cls = classify_examples(cfg, store, examples, opts.batch_size);

    std::vector<std::vector<std::string>> cands =
        generate_responses(cfg, store, examples, vocab, opts.decode);
    std::vector<std::vector<std::string>> refs;
    refs.reserve(examples.size());
    for (const EncodedExample& ex : examples) refs.push_back(vocab.decode(ex.response));

    auto has_ngrams = [&](int n) {
        for (const auto& c : cands)
            if ((int)c.size() >= n) return true;
        return false;
    };

    MetricReport r;
    r.ppl = perplexity_from_nll(cls.total_nll, cls.token_count);
    r.bleu = corpus_bleu(cands, refs);
    r.distinct_1 = has_ngrams(1) ? distinct_n(cands, 1) : 0.0;
    r.distinct_2 = has_ngrams(2) ? distinct_n(cands, 2) : 0.0;
    r.avg_cosine = avg_cosine(cands, refs, table, vocab);
    F1Result f1 = macro_f1(cls.emotion_pred, cls.emotion_gold, cfg.n_emotions,
                           opts.exclude_emotions);
    r.macro_f1 = f1.macro_f1;
    r.per_class = std::move(f1.per_class);
    r.confusion = std::move(f1.confusion);
    return r;
}

}  // namespace asem
