#include "asem/decode.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace asem {

namespace {

double length_score(double log_prob, int length, double penalty) {
    if (length <= 0) return log_prob;
    return log_prob / std::pow((double)length, penalty);
}

struct Beam {
    std::vector<int> prefix;  // includes SOS
    double log_prob = 0;
    bool finished = false;
};

std::vector<int> strip(const std::vector<int>& prefix, int eos) {
    std::vector<int> out(prefix.begin() + 1, prefix.end());
    if (!out.empty() && out.back() == eos) out.pop_back();
    return out;
}

}  // namespace

std::vector<int> greedy_decode(StepScorer& scorer, int sos, int eos, int max_new_tokens) {
    std::vector<int> prefix = {sos};
    std::vector<int> out;
    for (int t = 0; t < max_new_tokens; ++t) {
        std::vector<double> lp = scorer.log_probs(prefix);
        int best = 0;
        for (int j = 1; j < (int)lp.size(); ++j)
            if (lp[(size_t)j] > lp[(size_t)best]) best = j;
        prefix.push_back(best);
        if (best == eos) break;
        out.push_back(best);
    }
    return out;
}

std::vector<DecodeResult> beam_search(StepScorer& scorer, int sos, int eos, int width,
                                      int max_new_tokens, double length_penalty) {
    if (width < 1) throw std::invalid_argument("beam width must be >= 1");
    std::vector<Beam> beams = {{{sos}, 0.0, false}};
    for (int t = 0; t < max_new_tokens; ++t) {
        bool any_open = false;
        for (const Beam& b : beams)
            if (!b.finished) any_open = true;
        if (!any_open) break;
        std::vector<Beam> pool;
        for (const Beam& b : beams) {
            if (b.finished) {
                pool.push_back(b);
                continue;
            }
            std::vector<double> lp = scorer.log_probs(b.prefix);
            for (int tok = 0; tok < (int)lp.size(); ++tok) {
                Beam nb = b;
                nb.prefix.push_back(tok);
                nb.log_prob += lp[(size_t)tok];
                nb.finished = tok == eos;
                pool.push_back(std::move(nb));
            }
        }
        // stable: ties keep generation order (earlier beam, lower token)
        std::stable_sort(pool.begin(), pool.end(), [&](const Beam& a, const Beam& b) {
            return length_score(a.log_prob, (int)a.prefix.size() - 1, length_penalty) >
                   length_score(b.log_prob, (int)b.prefix.size() - 1, length_penalty);
        });
        if ((int)pool.size() > width) pool.resize((size_t)width);
        beams = std::move(pool);
    }
    std::vector<DecodeResult> out;
    for (const Beam& b : beams) {
        DecodeResult r;
        r.tokens = strip(b.prefix, eos);
        r.log_prob = b.log_prob;
        r.score = length_score(b.log_prob, (int)b.prefix.size() - 1, length_penalty);
        out.push_back(std::move(r));
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const DecodeResult& a, const DecodeResult& b) { return a.score > b.score; });
    return out;
}

}  // namespace asem
