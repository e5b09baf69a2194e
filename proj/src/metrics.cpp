#include "asem/metrics.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace asem {

namespace {

std::map<std::vector<std::string>, long long> ngram_counts(const std::vector<std::string>& toks,
                                                           int n) {
    std::map<std::vector<std::string>, long long> counts;
    if ((int)toks.size() < n) return counts;
    for (size_t i = 0; i + (size_t)n <= toks.size(); ++i)
        ++counts[std::vector<std::string>(toks.begin() + (long)i, toks.begin() + (long)(i + (size_t)n))];
    return counts;
}

}  // namespace

double perplexity_from_nll(double total_nll, long long token_count) {
    if (token_count <= 0) throw std::invalid_argument("no tokens to score");
    return std::exp(total_nll / (double)token_count);
}

double corpus_bleu(const std::vector<std::vector<std::string>>& candidates,
                   const std::vector<std::vector<std::string>>& references) {
    if (candidates.empty()) throw std::invalid_argument("empty corpus");
    if (candidates.size() != references.size())
        throw std::invalid_argument("candidate/reference count mismatch");
    constexpr int kMaxN = 4;
    long long matched[kMaxN] = {0, 0, 0, 0};
    long long total[kMaxN] = {0, 0, 0, 0};
    long long cand_len = 0, ref_len = 0;
    for (size_t i = 0; i < candidates.size(); ++i) {
        cand_len += (long long)candidates[i].size();
        ref_len += (long long)references[i].size();
        for (int n = 1; n <= kMaxN; ++n) {
            auto cc = ngram_counts(candidates[i], n);
            auto rc = ngram_counts(references[i], n);
            for (const auto& [gram, count] : cc) {
                auto it = rc.find(gram);
                long long clip = it == rc.end() ? 0 : std::min(count, it->second);
                matched[n - 1] += clip;
                total[n - 1] += count;
            }
        }
    }
    if (cand_len == 0) return 0.0;
    double log_prec_sum = 0;
    for (int n = 1; n <= kMaxN; ++n) {
        long long m = matched[n - 1], t = total[n - 1];
        if (n == 1) {
            if (m == 0) return 0.0;
        } else if (m == 0) {
            m += 1;
            t += 1;
        }
        log_prec_sum += std::log((double)m / (double)t);
    }
    double bp = cand_len >= ref_len ? 1.0 : std::exp(1.0 - (double)ref_len / (double)cand_len);
    return bp * std::exp(log_prec_sum / kMaxN);
}

double distinct_n(const std::vector<std::vector<std::string>>& candidates, int n) {
    if (n < 1) throw std::invalid_argument("n must be >= 1");
    std::map<std::vector<std::string>, long long> seen;
    long long total = 0;
    for (const auto& c : candidates)
        for (const auto& [gram, count] : ngram_counts(c, n)) {
            seen[gram] += count;
            total += count;
        }
    if (total == 0) throw std::invalid_argument("corpus has no n-grams of order " + std::to_string(n));
    return (double)seen.size() / (double)total;
}

double avg_cosine(const std::vector<std::vector<std::string>>& candidates,
                  const std::vector<std::vector<std::string>>& references,
                  const EmbeddingTable& table, const Vocabulary& vocab) {
    if (candidates.size() != references.size())
        throw std::invalid_argument("candidate/reference count mismatch");
    if (candidates.empty()) throw std::invalid_argument("empty corpus");
    int dim = table.dim;
    auto mean_vec = [&](const std::vector<std::string>& toks) {
        std::vector<double> v((size_t)dim, 0.0);
        if (toks.empty()) return v;
        for (const auto& t : toks) {
            int id = vocab.encode(t);
            const float* row = table.matrix.ptr() + (size_t)id * dim;
            for (int j = 0; j < dim; ++j) v[(size_t)j] += (double)row[j];
        }
        for (auto& x : v) x /= (double)toks.size();
        return v;
    };
    double sum = 0;
    for (size_t i = 0; i < candidates.size(); ++i) {
        auto a = mean_vec(candidates[i]);
        auto b = mean_vec(references[i]);
        double dot = 0, na = 0, nb = 0;
        for (int j = 0; j < dim; ++j) {
            dot += a[(size_t)j] * b[(size_t)j];
            na += a[(size_t)j] * a[(size_t)j];
            nb += b[(size_t)j] * b[(size_t)j];
        }
        if (na > 0 && nb > 0) sum += dot / (std::sqrt(na) * std::sqrt(nb));
    }
    return sum / (double)candidates.size();
}

F1Result macro_f1(const std::vector<int>& predictions, const std::vector<int>& golds,
                  int n_classes, const std::set<int>& exclude) {
    if (predictions.empty()) throw std::invalid_argument("empty inputs");
    if (predictions.size() != golds.size())
        throw std::invalid_argument("prediction/gold count mismatch");
    F1Result r;
    r.confusion.assign((size_t)n_classes, std::vector<long long>((size_t)n_classes, 0));
    for (size_t i = 0; i < predictions.size(); ++i) {
        int p = predictions[i], g = golds[i];
        if (p < 0 || p >= n_classes || g < 0 || g >= n_classes)
            throw std::out_of_range("label outside class range");
        ++r.confusion[(size_t)g][(size_t)p];
    }
    double macro_sum = 0;
    int macro_n = 0;
    for (int c = 0; c < n_classes; ++c) {
        long long tp = r.confusion[(size_t)c][(size_t)c];
        long long gold_c = 0, pred_c = 0;
        for (int j = 0; j < n_classes; ++j) {
            gold_c += r.confusion[(size_t)c][(size_t)j];
            pred_c += r.confusion[(size_t)j][(size_t)c];
        }
        ClassScore s;
        s.support = gold_c;
        s.precision = pred_c > 0 ? (double)tp / (double)pred_c : 0.0;
        s.recall = gold_c > 0 ? (double)tp / (double)gold_c : 0.0;
        s.f1 = s.precision + s.recall > 0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
                                          : 0.0;
        r.per_class.push_back(s);
        if (!exclude.count(c)) {
            macro_sum += s.f1;
            ++macro_n;
        }
    }
    if (macro_n == 0) throw std::invalid_argument("all classes excluded");
    r.macro_f1 = macro_sum / (double)macro_n;
    return r;
}

double fleiss_kappa(const std::vector<std::vector<long long>>& ratings) {
    if (ratings.empty()) throw std::invalid_argument("no items");
    size_t n_cat = ratings[0].size();
    if (n_cat < 2) throw std::invalid_argument("need at least 2 categories");
    long long n = 0;
    for (long long c : ratings[0]) n += c;
    if (n < 2) throw std::invalid_argument("need at least 2 raters per item");
    double p_bar = 0;
    std::vector<double> p_cat(n_cat, 0.0);
    for (const auto& row : ratings) {
        if (row.size() != n_cat) throw std::invalid_argument("ragged rating rows");
        long long row_n = 0;
        long long sq = 0;
        for (size_t j = 0; j < n_cat; ++j) {
            if (row[j] < 0) throw std::invalid_argument("negative rating count");
            row_n += row[j];
            sq += row[j] * row[j];
            p_cat[j] += (double)row[j];
        }
        if (row_n != n) throw std::invalid_argument("unequal rater counts per item");
        p_bar += (double)(sq - n) / (double)(n * (n - 1));
    }
    p_bar /= (double)ratings.size();
    double pe = 0;
    for (size_t j = 0; j < n_cat; ++j) {
        double pj = p_cat[j] / (double)(ratings.size() * (size_t)n);
        pe += pj * pj;
    }
    if (std::abs(1.0 - pe) < 1e-12) return 1.0;  // unanimous single category
    return (p_bar - pe) / (1.0 - pe);
}

std::vector<std::vector<long long>> read_rating_counts(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open ratings file: " + path);
    std::vector<std::vector<long long>> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::vector<long long> row;
        long long v;
        while (ss >> v) row.push_back(v);
        if (!row.empty()) out.push_back(std::move(row));
    }
    if (out.empty()) throw std::runtime_error("ratings file has no rows: " + path);
    return out;
}

std::string metric_report_json(const MetricReport& r) {
    nlohmann::ordered_json j;
    j["ppl"] = r.ppl;
    j["bleu"] = r.bleu;
    j["distinct_1"] = r.distinct_1;
    j["distinct_2"] = r.distinct_2;
    j["avg_cosine"] = r.avg_cosine;
    j["macro_f1"] = r.macro_f1;
    j["per_class"] = nlohmann::ordered_json::array();
    for (const auto& c : r.per_class) {
        nlohmann::ordered_json cj;
        cj["precision"] = c.precision;
        cj["recall"] = c.recall;
        cj["f1"] = c.f1;
        cj["support"] = c.support;
        j["per_class"].push_back(cj);
    }
    j["confusion"] = r.confusion;
    return j.dump(2);
}

}  // namespace asem
