#pragma once

#include <set>
#include <string>
#include <vector>

#include "asem/embeddings.hpp"
#include "asem/vocab.hpp"

namespace asem {

struct ClassScore {
    double precision = 0, recall = 0, f1 = 0;
    long long support = 0;
};

struct MetricReport {
    double ppl = 0;
    double bleu = 0;
    double distinct_1 = 0;
    double distinct_2 = 0;
    double avg_cosine = 0;
    double macro_f1 = 0;
    std::vector<ClassScore> per_class;
    std::vector<std::vector<long long>> confusion;  // [gold][pred]
};

double perplexity_from_nll(double total_nll, long long token_count);

// Corpus-level BLEU-4: clipped n-gram precision, brevity penalty, add-one
// smoothing on zero-count orders n >= 2. Zero unigram overlap gives 0.
double corpus_bleu(const std::vector<std::vector<std::string>>& candidates,
                   const std::vector<std::vector<std::string>>& references);

// Unique n-grams across the corpus over total n-gram count.
double distinct_n(const std::vector<std::vector<std::string>>& candidates, int n);

// Cosine of mean token embeddings per pair, averaged; a zero vector on either
// side scores that pair 0.
double avg_cosine(const std::vector<std::vector<std::string>>& candidates,
                  const std::vector<std::vector<std::string>>& references,
                  const EmbeddingTable& table, const Vocabulary& vocab);

struct F1Result {
    double macro_f1 = 0;
    std::vector<ClassScore> per_class;
    std::vector<std::vector<long long>> confusion;
};

// Per-class precision/recall/F1 with 0/0 = 0; macro average skips excluded
// classes, the confusion matrix keeps them.
F1Result macro_f1(const std::vector<int>& predictions, const std::vector<int>& golds,
                  int n_classes, const std::set<int>& exclude = {});

// ratings: items x categories annotator counts, equal row sums. A degenerate
// chance agreement of 1 (all mass in one category) returns 1.
double fleiss_kappa(const std::vector<std::vector<long long>>& ratings);

// TSV rows of per-item category counts for fleiss_kappa.
std::vector<std::vector<long long>> read_rating_counts(const std::string& path);

std::string metric_report_json(const MetricReport& r);

}  // namespace asem
