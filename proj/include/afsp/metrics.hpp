#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "afsp/corpus.hpp"

namespace afsp::metrics {

// ---------------------------------------------------------------------------
// Special functions (exposed for direct accuracy tests)
// ---------------------------------------------------------------------------

namespace detail {

/// Regularized upper incomplete gamma Q(a,x); series for x < a+1, continued
/// fraction otherwise. Absolute accuracy ~1e-10 against tabulated values.
double regularized_gamma_q(double a, double x);

/// Regularized incomplete beta I_x(a,b) via its continued fraction.
double regularized_beta(double a, double b, double x);

/// Two-sided p-value of Student's t with df degrees of freedom.
double student_t_two_sided_p(double t, double df);

} // namespace detail

// ---------------------------------------------------------------------------
// Agreement statistics
// ---------------------------------------------------------------------------

/// Cohen's kappa = (po - pe)/(1 - pe) with pe from marginal products.
/// Perfect agreement on a single observed class returns 1.0 (degenerate
/// convention; the pe=1 division is guarded).
double cohen_kappa(std::span<const SentimentLabel> a, std::span<const SentimentLabel> b);

/// Fleiss' kappa over the five categories; rows are items, columns raters.
/// Every row must have the same rater count (>= 2).
double fleiss_kappa(const std::vector<std::vector<SentimentLabel>>& votes);

using Distribution = std::array<double, 5>;

/// Jensen-Shannon divergence, base 2, in [0,1]; 0 iff p = q.
double js_divergence(const Distribution& p, const Distribution& q);

struct ChiSquareResult {
    double statistic = 0.0;
    long dof = 0;
    double p_value = 1.0;
};

/// Pearson chi-square independence test on an r x c count table.
/// Zero row/column marginals are an error naming the row/col.
ChiSquareResult chi_square_independence(const std::vector<std::vector<double>>& table);

/// Pearson r on the ordinal encodings {-2..2}; zero variance is an error.
double pearson_ordinal(std::span<const SentimentLabel> a, std::span<const SentimentLabel> b);

struct PairedTResult {
    double t = 0.0;
    long dof = 0;
    double p_value = 1.0;
};

/// Paired two-sided t-test on d = x - y; all-zero differences are an error.
PairedTResult paired_t_test(std::span<const double> x, std::span<const double> y);

// ---------------------------------------------------------------------------
// Classification reports
// ---------------------------------------------------------------------------

struct ConfusionMatrix {
    std::array<std::array<long, 5>, 5> counts{}; // rows gold, cols predicted
    long total = 0;

    void add(SentimentLabel gold, SentimentLabel predicted) {
        ++counts[static_cast<std::size_t>(gold)][static_cast<std::size_t>(predicted)];
        ++total;
    }
};

struct PerClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    long support = 0;
};

struct ClassificationReport {
    double accuracy = 0.0;
    double weighted_precision = 0.0;
    double weighted_recall = 0.0;
    double weighted_f1 = 0.0;
    /// Unweighted mean of per-class F1 over all 5 taxonomy classes;
    /// never-predicted classes count as 0, which makes class collapse
    /// punishing by construction.
    double macro_f1 = 0.0;
    std::array<PerClassMetrics, 5> per_class{};
    ConfusionMatrix confusion;
};

ClassificationReport classification_report(std::span<const SentimentLabel> gold,
                                           std::span<const SentimentLabel> predicted);

json report_to_json(const ClassificationReport& report);

// ---------------------------------------------------------------------------
// Summarization quality
// ---------------------------------------------------------------------------

/// summary words / source words. Empty source is an error; empty summary
/// yields 0 (flagged by callers).
double compression_ratio(const std::string& source, const std::string& summary);

/// TF-IDF cosine over the two-document corpus {source, summary}.
double cosine_sim(const std::string& source, const std::string& summary);

/// ROUGE-N F1 on token n-grams (clipped counts), n in {1,2}.
double rouge_n(const std::string& reference, const std::string& candidate, int n);

/// ROUGE-L F1 via longest common subsequence of tokens.
double rouge_l(const std::string& reference, const std::string& candidate);

/// Fraction of the summary's content tokens (stopword-filtered unigrams)
/// absent from the source. Empty content set yields 0 by convention.
double hallucination_ratio(const std::string& source, const std::string& summary);

/// Entity-level variant: novel linked companies / companies linked in the
/// summary. Empty summary set yields 0.
double entity_hallucination_ratio(const std::vector<std::string>& source_companies,
                                  const std::vector<std::string>& summary_companies);

/// Arithmetic mean of ROUGE-L and cosine similarity.
double hybrid_score(double rouge_l_f1, double cosine);

struct SummQualityRow {
    std::string document_id;
    double compression = 0.0;
    double cosine = 0.0;
    double rouge1 = 0.0;
    double rouge_l = 0.0;
    double hallucination = 0.0;
    double hybrid = 0.0;
};

struct SummQualityReport {
    std::vector<SummQualityRow> rows;
    SummQualityRow mean; // document_id "mean"
    long flagged_expansion = 0; // compression > 1 occurrences
};

SummQualityReport summ_quality_report(
    const std::vector<std::pair<std::string, std::pair<std::string, std::string>>>&
        id_source_summary);

// ---------------------------------------------------------------------------
// Consensus / agreement aggregation
// ---------------------------------------------------------------------------

struct ConsensusStats {
    double full_pct = 0.0;
    double majority_pct = 0.0; // majority-only
    double majority_or_better_pct = 0.0;
    double disagreement_pct = 0.0;
    std::array<double, 5> final_label_distribution{}; // over decided documents
};

ConsensusStats consensus_stats(std::span<const ConsensusResult> results);

/// Share of pairs whose two labels are equal, in percent.
double label_consistency(
    std::span<const std::pair<SentimentLabel, SentimentLabel>> source_summary_pairs);

struct PairwiseAgreement {
    std::string model_a;
    std::string model_b;
    double kappa = 0.0;
    double js = 0.0;
    std::optional<double> pearson; // absent when a side has zero variance
    ChiSquareResult chi_square;
    bool chi_square_degenerate = false;
};

struct AgreementReport {
    std::vector<PairwiseAgreement> pairs;
    ConsensusStats consensus;
};

/// Pairwise agreement over aligned per-model label sequences. The chi-square
/// table is compacted to non-empty rows/columns first; dof 0 marks the pair
/// degenerate rather than erroring.
AgreementReport agreement_report(const std::map<std::string, std::vector<SentimentLabel>>& votes,
                                 std::span<const ConsensusResult> results);

json agreement_to_json(const AgreementReport& report);

// ---------------------------------------------------------------------------
// Cost-quality
// ---------------------------------------------------------------------------

struct CostQualityRow {
    std::string model_id;
    double macro_f1 = 0.0;
    double cost_usd = 0.0;        // total for the evaluated batch
    double cost_per_sample = 0.0;
    std::string category;         // deployment_ready | low_cost_exploratory | high_cost_inefficient
    bool over_ceiling = false;    // cost_per_sample > ceiling
};

struct CostQualityThresholds {
    double f1_floor = 0.6;
    double ceiling_usd_per_sample = 0.0012;
};

/// Rows sorted by macro-F1 descending, ties by lower cost. Categories follow
/// the ceiling/floor thresholds.
std::vector<CostQualityRow> cost_quality_table(std::vector<CostQualityRow> rows,
                                               const CostQualityThresholds& thresholds);

// ---------------------------------------------------------------------------
// Rendering (3-decimal fixed formatting, stable ordering)
// ---------------------------------------------------------------------------

std::string format3(double value);

std::string render_summary_table(const SummQualityReport& news, const SummQualityReport& social);
std::string render_benchmark_table(
    const std::vector<std::pair<std::string, ClassificationReport>>& by_model);
std::string render_per_class_table(const std::string& model_id, const ClassificationReport& report);
std::string render_cost_quality_table(const std::vector<CostQualityRow>& rows);
std::string cost_quality_csv(const std::vector<CostQualityRow>& rows);
std::string summ_quality_csv(const SummQualityReport& report);

} // namespace afsp::metrics
