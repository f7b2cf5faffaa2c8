#include "afsp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "afsp/dedup.hpp"
#include "afsp/normalize.hpp"

namespace afsp::metrics {

// ---------------------------------------------------------------------------
// Special functions
// ---------------------------------------------------------------------------

namespace detail {

namespace {
constexpr int kMaxIterations = 512;
constexpr double kEps = 1e-16;
constexpr double kTiny = 1e-300;
} // namespace

static double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double term = sum;
    for (int i = 0; i < kMaxIterations; ++i) {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if (std::fabs(term) < std::fabs(sum) * kEps) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

static double gamma_q_continued_fraction(double a, double x) {
    double b = x + 1.0 - a;
    double c = 1.0 / kTiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= kMaxIterations; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = b + an / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < kEps) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

double regularized_gamma_q(double a, double x) {
    if (a <= 0.0 || x < 0.0) throw DegenerateInput("regularized_gamma_q: invalid arguments");
    if (x == 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
    return gamma_q_continued_fraction(a, x);
}

static double beta_continued_fraction(double a, double b, double x) {
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIterations; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < kEps) break;
    }
    return h;
}

double regularized_beta(double a, double b, double x) {
    if (a <= 0.0 || b <= 0.0) throw DegenerateInput("regularized_beta: invalid shape");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double front =
        std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                 b * std::log(1.0 - x));
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double df) {
    if (df <= 0.0) throw DegenerateInput("student_t_two_sided_p: dof must be positive");
    return regularized_beta(df / 2.0, 0.5, df / (df + t * t));
}

} // namespace detail

// ---------------------------------------------------------------------------
// Agreement statistics
// ---------------------------------------------------------------------------

double cohen_kappa(std::span<const SentimentLabel> a, std::span<const SentimentLabel> b) {
    if (a.size() != b.size()) throw Error("cohen_kappa: sequences differ in length");
    if (a.size() < 2) throw Error("cohen_kappa: need at least 2 observations");

    const double n = static_cast<double>(a.size());
    double table[5][5] = {};
    for (std::size_t i = 0; i < a.size(); ++i)
        table[static_cast<int>(a[i])][static_cast<int>(b[i])] += 1.0;

    double po = 0.0, pe = 0.0;
    for (int i = 0; i < 5; ++i) {
        po += table[i][i] / n;
        double row = 0.0, col = 0.0;
        for (int j = 0; j < 5; ++j) {
            row += table[i][j];
            col += table[j][i];
        }
        pe += (row / n) * (col / n);
    }
    if (std::fabs(1.0 - pe) < 1e-12) return 1.0; // single observed class; po is forced to 1
    return (po - pe) / (1.0 - pe);
}

double fleiss_kappa(const std::vector<std::vector<SentimentLabel>>& votes) {
    if (votes.empty()) throw Error("fleiss_kappa: no items");
    const std::size_t raters = votes.front().size();
    if (raters < 2) throw Error("fleiss_kappa: need at least 2 raters per item");

    const double n = static_cast<double>(raters);
    double category_totals[5] = {};
    double p_bar = 0.0;
    for (const auto& item : votes) {
        if (item.size() != raters)
            throw Error("fleiss_kappa: ragged matrix (items have different rater counts)");
        double counts[5] = {};
        for (SentimentLabel label : item) counts[static_cast<int>(label)] += 1.0;
        double sum_sq = 0.0;
        for (int j = 0; j < 5; ++j) {
            sum_sq += counts[j] * counts[j];
            category_totals[j] += counts[j];
        }
        p_bar += (sum_sq - n) / (n * (n - 1.0));
    }
    p_bar /= static_cast<double>(votes.size());

    const double total = n * static_cast<double>(votes.size());
    double pe = 0.0;
    for (int j = 0; j < 5; ++j) {
        const double pj = category_totals[j] / total;
        pe += pj * pj;
    }
    if (std::fabs(1.0 - pe) < 1e-12) return 1.0; // one category everywhere
    return (p_bar - pe) / (1.0 - pe);
}

double js_divergence(const Distribution& p, const Distribution& q) {
    auto validate = [](const Distribution& d, const char* which) {
        double sum = 0.0;
        for (double v : d) {
            if (v < 0.0) throw Error(std::string("js_divergence: ") + which + " has negative mass");
            sum += v;
        }
        if (std::fabs(sum - 1.0) > 1e-9)
            throw Error(std::string("js_divergence: ") + which + " does not sum to 1");
    };
    validate(p, "p");
    validate(q, "q");

    auto kl_to_mixture = [&](const Distribution& d) {
        double kl = 0.0;
        for (int i = 0; i < 5; ++i) {
            if (d[i] <= 0.0) continue;
            const double m = 0.5 * (p[i] + q[i]);
            kl += d[i] * std::log2(d[i] / m);
        }
        return kl;
    };
    const double jsd = 0.5 * kl_to_mixture(p) + 0.5 * kl_to_mixture(q);
    return std::clamp(jsd, 0.0, 1.0);
}

ChiSquareResult chi_square_independence(const std::vector<std::vector<double>>& table) {
    const std::size_t rows = table.size();
    if (rows == 0) throw Error("chi_square: empty table");
    const std::size_t cols = table.front().size();
    for (const auto& row : table)
        if (row.size() != cols) throw Error("chi_square: ragged table");

    std::vector<double> row_sum(rows, 0.0), col_sum(cols, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) {
            if (table[i][j] < 0.0) throw Error("chi_square: negative count");
            row_sum[i] += table[i][j];
            col_sum[j] += table[i][j];
            total += table[i][j];
        }
    for (std::size_t i = 0; i < rows; ++i)
        if (row_sum[i] == 0.0)
            throw DegenerateInput("chi_square: row " + std::to_string(i) + " has zero marginal");
    for (std::size_t j = 0; j < cols; ++j)
        if (col_sum[j] == 0.0)
            throw DegenerateInput("chi_square: column " + std::to_string(j) + " has zero marginal");

    ChiSquareResult result;
    result.dof = static_cast<long>(rows - 1) * static_cast<long>(cols - 1);
    if (result.dof == 0)
        throw DegenerateInput("chi_square: table has zero degrees of freedom");

    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) {
            const double expected = row_sum[i] * col_sum[j] / total;
            const double diff = table[i][j] - expected;
            result.statistic += diff * diff / expected;
        }
    result.p_value =
        detail::regularized_gamma_q(static_cast<double>(result.dof) / 2.0, result.statistic / 2.0);
    return result;
}

double pearson_ordinal(std::span<const SentimentLabel> a, std::span<const SentimentLabel> b) {
    if (a.size() != b.size()) throw Error("pearson_ordinal: sequences differ in length");
    if (a.size() < 2) throw Error("pearson_ordinal: need at least 2 observations");

    const double n = static_cast<double>(a.size());
    double mean_a = 0.0, mean_b = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        mean_a += ordinal(a[i]);
        mean_b += ordinal(b[i]);
    }
    mean_a /= n;
    mean_b /= n;

    double cov = 0.0, var_a = 0.0, var_b = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = ordinal(a[i]) - mean_a;
        const double db = ordinal(b[i]) - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if (var_a == 0.0 || var_b == 0.0)
        throw DegenerateInput("pearson_ordinal: a side has zero variance");
    return std::clamp(cov / std::sqrt(var_a * var_b), -1.0, 1.0);
}

PairedTResult paired_t_test(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw Error("paired_t_test: sequences differ in length");
    if (x.size() < 2) throw Error("paired_t_test: need at least 2 pairs");

    const double n = static_cast<double>(x.size());
    double mean = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) mean += x[i] - y[i];
    mean /= n;

    double ss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = (x[i] - y[i]) - mean;
        ss += d * d;
    }
    const double sd = std::sqrt(ss / (n - 1.0));
    if (sd == 0.0) throw DegenerateInput("paired_t_test: differences have zero variance");

    PairedTResult result;
    result.t = mean / (sd / std::sqrt(n));
    result.dof = static_cast<long>(x.size()) - 1;
    result.p_value = detail::student_t_two_sided_p(result.t, static_cast<double>(result.dof));
    return result;
}

// ---------------------------------------------------------------------------
// Classification reports
// ---------------------------------------------------------------------------

ClassificationReport classification_report(std::span<const SentimentLabel> gold,
                                           std::span<const SentimentLabel> predicted) {
    if (gold.size() != predicted.size())
        throw Error("classification_report: sequences differ in length");
    if (gold.empty()) throw Error("classification_report: no samples");

    ClassificationReport report;
    for (std::size_t i = 0; i < gold.size(); ++i) report.confusion.add(gold[i], predicted[i]);

    const auto& m = report.confusion.counts;
    const double total = static_cast<double>(report.confusion.total);
    double correct = 0.0;
    for (int c = 0; c < 5; ++c) {
        correct += static_cast<double>(m[c][c]);
        double tp = static_cast<double>(m[c][c]);
        double fp = 0.0, fn = 0.0;
        long support = 0;
        for (int o = 0; o < 5; ++o) {
            if (o != c) {
                fp += static_cast<double>(m[o][c]);
                fn += static_cast<double>(m[c][o]);
            }
            support += m[c][o];
        }
        PerClassMetrics& pc = report.per_class[c];
        pc.support = support;
        pc.precision = tp + fp > 0.0 ? tp / (tp + fp) : 0.0;
        pc.recall = tp + fn > 0.0 ? tp / (tp + fn) : 0.0;
        pc.f1 = pc.precision + pc.recall > 0.0
                    ? 2.0 * pc.precision * pc.recall / (pc.precision + pc.recall)
                    : 0.0;
        report.macro_f1 += pc.f1 / 5.0;
        report.weighted_precision += pc.precision * support / total;
        report.weighted_recall += pc.recall * support / total;
        report.weighted_f1 += pc.f1 * support / total;
    }
    report.accuracy = correct / total;
    return report;
}

json report_to_json(const ClassificationReport& report) {
    json j;
    j["accuracy"] = report.accuracy;
    j["weighted_precision"] = report.weighted_precision;
    j["weighted_recall"] = report.weighted_recall;
    j["weighted_f1"] = report.weighted_f1;
    j["macro_f1"] = report.macro_f1;
    json per_class = json::object();
    for (SentimentLabel label : kAllLabels) {
        const PerClassMetrics& pc = report.per_class[static_cast<int>(label)];
        per_class[label_name(label)] = {{"precision", pc.precision},
                                        {"recall", pc.recall},
                                        {"f1", pc.f1},
                                        {"support", pc.support}};
    }
    j["per_class"] = per_class;
    json rows = json::array();
    for (int i = 0; i < 5; ++i) {
        json row = json::array();
        for (int k = 0; k < 5; ++k) row.push_back(report.confusion.counts[i][k]);
        rows.push_back(row);
    }
    j["confusion"] = rows;
    return j;
}

// ---------------------------------------------------------------------------
// Summarization quality
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> content_keys(const std::string& text) {
    std::vector<std::string> keys;
    for (const auto& token : normalize::tokenize(text)) {
        std::string key = normalize::strip_edge_punctuation(token);
        if (!key.empty()) keys.push_back(std::move(key));
    }
    return keys;
}

const std::unordered_set<std::string>& arabic_stopwords() {
    static const std::unordered_set<std::string> words = {
        "في",   "من",   "الى",  "إلى",  "على",  "عن",   "ان",   "أن",   "إن",
        "كان",  "كانت", "هذا",  "هذه",  "ذلك",  "تلك",  "التي", "الذي", "الذين",
        "و",    "ثم",   "او",   "أو",   "لا",   "ما",   "لم",   "لن",   "قد",
        "كل",   "بعض",  "بعد",  "قبل",  "بين",  "حتى",  "اذا",  "إذا",  "كما",
        "منذ",  "عند",  "لدى",  "مع",   "هو",   "هي",   "هم",   "نحو",  "حول",
        "خلال", "حيث",  "فيه",  "فيها", "به",   "بها",  "له",   "لها",  "الا",
        "إلا",  "ايضا", "أيضا", "غير",  "ضمن",  "عبر",  "اي",   "أي",
    };
    return words;
}

std::vector<std::string> ngrams(const std::vector<std::string>& tokens, int n) {
    std::vector<std::string> grams;
    if (n <= 0 || tokens.size() < static_cast<std::size_t>(n)) return grams;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string gram = tokens[i];
        for (int k = 1; k < n; ++k) gram += "\x1f" + tokens[i + k];
        grams.push_back(std::move(gram));
    }
    return grams;
}

} // namespace

double compression_ratio(const std::string& source, const std::string& summary) {
    const long source_words = normalize::word_count(source);
    if (source_words == 0) throw Error("compression_ratio: source is empty");
    return static_cast<double>(normalize::word_count(summary)) /
           static_cast<double>(source_words);
}

double cosine_sim(const std::string& source, const std::string& summary) {
    if (normalize::word_count(source) == 0) throw Error("cosine_sim: source is empty");
    const std::array<std::string, 2> pair_corpus = {source, summary};
    const dedup::IdfTable table = dedup::tfidf_fit(std::span<const std::string>(pair_corpus));
    return dedup::cosine(dedup::tfidf_vectorize(source, table),
                         dedup::tfidf_vectorize(summary, table));
}

double rouge_n(const std::string& reference, const std::string& candidate, int n) {
    if (n != 1 && n != 2) throw Error("rouge_n: n must be 1 or 2");
    const auto ref_grams = ngrams(content_keys(reference), n);
    const auto cand_grams = ngrams(content_keys(candidate), n);
    if (ref_grams.empty() && cand_grams.empty()) return 1.0; // identical-trivial
    if (ref_grams.empty() || cand_grams.empty()) return 0.0;

    std::unordered_map<std::string, long> ref_counts;
    for (const auto& gram : ref_grams) ++ref_counts[gram];
    std::unordered_map<std::string, long> cand_counts;
    for (const auto& gram : cand_grams) ++cand_counts[gram];

    double matches = 0.0;
    for (const auto& [gram, count] : cand_counts) {
        const auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) matches += static_cast<double>(std::min(count, it->second));
    }
    const double precision = matches / static_cast<double>(cand_grams.size());
    const double recall = matches / static_cast<double>(ref_grams.size());
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

double rouge_l(const std::string& reference, const std::string& candidate) {
    const auto ref = content_keys(reference);
    const auto cand = content_keys(candidate);
    if (ref.empty() && cand.empty()) return 1.0;
    if (ref.empty() || cand.empty()) return 0.0;

    std::vector<std::vector<long>> lcs(ref.size() + 1, std::vector<long>(cand.size() + 1, 0));
    for (std::size_t i = 1; i <= ref.size(); ++i)
        for (std::size_t j = 1; j <= cand.size(); ++j)
            lcs[i][j] = ref[i - 1] == cand[j - 1] ? lcs[i - 1][j - 1] + 1
                                                  : std::max(lcs[i - 1][j], lcs[i][j - 1]);
    const double match = static_cast<double>(lcs[ref.size()][cand.size()]);
    const double precision = match / static_cast<double>(cand.size());
    const double recall = match / static_cast<double>(ref.size());
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

double hallucination_ratio(const std::string& source, const std::string& summary) {
    if (normalize::word_count(source) == 0) throw Error("hallucination_ratio: source is empty");
    std::unordered_set<std::string> source_tokens;
    for (const auto& key : content_keys(source)) source_tokens.insert(key);

    long content = 0, novel = 0;
    for (const auto& key : content_keys(summary)) {
        if (arabic_stopwords().count(key)) continue;
        ++content;
        if (!source_tokens.count(key)) ++novel;
    }
    if (content == 0) return 0.0; // empty-content convention, flagged upstream
    return static_cast<double>(novel) / static_cast<double>(content);
}

double entity_hallucination_ratio(const std::vector<std::string>& source_companies,
                                  const std::vector<std::string>& summary_companies) {
    if (summary_companies.empty()) return 0.0;
    const std::set<std::string> in_source(source_companies.begin(), source_companies.end());
    long novel = 0;
    for (const auto& company : summary_companies)
        if (!in_source.count(company)) ++novel;
    return static_cast<double>(novel) / static_cast<double>(summary_companies.size());
}

double hybrid_score(double rouge_l_f1, double cosine) {
    return 0.5 * (rouge_l_f1 + cosine);
}

SummQualityReport summ_quality_report(
    const std::vector<std::pair<std::string, std::pair<std::string, std::string>>>&
        id_source_summary) {
    SummQualityReport report;
    report.mean.document_id = "mean";
    for (const auto& [id, texts] : id_source_summary) {
        const auto& [source, summary] = texts;
        SummQualityRow row;
        row.document_id = id;
        row.compression = compression_ratio(source, summary);
        row.cosine = cosine_sim(source, summary);
        row.rouge1 = rouge_n(source, summary, 1);
        row.rouge_l = rouge_l(source, summary);
        row.hallucination = hallucination_ratio(source, summary);
        row.hybrid = hybrid_score(row.rouge_l, row.cosine);
        if (row.compression > 1.0) ++report.flagged_expansion;
        report.mean.compression += row.compression;
        report.mean.cosine += row.cosine;
        report.mean.rouge1 += row.rouge1;
        report.mean.rouge_l += row.rouge_l;
        report.mean.hallucination += row.hallucination;
        report.mean.hybrid += row.hybrid;
        report.rows.push_back(std::move(row));
    }
    if (!report.rows.empty()) {
        const double n = static_cast<double>(report.rows.size());
        report.mean.compression /= n;
        report.mean.cosine /= n;
        report.mean.rouge1 /= n;
        report.mean.rouge_l /= n;
        report.mean.hallucination /= n;
        report.mean.hybrid /= n;
    }
    return report;
}

// ---------------------------------------------------------------------------
// Consensus aggregation
// ---------------------------------------------------------------------------

ConsensusStats consensus_stats(std::span<const ConsensusResult> results) {
    if (results.empty()) throw Error("consensus_stats: no results");
    long full = 0, majority = 0, disagreement = 0;
    long decided[5] = {};
    long decided_total = 0;
    for (const ConsensusResult& result : results) {
        switch (result.outcome) {
            case ConsensusOutcomeKind::Full: ++full; break;
            case ConsensusOutcomeKind::Majority: ++majority; break;
            case ConsensusOutcomeKind::Disagreement: ++disagreement; break;
        }
        if (result.final_label) {
            ++decided[static_cast<int>(*result.final_label)];
            ++decided_total;
        }
    }
    const double n = static_cast<double>(results.size());
    ConsensusStats stats;
    stats.full_pct = 100.0 * full / n;
    stats.majority_pct = 100.0 * majority / n;
    stats.majority_or_better_pct = 100.0 * (full + majority) / n;
    stats.disagreement_pct = 100.0 * disagreement / n;
    if (decided_total > 0)
        for (int i = 0; i < 5; ++i)
            stats.final_label_distribution[i] = 100.0 * decided[i] / decided_total;
    return stats;
}

double label_consistency(
    std::span<const std::pair<SentimentLabel, SentimentLabel>> source_summary_pairs) {
    if (source_summary_pairs.empty()) throw Error("label_consistency: no pairs");
    long equal = 0;
    for (const auto& [on_source, on_summary] : source_summary_pairs)
        if (on_source == on_summary) ++equal;
    return 100.0 * equal / static_cast<double>(source_summary_pairs.size());
}

AgreementReport agreement_report(const std::map<std::string, std::vector<SentimentLabel>>& votes,
                                 std::span<const ConsensusResult> results) {
    AgreementReport report;
    std::vector<std::string> models;
    for (const auto& [model, labels] : votes) models.push_back(model);

    for (std::size_t i = 0; i < models.size(); ++i) {
        for (std::size_t j = i + 1; j < models.size(); ++j) {
            const auto& a = votes.at(models[i]);
            const auto& b = votes.at(models[j]);
            PairwiseAgreement pair;
            pair.model_a = models[i];
            pair.model_b = models[j];
            pair.kappa = cohen_kappa(a, b);

            Distribution pa{}, pb{};
            for (SentimentLabel label : a) pa[static_cast<int>(label)] += 1.0 / a.size();
            for (SentimentLabel label : b) pb[static_cast<int>(label)] += 1.0 / b.size();
            pair.js = js_divergence(pa, pb);

            try {
                pair.pearson = pearson_ordinal(a, b);
            } catch (const DegenerateInput&) {
                pair.pearson = std::nullopt;
            }

            // Contingency table compacted to observed classes.
            std::vector<std::vector<double>> table(5, std::vector<double>(5, 0.0));
            for (std::size_t k = 0; k < a.size(); ++k)
                table[static_cast<int>(a[k])][static_cast<int>(b[k])] += 1.0;
            std::vector<std::vector<double>> compact;
            std::vector<int> keep_cols;
            for (int c = 0; c < 5; ++c) {
                double col = 0.0;
                for (int r = 0; r < 5; ++r) col += table[r][c];
                if (col > 0.0) keep_cols.push_back(c);
            }
            for (int r = 0; r < 5; ++r) {
                double row = 0.0;
                for (int c = 0; c < 5; ++c) row += table[r][c];
                if (row == 0.0) continue;
                std::vector<double> compact_row;
                for (int c : keep_cols) compact_row.push_back(table[r][c]);
                compact.push_back(std::move(compact_row));
            }
            try {
                pair.chi_square = chi_square_independence(compact);
            } catch (const DegenerateInput&) {
                pair.chi_square = {0.0, 0, 1.0};
                pair.chi_square_degenerate = true;
            }
            report.pairs.push_back(std::move(pair));
        }
    }
    if (!results.empty()) report.consensus = consensus_stats(results);
    return report;
}

json agreement_to_json(const AgreementReport& report) {
    json j;
    json pairs = json::array();
    for (const PairwiseAgreement& pair : report.pairs) {
        json p;
        p["model_a"] = pair.model_a;
        p["model_b"] = pair.model_b;
        p["cohen_kappa"] = pair.kappa;
        p["js_divergence_base2"] = pair.js;
        if (pair.pearson) p["pearson"] = *pair.pearson;
        p["chi_square"] = {{"statistic", pair.chi_square.statistic},
                           {"dof", pair.chi_square.dof},
                           {"p_value", pair.chi_square.p_value},
                           {"degenerate", pair.chi_square_degenerate}};
        pairs.push_back(std::move(p));
    }
    j["pairs"] = pairs;
    j["consensus"] = {{"full_pct", report.consensus.full_pct},
                      {"majority_pct", report.consensus.majority_pct},
                      {"majority_or_better_pct", report.consensus.majority_or_better_pct},
                      {"disagreement_pct", report.consensus.disagreement_pct}};
    json dist = json::object();
    for (SentimentLabel label : kAllLabels)
        dist[label_name(label)] = report.consensus.final_label_distribution[static_cast<int>(label)];
    j["consensus"]["final_label_distribution_pct"] = dist;
    return j;
}

// ---------------------------------------------------------------------------
// Cost-quality
// ---------------------------------------------------------------------------

std::vector<CostQualityRow> cost_quality_table(std::vector<CostQualityRow> rows,
                                               const CostQualityThresholds& thresholds) {
    if (rows.empty()) throw Error("cost_quality_table: no models");
    for (CostQualityRow& row : rows) {
        row.over_ceiling = row.cost_per_sample > thresholds.ceiling_usd_per_sample;
        if (row.over_ceiling)
            row.category = "high_cost_inefficient";
        else if (row.macro_f1 >= thresholds.f1_floor)
            row.category = "deployment_ready";
        else
            row.category = "low_cost_exploratory";
    }
    std::sort(rows.begin(), rows.end(), [](const CostQualityRow& a, const CostQualityRow& b) {
        if (a.macro_f1 != b.macro_f1) return a.macro_f1 > b.macro_f1;
        if (a.cost_usd != b.cost_usd) return a.cost_usd < b.cost_usd;
        return a.model_id < b.model_id;
    });
    return rows;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

std::string format3(double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", value);
    return buf;
}

static const char* kDisplayNames[5] = {"Strongly Neg.", "Negative", "Neutral", "Positive",
                                       "Strongly Pos."};

std::string render_summary_table(const SummQualityReport& news, const SummQualityReport& social) {
    std::ostringstream out;
    out << "| Metric | News | Social |\n";
    out << "| --- | --- | --- |\n";
    out << "| Compression Ratio | " << format3(news.mean.compression) << " | "
        << format3(social.mean.compression) << " |\n";
    out << "| Cosine Similarity | " << format3(news.mean.cosine) << " | "
        << format3(social.mean.cosine) << " |\n";
    out << "| ROUGE-1 | " << format3(news.mean.rouge1) << " | " << format3(social.mean.rouge1)
        << " |\n";
    out << "| ROUGE-L | " << format3(news.mean.rouge_l) << " | " << format3(social.mean.rouge_l)
        << " |\n";
    out << "| Hallucination Ratio | " << format3(news.mean.hallucination) << " | "
        << format3(social.mean.hallucination) << " |\n";
    return out.str();
}

std::string render_benchmark_table(
    const std::vector<std::pair<std::string, ClassificationReport>>& by_model) {
    std::ostringstream out;
    out << "| Model | Accuracy | Precision | Recall | F1 | Macro-F1 |\n";
    out << "| --- | --- | --- | --- | --- | --- |\n";
    for (const auto& [model, report] : by_model) {
        out << "| " << model << " | " << format3(report.accuracy) << " | "
            << format3(report.weighted_precision) << " | " << format3(report.weighted_recall)
            << " | " << format3(report.weighted_f1) << " | " << format3(report.macro_f1) << " |\n";
    }
    return out.str();
}

std::string render_per_class_table(const std::string& model_id,
                                   const ClassificationReport& report) {
    std::ostringstream out;
    out << "Per-class metrics: " << model_id << "\n\n";
    out << "| Class | Precision | Recall | F1-Score |\n";
    out << "| --- | --- | --- | --- |\n";
    double mp = 0.0, mr = 0.0, mf = 0.0;
    for (int c = 0; c < 5; ++c) {
        const PerClassMetrics& pc = report.per_class[c];
        out << "| " << kDisplayNames[c] << " | " << format3(pc.precision) << " | "
            << format3(pc.recall) << " | " << format3(pc.f1) << " |\n";
        mp += pc.precision / 5.0;
        mr += pc.recall / 5.0;
        mf += pc.f1 / 5.0;
    }
    out << "| Macro Avg. | " << format3(mp) << " | " << format3(mr) << " | " << format3(mf)
        << " |\n";
    return out.str();
}

std::string render_cost_quality_table(const std::vector<CostQualityRow>& rows) {
    std::ostringstream out;
    out << "| Model | Macro-F1 | Cost (USD) | Cost/Sample (USD) | Category |\n";
    out << "| --- | --- | --- | --- | --- |\n";
    for (const CostQualityRow& row : rows) {
        char per_sample[32];
        std::snprintf(per_sample, sizeof per_sample, "%.6f", row.cost_per_sample);
        out << "| " << row.model_id << " | " << format3(row.macro_f1) << " | "
            << format3(row.cost_usd) << " | " << per_sample << " | " << row.category << " |\n";
    }
    return out.str();
}

std::string cost_quality_csv(const std::vector<CostQualityRow>& rows) {
    std::ostringstream out;
    out << "model_id,macro_f1,cost_usd,cost_per_sample,category,over_ceiling\n";
    for (const CostQualityRow& row : rows) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.8f", row.macro_f1, row.cost_usd,
                      row.cost_per_sample);
        out << row.model_id << ',' << buf << ',' << row.category << ','
            << (row.over_ceiling ? "true" : "false") << "\n";
    }
    return out.str();
}

std::string summ_quality_csv(const SummQualityReport& report) {
    std::ostringstream out;
    out << "document_id,compression,cosine,rouge1,rougeL,hallucination,hybrid\n";
    auto emit = [&](const SummQualityRow& row) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f,%.6f,%.6f", row.compression,
                      row.cosine, row.rouge1, row.rouge_l, row.hallucination, row.hybrid);
        out << row.document_id << ',' << buf << "\n";
    };
    for (const SummQualityRow& row : report.rows) emit(row);
    emit(report.mean);
    return out.str();
}

} // namespace afsp::metrics
