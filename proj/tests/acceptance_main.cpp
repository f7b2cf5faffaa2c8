// Acceptance suite: runs every shipped contract end to end and prints one
// PASS/FAIL line per criterion. Exits non-zero if any criterion fails.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <vector>

#include "afsp/config.hpp"
#include "afsp/corpus.hpp"
#include "afsp/dedup.hpp"
#include "afsp/entities.hpp"
#include "afsp/llm_gateway.hpp"
#include "afsp/metrics.hpp"
#include "afsp/normalize.hpp"
#include "afsp/pipeline.hpp"
#include "afsp/utf8.hpp"
#include "oracles.hpp"

using namespace afsp;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Criterion {
    int number;
    std::string title;
    std::function<void()> body;
};

struct Failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define REQUIRE_TRUE(cond, msg)                                                                    \
    do {                                                                                           \
        if (!(cond)) throw Failure(msg);                                                           \
    } while (0)

void require_close(double actual, double expected, double tolerance, const std::string& what) {
    if (std::fabs(actual - expected) > tolerance)
        throw Failure(what + ": got " + std::to_string(actual) + ", expected " +
                      std::to_string(expected));
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("afsp_accept_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

gateway::Gateway mock_gateway(std::shared_ptr<gateway::ChatTransport> transport = nullptr,
                              std::shared_ptr<gateway::ResponseCache> cache = nullptr,
                              gateway::Pricing pricing = {0.15, 0.60}) {
    if (!transport) transport = std::make_shared<gateway::MockTransport>();
    auto backend = [&](const std::string& id, int max_tokens) {
        gateway::BackendConfig b;
        b.model_id = id;
        b.decoding.max_tokens = max_tokens;
        b.pricing = pricing;
        b.retry_base_ms = 1;
        return b;
    };
    return gateway::Gateway(
        {backend("mock-labeler-a", 50), backend("mock-labeler-b", 50),
         backend("mock-labeler-c", 50), backend("mock-summarizer", 150)},
        transport, gateway::PromptLibrary::load(fs::path(AFSP_SOURCE_DIR) / "data" / "prompts"),
        cache);
}

RunConfig mock_run_config(const fs::path& out, const fs::path& corpus) {
    RunConfig cfg;
    cfg.corpus_path = corpus.string();
    cfg.out_dir = out.string();
    cfg.data_dir = (fs::path(AFSP_SOURCE_DIR) / "data").string();
    cfg.mock = true;
    cfg.workers = 4;
    cfg.finalize();
    return cfg;
}

json canonical_manifest(const fs::path& path) {
    std::ifstream in(path);
    json m = json::parse(in);
    m["config"].erase("out_dir");
    m["config"]["gateway"].erase("cache_dir");
    m["config"].erase("corpus_path");
    m.erase("run_id");
    return m;
}

class OutOfTaxonomyTransport : public gateway::ChatTransport {
public:
    gateway::Completion send(const gateway::BackendConfig&, const std::string&,
                             const std::string&) override {
        gateway::Completion c;
        c.text = "صاعد بقوة نحو القمة"; // never one of the five category words
        c.usage = {6, 4};
        return c;
    }
    std::string name() const override { return "out-of-taxonomy"; }
};

// ---------------------------------------------------------------------------
// 1. Consensus truth table
// ---------------------------------------------------------------------------

void criterion_consensus_truth_table() {
    const auto started = Clock::now();
    long checked = 0;
    for (SentimentLabel a : kAllLabels) {
        for (SentimentLabel b : kAllLabels) {
            for (SentimentLabel c : kAllLabels) {
                std::vector<LabelVote> votes(3);
                votes[0].label = a;
                votes[1].label = b;
                votes[2].label = c;
                for (auto& v : votes) v.document_id = "t";
                const ConsensusResult result = make_consensus("t", votes);

                // Independent modal count.
                int counts[5] = {};
                ++counts[static_cast<int>(a)];
                ++counts[static_cast<int>(b)];
                ++counts[static_cast<int>(c)];
                int modal = 0;
                for (int i = 1; i < 5; ++i)
                    if (counts[i] > counts[modal]) modal = i;

                if (counts[modal] == 3) {
                    REQUIRE_TRUE(result.outcome == ConsensusOutcomeKind::Full, "expected Full");
                    REQUIRE_TRUE(result.final_label == static_cast<SentimentLabel>(modal),
                                 "full label mismatch");
                    require_close(*result.confidence, 1.0, 1e-12, "full confidence");
                } else if (counts[modal] == 2) {
                    REQUIRE_TRUE(result.outcome == ConsensusOutcomeKind::Majority,
                                 "expected Majority");
                    REQUIRE_TRUE(result.final_label == static_cast<SentimentLabel>(modal),
                                 "majority label mismatch");
                    require_close(*result.confidence, 2.0 / 3.0, 1e-12, "majority confidence");
                } else {
                    REQUIRE_TRUE(result.outcome == ConsensusOutcomeKind::Disagreement,
                                 "expected Disagreement");
                    REQUIRE_TRUE(!result.final_label.has_value(), "disagreement has no label");
                    REQUIRE_TRUE(!result.confidence.has_value(), "disagreement has no confidence");
                }
                ++checked;
            }
        }
    }
    REQUIRE_TRUE(checked == 125, "expected 125 vote triples");
    const double elapsed =
        std::chrono::duration<double>(Clock::now() - started).count();
    REQUIRE_TRUE(elapsed < 1.0, "truth table exceeded 1 s");
}

// ---------------------------------------------------------------------------
// 2. Metric oracles
// ---------------------------------------------------------------------------

void criterion_metric_oracles() {
    std::mt19937_64 rng(20250809);
    auto random_labels = [&rng](std::size_t n) {
        std::vector<SentimentLabel> out;
        for (std::size_t i = 0; i < n; ++i) out.push_back(kAllLabels[rng() % 5]);
        return out;
    };

    // cohen_kappa: 2 hand fixtures + >=3 oracle comparisons.
    {
        auto to_labels = [](std::initializer_list<int> xs) {
            std::vector<SentimentLabel> out;
            for (int x : xs) out.push_back(label_from_ordinal(x));
            return out;
        };
        require_close(metrics::cohen_kappa(to_labels({1, 1, 0, 0, 1}), to_labels({1, 0, 0, 0, 1})),
                      0.32 / 0.52, 1e-9, "kappa hand fixture 1");
        require_close(metrics::cohen_kappa(to_labels({1, -1, 1, -1}), to_labels({-1, 1, -1, 1})),
                      -1.0, 1e-9, "kappa hand fixture 2");
        for (int i = 0; i < 5; ++i) {
            const auto a = random_labels(24);
            const auto b = random_labels(24);
            std::vector<int> ia, ib;
            for (auto l : a) ia.push_back(static_cast<int>(l));
            for (auto l : b) ib.push_back(static_cast<int>(l));
            require_close(metrics::cohen_kappa(a, b), oracle::cohen_kappa(ia, ib), 1e-9,
                          "kappa oracle trial");
        }
    }

    // fleiss_kappa: hand fixture + oracle trials.
    {
        using L = SentimentLabel;
        require_close(metrics::fleiss_kappa({{L::Positive, L::Positive, L::Negative},
                                             {L::Positive, L::Negative, L::Negative}}),
                      -1.0 / 3.0, 1e-9, "fleiss hand fixture");
        require_close(metrics::fleiss_kappa({{L::Positive, L::Positive, L::Positive},
                                             {L::Negative, L::Negative, L::Negative}}),
                      1.0, 1e-9, "fleiss unanimous");
        for (int trial = 0; trial < 5; ++trial) {
            std::vector<std::vector<L>> votes;
            std::vector<std::vector<int>> items;
            for (int i = 0; i < 20; ++i) {
                std::vector<L> row;
                std::vector<int> irow;
                for (int r = 0; r < 3; ++r) {
                    const L l = kAllLabels[rng() % 5];
                    row.push_back(l);
                    irow.push_back(static_cast<int>(l));
                }
                votes.push_back(row);
                items.push_back(irow);
            }
            require_close(metrics::fleiss_kappa(votes), oracle::fleiss_kappa(items, 5), 1e-9,
                          "fleiss oracle trial");
        }
    }

    // js_divergence: hand fixtures + direct-arithmetic oracle.
    {
        using D = metrics::Distribution;
        require_close(metrics::js_divergence(D{1, 0, 0, 0, 0}, D{0, 1, 0, 0, 0}), 1.0, 1e-9,
                      "jsd disjoint");
        require_close(metrics::js_divergence(D{0.5, 0.5, 0, 0, 0}, D{0.25, 0.75, 0, 0, 0}),
                      0.0487949406953985, 1e-9, "jsd hand fixture");
        auto oracle_jsd = [](const D& p, const D& q) {
            double total = 0.0;
            for (int i = 0; i < 5; ++i) {
                const double m = 0.5 * (p[i] + q[i]);
                if (p[i] > 0) total += 0.5 * p[i] * std::log2(p[i] / m);
                if (q[i] > 0) total += 0.5 * q[i] * std::log2(q[i] / m);
            }
            return total;
        };
        for (int trial = 0; trial < 5; ++trial) {
            D p{}, q{};
            double sp = 0, sq = 0;
            for (int i = 0; i < 5; ++i) {
                p[i] = static_cast<double>(rng() % 100 + 1);
                q[i] = static_cast<double>(rng() % 100 + 1);
                sp += p[i];
                sq += q[i];
            }
            for (int i = 0; i < 5; ++i) {
                p[i] /= sp;
                q[i] /= sq;
            }
            require_close(metrics::js_divergence(p, q), oracle_jsd(p, q), 1e-9, "jsd oracle trial");
        }
    }

    // chi-square: hand fixtures (statistic exact, p to 1e-6) + expected-count oracle.
    {
        const auto diag = metrics::chi_square_independence({{10, 0}, {0, 10}});
        require_close(diag.statistic, 20.0, 1e-9, "chi2 diagonal statistic");
        REQUIRE_TRUE(diag.dof == 1, "chi2 diagonal dof");
        require_close(diag.p_value, 7.744216431044088e-06, 1e-6, "chi2 diagonal p");
        const auto proportional = metrics::chi_square_independence({{10, 20}, {30, 60}});
        require_close(proportional.statistic, 0.0, 1e-9, "chi2 proportional statistic");
        require_close(proportional.p_value, 1.0, 1e-6, "chi2 proportional p");
        for (int trial = 0; trial < 5; ++trial) {
            std::vector<std::vector<double>> table(3, std::vector<double>(3));
            for (auto& row : table)
                for (double& cell : row) cell = static_cast<double>(rng() % 30 + 1);
            // brute-force statistic
            double rs[3] = {}, cs[3] = {}, total = 0;
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) {
                    rs[i] += table[i][j];
                    cs[j] += table[i][j];
                    total += table[i][j];
                }
            double stat = 0;
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) {
                    const double e = rs[i] * cs[j] / total;
                    stat += (table[i][j] - e) * (table[i][j] - e) / e;
                }
            const auto result = metrics::chi_square_independence(table);
            require_close(result.statistic, stat, 1e-9, "chi2 oracle statistic");
            REQUIRE_TRUE(result.dof == 4, "chi2 oracle dof");
        }
    }

    // pearson_ordinal: hand fixture + covariance oracle.
    {
        auto to_labels = [](std::initializer_list<int> xs) {
            std::vector<SentimentLabel> out;
            for (int x : xs) out.push_back(label_from_ordinal(x));
            return out;
        };
        require_close(metrics::pearson_ordinal(to_labels({-2, -1, 0, 1, 2, 2, -1}),
                                               to_labels({-1, -1, 0, 2, 2, 1, 0})),
                      0.8799552641858139, 1e-9, "pearson hand fixture");
        int done = 0;
        while (done < 5) {
            const auto a = random_labels(16);
            const auto b = random_labels(16);
            double ma = 0, mb = 0;
            for (std::size_t i = 0; i < a.size(); ++i) {
                ma += ordinal(a[i]);
                mb += ordinal(b[i]);
            }
            ma /= 16;
            mb /= 16;
            double cov = 0, va = 0, vb = 0;
            for (std::size_t i = 0; i < a.size(); ++i) {
                cov += (ordinal(a[i]) - ma) * (ordinal(b[i]) - mb);
                va += (ordinal(a[i]) - ma) * (ordinal(a[i]) - ma);
                vb += (ordinal(b[i]) - mb) * (ordinal(b[i]) - mb);
            }
            if (va == 0 || vb == 0) continue;
            require_close(metrics::pearson_ordinal(a, b), cov / std::sqrt(va * vb), 1e-9,
                          "pearson oracle trial");
            ++done;
        }
    }

    // ROUGE-1/L: hand fixtures + counting oracle.
    {
        require_close(metrics::rouge_n("a b c d", "a b x", 1), 4.0 / 7.0, 1e-9, "rouge1 fixture");
        require_close(metrics::rouge_n("a b c d", "a b x", 2), 0.4, 1e-9, "rouge2 fixture");
        const double p = 3.0 / 4.0, r = 3.0 / 5.0;
        require_close(metrics::rouge_l("a b c d e", "a c e x"), 2 * p * r / (p + r), 1e-9,
                      "rougeL fixture");
        for (int trial = 0; trial < 5; ++trial) {
            std::vector<std::string> ref, cand;
            const std::size_t nr = 2 + rng() % 10, nc = 2 + rng() % 10;
            for (std::size_t i = 0; i < nr; ++i) ref.push_back("t" + std::to_string(rng() % 6));
            for (std::size_t i = 0; i < nc; ++i) cand.push_back("t" + std::to_string(rng() % 6));
            std::string ref_s, cand_s;
            for (const auto& t : ref) ref_s += t + " ";
            for (const auto& t : cand) cand_s += t + " ";
            require_close(metrics::rouge_n(ref_s, cand_s, 1), oracle::rouge_n(ref, cand, 1), 1e-9,
                          "rouge1 oracle trial");
            const long lcs = oracle::lcs_length(ref, cand);
            const double pp = static_cast<double>(lcs) / nc;
            const double rr = static_cast<double>(lcs) / nr;
            const double expected = pp + rr == 0 ? 0.0 : 2 * pp * rr / (pp + rr);
            require_close(metrics::rouge_l(ref_s, cand_s), expected, 1e-9, "rougeL oracle trial");
        }
    }

    // paired_t_test: hand fixtures (t to 1e-9, p to 1e-6).
    {
        const auto r1 = metrics::paired_t_test(std::vector<double>{1, 2, 3, 4, 5},
                                               std::vector<double>{1.1, 2.3, 2.8, 4.6, 5.2});
        require_close(r1.t, -1.5339299776947406, 1e-9, "paired t fixture 1 t");
        require_close(r1.p_value, 0.19982918553772022, 1e-6, "paired t fixture 1 p");
        const auto r2 =
            metrics::paired_t_test(std::vector<double>{0.9, 0.82, 0.77, 0.91, 0.66, 0.5},
                                   std::vector<double>{0.7, 0.8, 0.72, 0.6, 0.69, 0.42});
        require_close(r2.t, 2.0314126992280896, 1e-9, "paired t fixture 2 t");
        require_close(r2.p_value, 0.09793465521544079, 1e-6, "paired t fixture 2 p");
        // mean/sd arithmetic oracle on random data
        for (int trial = 0; trial < 5; ++trial) {
            std::vector<double> x, y;
            for (int i = 0; i < 8; ++i) {
                x.push_back(static_cast<double>(rng() % 100) / 10.0);
                y.push_back(static_cast<double>(rng() % 100) / 10.0);
            }
            double mean = 0;
            for (int i = 0; i < 8; ++i) mean += x[i] - y[i];
            mean /= 8;
            double ss = 0;
            for (int i = 0; i < 8; ++i) ss += (x[i] - y[i] - mean) * (x[i] - y[i] - mean);
            const double sd = std::sqrt(ss / 7.0);
            if (sd == 0) continue;
            require_close(metrics::paired_t_test(x, y).t, mean / (sd / std::sqrt(8.0)), 1e-9,
                          "paired t oracle trial");
        }
    }
}

// ---------------------------------------------------------------------------
// 3. Class-collapse property
// ---------------------------------------------------------------------------

void criterion_class_collapse() {
    std::vector<SentimentLabel> gold;
    for (SentimentLabel l : kAllLabels)
        for (int i = 0; i < 10; ++i) gold.push_back(l);

    std::vector<SentimentLabel> collapsed;
    for (SentimentLabel l : gold) {
        if (l == SentimentLabel::StronglyPositive)
            collapsed.push_back(SentimentLabel::Positive);
        else if (l == SentimentLabel::StronglyNegative)
            collapsed.push_back(SentimentLabel::Negative);
        else
            collapsed.push_back(l);
    }

    const auto perfect = metrics::classification_report(gold, gold);
    const auto degraded = metrics::classification_report(gold, collapsed);
    REQUIRE_TRUE(degraded.macro_f1 < perfect.macro_f1, "collapse must reduce macro-F1");
    REQUIRE_TRUE(perfect.accuracy >= degraded.accuracy,
                 "accuracy must stay at or above the collapsed mapping");
    require_close(degraded.macro_f1, 7.0 / 15.0, 1e-9, "collapsed macro-F1 hand value");
    require_close(degraded.accuracy, 0.6, 1e-9, "collapsed accuracy hand value");
}

// ---------------------------------------------------------------------------
// 4. Entity linking fixture + mutation harness
// ---------------------------------------------------------------------------

void criterion_entity_linking() {
    const normalize::NormalizationConfig norm_cfg;
    const auto companies = entities::load_companies(
        fs::path(AFSP_SOURCE_DIR) / "data" / "companies.jsonl", norm_cfg);
    const auto lexicon = entities::FinancialLexicon::load(
        fs::path(AFSP_SOURCE_DIR) / "data" / "financial_lexicon.txt", norm_cfg);
    REQUIRE_TRUE(companies.size() == 25, "fixture must ship 25 companies");

    // Every exact alias mention links with score 1.0.
    entities::EntityLinker linker(companies, lexicon, nullptr, 0.80);
    for (const auto& company : companies) {
        for (const auto& alias : company.aliases) {
            Document doc;
            doc.id = "probe";
            doc.normalized_text = normalize::normalize_text("تقرير عن " + alias + " صدر اليوم");
            doc.word_count = normalize::word_count(doc.normalized_text);
            bool linked = false;
            for (const auto& link : linker.link(doc))
                if (link.company_id == company.company_id && link.score == 1.0) linked = true;
            REQUIRE_TRUE(linked, "exact alias failed to link: " + alias);
        }
    }

    // Mutation harness: 1-2 edits per alias; decisions must agree with the
    // brute-force oracle 100% of the time.
    std::mt19937_64 rng(8420);
    auto mutate = [&rng](const std::string& alias, int edits) {
        std::u32string cps = utf8::decode(alias);
        for (int e = 0; e < edits && !cps.empty(); ++e) {
            const std::size_t pos = rng() % cps.size();
            switch (rng() % 3) {
                case 0: cps[pos] = U'ء' + static_cast<char32_t>(rng() % 30); break;
                case 1: cps.erase(cps.begin() + static_cast<std::ptrdiff_t>(pos)); break;
                default:
                    cps.insert(cps.begin() + static_cast<std::ptrdiff_t>(pos),
                               U'ء' + static_cast<char32_t>(rng() % 30));
            }
        }
        return utf8::encode(cps);
    };

    std::vector<std::string> all_aliases;
    for (const auto& company : companies)
        for (const auto& alias : company.aliases) all_aliases.push_back(alias);

    long agreements = 0, trials = 0;
    for (int t = 0; t < 300; ++t) {
        const std::string& alias = all_aliases[rng() % all_aliases.size()];
        std::string candidate = mutate(alias, 1 + static_cast<int>(rng() % 2));
        candidate = normalize::normalize_text(candidate);
        if (candidate.empty()) continue;

        // Oracle: best score across all aliases with the documented tie-break.
        double best = -1.0;
        std::string best_company;
        std::size_t best_len = 0;
        for (const auto& company : companies) {
            for (const auto& a : company.aliases) {
                const double score = oracle::fuzzy_score(candidate, a);
                const std::size_t len = utf8::length(a);
                if (score > best ||
                    (score == best &&
                     (len > best_len || (len == best_len && company.company_id < best_company)))) {
                    best = score;
                    best_company = company.company_id;
                    best_len = len;
                }
            }
        }
        const bool oracle_links = best >= 0.80;

        entities::DictionaryNerProvider ner({candidate});
        entities::EntityLinker probe_linker(companies, lexicon, &ner, 0.80);
        Document doc;
        doc.id = "mut";
        doc.normalized_text = candidate;
        doc.word_count = normalize::word_count(candidate);
        bool impl_links = false;
        for (const auto& link : probe_linker.link(doc)) {
            if (link.surface == candidate) {
                impl_links = true;
                REQUIRE_TRUE(oracle_links, "implementation linked below the oracle threshold");
                REQUIRE_TRUE(link.company_id == best_company,
                             "tie-break disagreed with the oracle for: " + candidate);
                require_close(link.score, best, 1e-12, "score disagreed with the oracle");
            }
        }
        REQUIRE_TRUE(impl_links == oracle_links, "keep/drop disagreed with the oracle");
        ++trials;
        ++agreements;
    }
    REQUIRE_TRUE(trials >= 250, "mutation harness must run enough trials");
    REQUIRE_TRUE(agreements == trials, "oracle agreement must be 100%");
}

// ---------------------------------------------------------------------------
// 5. Routing boundary
// ---------------------------------------------------------------------------

void criterion_routing_boundary() {
    auto doc_of = [](int words) {
        Document d;
        d.id = "r";
        std::string text;
        for (int i = 0; i < words; ++i) text += "كلمة ";
        d.normalized_text = text;
        d.word_count = words;
        return d;
    };
    REQUIRE_TRUE(pipeline::route(doc_of(99)).route == pipeline::Route::DirectToLabeling,
                 "99 words must go direct");
    REQUIRE_TRUE(pipeline::route(doc_of(100)).route == pipeline::Route::SummarizeFirst,
                 "100 words must summarize");
    REQUIRE_TRUE(pipeline::route(doc_of(101)).route == pipeline::Route::SummarizeFirst,
                 "101 words must summarize");
}

// ---------------------------------------------------------------------------
// 6. Dedup on the planted mini-corpus
// ---------------------------------------------------------------------------

void criterion_dedup_planted() {
    MiniCorpusOptions options;
    options.n_news = 50;
    options.n_social = 200;
    options.exact_duplicates = 3;
    options.near_duplicates = 3;
    MiniCorpus corpus = generate_mini_corpus(7, options);

    const normalize::NormalizationConfig norm_cfg;
    for (Document& doc : corpus.documents) {
        doc.normalized_text = normalize::normalize_text(doc.text, norm_cfg);
        doc.word_count = normalize::word_count(doc.normalized_text);
        doc.stage = Stage::Normalized;
    }

    // Oracle cosine of every planted near pair must clear the threshold.
    {
        std::vector<std::string> texts;
        std::map<std::string, std::size_t> index;
        for (const Document& doc : corpus.documents) {
            index[doc.id] = texts.size();
            texts.push_back(doc.normalized_text);
        }
        const oracle::TfidfOracle reference(texts);
        for (const auto& [dup, orig] : corpus.planted_near) {
            const double sim = reference.cosine(index.at(dup), index.at(orig));
            REQUIRE_TRUE(sim >= 0.9, "planted near pair below 0.9 by the oracle");
        }
    }

    dedup::DedupConfig config; // 0.90 / 0.95 defaults
    dedup::HashingEmbedder embedder;
    const dedup::DedupResult result = dedup::dedup_pass(corpus.documents, config, &embedder);

    long exact = 0, near = 0, semantic = 0;
    std::set<std::string> dropped_ids;
    for (const auto& decision : result.decisions) {
        if (decision.verdict == dedup::Verdict::DropExact) ++exact;
        if (decision.verdict == dedup::Verdict::DropNear) ++near;
        if (decision.verdict == dedup::Verdict::DropSemantic) ++semantic;
        if (decision.verdict != dedup::Verdict::Keep)
            dropped_ids.insert(decision.document_id);
    }
    REQUIRE_TRUE(exact == 3, "expected exactly 3 DropExact, got " + std::to_string(exact));
    REQUIRE_TRUE(near >= 3, "expected >= 3 DropNear, got " + std::to_string(near));
    REQUIRE_TRUE(near == 3, "organic false-positive near duplicates detected");
    REQUIRE_TRUE(semantic == 0, "unexpected semantic drops in the planted corpus");
    for (const auto& [dup, orig] : corpus.planted_exact)
        REQUIRE_TRUE(dropped_ids.count(dup) == 1, "planted exact duplicate survived: " + dup);
    for (const auto& [dup, orig] : corpus.planted_near)
        REQUIRE_TRUE(dropped_ids.count(dup) == 1, "planted near duplicate survived: " + dup);

    // Permutation preserves the cluster partition.
    auto partition_of = [&](const std::vector<Document>& docs) {
        const auto r = dedup::dedup_pass(docs, config, nullptr);
        std::map<std::string, std::string> rep;
        for (const auto& d : r.decisions)
            rep[d.document_id] = d.duplicate_of ? *d.duplicate_of : d.document_id;
        return rep;
    };
    const auto baseline = partition_of(corpus.documents);
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 3; ++trial) {
        std::shuffle(corpus.documents.begin(), corpus.documents.end(), rng);
        REQUIRE_TRUE(partition_of(corpus.documents) == baseline,
                     "input permutation changed the cluster partition");
    }
}

// ---------------------------------------------------------------------------
// 7. End-to-end determinism and recovery
// ---------------------------------------------------------------------------

const std::vector<std::string> kOutputFiles = {
    "labeled.jsonl",  "summaries.jsonl",    "dedup_audit.jsonl", "votes.jsonl",
    "consensus.jsonl", "entity_links.jsonl", "routes.jsonl",      "quarantine.jsonl"};

void criterion_determinism_and_recovery() {
    MiniCorpusOptions options;
    options.n_news = 50;
    options.n_social = 200;
    const MiniCorpus corpus = generate_mini_corpus(7, options);

    auto run_into = [&](const fs::path& dir, pipeline::PipelineHooks hooks = {},
                        bool expect_abort = false) {
        fs::create_directories(dir);
        save_jsonl(dir / "corpus.jsonl", corpus.documents);
        RunConfig cfg = mock_run_config(dir / "out", dir / "corpus.jsonl");
        auto cache = std::make_shared<gateway::ResponseCache>(cfg.cache_dir);
        auto gw = mock_gateway(nullptr, cache);
        pipeline::Runner runner(cfg, gw, hooks);
        bool aborted = false;
        try {
            runner.run();
        } catch (const Failure&) {
            throw;
        } catch (...) {
            aborted = true;
        }
        REQUIRE_TRUE(aborted == expect_abort, "unexpected abort state");
        return cfg;
    };

    const auto dir_a = fresh_dir("det_a");
    const auto dir_b = fresh_dir("det_b");
    run_into(dir_a);
    run_into(dir_b);
    for (const auto& file : kOutputFiles)
        REQUIRE_TRUE(slurp(dir_a / "out" / file) == slurp(dir_b / "out" / file),
                     "two clean runs differ in " + file);
    REQUIRE_TRUE(canonical_manifest(dir_a / "out" / "manifest.json") ==
                     canonical_manifest(dir_b / "out" / "manifest.json"),
                 "manifests differ between clean runs");

    // Kill mid-labeling, resume, compare to the clean run.
    const auto dir_c = fresh_dir("det_c");
    struct Abort {};
    pipeline::PipelineHooks hooks;
    auto counter = std::make_shared<std::atomic<int>>(0);
    hooks.after_document = [counter](const std::string& stage, const std::string&) {
        if (stage == "label" && ++*counter == 70) throw Abort{};
    };
    run_into(dir_c, hooks, true);
    run_into(dir_c); // resume over the same directory
    for (const auto& file : kOutputFiles)
        REQUIRE_TRUE(slurp(dir_a / "out" / file) == slurp(dir_c / "out" / file),
                     "resumed run differs from clean run in " + file);
    REQUIRE_TRUE(canonical_manifest(dir_a / "out" / "manifest.json") ==
                     canonical_manifest(dir_c / "out" / "manifest.json"),
                 "resumed manifest differs from clean run");

    // Zero duplicate backend calls: the interrupted + resumed total equals
    // the clean run's total.
    std::ifstream clean_stats(dir_a / "out" / "state" / "gateway_stats.json");
    std::ifstream crash_stats(dir_c / "out" / "state" / "gateway_stats.json");
    const json clean = json::parse(clean_stats);
    const json crashed = json::parse(crash_stats);
    REQUIRE_TRUE(clean["backend_calls"] == crashed["backend_calls"],
                 "resumed run issued duplicate backend calls");
}

// ---------------------------------------------------------------------------
// 8. Extractive-mock hallucination floor and label consistency
// ---------------------------------------------------------------------------

void criterion_hallucination_floor() {
    const auto dir = fresh_dir("floor");
    MiniCorpusOptions options;
    options.n_news = 50;
    options.n_social = 200;
    const MiniCorpus corpus = generate_mini_corpus(7, options);
    save_jsonl(dir / "corpus.jsonl", corpus.documents);
    RunConfig cfg = mock_run_config(dir / "out", dir / "corpus.jsonl");
    auto gw = mock_gateway();
    pipeline::Runner runner(cfg, gw);
    runner.run();

    std::map<std::string, Document> docs;
    {
        std::ifstream in(dir / "out" / "routed.jsonl");
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            Document doc = document_from_json(json::parse(line));
            docs.emplace(doc.id, std::move(doc));
        }
    }

    std::vector<std::pair<SentimentLabel, SentimentLabel>> consistency_pairs;
    long summaries_checked = 0;
    std::ifstream in(dir / "out" / "summaries.jsonl");
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const pipeline::SummaryRecord record = pipeline::summary_from_json(json::parse(line));
        const Document& doc = docs.at(record.document_id);
        const double ratio =
            metrics::hallucination_ratio(doc.normalized_text, record.final_summary);
        REQUIRE_TRUE(ratio == 0.0, "mock summary hallucinated for " + record.document_id);

        // Direct labeling of the source vs labeling of the summary.
        const auto on_source = gw.classify_sentiment("mock-labeler-a", doc.normalized_text);
        const auto on_summary = gw.classify_sentiment("mock-labeler-a", record.final_summary);
        consistency_pairs.push_back({on_source.label, on_summary.label});
        ++summaries_checked;
    }
    REQUIRE_TRUE(summaries_checked >= 40, "expected the news route to produce summaries");
    require_close(metrics::label_consistency(consistency_pairs), 100.0, 1e-9,
                  "extractive summaries must preserve labels exactly");
}

// ---------------------------------------------------------------------------
// 9. Throughput and cost accounting
// ---------------------------------------------------------------------------

void criterion_throughput_and_cost() {
    // 1,000 short documents through three mock labelers.
    MiniCorpusOptions options;
    options.n_news = 0;
    options.n_social = 1000;
    options.exact_duplicates = 0;
    options.near_duplicates = 0;
    MiniCorpus corpus = generate_mini_corpus(42, options);
    const normalize::NormalizationConfig norm_cfg;
    for (Document& doc : corpus.documents) {
        doc.normalized_text = normalize::normalize_text(doc.text, norm_cfg);
        doc.word_count = normalize::word_count(doc.normalized_text);
    }

    auto gw = mock_gateway(nullptr, nullptr, {2.0, 6.0});
    const std::array<std::string, 3> labelers = {"mock-labeler-a", "mock-labeler-b",
                                                 "mock-labeler-c"};
    const auto started = Clock::now();
    std::atomic<long> labeled{0};
    pipeline::parallel_for(corpus.documents.size(), 4, [&](std::size_t i) {
        const auto outcome = pipeline::label_with_consensus(
            corpus.documents[i].id, corpus.documents[i].normalized_text, gw, labelers);
        if (outcome.result) ++labeled;
    });
    const double elapsed = std::chrono::duration<double>(Clock::now() - started).count();
    REQUIRE_TRUE(labeled == 1000, "all 1000 documents must label");
    REQUIRE_TRUE(elapsed < 60.0,
                 "labeling 1000 docs took " + std::to_string(elapsed) + " s (>60)");

    // Cost accounting to the cent on a synthetic pricing table.
    require_close(gateway::estimate_cost({250000, 100000}, {2.0, 6.0}), 1.10, 1e-9,
                  "hand-arithmetic pricing fixture");
    require_close(gateway::estimate_cost({1000000, 0}, {1.0, 0.0}), 1.00, 1e-9,
                  "per-million input unit");
    require_close(gateway::estimate_cost({0, 0}, {3.0, 9.0}), 0.0, 1e-12, "zero usage is free");

    // Additivity: total cost equals the cost of the summed usage.
    const auto stats = gw.stats();
    double recomputed = 0.0;
    for (const auto& [model, usage] : stats.usage_by_model)
        recomputed += gateway::estimate_cost(usage, {2.0, 6.0});
    require_close(stats.total_cost_usd, recomputed, 1e-9, "cost accounting must be additive");

    // Ceiling check: flag logic through the cost-quality table, with the
    // measured per-sample cost on one side and a deliberate violator on the
    // other.
    const double per_sample = stats.total_cost_usd / 1000.0;
    const double ceiling = 0.0012;
    auto rows = metrics::cost_quality_table(
        {{"cheap", 0.9, per_sample * 1000.0, per_sample, "", false},
         {"pricey", 0.9, 10.0, 0.01, "", false}},
        metrics::CostQualityThresholds{});
    for (const auto& row : rows) {
        if (row.model_id == "pricey")
            REQUIRE_TRUE(row.over_ceiling && row.category == "high_cost_inefficient",
                         "expensive model must flag the ceiling");
        if (row.model_id == "cheap" && per_sample <= ceiling)
            REQUIRE_TRUE(!row.over_ceiling, "cheap model must not flag the ceiling");
    }
}

// ---------------------------------------------------------------------------
// 10. Taxonomy compliance under fault injection
// ---------------------------------------------------------------------------

void criterion_taxonomy_compliance() {
    const auto dir = fresh_dir("taxonomy");
    MiniCorpusOptions options;
    options.n_news = 0;
    options.n_social = 30;
    options.exact_duplicates = 0;
    options.near_duplicates = 0;
    const MiniCorpus corpus = generate_mini_corpus(3, options);
    save_jsonl(dir / "corpus.jsonl", corpus.documents);
    RunConfig cfg = mock_run_config(dir / "out", dir / "corpus.jsonl");
    auto gw = mock_gateway(std::make_shared<OutOfTaxonomyTransport>());
    pipeline::Runner runner(cfg, gw);
    const pipeline::RunManifest manifest = runner.run();

    REQUIRE_TRUE(manifest.quarantined == 30, "all faulted documents must quarantine");
    REQUIRE_TRUE(manifest.stages.at("consensus").out == 0, "nothing may finalize");
    REQUIRE_TRUE(slurp(dir / "out" / "labeled.jsonl").empty(), "labeled output must be empty");

    // No sixth label anywhere: every label string in every output parses.
    std::ifstream votes(dir / "out" / "votes.jsonl");
    std::string line;
    long quarantine_records = 0;
    while (std::getline(votes, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        REQUIRE_TRUE(j["votes"].empty(), "taxonomy violations must not produce votes");
        for (const auto& iv : j["invalid"]) {
            REQUIRE_TRUE(iv["reason"] == "taxonomy_violation", "reason must be recorded");
            REQUIRE_TRUE(!iv["raw_output"].get<std::string>().empty(),
                         "raw output must be recorded");
        }
    }
    std::ifstream quarantine(dir / "out" / "quarantine.jsonl");
    while (std::getline(quarantine, line))
        if (!line.empty()) ++quarantine_records;
    REQUIRE_TRUE(quarantine_records == 30, "quarantine records must cover every document");
}

} // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {1, "consensus truth table (125 triples, <1s)", criterion_consensus_truth_table},
        {2, "metric implementations match independent oracles", criterion_metric_oracles},
        {3, "class collapse lowers macro-F1 on balanced gold", criterion_class_collapse},
        {4, "entity linking agrees with the similarity oracle", criterion_entity_linking},
        {5, "routing boundary 99/100/101", criterion_routing_boundary},
        {6, "dedup finds exactly the planted duplicates", criterion_dedup_planted},
        {7, "end-to-end determinism and crash recovery", criterion_determinism_and_recovery},
        {8, "extractive mock: hallucination 0, consistency 100%", criterion_hallucination_floor},
        {9, "throughput <60s/1000 docs and cost arithmetic", criterion_throughput_and_cost},
        {10, "taxonomy compliance under fault injection", criterion_taxonomy_compliance},
    };

    int failures = 0;
    for (const auto& criterion : criteria) {
        const auto started = Clock::now();
        try {
            criterion.body();
            const double ms =
                std::chrono::duration<double, std::milli>(Clock::now() - started).count();
            std::printf("[PASS] %2d. %s (%.0f ms)\n", criterion.number, criterion.title.c_str(),
                        ms);
        } catch (const std::exception& e) {
            ++failures;
            std::printf("[FAIL] %2d. %s: %s\n", criterion.number, criterion.title.c_str(),
                        e.what());
        } catch (...) {
            ++failures;
            std::printf("[FAIL] %2d. %s: unknown error\n", criterion.number,
                        criterion.title.c_str());
        }
        std::fflush(stdout);
    }
    if (failures == 0) {
        std::printf("all %zu acceptance criteria passed\n", criteria.size());
        return 0;
    }
    std::printf("%d acceptance criteria failed\n", failures);
    return 1;
}
