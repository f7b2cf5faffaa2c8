#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include "afsp/config.hpp"
#include "afsp/corpus.hpp"
#include "afsp/metrics.hpp"
#include "afsp/pipeline.hpp"

using namespace afsp;

namespace {

struct CliOverrides {
    std::string config_path;
    std::string corpus;
    std::string out;
    std::string data_dir;
    bool mock = false;
    int workers = 0;
    double link_threshold = 0.0;
    int route_boundary = 0;
    bool no_cache = false;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "run config file (JSON)");
        cmd->add_option("--corpus", corpus, "corpus JSONL path");
        cmd->add_option("--out", out, "run output directory");
        cmd->add_option("--data-dir", data_dir, "fixtures directory (prompts, companies, lexicon)");
        cmd->add_flag("--mock", mock, "use the offline rule-based mock backends");
        cmd->add_option("--workers", workers, "worker threads");
        cmd->add_option("--link-threshold", link_threshold, "entity link threshold (default 0.80)");
        cmd->add_option("--route-boundary", route_boundary, "summarization word boundary (default 100)");
        cmd->add_flag("--no-cache", no_cache, "disable the response cache");
    }

    RunConfig resolve() const {
        RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::from_file(config_path);
        if (!corpus.empty()) cfg.corpus_path = corpus;
        if (!out.empty()) cfg.out_dir = out;
        if (!data_dir.empty()) cfg.data_dir = data_dir;
        if (mock) cfg.mock = true;
        if (workers > 0) cfg.workers = workers;
        if (link_threshold > 0.0) cfg.link_threshold = link_threshold;
        if (route_boundary > 0) cfg.route_boundary = route_boundary;
        if (no_cache) cfg.cache_enabled = false;
        cfg.finalize();
        return cfg;
    }
};

gateway::Gateway make_gateway(const RunConfig& cfg) {
    std::shared_ptr<gateway::ChatTransport> transport;
    if (cfg.mock)
        transport = std::make_shared<gateway::MockTransport>();
    else
        transport = std::make_shared<gateway::HttpTransport>();
    std::shared_ptr<gateway::ResponseCache> cache;
    if (cfg.cache_enabled) cache = std::make_shared<gateway::ResponseCache>(cfg.cache_dir);
    return gateway::Gateway(cfg.backends, transport, gateway::PromptLibrary::load(cfg.prompts_dir()),
                            cache);
}

std::vector<json> read_jsonl_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("missing input file " + path.string());
    std::vector<json> records;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (!j.is_discarded()) records.push_back(std::move(j));
    }
    return records;
}

void write_text(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw StorageError("cannot write " + path.string());
    out << content;
}

// Exit 1 when the per-document error share exceeds the configured threshold.
int exit_code_for_errors(const RunConfig& cfg) {
    const auto counts_path = std::filesystem::path(cfg.out_dir) / "state" / "stage_counts.json";
    std::ifstream in(counts_path);
    if (!in) return 0;
    json counts = json::parse(in, nullptr, false);
    if (counts.is_discarded()) return 0;
    long ingested = 0, errored = 0;
    for (const auto& [stage, c] : counts.items()) {
        if (stage == "ingest") ingested = c.value("in", 0L);
        errored += c.value("errored", 0L);
    }
    if (ingested == 0) return 0;
    const double share = static_cast<double>(errored) / static_cast<double>(ingested);
    return share > cfg.error_exit_threshold ? 1 : 0;
}

int cmd_gen_corpus(std::uint64_t seed, int n_news, int n_social, int exact_dups, int near_dups,
                   const std::string& out_file, const std::string& gold_file) {
    MiniCorpusOptions options;
    options.n_news = n_news;
    options.n_social = n_social;
    options.exact_duplicates = exact_dups;
    options.near_duplicates = near_dups;
    const MiniCorpus corpus = generate_mini_corpus(seed, options);
    save_jsonl(out_file, corpus.documents);

    std::ofstream gold(gold_file, std::ios::trunc);
    if (!gold) throw StorageError("cannot write " + gold_file);
    for (const Document& doc : corpus.documents) {
        json j;
        j["id"] = doc.id;
        j["label"] = label_name(corpus.gold.at(doc.id));
        gold << j.dump() << "\n";
    }
    json plan;
    plan["exact"] = corpus.planted_exact;
    plan["near"] = corpus.planted_near;
    gold << json{{"id", "__planted__"}, {"plan", plan}}.dump() << "\n";
    std::cerr << "wrote " << corpus.documents.size() << " documents to " << out_file << "\n";
    return 0;
}

struct VotesFile {
    // model -> aligned labels over documents where all listed models voted
    std::map<std::string, std::vector<SentimentLabel>> aligned;
    std::map<std::string, std::map<std::string, SentimentLabel>> by_doc_model;
    std::vector<std::string> doc_order;
};

VotesFile load_votes(const std::filesystem::path& path) {
    VotesFile votes;
    std::set<std::string> models;
    std::map<std::string, std::map<std::string, SentimentLabel>> per_doc;
    for (const json& j : read_jsonl_file(path)) {
        const std::string doc_id = j.at("document_id").get<std::string>();
        votes.doc_order.push_back(doc_id);
        for (const json& vj : j.at("votes")) {
            const std::string model = vj.at("model_id").get<std::string>();
            models.insert(model);
            per_doc[doc_id][model] = label_from_name(vj.at("label").get<std::string>());
        }
    }
    votes.by_doc_model = per_doc;
    for (const std::string& doc_id : votes.doc_order) {
        const auto& doc_votes = per_doc[doc_id];
        if (doc_votes.size() != models.size()) continue; // only fully-voted docs align
        for (const auto& [model, label] : doc_votes) votes.aligned[model].push_back(label);
    }
    return votes;
}

std::optional<SentimentLabel> consensus_label_of(const std::map<std::string, SentimentLabel>& votes,
                                                 const std::string& doc_id) {
    if (votes.size() < 2) return std::nullopt;
    std::vector<LabelVote> cast;
    for (const auto& [model, label] : votes) {
        LabelVote vote;
        vote.document_id = doc_id;
        vote.model_id = model;
        vote.label = label;
        cast.push_back(std::move(vote));
    }
    const ConsensusResult result = make_consensus(doc_id, cast);
    return result.final_label;
}

int cmd_evaluate(const RunConfig& cfg, const std::string& gold_path) {
    const std::filesystem::path out(cfg.out_dir);
    const auto reports_dir = out / "reports";
    std::filesystem::create_directories(reports_dir);

    // Documents and routes.
    std::map<std::string, Document> docs;
    std::vector<std::string> doc_order;
    for (const json& j : read_jsonl_file(out / "routed.jsonl")) {
        Document doc = document_from_json(j);
        doc_order.push_back(doc.id);
        docs.emplace(doc.id, std::move(doc));
    }

    // Agreement over votes + consensus results.
    const VotesFile votes = load_votes(out / "votes.jsonl");
    std::vector<ConsensusResult> consensus;
    for (const json& j : read_jsonl_file(out / "consensus.jsonl"))
        consensus.push_back(consensus_from_json(j));
    const metrics::AgreementReport agreement = metrics::agreement_report(votes.aligned, consensus);
    write_text(reports_dir / "agreement.json", metrics::agreement_to_json(agreement).dump(2) + "\n");

    // Summarization quality, split by source.
    std::vector<std::pair<std::string, std::pair<std::string, std::string>>> news_pairs,
        social_pairs;
    for (const json& j : read_jsonl_file(out / "summaries.jsonl")) {
        const pipeline::SummaryRecord record = pipeline::summary_from_json(j);
        const auto it = docs.find(record.document_id);
        if (it == docs.end()) continue;
        auto& bucket = it->second.source == Source::News ? news_pairs : social_pairs;
        bucket.push_back({record.document_id,
                          {it->second.normalized_text, record.final_summary}});
    }
    const metrics::SummQualityReport news_quality = metrics::summ_quality_report(news_pairs);
    const metrics::SummQualityReport social_quality = metrics::summ_quality_report(social_pairs);
    json summ;
    auto quality_json = [](const metrics::SummQualityReport& r) {
        return json{{"count", r.rows.size()},
                    {"compression", r.mean.compression},
                    {"cosine", r.mean.cosine},
                    {"rouge1", r.mean.rouge1},
                    {"rougeL", r.mean.rouge_l},
                    {"hallucination", r.mean.hallucination},
                    {"hybrid", r.mean.hybrid},
                    {"flagged_expansion", r.flagged_expansion}};
    };
    summ["news"] = quality_json(news_quality);
    summ["social"] = quality_json(social_quality);
    write_text(reports_dir / "summ_quality.json", summ.dump(2) + "\n");
    metrics::SummQualityReport all_quality;
    {
        auto merged = news_pairs;
        merged.insert(merged.end(), social_pairs.begin(), social_pairs.end());
        all_quality = metrics::summ_quality_report(merged);
    }
    write_text(reports_dir / "summ_quality.csv", metrics::summ_quality_csv(all_quality));

    // Label consistency (needs label_sources in the labeling run).
    if (std::filesystem::exists(out / "source_votes.jsonl")) {
        const VotesFile source_votes = load_votes(out / "source_votes.jsonl");
        std::vector<std::pair<SentimentLabel, SentimentLabel>> pairs;
        for (const auto& [doc_id, models] : source_votes.by_doc_model) {
            const auto summary_it = votes.by_doc_model.find(doc_id);
            if (summary_it == votes.by_doc_model.end()) continue;
            const auto on_source = consensus_label_of(models, doc_id);
            const auto on_summary = consensus_label_of(summary_it->second, doc_id);
            if (on_source && on_summary) pairs.push_back({*on_source, *on_summary});
        }
        if (!pairs.empty()) {
            json consistency;
            consistency["pairs"] = pairs.size();
            consistency["label_consistency_pct"] = metrics::label_consistency(pairs);
            write_text(reports_dir / "consistency.json", consistency.dump(2) + "\n");
        }
    }

    // Benchmark + cost-quality need gold labels.
    if (!gold_path.empty()) {
        std::map<std::string, SentimentLabel> gold;
        for (const json& j : read_jsonl_file(gold_path)) {
            const std::string id = j.at("id").get<std::string>();
            if (id == "__planted__") continue;
            gold[id] = label_from_name(j.at("label").get<std::string>());
        }

        json benchmark = json::object();
        std::vector<std::pair<std::string, metrics::ClassificationReport>> by_model;
        std::map<std::string, long> samples_by_model;
        for (const auto& [model, labels] : votes.aligned) {
            std::vector<SentimentLabel> gold_seq, pred_seq;
            std::size_t row = 0;
            for (const std::string& doc_id : votes.doc_order) {
                const auto& doc_votes = votes.by_doc_model.at(doc_id);
                if (doc_votes.size() != votes.aligned.size()) continue;
                const auto git = gold.find(doc_id);
                if (git != gold.end()) {
                    gold_seq.push_back(git->second);
                    pred_seq.push_back(labels[row]);
                }
                ++row;
            }
            if (gold_seq.empty()) continue;
            auto report = metrics::classification_report(gold_seq, pred_seq);
            benchmark[model] = metrics::report_to_json(report);
            samples_by_model[model] = static_cast<long>(gold_seq.size());
            by_model.push_back({model, std::move(report)});
        }
        // Consensus as a pseudo-model over finalized docs.
        {
            std::vector<SentimentLabel> gold_seq, pred_seq;
            for (const ConsensusResult& result : consensus) {
                if (!result.final_label) continue;
                const auto git = gold.find(result.document_id);
                if (git == gold.end()) continue;
                gold_seq.push_back(git->second);
                pred_seq.push_back(*result.final_label);
            }
            if (!gold_seq.empty())
                benchmark["consensus"] =
                    metrics::report_to_json(metrics::classification_report(gold_seq, pred_seq));
        }
        write_text(reports_dir / "benchmark.json", benchmark.dump(2) + "\n");

        // Cost per labeler from merged usage; quality from the benchmark.
        json gw_state = json::object();
        {
            std::ifstream in(out / "state" / "gateway_stats.json");
            if (in) gw_state = json::parse(in, nullptr, false);
            if (gw_state.is_discarded()) gw_state = json::object();
        }
        std::vector<metrics::CostQualityRow> rows;
        for (const auto& [model, report] : by_model) {
            metrics::CostQualityRow row;
            row.model_id = model;
            row.macro_f1 = report.macro_f1;
            if (gw_state.contains("usage_by_model") && gw_state["usage_by_model"].contains(model)) {
                TokenUsage usage;
                usage.input_tokens = gw_state["usage_by_model"][model].value("input_tokens", 0L);
                usage.output_tokens = gw_state["usage_by_model"][model].value("output_tokens", 0L);
                for (const auto& backend : cfg.backends)
                    if (backend.model_id == model)
                        row.cost_usd = gateway::estimate_cost(usage, backend.pricing);
            }
            const long samples = samples_by_model[model];
            row.cost_per_sample = samples > 0 ? row.cost_usd / static_cast<double>(samples) : 0.0;
            rows.push_back(std::move(row));
        }
        if (!rows.empty()) {
            rows = metrics::cost_quality_table(rows, cfg.cost_quality);
            json cq = json::array();
            for (const auto& row : rows)
                cq.push_back(json{{"model_id", row.model_id},
                                  {"macro_f1", row.macro_f1},
                                  {"cost_usd", row.cost_usd},
                                  {"cost_per_sample", row.cost_per_sample},
                                  {"category", row.category},
                                  {"over_ceiling", row.over_ceiling}});
            write_text(reports_dir / "cost_quality.json", cq.dump(2) + "\n");
            write_text(reports_dir / "cost_quality.csv", metrics::cost_quality_csv(rows));
        }
    }
    std::cerr << "reports written to " << reports_dir.string() << "\n";
    return 0;
}

int cmd_report(const RunConfig& cfg, int like_table, std::string model_id) {
    const std::filesystem::path reports = std::filesystem::path(cfg.out_dir) / "reports";
    auto require = [&](const std::string& file) {
        const auto path = reports / file;
        std::ifstream in(path);
        if (!in) throw ConfigError("missing " + path.string() + "; run `evaluate` first");
        json j = json::parse(in, nullptr, false);
        if (j.is_discarded()) throw ConfigError("unreadable report " + path.string());
        return j;
    };

    std::string rendered;
    if (like_table == 1) {
        const json summ = require("summ_quality.json");
        auto report_of = [](const json& j) {
            metrics::SummQualityReport r;
            r.mean.compression = j.value("compression", 0.0);
            r.mean.cosine = j.value("cosine", 0.0);
            r.mean.rouge1 = j.value("rouge1", 0.0);
            r.mean.rouge_l = j.value("rougeL", 0.0);
            r.mean.hallucination = j.value("hallucination", 0.0);
            r.mean.hybrid = j.value("hybrid", 0.0);
            return r;
        };
        rendered = metrics::render_summary_table(report_of(summ["news"]), report_of(summ["social"]));
    } else if (like_table == 2 || like_table == 3) {
        const json benchmark = require("benchmark.json");
        std::vector<std::pair<std::string, metrics::ClassificationReport>> by_model;
        for (const auto& [model, rj] : benchmark.items()) {
            metrics::ClassificationReport report;
            report.accuracy = rj.value("accuracy", 0.0);
            report.weighted_precision = rj.value("weighted_precision", 0.0);
            report.weighted_recall = rj.value("weighted_recall", 0.0);
            report.weighted_f1 = rj.value("weighted_f1", 0.0);
            report.macro_f1 = rj.value("macro_f1", 0.0);
            if (rj.contains("per_class"))
                for (SentimentLabel label : kAllLabels) {
                    const json& pc = rj["per_class"][label_name(label)];
                    auto& slot = report.per_class[static_cast<int>(label)];
                    slot.precision = pc.value("precision", 0.0);
                    slot.recall = pc.value("recall", 0.0);
                    slot.f1 = pc.value("f1", 0.0);
                    slot.support = pc.value("support", 0L);
                }
            by_model.push_back({model, std::move(report)});
        }
        if (like_table == 2) {
            std::sort(by_model.begin(), by_model.end(), [](const auto& a, const auto& b) {
                if (a.second.macro_f1 != b.second.macro_f1)
                    return a.second.macro_f1 > b.second.macro_f1;
                return a.first < b.first;
            });
            rendered = metrics::render_benchmark_table(by_model);
        } else {
            if (model_id.empty()) {
                double best = -1.0;
                for (const auto& [model, report] : by_model)
                    if (report.macro_f1 > best) {
                        best = report.macro_f1;
                        model_id = model;
                    }
            }
            for (const auto& [model, report] : by_model)
                if (model == model_id) rendered = metrics::render_per_class_table(model, report);
            if (rendered.empty())
                throw ConfigError("model \"" + model_id + "\" not present in benchmark.json");
        }
    } else if (like_table == 4) {
        const json cq = require("cost_quality.json");
        std::vector<metrics::CostQualityRow> rows;
        for (const json& rj : cq) {
            metrics::CostQualityRow row;
            row.model_id = rj.value("model_id", "");
            row.macro_f1 = rj.value("macro_f1", 0.0);
            row.cost_usd = rj.value("cost_usd", 0.0);
            row.cost_per_sample = rj.value("cost_per_sample", 0.0);
            row.category = rj.value("category", "");
            rows.push_back(std::move(row));
        }
        rendered = metrics::render_cost_quality_table(rows);
    } else {
        throw ConfigError("--like-table must be 1 (summarization), 2 (benchmark), "
                          "3 (per-class) or 4 (cost-quality)");
    }
    std::cout << rendered;
    write_text(reports / ("table" + std::to_string(like_table) + ".md"), rendered);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"afsp: Arabic financial sentiment pipeline"};
    app.require_subcommand(1);

    // gen-corpus
    std::uint64_t seed = 7;
    int n_news = 50, n_social = 200, exact_dups = 3, near_dups = 3;
    std::string corpus_out = "corpus.jsonl", gold_out = "gold.jsonl";
    auto* gen = app.add_subcommand("gen-corpus", "generate the synthetic mini-corpus");
    gen->add_option("--seed", seed, "deterministic seed");
    gen->add_option("--news", n_news, "news documents");
    gen->add_option("--social", n_social, "social documents");
    gen->add_option("--exact-dups", exact_dups, "planted exact duplicates");
    gen->add_option("--near-dups", near_dups, "planted near duplicates");
    gen->add_option("--out-file", corpus_out, "corpus output path");
    gen->add_option("--gold-file", gold_out, "gold labels output path");

    // stage commands + run
    std::map<std::string, CliOverrides> overrides;
    std::map<std::string, CLI::App*> stage_cmds;
    for (const std::string name : {"ingest", "normalize", "dedup", "link", "summarize", "label",
                                   "consensus", "run", "evaluate", "report"}) {
        auto* cmd = app.add_subcommand(name, name + " stage");
        overrides[name].attach(cmd);
        stage_cmds[name] = cmd;
    }
    stage_cmds["run"]->description("full pipeline: ingest through consensus plus manifest");
    bool label_sources_flag = false;
    stage_cmds["label"]->add_flag("--label-sources", label_sources_flag,
                                  "also label originals of summarized docs");
    stage_cmds["run"]->add_flag("--label-sources", label_sources_flag,
                                "also label originals of summarized docs");
    std::string gold_path;
    stage_cmds["evaluate"]->add_option("--gold", gold_path, "gold labels JSONL (from gen-corpus)");
    int like_table = 0;
    std::string report_model;
    stage_cmds["report"]->add_option("--like-table", like_table, "table shape: 1..4")->required();
    stage_cmds["report"]->add_option("--model", report_model, "model for the per-class table");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed())
            return cmd_gen_corpus(seed, n_news, n_social, exact_dups, near_dups, corpus_out,
                                  gold_out);

        std::string active;
        for (const auto& [name, cmd] : stage_cmds)
            if (cmd->parsed()) active = name;
        RunConfig cfg = overrides.at(active).resolve();
        if (label_sources_flag) cfg.label_sources = true;

        if (active == "evaluate") return cmd_evaluate(cfg, gold_path);
        if (active == "report") return cmd_report(cfg, like_table, report_model);

        gateway::Gateway gw = make_gateway(cfg);
        pipeline::Runner runner(cfg, gw);
        if (active == "run") {
            runner.run();
        } else if (active == "ingest") {
            runner.stage_ingest();
        } else if (active == "normalize") {
            runner.stage_normalize();
        } else if (active == "dedup") {
            runner.stage_dedup();
        } else if (active == "link") {
            runner.stage_link();
        } else if (active == "summarize") {
            runner.stage_summarize();
        } else if (active == "label") {
            runner.stage_label();
        } else if (active == "consensus") {
            runner.stage_consensus();
            runner.finalize_manifest();
        }
        return exit_code_for_errors(cfg);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
}
