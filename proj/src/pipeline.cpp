#include "afsp/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <thread>

#include "afsp/dedup.hpp"
#include "afsp/normalize.hpp"

namespace afsp::pipeline {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

json read_json_file(const std::filesystem::path& path, const json& fallback) {
    std::ifstream in(path);
    if (!in) return fallback;
    json j = json::parse(in, nullptr, false);
    return j.is_discarded() ? fallback : j;
}

void write_json_file(const std::filesystem::path& path, const json& j) {
    const auto tmp = path.parent_path() / (path.filename().string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw StorageError("cannot write " + path.string());
        out << j.dump(2) << "\n";
    }
    std::filesystem::rename(tmp, path);
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
    const auto tmp = path.parent_path() / (path.filename().string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw StorageError("cannot write " + path.string());
        for (const auto& line : lines) out << line << "\n";
    }
    std::filesystem::rename(tmp, path);
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("missing input file " + path.string());
    std::vector<json> records;
    std::string line;
    long line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw ParseError(path.string() + ": line " + std::to_string(line_number) +
                                 ": malformed JSON",
                             line_number);
        records.push_back(std::move(j));
    }
    return records;
}

std::string file_digest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return "missing";
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return fnv1a_hex(content);
}

json invalid_to_json(const InvalidVote& invalid) {
    return json{{"model_id", invalid.model_id},
                {"raw_output", invalid.raw_output},
                {"reason", invalid.reason}};
}

InvalidVote invalid_from_json(const json& j) {
    return {j.at("model_id").get<std::string>(), j.value("raw_output", ""),
            j.value("reason", "")};
}

} // namespace

// ---------------------------------------------------------------------------
// Routing / summarization / consensus primitives
// ---------------------------------------------------------------------------

RouteDecision route(const Document& doc, int boundary) {
    RouteDecision decision;
    decision.document_id = doc.id;
    decision.word_count = doc.word_count;
    decision.route =
        doc.word_count < boundary ? Route::DirectToLabeling : Route::SummarizeFirst;
    return decision;
}

json route_to_json(const RouteDecision& decision) {
    return json{{"document_id", decision.document_id},
                {"route", decision.route == Route::DirectToLabeling ? "direct" : "summarize_first"},
                {"word_count", decision.word_count}};
}

RouteDecision route_from_json(const json& j) {
    RouteDecision decision;
    decision.document_id = j.at("document_id").get<std::string>();
    decision.route = j.at("route").get<std::string>() == "direct" ? Route::DirectToLabeling
                                                                  : Route::SummarizeFirst;
    decision.word_count = j.value("word_count", 0L);
    return decision;
}

json summary_to_json(const SummaryRecord& record) {
    return json{{"document_id", record.document_id},
                {"chunk_summaries", record.chunk_summaries},
                {"final_summary", record.final_summary},
                {"backend_id", record.backend_id},
                {"usage", {{"input_tokens", record.usage_total.input_tokens},
                           {"output_tokens", record.usage_total.output_tokens}}}};
}

SummaryRecord summary_from_json(const json& j) {
    SummaryRecord record;
    record.document_id = j.at("document_id").get<std::string>();
    record.chunk_summaries = j.value("chunk_summaries", std::vector<std::string>{});
    record.final_summary = j.at("final_summary").get<std::string>();
    record.backend_id = j.value("backend_id", "");
    if (j.contains("usage")) {
        record.usage_total.input_tokens = j["usage"].value("input_tokens", 0L);
        record.usage_total.output_tokens = j["usage"].value("output_tokens", 0L);
    }
    return record;
}

std::vector<std::string> chunk_by_sentences(const std::string& text, int chunk_words) {
    std::vector<std::string> chunks;
    std::string current;
    long current_words = 0;
    for (const std::string& sentence : normalize::split_sentences(text)) {
        const long words = normalize::word_count(sentence);
        if (current_words > 0 && current_words + words > chunk_words) {
            chunks.push_back(current);
            current.clear();
            current_words = 0;
        }
        if (!current.empty()) current += ' ';
        current += sentence;
        current_words += words;
    }
    if (!current.empty()) chunks.push_back(current);
    return chunks;
}

SummaryRecord summarize_document(const Document& doc, gateway::Gateway& gw,
                                 const std::string& backend_id, int chunk_words) {
    SummaryRecord record;
    record.document_id = doc.id;
    record.backend_id = backend_id;

    const std::string& text = doc.normalized_text;
    if (doc.word_count <= chunk_words) {
        auto outcome = gw.summarize(backend_id, text);
        record.final_summary = outcome.text;
        record.usage_total = outcome.usage;
        return record;
    }

    for (const std::string& chunk : chunk_by_sentences(text, chunk_words)) {
        auto outcome = gw.summarize(backend_id, chunk);
        record.chunk_summaries.push_back(outcome.text);
        record.usage_total += outcome.usage;
    }
    auto final_outcome = gw.consolidate(backend_id, record.chunk_summaries);
    record.final_summary = final_outcome.text;
    record.usage_total += final_outcome.usage;
    return record;
}

LabelOutcome collect_votes(const std::string& document_id, const std::string& text,
                           gateway::Gateway& gw, const std::array<std::string, 3>& backends) {
    LabelOutcome outcome;
    for (const std::string& model_id : backends) {
        try {
            const auto result = gw.classify_sentiment(model_id, text);
            LabelVote vote;
            vote.document_id = document_id;
            vote.model_id = model_id;
            vote.label = result.label;
            vote.latency_ms = result.latency_ms;
            vote.usage = result.usage;
            outcome.valid.push_back(std::move(vote));
        } catch (const TaxonomyViolation& e) {
            outcome.invalid.push_back({model_id, e.raw_output, "taxonomy_violation"});
        } catch (const BackendError& e) {
            outcome.invalid.push_back({model_id, e.what(), "backend_error"});
        }
    }
    return outcome;
}

ConsensusOutcome label_with_consensus(const std::string& document_id, const std::string& text,
                                      gateway::Gateway& gw,
                                      const std::array<std::string, 3>& backends) {
    const LabelOutcome votes = collect_votes(document_id, text, gw, backends);
    ConsensusOutcome outcome;
    outcome.invalid = votes.invalid;
    if (votes.valid.size() < 2) {
        outcome.quarantined = true;
        return outcome;
    }
    outcome.result = make_consensus(document_id, votes.valid);
    return outcome;
}

void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& body) {
    if (count == 0) return;
    const int n_threads = std::max(1, std::min<int>(workers, static_cast<int>(count)));
    if (n_threads == 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::mutex error_mutex;
    std::exception_ptr first_error;

    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) {
        pool.emplace_back([&] {
            while (!failed.load(std::memory_order_relaxed)) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                    failed.store(true, std::memory_order_relaxed);
                    return;
                }
            }
        });
    }
    for (auto& thread : pool) thread.join();
    if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

json RunManifest::to_json() const {
    json j;
    j["run_id"] = run_id;
    j["config"] = config_snapshot;
    json stage_json = json::object();
    for (const auto& [name, counts] : stages)
        stage_json[name] = {{"in", counts.in},
                            {"out", counts.out},
                            {"dropped", counts.dropped},
                            {"errored", counts.errored}};
    j["stages"] = stage_json;
    j["totals"] = {{"total_cost_usd", total_cost_usd},
                   {"backend_calls", backend_calls},
                   {"cache_hits", cache_hits},
                   {"truncation_warnings", truncation_warnings},
                   {"quarantined", quarantined},
                   {"semantic_degraded", semantic_degraded},
                   {"ner_degraded", ner_degraded}};
    return j;
}

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

Runner::Runner(RunConfig config, gateway::Gateway& gw, PipelineHooks hooks)
    : config_(std::move(config)), gateway_(gw), hooks_(std::move(hooks)), out_(config_.out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_ / "state", ec);
    if (ec) throw StorageError("cannot create run directory " + out_.string());
    checkpoints_ = std::make_shared<CheckpointStore>(out_ / "checkpoints");
    last_merged_ = gateway_.stats();

    if (!config_.ner_endpoint.empty() && !config_.mock) {
        ner_ = std::make_unique<entities::HttpNerProvider>(config_.ner_endpoint, "/ner");
    } else {
        // Reference provider: dictionary over the alias table.
        std::vector<std::string> forms;
        for (const auto& company :
             entities::load_companies(config_.companies_path, config_.normalization))
            for (const auto& alias : company.aliases) forms.push_back(alias);
        ner_ = std::make_unique<entities::DictionaryNerProvider>(std::move(forms));
    }
}

entities::EntityLinker Runner::make_linker() {
    return entities::EntityLinker(
        entities::load_companies(config_.companies_path, config_.normalization),
        entities::FinancialLexicon::load(config_.lexicon_path, config_.normalization), ner_.get(),
        config_.link_threshold);
}

std::vector<Document> Runner::load_stage_docs(const std::string& file,
                                              const std::string& needed_by) {
    const auto path = out_ / file;
    if (!std::filesystem::exists(path))
        throw ConfigError("missing " + path.string() + "; run the stage before `" + needed_by +
                          "`");
    std::vector<Document> docs;
    for (const json& j : read_jsonl(path)) docs.push_back(document_from_json(j));
    return docs;
}

void Runner::persist_counts(const std::string& stage, const StageCounts& counts, double wall) {
    json state = read_json_file(out_ / "state" / "stage_counts.json", json::object());
    state[stage] = {{"in", counts.in},
                    {"out", counts.out},
                    {"dropped", counts.dropped},
                    {"errored", counts.errored}};
    write_json_file(out_ / "state" / "stage_counts.json", state);

    json timings = read_json_file(out_ / "state" / "timings.json", json::object());
    timings[stage] = wall;
    write_json_file(out_ / "state" / "timings.json", timings);
    merge_gateway_stats();
}

void Runner::merge_gateway_stats() {
    const gateway::GatewayStats now = gateway_.stats();
    json state = read_json_file(out_ / "state" / "gateway_stats.json", json::object());
    state["backend_calls"] =
        state.value("backend_calls", 0L) + (now.backend_calls - last_merged_.backend_calls);
    state["cache_hits"] = state.value("cache_hits", 0L) + (now.cache_hits - last_merged_.cache_hits);
    state["truncation_warnings"] = state.value("truncation_warnings", 0L) +
                                   (now.truncation_warnings - last_merged_.truncation_warnings);
    json usage = state.value("usage_by_model", json::object());
    for (const auto& [model, total] : now.usage_by_model) {
        TokenUsage previous;
        if (const auto it = last_merged_.usage_by_model.find(model);
            it != last_merged_.usage_by_model.end())
            previous = it->second;
        json entry = usage.value(model, json{{"input_tokens", 0L}, {"output_tokens", 0L}});
        entry["input_tokens"] =
            entry.value("input_tokens", 0L) + (total.input_tokens - previous.input_tokens);
        entry["output_tokens"] =
            entry.value("output_tokens", 0L) + (total.output_tokens - previous.output_tokens);
        usage[model] = entry;
    }
    state["usage_by_model"] = usage;
    json calls = state.value("calls_by_model", json::object());
    for (const auto& [model, total] : now.calls_by_model) {
        long previous = 0;
        if (const auto it = last_merged_.calls_by_model.find(model);
            it != last_merged_.calls_by_model.end())
            previous = it->second;
        calls[model] = calls.value(model, 0L) + (total - previous);
    }
    state["calls_by_model"] = calls;
    write_json_file(out_ / "state" / "gateway_stats.json", state);
    last_merged_ = now;
}

void Runner::record_errors(const std::string& stage,
                           const std::vector<std::pair<std::string, std::string>>& errors) {
    const auto path = out_ / "errors.jsonl";
    std::vector<json> existing;
    if (std::filesystem::exists(path)) {
        for (json& j : read_jsonl(path))
            if (j.value("stage", "") != stage) existing.push_back(std::move(j));
    }
    for (const auto& [doc_id, message] : errors)
        existing.push_back(json{{"stage", stage}, {"document_id", doc_id}, {"message", message}});
    std::stable_sort(existing.begin(), existing.end(), [](const json& a, const json& b) {
        const auto ka = std::make_pair(a.value("stage", ""), a.value("document_id", ""));
        const auto kb = std::make_pair(b.value("stage", ""), b.value("document_id", ""));
        return ka < kb;
    });
    std::vector<std::string> lines;
    lines.reserve(existing.size());
    for (const json& j : existing) lines.push_back(j.dump());
    write_lines(path, lines);
}

void Runner::stage_ingest() {
    const auto started = Clock::now();
    if (config_.corpus_path.empty()) throw ConfigError("corpus_path is not configured");
    std::vector<Document> docs = load_jsonl(config_.corpus_path);

    auto done = checkpoints_->load("ingest");
    for (const Document& doc : docs) {
        if (done.count(doc.id)) continue;
        checkpoints_->put({doc.id, "ingest", to_json(doc), "", 1});
        if (hooks_.after_document) hooks_.after_document("ingest", doc.id);
    }
    std::vector<std::string> lines;
    lines.reserve(docs.size());
    for (const Document& doc : docs) lines.push_back(to_json(doc).dump());
    write_lines(out_ / "ingested.jsonl", lines);

    StageCounts counts;
    counts.in = counts.out = static_cast<long>(docs.size());
    persist_counts("ingest", counts, ms_since(started));
}

void Runner::stage_normalize() {
    const auto started = Clock::now();
    std::vector<Document> docs = load_stage_docs("ingested.jsonl", "normalize");
    auto done = checkpoints_->load("normalize");

    parallel_for(docs.size(), config_.workers, [&](std::size_t i) {
        Document& doc = docs[i];
        if (const auto it = done.find(doc.id); it != done.end()) {
            doc.normalized_text = it->second.at("normalized_text").get<std::string>();
            doc.word_count = it->second.at("word_count").get<long>();
            return;
        }
        doc.normalized_text = normalize::normalize_text(doc.text, config_.normalization);
        doc.word_count = normalize::word_count(doc.normalized_text);
        checkpoints_->put({doc.id, "normalize",
                           json{{"normalized_text", doc.normalized_text},
                                {"word_count", doc.word_count}},
                           "", 1});
        if (hooks_.after_document) hooks_.after_document("normalize", doc.id);
    });

    std::vector<std::string> lines;
    lines.reserve(docs.size());
    for (Document& doc : docs) {
        doc.advance_stage(Stage::Normalized);
        lines.push_back(to_json(doc).dump());
    }
    write_lines(out_ / "normalized.jsonl", lines);

    StageCounts counts;
    counts.in = counts.out = static_cast<long>(docs.size());
    persist_counts("normalize", counts, ms_since(started));
}

void Runner::stage_dedup() {
    const auto started = Clock::now();
    std::vector<Document> docs = load_stage_docs("normalized.jsonl", "dedup");
    auto done = checkpoints_->load("dedup");

    std::vector<dedup::DedupDecision> decisions;
    long semantic_degraded = 0;
    bool complete = !docs.empty();
    for (const Document& doc : docs)
        if (!done.count(doc.id)) {
            complete = false;
            break;
        }
    if (complete && !docs.empty()) {
        decisions.reserve(docs.size());
        for (const Document& doc : docs)
            decisions.push_back(dedup::decision_from_json(done.at(doc.id)));
        const json extras = read_json_file(out_ / "state" / "extras.json", json::object());
        semantic_degraded = extras.value("semantic_degraded", 0L);
    } else {
        // Dedup is corpus-level: decisions are only meaningful for the full
        // input, so a partial checkpoint set triggers a full recompute.
        std::unique_ptr<dedup::EmbeddingProvider> embedder;
        if (config_.semantic_dedup) embedder = std::make_unique<dedup::HashingEmbedder>();
        dedup::DedupResult result = dedup::dedup_pass(docs, config_.dedup, embedder.get());
        decisions = std::move(result.decisions);
        semantic_degraded = result.semantic_degraded;
        for (std::size_t i = 0; i < docs.size(); ++i) {
            checkpoints_->put({docs[i].id, "dedup", dedup::decision_to_json(decisions[i]), "", 1});
            if (hooks_.after_document) hooks_.after_document("dedup", docs[i].id);
        }
    }

    std::vector<std::string> audit, survivors;
    long dropped = 0;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        audit.push_back(dedup::decision_to_json(decisions[i]).dump());
        if (decisions[i].verdict == dedup::Verdict::Keep) {
            docs[i].advance_stage(Stage::Deduped);
            survivors.push_back(to_json(docs[i]).dump());
        } else {
            docs[i].advance_stage(Stage::DroppedDuplicate);
            ++dropped;
        }
    }
    write_lines(out_ / "dedup_audit.jsonl", audit);
    write_lines(out_ / "deduped.jsonl", survivors);

    json extras = read_json_file(out_ / "state" / "extras.json", json::object());
    extras["semantic_degraded"] = semantic_degraded;
    write_json_file(out_ / "state" / "extras.json", extras);

    StageCounts counts;
    counts.in = static_cast<long>(docs.size());
    counts.out = counts.in - dropped;
    counts.dropped = dropped;
    persist_counts("dedup", counts, ms_since(started));
}

void Runner::stage_link() {
    const auto started = Clock::now();
    std::vector<Document> docs = load_stage_docs("deduped.jsonl", "link");
    entities::EntityLinker linker = make_linker();
    auto done = checkpoints_->load("link");

    std::vector<std::vector<entities::EntityLink>> links(docs.size());
    parallel_for(docs.size(), config_.workers, [&](std::size_t i) {
        Document& doc = docs[i];
        if (const auto it = done.find(doc.id); it != done.end()) {
            doc.company_ids = it->second.at("company_ids").get<std::vector<std::string>>();
            for (const json& lj : it->second.at("links"))
                links[i].push_back(entities::link_from_json(lj));
            return;
        }
        links[i] = linker.link(doc);
        json link_array = json::array();
        for (const auto& link : links[i]) link_array.push_back(entities::link_to_json(link));
        checkpoints_->put({doc.id, "link",
                           json{{"company_ids", doc.company_ids}, {"links", link_array}}, "", 1});
        if (hooks_.after_document) hooks_.after_document("link", doc.id);
    });

    std::vector<std::string> doc_lines, link_lines;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        docs[i].advance_stage(Stage::Linked);
        doc_lines.push_back(to_json(docs[i]).dump());
        for (const auto& link : links[i]) link_lines.push_back(entities::link_to_json(link).dump());
    }
    write_lines(out_ / "linked.jsonl", doc_lines);
    write_lines(out_ / "entity_links.jsonl", link_lines);

    json extras = read_json_file(out_ / "state" / "extras.json", json::object());
    extras["ner_degraded"] = linker.ner_degraded_count();
    write_json_file(out_ / "state" / "extras.json", extras);

    StageCounts counts;
    counts.in = counts.out = static_cast<long>(docs.size());
    persist_counts("link", counts, ms_since(started));
}

void Runner::stage_summarize() {
    const auto started = Clock::now();
    std::vector<Document> docs = load_stage_docs("linked.jsonl", "summarize");

    // Routing sub-stage.
    auto routed_done = checkpoints_->load("route");
    std::vector<RouteDecision> routes(docs.size());
    for (std::size_t i = 0; i < docs.size(); ++i) {
        const Document& doc = docs[i];
        if (const auto it = routed_done.find(doc.id); it != routed_done.end()) {
            routes[i] = route_from_json(it->second);
            continue;
        }
        routes[i] = route(doc, config_.route_boundary);
        checkpoints_->put({doc.id, "route", route_to_json(routes[i]), "", 1});
        if (hooks_.after_document) hooks_.after_document("route", doc.id);
    }

    std::vector<std::string> route_lines, routed_doc_lines;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        docs[i].advance_stage(Stage::Routed);
        route_lines.push_back(route_to_json(routes[i]).dump());
        routed_doc_lines.push_back(to_json(docs[i]).dump());
    }
    write_lines(out_ / "routes.jsonl", route_lines);
    write_lines(out_ / "routed.jsonl", routed_doc_lines);

    // Summarization of the long route.
    auto done = checkpoints_->load("summarize");
    std::vector<std::optional<SummaryRecord>> summaries(docs.size());
    std::mutex error_mutex;
    std::vector<std::pair<std::string, std::string>> errors;

    parallel_for(docs.size(), config_.workers, [&](std::size_t i) {
        if (routes[i].route != Route::SummarizeFirst) return;
        const Document& doc = docs[i];
        if (const auto it = done.find(doc.id); it != done.end()) {
            summaries[i] = summary_from_json(it->second);
            return;
        }
        try {
            summaries[i] =
                summarize_document(doc, gateway_, config_.summarizer_backend, config_.chunk_words);
        } catch (const std::exception& e) {
            std::lock_guard lock(error_mutex);
            errors.emplace_back(doc.id, e.what());
            return;
        }
        checkpoints_->put({doc.id, "summarize", summary_to_json(*summaries[i]), "", 1});
        if (hooks_.after_document) hooks_.after_document("summarize", doc.id);
    });

    std::vector<std::string> summary_lines;
    long errored = 0;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        if (routes[i].route != Route::SummarizeFirst) continue;
        if (summaries[i])
            summary_lines.push_back(summary_to_json(*summaries[i]).dump());
        else
            ++errored;
    }
    write_lines(out_ / "summaries.jsonl", summary_lines);
    std::sort(errors.begin(), errors.end());
    record_errors("summarize", errors);

    StageCounts counts;
    counts.in = static_cast<long>(docs.size());
    counts.out = counts.in - errored;
    counts.errored = errored;
    persist_counts("summarize", counts, ms_since(started));
}

void Runner::stage_label() {
    const auto started = Clock::now();
    std::vector<Document> docs = load_stage_docs("routed.jsonl", "label");
    if (!std::filesystem::exists(out_ / "routes.jsonl"))
        throw ConfigError("missing " + (out_ / "routes.jsonl").string() +
                          "; run `summarize` before `label`");

    std::map<std::string, RouteDecision> routes;
    for (const json& j : read_jsonl(out_ / "routes.jsonl")) {
        RouteDecision decision = route_from_json(j);
        routes[decision.document_id] = decision;
    }
    std::map<std::string, SummaryRecord> summaries;
    for (const json& j : read_jsonl(out_ / "summaries.jsonl")) {
        SummaryRecord record = summary_from_json(j);
        summaries[record.document_id] = record;
    }

    // A summarized document whose summary errored has no labeling input.
    struct Item {
        std::size_t doc_index;
        std::string text;
        bool summarized;
    };
    std::vector<Item> items;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        const auto rit = routes.find(docs[i].id);
        if (rit == routes.end())
            throw ConfigError("document " + docs[i].id + " has no route decision");
        if (rit->second.route == Route::SummarizeFirst) {
            const auto sit = summaries.find(docs[i].id);
            if (sit == summaries.end()) continue;
            items.push_back({i, sit->second.final_summary, true});
        } else {
            items.push_back({i, docs[i].normalized_text, false});
        }
    }

    auto done = checkpoints_->load("label");
    std::vector<json> vote_payloads(items.size());
    parallel_for(items.size(), config_.workers, [&](std::size_t k) {
        const Document& doc = docs[items[k].doc_index];
        if (const auto it = done.find(doc.id); it != done.end()) {
            vote_payloads[k] = it->second;
            return;
        }
        const LabelOutcome outcome =
            collect_votes(doc.id, items[k].text, gateway_, config_.labeler_backends);
        json votes = json::array();
        for (const LabelVote& vote : outcome.valid) {
            votes.push_back(json{{"document_id", vote.document_id},
                                 {"model_id", vote.model_id},
                                 {"label", label_name(vote.label)},
                                 {"latency_ms", vote.latency_ms},
                                 {"usage", {{"input_tokens", vote.usage.input_tokens},
                                            {"output_tokens", vote.usage.output_tokens}}}});
        }
        json invalid = json::array();
        for (const InvalidVote& iv : outcome.invalid) invalid.push_back(invalid_to_json(iv));
        vote_payloads[k] = json{{"document_id", doc.id}, {"votes", votes}, {"invalid", invalid}};
        checkpoints_->put({doc.id, "label", vote_payloads[k], "", 1});
        if (hooks_.after_document) hooks_.after_document("label", doc.id);
    });

    std::vector<std::string> lines;
    lines.reserve(items.size());
    for (const json& payload : vote_payloads) lines.push_back(payload.dump());
    write_lines(out_ / "votes.jsonl", lines);

    // Optional: label the original text of summarized documents too, for the
    // label-consistency analysis.
    if (config_.label_sources) {
        auto source_done = checkpoints_->load("label_source");
        std::vector<std::optional<json>> source_payloads(items.size());
        parallel_for(items.size(), config_.workers, [&](std::size_t k) {
            if (!items[k].summarized) return;
            const Document& doc = docs[items[k].doc_index];
            if (const auto it = source_done.find(doc.id); it != source_done.end()) {
                source_payloads[k] = it->second;
                return;
            }
            const LabelOutcome outcome =
                collect_votes(doc.id, doc.normalized_text, gateway_, config_.labeler_backends);
            json votes = json::array();
            for (const LabelVote& vote : outcome.valid)
                votes.push_back(json{{"document_id", vote.document_id},
                                     {"model_id", vote.model_id},
                                     {"label", label_name(vote.label)},
                                     {"latency_ms", vote.latency_ms},
                                     {"usage", {{"input_tokens", vote.usage.input_tokens},
                                                {"output_tokens", vote.usage.output_tokens}}}});
            json invalid = json::array();
            for (const InvalidVote& iv : outcome.invalid) invalid.push_back(invalid_to_json(iv));
            source_payloads[k] =
                json{{"document_id", doc.id}, {"votes", votes}, {"invalid", invalid}};
            checkpoints_->put({doc.id, "label_source", *source_payloads[k], "", 1});
            if (hooks_.after_document) hooks_.after_document("label_source", doc.id);
        });
        std::vector<std::string> source_lines;
        for (const auto& payload : source_payloads)
            if (payload) source_lines.push_back(payload->dump());
        write_lines(out_ / "source_votes.jsonl", source_lines);
    }

    StageCounts counts;
    counts.in = static_cast<long>(items.size());
    counts.out = counts.in;
    persist_counts("label", counts, ms_since(started));
}

void Runner::stage_consensus() {
    const auto started = Clock::now();
    std::vector<Document> docs = load_stage_docs("routed.jsonl", "consensus");
    if (!std::filesystem::exists(out_ / "votes.jsonl"))
        throw ConfigError("missing " + (out_ / "votes.jsonl").string() +
                          "; run `label` before `consensus`");

    std::map<std::string, json> votes_by_doc;
    for (const json& j : read_jsonl(out_ / "votes.jsonl"))
        votes_by_doc[j.at("document_id").get<std::string>()] = j;

    std::vector<std::string> consensus_lines, labeled_lines, quarantine_lines;
    long finalized = 0, quarantined = 0;
    long labeled_in = 0;
    for (Document& doc : docs) {
        const auto it = votes_by_doc.find(doc.id);
        if (it == votes_by_doc.end()) continue; // errored before labeling
        ++labeled_in;

        std::vector<LabelVote> valid;
        for (const json& vj : it->second.at("votes")) {
            LabelVote vote;
            vote.document_id = vj.at("document_id").get<std::string>();
            vote.model_id = vj.at("model_id").get<std::string>();
            vote.label = label_from_name(vj.at("label").get<std::string>());
            vote.latency_ms = vj.value("latency_ms", 0.0);
            if (vj.contains("usage")) {
                vote.usage.input_tokens = vj["usage"].value("input_tokens", 0L);
                vote.usage.output_tokens = vj["usage"].value("output_tokens", 0L);
            }
            valid.push_back(std::move(vote));
        }

        if (valid.size() < 2) {
            ++quarantined;
            quarantine_lines.push_back(json{{"document_id", doc.id},
                                            {"reason", "fewer_than_two_valid_votes"},
                                            {"invalid", it->second.value("invalid", json::array())}}
                                           .dump());
            checkpoints_->put({doc.id, "consensus", json{{"quarantined", true}}, "", 1});
            continue;
        }
        const ConsensusResult result = make_consensus(doc.id, valid);
        doc.advance_stage(Stage::Finalized);
        ++finalized;
        const json cj = to_json(result);
        consensus_lines.push_back(cj.dump());
        labeled_lines.push_back(json{{"document", to_json(doc)}, {"consensus", cj}}.dump());
        checkpoints_->put({doc.id, "consensus", cj, "", 1});
        if (hooks_.after_document) hooks_.after_document("consensus", doc.id);
    }
    write_lines(out_ / "consensus.jsonl", consensus_lines);
    write_lines(out_ / "labeled.jsonl", labeled_lines);
    write_lines(out_ / "quarantine.jsonl", quarantine_lines);

    json extras = read_json_file(out_ / "state" / "extras.json", json::object());
    extras["quarantined"] = quarantined;
    write_json_file(out_ / "state" / "extras.json", extras);

    StageCounts counts;
    counts.in = labeled_in;
    counts.out = finalized;
    counts.errored = quarantined;
    persist_counts("consensus", counts, ms_since(started));
}

RunManifest Runner::finalize_manifest() {
    RunManifest manifest;
    manifest.config_snapshot = config_.to_json();

    // Output location must not perturb the run identity.
    json identity = manifest.config_snapshot;
    identity.erase("out_dir");
    identity["gateway"].erase("cache_dir");
    manifest.run_id = fnv1a_hex(identity.dump() + "|" + file_digest(config_.corpus_path));

    const json counts = read_json_file(out_ / "state" / "stage_counts.json", json::object());
    for (const auto& [stage, c] : counts.items())
        manifest.stages[stage] = {c.value("in", 0L), c.value("out", 0L), c.value("dropped", 0L),
                                  c.value("errored", 0L)};
    const json timings = read_json_file(out_ / "state" / "timings.json", json::object());
    for (const auto& [stage, wall] : timings.items())
        manifest.wall_ms[stage] = wall.get<double>();

    const json gw = read_json_file(out_ / "state" / "gateway_stats.json", json::object());
    manifest.backend_calls = gw.value("backend_calls", 0L);
    manifest.cache_hits = gw.value("cache_hits", 0L);
    manifest.truncation_warnings = gw.value("truncation_warnings", 0L);

    const json extras = read_json_file(out_ / "state" / "extras.json", json::object());
    manifest.quarantined = extras.value("quarantined", 0L);
    manifest.semantic_degraded = extras.value("semantic_degraded", 0L);
    manifest.ner_degraded = extras.value("ner_degraded", 0L);

    // Costs from merged integer usage, priced per backend config.
    json manifest_json = manifest.to_json();
    json cost_by_model = json::object();
    double total_cost = 0.0;
    if (gw.contains("usage_by_model")) {
        for (const auto& [model, usage] : gw["usage_by_model"].items()) {
            TokenUsage tokens;
            tokens.input_tokens = usage.value("input_tokens", 0L);
            tokens.output_tokens = usage.value("output_tokens", 0L);
            for (const auto& backend : config_.backends) {
                if (backend.model_id == model) {
                    const double cost = gateway::estimate_cost(tokens, backend.pricing);
                    cost_by_model[model] = cost;
                    total_cost += cost;
                    break;
                }
            }
        }
    }
    manifest.total_cost_usd = total_cost;
    manifest_json["totals"]["total_cost_usd"] = total_cost;
    manifest_json["totals"]["cost_by_model"] = cost_by_model;
    manifest_json["totals"]["usage_by_model"] = gw.value("usage_by_model", json::object());
    manifest_json["totals"]["calls_by_model"] = gw.value("calls_by_model", json::object());

    // Per-sample cost ceiling check over finalized documents.
    const long finalized = manifest.stages.count("consensus") ? manifest.stages["consensus"].out : 0;
    const double per_sample = finalized > 0 ? total_cost / static_cast<double>(finalized) : 0.0;
    manifest_json["totals"]["cost_per_labeled_sample"] = per_sample;
    manifest_json["totals"]["cost_ceiling_usd_per_sample"] =
        config_.cost_quality.ceiling_usd_per_sample;
    manifest_json["totals"]["cost_ceiling_violated"] =
        per_sample > config_.cost_quality.ceiling_usd_per_sample;

    write_json_file(out_ / "manifest.json", manifest_json);
    json timings_json = json::object();
    for (const auto& [stage, wall] : manifest.wall_ms) timings_json[stage] = wall;
    write_json_file(out_ / "timings.json", timings_json);
    return manifest;
}

RunManifest Runner::run() {
    stage_ingest();
    stage_normalize();
    stage_dedup();
    stage_link();
    stage_summarize();
    stage_label();
    stage_consensus();
    return finalize_manifest();
}

} // namespace afsp::pipeline
