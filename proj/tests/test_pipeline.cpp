#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <fstream>

#include "afsp/metrics.hpp"
#include "afsp/normalize.hpp"
#include "afsp/pipeline.hpp"

using namespace afsp;
using namespace afsp::pipeline;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("afsp_pipe_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

Document doc_with_words(int words) {
    Document doc;
    doc.id = "w" + std::to_string(words);
    std::string text;
    for (int i = 0; i < words; ++i) {
        if (!text.empty()) text += ' ';
        text += "كلمة" + std::to_string(i % 17);
    }
    doc.text = text;
    doc.normalized_text = text;
    doc.word_count = words;
    doc.published_at = "2025-01-01T00:00:00Z";
    doc.stage = Stage::Routed;
    return doc;
}

gateway::Gateway mock_gateway(std::shared_ptr<gateway::ChatTransport> transport = nullptr) {
    if (!transport) transport = std::make_shared<gateway::MockTransport>();
    auto backend = [](const std::string& id, int max_tokens) {
        gateway::BackendConfig b;
        b.model_id = id;
        b.decoding.max_tokens = max_tokens;
        b.pricing = {0.15, 0.60};
        b.retry_base_ms = 1;
        return b;
    };
    return gateway::Gateway(
        {backend("m1", 400), backend("m2", 400), backend("m3", 400), backend("summ", 400)},
        transport,
        gateway::PromptLibrary::load(fs::path(AFSP_SOURCE_DIR) / "data" / "prompts"));
}

// Transport that counts per-task calls by inspecting the rendered prompt.
class TaskCountingTransport : public gateway::ChatTransport {
public:
    gateway::Completion send(const gateway::BackendConfig& config, const std::string& system_text,
                             const std::string& user_text) override {
        if (user_text.find("صنّف النص المالي") != std::string::npos)
            ++classify_calls;
        else if (user_text.find("الملخّص النهائي") != std::string::npos)
            ++consolidate_calls;
        else
            ++summarize_calls;
        return inner.send(config, system_text, user_text);
    }
    std::string name() const override { return "task-counting"; }

    gateway::MockTransport inner;
    std::atomic<int> summarize_calls{0};
    std::atomic<int> consolidate_calls{0};
    std::atomic<int> classify_calls{0};
};

class AlwaysInvalidTransport : public gateway::ChatTransport {
public:
    gateway::Completion send(const gateway::BackendConfig&, const std::string&,
                             const std::string&) override {
        gateway::Completion c;
        c.text = "مرتفع للغاية"; // out of taxonomy
        c.usage = {4, 2};
        return c;
    }
    std::string name() const override { return "always-invalid"; }
};

} // namespace

TEST_CASE("routing boundary: 99 direct, 100 and 101 summarize") {
    CHECK(route(doc_with_words(99)).route == Route::DirectToLabeling);
    CHECK(route(doc_with_words(100)).route == Route::SummarizeFirst);
    CHECK(route(doc_with_words(101)).route == Route::SummarizeFirst);
    CHECK(route(doc_with_words(99)).word_count == 99);
}

TEST_CASE("routing respects a configured boundary") {
    CHECK(route(doc_with_words(49), 50).route == Route::DirectToLabeling);
    CHECK(route(doc_with_words(50), 50).route == Route::SummarizeFirst);
}

TEST_CASE("sentence chunking packs greedily under the word budget") {
    // 9 sentences of 10 words: chunk_words=40 -> chunks of 4,4,1 sentences.
    std::string text;
    for (int s = 0; s < 9; ++s) {
        for (int w = 0; w < 10; ++w) text += "كلمة" + std::to_string(s) + std::to_string(w) + " ";
        text += "نهاية.";
        if (s + 1 < 9) text += ' ';
    }
    const auto chunks = chunk_by_sentences(text, 40);
    REQUIRE(chunks.size() == 3);
    CHECK(normalize::word_count(chunks[0]) <= 40 + 11);
    // Oversized single sentence becomes its own chunk.
    std::string giant;
    for (int w = 0; w < 60; ++w) giant += "كلمة ";
    giant += "نهاية.";
    const auto one = chunk_by_sentences(giant, 40);
    CHECK(one.size() == 1);
}

TEST_CASE("short document summarizes with a single call, no consolidation") {
    auto transport = std::make_shared<TaskCountingTransport>();
    auto gw = mock_gateway(transport);
    Document doc = doc_with_words(120);
    // sentence terminators so the extractive mock has structure
    doc.normalized_text += ".";
    const SummaryRecord record = summarize_document(doc, gw, "summ", 400);
    CHECK(transport->summarize_calls == 1);
    CHECK(transport->consolidate_calls == 0);
    CHECK(record.chunk_summaries.empty());
    CHECK_FALSE(record.final_summary.empty());
}

TEST_CASE("900-word document with 400-word chunks: 3 chunks + 1 consolidation") {
    auto transport = std::make_shared<TaskCountingTransport>();
    auto gw = mock_gateway(transport);

    // 90 sentences x 10 words pack into 40+40+10 sentence chunks.
    Document doc;
    doc.id = "long-doc";
    std::string text;
    for (int s = 0; s < 90; ++s) {
        for (int w = 0; w < 9; ++w) text += "كلمة" + std::to_string((s * 9 + w) % 41) + " ";
        text += "نهايتها.";
        if (s + 1 < 90) text += ' ';
    }
    doc.normalized_text = text;
    doc.word_count = normalize::word_count(text);
    REQUIRE(doc.word_count == 900);

    const SummaryRecord record = summarize_document(doc, gw, "summ", 400);
    CHECK(transport->summarize_calls == 3);
    CHECK(transport->consolidate_calls == 1);
    CHECK(record.chunk_summaries.size() == 3);
    CHECK_FALSE(record.final_summary.empty());
    // usage_total sums all four calls
    CHECK(record.usage_total.input_tokens > 900);
}

TEST_CASE("extractive mock summary is a subsequence of source sentences, hallucination 0") {
    auto gw = mock_gateway();
    // A multi-sentence financial paragraph in the style of a production
    // filing announcement.
    const std::string source =
        "تجدد المجموعة تعليق الزيادات في الإنتاج حتى مارس 2026. "
        "شمل القرار الدول الثماني الأعضاء بعد اجتماع اللجنة الوزارية. "
        "تم تحديد الإنتاج المطلوب من كل دولة وفق جدول معلن. "
        "يمكن إعادة كميات الخفض البالغة 1 مليون برميل يوميا تدريجيا حسب ظروف السوق. "
        "أكد البيان أهمية الاستقرار في الأسواق العالمية.";
    Document doc;
    doc.id = "opec-like";
    doc.normalized_text = normalize::normalize_text(source);
    doc.word_count = normalize::word_count(doc.normalized_text);

    const SummaryRecord record = summarize_document(doc, gw, "summ", 400);
    const auto source_sentences = normalize::split_sentences(doc.normalized_text);
    const auto summary_sentences = normalize::split_sentences(record.final_summary);
    REQUIRE_FALSE(summary_sentences.empty());
    // subsequence check: every summary sentence appears in order in the source
    std::size_t cursor = 0;
    for (const auto& sentence : summary_sentences) {
        bool found = false;
        while (cursor < source_sentences.size()) {
            if (source_sentences[cursor++] == sentence) {
                found = true;
                break;
            }
        }
        CHECK(found);
    }
    CHECK(metrics::hallucination_ratio(doc.normalized_text, record.final_summary) ==
          doctest::Approx(0.0));
}

TEST_CASE("consensus labeling over three backends") {
    auto gw = mock_gateway();
    SUBCASE("agreeing mock backends give full consensus") {
        const auto outcome =
            label_with_consensus("d1", "ارتفاع الأرباح هذا الربع", gw, {"m1", "m2", "m3"});
        REQUIRE(outcome.result.has_value());
        CHECK(outcome.result->outcome == ConsensusOutcomeKind::Full);
        CHECK(*outcome.result->final_label == SentimentLabel::StronglyPositive);
        CHECK(outcome.result->votes.size() == 3);
        CHECK_FALSE(outcome.quarantined);
    }
    SUBCASE("all-invalid backends quarantine the document") {
        auto bad = mock_gateway(std::make_shared<AlwaysInvalidTransport>());
        const auto outcome = label_with_consensus("d2", "نص عادي", bad, {"m1", "m2", "m3"});
        CHECK(outcome.quarantined);
        CHECK_FALSE(outcome.result.has_value());
        CHECK(outcome.invalid.size() == 3);
        for (const auto& iv : outcome.invalid) CHECK(iv.reason == "taxonomy_violation");
    }
}

TEST_CASE("parallel_for propagates the first exception and stops") {
    std::atomic<int> done{0};
    CHECK_THROWS_AS(parallel_for(100, 4,
                                 [&](std::size_t i) {
                                     if (i == 10) throw Error("boom");
                                     ++done;
                                 }),
                    Error);
    CHECK(done.load() < 100);
    // and runs everything when nothing throws
    std::atomic<int> all{0};
    parallel_for(50, 4, [&](std::size_t) { ++all; });
    CHECK(all.load() == 50);
}

// ---------------------------------------------------------------------------
// Runner end-to-end behaviors (small corpora; the heavyweight determinism
// and recovery checks live in the acceptance suite)
// ---------------------------------------------------------------------------

namespace {

RunConfig runner_config(const fs::path& out, const fs::path& corpus) {
    RunConfig cfg;
    cfg.corpus_path = corpus.string();
    cfg.out_dir = out.string();
    cfg.data_dir = (fs::path(AFSP_SOURCE_DIR) / "data").string();
    cfg.mock = true;
    cfg.workers = 3;
    cfg.finalize();
    return cfg;
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    REQUIRE(in);
    return json::parse(in);
}

} // namespace

TEST_CASE("empty corpus runs to an all-zero manifest") {
    const auto dir = fresh_dir("empty");
    std::ofstream(dir / "corpus.jsonl").close();
    RunConfig cfg = runner_config(dir / "out", dir / "corpus.jsonl");
    auto gw = mock_gateway();
    Runner runner(cfg, gw);
    const RunManifest manifest = runner.run();
    CHECK(manifest.stages.at("ingest").in == 0);
    CHECK(manifest.stages.at("consensus").out == 0);
    CHECK(manifest.total_cost_usd == 0.0);
    CHECK(fs::exists(dir / "out" / "labeled.jsonl"));
}

TEST_CASE("manifest counts conserve documents at every stage") {
    const auto dir = fresh_dir("conserve");
    const MiniCorpus corpus = generate_mini_corpus(21, 6, 20);
    save_jsonl(dir / "corpus.jsonl", corpus.documents);
    RunConfig cfg = runner_config(dir / "out", dir / "corpus.jsonl");
    auto gw = mock_gateway();
    Runner runner(cfg, gw);
    const RunManifest manifest = runner.run();
    for (const auto& [stage, counts] : manifest.stages)
        CHECK(counts.in == counts.out + counts.dropped + counts.errored);
    CHECK(manifest.stages.at("dedup").dropped ==
          static_cast<long>(corpus.planted_exact.size() + corpus.planted_near.size()));
    CHECK(manifest.quarantined == 0);
}

TEST_CASE("a second run over intact checkpoints performs zero backend calls") {
    const auto dir = fresh_dir("resume_noop");
    const MiniCorpus corpus = generate_mini_corpus(5, 4, 10);
    save_jsonl(dir / "corpus.jsonl", corpus.documents);
    RunConfig cfg = runner_config(dir / "out", dir / "corpus.jsonl");

    auto gw1 = mock_gateway();
    Runner first(cfg, gw1);
    first.run();
    const long calls_after_first = read_json(dir / "out" / "state" / "gateway_stats.json")
                                       .value("backend_calls", -1L);
    CHECK(calls_after_first > 0);

    auto gw2 = mock_gateway();
    Runner second(cfg, gw2);
    second.run();
    CHECK(gw2.stats().backend_calls == 0);
    const long calls_after_second = read_json(dir / "out" / "state" / "gateway_stats.json")
                                        .value("backend_calls", -1L);
    CHECK(calls_after_second == calls_after_first);
}

TEST_CASE("kill mid-label and resume: outputs byte-identical to a clean run") {
    const MiniCorpus corpus = generate_mini_corpus(13, 5, 15);

    const auto clean_dir = fresh_dir("clean_run");
    save_jsonl(clean_dir / "corpus.jsonl", corpus.documents);
    RunConfig clean_cfg = runner_config(clean_dir / "out", clean_dir / "corpus.jsonl");
    auto clean_gw = mock_gateway();
    Runner clean(clean_cfg, clean_gw);
    clean.run();

    const auto crash_dir = fresh_dir("crash_run");
    save_jsonl(crash_dir / "corpus.jsonl", corpus.documents);
    RunConfig crash_cfg = runner_config(crash_dir / "out", crash_dir / "corpus.jsonl");

    struct Abort {};
    {
        auto gw = mock_gateway();
        PipelineHooks hooks;
        std::atomic<int> labeled{0};
        hooks.after_document = [&](const std::string& stage, const std::string&) {
            if (stage == "label" && ++labeled == 6) throw Abort{}; // ~30% through
        };
        Runner crashing(crash_cfg, gw, hooks);
        bool aborted = false;
        try {
            crashing.run();
        } catch (const Abort&) {
            aborted = true;
        }
        CHECK(aborted);
    }
    {
        auto gw = mock_gateway();
        Runner resumed(crash_cfg, gw);
        resumed.run();
    }

    for (const std::string file :
         {"labeled.jsonl", "summaries.jsonl", "dedup_audit.jsonl", "votes.jsonl",
          "consensus.jsonl", "entity_links.jsonl", "quarantine.jsonl"}) {
        std::ifstream a(clean_dir / "out" / file), b(crash_dir / "out" / file);
        const std::string content_a((std::istreambuf_iterator<char>(a)),
                                    std::istreambuf_iterator<char>());
        const std::string content_b((std::istreambuf_iterator<char>(b)),
                                    std::istreambuf_iterator<char>());
        CHECK(content_a == content_b);
    }
}

TEST_CASE("taxonomy-violating backends quarantine documents, never a sixth label") {
    const auto dir = fresh_dir("quarantine");
    const MiniCorpus corpus = generate_mini_corpus(3, 0, 8);
    save_jsonl(dir / "corpus.jsonl", corpus.documents);
    RunConfig cfg = runner_config(dir / "out", dir / "corpus.jsonl");
    auto gw = mock_gateway(std::make_shared<AlwaysInvalidTransport>());
    Runner runner(cfg, gw);
    const RunManifest manifest = runner.run();

    CHECK(manifest.quarantined == manifest.stages.at("consensus").in);
    CHECK(manifest.stages.at("consensus").out == 0);

    std::ifstream labeled(dir / "out" / "labeled.jsonl");
    CHECK(labeled.peek() == std::ifstream::traits_type::eof());

    std::ifstream quarantine(dir / "out" / "quarantine.jsonl");
    std::string line;
    long quarantined_lines = 0;
    while (std::getline(quarantine, line)) {
        ++quarantined_lines;
        const json j = json::parse(line);
        CHECK(j["reason"] == "fewer_than_two_valid_votes");
        for (const auto& iv : j["invalid"]) CHECK(iv["reason"] == "taxonomy_violation");
    }
    CHECK(quarantined_lines == manifest.quarantined);
}

TEST_CASE("stage commands demand their inputs") {
    const auto dir = fresh_dir("stage_deps");
    RunConfig cfg = runner_config(dir / "out", dir / "missing.jsonl");
    auto gw = mock_gateway();
    Runner runner(cfg, gw);
    CHECK_THROWS_AS(runner.stage_label(), ConfigError);     // no routed.jsonl yet
    CHECK_THROWS_AS(runner.stage_normalize(), ConfigError); // no ingested.jsonl yet
    CHECK_THROWS_AS(runner.stage_ingest(), ConfigError);    // corpus itself missing
}

TEST_CASE("run() equals the stage commands executed in sequence, byte for byte") {
    const MiniCorpus corpus = generate_mini_corpus(17, 4, 12);

    const auto all_dir = fresh_dir("one_shot");
    save_jsonl(all_dir / "corpus.jsonl", corpus.documents);
    RunConfig all_cfg = runner_config(all_dir / "out", all_dir / "corpus.jsonl");
    auto gw1 = mock_gateway();
    Runner one_shot(all_cfg, gw1);
    one_shot.run();

    const auto step_dir = fresh_dir("stepwise");
    save_jsonl(step_dir / "corpus.jsonl", corpus.documents);
    RunConfig step_cfg = runner_config(step_dir / "out", step_dir / "corpus.jsonl");
    // Fresh Runner per stage, as the CLI would create per process.
    for (int stage = 0; stage < 8; ++stage) {
        auto gw = mock_gateway();
        Runner runner(step_cfg, gw);
        switch (stage) {
            case 0: runner.stage_ingest(); break;
            case 1: runner.stage_normalize(); break;
            case 2: runner.stage_dedup(); break;
            case 3: runner.stage_link(); break;
            case 4: runner.stage_summarize(); break;
            case 5: runner.stage_label(); break;
            case 6: runner.stage_consensus(); break;
            default: runner.finalize_manifest(); break;
        }
    }

    for (const std::string file :
         {"labeled.jsonl", "summaries.jsonl", "dedup_audit.jsonl", "votes.jsonl", "routes.jsonl"}) {
        std::ifstream a(all_dir / "out" / file), b(step_dir / "out" / file);
        const std::string content_a((std::istreambuf_iterator<char>(a)),
                                    std::istreambuf_iterator<char>());
        const std::string content_b((std::istreambuf_iterator<char>(b)),
                                    std::istreambuf_iterator<char>());
        CHECK(content_a == content_b);
        CHECK_FALSE(content_a.empty());
    }
    const json manifest_a = read_json(all_dir / "out" / "manifest.json");
    const json manifest_b = read_json(step_dir / "out" / "manifest.json");
    auto strip = [](json m) {
        m["config"].erase("out_dir");
        m["config"]["gateway"].erase("cache_dir");
        m["config"].erase("corpus_path");
        m.erase("run_id");
        return m;
    };
    CHECK(strip(manifest_a) == strip(manifest_b));
}
