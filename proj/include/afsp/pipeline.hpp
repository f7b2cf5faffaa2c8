#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "afsp/config.hpp"
#include "afsp/corpus.hpp"
#include "afsp/entities.hpp"
#include "afsp/llm_gateway.hpp"

namespace afsp::pipeline {

// ---------------------------------------------------------------------------
// Routing
// ---------------------------------------------------------------------------

enum class Route { DirectToLabeling, SummarizeFirst };

struct RouteDecision {
    std::string document_id;
    Route route = Route::DirectToLabeling;
    long word_count = 0;
};

/// word_count < boundary goes straight to labeling; the boundary itself
/// (default 100 words) goes to summarization.
RouteDecision route(const Document& doc, int boundary = 100);

json route_to_json(const RouteDecision& decision);
RouteDecision route_from_json(const json& j);

// ---------------------------------------------------------------------------
// Summarization
// ---------------------------------------------------------------------------

struct SummaryRecord {
    std::string document_id;
    std::vector<std::string> chunk_summaries; // non-empty iff chunking occurred
    std::string final_summary;
    std::string backend_id;
    TokenUsage usage_total;
};

json summary_to_json(const SummaryRecord& record);
SummaryRecord summary_from_json(const json& j);

/// Greedy sentence packing into chunks of at most chunk_words words; an
/// oversized single sentence becomes its own chunk.
std::vector<std::string> chunk_by_sentences(const std::string& text, int chunk_words);

/// Single call when the text fits one chunk, otherwise chunk summaries plus
/// one consolidation call. usage_total sums every call.
SummaryRecord summarize_document(const Document& doc, gateway::Gateway& gw,
                                 const std::string& backend_id, int chunk_words = 400);

// ---------------------------------------------------------------------------
// Consensus labeling
// ---------------------------------------------------------------------------

struct InvalidVote {
    std::string model_id;
    std::string raw_output; // or the transport error message
    std::string reason;     // "taxonomy_violation" | "backend_error"
};

struct LabelOutcome {
    std::vector<LabelVote> valid;
    std::vector<InvalidVote> invalid;
};

/// Three independent classifications. Taxonomy violations and backend
/// failures turn into invalid votes, never silent drops.
LabelOutcome collect_votes(const std::string& document_id, const std::string& text,
                           gateway::Gateway& gw, const std::array<std::string, 3>& backends);

struct ConsensusOutcome {
    std::optional<ConsensusResult> result; // absent when quarantined
    std::vector<InvalidVote> invalid;
    bool quarantined = false;
};

/// Votes with fewer than two valid entries quarantine the document.
ConsensusOutcome label_with_consensus(const std::string& document_id, const std::string& text,
                                      gateway::Gateway& gw,
                                      const std::array<std::string, 3>& backends);

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

struct StageCounts {
    long in = 0;
    long out = 0;
    long dropped = 0;
    long errored = 0;
};

struct RunManifest {
    std::string run_id;
    json config_snapshot;
    std::map<std::string, StageCounts> stages;
    std::map<std::string, double> wall_ms; // volatile; written to timings.json
    double total_cost_usd = 0.0;
    long backend_calls = 0;
    long cache_hits = 0;
    long truncation_warnings = 0;
    long quarantined = 0;
    long semantic_degraded = 0;
    long ner_degraded = 0;

    /// Deterministic content only (timings live in timings.json).
    json to_json() const;
};

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

struct PipelineHooks {
    /// Called after a document's checkpoint is durable. Tests throw from here
    /// to simulate a crash at an exact point.
    std::function<void(const std::string& stage, const std::string& document_id)> after_document;
};

/// Stage machine over the run directory. Every stage reads the previous
/// stage's JSONL, consults the checkpoint store, computes only what is
/// missing, and rewrites its outputs deterministically — so re-runs are
/// no-ops and `run` is byte-identical to the stage commands in sequence.
class Runner {
public:
    Runner(RunConfig config, gateway::Gateway& gw, PipelineHooks hooks = {});

    RunManifest run(); // ingest through consensus + manifest

    void stage_ingest();
    void stage_normalize();
    void stage_dedup();
    void stage_link();
    void stage_summarize(); // routing + chunked summarization
    void stage_label();
    void stage_consensus();
    RunManifest finalize_manifest();

    const std::filesystem::path& out_dir() const { return out_; }

private:
    std::vector<Document> load_stage_docs(const std::string& file, const std::string& needed_by);
    void persist_counts(const std::string& stage, const StageCounts& counts, double wall_ms);
    void merge_gateway_stats();
    void record_errors(const std::string& stage,
                       const std::vector<std::pair<std::string, std::string>>& errors);
    entities::EntityLinker make_linker();

    RunConfig config_;
    gateway::Gateway& gateway_;
    PipelineHooks hooks_;
    std::filesystem::path out_;
    std::shared_ptr<CheckpointStore> checkpoints_;
    gateway::GatewayStats last_merged_;
    std::unique_ptr<entities::NerProvider> ner_;
};

/// Shared by stages and tests: bounded worker pool with deterministic
/// result placement; the first exception aborts the pool and rethrows.
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& body);

} // namespace afsp::pipeline
