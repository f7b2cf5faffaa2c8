#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "afsp/error.hpp"

namespace afsp {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Sentiment taxonomy
// ---------------------------------------------------------------------------

/// Five-class ordinal sentiment taxonomy. Order matters: it defines the
/// ordinal encoding and the row/column order of every report.
enum class SentimentLabel {
    StronglyNegative = 0,
    Negative = 1,
    Neutral = 2,
    Positive = 3,
    StronglyPositive = 4,
};

inline constexpr std::array<SentimentLabel, 5> kAllLabels = {
    SentimentLabel::StronglyNegative, SentimentLabel::Negative, SentimentLabel::Neutral,
    SentimentLabel::Positive, SentimentLabel::StronglyPositive};

/// Ordinal encoding in {-2,-1,0,1,2}, total-ordered and bijective with value.
int ordinal(SentimentLabel label);
SentimentLabel label_from_ordinal(int ordinal_value);

/// Wire name, e.g. "strongly_positive".
std::string label_name(SentimentLabel label);
SentimentLabel label_from_name(const std::string& name);

// ---------------------------------------------------------------------------
// Documents
// ---------------------------------------------------------------------------

enum class Source { News, Social };

std::string source_name(Source source);
Source source_from_name(const std::string& name);

/// Processing stages in pipeline order. DroppedDuplicate is terminal.
enum class Stage {
    Ingested = 0,
    Normalized,
    Deduped,
    Linked,
    Routed,
    Summarized,
    Labeled,
    Finalized,
    DroppedDuplicate,
};

std::string stage_name(Stage stage);
Stage stage_from_name(const std::string& name);

/// One ingested text with its processing state.
struct Document {
    std::string id;
    Source source = Source::News;
    std::string text;
    std::string normalized_text;
    long word_count = 0;
    std::string published_at; // ISO-8601 UTC, "YYYY-MM-DDTHH:MM:SSZ"
    std::vector<std::string> company_ids;
    Stage stage = Stage::Ingested;

    /// Moves to `next`, enforcing monotone stage order. DroppedDuplicate is
    /// terminal; any transition out of it (or backwards) throws.
    void advance_stage(Stage next);
};

json to_json(const Document& doc);
Document document_from_json(const json& j);

/// Reads one JSON document per line. Errors name the offending line;
/// duplicate ids name both lines.
std::vector<Document> load_jsonl(const std::filesystem::path& path);

/// Writes documents one JSON object per line, field order fixed.
void save_jsonl(const std::filesystem::path& path, const std::vector<Document>& docs);

// ---------------------------------------------------------------------------
// Votes and consensus
// ---------------------------------------------------------------------------

struct TokenUsage {
    long input_tokens = 0;
    long output_tokens = 0;

    TokenUsage& operator+=(const TokenUsage& other) {
        input_tokens += other.input_tokens;
        output_tokens += other.output_tokens;
        return *this;
    }
};

struct LabelVote {
    std::string document_id;
    std::string model_id;
    SentimentLabel label = SentimentLabel::Neutral;
    double latency_ms = 0.0;
    TokenUsage usage;
};

enum class ConsensusOutcomeKind { Full, Majority, Disagreement };

std::string outcome_name(ConsensusOutcomeKind kind);

struct ConsensusResult {
    std::string document_id;
    std::vector<LabelVote> votes;
    ConsensusOutcomeKind outcome = ConsensusOutcomeKind::Disagreement;
    std::optional<SentimentLabel> final_label;
    std::optional<double> confidence; // 1.0 full, 2/3 majority, absent otherwise
};

/// Applies the modal-label rule to two or three valid votes. Full (3/3) gives
/// confidence 1.0, Majority (2/3) gives 2/3, all-distinct gives no label.
/// Two equal votes count as Majority; two differing votes as Disagreement.
ConsensusResult make_consensus(const std::string& document_id, const std::vector<LabelVote>& votes);

json to_json(const ConsensusResult& result);
ConsensusResult consensus_from_json(const json& j);

// ---------------------------------------------------------------------------
// Checkpoint store
// ---------------------------------------------------------------------------

struct CheckpointRecord {
    std::string document_id;
    std::string stage;
    json payload;
    std::string written_at;
    int attempt = 1;
};

/// Append-only per-stage JSONL logs under one directory
/// (`<run>/<stage>.ckpt.jsonl`). Puts are fsynced before returning; the
/// latest record per (document, stage) wins on load. Safe for concurrent
/// puts from many workers.
class CheckpointStore {
public:
    explicit CheckpointStore(std::filesystem::path directory);
    ~CheckpointStore();

    CheckpointStore(const CheckpointStore&) = delete;
    CheckpointStore& operator=(const CheckpointStore&) = delete;

    void put(const CheckpointRecord& record);

    /// Latest payload per document for a stage. Torn or corrupt lines are
    /// skipped and counted, never fatal.
    std::map<std::string, json> load(const std::string& stage);

    long corrupt_records_skipped() const { return corrupt_skipped_; }
    const std::filesystem::path& directory() const { return dir_; }

private:
    std::filesystem::path stage_path(const std::string& stage) const;

    std::filesystem::path dir_;
    std::mutex mutex_;
    std::unordered_map<std::string, std::FILE*> files_;
    long corrupt_skipped_ = 0;
};

// ---------------------------------------------------------------------------
// Mini-corpus generator
// ---------------------------------------------------------------------------

/// Deterministic synthetic corpus. News lengths sample around 268 words,
/// social around 24. Each document embeds keywords from one sentiment class
/// so the rule-based mock labeler has known ground truth, and the generator
/// plants a known number of exact and near duplicates for dedup tests.
struct MiniCorpus {
    std::vector<Document> documents;
    std::unordered_map<std::string, SentimentLabel> gold; // id -> intended label
    std::vector<std::pair<std::string, std::string>> planted_exact; // (dup id, original id)
    std::vector<std::pair<std::string, std::string>> planted_near;
};

struct MiniCorpusOptions {
    int n_news = 50;
    int n_social = 200;
    int exact_duplicates = 3;
    int near_duplicates = 3;
};

MiniCorpus generate_mini_corpus(std::uint64_t seed, const MiniCorpusOptions& options);

inline MiniCorpus generate_mini_corpus(std::uint64_t seed, int n_news, int n_social) {
    MiniCorpusOptions options;
    options.n_news = n_news;
    options.n_social = n_social;
    return generate_mini_corpus(seed, options);
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

/// FNV-1a 64-bit hex digest. Stable across platforms and runs.
std::string fnv1a_hex(std::string_view data);

/// Current time as "YYYY-MM-DDTHH:MM:SSZ".
std::string utc_now_iso8601();

/// Validates "YYYY-MM-DDTHH:MM:SSZ" layout (so string comparison orders by time).
bool is_iso8601_utc(const std::string& value);

} // namespace afsp
