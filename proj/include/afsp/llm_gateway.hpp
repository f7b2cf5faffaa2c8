#pragma once

#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "afsp/corpus.hpp"

namespace afsp::gateway {

struct Decoding {
    double temperature = 0.0;
    int max_tokens = 256;
    std::optional<double> top_p;
    std::optional<int> top_k;
};

struct Pricing {
    double input_usd_per_1m = 0.0;
    double output_usd_per_1m = 0.0;
};

struct BackendConfig {
    std::string model_id;
    std::string endpoint;    // full URL; empty for the mock
    std::string api_key_env; // environment variable holding the key
    Decoding decoding;
    Pricing pricing;
    int timeout_ms = 30000;
    int max_retries = 3;      // additional attempts after the first
    int retry_base_ms = 500;  // exponential backoff base
    int max_in_flight = 8;
};

json backend_to_json(const BackendConfig& config);
BackendConfig backend_from_json(const json& j);

/// cost = input/1e6 * input_rate + output/1e6 * output_rate.
double estimate_cost(const TokenUsage& usage, const Pricing& pricing);

struct Completion {
    std::string text;
    TokenUsage usage;
    int attempts = 1;
    bool from_cache = false;
    double latency_ms = 0.0;
};

/// A single transport attempt failed. Retryable failures back off and retry;
/// others surface immediately.
class TransportError : public Error {
public:
    TransportError(const std::string& msg, bool transient) : Error(msg), retryable(transient) {}
    bool retryable;
};

/// One network (or simulated) round trip. Implementations must be safe for
/// concurrent calls.
class ChatTransport {
public:
    virtual ~ChatTransport() = default;
    virtual Completion send(const BackendConfig& config, const std::string& system_text,
                            const std::string& user_text) = 0;
    virtual std::string name() const = 0;
};

/// Deterministic rule-based stand-in for hosted models:
///   - classification: first keyword-list hit in prompt priority order
///     (strongly positive -> strongly negative), default Neutral; answers
///     with the Arabic category word.
///   - summarization: greeting deletion, then the first three sentences.
///   - consolidation: sentence-level dedup of the partials, then the lead.
/// Token usage counts whitespace tokens; latency is always 0.
class MockTransport : public ChatTransport {
public:
    Completion send(const BackendConfig& config, const std::string& system_text,
                    const std::string& user_text) override;
    std::string name() const override { return "mock"; }
};

/// Generic chat-completion JSON over HTTP(S): system+user messages out,
/// choices[0].message.content and a usage block back. Vendors are config
/// presets, not code paths.
class HttpTransport : public ChatTransport {
public:
    Completion send(const BackendConfig& config, const std::string& system_text,
                    const std::string& user_text) override;
    std::string name() const override { return "http"; }
};

// ---------------------------------------------------------------------------
// Prompt templates
// ---------------------------------------------------------------------------

struct PromptTemplate {
    std::string name;
    std::string system_text;
    std::string user_template; // carries {input_text} or {partial_summaries}

    std::string render(const std::string& slot, const std::string& value) const;
};

/// Loads the three shipped templates from a resource directory
/// (<name>.system.txt / <name>.user.txt).
class PromptLibrary {
public:
    static PromptLibrary load(const std::filesystem::path& directory);

    PromptTemplate summarize_chunk;
    PromptTemplate consolidate;
    PromptTemplate classify;
};

// ---------------------------------------------------------------------------
// Response cache
// ---------------------------------------------------------------------------

/// On-disk response cache keyed by hash(model_id, decoding, prompt). Entries
/// store the full key material, so a hash collision reads as a miss. Writes
/// go through a temp file + rename.
class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path directory);

    std::optional<Completion> get(const std::string& key_material);
    void put(const std::string& key_material, const Completion& completion);

private:
    std::filesystem::path dir_;
    std::mutex mutex_;
};

// ---------------------------------------------------------------------------
// Gateway
// ---------------------------------------------------------------------------

struct GatewayStats {
    long backend_calls = 0; // transport attempts that left the gateway
    long cache_hits = 0;
    long truncation_warnings = 0;
    double total_cost_usd = 0.0;
    std::map<std::string, TokenUsage> usage_by_model;
    std::map<std::string, double> cost_by_model;
    std::map<std::string, long> calls_by_model;
};

struct ClassifyOutcome {
    SentimentLabel label = SentimentLabel::Neutral;
    TokenUsage usage;    // summed over the call and any repair call
    double latency_ms = 0.0;
};

struct TextOutcome {
    std::string text;
    TokenUsage usage;
    double latency_ms = 0.0;
};

/// Uniform access to all configured backends: prompt rendering, retry with
/// exponential backoff, response caching, per-backend in-flight limits and
/// token-cost accounting. Stateless per call; safe for concurrent use.
class Gateway {
public:
    Gateway(std::vector<BackendConfig> backends, std::shared_ptr<ChatTransport> transport,
            PromptLibrary prompts, std::shared_ptr<ResponseCache> cache = nullptr);

    Completion complete(const std::string& model_id, const std::string& system_text,
                        const std::string& user_text);

    /// Five-class classification with whitespace/diacritic-tolerant parsing;
    /// one repair retry, then TaxonomyViolation carrying the raw output.
    ClassifyOutcome classify_sentiment(const std::string& model_id, const std::string& text);

    TextOutcome summarize(const std::string& model_id, const std::string& text);
    TextOutcome consolidate(const std::string& model_id, const std::vector<std::string>& partials);

    const BackendConfig& backend(const std::string& model_id) const;
    GatewayStats stats() const;
    const PromptLibrary& prompts() const { return prompts_; }

    /// Parses a raw model answer against the five Arabic category words.
    static std::optional<SentimentLabel> parse_label(const std::string& raw);

private:
    struct InFlightLimit {
        std::mutex mutex;
        std::condition_variable cv;
        int available = 0;
    };

    Completion attempt_with_retry(const BackendConfig& config, const std::string& system_text,
                                  const std::string& user_text);

    std::map<std::string, BackendConfig> backends_;
    std::shared_ptr<ChatTransport> transport_;
    PromptLibrary prompts_;
    std::shared_ptr<ResponseCache> cache_;
    std::map<std::string, std::unique_ptr<InFlightLimit>> limits_;

    mutable std::mutex stats_mutex_;
    GatewayStats stats_;
};

} // namespace afsp::gateway
