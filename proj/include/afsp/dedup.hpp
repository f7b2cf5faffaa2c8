#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "afsp/corpus.hpp"

namespace afsp::dedup {

/// IDF table fit on one corpus. corpus_id binds vectors to the fit that
/// produced them; mixing tables is an error.
struct IdfTable {
    std::unordered_map<std::string, double> idf;
    std::size_t document_count = 0;
    std::string corpus_id;
};

/// L2-normalized tf*idf weights of one document.
struct TfidfVector {
    std::map<std::string, double> terms;
    std::string corpus_id;
};

/// Smoothed idf: ln((1+N)/(1+df)) + 1, so corpus-universal terms keep a
/// small positive weight instead of zeroing vectors.
IdfTable tfidf_fit(std::span<const std::string> corpus);

TfidfVector tfidf_vectorize(const std::string& text, const IdfTable& table);

/// In [0,1]; 1 for identical non-empty documents, 0 for disjoint vocabularies.
double cosine(const TfidfVector& a, const TfidfVector& b);

/// Deterministic digest of normalized text (equal texts, equal digests).
std::string exact_key(const std::string& normalized_text);

enum class Verdict { Keep, DropExact, DropNear, DropSemantic };

std::string verdict_name(Verdict verdict);

struct DedupDecision {
    std::string document_id;
    Verdict verdict = Verdict::Keep;
    std::optional<std::string> duplicate_of; // cluster representative
    std::optional<double> similarity;        // supporting edge, >= threshold
};

json decision_to_json(const DedupDecision& decision);
DedupDecision decision_from_json(const json& j);

/// Text to unit vector. Implementations must be deterministic for a fixed
/// configuration; failures degrade the semantic pass, never the pipeline.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::vector<float> embed(const std::string& normalized_text) = 0;
    virtual std::string name() const = 0;
};

/// Deterministic signed feature hashing over token bigrams. A test-grade
/// stand-in for a real embedding service: near-identical texts land near
/// each other, unrelated texts do not.
class HashingEmbedder : public EmbeddingProvider {
public:
    explicit HashingEmbedder(std::size_t dimensions = 256) : dims_(dimensions) {}
    std::vector<float> embed(const std::string& normalized_text) override;
    std::string name() const override { return "hashing-bigram"; }

private:
    std::size_t dims_;
};

struct DedupConfig {
    double near_threshold = 0.90;
    double semantic_threshold = 0.95;
    /// Two documents are compared only when min_wc >= (1-block_ratio)*max_wc.
    double block_ratio = 0.30;
};

struct DedupResult {
    std::vector<DedupDecision> decisions; // one per input, input order
    long semantic_degraded = 0;           // docs skipped because embedding failed
};

/// Three passes over normalized documents: exact digests, TF-IDF cosine
/// within length-blocked buckets, then semantic cosine over survivors.
/// The kept representative of a cluster is the earliest (published_at, id).
DedupResult dedup_pass(std::span<const Document> docs, const DedupConfig& config,
                       EmbeddingProvider* embedder);

} // namespace afsp::dedup
