#pragma once

#include <filesystem>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "afsp/corpus.hpp"
#include "afsp/normalize.hpp"

namespace afsp::entities {

struct CompanyRecord {
    std::string company_id;      // canonical ticker
    std::string canonical_name;  // Arabic display form
    std::vector<std::string> aliases; // normalized at load, non-empty
};

/// JSONL of CompanyRecord. Aliases (and the canonical name) are normalized
/// with the same config as documents; duplicate company_id is an error.
std::vector<CompanyRecord> load_companies(const std::filesystem::path& path,
                                          const normalize::NormalizationConfig& cfg);

struct FinancialLexicon {
    std::set<std::string> terms; // normalized

    /// One term per line, UTF-8. Loaded size is reported by the caller.
    static FinancialLexicon load(const std::filesystem::path& path,
                                 const normalize::NormalizationConfig& cfg);
};

struct TokenSpan {
    std::size_t begin = 0; // token index, half-open [begin, end)
    std::size_t end = 0;
};

/// Organization spans over a normalized, tokenized text.
class NerProvider {
public:
    virtual ~NerProvider() = default;
    virtual std::vector<TokenSpan> organizations(const std::vector<std::string>& tokens) = 0;
    virtual std::string name() const = 0;
};

/// Deterministic test provider: exact token-sequence matches against a
/// configured list of normalized surface forms.
class DictionaryNerProvider : public NerProvider {
public:
    explicit DictionaryNerProvider(std::vector<std::string> surface_forms);
    std::vector<TokenSpan> organizations(const std::vector<std::string>& tokens) override;
    std::string name() const override { return "dictionary"; }

private:
    std::vector<std::vector<std::string>> forms_; // tokenized, longest first
};

/// Client for an external tagger speaking a small JSON contract:
/// POST endpoint {"tokens": [...]} -> {"organizations": [{"begin":b,"end":e}]}.
class HttpNerProvider : public NerProvider {
public:
    HttpNerProvider(std::string base_url, std::string path, int timeout_ms = 10000);
    std::vector<TokenSpan> organizations(const std::vector<std::string>& tokens) override;
    std::string name() const override { return "http"; }

private:
    std::string base_url_;
    std::string path_;
    int timeout_ms_;
};

enum class Provenance { NerProvider, LexiconScan };

std::string provenance_name(Provenance provenance);

struct CandidateSpan {
    TokenSpan span;
    std::string text; // joined tokens, edge punctuation stripped
    Provenance provenance = Provenance::LexiconScan;
};

struct EntityLink {
    std::string document_id;
    std::string surface;
    std::string company_id;
    double score = 0.0;
    Provenance provenance = Provenance::LexiconScan;
    std::string matched_by; // "edit" or "token": which sub-metric fired
    std::string alias;      // best-scoring alias
};

json link_to_json(const EntityLink& link);
EntityLink link_from_json(const json& j);

/// max(edit similarity, discounted token containment):
///   edit  = 1 - levenshtein(a,b) / max(|a|,|b|)           (codepoints)
///   token = 0.95 * |A∩B| / min(|A|,|B|)                   (token sets)
/// The 0.95 discount keeps 1.0 reserved for exact string equality while a
/// short official alias embedded in a longer candidate still clears 0.80.
double fuzzy_score(const std::string& candidate, const std::string& alias);

/// Immutable alias/lexicon tables shared read-only across workers;
/// linking itself is per-document and side-effect free apart from
/// doc.company_ids.
class EntityLinker {
public:
    EntityLinker(std::vector<CompanyRecord> companies, FinancialLexicon lexicon,
                 NerProvider* ner, double threshold = 0.80);

    /// Union of NER organization spans and lexicon-triggered n-grams (n<=4),
    /// merged by span. NER failure degrades to lexicon-scan-only.
    std::vector<CandidateSpan> extract_candidates(const Document& doc);

    /// Best alias per candidate across all companies; a link is emitted iff
    /// score >= threshold. Ties resolve by (score, alias length, company_id).
    /// Appends distinct linked company_ids to doc.company_ids.
    std::vector<EntityLink> link(Document& doc);

    long ner_degraded_count() const { return ner_degraded_; }
    double threshold() const { return threshold_; }
    const std::vector<CompanyRecord>& companies() const { return companies_; }

private:
    struct AliasEntry {
        std::string text;
        std::size_t codepoints;
        std::size_t company_index;
    };

    std::vector<CompanyRecord> companies_;
    FinancialLexicon lexicon_;
    NerProvider* ner_;
    double threshold_;
    std::vector<AliasEntry> aliases_;
    std::set<std::string> trigger_tokens_;
    long ner_degraded_ = 0;
};

} // namespace afsp::entities
