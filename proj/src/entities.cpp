#include "afsp/entities.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#define CPPHTTPLIB_NO_EXCEPTIONS 0
#include <httplib.h>

#include "afsp/error.hpp"
#include "afsp/utf8.hpp"

namespace afsp::entities {

namespace {

// Content tokens of a document for candidate generation: edge punctuation
// stripped, empty tokens removed.
std::vector<std::string> content_tokens(const std::string& normalized_text) {
    std::vector<std::string> tokens;
    for (const auto& raw : normalize::tokenize(normalized_text)) {
        std::string stripped = normalize::strip_edge_punctuation(raw);
        if (!stripped.empty()) tokens.push_back(std::move(stripped));
    }
    return tokens;
}

std::string join_tokens(const std::vector<std::string>& tokens, std::size_t begin,
                        std::size_t end) {
    std::string out;
    for (std::size_t i = begin; i < end; ++i) {
        if (!out.empty()) out += ' ';
        out += tokens[i];
    }
    return out;
}

std::size_t levenshtein(const std::u32string& a, const std::u32string& b) {
    const std::size_t n = a.size(), m = b.size();
    if (n == 0) return m;
    if (m == 0) return n;
    std::vector<std::size_t> prev(m + 1), curr(m + 1);
    for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
    for (std::size_t i = 1; i <= n; ++i) {
        curr[0] = i;
        for (std::size_t j = 1; j <= m; ++j) {
            const std::size_t subst = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            curr[j] = std::min({prev[j] + 1, curr[j - 1] + 1, subst});
        }
        std::swap(prev, curr);
    }
    return prev[m];
}

std::set<std::string> token_set(const std::string& text) {
    std::set<std::string> out;
    for (const auto& token : normalize::tokenize(text)) out.insert(token);
    return out;
}

} // namespace

double fuzzy_score(const std::string& candidate, const std::string& alias) {
    if (candidate == alias) return 1.0;

    const std::u32string a = utf8::decode(candidate);
    const std::u32string b = utf8::decode(alias);
    const std::size_t max_len = std::max(a.size(), b.size());
    double edit_sim = 0.0;
    if (max_len > 0)
        edit_sim = 1.0 - static_cast<double>(levenshtein(a, b)) / static_cast<double>(max_len);

    const std::set<std::string> ta = token_set(candidate);
    const std::set<std::string> tb = token_set(alias);
    double token_sim = 0.0;
    if (!ta.empty() && !tb.empty()) {
        std::size_t shared = 0;
        for (const auto& t : ta)
            if (tb.count(t)) ++shared;
        token_sim = 0.95 * static_cast<double>(shared) /
                    static_cast<double>(std::min(ta.size(), tb.size()));
    }
    return std::max(edit_sim, token_sim);
}

std::vector<CompanyRecord> load_companies(const std::filesystem::path& path,
                                          const normalize::NormalizationConfig& cfg) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open companies file " + path.string());

    std::vector<CompanyRecord> companies;
    std::set<std::string> seen_ids;
    std::string line;
    long line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError("companies line " + std::to_string(line_number) + ": " + e.what(),
                             line_number);
        }
        CompanyRecord rec;
        rec.company_id = j.at("company_id").get<std::string>();
        rec.canonical_name = normalize::normalize_text(j.at("canonical_name").get<std::string>(), cfg);
        for (const auto& alias : j.at("aliases")) {
            std::string norm = normalize::normalize_text(alias.get<std::string>(), cfg);
            if (!norm.empty()) rec.aliases.push_back(std::move(norm));
        }
        if (std::find(rec.aliases.begin(), rec.aliases.end(), rec.canonical_name) ==
                rec.aliases.end() &&
            !rec.canonical_name.empty())
            rec.aliases.push_back(rec.canonical_name);
        if (rec.aliases.empty())
            throw ParseError("companies line " + std::to_string(line_number) + ": company " +
                                 rec.company_id + " has no aliases",
                             line_number);
        if (!seen_ids.insert(rec.company_id).second)
            throw ParseError("companies line " + std::to_string(line_number) +
                                 ": duplicate company_id " + rec.company_id,
                             line_number);
        companies.push_back(std::move(rec));
    }
    return companies;
}

FinancialLexicon FinancialLexicon::load(const std::filesystem::path& path,
                                        const normalize::NormalizationConfig& cfg) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open lexicon file " + path.string());
    FinancialLexicon lexicon;
    std::string line;
    while (std::getline(in, line)) {
        const std::string term = normalize::normalize_text(line, cfg);
        if (!term.empty()) lexicon.terms.insert(term);
    }
    return lexicon;
}

std::string provenance_name(Provenance provenance) {
    return provenance == Provenance::NerProvider ? "ner_provider" : "lexicon_scan";
}

json link_to_json(const EntityLink& link) {
    json j;
    j["document_id"] = link.document_id;
    j["surface"] = link.surface;
    j["company_id"] = link.company_id;
    j["score"] = link.score;
    j["provenance"] = provenance_name(link.provenance);
    j["matched_by"] = link.matched_by;
    j["alias"] = link.alias;
    return j;
}

EntityLink link_from_json(const json& j) {
    EntityLink link;
    link.document_id = j.at("document_id").get<std::string>();
    link.surface = j.at("surface").get<std::string>();
    link.company_id = j.at("company_id").get<std::string>();
    link.score = j.at("score").get<double>();
    link.provenance = j.value("provenance", "lexicon_scan") == "ner_provider"
                          ? Provenance::NerProvider
                          : Provenance::LexiconScan;
    link.matched_by = j.value("matched_by", "");
    link.alias = j.value("alias", "");
    return link;
}

// ---------------------------------------------------------------------------
// NER providers
// ---------------------------------------------------------------------------

DictionaryNerProvider::DictionaryNerProvider(std::vector<std::string> surface_forms) {
    for (const auto& form : surface_forms) {
        auto tokens = normalize::tokenize(form);
        if (!tokens.empty()) forms_.push_back(std::move(tokens));
    }
    std::sort(forms_.begin(), forms_.end(),
              [](const auto& a, const auto& b) { return a.size() > b.size(); });
}

std::vector<TokenSpan> DictionaryNerProvider::organizations(
    const std::vector<std::string>& tokens) {
    std::vector<TokenSpan> spans;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        for (const auto& form : forms_) {
            if (i + form.size() > tokens.size()) continue;
            bool match = true;
            for (std::size_t k = 0; k < form.size(); ++k)
                if (tokens[i + k] != form[k]) {
                    match = false;
                    break;
                }
            if (match) {
                spans.push_back({i, i + form.size()});
                break; // longest form wins at this position
            }
        }
    }
    return spans;
}

HttpNerProvider::HttpNerProvider(std::string base_url, std::string path, int timeout_ms)
    : base_url_(std::move(base_url)), path_(std::move(path)), timeout_ms_(timeout_ms) {}

std::vector<TokenSpan> HttpNerProvider::organizations(const std::vector<std::string>& tokens) {
    httplib::Client client(base_url_);
    client.set_connection_timeout(0, timeout_ms_ * 1000);
    client.set_read_timeout(timeout_ms_ / 1000, (timeout_ms_ % 1000) * 1000);

    json body;
    body["tokens"] = tokens;
    auto res = client.Post(path_, body.dump(), "application/json");
    if (!res || res->status != 200)
        throw BackendError("NER provider unavailable at " + base_url_ + path_);

    std::vector<TokenSpan> spans;
    try {
        const json reply = json::parse(res->body);
        for (const auto& org : reply.at("organizations")) {
            TokenSpan span;
            span.begin = org.at("begin").get<std::size_t>();
            span.end = org.at("end").get<std::size_t>();
            if (span.begin < span.end && span.end <= tokens.size()) spans.push_back(span);
        }
    } catch (const json::exception& e) {
        throw BackendError(std::string("NER provider returned malformed response: ") + e.what());
    }
    return spans;
}

// ---------------------------------------------------------------------------
// EntityLinker
// ---------------------------------------------------------------------------

EntityLinker::EntityLinker(std::vector<CompanyRecord> companies, FinancialLexicon lexicon,
                           NerProvider* ner, double threshold)
    : companies_(std::move(companies)), lexicon_(std::move(lexicon)), ner_(ner),
      threshold_(threshold) {
    if (companies_.empty())
        throw ConfigError("entity linking configured with an empty company set");
    if (threshold_ <= 0.0 || threshold_ > 1.0)
        throw ConfigError("link threshold must lie in (0,1]");

    for (std::size_t c = 0; c < companies_.size(); ++c) {
        for (const auto& alias : companies_[c].aliases) {
            aliases_.push_back({alias, utf8::length(alias), c});
            for (const auto& token : normalize::tokenize(alias)) trigger_tokens_.insert(token);
        }
    }
    for (const auto& term : lexicon_.terms)
        for (const auto& token : normalize::tokenize(term)) trigger_tokens_.insert(token);
}

std::vector<CandidateSpan> EntityLinker::extract_candidates(const Document& doc) {
    const std::vector<std::string> tokens = content_tokens(doc.normalized_text);
    if (tokens.empty()) return {};

    // (begin, end) -> provenance; NER wins when a span comes from both.
    std::map<std::pair<std::size_t, std::size_t>, Provenance> spans;

    if (ner_ != nullptr) {
        try {
            for (const TokenSpan& span : ner_->organizations(tokens))
                spans[{span.begin, span.end}] = Provenance::NerProvider;
        } catch (const std::exception&) {
            ++ner_degraded_; // fall back to lexicon scan only
        }
    }

    constexpr std::size_t kMaxGram = 4;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (!trigger_tokens_.count(tokens[i])) continue;
        const std::size_t lo = i >= kMaxGram - 1 ? i - (kMaxGram - 1) : 0;
        for (std::size_t s = lo; s <= i; ++s) {
            for (std::size_t e = i + 1; e <= std::min(tokens.size(), s + kMaxGram); ++e) {
                if (e <= s) continue;
                spans.emplace(std::make_pair(s, e), Provenance::LexiconScan);
            }
        }
    }

    std::vector<CandidateSpan> candidates;
    candidates.reserve(spans.size());
    for (const auto& [range, provenance] : spans) {
        CandidateSpan cand;
        cand.span = {range.first, range.second};
        cand.text = join_tokens(tokens, range.first, range.second);
        cand.provenance = provenance;
        candidates.push_back(std::move(cand));
    }
    return candidates;
}

std::vector<EntityLink> EntityLinker::link(Document& doc) {
    std::vector<EntityLink> links;
    std::map<std::pair<std::string, std::string>, std::size_t> emitted; // (surface, company) -> idx

    for (const CandidateSpan& cand : extract_candidates(doc)) {
        double best_score = -1.0;
        const AliasEntry* best_alias = nullptr;
        for (const AliasEntry& entry : aliases_) {
            const double score = fuzzy_score(cand.text, entry.text);
            if (score < best_score) continue;
            if (score > best_score || best_alias == nullptr ||
                entry.codepoints > best_alias->codepoints ||
                (entry.codepoints == best_alias->codepoints &&
                 companies_[entry.company_index].company_id <
                     companies_[best_alias->company_index].company_id)) {
                best_score = score;
                best_alias = &entry;
            }
        }
        if (best_alias == nullptr || best_score < threshold_) continue;

        EntityLink link;
        link.document_id = doc.id;
        link.surface = cand.text;
        link.company_id = companies_[best_alias->company_index].company_id;
        link.score = best_score;
        link.provenance = cand.provenance;
        link.alias = best_alias->text;
        // Which sub-metric carried the decision (equal strings count as edit).
        const std::u32string a = utf8::decode(cand.text);
        const std::u32string b = utf8::decode(best_alias->text);
        const std::size_t max_len = std::max(a.size(), b.size());
        const double edit_sim =
            max_len == 0 ? 1.0
                         : 1.0 - static_cast<double>(levenshtein(a, b)) / static_cast<double>(max_len);
        link.matched_by = edit_sim >= best_score - 1e-12 ? "edit" : "token";

        const auto key = std::make_pair(link.surface, link.company_id);
        const auto it = emitted.find(key);
        if (it == emitted.end()) {
            emitted.emplace(key, links.size());
            links.push_back(std::move(link));
        } else if (link.score > links[it->second].score) {
            links[it->second] = std::move(link);
        }
    }

    std::set<std::string> ids(doc.company_ids.begin(), doc.company_ids.end());
    for (const EntityLink& link : links) ids.insert(link.company_id);
    doc.company_ids.assign(ids.begin(), ids.end());
    return links;
}

} // namespace afsp::entities
