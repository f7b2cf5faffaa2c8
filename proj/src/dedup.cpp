#include "afsp/dedup.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "afsp/error.hpp"
#include "afsp/normalize.hpp"

namespace afsp::dedup {

namespace {

std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t hash = 0xcbf29ce484222325ull;
    for (unsigned char c : data) {
        hash ^= c;
        hash *= 0x100000001b3ull;
    }
    return hash;
}

struct UnionFind {
    std::vector<std::size_t> parent;

    explicit UnionFind(std::size_t n) : parent(n) {
        std::iota(parent.begin(), parent.end(), 0);
    }
    std::size_t find(std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

// Ordering rule for the kept representative of a duplicate cluster.
bool earlier(const Document& a, const Document& b) {
    if (a.published_at != b.published_at) return a.published_at < b.published_at;
    return a.id < b.id;
}

} // namespace

IdfTable tfidf_fit(std::span<const std::string> corpus) {
    if (corpus.empty()) throw Error("tfidf_fit: corpus is empty");

    IdfTable table;
    table.document_count = corpus.size();
    std::unordered_map<std::string, std::size_t> df;
    std::string fingerprint;
    for (const std::string& text : corpus) {
        auto tokens = normalize::tokenize(text);
        std::sort(tokens.begin(), tokens.end());
        tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
        for (auto& token : tokens) df[token]++;
        fingerprint += fnv1a_hex(text);
    }
    const double n = static_cast<double>(corpus.size());
    for (const auto& [term, count] : df)
        table.idf[term] = std::log((1.0 + n) / (1.0 + static_cast<double>(count))) + 1.0;
    table.corpus_id = fnv1a_hex(fingerprint);
    return table;
}

TfidfVector tfidf_vectorize(const std::string& text, const IdfTable& table) {
    TfidfVector vec;
    vec.corpus_id = table.corpus_id;

    std::map<std::string, double> tf;
    for (const auto& token : normalize::tokenize(text)) tf[token] += 1.0;

    // Unseen terms get the df=0 smoothing of the same formula.
    const double n = static_cast<double>(table.document_count);
    double norm_sq = 0.0;
    for (const auto& [term, count] : tf) {
        const auto it = table.idf.find(term);
        const double idf = it != table.idf.end() ? it->second : std::log(1.0 + n) + 1.0;
        const double weight = count * idf;
        vec.terms[term] = weight;
        norm_sq += weight * weight;
    }
    if (norm_sq > 0.0) {
        const double norm = std::sqrt(norm_sq);
        for (auto& [term, weight] : vec.terms) weight /= norm;
    }
    return vec;
}

double cosine(const TfidfVector& a, const TfidfVector& b) {
    if (a.corpus_id != b.corpus_id)
        throw Error("cosine: vectors come from different idf tables (" + a.corpus_id + " vs " +
                    b.corpus_id + ")");
    const auto& small = a.terms.size() <= b.terms.size() ? a : b;
    const auto& large = a.terms.size() <= b.terms.size() ? b : a;
    double dot = 0.0;
    for (const auto& [term, weight] : small.terms) {
        const auto it = large.terms.find(term);
        if (it != large.terms.end()) dot += weight * it->second;
    }
    return std::clamp(dot, 0.0, 1.0);
}

std::string exact_key(const std::string& normalized_text) {
    return fnv1a_hex(normalized_text);
}

std::string verdict_name(Verdict verdict) {
    switch (verdict) {
        case Verdict::Keep: return "keep";
        case Verdict::DropExact: return "drop_exact";
        case Verdict::DropNear: return "drop_near";
        case Verdict::DropSemantic: return "drop_semantic";
    }
    return "keep";
}

json decision_to_json(const DedupDecision& decision) {
    json j;
    j["document_id"] = decision.document_id;
    j["verdict"] = verdict_name(decision.verdict);
    if (decision.duplicate_of) j["duplicate_of"] = *decision.duplicate_of;
    if (decision.similarity) j["similarity"] = *decision.similarity;
    return j;
}

DedupDecision decision_from_json(const json& j) {
    DedupDecision d;
    d.document_id = j.at("document_id").get<std::string>();
    const std::string v = j.at("verdict").get<std::string>();
    if (v == "keep")
        d.verdict = Verdict::Keep;
    else if (v == "drop_exact")
        d.verdict = Verdict::DropExact;
    else if (v == "drop_near")
        d.verdict = Verdict::DropNear;
    else if (v == "drop_semantic")
        d.verdict = Verdict::DropSemantic;
    else
        throw ParseError("unknown dedup verdict \"" + v + "\"");
    if (j.contains("duplicate_of")) d.duplicate_of = j["duplicate_of"].get<std::string>();
    if (j.contains("similarity")) d.similarity = j["similarity"].get<double>();
    return d;
}

std::vector<float> HashingEmbedder::embed(const std::string& normalized_text) {
    std::vector<float> vec(dims_, 0.0f);
    const auto tokens = normalize::tokenize(normalized_text);
    auto add_feature = [&](const std::string& feature) {
        const std::uint64_t h = fnv1a64(feature);
        const std::size_t dim = h % dims_;
        vec[dim] += (h >> 63) ? 1.0f : -1.0f;
    };
    if (tokens.size() == 1) add_feature(tokens[0]);
    for (std::size_t i = 0; i + 1 < tokens.size(); ++i)
        add_feature(tokens[i] + "\x1f" + tokens[i + 1]);

    double norm_sq = 0.0;
    for (float v : vec) norm_sq += static_cast<double>(v) * v;
    if (norm_sq > 0.0) {
        const float norm = static_cast<float>(std::sqrt(norm_sq));
        for (float& v : vec) v /= norm;
    }
    return vec;
}

DedupResult dedup_pass(std::span<const Document> docs, const DedupConfig& config,
                       EmbeddingProvider* embedder) {
    if (config.near_threshold <= 0.0 || config.near_threshold > 1.0 ||
        config.semantic_threshold <= 0.0 || config.semantic_threshold > 1.0)
        throw ConfigError("dedup thresholds must lie in (0,1]");

    const std::size_t n = docs.size();
    DedupResult result;
    result.decisions.resize(n);
    for (std::size_t i = 0; i < n; ++i) result.decisions[i].document_id = docs[i].id;
    if (n == 0) return result;

    auto drop = [&](std::size_t idx, Verdict verdict, std::size_t rep, double similarity) {
        result.decisions[idx].verdict = verdict;
        result.decisions[idx].duplicate_of = docs[rep].id;
        result.decisions[idx].similarity = similarity;
    };

    // Pass 1: exact. Digest buckets, then literal equality within a bucket so
    // a digest collision can never drop a non-duplicate.
    std::vector<char> alive(n, 1);
    {
        std::unordered_map<std::string, std::vector<std::size_t>> buckets;
        for (std::size_t i = 0; i < n; ++i) buckets[exact_key(docs[i].normalized_text)].push_back(i);
        for (auto& [digest, members] : buckets) {
            if (members.size() < 2) continue;
            std::map<std::string_view, std::vector<std::size_t>> identical;
            for (std::size_t idx : members)
                identical[std::string_view(docs[idx].normalized_text)].push_back(idx);
            for (auto& [text, group] : identical) {
                if (group.size() < 2) continue;
                std::size_t rep = group[0];
                for (std::size_t idx : group)
                    if (earlier(docs[idx], docs[rep])) rep = idx;
                for (std::size_t idx : group) {
                    if (idx == rep) continue;
                    drop(idx, Verdict::DropExact, rep, 1.0);
                    alive[idx] = 0;
                }
            }
        }
    }

    auto cluster_drop = [&](const std::vector<std::size_t>& members, UnionFind& uf,
                            const std::unordered_map<std::size_t, double>& best_edge,
                            Verdict verdict) {
        std::unordered_map<std::size_t, std::vector<std::size_t>> clusters;
        for (std::size_t k = 0; k < members.size(); ++k)
            clusters[uf.find(k)].push_back(k);
        for (auto& [root, group] : clusters) {
            if (group.size() < 2) continue;
            std::size_t rep = group[0];
            for (std::size_t k : group)
                if (earlier(docs[members[k]], docs[members[rep]])) rep = k;
            for (std::size_t k : group) {
                if (k == rep) continue;
                drop(members[k], verdict, members[rep], best_edge.at(k));
                alive[members[k]] = 0;
            }
        }
    };

    // Pass 2: TF-IDF cosine within length-blocked buckets over exact survivors.
    {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < n; ++i)
            if (alive[i]) members.push_back(i);
        if (members.size() > 1) {
            std::vector<std::string> texts;
            texts.reserve(members.size());
            for (std::size_t idx : members) texts.push_back(docs[idx].normalized_text);
            const IdfTable table = tfidf_fit(texts);
            std::vector<TfidfVector> vectors;
            vectors.reserve(members.size());
            for (const auto& text : texts) vectors.push_back(tfidf_vectorize(text, table));

            // Sort by word count; a sliding window realizes the symmetric
            // blocking predicate min_wc >= (1-ratio)*max_wc.
            std::vector<std::size_t> order(members.size());
            std::iota(order.begin(), order.end(), 0);
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return docs[members[a]].word_count < docs[members[b]].word_count;
            });

            UnionFind uf(members.size());
            std::unordered_map<std::size_t, double> best_edge;
            for (std::size_t oj = 1; oj < order.size(); ++oj) {
                const std::size_t j = order[oj];
                const double max_wc = static_cast<double>(docs[members[j]].word_count);
                for (std::size_t oi = oj; oi-- > 0;) {
                    const std::size_t i = order[oi];
                    if (static_cast<double>(docs[members[i]].word_count) <
                        (1.0 - config.block_ratio) * max_wc)
                        break;
                    const double sim = cosine(vectors[i], vectors[j]);
                    if (sim >= config.near_threshold) {
                        uf.unite(i, j);
                        best_edge[i] = std::max(best_edge.count(i) ? best_edge[i] : 0.0, sim);
                        best_edge[j] = std::max(best_edge.count(j) ? best_edge[j] : 0.0, sim);
                    }
                }
            }
            cluster_drop(members, uf, best_edge, Verdict::DropNear);
        }
    }

    // Pass 3: semantic cosine over remaining survivors. Provider failures
    // degrade the pass per document, never the run.
    if (embedder != nullptr) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < n; ++i)
            if (alive[i]) members.push_back(i);
        if (members.size() > 1) {
            std::vector<std::vector<float>> embeddings(members.size());
            std::vector<char> embedded(members.size(), 0);
            for (std::size_t k = 0; k < members.size(); ++k) {
                try {
                    embeddings[k] = embedder->embed(docs[members[k]].normalized_text);
                    embedded[k] = 1;
                } catch (const std::exception&) {
                    ++result.semantic_degraded;
                }
            }
            UnionFind uf(members.size());
            std::unordered_map<std::size_t, double> best_edge;
            for (std::size_t a = 0; a < members.size(); ++a) {
                if (!embedded[a]) continue;
                for (std::size_t b = a + 1; b < members.size(); ++b) {
                    if (!embedded[b] || embeddings[a].size() != embeddings[b].size()) continue;
                    double dot = 0.0;
                    for (std::size_t d = 0; d < embeddings[a].size(); ++d)
                        dot += static_cast<double>(embeddings[a][d]) * embeddings[b][d];
                    const double sim = std::clamp(dot, 0.0, 1.0);
                    if (sim >= config.semantic_threshold) {
                        uf.unite(a, b);
                        best_edge[a] = std::max(best_edge.count(a) ? best_edge[a] : 0.0, sim);
                        best_edge[b] = std::max(best_edge.count(b) ? best_edge[b] : 0.0, sim);
                    }
                }
            }
            cluster_drop(members, uf, best_edge, Verdict::DropSemantic);
        }
    }

    return result;
}

} // namespace afsp::dedup
