// Brute-force reference implementations used to pin expected values.
// Everything here is deliberately written the slow, obvious way and stays
// independent of the library's fast paths.
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "afsp/corpus.hpp"
#include "afsp/normalize.hpp"
#include "afsp/utf8.hpp"

namespace oracle {

// Full-matrix Levenshtein over codepoints.
inline std::size_t levenshtein(const std::string& a_utf8, const std::string& b_utf8) {
    const std::u32string a = afsp::utf8::decode(a_utf8);
    const std::u32string b = afsp::utf8::decode(b_utf8);
    std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
    for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
    for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i)
        for (std::size_t j = 1; j <= b.size(); ++j)
            d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1,
                                d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0u : 1u)});
    return d[a.size()][b.size()];
}

// The linker's similarity, recomputed from its published definition:
// max(1 - lev/maxLen, 0.95 * |A∩B| / min(|A|,|B|)), 1.0 iff equal.
inline double fuzzy_score(const std::string& candidate, const std::string& alias) {
    if (candidate == alias) return 1.0;
    const std::size_t la = afsp::utf8::length(candidate);
    const std::size_t lb = afsp::utf8::length(alias);
    const std::size_t max_len = std::max(la, lb);
    double edit_sim = 0.0;
    if (max_len > 0)
        edit_sim =
            1.0 - static_cast<double>(levenshtein(candidate, alias)) / static_cast<double>(max_len);

    std::set<std::string> ta, tb;
    for (const auto& t : afsp::normalize::tokenize(candidate)) ta.insert(t);
    for (const auto& t : afsp::normalize::tokenize(alias)) tb.insert(t);
    double token_sim = 0.0;
    if (!ta.empty() && !tb.empty()) {
        std::size_t shared = 0;
        for (const auto& t : ta) shared += tb.count(t);
        token_sim = 0.95 * static_cast<double>(shared) /
                    static_cast<double>(std::min(ta.size(), tb.size()));
    }
    return std::max(edit_sim, token_sim);
}

// TF-IDF with the library's smoothing, built by direct scanning; cosine by
// an explicit dot product over the term union.
struct TfidfOracle {
    std::vector<std::map<std::string, double>> vectors;

    explicit TfidfOracle(const std::vector<std::string>& corpus) {
        const double n = static_cast<double>(corpus.size());
        std::map<std::string, double> df;
        std::vector<std::map<std::string, double>> tf(corpus.size());
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            for (const auto& token : afsp::normalize::tokenize(corpus[i])) tf[i][token] += 1.0;
            for (const auto& [term, count] : tf[i]) df[term] += 1.0;
        }
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            std::map<std::string, double> weights;
            double norm_sq = 0.0;
            for (const auto& [term, count] : tf[i]) {
                const double idf = std::log((1.0 + n) / (1.0 + df[term])) + 1.0;
                weights[term] = count * idf;
                norm_sq += weights[term] * weights[term];
            }
            if (norm_sq > 0)
                for (auto& [term, w] : weights) w /= std::sqrt(norm_sq);
            vectors.push_back(std::move(weights));
        }
    }

    double cosine(std::size_t i, std::size_t j) const {
        std::set<std::string> terms;
        for (const auto& [t, w] : vectors[i]) terms.insert(t);
        for (const auto& [t, w] : vectors[j]) terms.insert(t);
        double dot = 0.0;
        for (const auto& t : terms) {
            const auto a = vectors[i].find(t);
            const auto b = vectors[j].find(t);
            if (a != vectors[i].end() && b != vectors[j].end()) dot += a->second * b->second;
        }
        return dot;
    }
};

// Cohen's kappa by spreadsheet arithmetic over explicit marginals.
inline double cohen_kappa(const std::vector<int>& a, const std::vector<int>& b) {
    const double n = static_cast<double>(a.size());
    double agree = 0.0;
    std::map<int, double> row, col;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] == b[i]) agree += 1.0;
        row[a[i]] += 1.0;
        col[b[i]] += 1.0;
    }
    const double po = agree / n;
    double pe = 0.0;
    for (const auto& [cls, count] : row) {
        const auto it = col.find(cls);
        if (it != col.end()) pe += (count / n) * (it->second / n);
    }
    return (po - pe) / (1.0 - pe);
}

// Fleiss' kappa straight from the textbook definition.
inline double fleiss_kappa(const std::vector<std::vector<int>>& items, int categories) {
    const double n = static_cast<double>(items.front().size());
    const double N = static_cast<double>(items.size());
    std::vector<double> pj(categories, 0.0);
    double p_bar = 0.0;
    for (const auto& item : items) {
        std::vector<double> counts(categories, 0.0);
        for (int label : item) counts[label] += 1.0;
        double s = 0.0;
        for (int j = 0; j < categories; ++j) {
            s += counts[j] * counts[j];
            pj[j] += counts[j];
        }
        p_bar += (s - n) / (n * (n - 1.0));
    }
    p_bar /= N;
    double pe = 0.0;
    for (int j = 0; j < categories; ++j) {
        pj[j] /= (n * N);
        pe += pj[j] * pj[j];
    }
    return (p_bar - pe) / (1.0 - pe);
}

// ROUGE-N F1 by explicit clipped n-gram counting.
inline double rouge_n(const std::vector<std::string>& ref, const std::vector<std::string>& cand,
                      int n) {
    auto grams = [n](const std::vector<std::string>& tokens) {
        std::map<std::vector<std::string>, long> out;
        for (std::size_t i = 0; i + n <= tokens.size(); ++i)
            out[std::vector<std::string>(tokens.begin() + i, tokens.begin() + i + n)] += 1;
        return out;
    };
    const auto rg = grams(ref);
    const auto cg = grams(cand);
    long ref_total = 0, cand_total = 0, matched = 0;
    for (const auto& [g, c] : rg) ref_total += c;
    for (const auto& [g, c] : cg) {
        cand_total += c;
        const auto it = rg.find(g);
        if (it != rg.end()) matched += std::min(c, it->second);
    }
    if (ref_total == 0 && cand_total == 0) return 1.0;
    if (ref_total == 0 || cand_total == 0) return 0.0;
    const double p = static_cast<double>(matched) / cand_total;
    const double r = static_cast<double>(matched) / ref_total;
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

// LCS length by full-table dynamic programming.
inline long lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::vector<long>> table(a.size() + 1, std::vector<long>(b.size() + 1, 0));
    for (std::size_t i = 1; i <= a.size(); ++i)
        for (std::size_t j = 1; j <= b.size(); ++j)
            table[i][j] = a[i - 1] == b[j - 1] ? table[i - 1][j - 1] + 1
                                               : std::max(table[i - 1][j], table[i][j - 1]);
    return table[a.size()][b.size()];
}

// Per-class counts for a classification report, tallied the long way.
struct ClassCounts {
    long tp = 0, fp = 0, fn = 0, support = 0;
};

inline std::vector<ClassCounts> confusion_counts(const std::vector<int>& gold,
                                                 const std::vector<int>& pred, int classes) {
    std::vector<ClassCounts> out(classes);
    for (int c = 0; c < classes; ++c) {
        for (std::size_t i = 0; i < gold.size(); ++i) {
            if (gold[i] == c && pred[i] == c) ++out[c].tp;
            if (gold[i] != c && pred[i] == c) ++out[c].fp;
            if (gold[i] == c && pred[i] != c) ++out[c].fn;
            if (gold[i] == c) ++out[c].support;
        }
    }
    return out;
}

inline double macro_f1(const std::vector<int>& gold, const std::vector<int>& pred, int classes) {
    const auto counts = confusion_counts(gold, pred, classes);
    double total = 0.0;
    for (const auto& c : counts) {
        const double p = c.tp + c.fp > 0 ? static_cast<double>(c.tp) / (c.tp + c.fp) : 0.0;
        const double r = c.tp + c.fn > 0 ? static_cast<double>(c.tp) / (c.tp + c.fn) : 0.0;
        total += p + r > 0 ? 2.0 * p * r / (p + r) : 0.0;
    }
    return total / classes;
}

} // namespace oracle
