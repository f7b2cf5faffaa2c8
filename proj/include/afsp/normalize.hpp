#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace afsp::normalize {

/// Arabic text cleaning switches. The same config + input always yields the
/// same output; every mapping is toggleable so experiments can ablate it.
struct NormalizationConfig {
    bool unify_alef = true;          // أ إ آ ٱ -> ا
    bool unify_ya_maqsura = true;    // ى -> ي (ة preserved)
    bool remove_tatweel = true;      // ـ deleted
    bool remove_diacritics = true;   // harakat, tanween, dagger alef deleted
    bool strip_urls = true;          // http(s)/ftp/www spans deleted
    bool strip_mentions_hashmarks = true; // @user deleted, '#' dropped keeping the word
    bool strip_emoji = true;         // pictographs and symbols deleted
    bool collapse_whitespace = true; // runs of whitespace -> single space, trimmed
    /// Arabic punctuation to its canonical ASCII form.
    std::map<char32_t, char32_t> punctuation_map = default_punctuation_map();

    static std::map<char32_t, char32_t> default_punctuation_map();
};

nlohmann::json to_json(const NormalizationConfig& cfg);
NormalizationConfig config_from_json(const nlohmann::json& j);

/// Total function: cleans per config, collapses whitespace, trims. Invalid
/// byte sequences were rejected at ingestion, not here.
std::string normalize_text(const std::string& text, const NormalizationConfig& cfg);

inline std::string normalize_text(const std::string& text) {
    return normalize_text(text, NormalizationConfig{});
}

/// Count of maximal non-whitespace runs.
long word_count(const std::string& text);

/// Whitespace tokens of a normalized string.
std::vector<std::string> tokenize(const std::string& text);

/// Removes leading/trailing punctuation from one token (inner stays).
std::string strip_edge_punctuation(const std::string& token);

/// Splits on sentence terminators {. ! ؟ ?}, keeping each terminator with
/// its sentence. Trailing unterminated text forms the last sentence.
std::vector<std::string> split_sentences(const std::string& text);

} // namespace afsp::normalize
