#include "afsp/normalize.hpp"

#include "afsp/error.hpp"
#include "afsp/utf8.hpp"

namespace afsp::normalize {

namespace {

bool is_space_cp(char32_t cp) {
    switch (cp) {
        case U' ':
        case U'\t':
        case U'\n':
        case U'\r':
        case U'\f':
        case U'\v':
        case 0x00A0:
        case 0x1680:
        case 0x2028:
        case 0x2029:
        case 0x202F:
        case 0x205F:
        case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200A;
    }
}

bool is_diacritic(char32_t cp) {
    return (cp >= 0x0610 && cp <= 0x061A) || (cp >= 0x064B && cp <= 0x065F) || cp == 0x0670 ||
           (cp >= 0x06D6 && cp <= 0x06ED);
}

bool is_emoji(char32_t cp) {
    return (cp >= 0x1F000 && cp <= 0x1FAFF) || (cp >= 0x2600 && cp <= 0x27BF) ||
           (cp >= 0x2B00 && cp <= 0x2BFF) || (cp >= 0xFE00 && cp <= 0xFE0F) ||
           (cp >= 0x1F1E6 && cp <= 0x1F1FF);
}

bool is_dropped_control(char32_t cp) {
    if (cp == U'\t' || cp == U'\n' || cp == U'\r' || cp == U'\f' || cp == U'\v') return false;
    return cp < 0x20 || cp == 0x7F || (cp >= 0x80 && cp <= 0x9F) ||
           (cp >= 0x200B && cp <= 0x200F) || (cp >= 0x202A && cp <= 0x202E) || cp == 0x2060 ||
           cp == 0xFEFF;
}

char32_t ascii_lower(char32_t cp) {
    return (cp >= U'A' && cp <= U'Z') ? cp + 32 : cp;
}

bool match_lower(const std::u32string& cps, std::size_t at, std::string_view pattern) {
    if (at + pattern.size() > cps.size()) return false;
    for (std::size_t k = 0; k < pattern.size(); ++k)
        if (ascii_lower(cps[at + k]) != static_cast<char32_t>(pattern[k])) return false;
    return true;
}

bool starts_url(const std::u32string& cps, std::size_t at) {
    return match_lower(cps, at, "http://") || match_lower(cps, at, "https://") ||
           match_lower(cps, at, "ftp://") || match_lower(cps, at, "www.");
}

} // namespace

std::map<char32_t, char32_t> NormalizationConfig::default_punctuation_map() {
    // Arabic punctuation and Arabic-Indic digits to the canonical ASCII set.
    std::map<char32_t, char32_t> map = {
        {0x060C, U','}, // ،
        {0x061B, U';'}, // ؛
        {0x061F, U'?'}, // ؟
        {0x066A, U'%'}, // ٪
        {0x066B, U'.'}, // ٫ decimal separator
        {0x066C, U','}, // ٬ thousands separator
        {0x06D4, U'.'}, // ۔ full stop
        {0x00AB, U'"'},
        {0x00BB, U'"'},
    };
    for (char32_t d = 0; d < 10; ++d) {
        map[0x0660 + d] = U'0' + d; // ٠..٩
        map[0x06F0 + d] = U'0' + d; // ۰..۹ (extended)
    }
    return map;
}

std::string normalize_text(const std::string& text, const NormalizationConfig& cfg) {
    const std::u32string cps = utf8::decode(text);

    // Pass 1: span-level noise. URLs and @mentions vanish whole; '#' drops
    // while its word stays; '_' becomes a separator so hashtag words split
    // (and so a buried URL sits at a token start for the check above).
    std::u32string spans;
    spans.reserve(cps.size());
    bool at_token_start = true;
    std::size_t i = 0;
    while (i < cps.size()) {
        const char32_t cp = cps[i];
        if (is_space_cp(cp)) {
            spans.push_back(cp);
            at_token_start = true;
            ++i;
            continue;
        }
        if (cfg.strip_mentions_hashmarks && cp == U'_') {
            spans.push_back(U' ');
            at_token_start = true;
            ++i;
            continue;
        }
        if (at_token_start && cfg.strip_urls && starts_url(cps, i)) {
            while (i < cps.size() && !is_space_cp(cps[i])) ++i;
            spans.push_back(U' ');
            continue;
        }
        if (at_token_start && cfg.strip_mentions_hashmarks && cp == U'@') {
            while (i < cps.size() && !is_space_cp(cps[i])) ++i;
            spans.push_back(U' ');
            continue;
        }
        if (cfg.strip_mentions_hashmarks && cp == U'#') {
            ++i; // keep the word, stay at token start for URL detection
            continue;
        }
        spans.push_back(cp);
        at_token_start = false;
        ++i;
    }

    // Pass 2: per-codepoint mappings and deletions.
    std::u32string mapped;
    mapped.reserve(spans.size());
    for (const char32_t cp : spans) {
        if (cfg.remove_tatweel && cp == 0x0640) continue;
        if (cfg.remove_diacritics && is_diacritic(cp)) continue;
        if (is_dropped_control(cp)) continue;
        if (cfg.strip_emoji && is_emoji(cp)) {
            mapped.push_back(U' ');
            continue;
        }
        if (cfg.unify_alef && (cp == 0x0622 || cp == 0x0623 || cp == 0x0625 || cp == 0x0671)) {
            mapped.push_back(0x0627);
            continue;
        }
        if (cfg.unify_ya_maqsura && cp == 0x0649) {
            mapped.push_back(0x064A);
            continue;
        }
        if (const auto it = cfg.punctuation_map.find(cp); it != cfg.punctuation_map.end()) {
            mapped.push_back(it->second);
            continue;
        }
        mapped.push_back(cp);
    }

    // Pass 3: whitespace collapse and trim.
    if (!cfg.collapse_whitespace) return utf8::encode(mapped);
    std::u32string out;
    out.reserve(mapped.size());
    bool pending_space = false;
    for (const char32_t cp : mapped) {
        if (is_space_cp(cp)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(U' ');
            pending_space = false;
        }
        out.push_back(cp);
    }
    return utf8::encode(out);
}

long word_count(const std::string& text) {
    long count = 0;
    bool in_token = false;
    for (const char c : text) {
        const bool ws = (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v');
        if (!ws && !in_token) ++count;
        in_token = !ws;
    }
    return count;
}

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string current;
    for (const char c : text) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
            if (!current.empty()) tokens.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

std::string strip_edge_punctuation(const std::string& token) {
    auto is_edge = [](char32_t cp) {
        switch (cp) {
            case U'.':
            case U',':
            case U';':
            case U':':
            case U'!':
            case U'?':
            case U'"':
            case U'\'':
            case U'(':
            case U')':
            case U'[':
            case U']':
            case U'%':
            case 0x060C:
            case 0x061B:
            case 0x061F:
                return true;
            default:
                return false;
        }
    };
    std::u32string cps = utf8::decode(token);
    std::size_t begin = 0, end = cps.size();
    while (begin < end && is_edge(cps[begin])) ++begin;
    while (end > begin && is_edge(cps[end - 1])) --end;
    return utf8::encode(cps.substr(begin, end - begin));
}

std::vector<std::string> split_sentences(const std::string& text) {
    const std::u32string cps = utf8::decode(text);
    std::vector<std::string> sentences;
    std::u32string current;

    auto flush = [&] {
        std::size_t begin = 0, end = current.size();
        while (begin < end && is_space_cp(current[begin])) ++begin;
        while (end > begin && is_space_cp(current[end - 1])) --end;
        if (end > begin) sentences.push_back(utf8::encode(current.substr(begin, end - begin)));
        current.clear();
    };

    auto is_terminator = [](char32_t cp) {
        return cp == U'.' || cp == U'!' || cp == U'?' || cp == 0x061F || cp == 0x06D4;
    };

    for (std::size_t i = 0; i < cps.size(); ++i) {
        current.push_back(cps[i]);
        if (is_terminator(cps[i])) {
            while (i + 1 < cps.size() && is_terminator(cps[i + 1])) current.push_back(cps[++i]);
            flush();
        }
    }
    flush();
    return sentences;
}

nlohmann::json to_json(const NormalizationConfig& cfg) {
    nlohmann::json j;
    j["unify_alef"] = cfg.unify_alef;
    j["unify_ya_maqsura"] = cfg.unify_ya_maqsura;
    j["remove_tatweel"] = cfg.remove_tatweel;
    j["remove_diacritics"] = cfg.remove_diacritics;
    j["strip_urls"] = cfg.strip_urls;
    j["strip_mentions_hashmarks"] = cfg.strip_mentions_hashmarks;
    j["strip_emoji"] = cfg.strip_emoji;
    j["collapse_whitespace"] = cfg.collapse_whitespace;
    return j;
}

NormalizationConfig config_from_json(const nlohmann::json& j) {
    NormalizationConfig cfg;
    cfg.unify_alef = j.value("unify_alef", cfg.unify_alef);
    cfg.unify_ya_maqsura = j.value("unify_ya_maqsura", cfg.unify_ya_maqsura);
    cfg.remove_tatweel = j.value("remove_tatweel", cfg.remove_tatweel);
    cfg.remove_diacritics = j.value("remove_diacritics", cfg.remove_diacritics);
    cfg.strip_urls = j.value("strip_urls", cfg.strip_urls);
    cfg.strip_mentions_hashmarks = j.value("strip_mentions_hashmarks", cfg.strip_mentions_hashmarks);
    cfg.strip_emoji = j.value("strip_emoji", cfg.strip_emoji);
    cfg.collapse_whitespace = j.value("collapse_whitespace", cfg.collapse_whitespace);
    return cfg;
}

} // namespace afsp::normalize
