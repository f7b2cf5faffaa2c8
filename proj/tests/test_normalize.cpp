#include <doctest.h>

#include <random>

#include "afsp/normalize.hpp"
#include "afsp/utf8.hpp"

using namespace afsp;
using normalize::NormalizationConfig;
using normalize::normalize_text;
using normalize::split_sentences;
using normalize::word_count;

TEST_CASE("tatweel elongation is removed") {
    CHECK(normalize_text("تـــداول") == "تداول");
    CHECK(normalize_text("الشـــركة") == "الشركة");
}

TEST_CASE("alef variants unify") {
    CHECK(normalize_text("أ إ آ") == "ا ا ا");
    CHECK(normalize_text("أرباح") == "ارباح");
    NormalizationConfig keep;
    keep.unify_alef = false;
    CHECK(normalize_text("أ إ آ", keep) == "أ إ آ");
}

TEST_CASE("alef maqsura unifies to ya, ta marbuta preserved") {
    CHECK(normalize_text("مستوى") == "مستوي");
    CHECK(normalize_text("شركة") == "شركة");
}

TEST_CASE("diacritics are stripped") {
    CHECK(normalize_text("جداً") == "جدا");
    CHECK(normalize_text("مُسْتَقِر") == "مستقر");
}

TEST_CASE("urls vanish") {
    CHECK(normalize_text("http://x.y شراء") == "شراء");
    CHECK(normalize_text("شراء https://example.com/abc?q=1 بيع") == "شراء بيع");
    CHECK(normalize_text("WWW.example.com نص") == "نص");
    CHECK(normalize_text("ftp://host/file") == "");
}

TEST_CASE("mentions drop, hashtag words stay") {
    CHECK(normalize_text("@محلل نص") == "نص");
    CHECK(normalize_text("#السوق_المالية") == "السوق المالية");
    CHECK(normalize_text("نص #وسم آخر") == "نص وسم اخر");
}

TEST_CASE("hash-buried url is still stripped") {
    CHECK(normalize_text("#http://spam.example نص") == "نص");
}

TEST_CASE("arabic punctuation maps to the canonical set") {
    CHECK(normalize_text("نعم؟") == "نعم?");
    CHECK(normalize_text("أولاً، ثانياً") == "اولا, ثانيا");
    CHECK(normalize_text("٪٥") == "%5");
}

TEST_CASE("whitespace collapses and trims") {
    CHECK(normalize_text("  كلمة\t\nأخرى  ") == "كلمة اخري");
    CHECK(normalize_text(" ​نص‏") == "نص");
}

TEST_CASE("emoji are noise") {
    CHECK(normalize_text("صعود 🚀📈 قوي") == "صعود قوي");
}

TEST_CASE("word_count counts maximal non-whitespace runs") {
    CHECK(word_count("") == 0);
    CHECK(word_count("ارتفاع الأرباح اليوم") == 3);
    std::string hundred;
    for (int i = 0; i < 100; ++i) {
        if (!hundred.empty()) hundred += ' ';
        hundred += "كلمة";
    }
    CHECK(word_count(hundred) == 100);
}

TEST_CASE("sentence splitting keeps terminators") {
    const auto sentences = split_sentences("الأولى. الثانية! الثالثة؟ الرابعة");
    REQUIRE(sentences.size() == 4);
    CHECK(sentences[0] == "الأولى.");
    CHECK(sentences[1] == "الثانية!");
    CHECK(sentences[2] == "الثالثة؟");
    CHECK(sentences[3] == "الرابعة");
    CHECK(split_sentences("").empty());
    CHECK(split_sentences("واحدة فقط.").size() == 1);
}

namespace {

// Random Arabic-ish strings with planted noise for property checks.
std::string random_noisy_text(std::mt19937_64& rng) {
    static const std::vector<std::string> pieces = {
        "تداول",     "أرباح", "ًَ",  "ى",  "ـــ", "http://x.io/a", "@user",
        "#وسم_طويل", "السوق", "🚀",  "،",  "؟",   " ",             "\t",
        "إغلاق",     "ة",     "latin", "123", "٤٥٦", "آفاق",        "«اقتباس»",
    };
    std::uniform_int_distribution<std::size_t> pick(0, pieces.size() - 1);
    std::uniform_int_distribution<int> len(0, 24);
    std::string out;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) {
        out += pieces[pick(rng)];
        if (rng() % 3 == 0) out += ' ';
    }
    return out;
}

bool allowed_output_codepoint(char32_t cp) {
    if (cp == U' ') return true;
    if (cp >= U'0' && cp <= U'9') return true;
    if ((cp >= U'A' && cp <= U'Z') || (cp >= U'a' && cp <= U'z')) return true; // latin passthrough
    if (cp >= 0x0600 && cp <= 0x06FF) return true; // arabic block
    switch (cp) { // canonical punctuation
        case U'.':
        case U',':
        case U';':
        case U':':
        case U'!':
        case U'?':
        case U'%':
        case U'"':
        case U'\'':
        case U'(':
        case U')':
        case U'[':
        case U']':
            return true;
        default:
            return false;
    }
}

} // namespace

TEST_CASE("property: normalization is idempotent") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 500; ++trial) {
        const std::string text = random_noisy_text(rng);
        const std::string once = normalize_text(text);
        CHECK(normalize_text(once) == once);
    }
}

TEST_CASE("property: codepoint length never grows with all removals on") {
    std::mt19937_64 rng(2025);
    for (int trial = 0; trial < 500; ++trial) {
        const std::string text = random_noisy_text(rng);
        CHECK(utf8::length(normalize_text(text)) <= utf8::length(text));
    }
}

TEST_CASE("property: no characters outside the canonical sets are introduced") {
    std::mt19937_64 rng(2026);
    for (int trial = 0; trial < 500; ++trial) {
        const std::string text = random_noisy_text(rng);
        const std::u32string in = utf8::decode(text);
        for (const char32_t cp : utf8::decode(normalize_text(text))) {
            const bool was_present = in.find(cp) != std::u32string::npos;
            if (!was_present) CHECK(allowed_output_codepoint(cp));
        }
    }
}

TEST_CASE("config toggles are honored") {
    NormalizationConfig cfg;
    cfg.strip_urls = false;
    CHECK(normalize_text("http://x.y شراء", cfg) == "http://x.y شراء");
    cfg = NormalizationConfig{};
    cfg.remove_diacritics = false;
    CHECK(normalize_text("جداً", cfg) == "جداً");
}
