#include "afsp/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <random>
#include <sstream>

#include <unistd.h>

#include "afsp/sentiment_keywords.hpp"

namespace afsp {

// ---------------------------------------------------------------------------
// Enum helpers
// ---------------------------------------------------------------------------

int ordinal(SentimentLabel label) {
    return static_cast<int>(label) - 2;
}

SentimentLabel label_from_ordinal(int ordinal_value) {
    if (ordinal_value < -2 || ordinal_value > 2)
        throw ParseError("ordinal out of range: " + std::to_string(ordinal_value));
    return static_cast<SentimentLabel>(ordinal_value + 2);
}

std::string label_name(SentimentLabel label) {
    switch (label) {
        case SentimentLabel::StronglyNegative: return "strongly_negative";
        case SentimentLabel::Negative: return "negative";
        case SentimentLabel::Neutral: return "neutral";
        case SentimentLabel::Positive: return "positive";
        case SentimentLabel::StronglyPositive: return "strongly_positive";
    }
    return "neutral";
}

SentimentLabel label_from_name(const std::string& name) {
    for (SentimentLabel label : kAllLabels)
        if (label_name(label) == name) return label;
    throw ParseError("unknown sentiment label \"" + name + "\"");
}

std::string source_name(Source source) {
    return source == Source::News ? "news" : "social";
}

Source source_from_name(const std::string& name) {
    if (name == "news") return Source::News;
    if (name == "social") return Source::Social;
    throw ParseError("unknown source \"" + name + "\"");
}

std::string stage_name(Stage stage) {
    switch (stage) {
        case Stage::Ingested: return "ingested";
        case Stage::Normalized: return "normalized";
        case Stage::Deduped: return "deduped";
        case Stage::Linked: return "linked";
        case Stage::Routed: return "routed";
        case Stage::Summarized: return "summarized";
        case Stage::Labeled: return "labeled";
        case Stage::Finalized: return "finalized";
        case Stage::DroppedDuplicate: return "dropped_duplicate";
    }
    return "ingested";
}

Stage stage_from_name(const std::string& name) {
    for (int s = 0; s <= static_cast<int>(Stage::DroppedDuplicate); ++s) {
        const Stage stage = static_cast<Stage>(s);
        if (stage_name(stage) == name) return stage;
    }
    throw ParseError("unknown stage \"" + name + "\"");
}

std::string outcome_name(ConsensusOutcomeKind kind) {
    switch (kind) {
        case ConsensusOutcomeKind::Full: return "full";
        case ConsensusOutcomeKind::Majority: return "majority";
        case ConsensusOutcomeKind::Disagreement: return "disagreement";
    }
    return "disagreement";
}

// ---------------------------------------------------------------------------
// Document
// ---------------------------------------------------------------------------

void Document::advance_stage(Stage next) {
    if (stage == Stage::DroppedDuplicate)
        throw Error("document " + id + " is dropped; stage is terminal");
    if (next != Stage::DroppedDuplicate && static_cast<int>(next) < static_cast<int>(stage))
        throw Error("document " + id + ": stage transition " + stage_name(stage) + " -> " +
                    stage_name(next) + " is not monotone");
    stage = next;
}

json to_json(const Document& doc) {
    json j;
    j["id"] = doc.id;
    j["source"] = source_name(doc.source);
    j["text"] = doc.text;
    j["normalized_text"] = doc.normalized_text;
    j["word_count"] = doc.word_count;
    j["published_at"] = doc.published_at;
    j["company_ids"] = doc.company_ids;
    j["stage"] = stage_name(doc.stage);
    return j;
}

Document document_from_json(const json& j) {
    Document doc;
    doc.id = j.at("id").get<std::string>();
    doc.source = source_from_name(j.at("source").get<std::string>());
    doc.text = j.at("text").get<std::string>();
    doc.published_at = j.at("published_at").get<std::string>();
    if (j.contains("normalized_text")) doc.normalized_text = j["normalized_text"].get<std::string>();
    if (j.contains("word_count")) doc.word_count = j["word_count"].get<long>();
    if (j.contains("company_ids")) doc.company_ids = j["company_ids"].get<std::vector<std::string>>();
    if (j.contains("stage")) doc.stage = stage_from_name(j["stage"].get<std::string>());
    return doc;
}

std::vector<Document> load_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());

    std::vector<Document> docs;
    std::unordered_map<std::string, long> first_line_of_id;
    std::string line;
    long line_number = 0;
    static const char* kRequired[] = {"id", "source", "text", "published_at"};

    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError("line " + std::to_string(line_number) + ": malformed JSON: " + e.what(),
                             line_number);
        }
        if (!j.is_object())
            throw ParseError("line " + std::to_string(line_number) + ": not a JSON object",
                             line_number);
        for (const char* field : kRequired)
            if (!j.contains(field))
                throw ParseError(
                    "line " + std::to_string(line_number) + ": missing field " + field,
                    line_number);
        Document doc;
        try {
            doc = document_from_json(j);
        } catch (const ParseError& e) {
            throw ParseError("line " + std::to_string(line_number) + ": " + e.what(), line_number);
        } catch (const json::exception& e) {
            throw ParseError("line " + std::to_string(line_number) + ": " + e.what(), line_number);
        }
        if (doc.id.empty())
            throw ParseError("line " + std::to_string(line_number) + ": empty id", line_number);
        if (!is_iso8601_utc(doc.published_at))
            throw ParseError("line " + std::to_string(line_number) +
                                 ": published_at is not ISO-8601 UTC (\"" + doc.published_at + "\")",
                             line_number);
        auto [it, inserted] = first_line_of_id.emplace(doc.id, line_number);
        if (!inserted)
            throw ParseError("duplicate id \"" + doc.id + "\" at lines " +
                                 std::to_string(it->second) + " and " + std::to_string(line_number),
                             line_number);
        docs.push_back(std::move(doc));
    }
    return docs;
}

void save_jsonl(const std::filesystem::path& path, const std::vector<Document>& docs) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw StorageError("cannot write " + path.string());
    for (const Document& doc : docs) out << to_json(doc).dump() << "\n";
    if (!out) throw StorageError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Consensus
// ---------------------------------------------------------------------------

ConsensusResult make_consensus(const std::string& document_id,
                               const std::vector<LabelVote>& votes) {
    if (votes.size() < 2 || votes.size() > 3)
        throw Error("consensus requires 2 or 3 valid votes, got " + std::to_string(votes.size()));

    ConsensusResult result;
    result.document_id = document_id;
    result.votes = votes;

    long counts[5] = {0, 0, 0, 0, 0};
    for (const LabelVote& vote : votes) counts[static_cast<int>(vote.label)]++;
    int best = 0;
    for (int i = 1; i < 5; ++i)
        if (counts[i] > counts[best]) best = i;

    const long modal = counts[best];
    if (votes.size() == 3 && modal == 3) {
        result.outcome = ConsensusOutcomeKind::Full;
        result.final_label = static_cast<SentimentLabel>(best);
        result.confidence = 1.0;
    } else if (modal == 2) {
        result.outcome = ConsensusOutcomeKind::Majority;
        result.final_label = static_cast<SentimentLabel>(best);
        result.confidence = 2.0 / 3.0;
    } else {
        result.outcome = ConsensusOutcomeKind::Disagreement;
    }
    return result;
}

static json vote_to_json(const LabelVote& vote) {
    json j;
    j["document_id"] = vote.document_id;
    j["model_id"] = vote.model_id;
    j["label"] = label_name(vote.label);
    j["latency_ms"] = vote.latency_ms;
    j["usage"] = {{"input_tokens", vote.usage.input_tokens},
                  {"output_tokens", vote.usage.output_tokens}};
    return j;
}

static LabelVote vote_from_json(const json& j) {
    LabelVote vote;
    vote.document_id = j.at("document_id").get<std::string>();
    vote.model_id = j.at("model_id").get<std::string>();
    vote.label = label_from_name(j.at("label").get<std::string>());
    vote.latency_ms = j.value("latency_ms", 0.0);
    if (j.contains("usage")) {
        vote.usage.input_tokens = j["usage"].value("input_tokens", 0L);
        vote.usage.output_tokens = j["usage"].value("output_tokens", 0L);
    }
    return vote;
}

json to_json(const ConsensusResult& result) {
    json j;
    j["document_id"] = result.document_id;
    json votes = json::array();
    for (const LabelVote& vote : result.votes) votes.push_back(vote_to_json(vote));
    j["votes"] = votes;
    j["outcome"] = outcome_name(result.outcome);
    if (result.final_label) j["final_label"] = label_name(*result.final_label);
    if (result.confidence) j["confidence"] = *result.confidence;
    return j;
}

ConsensusResult consensus_from_json(const json& j) {
    ConsensusResult result;
    result.document_id = j.at("document_id").get<std::string>();
    for (const json& vj : j.at("votes")) result.votes.push_back(vote_from_json(vj));
    const std::string outcome = j.at("outcome").get<std::string>();
    if (outcome == "full")
        result.outcome = ConsensusOutcomeKind::Full;
    else if (outcome == "majority")
        result.outcome = ConsensusOutcomeKind::Majority;
    else if (outcome == "disagreement")
        result.outcome = ConsensusOutcomeKind::Disagreement;
    else
        throw ParseError("unknown consensus outcome \"" + outcome + "\"");
    if (j.contains("final_label"))
        result.final_label = label_from_name(j["final_label"].get<std::string>());
    if (j.contains("confidence")) result.confidence = j["confidence"].get<double>();
    return result;
}

// ---------------------------------------------------------------------------
// Checkpoint store
// ---------------------------------------------------------------------------

CheckpointStore::CheckpointStore(std::filesystem::path directory) : dir_(std::move(directory)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw StorageError("cannot create checkpoint directory " + dir_.string());
}

CheckpointStore::~CheckpointStore() {
    std::lock_guard lock(mutex_);
    for (auto& [stage, file] : files_)
        if (file) std::fclose(file);
}

std::filesystem::path CheckpointStore::stage_path(const std::string& stage) const {
    return dir_ / (stage + ".ckpt.jsonl");
}

void CheckpointStore::put(const CheckpointRecord& record) {
    json j;
    j["document_id"] = record.document_id;
    j["stage"] = record.stage;
    j["payload"] = record.payload;
    j["written_at"] = record.written_at.empty() ? utc_now_iso8601() : record.written_at;
    j["attempt"] = record.attempt;
    const std::string line = j.dump() + "\n";

    std::lock_guard lock(mutex_);
    std::FILE*& file = files_[record.stage];
    if (!file) {
        file = std::fopen(stage_path(record.stage).c_str(), "ab");
        if (!file) throw StorageError("cannot open checkpoint log " + stage_path(record.stage).string());
    }
    if (std::fwrite(line.data(), 1, line.size(), file) != line.size())
        throw StorageError("checkpoint append failed for stage " + record.stage);
    if (std::fflush(file) != 0 || ::fsync(fileno(file)) != 0)
        throw StorageError("checkpoint fsync failed for stage " + record.stage);
}

std::map<std::string, json> CheckpointStore::load(const std::string& stage) {
    std::map<std::string, json> latest;
    std::ifstream in(stage_path(stage));
    if (!in) return latest; // no checkpoints yet

    std::string line;
    long skipped = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("document_id") ||
            !j.contains("payload")) {
            ++skipped; // torn or corrupt record: last write may have been interrupted
            continue;
        }
        latest[j["document_id"].get<std::string>()] = j["payload"];
    }
    if (skipped > 0) {
        std::lock_guard lock(mutex_);
        corrupt_skipped_ += skipped;
        std::fprintf(stderr, "warning: skipped %ld corrupt checkpoint record(s) in stage %s\n",
                     skipped, stage.c_str());
    }
    return latest;
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

std::string fnv1a_hex(std::string_view data) {
    std::uint64_t hash = 0xcbf29ce484222325ull;
    for (unsigned char c : data) {
        hash ^= c;
        hash *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

static std::string epoch_to_iso8601(std::time_t t) {
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string utc_now_iso8601() {
    return epoch_to_iso8601(std::time(nullptr));
}

bool is_iso8601_utc(const std::string& value) {
    // Fixed layout "YYYY-MM-DDTHH:MM:SSZ" so lexicographic order is time order.
    if (value.size() != 20) return false;
    for (std::size_t i = 0; i < 20; ++i) {
        const char c = value[i];
        switch (i) {
            case 4:
            case 7:
                if (c != '-') return false;
                break;
            case 10:
                if (c != 'T') return false;
                break;
            case 13:
            case 16:
                if (c != ':') return false;
                break;
            case 19:
                if (c != 'Z') return false;
                break;
            default:
                if (c < '0' || c > '9') return false;
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// Mini-corpus generator
// ---------------------------------------------------------------------------

namespace {

// Deterministic RNG wrapper: mt19937_64 is specified bit-exactly, and the
// Box-Muller transform below avoids the implementation-defined
// std::normal_distribution, so one seed yields one corpus.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::size_t index(std::size_t n) { return n == 0 ? 0 : engine_() % n; }

    double uniform01() { return (engine_() >> 11) * (1.0 / 9007199254740992.0); }

    double normal(double mean, double sd) {
        double u1 = uniform01();
        while (u1 <= 1e-12) u1 = uniform01();
        const double u2 = uniform01();
        return mean + sd * std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

private:
    std::mt19937_64 engine_;
};

// Filler vocabulary for synthetic sentences. None of these words is a
// sentiment keyword or the first token of any keyword phrase, so filler text
// can never trigger the mock classifier.
const std::vector<std::string>& filler_vocab() {
    static const std::vector<std::string> words = {
        "شركة",      "الشركة",    "أعلنت",     "أوضحت",     "أصدرت",     "نشرت",
        "بيان",      "بيانات",    "نتائج",     "الربع",     "الأول",     "الثاني",
        "الثالث",    "الرابع",    "العام",     "الحالي",    "الماضي",    "المقبل",
        "خلال",      "بعد",       "قبل",       "حسب",       "وفق",       "بحسب",
        "تقرير",     "تقارير",    "جلسة",      "اليوم",     "الأسبوع",   "الشهر",
        "السنة",     "الفترة",    "القطاع",    "المصرفي",   "الصناعي",   "العقاري",
        "قطاع",      "الطاقة",    "الاتصالات", "التقنية",   "الخدمات",   "اللوجستية",
        "التجزئة",   "التأمين",   "الأسمنت",   "البتروكيماويات", "النفط", "الغاز",
        "برميل",     "طن",        "مليون",     "مليار",     "ألف",       "ريال",
        "دولار",     "نقطة",      "نقاط",      "مستوى",     "مستويات",   "إغلاق",
        "افتتاح",    "المحللين",  "المستثمرين", "المتعاملين", "المساهمين", "الجمعية",
        "العمومية",  "مجلس",      "الإدارة",   "اجتماع",    "توصية",     "اعتماد",
        "ميزانية",   "إيرادات",   "مبيعات",    "عمليات",    "تشغيلية",   "قيمة",
        "إجمالي",    "صافي",      "حجم",       "كمية",      "عقود",      "اتفاقية",
        "شراكة",     "مشاريع",    "مبادرة",    "برنامج",    "خطة",       "استراتيجية",
        "المملكة",   "الرياض",    "جدة",       "الدمام",    "المنطقة",   "الشرقية",
        "أسواق",     "الأوراق",   "هيئة",      "لجنة",      "تفاصيل",    "إضافية",
        "نحو",       "قرابة",     "حوالي",     "منذ",       "حيث",       "كما",
        "ذلك",       "هذا",       "التي",      "الذي",      "إلى",       "من",
        "على",       "عن",        "في",        "بين",       "حول",       "ضمن",
        "الأسعار",   "الأرباح",   "الأسهم",    "السوق",     "المؤشر",    "المالي",
    };
    return words;
}

const std::vector<std::string>& company_mentions() {
    static const std::vector<std::string> names = {
        "أرامكو السعودية", "سابك",  "مصرف الراجحي", "الاتصالات السعودية",
        "معادن",           "المراعي", "أسمنت اليمامة", "البنك الأهلي",
    };
    return names;
}

// Keyword phrases per class that cannot be shadowed by a higher-priority
// class under the mock's scan order (strongly positive -> strongly negative).
std::vector<std::string> plantable_phrases(SentimentLabel label) {
    if (label == SentimentLabel::StronglyNegative) {
        // "تراجع حاد" and "خسارة كبيرة في التداول" contain plain-negative
        // keywords and would classify Negative first; skip them.
        return {"انهيار السوق",  "خسائر فادحة", "فشل المشروع", "أزمة مالية",
                "مناقصات فاشلة", "إفلاس",       "هبوط قياسي",  "خسائر مدمرة",
                "انخفاض حاد في الأسهم"};
    }
    return keyword_phrases(label);
}

std::string make_sentence(Rng& rng, int min_words, int max_words) {
    const auto& vocab = filler_vocab();
    const int target = min_words + static_cast<int>(rng.index(max_words - min_words + 1));
    std::string sentence;
    int words = 0;
    while (words < target) {
        if (!sentence.empty()) sentence += ' ';
        const double roll = rng.uniform01();
        if (roll < 0.10) {
            sentence += std::to_string(1 + rng.index(99999));
            ++words;
        } else if (roll < 0.17) {
            const std::string& name = company_mentions()[rng.index(company_mentions().size())];
            sentence += name;
            words += 1 + static_cast<int>(std::count(name.begin(), name.end(), ' '));
        } else {
            sentence += vocab[rng.index(vocab.size())];
            ++words;
        }
    }
    sentence += '.';
    return sentence;
}

std::string make_signal_sentence(Rng& rng, SentimentLabel label) {
    static const std::vector<std::string> leads = {"شهدت الجلسة", "سجل القطاع", "أظهرت البيانات",
                                                   "رصدت التقارير"};
    static const std::vector<std::string> tails = {"خلال الفترة الجارية", "بحسب البيانات الرسمية",
                                                   "وفق تقديرات المحللين"};
    const auto phrases = plantable_phrases(label);
    return leads[rng.index(leads.size())] + " " + phrases[rng.index(phrases.size())] + " " +
           tails[rng.index(tails.size())] + ".";
}

int count_words(const std::string& text) {
    int count = 0;
    bool in_token = false;
    for (char c : text) {
        const bool ws = (c == ' ' || c == '\t' || c == '\n');
        if (!ws && !in_token) ++count;
        in_token = !ws;
    }
    return count;
}

std::string build_document_text(Rng& rng, SentimentLabel gold, int target_words, bool with_noise) {
    std::string text;
    // Neutral is the mock default, so half the neutral docs carry an explicit
    // neutral keyword and half exercise the no-keyword default path.
    const bool plant_signal = gold != SentimentLabel::Neutral || rng.uniform01() < 0.5;

    if (with_noise && rng.uniform01() < 0.15) text += "السلام عليكم. ";
    if (plant_signal) text += make_signal_sentence(rng, gold);

    while (count_words(text) < target_words) {
        std::string sentence = make_sentence(rng, 5, 9);
        if (with_noise) {
            const double roll = rng.uniform01();
            if (roll < 0.06) {
                sentence.insert(sentence.size() - 1, " https://example.com/r/" +
                                                         std::to_string(rng.index(100000)));
            } else if (roll < 0.10) {
                sentence.insert(sentence.size() - 1, " #السوق_المالية");
            } else if (roll < 0.13) {
                sentence.insert(sentence.size() - 1, " @محلل_مالي");
            } else if (roll < 0.17) {
                sentence.insert(0, "الشـــركة "); // tatweel elongation noise
            }
        }
        if (!text.empty()) text += ' ';
        text += sentence;
    }
    return text;
}

} // namespace

MiniCorpus generate_mini_corpus(std::uint64_t seed, const MiniCorpusOptions& options) {
    if (options.n_news < 0 || options.n_social < 0)
        throw ConfigError("mini-corpus sizes must be non-negative");

    Rng rng(seed);
    MiniCorpus corpus;
    const std::time_t base_time = 1764547200; // 2025-12-01T00:00:00Z
    long sequence = 0;

    auto add_doc = [&](Source source, const std::string& id, std::string text,
                       SentimentLabel gold) {
        Document doc;
        doc.id = id;
        doc.source = source;
        doc.text = std::move(text);
        doc.published_at = epoch_to_iso8601(base_time + 3600 * sequence++);
        doc.stage = Stage::Ingested;
        corpus.gold[doc.id] = gold;
        corpus.documents.push_back(std::move(doc));
    };

    char idbuf[32];
    for (int i = 0; i < options.n_news; ++i) {
        const SentimentLabel gold = kAllLabels[rng.index(5)];
        int target = static_cast<int>(std::lround(rng.normal(268.0, 145.0)));
        target = std::clamp(target, 110, 600);
        std::snprintf(idbuf, sizeof idbuf, "news-%04d", i + 1);
        add_doc(Source::News, idbuf, build_document_text(rng, gold, target, true), gold);
    }
    const std::size_t news_count = corpus.documents.size();
    for (int i = 0; i < options.n_social; ++i) {
        const SentimentLabel gold = kAllLabels[rng.index(5)];
        int target = static_cast<int>(std::lround(rng.normal(24.0, 31.0)));
        target = std::clamp(target, 4, 90);
        std::snprintf(idbuf, sizeof idbuf, "social-%04d", i + 1);
        add_doc(Source::Social, idbuf, build_document_text(rng, gold, target, true), gold);
    }

    // Planted duplicates, appended after all originals so the earliest
    // (published_at, id) member of each cluster is always the original.
    const std::size_t originals = corpus.documents.size();
    if (originals > 0) {
        for (int i = 0; i < options.exact_duplicates; ++i) {
            // Copy before add_doc: push_back may reallocate the vector.
            const Document original = corpus.documents[rng.index(originals)];
            std::snprintf(idbuf, sizeof idbuf, "dupx-%04d", i + 1);
            corpus.planted_exact.emplace_back(idbuf, original.id);
            add_doc(original.source, idbuf, original.text, corpus.gold[original.id]);
        }
    }
    if (news_count > 0) {
        // Near duplicates clone distinct long news items; one appended clause
        // keeps TF-IDF cosine far above any sane near threshold. The clause
        // carries the clone index so two clones are never byte-identical
        // (that would make them exact duplicates of each other).
        std::vector<std::size_t> pool(news_count);
        for (std::size_t k = 0; k < news_count; ++k) pool[k] = k;
        for (int i = 0; i < options.near_duplicates && !pool.empty(); ++i) {
            const std::size_t pick = rng.index(pool.size());
            const Document original = corpus.documents[pool[pick]];
            pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
            std::snprintf(idbuf, sizeof idbuf, "dupn-%04d", i + 1);
            corpus.planted_near.emplace_back(idbuf, original.id);
            add_doc(original.source, idbuf,
                    original.text + " وفق بيانات إضافية لاحقة " + std::to_string(i + 1) + ".",
                    corpus.gold[original.id]);
        }
    }
    return corpus;
}

} // namespace afsp
