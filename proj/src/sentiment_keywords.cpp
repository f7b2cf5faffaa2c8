#include "afsp/sentiment_keywords.hpp"

namespace afsp {

const std::vector<std::string>& keyword_phrases(SentimentLabel label) {
    static const std::vector<std::string> strongly_positive = {
        "ارتفاع الأرباح",     "تحسن الأداء المالي", "زيادة الأسهم",
        "عائد ممتاز",         "نجاح مناقصة",        "تحقيق أرباح كبيرة",
        "ارتفاع السوق",       "مضاعفة العائد",      "صفقة رابحة",
        "زيادة رأس المال",    "اكتتاب ناجح",        "توسع استثماري",
        "عائد استثماري مرتفع", "ارتفاع سهم أرامكو",  "تقدم مؤشر تداول",
    };
    static const std::vector<std::string> positive = {
        "تحسن",          "زيادة",        "نمو",
        "ربح معتدل",     "تقدم في التداول", "فائدة مالية",
        "سوق مستقر",     "عوائد جيدة",   "تحسن مؤشرات",
        "عائد استثماري",
    };
    static const std::vector<std::string> neutral = {
        "ثبات",           "مستقر",          "محايد",
        "لا تغير ملحوظ",  "تداول معتدل",    "سوق بدون حركة واضحة",
        "استقرار الأسعار", "عدم وجود تقلبات",
    };
    static const std::vector<std::string> negative = {
        "تراجع",          "خسارة",          "هبوط الأسهم",
        "مشكلة مالية",    "تأخر مناقصة",    "مخاطر السوق",
        "انخفاض الأرباح", "تراجع مؤشرات",   "تراجع العوائد",
        "انخفاض التداول", "خسارة جزئية",    "هبوط سهم أرامكو",
    };
    static const std::vector<std::string> strongly_negative = {
        "انهيار السوق",        "خسائر فادحة",  "فشل المشروع",
        "أزمة مالية",          "خسارة كبيرة في التداول", "مناقصات فاشلة",
        "إفلاس",               "تراجع حاد",    "هبوط قياسي",
        "خسائر مدمرة",         "انخفاض حاد في الأسهم",
    };
    switch (label) {
        case SentimentLabel::StronglyPositive: return strongly_positive;
        case SentimentLabel::Positive: return positive;
        case SentimentLabel::Neutral: return neutral;
        case SentimentLabel::Negative: return negative;
        case SentimentLabel::StronglyNegative: return strongly_negative;
    }
    return neutral;
}

const std::vector<std::string>& greeting_phrases() {
    static const std::vector<std::string> greetings = {
        "مرحبا",           "أهلاً",            "أهلاً وسهلاً",
        "السلام عليكم",    "كيف حالك",        "تحياتي",
        "مع التحية",       "يومك سعيد",       "أسعد الله أوقاتكم",
        "طاب يومكم",       "تحية طيبة",       "وبعد",
        "بارك الله فيكم",  "وفقكم الله",      "دمتم بخير",
    };
    return greetings;
}

const std::string& arabic_category_word(SentimentLabel label) {
    static const std::string words[5] = {
        "سلبي جداً", "سلبي", "حيادي", "إيجابي", "إيجابي جداً",
    };
    return words[static_cast<int>(label)];
}

} // namespace afsp
