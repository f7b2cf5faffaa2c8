#pragma once

#include <string>
#include <vector>

#include "afsp/corpus.hpp"

namespace afsp {

/// Keyword phrases guiding each sentiment class, as shipped in the
/// classification prompt. The mock backend matches them on whole-token
/// sequences over normalized text, scanning classes in prompt order
/// (strongly positive first) and defaulting to Neutral.
const std::vector<std::string>& keyword_phrases(SentimentLabel label);

/// Greeting/boilerplate phrases the summarization prompt instructs models to
/// delete. The mock backend applies the deletion literally.
const std::vector<std::string>& greeting_phrases();

/// The five Arabic category words a classifier must answer with,
/// indexed by taxonomy order.
const std::string& arabic_category_word(SentimentLabel label);

} // namespace afsp
