#include "afsp/llm_gateway.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "afsp/normalize.hpp"
#include "afsp/sentiment_keywords.hpp"
#include "afsp/utf8.hpp"

namespace afsp::gateway {

namespace {

long ws_tokens(const std::string& text) {
    return normalize::word_count(text);
}

// Normalized match key of one raw token: cleaned, edge punctuation dropped.
std::string match_key(const std::string& raw_token) {
    static const normalize::NormalizationConfig cfg;
    return normalize::strip_edge_punctuation(normalize::normalize_text(raw_token, cfg));
}

std::vector<std::string> match_keys(const std::string& text) {
    std::vector<std::string> keys;
    for (const auto& token : normalize::tokenize(text)) {
        std::string key = match_key(token);
        if (!key.empty()) keys.push_back(std::move(key));
    }
    return keys;
}

// Phrase tables normalized once; matching is whole-token contiguous.
const std::vector<std::vector<std::string>>& phrase_keys(SentimentLabel label) {
    static std::array<std::vector<std::vector<std::string>>, 5> cache = [] {
        std::array<std::vector<std::vector<std::string>>, 5> built;
        for (SentimentLabel l : kAllLabels)
            for (const auto& phrase : keyword_phrases(l))
                built[static_cast<int>(l)].push_back(match_keys(phrase));
        return built;
    }();
    return cache[static_cast<int>(label)];
}

bool contains_phrase(const std::vector<std::string>& keys,
                     const std::vector<std::string>& phrase) {
    if (phrase.empty() || phrase.size() > keys.size()) return false;
    for (std::size_t i = 0; i + phrase.size() <= keys.size(); ++i) {
        bool match = true;
        for (std::size_t k = 0; k < phrase.size(); ++k)
            if (keys[i + k] != phrase[k]) {
                match = false;
                break;
            }
        if (match) return true;
    }
    return false;
}

SentimentLabel rulebook_classify(const std::string& input_text) {
    const std::vector<std::string> keys = match_keys(input_text);
    // Scan order follows the prompt: strongly positive first, then down.
    static const SentimentLabel order[5] = {
        SentimentLabel::StronglyPositive, SentimentLabel::Positive, SentimentLabel::Neutral,
        SentimentLabel::Negative, SentimentLabel::StronglyNegative};
    for (SentimentLabel label : order)
        for (const auto& phrase : phrase_keys(label))
            if (contains_phrase(keys, phrase)) return label;
    return SentimentLabel::Neutral;
}

// Deletes every greeting-phrase occurrence from a sentence, preserving the
// surviving raw tokens.
std::string delete_greetings(const std::string& sentence) {
    const std::vector<std::string> raw = normalize::tokenize(sentence);
    std::vector<std::string> keys;
    keys.reserve(raw.size());
    for (const auto& token : raw) keys.push_back(match_key(token));

    static const std::vector<std::vector<std::string>> greeting_keys = [] {
        std::vector<std::vector<std::string>> built;
        for (const auto& phrase : greeting_phrases()) built.push_back(match_keys(phrase));
        return built;
    }();

    std::vector<char> removed(raw.size(), 0);
    for (const auto& phrase : greeting_keys) {
        if (phrase.empty()) continue;
        for (std::size_t i = 0; i + phrase.size() <= keys.size(); ++i) {
            bool match = true;
            for (std::size_t k = 0; k < phrase.size(); ++k)
                if (removed[i + k] || keys[i + k] != phrase[k]) {
                    match = false;
                    break;
                }
            if (match)
                for (std::size_t k = 0; k < phrase.size(); ++k) removed[i + k] = 1;
        }
    }
    std::string out;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (removed[i]) continue;
        if (!out.empty()) out += ' ';
        out += raw[i];
    }
    return out;
}

std::string lead_sentences(const std::vector<std::string>& sentences, std::size_t limit) {
    std::string out;
    std::size_t taken = 0;
    for (const auto& sentence : sentences) {
        if (taken == limit) break;
        if (sentence.empty()) continue;
        if (!out.empty()) out += ' ';
        out += sentence;
        ++taken;
    }
    return out;
}

std::string extract_slot(const std::string& user_text, const std::string& open,
                         const std::string& close) {
    std::size_t begin = user_text.rfind(open);
    if (begin == std::string::npos) return user_text;
    begin += open.size();
    std::size_t end = user_text.find(close, begin);
    if (end == std::string::npos) end = user_text.size();
    std::string slot = user_text.substr(begin, end - begin);
    while (!slot.empty() && (slot.front() == ' ' || slot.front() == '\n')) slot.erase(slot.begin());
    while (!slot.empty() && (slot.back() == ' ' || slot.back() == '\n')) slot.pop_back();
    return slot;
}

std::string trim_copy(const std::string& text) {
    std::size_t begin = text.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    std::size_t end = text.find_last_not_of(" \t\r\n");
    return text.substr(begin, end - begin + 1);
}

} // namespace

// ---------------------------------------------------------------------------
// Config plumbing
// ---------------------------------------------------------------------------

double estimate_cost(const TokenUsage& usage, const Pricing& pricing) {
    return static_cast<double>(usage.input_tokens) / 1e6 * pricing.input_usd_per_1m +
           static_cast<double>(usage.output_tokens) / 1e6 * pricing.output_usd_per_1m;
}

json backend_to_json(const BackendConfig& config) {
    json j;
    j["model_id"] = config.model_id;
    j["endpoint"] = config.endpoint;
    j["api_key_env"] = config.api_key_env;
    j["decoding"]["temperature"] = config.decoding.temperature;
    j["decoding"]["max_tokens"] = config.decoding.max_tokens;
    if (config.decoding.top_p) j["decoding"]["top_p"] = *config.decoding.top_p;
    if (config.decoding.top_k) j["decoding"]["top_k"] = *config.decoding.top_k;
    j["pricing"]["input_usd_per_1m"] = config.pricing.input_usd_per_1m;
    j["pricing"]["output_usd_per_1m"] = config.pricing.output_usd_per_1m;
    j["timeout_ms"] = config.timeout_ms;
    j["max_retries"] = config.max_retries;
    j["retry_base_ms"] = config.retry_base_ms;
    j["max_in_flight"] = config.max_in_flight;
    return j;
}

BackendConfig backend_from_json(const json& j) {
    BackendConfig config;
    config.model_id = j.at("model_id").get<std::string>();
    config.endpoint = j.value("endpoint", "");
    config.api_key_env = j.value("api_key_env", "");
    if (j.contains("decoding")) {
        const json& d = j["decoding"];
        config.decoding.temperature = d.value("temperature", 0.0);
        config.decoding.max_tokens = d.value("max_tokens", 256);
        if (d.contains("top_p")) config.decoding.top_p = d["top_p"].get<double>();
        if (d.contains("top_k")) config.decoding.top_k = d["top_k"].get<int>();
    }
    if (j.contains("pricing")) {
        config.pricing.input_usd_per_1m = j["pricing"].value("input_usd_per_1m", 0.0);
        config.pricing.output_usd_per_1m = j["pricing"].value("output_usd_per_1m", 0.0);
    }
    if (config.pricing.input_usd_per_1m < 0 || config.pricing.output_usd_per_1m < 0)
        throw ConfigError("backend " + config.model_id + ": pricing must be non-negative");
    config.timeout_ms = j.value("timeout_ms", 30000);
    config.max_retries = j.value("max_retries", 3);
    config.retry_base_ms = j.value("retry_base_ms", 500);
    config.max_in_flight = j.value("max_in_flight", 8);
    return config;
}

// ---------------------------------------------------------------------------
// Mock transport
// ---------------------------------------------------------------------------

Completion MockTransport::send(const BackendConfig& config, const std::string& system_text,
                               const std::string& user_text) {
    std::string output;
    if (user_text.find("صنّف النص المالي") != std::string::npos) {
        const std::string input = extract_slot(user_text, "النص:", "أعد فقط");
        output = arabic_category_word(rulebook_classify(input));
    } else if (user_text.find("الملخّص النهائي") != std::string::npos) {
        const std::string input = extract_slot(user_text, "Text:", "Output:");
        std::vector<std::string> sentences = normalize::split_sentences(input);
        std::vector<std::string> unique;
        for (auto& sentence : sentences) {
            const std::string trimmed = trim_copy(sentence);
            if (std::find(unique.begin(), unique.end(), trimmed) == unique.end())
                unique.push_back(trimmed);
        }
        output = lead_sentences(unique, 3);
    } else {
        const std::string input = extract_slot(user_text, "Text:", "Output:");
        std::vector<std::string> cleaned;
        for (const auto& sentence : normalize::split_sentences(input))
            cleaned.push_back(delete_greetings(sentence));
        output = lead_sentences(cleaned, 3);
    }

    Completion completion;
    completion.text = output;
    completion.usage.input_tokens = ws_tokens(system_text) + ws_tokens(user_text);
    completion.usage.output_tokens = ws_tokens(output);
    // Clip to max_tokens the way a real server would.
    if (config.decoding.max_tokens > 0 &&
        completion.usage.output_tokens > config.decoding.max_tokens) {
        const auto tokens = normalize::tokenize(output);
        std::string clipped;
        for (int i = 0; i < config.decoding.max_tokens; ++i) {
            if (!clipped.empty()) clipped += ' ';
            clipped += tokens[static_cast<std::size_t>(i)];
        }
        completion.text = clipped;
        completion.usage.output_tokens = config.decoding.max_tokens;
    }
    completion.latency_ms = 0.0;
    return completion;
}

// ---------------------------------------------------------------------------
// HTTP transport
// ---------------------------------------------------------------------------

Completion HttpTransport::send(const BackendConfig& config, const std::string& system_text,
                               const std::string& user_text) {
    const std::size_t scheme = config.endpoint.find("://");
    if (scheme == std::string::npos)
        throw TransportError("backend " + config.model_id + ": endpoint has no scheme", false);
    const std::size_t path_start = config.endpoint.find('/', scheme + 3);
    const std::string base =
        path_start == std::string::npos ? config.endpoint : config.endpoint.substr(0, path_start);
    const std::string path =
        path_start == std::string::npos ? "/" : config.endpoint.substr(path_start);

    httplib::Client client(base);
    client.set_connection_timeout(config.timeout_ms / 1000, (config.timeout_ms % 1000) * 1000);
    client.set_read_timeout(config.timeout_ms / 1000, (config.timeout_ms % 1000) * 1000);
    httplib::Headers headers;
    if (!config.api_key_env.empty()) {
        if (const char* key = std::getenv(config.api_key_env.c_str()); key && *key)
            headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    json body;
    body["model"] = config.model_id;
    body["messages"] = json::array({{{"role", "system"}, {"content", system_text}},
                                    {{"role", "user"}, {"content", user_text}}});
    body["temperature"] = config.decoding.temperature;
    body["max_tokens"] = config.decoding.max_tokens;
    if (config.decoding.top_p) body["top_p"] = *config.decoding.top_p;
    if (config.decoding.top_k) body["top_k"] = *config.decoding.top_k;

    const auto started = std::chrono::steady_clock::now();
    auto res = client.Post(path, headers, body.dump(), "application/json");
    const double elapsed_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started)
            .count();

    if (!res)
        throw TransportError("backend " + config.model_id + ": no response from " + base, true);
    if (res->status == 429 || res->status >= 500)
        throw TransportError("backend " + config.model_id + ": HTTP " +
                                 std::to_string(res->status),
                             true);
    if (res->status != 200)
        throw TransportError("backend " + config.model_id + ": HTTP " +
                                 std::to_string(res->status),
                             false);

    try {
        const json reply = json::parse(res->body);
        Completion completion;
        completion.text = trim_copy(
            reply.at("choices").at(0).at("message").at("content").get<std::string>());
        if (reply.contains("usage")) {
            completion.usage.input_tokens = reply["usage"].value("prompt_tokens", 0L);
            completion.usage.output_tokens = reply["usage"].value("completion_tokens", 0L);
        } else {
            // No usage block: fall back to whitespace-token estimates.
            completion.usage.input_tokens = ws_tokens(system_text) + ws_tokens(user_text);
            completion.usage.output_tokens = ws_tokens(completion.text);
        }
        completion.latency_ms = elapsed_ms;
        return completion;
    } catch (const json::exception& e) {
        throw TransportError(
            "backend " + config.model_id + ": malformed response: " + e.what(), false);
    }
}

// ---------------------------------------------------------------------------
// Prompt templates
// ---------------------------------------------------------------------------

std::string PromptTemplate::render(const std::string& slot, const std::string& value) const {
    const std::string needle = "{" + slot + "}";
    std::string out = user_template;
    std::size_t pos = 0;
    while ((pos = out.find(needle, pos)) != std::string::npos) {
        out.replace(pos, needle.size(), value);
        pos += value.size();
    }
    return out;
}

static std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open prompt resource " + path.string());
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    while (!content.empty() && (content.back() == '\n' || content.back() == '\r'))
        content.pop_back();
    return content;
}

PromptLibrary PromptLibrary::load(const std::filesystem::path& directory) {
    PromptLibrary lib;
    auto load_one = [&](const std::string& name) {
        PromptTemplate tpl;
        tpl.name = name;
        tpl.system_text = read_file(directory / (name + ".system.txt"));
        tpl.user_template = read_file(directory / (name + ".user.txt"));
        return tpl;
    };
    lib.summarize_chunk = load_one("summarize_chunk");
    lib.consolidate = load_one("consolidate");
    lib.classify = load_one("classify");
    return lib;
}

// ---------------------------------------------------------------------------
// Response cache
// ---------------------------------------------------------------------------

ResponseCache::ResponseCache(std::filesystem::path directory) : dir_(std::move(directory)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw StorageError("cannot create cache directory " + dir_.string());
}

std::optional<Completion> ResponseCache::get(const std::string& key_material) {
    const auto path = dir_ / (fnv1a_hex(key_material) + ".json");
    std::ifstream in(path);
    if (!in) return std::nullopt;
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded() || j.value("key", "") != key_material) return std::nullopt;
    Completion completion;
    completion.text = j.value("text", "");
    completion.usage.input_tokens = j.value("input_tokens", 0L);
    completion.usage.output_tokens = j.value("output_tokens", 0L);
    completion.latency_ms = j.value("latency_ms", 0.0);
    completion.attempts = j.value("attempts", 1);
    return completion;
}

void ResponseCache::put(const std::string& key_material, const Completion& completion) {
    json j;
    j["key"] = key_material;
    j["text"] = completion.text;
    j["input_tokens"] = completion.usage.input_tokens;
    j["output_tokens"] = completion.usage.output_tokens;
    j["latency_ms"] = completion.latency_ms;
    j["attempts"] = completion.attempts;

    std::lock_guard lock(mutex_);
    const std::string name = fnv1a_hex(key_material);
    const auto tmp = dir_ / ("tmp-" + name);
    {
        std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
        if (!out) throw StorageError("cannot write cache entry " + tmp.string());
        out << j.dump();
    }
    std::filesystem::rename(tmp, dir_ / (name + ".json"));
}

// ---------------------------------------------------------------------------
// Gateway
// ---------------------------------------------------------------------------

Gateway::Gateway(std::vector<BackendConfig> backends, std::shared_ptr<ChatTransport> transport,
                 PromptLibrary prompts, std::shared_ptr<ResponseCache> cache)
    : transport_(std::move(transport)), prompts_(std::move(prompts)), cache_(std::move(cache)) {
    if (!transport_) throw ConfigError("gateway requires a transport");
    for (auto& config : backends) {
        auto limit = std::make_unique<InFlightLimit>();
        limit->available = std::max(1, config.max_in_flight);
        limits_.emplace(config.model_id, std::move(limit));
        backends_.emplace(config.model_id, std::move(config));
    }
}

const BackendConfig& Gateway::backend(const std::string& model_id) const {
    const auto it = backends_.find(model_id);
    if (it == backends_.end()) throw ConfigError("unknown backend \"" + model_id + "\"");
    return it->second;
}

GatewayStats Gateway::stats() const {
    std::lock_guard lock(stats_mutex_);
    GatewayStats snapshot = stats_;
    // Costs derive from integer usage totals so concurrent accumulation
    // order cannot perturb the floating-point sums.
    snapshot.total_cost_usd = 0.0;
    for (const auto& [model, usage] : snapshot.usage_by_model) {
        const double cost = estimate_cost(usage, backends_.at(model).pricing);
        snapshot.cost_by_model[model] = cost;
        snapshot.total_cost_usd += cost;
    }
    return snapshot;
}

Completion Gateway::attempt_with_retry(const BackendConfig& config, const std::string& system_text,
                                       const std::string& user_text) {
    const int max_attempts = 1 + std::max(0, config.max_retries);
    for (int attempt = 1;; ++attempt) {
        {
            std::lock_guard lock(stats_mutex_);
            ++stats_.backend_calls;
            ++stats_.calls_by_model[config.model_id];
        }
        try {
            Completion completion = transport_->send(config, system_text, user_text);
            completion.attempts = attempt;
            return completion;
        } catch (const TransportError& e) {
            if (!e.retryable || attempt >= max_attempts)
                throw BackendError(std::string(e.what()) + " (after " + std::to_string(attempt) +
                                       " attempt(s))",
                                   attempt);
            const long delay =
                std::min<long>(30000, static_cast<long>(config.retry_base_ms) << (attempt - 1));
            std::this_thread::sleep_for(std::chrono::milliseconds(delay));
        }
    }
}

Completion Gateway::complete(const std::string& model_id, const std::string& system_text,
                             const std::string& user_text) {
    const BackendConfig& config = backend(model_id);

    json decoding_key;
    decoding_key["temperature"] = config.decoding.temperature;
    decoding_key["max_tokens"] = config.decoding.max_tokens;
    if (config.decoding.top_p) decoding_key["top_p"] = *config.decoding.top_p;
    if (config.decoding.top_k) decoding_key["top_k"] = *config.decoding.top_k;
    const std::string key_material =
        model_id + "\x1f" + decoding_key.dump() + "\x1f" + system_text + "\x1f" + user_text;

    if (cache_) {
        if (auto hit = cache_->get(key_material)) {
            hit->from_cache = true;
            std::lock_guard lock(stats_mutex_);
            ++stats_.cache_hits;
            return *hit;
        }
    }

    Completion completion;
    {
        InFlightLimit& limit = *limits_.at(model_id);
        std::unique_lock lock(limit.mutex);
        limit.cv.wait(lock, [&] { return limit.available > 0; });
        --limit.available;
        lock.unlock();

        try {
            completion = attempt_with_retry(config, system_text, user_text);
        } catch (...) {
            lock.lock();
            ++limit.available;
            limit.cv.notify_one();
            throw;
        }
        lock.lock();
        ++limit.available;
        limit.cv.notify_one();
    }

    {
        std::lock_guard lock(stats_mutex_);
        stats_.usage_by_model[model_id] += completion.usage;
        if (config.decoding.max_tokens > 0 &&
            completion.usage.output_tokens >= config.decoding.max_tokens)
            ++stats_.truncation_warnings;
    }
    if (cache_) cache_->put(key_material, completion);
    return completion;
}

std::optional<SentimentLabel> Gateway::parse_label(const std::string& raw) {
    static const std::array<std::vector<std::string>, 5> category_keys = [] {
        std::array<std::vector<std::string>, 5> built;
        for (SentimentLabel label : kAllLabels)
            built[static_cast<int>(label)] = match_keys(arabic_category_word(label));
        return built;
    }();
    const std::vector<std::string> keys = match_keys(raw);
    for (SentimentLabel label : kAllLabels)
        if (keys == category_keys[static_cast<int>(label)]) return label;
    return std::nullopt;
}

ClassifyOutcome Gateway::classify_sentiment(const std::string& model_id, const std::string& text) {
    if (text.empty()) throw Error("classify_sentiment: text is empty");

    const std::string rendered = prompts_.classify.render("input_text", text);
    Completion first = complete(model_id, prompts_.classify.system_text, rendered);

    ClassifyOutcome outcome;
    outcome.usage = first.usage;
    outcome.latency_ms = first.latency_ms;
    if (auto label = parse_label(first.text)) {
        outcome.label = *label;
        return outcome;
    }

    // One repair round: restate the output constraint, then give up loudly.
    const std::string repair =
        rendered + "\nأعد فقط الكلمة التي تمثل التصنيف. لا تضف أي شروحات أو مقدمات.";
    Completion second = complete(model_id, prompts_.classify.system_text, repair);
    outcome.usage += second.usage;
    outcome.latency_ms += second.latency_ms;
    if (auto label = parse_label(second.text)) {
        outcome.label = *label;
        return outcome;
    }
    throw TaxonomyViolation("backend " + model_id + " returned an out-of-taxonomy label",
                            second.text);
}

TextOutcome Gateway::summarize(const std::string& model_id, const std::string& text) {
    if (text.empty()) throw Error("summarize: text is empty");
    const std::string rendered = prompts_.summarize_chunk.render("input_text", text);
    Completion c = complete(model_id, prompts_.summarize_chunk.system_text, rendered);
    if (trim_copy(c.text).empty())
        throw Error("backend " + model_id + " returned an empty summary");
    return {trim_copy(c.text), c.usage, c.latency_ms};
}

TextOutcome Gateway::consolidate(const std::string& model_id,
                                 const std::vector<std::string>& partials) {
    if (partials.empty()) throw Error("consolidate: no partial summaries");
    std::string joined;
    for (const auto& partial : partials) {
        if (!joined.empty()) joined += '\n';
        joined += partial;
    }
    const std::string rendered = prompts_.consolidate.render("partial_summaries", joined);
    Completion c = complete(model_id, prompts_.consolidate.system_text, rendered);
    if (trim_copy(c.text).empty())
        throw Error("backend " + model_id + " returned an empty consolidated summary");
    return {trim_copy(c.text), c.usage, c.latency_ms};
}

} // namespace afsp::gateway
