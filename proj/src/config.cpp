#include "afsp/config.hpp"

#include <cstdlib>
#include <fstream>

namespace afsp {

json interpolate_env(const json& j) {
    if (j.is_string()) {
        std::string value = j.get<std::string>();
        std::size_t pos = 0;
        while ((pos = value.find("${", pos)) != std::string::npos) {
            const std::size_t end = value.find('}', pos + 2);
            if (end == std::string::npos) break;
            const std::string name = value.substr(pos + 2, end - pos - 2);
            const char* env = std::getenv(name.c_str());
            const std::string replacement = env ? env : "";
            value.replace(pos, end - pos + 1, replacement);
            pos += replacement.size();
        }
        return value;
    }
    if (j.is_object()) {
        json out = json::object();
        for (const auto& [key, value] : j.items()) out[key] = interpolate_env(value);
        return out;
    }
    if (j.is_array()) {
        json out = json::array();
        for (const auto& value : j) out.push_back(interpolate_env(value));
        return out;
    }
    return j;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config file " + path.string() + " is not valid JSON");
    return from_json(interpolate_env(j));
}

RunConfig RunConfig::from_json(const json& j) {
    RunConfig cfg;
    cfg.corpus_path = j.value("corpus_path", "");
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    cfg.data_dir = j.value("data_dir", cfg.data_dir);
    cfg.workers = j.value("workers", cfg.workers);
    cfg.error_exit_threshold = j.value("error_exit_threshold", cfg.error_exit_threshold);

    if (j.contains("normalization")) cfg.normalization = normalize::config_from_json(j["normalization"]);
    if (j.contains("dedup")) {
        const json& d = j["dedup"];
        cfg.dedup.near_threshold = d.value("near_threshold", cfg.dedup.near_threshold);
        cfg.dedup.semantic_threshold = d.value("semantic_threshold", cfg.dedup.semantic_threshold);
        cfg.dedup.block_ratio = d.value("block_ratio", cfg.dedup.block_ratio);
        cfg.semantic_dedup = d.value("semantic_enabled", cfg.semantic_dedup);
    }
    if (j.contains("entities")) {
        const json& e = j["entities"];
        cfg.companies_path = e.value("companies_path", "");
        cfg.lexicon_path = e.value("lexicon_path", "");
        cfg.ner_endpoint = e.value("ner_endpoint", "");
        cfg.link_threshold = e.value("link_threshold", cfg.link_threshold);
    }
    if (j.contains("gateway")) {
        const json& g = j["gateway"];
        if (g.contains("backends"))
            for (const auto& b : g["backends"]) cfg.backends.push_back(gateway::backend_from_json(b));
        if (g.contains("labelers")) {
            const auto labelers = g["labelers"].get<std::vector<std::string>>();
            if (labelers.size() != 3)
                throw ConfigError("gateway.labelers must list exactly 3 backends");
            for (std::size_t i = 0; i < 3; ++i) cfg.labeler_backends[i] = labelers[i];
        }
        cfg.summarizer_backend = g.value("summarizer", "");
        cfg.mock = g.value("mock", cfg.mock);
        cfg.cache_enabled = g.value("cache_enabled", cfg.cache_enabled);
        cfg.cache_dir = g.value("cache_dir", "");
    }
    if (j.contains("pipeline")) {
        const json& p = j["pipeline"];
        cfg.route_boundary = p.value("route_boundary", cfg.route_boundary);
        cfg.chunk_words = p.value("chunk_words", cfg.chunk_words);
        cfg.label_sources = p.value("label_sources", cfg.label_sources);
    }
    if (j.contains("metrics")) {
        const json& m = j["metrics"];
        cfg.cost_quality.f1_floor = m.value("f1_floor", cfg.cost_quality.f1_floor);
        cfg.cost_quality.ceiling_usd_per_sample =
            m.value("ceiling_usd_per_sample", cfg.cost_quality.ceiling_usd_per_sample);
    }
    return cfg;
}

void RunConfig::finalize() {
    if (companies_path.empty())
        companies_path = (std::filesystem::path(data_dir) / "companies.jsonl").string();
    if (lexicon_path.empty())
        lexicon_path = (std::filesystem::path(data_dir) / "financial_lexicon.txt").string();
    if (cache_dir.empty()) cache_dir = (std::filesystem::path(out_dir) / "cache").string();
    if (workers < 1) workers = 1;
    if (route_boundary < 1) throw ConfigError("route_boundary must be positive");
    if (chunk_words < 1) throw ConfigError("chunk_words must be positive");
    if (link_threshold <= 0.0 || link_threshold > 1.0)
        throw ConfigError("link_threshold must lie in (0,1]");

    if (mock && backends.empty()) {
        // Offline preset: three distinct labelers plus a summarizer, all
        // served by the rule-based mock transport.
        auto make = [](const std::string& id, int max_tokens) {
            gateway::BackendConfig b;
            b.model_id = id;
            b.decoding.temperature = 0.0;
            b.decoding.max_tokens = max_tokens;
            b.pricing = {0.15, 0.60};
            b.retry_base_ms = 1;
            return b;
        };
        backends = {make("mock-labeler-a", 50), make("mock-labeler-b", 50),
                    make("mock-labeler-c", 50), make("mock-summarizer", 150)};
        labeler_backends = {"mock-labeler-a", "mock-labeler-b", "mock-labeler-c"};
        summarizer_backend = "mock-summarizer";
    }
    if (backends.empty()) throw ConfigError("no backends configured");
    auto has_backend = [&](const std::string& id) {
        for (const auto& b : backends)
            if (b.model_id == id) return true;
        return false;
    };
    for (const auto& id : labeler_backends)
        if (id.empty() || !has_backend(id))
            throw ConfigError("labeler backend \"" + id + "\" is not configured");
    if (labeler_backends[0] == labeler_backends[1] || labeler_backends[1] == labeler_backends[2] ||
        labeler_backends[0] == labeler_backends[2])
        throw ConfigError("the three labeler backends must be distinct");
    if (summarizer_backend.empty() || !has_backend(summarizer_backend))
        throw ConfigError("summarizer backend \"" + summarizer_backend + "\" is not configured");
    for (const auto& b : backends)
        if (b.decoding.temperature != 0.0)
            for (const auto& id : labeler_backends)
                if (id == b.model_id)
                    throw ConfigError("labeler backend " + b.model_id +
                                      " must use temperature 0.0 for reproducibility");
}

json RunConfig::to_json() const {
    json j;
    j["corpus_path"] = corpus_path;
    j["out_dir"] = out_dir;
    j["data_dir"] = data_dir;
    j["workers"] = workers;
    j["error_exit_threshold"] = error_exit_threshold;
    j["normalization"] = normalize::to_json(normalization);
    j["dedup"] = {{"near_threshold", dedup.near_threshold},
                  {"semantic_threshold", dedup.semantic_threshold},
                  {"block_ratio", dedup.block_ratio},
                  {"semantic_enabled", semantic_dedup}};
    j["entities"] = {{"companies_path", companies_path},
                     {"lexicon_path", lexicon_path},
                     {"ner_endpoint", ner_endpoint},
                     {"link_threshold", link_threshold}};
    json backends_json = json::array();
    for (const auto& b : backends) backends_json.push_back(gateway::backend_to_json(b));
    j["gateway"] = {{"backends", backends_json},
                    {"labelers", {labeler_backends[0], labeler_backends[1], labeler_backends[2]}},
                    {"summarizer", summarizer_backend},
                    {"mock", mock},
                    {"cache_enabled", cache_enabled},
                    {"cache_dir", cache_dir}};
    j["pipeline"] = {{"route_boundary", route_boundary},
                     {"chunk_words", chunk_words},
                     {"label_sources", label_sources}};
    j["metrics"] = {{"f1_floor", cost_quality.f1_floor},
                    {"ceiling_usd_per_sample", cost_quality.ceiling_usd_per_sample}};
    return j;
}

} // namespace afsp
