#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "afsp/dedup.hpp"
#include "afsp/llm_gateway.hpp"
#include "afsp/metrics.hpp"
#include "afsp/normalize.hpp"

namespace afsp {

/// One config file drives every stage. JSON on disk, with ${ENV_VAR}
/// interpolation inside string values so secrets stay out of the file.
struct RunConfig {
    std::string corpus_path;
    std::string out_dir = "out";
    std::string data_dir = "data"; // prompts/, companies.jsonl, financial_lexicon.txt
    int workers = 4;
    /// Fraction of per-document errors tolerated before the CLI exits 1.
    double error_exit_threshold = 0.0;

    normalize::NormalizationConfig normalization;

    dedup::DedupConfig dedup;
    bool semantic_dedup = true;

    std::string companies_path; // defaults to <data_dir>/companies.jsonl
    std::string lexicon_path;   // defaults to <data_dir>/financial_lexicon.txt
    std::string ner_endpoint;   // empty: dictionary provider over the alias table
    double link_threshold = 0.80;

    std::vector<gateway::BackendConfig> backends;
    std::array<std::string, 3> labeler_backends{};
    std::string summarizer_backend;
    bool mock = false;
    bool cache_enabled = true;
    std::string cache_dir; // defaults to <out_dir>/cache

    int route_boundary = 100; // words; >= boundary goes to summarization
    int chunk_words = 400;
    /// Also label the original text of summarized documents, feeding the
    /// label-consistency analysis.
    bool label_sources = false;

    metrics::CostQualityThresholds cost_quality;

    static RunConfig from_file(const std::filesystem::path& path);
    static RunConfig from_json(const json& j);
    json to_json() const;

    /// Fills derived defaults (companies/lexicon/cache paths) and validates.
    void finalize();

    std::filesystem::path prompts_dir() const {
        return std::filesystem::path(data_dir) / "prompts";
    }
};

/// Replaces ${NAME} inside every string value with the environment value
/// (empty when unset).
json interpolate_env(const json& j);

} // namespace afsp
