#pragma once

#include "postasr/context.hpp"
#include "postasr/corpus.hpp"
#include "postasr/eval.hpp"
#include "postasr/llm.hpp"
#include "postasr/prompt.hpp"

#include "json.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace postasr {

enum class backend_kind { http, mock };

std::string_view to_string(backend_kind b) noexcept;
backend_kind parse_backend_kind(std::string_view name);

/// One row of an experiment matrix: transcription source + prompt + context length + context mode.
struct experiment_spec {
    std::string name;
    std::string text_source{ "whispertiny" };
    std::string prompt{ "baseline" };
    std::size_t context_length{ 3 };
    context_mode mode{ context_mode::session };
    backend_kind backend{ backend_kind::http };
    std::string model{ "gpt-3.5-turbo" };
};

/**
 * Experiment config document:
 *
 *     { "version": 1,
 *       "defaults": { <any experiment field> },
 *       "experiments": [ { "name": ..., "text_source": ..., "prompt": ..., "context_length": ...,
 *                          "context_mode": "session"|"script", "backend": "http"|"mock", "model": ... } ] }
 *
 * Rows inherit missing fields from "defaults". Names must be unique and prompts must exist in `templates`.
 */
std::vector<experiment_spec> parse_experiments(const nlohmann::json &doc, const template_set &templates);

std::vector<experiment_spec> load_experiments(const std::filesystem::path &path, const template_set &templates);

nlohmann::ordered_json to_json(const experiment_spec &spec);

struct prediction {
    std::string id;
    emotion label{ emotion::neutral };
    std::string raw_text;
    std::string fingerprint;
    bool from_cache{ false };
    /// The response held no label and `neutral` was substituted.
    bool fallback{ false };
    std::int64_t latency_ms{ 0 };
    int attempts{ 1 };
};

enum class failure_kind { auth, exhausted, backend, input };

std::string_view to_string(failure_kind k) noexcept;

struct prediction_failure {
    std::string id;
    std::string fingerprint;
    std::string message;
    failure_kind kind{ failure_kind::backend };
};

struct run_result {
    experiment_spec spec;
    std::vector<prediction> predictions;
    std::vector<prediction_failure> failures;
    std::optional<eval_report> evaluation;
    std::size_t fallback_count{ 0 };
    std::size_t cache_hits{ 0 };
    std::size_t context_fallbacks{ 0 };

    double cache_hit_rate() const noexcept;
};

struct run_options {
    std::size_t concurrency{ 4 };
    ua_definition ua{ ua_definition::macro_recall };
};

/// Builds the prompt for one record: context window, formatted, rendered into the spec's template.
completion_request make_prediction_request(const corpus &c, std::size_t target, const experiment_spec &spec, const template_set &templates,
                                           std::size_t *context_fallbacks = nullptr);

/// Predicts every record flagged need_prediction, then scores against the corpus emotions when any exist.
run_result run_experiment(const corpus &c, const experiment_spec &spec, const template_set &templates, annotator &backend,
                          const run_options &options = {});

/// `[{"id": ..., "prediction": ...}]` in corpus order.
nlohmann::ordered_json predictions_json(const run_result &result);

/// Reads the predictions format back; throws schema_error on malformed entries.
std::vector<std::pair<std::string, emotion>> parse_predictions(const nlohmann::json &doc);

/// Pairs predictions with corpus emotions by id. Records without an emotion and unknown ids are skipped.
std::vector<scored_pair> join_predictions(const corpus &c, const std::vector<std::pair<std::string, emotion>> &predictions,
                                          std::size_t *unmatched = nullptr);

/// Line-delimited JSON events: one per prediction and failure, then a summary line.
std::string run_log(const run_result &result);

/// Fingerprints of failed requests, for a targeted rerun.
nlohmann::ordered_json retry_manifest(const run_result &result);

}  // namespace postasr
