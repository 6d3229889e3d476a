// postasr: command-line driver for the post-ASR emotion recognition workflow.
//
//   validate     strict schema + id grammar check
//   wer          per-model x per-emotion WER table
//   refine       filter short transcriptions and select one per record ("ensemble")
//   run          predict emotions for one experiment configuration
//   matrix       run every experiment in a config file and tabulate the scores
//   evaluate     score an existing predictions file
//   gen-fixture  write a seeded synthetic corpus

#include "postasr/context.hpp"
#include "postasr/corpus.hpp"
#include "postasr/eval.hpp"
#include "postasr/fixture.hpp"
#include "postasr/llm.hpp"
#include "postasr/pipeline.hpp"
#include "postasr/prompt.hpp"
#include "postasr/refine.hpp"
#include "postasr/wer.hpp"

#include "CLI11.hpp"
#include "fmt/format.h"
#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace postasr;

namespace {

enum exit_code : int { exit_ok = 0, exit_failure = 1, exit_io = 2, exit_backend = 3 };

void log_event(const std::string_view event, const std::string &message) {
    std::cerr << nlohmann::json{ { "event", event }, { "message", message } }.dump() << '\n';
}

void log_warnings(const std::vector<std::string> &warnings) {
    for (const std::string &w : warnings) {
        log_event("warning", w);
    }
}

void write_text(const fs::path &path, const std::string &text) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out{ path, std::ios::binary | std::ios::trunc };
    if (!out) {
        throw io_error(fmt::format("cannot write '{}'", path.string()));
    }
    out << text;
}

nlohmann::json read_json(const fs::path &path) {
    std::ifstream in{ path, std::ios::binary };
    if (!in) {
        throw io_error(fmt::format("cannot open '{}'", path.string()));
    }
    nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded()) {
        throw schema_error(0, "", fmt::format("'{}' is not valid JSON", path.string()));
    }
    return doc;
}

struct backend_options {
    std::string backend{ "http" };
    std::string endpoint{ default_endpoint };
    std::string model{ "gpt-3.5-turbo" };
    std::string cache_dir{ ".postasr-cache" };
    bool no_cache{ false };
    std::size_t concurrency{ 4 };
    std::uint64_t mock_seed{ 0 };
    std::string mock_responses;

    void add_to(CLI::App &cmd, const bool with_backend_default = true) {
        auto *opt = cmd.add_option("--backend", backend, "Annotator backend: http or mock")->check(CLI::IsMember({ "http", "mock" }));
        if (with_backend_default) {
            opt->capture_default_str();
        }
        cmd.add_option("--endpoint", endpoint, "Chat-completions URL")->capture_default_str();
        cmd.add_option("--model", model, "Model name sent to the endpoint")->capture_default_str();
        cmd.add_option("--cache-dir", cache_dir, "Response cache directory")->capture_default_str();
        cmd.add_flag("--no-cache", no_cache, "Bypass the response cache");
        cmd.add_option("--concurrency", concurrency, "Requests in flight")->capture_default_str()->check(CLI::PositiveNumber);
        cmd.add_option("--mock-seed", mock_seed, "Seed for the mock backend")->capture_default_str();
        cmd.add_option("--mock-responses", mock_responses, "JSON object fingerprint -> scripted mock response");
    }
};

// Owns the backend chain: raw backend, optional cache, optional cache wrapper.
struct backend_stack {
    std::unique_ptr<annotator> raw;
    std::unique_ptr<response_cache> cache;
    std::unique_ptr<cached_annotator> cached;

    annotator &get() { return cached ? static_cast<annotator &>(*cached) : *raw; }
};

std::unique_ptr<annotator> make_raw_backend(const backend_kind kind, const backend_options &opts) {
    if (kind == backend_kind::mock) {
        std::map<std::string, std::string> scripted;
        if (!opts.mock_responses.empty()) {
            const nlohmann::json doc = read_json(opts.mock_responses);
            for (const auto &[fp, text] : doc.items()) {
                scripted.emplace(fp, text.get<std::string>());
            }
        }
        return std::make_unique<mock_backend>(opts.mock_seed, std::move(scripted));
    }
    return http_backend::from_environment(opts.endpoint);
}

backend_stack make_backend(const backend_kind kind, const backend_options &opts, response_cache *shared_cache = nullptr) {
    backend_stack stack;
    stack.raw = make_raw_backend(kind, opts);
    if (opts.no_cache) {
        return stack;
    }
    if (shared_cache == nullptr) {
        stack.cache = std::make_unique<response_cache>(opts.cache_dir);
        shared_cache = stack.cache.get();
    }
    stack.cached = std::make_unique<cached_annotator>(*stack.raw, *shared_cache);
    return stack;
}

template_set templates_from(const std::string &path) {
    return path.empty() ? default_templates() : load_templates(path);
}

void write_run_outputs(const run_result &result, const fs::path &out_dir, const std::string &eval_out) {
    fs::create_directories(out_dir);
    write_text(out_dir / "predictions.json", predictions_json(result).dump(2) + "\n");
    write_text(out_dir / "run_log.jsonl", run_log(result));
    if (result.evaluation) {
        const std::string eval_text = to_json(*result.evaluation).dump(2) + "\n";
        write_text(out_dir / "eval.json", eval_text);
        if (!eval_out.empty()) {
            write_text(eval_out, eval_text);
        }
    }
    const fs::path manifest = out_dir / "retry_manifest.json";
    if (!result.failures.empty()) {
        write_text(manifest, retry_manifest(result).dump(2) + "\n");
    } else if (fs::exists(manifest)) {
        fs::remove(manifest);
    }
}

int run_status(const run_result &result) {
    for (const prediction_failure &f : result.failures) {
        if (f.kind != failure_kind::input) {
            return exit_backend;
        }
    }
    return result.failures.empty() ? exit_ok : exit_failure;
}

std::array<double, 5> parse_weights5(const std::string &spec) {
    std::array<double, 5> w{ 1, 1, 1, 1, 1 };
    if (spec.empty()) {
        return w;
    }
    static const std::array<std::string_view, 5> names{ "neutral", "sad", "happy", "angry", "other" };
    std::stringstream in{ spec };
    for (std::string item; std::getline(in, item, ',');) {
        const auto eq = item.find('=');
        const std::string key = item.substr(0, eq);
        const auto it = std::find(names.begin(), names.end(), key);
        if (eq == std::string::npos || it == names.end()) {
            throw config_error(fmt::format("bad label weight '{}' (expected e.g. neutral=2,other=0)", item));
        }
        w[static_cast<std::size_t>(it - names.begin())] = std::stod(item.substr(eq + 1));
    }
    return w;
}

std::array<double, 3> parse_weights3(const std::string &spec) {
    std::array<double, 3> w{ 2, 1, 1 };
    if (spec.empty()) {
        return w;
    }
    static const std::array<std::string_view, 3> names{ "script", "impro", "bare" };
    std::stringstream in{ spec };
    for (std::string item; std::getline(in, item, ',');) {
        const auto eq = item.find('=');
        const std::string key = item.substr(0, eq);
        const auto it = std::find(names.begin(), names.end(), key);
        if (eq == std::string::npos || it == names.end()) {
            throw config_error(fmt::format("bad kind weight '{}' (expected e.g. script=2,bare=0)", item));
        }
        w[static_cast<std::size_t>(it - names.begin())] = std::stod(item.substr(eq + 1));
    }
    return w;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{ "Post-ASR speech emotion recognition pipeline" };
    app.require_subcommand(1);
    bool strict = false;
    app.add_flag("--strict", strict, "Reject unknown ASR model names and non-string fields");

    // validate
    auto *validate_cmd = app.add_subcommand("validate", "Strict schema and id-grammar check");
    std::string validate_path;
    validate_cmd->add_option("corpus", validate_path, "Corpus JSON / JSON-lines file")->required();

    // wer
    auto *wer_cmd = app.add_subcommand("wer", "Per-model x per-emotion WER table");
    std::string wer_in;
    std::string wer_out;
    wer_cmd->add_option("--in", wer_in, "Corpus file")->required();
    wer_cmd->add_option("--wer-out", wer_out, "Write the table as CSV");

    // refine
    auto *refine_cmd = app.add_subcommand("refine", "Select one transcription per record into 'ensemble'");
    std::string refine_in;
    std::string refine_out;
    std::string selector = "llm";
    std::size_t min_length = 5;
    std::string unit = "chars";
    std::vector<std::string> priority;
    backend_options refine_backend;
    refine_cmd->add_option("--in", refine_in, "Input corpus")->required();
    refine_cmd->add_option("--out", refine_out, "Output corpus")->required();
    refine_cmd->add_option("--selector", selector, "llm or longest")->check(CLI::IsMember({ "llm", "longest" }))->capture_default_str();
    refine_cmd->add_option("--min-length", min_length, "Keep transcriptions longer than this")->capture_default_str()->check(CLI::PositiveNumber);
    refine_cmd->add_option("--unit", unit, "chars or tokens")->check(CLI::IsMember({ "chars", "tokens" }))->capture_default_str();
    refine_cmd->add_option("--priority", priority, "ASR model order for prompts and ties")->delimiter(',');
    refine_backend.add_to(*refine_cmd);

    // run
    auto *run_cmd = app.add_subcommand("run", "Predict emotions for one experiment");
    std::string run_corpus;
    std::string run_out_dir = "out";
    std::string run_name = "run";
    std::string text_source = "whispertiny";
    std::string prompt_name = "baseline";
    std::size_t context_length = 3;
    std::string context_mode_name = "session";
    std::string template_file;
    std::string ua_name = "macro-recall";
    std::string eval_out;
    backend_options run_backend;
    run_cmd->add_option("--corpus", run_corpus, "Corpus file")->required();
    run_cmd->add_option("--out-dir", run_out_dir, "Directory for predictions, eval and logs")->capture_default_str();
    run_cmd->add_option("--name", run_name, "Experiment name")->capture_default_str();
    run_cmd->add_option("--text-source", text_source, "ASR model name or 'ensemble'")->capture_default_str();
    run_cmd->add_option("--prompt", prompt_name, "Template name")->capture_default_str();
    run_cmd->add_option("--context-length", context_length, "Preceding utterances")->capture_default_str()->check(CLI::PositiveNumber);
    run_cmd->add_option("--context-mode", context_mode_name, "session or script")->check(CLI::IsMember({ "session", "script" }))->capture_default_str();
    run_cmd->add_option("--template-file", template_file, "Prompt template file (default: shipped templates)");
    run_cmd->add_option("--ua-definition", ua_name, "macro-recall or micro")->check(CLI::IsMember({ "macro-recall", "micro" }))->capture_default_str();
    run_cmd->add_option("--eval-out", eval_out, "Also write the eval report here");
    run_backend.add_to(*run_cmd);

    // matrix
    auto *matrix_cmd = app.add_subcommand("matrix", "Run every experiment of a config file");
    std::string matrix_config;
    std::string matrix_corpus;
    std::string matrix_out_dir = "out";
    std::string matrix_templates;
    std::string matrix_ua = "macro-recall";
    backend_options matrix_backend;
    matrix_backend.backend.clear();
    matrix_cmd->add_option("--config", matrix_config, "Experiment config JSON")->required();
    matrix_cmd->add_option("--corpus", matrix_corpus, "Corpus file")->required();
    matrix_cmd->add_option("--out-dir", matrix_out_dir, "One subdirectory per experiment")->capture_default_str();
    matrix_cmd->add_option("--template-file", matrix_templates, "Prompt template file");
    matrix_cmd->add_option("--ua-definition", matrix_ua, "macro-recall or micro")->check(CLI::IsMember({ "macro-recall", "micro" }))->capture_default_str();
    matrix_backend.add_to(*matrix_cmd, false);

    // evaluate
    auto *eval_cmd = app.add_subcommand("evaluate", "Score a predictions file against corpus emotions");
    std::string eval_corpus;
    std::string eval_predictions;
    std::string eval_cmd_out;
    std::string eval_ua = "macro-recall";
    eval_cmd->add_option("--corpus", eval_corpus, "Corpus with emotion labels")->required();
    eval_cmd->add_option("--predictions", eval_predictions, "JSON array of {id, prediction}")->required();
    eval_cmd->add_option("--eval-out", eval_cmd_out, "Write the report as JSON");
    eval_cmd->add_option("--ua-definition", eval_ua, "macro-recall or micro")->check(CLI::IsMember({ "macro-recall", "micro" }))->capture_default_str();

    // gen-fixture
    auto *gen_cmd = app.add_subcommand("gen-fixture", "Write a seeded synthetic corpus");
    std::string gen_out;
    fixture_config gen_cfg;
    std::string label_weights;
    std::string kind_weights;
    bool no_truth = false;
    gen_cmd->add_option("--out", gen_out, "Output JSON file")->required();
    gen_cmd->add_option("--seed", gen_cfg.seed, "Generator seed")->capture_default_str();
    gen_cmd->add_option("--records", gen_cfg.records, "Record count")->capture_default_str();
    gen_cmd->add_option("--label-weights", label_weights, "e.g. neutral=2,sad=1,happy=1,angry=1,other=1");
    gen_cmd->add_option("--kind-weights", kind_weights, "e.g. script=2,impro=1,bare=1");
    gen_cmd->add_option("--max-dialogue-length", gen_cfg.max_dialogue_length, "Utterances per dialogue")->capture_default_str()->check(CLI::PositiveNumber);
    gen_cmd->add_flag("--no-ground-truth", no_truth, "Omit reference transcriptions");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*validate_cmd) {
            const validation_report report = validate_corpus(validate_path);
            for (const std::string &v : report.violations) {
                std::cout << "violation: " << v << '\n';
            }
            for (const std::string &w : report.warnings) {
                std::cout << "warning: " << w << '\n';
            }
            std::cout << fmt::format("{} records, {} violations\n", report.records, report.violations.size());
            return report.clean() ? exit_ok : exit_failure;
        }

        if (*wer_cmd) {
            const corpus c = load_corpus(wer_in, strict);
            log_warnings(c.warnings);
            const wer_report report = make_wer_report(c);
            std::cout << report;
            const auto &skip = report.skipped;
            if (skip.missing_ground_truth + skip.missing_emotion + skip.empty_reference > 0) {
                log_event("skip", fmt::format("{} without ground truth, {} without emotion, {} with empty reference", skip.missing_ground_truth,
                                              skip.missing_emotion, skip.empty_reference));
            }
            if (!wer_out.empty()) {
                write_text(wer_out, to_csv(report));
            }
            return exit_ok;
        }

        if (*refine_cmd) {
            corpus c = load_corpus(refine_in, strict);
            log_warnings(c.warnings);
            refinement_config cfg;
            cfg.min_length = min_length;
            cfg.unit = unit == "tokens" ? length_unit::tokens : length_unit::characters;
            cfg.selector = selector == "llm" ? selector_kind::llm : selector_kind::longest_only;
            cfg.model_priority = priority;
            cfg.model = refine_backend.model;
            cfg.validate();

            std::optional<backend_stack> stack;
            if (cfg.selector == selector_kind::llm) {
                stack = make_backend(parse_backend_kind(refine_backend.backend), refine_backend);
            }
            const refinement_summary summary = refine_corpus(c, cfg, stack ? &stack->get() : nullptr, refine_backend.concurrency);
            save_corpus(c, refine_out);
            for (const refinement_failure &f : summary.unrefined) {
                std::cerr << nlohmann::json{ { "event", "unrefined" }, { "id", f.id }, { "fingerprint", f.fingerprint }, { "message", f.message } }.dump()
                          << '\n';
            }
            std::cout << fmt::format("refined {} records: {} llm_selected, {} longest_fallback, {} all_short_longest, {} unrefined\n",
                                     c.size() - summary.unrefined.size(), summary.llm_selected, summary.longest_fallback, summary.all_short_longest,
                                     summary.unrefined.size());
            return summary.unrefined.empty() ? exit_ok : exit_backend;
        }

        if (*run_cmd) {
            const corpus c = load_corpus(run_corpus, strict);
            log_warnings(c.warnings);
            const template_set templates = templates_from(template_file);
            experiment_spec spec;
            spec.name = run_name;
            spec.text_source = text_source;
            spec.prompt = prompt_name;
            spec.context_length = context_length;
            spec.mode = parse_context_mode(context_mode_name);
            spec.backend = parse_backend_kind(run_backend.backend);
            spec.model = run_backend.model;
            templates.get(spec.prompt);

            backend_stack stack = make_backend(spec.backend, run_backend);
            const run_result result = run_experiment(c, spec, templates, stack.get(), { run_backend.concurrency, parse_ua_definition(ua_name) });
            write_run_outputs(result, run_out_dir, eval_out);
            if (result.evaluation) {
                std::cout << *result.evaluation;
            }
            std::cout << fmt::format("{} predictions, {} failures, fallback_count {}, cache hit rate {:.3f}\n", result.predictions.size(),
                                     result.failures.size(), result.fallback_count, result.cache_hit_rate());
            return run_status(result);
        }

        if (*matrix_cmd) {
            const corpus c = load_corpus(matrix_corpus, strict);
            log_warnings(c.warnings);
            const template_set templates = templates_from(matrix_templates);
            const std::vector<experiment_spec> specs = load_experiments(matrix_config, templates);
            std::unique_ptr<response_cache> shared;
            if (!matrix_backend.no_cache) {
                shared = std::make_unique<response_cache>(matrix_backend.cache_dir);
            }

            nlohmann::ordered_json rows = nlohmann::ordered_json::array();
            std::cout << fmt::format("{:<40} {:>8} {:>8} {:>8} {:>8} {:>7}\n", "experiment", "neutral", "sad", "happy", "angry", "UA");
            int status = exit_ok;
            for (experiment_spec spec : specs) {
                if (!matrix_backend.backend.empty()) {
                    spec.backend = parse_backend_kind(matrix_backend.backend);
                }
                nlohmann::ordered_json row;
                row["experiment"] = to_json(spec);
                try {
                    backend_stack stack = make_backend(spec.backend, matrix_backend, shared.get());
                    const run_result result = run_experiment(c, spec, templates, stack.get(), { matrix_backend.concurrency, parse_ua_definition(matrix_ua) });
                    write_run_outputs(result, fs::path{ matrix_out_dir } / spec.name, "");
                    status = std::max(status, run_status(result));
                    row["predictions"] = result.predictions.size();
                    row["failures"] = result.failures.size();
                    row["fallback_count"] = result.fallback_count;
                    row["cache_hit_rate"] = result.cache_hit_rate();
                    if (result.evaluation) {
                        const eval_report &e = *result.evaluation;
                        row["f1"] = e.f1;
                        row["ua"] = e.ua;
                        std::cout << fmt::format("{:<40} {:>8.3f} {:>8.3f} {:>8.3f} {:>8.3f} {:>7.3f}\n", spec.name, e.f1[0], e.f1[1], e.f1[2], e.f1[3], e.ua);
                    } else {
                        std::cout << fmt::format("{:<40} {:>8} {:>8} {:>8} {:>8} {:>7}\n", spec.name, "-", "-", "-", "-", "-");
                    }
                } catch (const backend_error &e) {
                    row["error"] = e.what();
                    status = std::max<int>(status, exit_backend);
                    std::cout << fmt::format("{:<40} failed: {}\n", spec.name, e.what());
                } catch (const error &e) {
                    row["error"] = e.what();
                    status = std::max<int>(status, exit_failure);
                    std::cout << fmt::format("{:<40} failed: {}\n", spec.name, e.what());
                }
                rows.push_back(std::move(row));
            }
            write_text(fs::path{ matrix_out_dir } / "matrix.json", rows.dump(2) + "\n");
            return status;
        }

        if (*eval_cmd) {
            const corpus c = load_corpus(eval_corpus, strict);
            std::size_t unmatched = 0;
            const auto pairs = join_predictions(c, parse_predictions(read_json(eval_predictions)), &unmatched);
            if (unmatched > 0) {
                log_event("warning", fmt::format("{} predictions have no labelled corpus record", unmatched));
            }
            const eval_report report = evaluate(pairs, parse_ua_definition(eval_ua));
            log_warnings(report.warnings);
            std::cout << report;
            if (!eval_cmd_out.empty()) {
                write_text(eval_cmd_out, to_json(report).dump(2) + "\n");
            }
            return exit_ok;
        }

        if (*gen_cmd) {
            gen_cfg.label_weights = parse_weights5(label_weights);
            gen_cfg.kind_weights = parse_weights3(kind_weights);
            gen_cfg.with_ground_truth = !no_truth;
            write_text(gen_out, generate_fixture_json(gen_cfg).dump(2) + "\n");
            return exit_ok;
        }
    } catch (const io_error &e) {
        log_event("error", e.what());
        return exit_io;
    } catch (const backend_error &e) {
        log_event("error", e.what());
        return exit_backend;
    } catch (const std::filesystem::filesystem_error &e) {
        log_event("error", e.what());
        return exit_io;
    } catch (const std::exception &e) {
        log_event("error", e.what());
        return exit_failure;
    }
    return exit_ok;
}
