#include "postasr/pipeline.hpp"

#include "postasr/parallel.hpp"

#include "fmt/format.h"

#include <fstream>
#include <set>
#include <sstream>
#include <variant>

namespace postasr {

std::string_view to_string(const backend_kind b) noexcept {
    return b == backend_kind::mock ? "mock" : "http";
}

backend_kind parse_backend_kind(const std::string_view name) {
    if (name == "http") {
        return backend_kind::http;
    }
    if (name == "mock") {
        return backend_kind::mock;
    }
    throw config_error(fmt::format("unknown backend '{}' (expected http or mock)", name));
}

std::string_view to_string(const failure_kind k) noexcept {
    switch (k) {
        case failure_kind::auth:
            return "auth";
        case failure_kind::exhausted:
            return "exhausted";
        case failure_kind::backend:
            return "backend";
        case failure_kind::input:
            return "input";
    }
    return "backend";
}

namespace {

void apply_fields(experiment_spec &spec, const nlohmann::json &obj, const std::string &where) {
    if (!obj.is_object()) {
        throw config_error(fmt::format("{}: expected an object", where));
    }
    static const std::set<std::string> known{ "name", "text_source", "prompt", "context_length", "context_mode", "backend", "model" };
    for (const auto &[key, value] : obj.items()) {
        if (!known.count(key)) {
            throw config_error(fmt::format("{}: unknown field '{}'", where, key));
        }
        try {
            if (key == "name") {
                spec.name = value.get<std::string>();
            } else if (key == "text_source") {
                spec.text_source = value.get<std::string>();
            } else if (key == "prompt") {
                spec.prompt = value.get<std::string>();
            } else if (key == "context_length") {
                const auto n = value.get<std::int64_t>();
                if (n < 1) {
                    throw config_error(fmt::format("{}: context_length must be positive", where));
                }
                spec.context_length = static_cast<std::size_t>(n);
            } else if (key == "context_mode") {
                spec.mode = parse_context_mode(value.get<std::string>());
            } else if (key == "backend") {
                spec.backend = parse_backend_kind(value.get<std::string>());
            } else if (key == "model") {
                spec.model = value.get<std::string>();
            }
        } catch (const nlohmann::json::exception &e) {
            throw config_error(fmt::format("{}: field '{}' has the wrong type ({})", where, key, e.what()));
        }
    }
}

}  // namespace

std::vector<experiment_spec> parse_experiments(const nlohmann::json &doc, const template_set &templates) {
    if (!doc.is_object()) {
        throw config_error("experiment config must be a JSON object");
    }
    experiment_spec defaults;
    if (const auto it = doc.find("defaults"); it != doc.end()) {
        apply_fields(defaults, *it, "defaults");
    }
    std::vector<experiment_spec> specs;
    const auto rows = doc.find("experiments");
    if (rows == doc.end()) {
        return specs;
    }
    if (!rows->is_array()) {
        throw config_error("'experiments' must be an array");
    }
    std::set<std::string> names;
    for (std::size_t i = 0; i < rows->size(); ++i) {
        experiment_spec spec = defaults;
        spec.name.clear();
        apply_fields(spec, (*rows)[i], fmt::format("experiment {}", i));
        if (spec.name.empty()) {
            throw config_error(fmt::format("experiment {}: missing name", i));
        }
        if (!names.insert(spec.name).second) {
            throw config_error(fmt::format("experiment name '{}' is used twice", spec.name));
        }
        if (!templates.contains(spec.prompt)) {
            throw config_error(fmt::format("experiment '{}': no prompt template named '{}'", spec.name, spec.prompt));
        }
        if (spec.text_source != ensemble_source && !is_known_asr_model(spec.text_source)) {
            throw config_error(fmt::format("experiment '{}': unknown text source '{}'", spec.name, spec.text_source));
        }
        specs.push_back(std::move(spec));
    }
    return specs;
}

std::vector<experiment_spec> load_experiments(const std::filesystem::path &path, const template_set &templates) {
    std::ifstream in{ path, std::ios::binary };
    if (!in) {
        throw io_error(fmt::format("cannot open experiment config '{}'", path.string()));
    }
    const nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded()) {
        throw config_error(fmt::format("experiment config '{}' is not valid JSON", path.string()));
    }
    return parse_experiments(doc, templates);
}

nlohmann::ordered_json to_json(const experiment_spec &spec) {
    nlohmann::ordered_json doc;
    doc["name"] = spec.name;
    doc["text_source"] = spec.text_source;
    doc["prompt"] = spec.prompt;
    doc["context_length"] = spec.context_length;
    doc["context_mode"] = std::string{ to_string(spec.mode) };
    doc["backend"] = std::string{ to_string(spec.backend) };
    doc["model"] = spec.model;
    return doc;
}

double run_result::cache_hit_rate() const noexcept {
    return predictions.empty() ? 0.0 : static_cast<double>(cache_hits) / static_cast<double>(predictions.size());
}

completion_request make_prediction_request(const corpus &c, const std::size_t target, const experiment_spec &spec,
                                           const template_set &templates, std::size_t *context_fallbacks) {
    const context_window window = build_context(c, target, spec.mode, spec.context_length, spec.text_source);
    bool fell_back = false;
    const utterance_record &rec = c[target];
    const std::string &sentence = resolve_text(rec, spec.text_source, fell_back);
    if (context_fallbacks != nullptr) {
        *context_fallbacks = window.fallbacks + (fell_back ? 1 : 0);
    }
    completion_request request;
    request.model = spec.model;
    request.prompt = templates.get(spec.prompt).render(format_context(window), rec.speaker, sentence);
    request.temperature = 0.0;
    request.max_tokens = prediction_max_tokens;
    return request;
}

run_result run_experiment(const corpus &c, const experiment_spec &spec, const template_set &templates, annotator &backend,
                          const run_options &options) {
    check_text_source(c, spec.text_source);
    std::vector<std::size_t> targets;
    for (std::size_t pos = 0; pos < c.size(); ++pos) {
        if (c[pos].need_prediction) {
            targets.push_back(pos);
        }
    }

    using outcome = std::variant<prediction, prediction_failure>;
    std::vector<outcome> outcomes(targets.size());
    std::vector<std::size_t> fallbacks(targets.size(), 0);

    parallel_for(targets.size(), options.concurrency, [&](const std::size_t i) {
        const utterance_record &rec = c[targets[i]];
        std::string fp;
        try {
            const completion_request request = make_prediction_request(c, targets[i], spec, templates, &fallbacks[i]);
            fp = fingerprint(request);
            const completion response = backend.complete(request);
            prediction p;
            p.id = rec.id.raw;
            p.fingerprint = fp;
            p.raw_text = response.raw_text;
            p.from_cache = response.from_cache;
            p.fallback = !response.normalized_label.has_value();
            p.label = response.normalized_label.value_or(emotion::neutral);
            p.latency_ms = response.latency_ms;
            p.attempts = response.attempt_count;
            outcomes[i] = std::move(p);
        } catch (const auth_error &e) {
            outcomes[i] = prediction_failure{ rec.id.raw, e.fingerprint(), e.what(), failure_kind::auth };
        } catch (const exhausted_error &e) {
            outcomes[i] = prediction_failure{ rec.id.raw, e.fingerprint(), e.what(), failure_kind::exhausted };
        } catch (const backend_error &e) {
            outcomes[i] = prediction_failure{ rec.id.raw, e.fingerprint(), e.what(), failure_kind::backend };
        } catch (const empty_sentence &e) {
            outcomes[i] = prediction_failure{ rec.id.raw, fp, e.what(), failure_kind::input };
        }
    });

    run_result result;
    result.spec = spec;
    std::vector<scored_pair> pairs;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        result.context_fallbacks += fallbacks[i];
        if (auto *failure = std::get_if<prediction_failure>(&outcomes[i])) {
            result.failures.push_back(std::move(*failure));
            continue;
        }
        prediction &p = std::get<prediction>(outcomes[i]);
        result.fallback_count += p.fallback ? 1 : 0;
        result.cache_hits += p.from_cache ? 1 : 0;
        if (const auto &truth = c[targets[i]].emotion) {
            pairs.push_back({ *truth, p.label });
        }
        result.predictions.push_back(std::move(p));
    }
    try {
        if (!pairs.empty()) {
            result.evaluation = evaluate(pairs, options.ua);
        }
    } catch (const empty_input &) {
        // every truth label is outside the four classes: nothing to score
    }
    return result;
}

nlohmann::ordered_json predictions_json(const run_result &result) {
    nlohmann::ordered_json doc = nlohmann::ordered_json::array();
    for (const prediction &p : result.predictions) {
        doc.push_back({ { "id", p.id }, { "prediction", std::string{ to_string(p.label) } } });
    }
    return doc;
}

std::vector<std::pair<std::string, emotion>> parse_predictions(const nlohmann::json &doc) {
    if (!doc.is_array()) {
        throw schema_error(0, "", "predictions must be a JSON array");
    }
    std::vector<std::pair<std::string, emotion>> out;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const nlohmann::json &entry = doc[i];
        if (!entry.is_object() || !entry.contains("id") || !entry["id"].is_string()) {
            throw schema_error(i, "id", "prediction entry needs a string id");
        }
        if (!entry.contains("prediction") || !entry["prediction"].is_string()) {
            throw schema_error(i, "prediction", "prediction entry needs a string label");
        }
        const auto label = parse_emotion(entry["prediction"].get<std::string>());
        if (!label) {
            throw schema_error(i, "prediction", fmt::format("'{}' is not one of the four labels", entry["prediction"].get<std::string>()));
        }
        out.emplace_back(entry["id"].get<std::string>(), *label);
    }
    return out;
}

std::vector<scored_pair> join_predictions(const corpus &c, const std::vector<std::pair<std::string, emotion>> &predictions,
                                          std::size_t *unmatched) {
    std::vector<scored_pair> pairs;
    std::size_t missing = 0;
    for (const auto &[id, label] : predictions) {
        const auto pos = c.find(id);
        if (!pos || !c[*pos].emotion) {
            ++missing;
            continue;
        }
        pairs.push_back({ *c[*pos].emotion, label });
    }
    if (unmatched != nullptr) {
        *unmatched = missing;
    }
    return pairs;
}

std::string run_log(const run_result &result) {
    std::ostringstream out;
    for (const prediction &p : result.predictions) {
        nlohmann::ordered_json event;
        event["event"] = "prediction";
        event["experiment"] = result.spec.name;
        event["id"] = p.id;
        event["fingerprint"] = p.fingerprint;
        event["label"] = std::string{ to_string(p.label) };
        event["raw"] = p.raw_text;
        event["fallback"] = p.fallback;
        event["from_cache"] = p.from_cache;
        event["latency_ms"] = p.latency_ms;
        event["attempts"] = p.attempts;
        out << event.dump() << '\n';
    }
    for (const prediction_failure &f : result.failures) {
        nlohmann::ordered_json event;
        event["event"] = "failure";
        event["experiment"] = result.spec.name;
        event["id"] = f.id;
        event["fingerprint"] = f.fingerprint;
        event["kind"] = std::string{ to_string(f.kind) };
        event["message"] = f.message;
        out << event.dump() << '\n';
    }
    nlohmann::ordered_json summary;
    summary["event"] = "summary";
    summary["experiment"] = to_json(result.spec);
    summary["predictions"] = result.predictions.size();
    summary["failures"] = result.failures.size();
    summary["fallback_count"] = result.fallback_count;
    summary["cache_hits"] = result.cache_hits;
    summary["cache_hit_rate"] = result.cache_hit_rate();
    summary["context_fallbacks"] = result.context_fallbacks;
    if (result.evaluation) {
        summary["ua"] = result.evaluation->ua;
    }
    out << summary.dump() << '\n';
    return out.str();
}

nlohmann::ordered_json retry_manifest(const run_result &result) {
    nlohmann::ordered_json doc;
    doc["experiment"] = to_json(result.spec);
    doc["failed"] = nlohmann::ordered_json::array();
    for (const prediction_failure &f : result.failures) {
        doc["failed"].push_back({ { "id", f.id }, { "fingerprint", f.fingerprint }, { "kind", std::string{ to_string(f.kind) } } });
    }
    return doc;
}

}  // namespace postasr
