#include "postasr/refine.hpp"

#include "postasr/parallel.hpp"

#include "fmt/format.h"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

namespace postasr {

namespace {

constexpr std::string_view refine_instruction =
    "You are a text refinement assistant. Choose the most comprehensive and coherent sentence from the following "
    "options. If impossible to decide, choose the longest option available. Output only the selected sentence "
    "without any additional explanation or phrases.";

std::size_t priority_rank(const std::string &model, const std::vector<std::string> &priority) {
    const auto it = std::find(priority.begin(), priority.end(), model);
    return static_cast<std::size_t>(it - priority.begin());
}

std::vector<candidate> ordered_candidates(const utterance_record &record, const refinement_config &cfg) {
    std::vector<candidate> out;
    out.reserve(record.transcriptions.size());
    for (const std::string &model : cfg.model_priority) {
        if (const std::string *text = record.transcription(model)) {
            out.push_back({ model, *text });
        }
    }
    for (const auto &[model, text] : record.transcriptions) {
        if (std::find(cfg.model_priority.begin(), cfg.model_priority.end(), model) == cfg.model_priority.end()) {
            out.push_back({ model, text });
        }
    }
    return out;
}

std::string match_key(const std::string_view text) {
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = text.find_last_not_of(" \t\r\n");
    std::string key{ text.substr(first, last - first + 1) };
    std::transform(key.begin(), key.end(), key.begin(), [](const unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return key;
}

}  // namespace

void refinement_config::validate() const {
    if (min_length == 0) {
        throw config_error("min_length must be at least 1");
    }
    std::set<std::string> seen;
    for (const std::string &model : model_priority) {
        if (!seen.insert(model).second) {
            throw config_error(fmt::format("model '{}' appears twice in the priority list", model));
        }
    }
}

std::string_view to_string(const selection_source s) noexcept {
    switch (s) {
        case selection_source::llm_selected:
            return "llm_selected";
        case selection_source::longest_fallback:
            return "longest_fallback";
        case selection_source::all_short_longest:
            return "all_short_longest";
    }
    return "longest_fallback";
}

std::size_t text_length(const std::string_view text, const length_unit unit) {
    if (unit == length_unit::characters) {
        return static_cast<std::size_t>(std::count_if(text.begin(), text.end(), [](const char c) {
            return (static_cast<unsigned char>(c) & 0xC0) != 0x80;
        }));
    }
    std::istringstream words{ std::string{ text } };
    std::size_t count = 0;
    for (std::string w; words >> w;) {
        ++count;
    }
    return count;
}

std::vector<candidate> filter_transcriptions(const utterance_record &record, const refinement_config &cfg) {
    std::vector<candidate> all = ordered_candidates(record, cfg);
    std::vector<candidate> kept;
    std::copy_if(all.begin(), all.end(), std::back_inserter(kept),
                 [&](const candidate &c) { return text_length(c.text, cfg.unit) > cfg.min_length; });
    return kept.empty() ? all : kept;
}

candidate select_longest(const std::vector<candidate> &candidates, const refinement_config &cfg) {
    if (candidates.empty()) {
        throw error("select_longest needs at least one candidate");
    }
    const auto better = [&](const candidate &a, const candidate &b) {
        const std::size_t la = text_length(a.text, length_unit::characters);
        const std::size_t lb = text_length(b.text, length_unit::characters);
        if (la != lb) {
            return la > lb;
        }
        const std::size_t ra = priority_rank(a.model, cfg.model_priority);
        const std::size_t rb = priority_rank(b.model, cfg.model_priority);
        if (ra != rb) {
            return ra < rb;
        }
        return a.model < b.model;
    };
    return *std::min_element(candidates.begin(), candidates.end(), better);
}

std::string build_refine_prompt(const std::vector<candidate> &candidates) {
    std::string prompt{ refine_instruction };
    prompt += '\n';
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        std::string line = candidates[i].text;
        std::replace(line.begin(), line.end(), '\n', ' ');
        std::replace(line.begin(), line.end(), '\r', ' ');
        prompt += fmt::format("{}. {}\n", i + 1, line);
    }
    return prompt;
}

refinement_outcome refine_record(utterance_record &record, const refinement_config &cfg, annotator *backend) {
    if (record.transcriptions.empty()) {
        throw error(fmt::format("record {} has no transcriptions to refine", record.id.raw));
    }
    refinement_outcome outcome;
    outcome.candidates_kept = filter_transcriptions(record, cfg);
    outcome.all_short = std::none_of(outcome.candidates_kept.begin(), outcome.candidates_kept.end(),
                                     [&](const candidate &c) { return text_length(c.text, cfg.unit) > cfg.min_length; });

    std::optional<candidate> chosen;
    if (cfg.selector == selector_kind::llm) {
        if (backend == nullptr) {
            throw config_error("llm selector requires an annotator backend");
        }
        const completion_request request{ cfg.model, build_refine_prompt(outcome.candidates_kept), 0.0, refinement_max_tokens };
        const completion response = backend->complete(request);
        outcome.llm_raw = response.raw_text;
        const std::string wanted = match_key(response.raw_text);
        for (const candidate &c : outcome.candidates_kept) {
            if (match_key(c.text) == wanted) {
                chosen = c;
                outcome.source = selection_source::llm_selected;
                break;
            }
        }
    }
    if (!chosen) {
        chosen = select_longest(outcome.candidates_kept, cfg);
        outcome.source = outcome.all_short ? selection_source::all_short_longest : selection_source::longest_fallback;
    }
    outcome.chosen = chosen->text;
    outcome.chosen_model = chosen->model;
    record.ensemble = outcome.chosen;
    return outcome;
}

refinement_summary refine_corpus(corpus &c, const refinement_config &cfg, annotator *backend, const std::size_t concurrency) {
    cfg.validate();
    auto &records = c.records();
    refinement_summary summary;
    summary.outcomes.resize(records.size());
    std::vector<std::optional<refinement_failure>> failures(records.size());

    // Work on copies so the write-back below is a single-threaded merge.
    parallel_for(records.size(), concurrency, [&](const std::size_t i) {
        utterance_record scratch = records[i];
        try {
            summary.outcomes[i] = refine_record(scratch, cfg, backend);
        } catch (const backend_error &e) {
            failures[i] = refinement_failure{ records[i].id.raw, e.fingerprint(), e.what() };
        }
    });

    for (std::size_t i = 0; i < records.size(); ++i) {
        if (failures[i]) {
            summary.unrefined.push_back(std::move(*failures[i]));
            continue;
        }
        const refinement_outcome &outcome = *summary.outcomes[i];
        records[i].ensemble = outcome.chosen;
        switch (outcome.source) {
            case selection_source::llm_selected:
                ++summary.llm_selected;
                break;
            case selection_source::longest_fallback:
                ++summary.longest_fallback;
                break;
            case selection_source::all_short_longest:
                ++summary.all_short_longest;
                break;
        }
    }
    return summary;
}

}  // namespace postasr
