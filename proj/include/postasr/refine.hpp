#pragma once

#include "postasr/corpus.hpp"
#include "postasr/llm.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace postasr {

enum class length_unit { characters, tokens };

enum class selector_kind { llm, longest_only };

struct refinement_config {
    std::size_t min_length{ 5 };
    length_unit unit{ length_unit::characters };
    selector_kind selector{ selector_kind::llm };
    /// Tie-break and prompt order; models not listed follow in record order.
    std::vector<std::string> model_priority;
    std::string model{ "gpt-3.5-turbo" };

    /// Throws config_error on min_length == 0 or duplicate priorities.
    void validate() const;
};

struct candidate {
    std::string model;
    std::string text;

    friend bool operator==(const candidate &, const candidate &) = default;
};

enum class selection_source { llm_selected, longest_fallback, all_short_longest };

std::string_view to_string(selection_source s) noexcept;

struct refinement_outcome {
    std::string chosen;
    std::string chosen_model;
    selection_source source{ selection_source::longest_fallback };
    std::vector<candidate> candidates_kept;
    bool all_short{ false };
    std::optional<std::string> llm_raw;
};

/// Code points for `characters`, whitespace-separated words for `tokens`.
std::size_t text_length(std::string_view text, length_unit unit);

/// Candidates strictly longer than min_length, or every candidate when none is.
std::vector<candidate> filter_transcriptions(const utterance_record &record, const refinement_config &cfg);

/// Longest by character count; ties go to the earlier model_priority entry, then the smaller model name.
candidate select_longest(const std::vector<candidate> &candidates, const refinement_config &cfg);

/// The selection instruction followed by the candidates as a numbered list, one per line.
std::string build_refine_prompt(const std::vector<candidate> &candidates);

/// Filters, selects, and stores the choice in record.ensemble. `backend` may be null for longest_only.
/// Backend failures propagate and leave record.ensemble untouched.
refinement_outcome refine_record(utterance_record &record, const refinement_config &cfg, annotator *backend);

struct refinement_failure {
    std::string id;
    std::string fingerprint;
    std::string message;
};

struct refinement_summary {
    std::vector<std::optional<refinement_outcome>> outcomes;
    std::vector<refinement_failure> unrefined;
    std::size_t llm_selected{ 0 };
    std::size_t longest_fallback{ 0 };
    std::size_t all_short_longest{ 0 };
};

/// Refines every record with up to `concurrency` records in flight; results are merged in file order.
refinement_summary refine_corpus(corpus &c, const refinement_config &cfg, annotator *backend, std::size_t concurrency = 4);

}  // namespace postasr
