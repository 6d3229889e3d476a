#pragma once

#include "postasr/corpus.hpp"

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace postasr {

enum class context_mode { session, script };

std::string_view to_string(context_mode mode) noexcept;
context_mode parse_context_mode(std::string_view name);

/// Text source name selecting the refined transcription instead of an ASR model.
inline constexpr std::string_view ensemble_source = "ensemble";

struct context_item {
    std::string speaker;
    std::string text;
    std::size_t position{ 0 };

    friend bool operator==(const context_item &, const context_item &) = default;
};

struct context_window {
    std::vector<context_item> items;
    context_mode mode{ context_mode::session };
    std::size_t requested_length{ 0 };
    /// True when the conversation/script boundary, not the requested length, limited the window.
    bool truncated_by_boundary{ false };
    /// Items whose requested text source was missing and that fell back to the longest transcription.
    std::size_t fallbacks{ 0 };
};

/// Throws unknown_text_source unless some record in the corpus carries `source`.
void check_text_source(const corpus &c, std::string_view source);

/// The record's text for `source`; falls back to its longest transcription when that source is missing.
/// Sets `fell_back` accordingly. Never returns ground truth.
const std::string &resolve_text(const utterance_record &record, std::string_view source, bool &fell_back);

/**
 * The `length` records preceding `target` in file order that share its conversation (session mode) or its
 * script_key (script mode), oldest first. need_prediction does not affect eligibility.
 */
context_window build_context(const corpus &c, std::size_t target, context_mode mode, std::size_t length, std::string_view text_source);

/// `Speaker <speaker> says: <text>` per item joined by spaces, or "(no prior context)".
std::string format_context(const context_window &window);

}  // namespace postasr
