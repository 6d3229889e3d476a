#pragma once

#include "postasr/corpus.hpp"

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace postasr {

struct normalized_tokens {
    std::vector<std::string> tokens;
    std::string source;

    std::size_t size() const noexcept { return tokens.size(); }
    bool empty() const noexcept { return tokens.empty(); }
};

/// Lowercase, map everything outside [a-z0-9'] to a space, split on whitespace.
normalized_tokens normalize(std::string_view text);

struct edit_counts {
    std::size_t substitutions{ 0 };
    std::size_t deletions{ 0 };
    std::size_t insertions{ 0 };

    std::size_t total() const noexcept { return substitutions + deletions + insertions; }

    friend bool operator==(const edit_counts &, const edit_counts &) = default;
};

/// Unit-cost Levenshtein alignment over tokens. The backtrace prefers substitution/match, then deletion, then
/// insertion, so the decomposition is deterministic.
edit_counts edit_distance(const std::vector<std::string> &ref, const std::vector<std::string> &hyp);

inline edit_counts edit_distance(const normalized_tokens &ref, const normalized_tokens &hyp) {
    return edit_distance(ref.tokens, hyp.tokens);
}

/// (S + D + I) / |ref|. Throws empty_reference when ref has no tokens.
double wer(const normalized_tokens &ref, const normalized_tokens &hyp);

enum class wer_class { neutral = 0, sad, happy, angry, other, overall };

inline constexpr std::size_t num_wer_classes = 6;

std::string_view to_string(wer_class c) noexcept;

/// Maps an emotion label to its report column; labels outside the four target classes go to `other`.
wer_class classify_emotion(std::string_view label) noexcept;

struct wer_cell {
    std::size_t edits{ 0 };
    std::size_t reference_tokens{ 0 };
    std::size_t utterances{ 0 };

    /// Micro average: total edits over total reference tokens.
    double wer() const noexcept { return static_cast<double>(edits) / static_cast<double>(reference_tokens); }
};

struct wer_skips {
    std::size_t missing_ground_truth{ 0 };
    std::size_t missing_emotion{ 0 };
    std::size_t empty_reference{ 0 };
    /// model -> records lacking that model's transcription.
    std::map<std::string, std::size_t> missing_transcription;
};

/**
 * Per-model x per-class WER aggregate.
 *
 * Cells with no scored utterances are absent rather than zero.
 */
struct wer_report {
    std::vector<std::string> models;
    std::map<std::string, std::array<std::optional<wer_cell>, num_wer_classes>> cells;
    /// Scored records per class; `overall` is the sum of the other five.
    std::array<std::size_t, num_wer_classes> utterance_counts{};
    wer_skips skipped;

    std::optional<double> value(const std::string &model, wer_class c) const;
};

wer_report make_wer_report(const corpus &c);

/// Rows are models, columns the six classes; absent cells are empty fields. Final row holds utterance counts.
std::string to_csv(const wer_report &report);

std::ostream &operator<<(std::ostream &out, const wer_report &report);

}  // namespace postasr
