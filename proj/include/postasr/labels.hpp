#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace postasr {

/// The four target emotion classes. Enumerator order is the row/column order of every confusion matrix.
enum class emotion { neutral = 0, sad = 1, happy = 2, angry = 3 };

inline constexpr std::size_t num_emotions = 4;

inline constexpr std::array<emotion, num_emotions> all_emotions{ emotion::neutral, emotion::sad, emotion::happy, emotion::angry };

std::string_view to_string(emotion e) noexcept;

/// Case-insensitive match of the canonical label names; anything else (e.g. "frustration") is not a target class.
std::optional<emotion> parse_emotion(std::string_view label) noexcept;

inline std::size_t index_of(emotion e) noexcept { return static_cast<std::size_t>(e); }

}  // namespace postasr
