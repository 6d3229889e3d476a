#pragma once

#include "postasr/corpus.hpp"

#include <array>
#include <cstddef>
#include <cstdint>

namespace postasr {

/// Knobs for the seeded synthetic corpus. Output depends only on these values (no platform-specific distributions).
struct fixture_config {
    std::uint64_t seed{ 1 };
    std::size_t records{ 50 };
    /// Relative weights of neutral, sad, happy, angry and out-of-set labels.
    std::array<double, 5> label_weights{ 1.0, 1.0, 1.0, 1.0, 1.0 };
    /// Relative weights of script, impro and bare (test-style) dialogues.
    std::array<double, 3> kind_weights{ 2.0, 1.0, 1.0 };
    std::size_t max_dialogue_length{ 12 };
    /// Dialogues per conversation before moving to the next session/recording.
    std::size_t max_dialogues_per_conversation{ 4 };
    /// Probability that a script is split into numbered subsets.
    double subset_probability{ 0.5 };
    bool with_ground_truth{ true };
};

/// Grammar-valid ids, multi-script conversations, all eleven ASR transcriptions per record.
nlohmann::ordered_json generate_fixture_json(const fixture_config &cfg);

corpus generate_fixture(const fixture_config &cfg);

}  // namespace postasr
