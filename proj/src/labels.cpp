#include "postasr/labels.hpp"

#include <algorithm>
#include <cctype>

namespace postasr {

std::string_view to_string(const emotion e) noexcept {
    switch (e) {
        case emotion::neutral:
            return "neutral";
        case emotion::sad:
            return "sad";
        case emotion::happy:
            return "happy";
        case emotion::angry:
            return "angry";
    }
    return "neutral";
}

std::optional<emotion> parse_emotion(const std::string_view label) noexcept {
    for (const emotion e : all_emotions) {
        const std::string_view name = to_string(e);
        if (label.size() == name.size()
            && std::equal(label.begin(), label.end(), name.begin(), [](const char a, const char b) {
                   return std::tolower(static_cast<unsigned char>(a)) == b;
               })) {
            return e;
        }
    }
    return std::nullopt;
}

}  // namespace postasr
