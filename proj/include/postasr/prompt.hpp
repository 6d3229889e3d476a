#pragma once

#include "postasr/labels.hpp"

#include <cstddef>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace postasr {

enum class prompt_slot { context, current_speaker, current_sentence };

/// Slot name as written between braces, e.g. "current speaker".
std::string_view slot_name(prompt_slot slot) noexcept;

/**
 * A prediction prompt with `{context}`, `{current speaker}` and `{current sentence}` slots.
 *
 * `{{` and `}}` stand for literal braces. Any other brace use is rejected when the template is built.
 */
class prompt_template {
  public:
    prompt_template(std::string name, std::string body);

    const std::string &name() const noexcept { return name_; }
    const std::string &body() const noexcept { return body_; }

    std::size_t slot_count(prompt_slot slot) const noexcept;

    /// Substitutes the slots; inserted text is not rescanned. Throws empty_sentence on a blank sentence.
    std::string render(std::string_view context, std::string_view speaker, std::string_view sentence) const;

  private:
    struct piece {
        bool is_slot;
        prompt_slot slot;
        std::string text;
    };

    std::string name_;
    std::string body_;
    std::vector<piece> pieces_;
};

class template_set {
  public:
    template_set() = default;
    explicit template_set(std::vector<prompt_template> templates);

    /// Throws template_error when `name` is not present.
    const prompt_template &get(std::string_view name) const;
    bool contains(std::string_view name) const noexcept;
    const std::vector<prompt_template> &all() const noexcept { return templates_; }

  private:
    std::vector<prompt_template> templates_;
};

/// Reads the `--- <name>` separated format. Lines starting with '#' before the first header are comments.
template_set parse_templates(std::string_view text);

template_set load_templates(const std::filesystem::path &path);

/// The shipped baseline, expert, gambler, cot and cot_fired templates.
const template_set &default_templates();

/// The text of the shipped template file.
std::string_view default_template_text() noexcept;

/// {happy, sad, neutral, angry}
std::set<emotion> expected_labels();

}  // namespace postasr
