#include "postasr/prompt.hpp"

#include "postasr/error.hpp"

#include "fmt/format.h"

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>

namespace postasr {

namespace {

constexpr std::array<prompt_slot, 3> slots{ prompt_slot::context, prompt_slot::current_speaker, prompt_slot::current_sentence };

}  // namespace

std::string_view slot_name(const prompt_slot slot) noexcept {
    switch (slot) {
        case prompt_slot::context:
            return "context";
        case prompt_slot::current_speaker:
            return "current speaker";
        case prompt_slot::current_sentence:
            return "current sentence";
    }
    return "context";
}

prompt_template::prompt_template(std::string name, std::string body) : name_{ std::move(name) }, body_{ std::move(body) } {
    std::string literal;
    const auto flush = [&] {
        if (!literal.empty()) {
            pieces_.push_back({ false, prompt_slot::context, std::move(literal) });
            literal.clear();
        }
    };
    for (std::size_t i = 0; i < body_.size(); ++i) {
        const char c = body_[i];
        if (c == '{' && i + 1 < body_.size() && body_[i + 1] == '{') {
            literal += '{';
            ++i;
        } else if (c == '}' && i + 1 < body_.size() && body_[i + 1] == '}') {
            literal += '}';
            ++i;
        } else if (c == '{') {
            const auto close = body_.find('}', i);
            if (close == std::string::npos) {
                throw template_error(fmt::format("template '{}': unterminated slot at offset {}", name_, i));
            }
            const std::string_view slot_text = std::string_view{ body_ }.substr(i + 1, close - i - 1);
            const auto found = std::find_if(slots.begin(), slots.end(), [&](const prompt_slot s) { return slot_name(s) == slot_text; });
            if (found == slots.end()) {
                throw template_error(fmt::format("template '{}': unknown slot '{{{}}}'", name_, slot_text));
            }
            flush();
            pieces_.push_back({ true, *found, {} });
            i = close;
        } else if (c == '}') {
            throw template_error(fmt::format("template '{}': stray '}}' at offset {}", name_, i));
        } else {
            literal += c;
        }
    }
    flush();
}

std::size_t prompt_template::slot_count(const prompt_slot slot) const noexcept {
    return static_cast<std::size_t>(std::count_if(pieces_.begin(), pieces_.end(), [slot](const piece &p) { return p.is_slot && p.slot == slot; }));
}

std::string prompt_template::render(const std::string_view context, const std::string_view speaker, const std::string_view sentence) const {
    if (sentence.find_first_not_of(" \t\r\n") == std::string_view::npos) {
        throw empty_sentence();
    }
    std::string out;
    for (const piece &p : pieces_) {
        if (!p.is_slot) {
            out += p.text;
            continue;
        }
        switch (p.slot) {
            case prompt_slot::context:
                out += context;
                break;
            case prompt_slot::current_speaker:
                out += speaker;
                break;
            case prompt_slot::current_sentence:
                out += sentence;
                break;
        }
    }
    return out;
}

template_set::template_set(std::vector<prompt_template> templates) : templates_{ std::move(templates) } {
    for (std::size_t i = 0; i < templates_.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            if (templates_[i].name() == templates_[j].name()) {
                throw template_error(fmt::format("template '{}' defined twice", templates_[i].name()));
            }
        }
    }
}

const prompt_template &template_set::get(const std::string_view name) const {
    const auto it = std::find_if(templates_.begin(), templates_.end(), [&](const prompt_template &t) { return t.name() == name; });
    if (it == templates_.end()) {
        throw template_error(fmt::format("no prompt template named '{}'", name));
    }
    return *it;
}

bool template_set::contains(const std::string_view name) const noexcept {
    return std::any_of(templates_.begin(), templates_.end(), [&](const prompt_template &t) { return t.name() == name; });
}

template_set parse_templates(const std::string_view text) {
    std::vector<prompt_template> templates;
    std::istringstream in{ std::string{ text } };
    std::string line;
    std::string name;
    std::vector<std::string> body;
    bool in_template = false;
    const auto finish = [&] {
        while (!body.empty() && body.back().find_first_not_of(" \t\r") == std::string::npos) {
            body.pop_back();
        }
        std::string joined;
        for (std::size_t i = 0; i < body.size(); ++i) {
            joined += (i == 0 ? "" : "\n") + body[i];
        }
        templates.emplace_back(name, std::move(joined));
        body.clear();
    };
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.rfind("--- ", 0) == 0) {
            if (in_template) {
                finish();
            }
            name = line.substr(4);
            name.erase(name.find_last_not_of(' ') + 1);
            if (name.empty()) {
                throw template_error("template header without a name");
            }
            in_template = true;
        } else if (in_template) {
            body.push_back(line);
        } else if (!line.empty() && line[0] != '#') {
            throw template_error(fmt::format("text before the first template header: '{}'", line));
        }
    }
    if (in_template) {
        finish();
    }
    return template_set{ std::move(templates) };
}

template_set load_templates(const std::filesystem::path &path) {
    std::ifstream in{ path, std::ios::binary };
    if (!in) {
        throw io_error(fmt::format("cannot open template file '{}'", path.string()));
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_templates(buffer.str());
}

const template_set &default_templates() {
    static const template_set defaults = parse_templates(default_template_text());
    return defaults;
}

std::set<emotion> expected_labels() {
    return { all_emotions.begin(), all_emotions.end() };
}

}  // namespace postasr
