#include "postasr/context.hpp"

#include "fmt/format.h"

#include <algorithm>

namespace postasr {

std::string_view to_string(const context_mode mode) noexcept {
    return mode == context_mode::script ? "script" : "session";
}

context_mode parse_context_mode(const std::string_view name) {
    if (name == "session") {
        return context_mode::session;
    }
    if (name == "script") {
        return context_mode::script;
    }
    throw config_error(fmt::format("unknown context mode '{}' (expected session or script)", name));
}

void check_text_source(const corpus &c, const std::string_view source) {
    const bool present = std::any_of(c.records().begin(), c.records().end(), [&](const utterance_record &rec) {
        return source == ensemble_source ? rec.ensemble.has_value() : rec.transcription(source) != nullptr;
    });
    if (!present) {
        throw unknown_text_source(std::string{ source });
    }
}

const std::string &resolve_text(const utterance_record &record, const std::string_view source, bool &fell_back) {
    fell_back = false;
    if (source == ensemble_source) {
        if (record.ensemble) {
            return *record.ensemble;
        }
    } else if (const std::string *text = record.transcription(source)) {
        return *text;
    }
    fell_back = true;
    // First of the longest, so the choice is stable across runs.
    const auto longest = std::max_element(record.transcriptions.begin(), record.transcriptions.end(),
                                          [](const auto &a, const auto &b) { return a.second.size() < b.second.size(); });
    return longest->second;
}

context_window build_context(const corpus &c, const std::size_t target, const context_mode mode, const std::size_t length,
                             const std::string_view text_source) {
    if (target >= c.size()) {
        throw invalid_target(fmt::format("target position {} outside corpus of {} records", target, c.size()));
    }
    if (length == 0) {
        throw invalid_target("context length must be positive");
    }
    check_text_source(c, text_source);

    const utterance_record &goal = c[target];
    const auto &buckets = mode == context_mode::script ? c.index() : c.sessions();
    const std::vector<std::size_t> &bucket =
        buckets.at(mode == context_mode::script ? script_key(goal.id) : session_key(goal.id));

    context_window window;
    window.mode = mode;
    window.requested_length = length;

    const auto here = std::lower_bound(bucket.begin(), bucket.end(), target);
    const std::size_t available = static_cast<std::size_t>(here - bucket.begin());
    const std::size_t take = std::min(available, length);
    window.truncated_by_boundary = take < length && take < target;

    for (auto it = here - static_cast<std::ptrdiff_t>(take); it != here; ++it) {
        const std::size_t pos = *it;
        bool fell_back = false;
        const std::string &text = resolve_text(c[pos], text_source, fell_back);
        window.fallbacks += fell_back ? 1 : 0;
        window.items.push_back({ c[pos].speaker, text, pos });
    }
    return window;
}

namespace {

std::string_view trim(const std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    return s.substr(first, s.find_last_not_of(" \t\r\n") - first + 1);
}

}  // namespace

std::string format_context(const context_window &window) {
    if (window.items.empty()) {
        return "(no prior context)";
    }
    std::string out;
    for (const context_item &item : window.items) {
        if (!out.empty()) {
            out += ' ';
        }
        out += fmt::format("Speaker {} says: {}", trim(item.speaker), trim(item.text));
    }
    return out;
}

}  // namespace postasr
