#include "postasr/wer.hpp"

#include "postasr/labels.hpp"

#include "fmt/format.h"

#include <algorithm>
#include <cctype>

namespace postasr {

normalized_tokens normalize(const std::string_view text) {
    normalized_tokens out;
    out.source = std::string{ text };
    std::string current;
    for (const char raw : text) {
        const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
        if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '\'') {
            current.push_back(c);
        } else if (!current.empty()) {
            out.tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) {
        out.tokens.push_back(std::move(current));
    }
    return out;
}

edit_counts edit_distance(const std::vector<std::string> &ref, const std::vector<std::string> &hyp) {
    const std::size_t n = ref.size();
    const std::size_t m = hyp.size();
    // cost[i][j]: distance between ref[0..i) and hyp[0..j)
    std::vector<std::size_t> cost((n + 1) * (m + 1));
    const auto at = [m](const std::size_t i, const std::size_t j) { return i * (m + 1) + j; };
    for (std::size_t i = 0; i <= n; ++i) {
        cost[at(i, 0)] = i;
    }
    for (std::size_t j = 0; j <= m; ++j) {
        cost[at(0, j)] = j;
    }
    for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t j = 1; j <= m; ++j) {
            const std::size_t diag = cost[at(i - 1, j - 1)] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
            cost[at(i, j)] = std::min({ diag, cost[at(i - 1, j)] + 1, cost[at(i, j - 1)] + 1 });
        }
    }

    edit_counts counts;
    std::size_t i = n;
    std::size_t j = m;
    while (i > 0 || j > 0) {
        const std::size_t here = cost[at(i, j)];
        if (i > 0 && j > 0) {
            const bool match = ref[i - 1] == hyp[j - 1];
            if (cost[at(i - 1, j - 1)] + (match ? 0 : 1) == here) {
                counts.substitutions += match ? 0 : 1;
                --i;
                --j;
                continue;
            }
        }
        if (i > 0 && cost[at(i - 1, j)] + 1 == here) {
            ++counts.deletions;
            --i;
        } else {
            ++counts.insertions;
            --j;
        }
    }
    return counts;
}

double wer(const normalized_tokens &ref, const normalized_tokens &hyp) {
    if (ref.empty()) {
        throw empty_reference();
    }
    return static_cast<double>(edit_distance(ref, hyp).total()) / static_cast<double>(ref.size());
}

std::string_view to_string(const wer_class c) noexcept {
    switch (c) {
        case wer_class::neutral:
            return "Neutral";
        case wer_class::sad:
            return "Sad";
        case wer_class::happy:
            return "Happy";
        case wer_class::angry:
            return "Angry";
        case wer_class::other:
            return "Other";
        case wer_class::overall:
            return "Overall";
    }
    return "Overall";
}

wer_class classify_emotion(const std::string_view label) noexcept {
    if (const auto e = parse_emotion(label)) {
        return static_cast<wer_class>(index_of(*e));
    }
    return wer_class::other;
}

std::optional<double> wer_report::value(const std::string &model, const wer_class c) const {
    const auto it = cells.find(model);
    if (it == cells.end() || !it->second[static_cast<std::size_t>(c)]) {
        return std::nullopt;
    }
    return it->second[static_cast<std::size_t>(c)]->wer();
}

wer_report make_wer_report(const corpus &c) {
    wer_report report;
    for (const utterance_record &rec : c.records()) {
        for (const auto &[model, text] : rec.transcriptions) {
            if (std::find(report.models.begin(), report.models.end(), model) == report.models.end()) {
                report.models.push_back(model);
            }
        }
    }
    for (const std::string &model : report.models) {
        report.cells[model];
    }

    const auto add = [](std::optional<wer_cell> &cell, const edit_counts &ops, const std::size_t ref_len) {
        if (!cell) {
            cell.emplace();
        }
        cell->edits += ops.total();
        cell->reference_tokens += ref_len;
        ++cell->utterances;
    };

    for (const utterance_record &rec : c.records()) {
        if (!rec.ground_truth) {
            ++report.skipped.missing_ground_truth;
            continue;
        }
        if (!rec.emotion) {
            ++report.skipped.missing_emotion;
            continue;
        }
        const normalized_tokens ref = normalize(*rec.ground_truth);
        if (ref.empty()) {
            ++report.skipped.empty_reference;
            continue;
        }
        const auto cls = static_cast<std::size_t>(classify_emotion(*rec.emotion));
        ++report.utterance_counts[cls];
        ++report.utterance_counts[static_cast<std::size_t>(wer_class::overall)];
        for (const std::string &model : report.models) {
            const std::string *hyp = rec.transcription(model);
            if (hyp == nullptr) {
                ++report.skipped.missing_transcription[model];
                continue;
            }
            const edit_counts ops = edit_distance(ref, normalize(*hyp));
            auto &row = report.cells[model];
            add(row[cls], ops, ref.size());
            add(row[static_cast<std::size_t>(wer_class::overall)], ops, ref.size());
        }
    }
    return report;
}

std::string to_csv(const wer_report &report) {
    std::string out = "model";
    for (std::size_t k = 0; k < num_wer_classes; ++k) {
        out += ',';
        out += to_string(static_cast<wer_class>(k));
    }
    out += '\n';
    for (const std::string &model : report.models) {
        out += model;
        const auto &row = report.cells.at(model);
        for (const auto &cell : row) {
            out += ',';
            if (cell) {
                out += fmt::format("{:.6f}", cell->wer());
            }
        }
        out += '\n';
    }
    out += "Utterance";
    for (const std::size_t count : report.utterance_counts) {
        out += fmt::format(",{}", count);
    }
    out += '\n';
    return out;
}

std::ostream &operator<<(std::ostream &out, const wer_report &report) {
    std::size_t width = 9;
    for (const std::string &model : report.models) {
        width = std::max(width, model.size());
    }
    out << fmt::format("{:<{}}", "", width);
    for (std::size_t k = 0; k < num_wer_classes; ++k) {
        out << fmt::format(" {:>8}", to_string(static_cast<wer_class>(k)));
    }
    out << '\n';
    for (const std::string &model : report.models) {
        out << fmt::format("{:<{}}", model, width);
        for (const auto &cell : report.cells.at(model)) {
            out << (cell ? fmt::format(" {:>8.2f}", cell->wer()) : fmt::format(" {:>8}", "-"));
        }
        out << '\n';
    }
    out << fmt::format("{:<{}}", "Utterance", width);
    for (const std::size_t count : report.utterance_counts) {
        out << fmt::format(" {:>8}", count);
    }
    out << '\n';
    return out;
}

}  // namespace postasr
