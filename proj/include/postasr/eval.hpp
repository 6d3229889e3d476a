#pragma once

#include "postasr/error.hpp"
#include "postasr/labels.hpp"

#include "json.hpp"

#include <array>
#include <cstddef>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace postasr {

/// macro_recall: mean per-class recall over classes present in truth. micro: plain accuracy.
enum class ua_definition { macro_recall, micro };

std::string_view to_string(ua_definition d) noexcept;
ua_definition parse_ua_definition(std::string_view name);

using confusion_matrix = std::array<std::array<std::size_t, num_emotions>, num_emotions>;

struct eval_report {
    /// rows = truth, columns = prediction, both in neutral/sad/happy/angry order
    confusion_matrix confusion{};
    std::array<double, num_emotions> precision{};
    std::array<double, num_emotions> recall{};
    std::array<double, num_emotions> f1{};
    std::array<bool, num_emotions> present_in_truth{};
    double ua{ 0.0 };
    ua_definition definition{ ua_definition::macro_recall };
    std::size_t n_scored{ 0 };
    std::size_t n_excluded{ 0 };
    std::vector<std::string> warnings;
};

/// A prediction paired with the raw truth label, which may be outside the four classes (e.g. "frustration").
struct scored_pair {
    std::string truth;
    emotion prediction;
};

/// Throws empty_input when no pair has a four-class truth label.
eval_report evaluate(const std::vector<scored_pair> &pairs, ua_definition definition = ua_definition::macro_recall);

struct report_delta {
    std::array<double, num_emotions> f1{};
    double ua{ 0.0 };
};

/// b minus a, per class and for UA.
report_delta compare_reports(const eval_report &a, const eval_report &b);

/// e.g. "UA +0.065 | F1 neutral +0.000 sad ..."
std::string format_delta(const report_delta &delta);

nlohmann::ordered_json to_json(const eval_report &report);

std::ostream &operator<<(std::ostream &out, const eval_report &report);

}  // namespace postasr
