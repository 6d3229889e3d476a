#include "postasr/eval.hpp"

#include "postasr/error.hpp"

#include "fmt/format.h"

namespace postasr {

std::string_view to_string(const ua_definition d) noexcept {
    return d == ua_definition::micro ? "micro" : "macro-recall";
}

ua_definition parse_ua_definition(const std::string_view name) {
    if (name == "macro-recall") {
        return ua_definition::macro_recall;
    }
    if (name == "micro") {
        return ua_definition::micro;
    }
    throw config_error(fmt::format("unknown UA definition '{}' (expected macro-recall or micro)", name));
}

eval_report evaluate(const std::vector<scored_pair> &pairs, const ua_definition definition) {
    eval_report report;
    report.definition = definition;
    for (const scored_pair &p : pairs) {
        const auto truth = parse_emotion(p.truth);
        if (!truth) {
            ++report.n_excluded;
            continue;
        }
        ++report.confusion[index_of(*truth)][index_of(p.prediction)];
        ++report.n_scored;
    }
    if (report.n_scored == 0) {
        throw empty_input();
    }

    std::size_t correct = 0;
    double recall_sum = 0.0;
    std::size_t classes_present = 0;
    for (std::size_t k = 0; k < num_emotions; ++k) {
        std::size_t truth_total = 0;
        std::size_t predicted_total = 0;
        for (std::size_t j = 0; j < num_emotions; ++j) {
            truth_total += report.confusion[k][j];
            predicted_total += report.confusion[j][k];
        }
        const std::size_t tp = report.confusion[k][k];
        correct += tp;
        const std::string_view name = to_string(all_emotions[k]);

        report.present_in_truth[k] = truth_total > 0;
        report.recall[k] = truth_total > 0 ? static_cast<double>(tp) / static_cast<double>(truth_total) : 0.0;
        report.precision[k] = predicted_total > 0 ? static_cast<double>(tp) / static_cast<double>(predicted_total) : 0.0;
        const double denom = report.precision[k] + report.recall[k];
        report.f1[k] = denom > 0.0 ? 2.0 * report.precision[k] * report.recall[k] / denom : 0.0;
        if (denom == 0.0) {
            report.warnings.push_back(fmt::format("F1 for {} set to 0 (precision + recall = 0)", name));
        }
        if (truth_total > 0) {
            recall_sum += report.recall[k];
            ++classes_present;
        } else {
            report.warnings.push_back(fmt::format("class {} absent from truth; left out of UA", name));
        }
    }
    report.ua = definition == ua_definition::micro ? static_cast<double>(correct) / static_cast<double>(report.n_scored)
                                                   : recall_sum / static_cast<double>(classes_present);
    return report;
}

report_delta compare_reports(const eval_report &a, const eval_report &b) {
    report_delta delta;
    for (std::size_t k = 0; k < num_emotions; ++k) {
        delta.f1[k] = b.f1[k] - a.f1[k];
    }
    delta.ua = b.ua - a.ua;
    return delta;
}

std::string format_delta(const report_delta &delta) {
    std::string out = fmt::format("UA {:+.3f} | F1", delta.ua);
    for (std::size_t k = 0; k < num_emotions; ++k) {
        out += fmt::format(" {} {:+.3f}", to_string(all_emotions[k]), delta.f1[k]);
    }
    return out;
}

nlohmann::ordered_json to_json(const eval_report &report) {
    nlohmann::ordered_json doc;
    doc["labels"] = nlohmann::ordered_json::array();
    for (const emotion e : all_emotions) {
        doc["labels"].push_back(std::string{ to_string(e) });
    }
    doc["confusion"] = report.confusion;
    nlohmann::ordered_json per_class = nlohmann::ordered_json::object();
    for (std::size_t k = 0; k < num_emotions; ++k) {
        per_class[std::string{ to_string(all_emotions[k]) }] = {
            { "precision", report.precision[k] },
            { "recall", report.recall[k] },
            { "f1", report.f1[k] },
            { "support", [&] {
                 std::size_t s = 0;
                 for (const std::size_t v : report.confusion[k]) {
                     s += v;
                 }
                 return s;
             }() },
        };
    }
    doc["per_class"] = per_class;
    doc["ua"] = report.ua;
    doc["ua_definition"] = std::string{ to_string(report.definition) };
    doc["n_scored"] = report.n_scored;
    doc["n_excluded"] = report.n_excluded;
    doc["warnings"] = report.warnings;
    return doc;
}

std::ostream &operator<<(std::ostream &out, const eval_report &report) {
    out << fmt::format("{:>8} {:>9} {:>7} {:>6} {:>8}\n", "", "precision", "recall", "f1", "support");
    for (std::size_t k = 0; k < num_emotions; ++k) {
        std::size_t support = 0;
        for (const std::size_t v : report.confusion[k]) {
            support += v;
        }
        out << fmt::format("{:>8} {:>9.3f} {:>7.3f} {:>6.3f} {:>8}\n", to_string(all_emotions[k]), report.precision[k], report.recall[k],
                           report.f1[k], support);
    }
    out << fmt::format("UA ({}) = {:.3f} over {} scored, {} excluded\n", to_string(report.definition), report.ua, report.n_scored,
                       report.n_excluded);
    return out;
}

}  // namespace postasr
