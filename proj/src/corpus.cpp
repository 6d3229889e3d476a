#include "postasr/corpus.hpp"

#include "fmt/format.h"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

namespace postasr {

namespace {

constexpr std::array<std::string_view, 11> asr_models{
    "hubertlarge", "w2v2100",      "w2v2960",       "w2v2960large", "w2v2960largeself", "wavlmplus",
    "whisperbase", "whisperlarge", "whispermedium", "whispersmall", "whispertiny",
};

// Left-to-right cursor over an id string; every failure names the segment being read.
class id_scanner {
  public:
    explicit id_scanner(const std::string_view raw) : raw_{ raw } {}

    [[noreturn]] void fail(const std::string &reason) const { throw malformed_id(std::string{ raw_ }, reason); }

    std::string_view rest() const noexcept { return raw_.substr(pos_); }

    bool consume(const std::string_view literal) {
        if (rest().substr(0, literal.size()) == literal) {
            pos_ += literal.size();
            return true;
        }
        return false;
    }

    void expect(const std::string_view literal, const std::string_view segment) {
        if (!consume(literal)) {
            fail(fmt::format("expected '{}' in {} at offset {}", literal, segment, pos_));
        }
    }

    unsigned digits(const std::size_t count, const std::string_view segment) {
        unsigned value = 0;
        for (std::size_t i = 0; i < count; ++i) {
            if (pos_ >= raw_.size() || !std::isdigit(static_cast<unsigned char>(raw_[pos_]))) {
                fail(fmt::format("{} must be {} digit(s) at offset {}", segment, count, pos_));
            }
            value = value * 10 + static_cast<unsigned>(raw_[pos_++] - '0');
        }
        return value;
    }

    char upper(const std::string_view segment) {
        if (pos_ >= raw_.size() || !std::isupper(static_cast<unsigned char>(raw_[pos_]))) {
            fail(fmt::format("{} must be one uppercase letter at offset {}", segment, pos_));
        }
        return raw_[pos_++];
    }

  private:
    std::string_view raw_;
    std::size_t pos_{ 0 };
};

bool is_digit_run(const std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](const char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

}  // namespace

utterance_id parse_id(const std::string_view raw) {
    if (raw.empty()) {
        throw malformed_id("", "id is empty");
    }
    if (std::any_of(raw.begin(), raw.end(), [](const char c) { return static_cast<unsigned char>(c) > 0x7f; })) {
        throw malformed_id(std::string{ raw }, "id must be ASCII");
    }

    id_scanner scan{ raw };
    utterance_id id;
    id.raw = std::string{ raw };

    scan.expect("Ses", "session prefix");
    id.session = static_cast<int>(scan.digits(2, "session number"));
    if (id.session < 1 || id.session > 5) {
        scan.fail(fmt::format("session number {} outside 1..5", id.session));
    }
    id.recording = scan.upper("recording letter");
    scan.expect("_", "separator after session");

    // The speaker/index part is always the final 4 characters, preceded by '_'.
    const std::string_view rest = scan.rest();
    const std::size_t last_sep = rest.rfind('_');
    if (last_sep == std::string_view::npos || last_sep == 0) {
        scan.fail("middle segment missing");
    }
    const std::string_view middle = rest.substr(0, last_sep);
    const std::string_view tail = rest.substr(last_sep + 1);

    if (middle.substr(0, 6) == "script") {
        id.kind = dialogue_kind::script;
        const std::string_view body = middle.substr(6);
        if (body.size() < 2 || !is_digit_run(body.substr(0, 2))) {
            scan.fail("script number must be 2 digits");
        }
        id.dialogue_index = static_cast<unsigned>((body[0] - '0') * 10 + (body[1] - '0'));
        const std::string_view after = body.substr(2);
        if (!after.empty()) {
            if (after.size() != 2 || after[0] != '_' || !is_digit_run(after.substr(1))) {
                scan.fail(fmt::format("script subset '{}' must be '_<digit>'", after));
            }
            id.subset = static_cast<unsigned>(after[1] - '0');
        }
    } else if (middle.substr(0, 5) == "impro") {
        id.kind = dialogue_kind::impro;
        const std::string_view body = middle.substr(5);
        if (body.size() != 2 || !is_digit_run(body)) {
            scan.fail(fmt::format("impro number '{}' must be 2 digits", body));
        }
        id.dialogue_index = static_cast<unsigned>((body[0] - '0') * 10 + (body[1] - '0'));
    } else if (middle.size() == 2 && is_digit_run(middle)) {
        id.kind = dialogue_kind::bare;
        id.dialogue_index = static_cast<unsigned>((middle[0] - '0') * 10 + (middle[1] - '0'));
    } else {
        scan.fail(fmt::format("middle segment '{}' is not script<DD>[_<d>], impro<DD> or <DD>", middle));
    }

    if (tail.size() != 4) {
        scan.fail(fmt::format("utterance part '{}' must be <F|M><3 digits>", tail));
    }
    if (tail[0] == 'F') {
        id.sex = speaker_sex::female;
    } else if (tail[0] == 'M') {
        id.sex = speaker_sex::male;
    } else {
        scan.fail(fmt::format("speaker sex '{}' must be F or M", tail[0]));
    }
    if (!is_digit_run(tail.substr(1))) {
        scan.fail(fmt::format("utterance index '{}' must be 3 digits", tail.substr(1)));
    }
    id.utterance_index = static_cast<unsigned>(std::stoul(std::string{ tail.substr(1) }));
    return id;
}

std::string serialize(const utterance_id &id) {
    std::string middle;
    switch (id.kind) {
        case dialogue_kind::script:
            middle = fmt::format("script{:02}", id.dialogue_index);
            if (id.subset) {
                middle += fmt::format("_{}", *id.subset);
            }
            break;
        case dialogue_kind::impro:
            middle = fmt::format("impro{:02}", id.dialogue_index);
            break;
        case dialogue_kind::bare:
            middle = fmt::format("{:02}", id.dialogue_index);
            break;
    }
    return fmt::format("Ses{:02}{}_{}_{}{:03}", id.session, id.recording, middle, id.sex == speaker_sex::female ? 'F' : 'M',
                       id.utterance_index);
}

std::string script_key(const utterance_id &id) {
    std::string_view kind;
    switch (id.kind) {
        case dialogue_kind::script:
            kind = "script";
            break;
        case dialogue_kind::impro:
            kind = "impro";
            break;
        case dialogue_kind::bare:
            kind = "";
            break;
    }
    return fmt::format("{}/{}{:02}", session_key(id), kind, id.dialogue_index);
}

std::string session_key(const utterance_id &id) {
    return fmt::format("Ses{:02}{}", id.session, id.recording);
}

std::span<const std::string_view> known_asr_models() noexcept {
    return asr_models;
}

bool is_known_asr_model(const std::string_view name) noexcept {
    return std::find(asr_models.begin(), asr_models.end(), name) != asr_models.end();
}

const std::string *utterance_record::transcription(const std::string_view model) const {
    for (const auto &[name, text] : transcriptions) {
        if (name == model) {
            return &text;
        }
    }
    return nullptr;
}

corpus::corpus(std::vector<utterance_record> records) : records_{ std::move(records) } {
    std::map<std::string, std::size_t> last_seen;
    std::set<std::string> reported;
    for (std::size_t pos = 0; pos < records_.size(); ++pos) {
        const utterance_record &rec = records_[pos];
        std::string key = script_key(rec.id);
        auto [it, inserted] = last_seen.try_emplace(key, pos);
        if (!inserted) {
            if (it->second + 1 != pos && reported.insert(key).second) {
                warnings.push_back(fmt::format("script {} is not contiguous in the file (record {} follows record {})", key, pos, it->second));
            }
            it->second = pos;
        }
        index_[key].push_back(pos);
        sessions_[session_key(rec.id)].push_back(pos);
        if (!by_id_.emplace(rec.id.raw, pos).second) {
            warnings.push_back(fmt::format("record {}: duplicate id {}", pos, rec.id.raw));
        }
    }
}

std::optional<std::size_t> corpus::find(const std::string_view id) const {
    const auto it = by_id_.find(id);
    if (it == by_id_.end()) {
        return std::nullopt;
    }
    return it->second;
}

namespace {

bool is_ground_truth_key(const std::string_view key) {
    return key == "Ground truth" || key == "ground_truth" || key == "groundtruth";
}

utterance_record parse_record(const nlohmann::ordered_json &obj, const std::size_t position, const bool strict, std::vector<std::string> &warnings) {
    if (!obj.is_object()) {
        throw schema_error(position, "", "entry is not a JSON object");
    }
    const auto required_string = [&](const char *key) -> std::string {
        const auto it = obj.find(key);
        if (it == obj.end()) {
            throw schema_error(position, key, "required key is missing");
        }
        if (!it->is_string()) {
            throw schema_error(position, key, "value must be a string");
        }
        return it->get<std::string>();
    };

    utterance_record rec;
    rec.file_position = position;
    rec.source = obj;
    try {
        rec.id = parse_id(required_string("id"));
    } catch (const malformed_id &e) {
        throw schema_error(position, "id", e.reason());
    }
    rec.speaker = required_string("speaker");

    const auto np = obj.find("need_prediction");
    if (np == obj.end()) {
        throw schema_error(position, "need_prediction", "required key is missing");
    }
    if (np->is_boolean()) {
        rec.need_prediction = np->get<bool>();
    } else if (np->is_string() && (*np == "yes" || *np == "no")) {
        rec.need_prediction = *np == "yes";
    } else {
        throw schema_error(position, "need_prediction", "value must be \"yes\" or \"no\"");
    }

    for (const auto &[key, value] : obj.items()) {
        if (key == "id" || key == "speaker" || key == "need_prediction") {
            continue;
        }
        if (key == "emotion") {
            if (!value.is_null()) {
                if (!value.is_string()) {
                    throw schema_error(position, key, "value must be a string");
                }
                rec.emotion = value.get<std::string>();
            }
            continue;
        }
        if (is_ground_truth_key(key)) {
            if (!value.is_string()) {
                throw schema_error(position, key, "value must be a string");
            }
            rec.ground_truth = value.get<std::string>();
            continue;
        }
        if (key == "ensemble") {
            if (value.is_string()) {
                rec.ensemble = value.get<std::string>();
            }
            continue;
        }
        if (!value.is_string()) {
            if (strict) {
                throw schema_error(position, key, "unexpected non-string value");
            }
            continue;
        }
        if (!is_known_asr_model(key)) {
            if (strict) {
                throw schema_error(position, key, "unknown ASR model name");
            }
            warnings.push_back(fmt::format("record {}: unknown ASR model '{}' treated as a transcription", position, key));
        }
        rec.transcriptions.emplace_back(key, value.get<std::string>());
    }
    if (rec.transcriptions.empty()) {
        throw schema_error(position, "", "record has no ASR transcriptions");
    }
    return rec;
}

std::vector<nlohmann::ordered_json> split_objects(const std::string_view text) {
    std::vector<nlohmann::ordered_json> objects;
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return objects;
    }
    if (text[first] == '[') {
        nlohmann::ordered_json doc;
        try {
            doc = nlohmann::ordered_json::parse(text);
        } catch (const nlohmann::json::parse_error &e) {
            throw schema_error(0, "", fmt::format("invalid JSON array: {}", e.what()));
        }
        for (auto &entry : doc) {
            objects.push_back(std::move(entry));
        }
        return objects;
    }
    std::istringstream lines{ std::string{ text } };
    std::string line;
    while (std::getline(lines, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            objects.push_back(nlohmann::ordered_json::parse(line));
        } catch (const nlohmann::json::parse_error &e) {
            throw schema_error(objects.size(), "", fmt::format("invalid JSON line: {}", e.what()));
        }
    }
    return objects;
}

}  // namespace

corpus parse_corpus(const std::string_view text, const bool strict) {
    return corpus_from_json(split_objects(text), strict);
}

corpus corpus_from_json(const std::vector<nlohmann::ordered_json> &objects, const bool strict) {
    std::vector<std::string> warnings;
    std::vector<utterance_record> records;
    records.reserve(objects.size());
    for (std::size_t pos = 0; pos < objects.size(); ++pos) {
        records.push_back(parse_record(objects[pos], pos, strict, warnings));
    }
    corpus c{ std::move(records) };
    c.warnings.insert(c.warnings.begin(), warnings.begin(), warnings.end());
    return c;
}

namespace {

std::string read_file(const std::filesystem::path &path) {
    std::ifstream in{ path, std::ios::binary };
    if (!in) {
        throw io_error(fmt::format("cannot open corpus '{}'", path.string()));
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

}  // namespace

validation_report validate_corpus(const std::filesystem::path &path) {
    const std::string text = read_file(path);
    validation_report report;
    std::vector<nlohmann::ordered_json> objects;
    try {
        objects = split_objects(text);
    } catch (const schema_error &e) {
        report.violations.emplace_back(e.what());
        return report;
    }
    report.records = objects.size();
    std::vector<utterance_record> records;
    std::set<std::string> seen;
    for (std::size_t pos = 0; pos < objects.size(); ++pos) {
        try {
            utterance_record rec = parse_record(objects[pos], pos, true, report.warnings);
            if (!seen.insert(rec.id.raw).second) {
                report.violations.push_back(fmt::format("record {}, key 'id': duplicate id {}", pos, rec.id.raw));
            }
            records.push_back(std::move(rec));
        } catch (const schema_error &e) {
            report.violations.emplace_back(e.what());
        }
    }
    if (report.violations.empty()) {
        const corpus c{ std::move(records) };
        report.warnings.insert(report.warnings.end(), c.warnings.begin(), c.warnings.end());
    }
    return report;
}

corpus load_corpus(const std::filesystem::path &path, const bool strict) {
    return parse_corpus(read_file(path), strict);
}

nlohmann::ordered_json to_json(const utterance_record &record) {
    nlohmann::ordered_json out = record.source;
    if (!out.is_object()) {
        out = nlohmann::ordered_json::object();
        out["need_prediction"] = record.need_prediction ? "yes" : "no";
        if (record.emotion) {
            out["emotion"] = *record.emotion;
        }
        out["id"] = record.id.raw;
        out["speaker"] = record.speaker;
        if (record.ground_truth) {
            out["Ground truth"] = *record.ground_truth;
        }
        for (const auto &[model, text] : record.transcriptions) {
            out[model] = text;
        }
    }
    if (record.ensemble) {
        out["ensemble"] = *record.ensemble;
    }
    return out;
}

void save_corpus(const corpus &c, const std::filesystem::path &path) {
    nlohmann::ordered_json doc = nlohmann::ordered_json::array();
    for (const utterance_record &rec : c.records()) {
        doc.push_back(to_json(rec));
    }
    std::ofstream out{ path, std::ios::binary | std::ios::trunc };
    if (!out) {
        throw io_error(fmt::format("cannot write corpus '{}'", path.string()));
    }
    out << doc.dump(2) << '\n';
}

}  // namespace postasr
