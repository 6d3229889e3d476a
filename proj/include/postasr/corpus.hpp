#pragma once

#include "postasr/error.hpp"

#include "json.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace postasr {

enum class dialogue_kind { script, impro, bare };

enum class speaker_sex { female, male };

/**
 * Parsed utterance identifier.
 *
 * Grammar: `Ses<DD><L>_<MIDDLE>_<S><III>` where MIDDLE is `script<DD>`, `script<DD>_<d>`, `impro<DD>` or a bare
 * `<DD>` (test-set style). Only script IDs may carry a subset.
 */
struct utterance_id {
    int session{ 0 };
    char recording{ 'F' };
    dialogue_kind kind{ dialogue_kind::script };
    unsigned dialogue_index{ 0 };
    std::optional<unsigned> subset;
    speaker_sex sex{ speaker_sex::female };
    unsigned utterance_index{ 0 };
    std::string raw;

    friend bool operator==(const utterance_id &, const utterance_id &) = default;
};

utterance_id parse_id(std::string_view raw);

/// Rebuilds the canonical string from the parsed fields; equals `raw` for every id accepted by parse_id.
std::string serialize(const utterance_id &id);

/// Session + recording + dialogue kind + dialogue index, e.g. "Ses01F/script01" or "Ses01Z/02".
std::string script_key(const utterance_id &id);

/// Conversation identity: session number + recording letter, e.g. "Ses01F".
std::string session_key(const utterance_id &id);

/// The eleven ASR systems present in the challenge data.
std::span<const std::string_view> known_asr_models() noexcept;

bool is_known_asr_model(std::string_view name) noexcept;

struct utterance_record {
    utterance_id id;
    std::string speaker;
    bool need_prediction{ false };
    std::optional<std::string> emotion;
    std::optional<std::string> ground_truth;
    /// ASR model name -> transcription, in file key order.
    std::vector<std::pair<std::string, std::string>> transcriptions;
    std::optional<std::string> ensemble;
    std::size_t file_position{ 0 };
    /// The object as read, so write-back keeps unrelated keys and key order.
    nlohmann::ordered_json source;

    const std::string *transcription(std::string_view model) const;
};

class corpus {
  public:
    corpus() = default;
    explicit corpus(std::vector<utterance_record> records);

    const std::vector<utterance_record> &records() const noexcept { return records_; }
    std::vector<utterance_record> &records() noexcept { return records_; }
    std::size_t size() const noexcept { return records_.size(); }
    bool empty() const noexcept { return records_.empty(); }
    const utterance_record &operator[](std::size_t pos) const { return records_[pos]; }

    /// script_key -> record positions in file order.
    const std::map<std::string, std::vector<std::size_t>> &index() const noexcept { return index_; }

    /// session_key -> record positions in file order.
    const std::map<std::string, std::vector<std::size_t>> &sessions() const noexcept { return sessions_; }

    std::optional<std::size_t> find(std::string_view id) const;

    /// Diagnostics gathered at load time (unknown model names, non-contiguous scripts).
    std::vector<std::string> warnings;

  private:
    std::vector<utterance_record> records_;
    std::map<std::string, std::vector<std::size_t>> index_;
    std::map<std::string, std::vector<std::size_t>> sessions_;
    std::map<std::string, std::size_t, std::less<>> by_id_;
};

/// Builds a corpus from already-parsed record objects.
corpus corpus_from_json(const std::vector<nlohmann::ordered_json> &objects, bool strict);

/// Parses a JSON array or newline-delimited JSON objects (auto-detected).
corpus parse_corpus(std::string_view text, bool strict);

corpus load_corpus(const std::filesystem::path &path, bool strict);

struct validation_report {
    std::size_t records{ 0 };
    std::vector<std::string> violations;
    std::vector<std::string> warnings;

    bool clean() const noexcept { return violations.empty(); }
};

/// Strict-mode check that collects every violation instead of stopping at the first. Throws io_error.
validation_report validate_corpus(const std::filesystem::path &path);

/// Record as written back: the source object plus an "ensemble" key when present.
nlohmann::ordered_json to_json(const utterance_record &record);

/// Writes the corpus as a pretty-printed JSON array.
void save_corpus(const corpus &c, const std::filesystem::path &path);

}  // namespace postasr
