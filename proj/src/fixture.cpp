#include "postasr/fixture.hpp"

#include "postasr/labels.hpp"

#include "fmt/format.h"
#include "fmt/ranges.h"

#include <cctype>
#include <map>
#include <numeric>
#include <random>

namespace postasr {

namespace {

constexpr std::array<std::string_view, 48> vocabulary{
    "yeah",  "i",     "you",    "we",    "know",   "think", "suppose", "have",  "been",  "going", "from",  "me",
    "it's",  "that",  "what",   "just",  "really", "don't", "want",    "here",  "there", "now",   "well",  "okay",
    "never", "always", "maybe", "tell",  "about",  "this",  "time",    "good",  "bad",   "sorry", "please", "home",
    "work",  "right", "can't",  "feel",  "like",   "said",  "mean",    "look",  "come",  "back",  "all",   "nothing",
};

constexpr std::array<std::string_view, 3> other_labels{ "frustration", "excited", "surprise" };

struct asr_profile {
    std::string_view model;
    double error_rate;
    bool whisper;
};

constexpr std::array<asr_profile, 11> profiles{ {
    { "hubertlarge", 0.20, false },
    { "w2v2100", 0.38, false },
    { "w2v2960", 0.29, false },
    { "w2v2960large", 0.25, false },
    { "w2v2960largeself", 0.19, false },
    { "wavlmplus", 0.38, false },
    { "whisperbase", 0.30, true },
    { "whisperlarge", 0.28, true },
    { "whispermedium", 0.27, true },
    { "whispersmall", 0.28, true },
    { "whispertiny", 0.36, true },
} };

// Bounded draws built on raw mt19937_64 output, whose sequence the standard pins down.
class draw {
  public:
    explicit draw(const std::uint64_t seed) : rng_{ seed } {}

    std::size_t below(const std::size_t n) { return static_cast<std::size_t>(rng_() % n); }
    double unit() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
    bool chance(const double p) { return unit() < p; }

    template <std::size_t N>
    std::size_t weighted(const std::array<double, N> &weights) {
        const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
        double x = unit() * total;
        for (std::size_t i = 0; i < N; ++i) {
            if (x < weights[i]) {
                return i;
            }
            x -= weights[i];
        }
        return N - 1;
    }

  private:
    std::mt19937_64 rng_;
};

std::vector<std::string_view> make_sentence(draw &d) {
    std::vector<std::string_view> words(2 + d.below(11));
    for (auto &w : words) {
        w = vocabulary[d.below(vocabulary.size())];
    }
    return words;
}

std::string render_reference(const std::vector<std::string_view> &words) {
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        std::string w{ words[i] };
        if (i == 0) {
            w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
        }
        out += (i == 0 ? "" : " ") + w;
    }
    return out + ".";
}

std::string render_hypothesis(const std::vector<std::string_view> &words, const asr_profile &asr, draw &d) {
    if (asr.whisper && d.chance(0.1)) {
        return "Yeah";
    }
    std::vector<std::string_view> out;
    for (const std::string_view w : words) {
        if (!d.chance(asr.error_rate)) {
            out.push_back(w);
            continue;
        }
        switch (d.below(3)) {
            case 0:
                out.push_back(vocabulary[d.below(vocabulary.size())]);
                break;
            case 1:
                break;
            default:
                out.push_back(w);
                out.push_back(vocabulary[d.below(vocabulary.size())]);
                break;
        }
    }
    if (out.empty()) {
        out.push_back(words.front());
    }
    return asr.whisper ? render_reference(out) : fmt::format("{}", fmt::join(out, " "));
}

struct conversation_state {
    unsigned next_script{ 1 };
    unsigned next_impro{ 1 };
    unsigned next_bare{ 1 };
};

}  // namespace

nlohmann::ordered_json generate_fixture_json(const fixture_config &cfg) {
    draw d{ cfg.seed };
    nlohmann::ordered_json out = nlohmann::ordered_json::array();
    std::map<std::string, conversation_state> conversations;
    std::size_t visit = 0;
    std::size_t exhausted_visits = 0;

    const auto emit = [&](const int session, const char recording, const std::string &middle, const std::size_t length) {
        std::array<unsigned, 2> counters{ 0, 0 };
        std::size_t sex = d.below(2);
        for (std::size_t u = 0; u < length && out.size() < cfg.records; ++u) {
            if (u > 0 && d.chance(0.7)) {
                sex ^= 1U;
            }
            const char sex_letter = sex == 0 ? 'F' : 'M';
            const std::vector<std::string_view> words = make_sentence(d);

            nlohmann::ordered_json rec;
            const std::size_t label = d.weighted(cfg.label_weights);
            const std::string emotion_label = label < 4 ? std::string{ to_string(all_emotions[label]) }
                                                        : std::string{ other_labels[d.below(other_labels.size())] };
            rec["need_prediction"] = label < 4 ? "yes" : "no";
            rec["emotion"] = emotion_label;
            rec["id"] = fmt::format("Ses{:02}{}_{}_{}{:03}", session, recording, middle, sex_letter, counters[sex]++);
            rec["speaker"] = fmt::format("Ses{:02}_{}", session, sex_letter);
            if (cfg.with_ground_truth) {
                rec["Ground truth"] = render_reference(words);
            }
            for (const asr_profile &asr : profiles) {
                rec[std::string{ asr.model }] = render_hypothesis(words, asr, d);
            }
            out.push_back(std::move(rec));
        }
    };

    while (out.size() < cfg.records) {
        const std::size_t kind_first = d.weighted(cfg.kind_weights);
        const bool bare = kind_first == 2;
        const int session = static_cast<int>(visit % 5) + 1;
        const char recording = bare ? 'Z' : ((visit / 5) % 2 == 0 ? 'F' : 'M');
        ++visit;
        conversation_state &state = conversations[fmt::format("Ses{:02}{}", session, recording)];

        const std::size_t dialogues = 1 + d.below(cfg.max_dialogues_per_conversation);
        bool produced = false;
        for (std::size_t k = 0; k < dialogues && out.size() < cfg.records; ++k) {
            const std::size_t kind = bare ? 2 : (k == 0 ? kind_first : d.weighted(std::array<double, 2>{ cfg.kind_weights[0], cfg.kind_weights[1] }));
            const std::size_t length = 1 + d.below(cfg.max_dialogue_length);
            if (kind == 2) {
                if (state.next_bare > 99) {
                    break;
                }
                emit(session, recording, fmt::format("{:02}", state.next_bare++), length);
            } else if (kind == 1) {
                if (state.next_impro > 99) {
                    break;
                }
                emit(session, recording, fmt::format("impro{:02}", state.next_impro++), length);
            } else {
                if (state.next_script > 99) {
                    break;
                }
                const unsigned script = state.next_script++;
                if (d.chance(cfg.subset_probability)) {
                    const std::size_t parts = 2 + d.below(2);
                    for (std::size_t part = 1; part <= parts; ++part) {
                        emit(session, recording, fmt::format("script{:02}_{}", script, part), 1 + d.below(cfg.max_dialogue_length));
                    }
                } else {
                    emit(session, recording, fmt::format("script{:02}", script), length);
                }
            }
            produced = true;
        }
        exhausted_visits = produced ? 0 : exhausted_visits + 1;
        if (exhausted_visits > 64) {
            throw config_error(fmt::format("fixture generator ran out of dialogue indices after {} records", out.size()));
        }
    }
    return out;
}

corpus generate_fixture(const fixture_config &cfg) {
    const nlohmann::ordered_json doc = generate_fixture_json(cfg);
    return corpus_from_json({ doc.begin(), doc.end() }, true);
}

}  // namespace postasr
