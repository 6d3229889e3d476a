#pragma once

#include "postasr/error.hpp"
#include "postasr/labels.hpp"

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <string_view>

namespace postasr {

inline constexpr int prediction_max_tokens = 16;
inline constexpr int refinement_max_tokens = 128;

struct completion_request {
    std::string model;
    std::string prompt;
    double temperature{ 0.0 };
    int max_tokens{ prediction_max_tokens };
};

/// 64 hex chars: SHA-256 of the canonical JSON of (max_tokens, model, prompt, temperature).
std::string fingerprint(const completion_request &request);

struct completion {
    std::string raw_text;
    std::optional<emotion> normalized_label;
    bool from_cache{ false };
    std::int64_t latency_ms{ 0 };
    int attempt_count{ 1 };
};

/// Case-fold, strip punctuation, return the first of the four labels appearing as a whole word.
std::optional<emotion> normalize_label(std::string_view raw);

/// Anything that turns a prompt into a completion. Implementations must be safe to call concurrently.
class annotator {
  public:
    virtual ~annotator() = default;
    virtual completion complete(const completion_request &request) = 0;
};

/**
 * Deterministic offline backend.
 *
 * A scripted fingerprint -> response map takes precedence; otherwise the response is one of the four labels
 * picked by hashing (seed, fingerprint), which is uniform over the labels.
 */
class mock_backend final : public annotator {
  public:
    explicit mock_backend(std::uint64_t seed, std::map<std::string, std::string> scripted = {});

    completion complete(const completion_request &request) override;

    static emotion label_for(std::uint64_t seed, std::string_view fingerprint);

  private:
    std::uint64_t seed_;
    std::map<std::string, std::string> scripted_;
};

struct retry_policy {
    int max_attempts{ 5 };
    std::chrono::milliseconds base_delay{ 1000 };
    double factor{ 2.0 };
};

struct http_response {
    int status{ 0 };
    std::string body;
};

/// Thrown by a transport when no HTTP response was obtained.
class transport_failure : public error {
  public:
    using error::error;
};

/// Sends one request body and returns the status + body; throws transport_failure on connection problems.
using http_transport = std::function<http_response(const std::string &body)>;
using sleeper = std::function<void(std::chrono::milliseconds)>;

/// Default chat-completions endpoint.
inline constexpr std::string_view default_endpoint = "https://api.openai.com/v1/chat/completions";
inline constexpr std::string_view api_key_env = "OPENAI_API_KEY";

/// Builds an httplib-backed transport for an `http(s)://host[:port]/path` URL.
http_transport make_http_transport(const std::string &endpoint, const std::string &api_key,
                                   std::chrono::seconds timeout = std::chrono::seconds{ 60 });

/// Chat-completions request body: the prompt as a single user message.
std::string chat_request_body(const completion_request &request);

/// Extracts choices[0].message.content; throws error when the body has no such field.
std::string parse_chat_response(std::string_view body);

/**
 * Chat-completions client with retries.
 *
 * 429 and 5xx responses as well as transport failures are retried with full-jitter exponential backoff;
 * 401/403 raise auth_error immediately.
 */
class http_backend final : public annotator {
  public:
    http_backend(http_transport transport, retry_policy policy = {}, sleeper sleep = {}, std::uint64_t jitter_seed = 0);

    /// Reads the key from OPENAI_API_KEY; throws auth_error when unset.
    static std::unique_ptr<http_backend> from_environment(const std::string &endpoint, retry_policy policy = {});

    completion complete(const completion_request &request) override;

  private:
    std::chrono::milliseconds backoff(int attempt);

    http_transport transport_;
    retry_policy policy_;
    sleeper sleep_;
    std::mutex rng_mutex_;
    std::mt19937_64 rng_;
};

/**
 * Content-addressed store: one `<fingerprint>.json` per completion plus an append-only `index.jsonl`.
 *
 * Files are written to a temporary name and renamed, so concurrent writers of one fingerprint are harmless.
 */
class response_cache {
  public:
    explicit response_cache(std::filesystem::path dir);

    std::optional<completion> load(const std::string &fingerprint) const;
    void store(const completion_request &request, const std::string &fingerprint, const completion &c);

    /// Rewrites the index from the completion files present in the directory.
    void rebuild_index();

    const std::filesystem::path &directory() const noexcept { return dir_; }

  private:
    std::filesystem::path dir_;
    std::mutex index_mutex_;
};

/// Cache in front of another annotator. Hits/misses are counted for run logs.
class cached_annotator final : public annotator {
  public:
    cached_annotator(annotator &inner, response_cache &cache) : inner_{ inner }, cache_{ cache } {}

    completion complete(const completion_request &request) override;

    std::size_t hits() const noexcept { return hits_.load(); }
    std::size_t misses() const noexcept { return misses_.load(); }

  private:
    annotator &inner_;
    response_cache &cache_;
    std::atomic<std::size_t> hits_{ 0 };
    std::atomic<std::size_t> misses_{ 0 };
};

}  // namespace postasr
