#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include "postasr/llm.hpp"

#include "fmt/format.h"
#include "json.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <unistd.h>

namespace postasr {

namespace {

std::array<unsigned char, 32> sha256(const std::string_view data) {
    std::array<unsigned char, 32> digest{};
    unsigned int len = 0;
    EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr);
    return digest;
}

std::string to_hex(const std::array<unsigned char, 32> &digest) {
    std::string out;
    out.reserve(64);
    for (const unsigned char b : digest) {
        out += fmt::format("{:02x}", b);
    }
    return out;
}

}  // namespace

std::string fingerprint(const completion_request &request) {
    // nlohmann::json keeps object keys sorted, which makes the dump canonical.
    const nlohmann::json canonical{
        { "max_tokens", request.max_tokens },
        { "model", request.model },
        { "prompt", request.prompt },
        { "temperature", request.temperature },
    };
    return to_hex(sha256(canonical.dump()));
}

std::optional<emotion> normalize_label(const std::string_view raw) {
    std::string word;
    const auto check = [&word]() -> std::optional<emotion> {
        std::optional<emotion> found;
        if (!word.empty()) {
            found = parse_emotion(word);
        }
        word.clear();
        return found;
    };
    for (const char c : raw) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (const auto e = check()) {
            return e;
        }
    }
    return check();
}

mock_backend::mock_backend(const std::uint64_t seed, std::map<std::string, std::string> scripted)
    : seed_{ seed }, scripted_{ std::move(scripted) } {}

emotion mock_backend::label_for(const std::uint64_t seed, const std::string_view fingerprint) {
    const auto digest = sha256(fmt::format("{}:{}", seed, fingerprint));
    std::uint64_t value = 0;
    for (std::size_t i = 0; i < 8; ++i) {
        value = (value << 8) | digest[i];
    }
    return all_emotions[value % num_emotions];
}

completion mock_backend::complete(const completion_request &request) {
    const std::string fp = fingerprint(request);
    completion c;
    if (const auto it = scripted_.find(fp); it != scripted_.end()) {
        c.raw_text = it->second;
    } else {
        c.raw_text = std::string{ to_string(label_for(seed_, fp)) };
    }
    c.normalized_label = normalize_label(c.raw_text);
    return c;
}

std::string chat_request_body(const completion_request &request) {
    nlohmann::ordered_json body;
    body["model"] = request.model;
    body["messages"] = nlohmann::ordered_json::array({ { { "role", "user" }, { "content", request.prompt } } });
    body["temperature"] = request.temperature;
    body["max_tokens"] = request.max_tokens;
    return body.dump();
}

std::string parse_chat_response(const std::string_view body) {
    const nlohmann::json doc = nlohmann::json::parse(body, nullptr, false);
    if (doc.is_discarded()) {
        throw error("chat response is not valid JSON");
    }
    const auto choices = doc.find("choices");
    if (choices == doc.end() || !choices->is_array() || choices->empty()) {
        throw error("chat response has no choices");
    }
    const auto &message = choices->front().value("message", nlohmann::json::object());
    const auto content = message.find("content");
    if (content == message.end() || !content->is_string()) {
        throw error("chat response has no message content");
    }
    return content->get<std::string>();
}

http_transport make_http_transport(const std::string &endpoint, const std::string &api_key, const std::chrono::seconds timeout) {
    const auto scheme_end = endpoint.find("://");
    if (scheme_end == std::string::npos) {
        throw config_error(fmt::format("endpoint '{}' has no scheme", endpoint));
    }
    const auto path_begin = endpoint.find('/', scheme_end + 3);
    const std::string origin = endpoint.substr(0, path_begin);
    const std::string path = path_begin == std::string::npos ? "/" : endpoint.substr(path_begin);

    return [origin, path, api_key, timeout](const std::string &body) {
        httplib::Client client{ origin };
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        client.set_bearer_token_auth(api_key);
        const httplib::Result result = client.Post(path, body, "application/json");
        if (!result) {
            throw transport_failure(fmt::format("request to {}{} failed: {}", origin, path, httplib::to_string(result.error())));
        }
        return http_response{ result->status, result->body };
    };
}

http_backend::http_backend(http_transport transport, const retry_policy policy, sleeper sleep, const std::uint64_t jitter_seed)
    : transport_{ std::move(transport) }, policy_{ policy }, sleep_{ std::move(sleep) }, rng_{ jitter_seed } {
    if (!sleep_) {
        sleep_ = [](const std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
    }
}

std::unique_ptr<http_backend> http_backend::from_environment(const std::string &endpoint, const retry_policy policy) {
    const char *key = std::getenv(std::string{ api_key_env }.c_str());
    if (key == nullptr || *key == '\0') {
        throw auth_error(fmt::format("environment variable {} is not set", api_key_env), "-");
    }
    return std::make_unique<http_backend>(make_http_transport(endpoint, key), policy, sleeper{}, std::random_device{}());
}

std::chrono::milliseconds http_backend::backoff(const int attempt) {
    double cap = static_cast<double>(policy_.base_delay.count());
    for (int i = 1; i < attempt; ++i) {
        cap *= policy_.factor;
    }
    const std::lock_guard lock{ rng_mutex_ };
    std::uniform_real_distribution<double> jitter{ 0.0, cap };
    return std::chrono::milliseconds{ static_cast<std::int64_t>(jitter(rng_)) };
}

completion http_backend::complete(const completion_request &request) {
    const std::string fp = fingerprint(request);
    const std::string body = chat_request_body(request);
    const auto start = std::chrono::steady_clock::now();
    std::string last_cause;
    for (int attempt = 1; attempt <= policy_.max_attempts; ++attempt) {
        try {
            const http_response response = transport_(body);
            if (response.status == 401 || response.status == 403) {
                throw auth_error(fmt::format("endpoint rejected credentials (HTTP {})", response.status), fp);
            }
            if (response.status == 200) {
                completion c;
                try {
                    c.raw_text = parse_chat_response(response.body);
                } catch (const error &e) {
                    throw backend_error(e.what(), fp);
                }
                c.normalized_label = normalize_label(c.raw_text);
                c.attempt_count = attempt;
                c.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
                return c;
            }
            if (response.status != 429 && response.status < 500) {
                throw backend_error(fmt::format("endpoint returned HTTP {}: {}", response.status, response.body), fp);
            }
            last_cause = response.status == 429 ? "rate limited (HTTP 429)" : fmt::format("server error (HTTP {})", response.status);
        } catch (const transport_failure &e) {
            last_cause = e.what();
        }
        if (attempt < policy_.max_attempts) {
            sleep_(backoff(attempt));
        }
    }
    throw exhausted_error(fmt::format("gave up after {} attempts, last: {}", policy_.max_attempts, last_cause), fp);
}

response_cache::response_cache(std::filesystem::path dir) : dir_{ std::move(dir) } {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) {
        throw io_error(fmt::format("cannot create cache directory '{}': {}", dir_.string(), ec.message()));
    }
}

std::optional<completion> response_cache::load(const std::string &fingerprint) const {
    std::ifstream in{ dir_ / (fingerprint + ".json"), std::ios::binary };
    if (!in) {
        return std::nullopt;
    }
    const nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.contains("raw_text")) {
        return std::nullopt;
    }
    completion c;
    c.raw_text = doc.at("raw_text").get<std::string>();
    c.normalized_label = normalize_label(c.raw_text);
    c.latency_ms = doc.value("latency_ms", std::int64_t{ 0 });
    c.attempt_count = doc.value("attempt_count", 1);
    c.from_cache = true;
    return c;
}

void response_cache::store(const completion_request &request, const std::string &fingerprint, const completion &c) {
    nlohmann::ordered_json doc;
    doc["fingerprint"] = fingerprint;
    doc["model"] = request.model;
    doc["temperature"] = request.temperature;
    doc["max_tokens"] = request.max_tokens;
    doc["prompt"] = request.prompt;
    doc["raw_text"] = c.raw_text;
    doc["latency_ms"] = c.latency_ms;
    doc["attempt_count"] = c.attempt_count;

    const std::filesystem::path target = dir_ / (fingerprint + ".json");
    std::ostringstream suffix;
    suffix << ".tmp." << ::getpid() << '.' << std::this_thread::get_id();
    const std::filesystem::path temp = dir_ / (fingerprint + suffix.str());
    {
        std::ofstream out{ temp, std::ios::binary | std::ios::trunc };
        if (!out) {
            throw io_error(fmt::format("cannot write cache entry '{}'", temp.string()));
        }
        out << doc.dump(2) << '\n';
    }
    std::error_code ec;
    std::filesystem::rename(temp, target, ec);
    if (ec) {
        throw io_error(fmt::format("cannot publish cache entry '{}': {}", target.string(), ec.message()));
    }

    const std::lock_guard lock{ index_mutex_ };
    std::ofstream index{ dir_ / "index.jsonl", std::ios::binary | std::ios::app };
    index << nlohmann::json{ { "fingerprint", fingerprint }, { "model", request.model } }.dump() << '\n';
}

void response_cache::rebuild_index() {
    const std::lock_guard lock{ index_mutex_ };
    std::vector<std::string> lines;
    for (const auto &entry : std::filesystem::directory_iterator{ dir_ }) {
        if (entry.path().extension() != ".json") {
            continue;
        }
        std::ifstream in{ entry.path(), std::ios::binary };
        const nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
        if (doc.is_discarded() || !doc.contains("fingerprint")) {
            continue;
        }
        lines.push_back(nlohmann::json{ { "fingerprint", doc["fingerprint"] }, { "model", doc.value("model", "") } }.dump());
    }
    std::sort(lines.begin(), lines.end());
    std::ofstream index{ dir_ / "index.jsonl", std::ios::binary | std::ios::trunc };
    for (const std::string &line : lines) {
        index << line << '\n';
    }
}

completion cached_annotator::complete(const completion_request &request) {
    const std::string fp = fingerprint(request);
    if (auto hit = cache_.load(fp)) {
        ++hits_;
        return *hit;
    }
    ++misses_;
    completion fresh = inner_.complete(request);
    cache_.store(request, fp, fresh);
    fresh.from_cache = false;
    return fresh;
}

}  // namespace postasr
