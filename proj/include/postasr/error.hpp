#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace postasr {

/// Base of every error thrown by the library.
class error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class io_error : public error {
  public:
    using error::error;
};

class malformed_id : public error {
  public:
    malformed_id(std::string raw, std::string reason)
        : error("malformed utterance id '" + raw + "': " + reason), raw_(std::move(raw)), reason_(std::move(reason)) {}

    const std::string &raw() const noexcept { return raw_; }
    const std::string &reason() const noexcept { return reason_; }

  private:
    std::string raw_;
    std::string reason_;
};

class schema_error : public error {
  public:
    schema_error(std::size_t position, std::string key, std::string reason)
        : error("record " + std::to_string(position) + ", key '" + key + "': " + reason),
          position_(position), key_(std::move(key)), reason_(std::move(reason)) {}

    std::size_t position() const noexcept { return position_; }
    const std::string &key() const noexcept { return key_; }
    const std::string &reason() const noexcept { return reason_; }

  private:
    std::size_t position_;
    std::string key_;
    std::string reason_;
};

class empty_reference : public error {
  public:
    empty_reference() : error("reference transcription has no tokens") {}
};

class unknown_text_source : public error {
  public:
    explicit unknown_text_source(const std::string &source) : error("unknown text source '" + source + "'") {}
};

class invalid_target : public error {
  public:
    using error::error;
};

class empty_sentence : public error {
  public:
    empty_sentence() : error("current sentence is empty") {}
};

class template_error : public error {
  public:
    using error::error;
};

class config_error : public error {
  public:
    using error::error;
};

class empty_input : public error {
  public:
    empty_input() : error("no prediction pair has a 4-class truth label") {}
};

/// Failure talking to an annotator backend. Carries the request fingerprint so a run can be resumed.
class backend_error : public error {
  public:
    backend_error(const std::string &what, std::string fingerprint)
        : error(what + " [fingerprint " + fingerprint + "]"), fingerprint_(std::move(fingerprint)) {}

    const std::string &fingerprint() const noexcept { return fingerprint_; }

  private:
    std::string fingerprint_;
};

/// Credentials rejected; never retried.
class auth_error : public backend_error {
  public:
    using backend_error::backend_error;
};

/// Retry budget spent on rate limits or transport failures.
class exhausted_error : public backend_error {
  public:
    using backend_error::backend_error;
};

}  // namespace postasr
