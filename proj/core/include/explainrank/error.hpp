#pragma once

#include <stdexcept>
#include <string>

namespace explainrank {

/// Bad input: malformed files, violated invariants, bad parameters.
/// The CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A remote dependency (LLM server, reward endpoint, search API, fetcher)
/// failed. The CLI maps this to exit code 2.
class ServiceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Network-level failure that survived the retry budget.
class TransportError : public ServiceError {
 public:
  TransportError(const std::string& what, int attempts)
      : ServiceError(what), attempts_(attempts) {}
  int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

/// Non-retryable HTTP status from a remote API.
class ApiError : public ServiceError {
 public:
  ApiError(int status, std::string body_excerpt)
      : ServiceError("API error " + std::to_string(status) + ": " + body_excerpt),
        status_(status),
        body_excerpt_(std::move(body_excerpt)) {}
  int status() const noexcept { return status_; }
  const std::string& body_excerpt() const noexcept { return body_excerpt_; }

 private:
  int status_;
  std::string body_excerpt_;
};

}  // namespace explainrank
