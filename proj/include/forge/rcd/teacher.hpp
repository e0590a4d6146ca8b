#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

namespace forge::rcd {

class TeacherError : public std::runtime_error {
 public:
  enum class Kind { transient, malformed, permanent };
  TeacherError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Wire contract: one prompt in, one completion text out. Implementations
/// must be safe to call from several threads.
class TeacherClient {
 public:
  virtual ~TeacherClient() = default;
  /// Throws TeacherError on failure.
  virtual std::string complete(const std::string& prompt) = 0;
};

struct TeacherClientConfig {
  std::string endpoint;
  std::chrono::milliseconds timeout{30000};
  std::size_t max_retries = 3;
  std::chrono::milliseconds backoff{1000};

  void validate() const;
};

/// POSTs {"prompt": ...} and expects {"text": ...}. Connection errors,
/// timeouts, 408/429 and 5xx are transient; other statuses are permanent.
class HttpTeacher final : public TeacherClient {
 public:
  explicit HttpTeacher(TeacherClientConfig cfg);
  std::string complete(const std::string& prompt) override;

 private:
  TeacherClientConfig cfg_;
  std::string host_;
  std::string path_;
};

struct MockTeacherConfig {
  std::uint64_t seed = 0;
  /// Probability that a given (prompt, attempt) fails.
  double failure_rate = 0.0;
  /// Share of failures that return an unparseable payload instead of a
  /// retryable error.
  double malformed_share = 1.0 / 3.0;
};

/// Template-based offline teacher. Reads the Title/Keywords/Description
/// lines of a prompt and answers in the labeled-section format. Which prompt
/// it is answering is inferred from the requested format: "Reason" lines,
/// "Query" lines, or otherwise a summary.
class MockTeacher final : public TeacherClient {
 public:
  enum class Fault { none, timeout, server_error, malformed };

  explicit MockTeacher(MockTeacherConfig cfg = {});
  std::string complete(const std::string& prompt) override;

  /// Deterministic fault decision for the attempt-th call (0-based) with this prompt.
  Fault fault(std::string_view prompt, std::size_t attempt) const;
  /// The response for a prompt when no fault is injected.
  std::string respond(std::string_view prompt) const;

  std::size_t calls() const;
  std::vector<std::string> call_log() const;

 private:
  MockTeacherConfig cfg_;
  mutable std::mutex mu_;
  std::map<std::string, std::size_t, std::less<>> attempts_;
  std::vector<std::string> log_;
};

}  // namespace forge::rcd
