#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace feedalign {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input data: bad JSONL line, schema violation, broken invariant.
// Carries the source path and 1-based line number when known (line 0 = n/a).
class IngestError : public Error {
public:
  IngestError(std::string path, std::size_t line, const std::string& message)
      : Error(format(path, line, message)), path_(std::move(path)), line_(line) {}

  const std::string& path() const { return path_; }
  std::size_t line() const { return line_; }

private:
  static std::string format(const std::string& path, std::size_t line,
                            const std::string& message) {
    std::ostringstream os;
    os << path;
    if (line > 0) os << ":" << line;
    os << ": " << message;
    return os.str();
  }

  std::string path_;
  std::size_t line_;
};

// A judge response that could not be reduced to five yes/no answers.
// failed_items lists the 1-based question numbers that were missing or
// ambiguous.
class JudgeParseError : public Error {
public:
  JudgeParseError(std::vector<int> failed_items, const std::string& message)
      : Error(message), failed_items_(std::move(failed_items)) {}

  const std::vector<int>& failed_items() const { return failed_items_; }

private:
  std::vector<int> failed_items_;
};

// Chat backend failure. Transient errors (timeouts, rate limits, 5xx) are
// retried by llm_call; non-transient ones surface immediately.
class BackendError : public Error {
public:
  BackendError(const std::string& message, bool transient)
      : Error(message), transient_(transient) {}

  bool transient() const { return transient_; }

private:
  bool transient_;
};

// Raised when a training step produces a non-finite loss. Carries the step
// index and the ids of the batch elements being processed.
class TrainDivergenceError : public Error {
public:
  TrainDivergenceError(std::size_t step, std::vector<std::string> batch_ids,
                       const std::string& message)
      : Error(message), step_(step), batch_ids_(std::move(batch_ids)) {}

  std::size_t step() const { return step_; }
  const std::vector<std::string>& batch_ids() const { return batch_ids_; }

private:
  std::size_t step_;
  std::vector<std::string> batch_ids_;
};

}  // namespace feedalign
