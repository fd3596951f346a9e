#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace samadapter {

/// Precondition or shape violation on a public operation.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// File missing, unreadable, or undecodable. Carries the offending path.
class IoError : public std::runtime_error {
 public:
  IoError(const std::string& path, const std::string& what)
      : std::runtime_error(what + ": " + path), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Bad run or loss configuration. `field` names the offending config key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Weight archive does not fit the model; lists every offending tensor.
class LoadError : public std::runtime_error {
 public:
  LoadError(const std::string& what, std::vector<std::string> tensors)
      : std::runtime_error(what), tensors_(std::move(tensors)) {}
  const std::vector<std::string>& tensors() const noexcept { return tensors_; }

 private:
  std::vector<std::string> tensors_;
};

/// Training produced a non-finite loss; `stems` identifies the batch.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, std::vector<std::string> stems)
      : std::runtime_error(what), stems_(std::move(stems)) {}
  const std::vector<std::string>& stems() const noexcept { return stems_; }

 private:
  std::vector<std::string> stems_;
};

}  // namespace samadapter
