#pragma once

#include <stdexcept>
#include <string>

namespace ota {

// All library failures derive from Error; kind() is a stable machine-readable tag
// that the CLI prints in its one-line error contract.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error("config", w) {}
};
struct ShapeError : Error {
  explicit ShapeError(const std::string& w) : Error("shape", w) {}
};
struct CorruptFileError : Error {
  explicit CorruptFileError(const std::string& w) : Error("corrupt-file", w) {}
};
struct FormatVersionError : Error {
  explicit FormatVersionError(const std::string& w) : Error("format-version", w) {}
};
struct IoError : Error {
  explicit IoError(const std::string& w) : Error("io", w) {}
};
struct TrainingError : Error {
  explicit TrainingError(const std::string& w) : Error("training", w) {}
};
struct DegenerateGradientError : Error {
  explicit DegenerateGradientError(const std::string& w) : Error("degenerate-gradient", w) {}
};
struct BracketError : Error {
  explicit BracketError(const std::string& w) : Error("no-bracket", w) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error("numeric", w) {}
};
struct ParseError : Error {
  explicit ParseError(const std::string& w) : Error("parse", w) {}
};

}  // namespace ota
