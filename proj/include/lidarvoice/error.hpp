#pragma once

#include <stdexcept>
#include <string>

namespace lidarvoice {

/// Broad failure families. The CLI maps each family to a distinct exit code.
enum class ErrorKind {
  kMalformedFile,
  kParse,
  kShape,
  kEmptyInput,
  kInvalidLabel,
  kEmptyObject,
  kIngestion,
  kCheckpoint,
  kConfig,
  kIo,
  kEmptyDataset,
  kInvalidArgument,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Parse failure carrying the 1-based line it occurred on (0 when unknown).
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(ErrorKind::kParse,
              line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

const char* to_string(ErrorKind kind) noexcept;

}  // namespace lidarvoice
