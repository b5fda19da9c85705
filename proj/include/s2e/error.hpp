#pragma once

#include <stdexcept>
#include <string>

namespace s2e {

enum class ErrorKind {
  config,
  dimension,
  range,
  validation,
  modality,
  empty_corpus,
  window,
  projection,
  missing_tile,
  fetch,
  numeric,
  integrity,
  io,
};

const char* to_string(ErrorKind kind);

// CLI exit code for an error kind: 2 config, 3 data, 4 numeric, 5 I/O.
int exit_code(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace s2e
