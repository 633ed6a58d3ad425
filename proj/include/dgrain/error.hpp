// Copyright 2026 The dgrain Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace dgrain {

/// Base class for every error raised by the library. `kind()` is a stable
/// lowercase tag used by the CLI's machine-readable error line.
class Error : public std::runtime_error {
public:
  Error(std::string kind, const std::string &what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string &kind() const noexcept { return kind_; }

private:
  std::string kind_;
};

#define DGRAIN_DEFINE_ERROR(Name, tag)                                         \
  class Name : public Error {                                                  \
  public:                                                                      \
    explicit Name(const std::string &what) : Error(tag, what) {}               \
  };

DGRAIN_DEFINE_ERROR(DimensionError, "dimension")
DGRAIN_DEFINE_ERROR(DegenerateVectorError, "degenerate_vector")
DGRAIN_DEFINE_ERROR(NonFiniteError, "non_finite")
DGRAIN_DEFINE_ERROR(ContractError, "contract")
DGRAIN_DEFINE_ERROR(ParameterError, "parameter")
DGRAIN_DEFINE_ERROR(InputError, "input")
DGRAIN_DEFINE_ERROR(LengthExceededError, "length_exceeded")
DGRAIN_DEFINE_ERROR(GenerationError, "generation")
DGRAIN_DEFINE_ERROR(VocabError, "vocab")
DGRAIN_DEFINE_ERROR(VersionError, "version")
DGRAIN_DEFINE_ERROR(ProtocolError, "protocol")
DGRAIN_DEFINE_ERROR(TemplateError, "template")
DGRAIN_DEFINE_ERROR(DivergenceError, "divergence")
DGRAIN_DEFINE_ERROR(ConfigError, "config")
DGRAIN_DEFINE_ERROR(IoError, "io")

#undef DGRAIN_DEFINE_ERROR

/// Malformed input file; carries the 1-based line number.
class ParseError : public Error {
public:
  ParseError(std::size_t line, const std::string &what)
      : Error("parse", "line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

} // namespace dgrain
