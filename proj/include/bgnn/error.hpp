#pragma once

#include <stdexcept>
#include <string>

namespace bgnn {

// Error taxonomy shared by every module. Callers and tests dispatch on kind().
enum class ErrorKind {
  dimension,  // tensor shapes do not conform
  domain,     // value outside an operation's mathematical domain
  config,     // invalid configuration value
  parse,      // malformed input file
  sampling,   // dataset cannot satisfy an episode request
  structure,  // inconsistent episode/graph/model structure
  loss,       // loss undefined (e.g. no valid edges)
  baseline,   // baseline preconditions violated
  eval,       // evaluation produced a non-finite or unusable value
  numeric,    // numerical failure (zero degree, non-finite gradient, ...)
  io,         // filesystem failure
  usage,      // command-line misuse
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string("[") + bgnn::to_string(kind) + "] " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  static Error dimension(const std::string& m) { return {ErrorKind::dimension, m}; }
  static Error domain(const std::string& m) { return {ErrorKind::domain, m}; }
  static Error config(const std::string& m) { return {ErrorKind::config, m}; }
  static Error parse(const std::string& m) { return {ErrorKind::parse, m}; }
  static Error sampling(const std::string& m) { return {ErrorKind::sampling, m}; }
  static Error structure(const std::string& m) { return {ErrorKind::structure, m}; }
  static Error loss(const std::string& m) { return {ErrorKind::loss, m}; }
  static Error baseline(const std::string& m) { return {ErrorKind::baseline, m}; }
  static Error eval(const std::string& m) { return {ErrorKind::eval, m}; }
  static Error numeric(const std::string& m) { return {ErrorKind::numeric, m}; }
  static Error io(const std::string& m) { return {ErrorKind::io, m}; }
  static Error usage(const std::string& m) { return {ErrorKind::usage, m}; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::domain: return "domain";
    case ErrorKind::config: return "config";
    case ErrorKind::parse: return "parse";
    case ErrorKind::sampling: return "sampling";
    case ErrorKind::structure: return "structure";
    case ErrorKind::loss: return "loss";
    case ErrorKind::baseline: return "baseline";
    case ErrorKind::eval: return "eval";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::io: return "io";
    case ErrorKind::usage: return "usage";
  }
  return "unknown";
}

}  // namespace bgnn
