#pragma once

#include <stdexcept>
#include <string>

namespace bpcfg {

// Invalid argument or configuration value.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Input data violates an invariant (bad counts, unknown tokens, yield mismatch).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Text input could not be parsed. Carries the line (1-based) or byte offset.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t where)
      : std::runtime_error(what), where_(where) {}
  std::size_t where() const noexcept { return where_; }

 private:
  std::size_t where_;
};

// The grammar cannot generate anything from its root.
class DegenerateGrammarError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A tree was requested for a sentence with zero likelihood.
class SamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Something that must not happen did.
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace bpcfg
