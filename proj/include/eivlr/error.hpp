#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace eivlr {

/// Argument outside the domain of a density generator or family parameter.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A scale matrix failed to factor. `index` is the observation (or -1 when
/// not tied to one) and `pivot` the Cholesky column that broke down.
class NotPositiveDefinite : public std::runtime_error {
 public:
  NotPositiveDefinite(const std::string& what, long index, long pivot)
      : std::runtime_error(what), index_(index), pivot_(pivot) {}

  long index() const noexcept { return index_; }
  long pivot() const noexcept { return pivot_; }

 private:
  long index_;
  long pivot_;
};

/// Malformed input file, config or flag value.
class InputError : public std::runtime_error {
 public:
  InputError(const std::string& code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

}  // namespace eivlr
