#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace gsj {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A non-finite value showed up in s, u, exp(s) or an iterate.
class OverflowError : public Error {
 public:
  OverflowError(const std::string& what, double max_abs,
                std::optional<std::size_t> iteration = std::nullopt,
                std::optional<std::size_t> module = std::nullopt);

  double max_abs() const { return max_abs_; }
  std::optional<std::size_t> iteration() const { return iteration_; }
  std::optional<std::size_t> module() const { return module_; }
  std::optional<std::size_t> block() const { return block_; }

  /// Returns a copy tagged with the block index, used when propagating out of
  /// a model-level loop.
  OverflowError with_block(std::size_t block) const;

 private:
  double max_abs_;
  std::optional<std::size_t> iteration_;
  std::optional<std::size_t> module_;
  std::optional<std::size_t> block_;
};

class MalformedFileError : public Error {
 public:
  using Error::Error;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

/// Causal structure violated: an entry that must vanish did not.
class CausalityError : public Error {
 public:
  using Error::Error;
};

}  // namespace gsj
