#include "gsj/errors.hpp"

namespace gsj {

OverflowError::OverflowError(const std::string& what, double max_abs,
                             std::optional<std::size_t> iteration,
                             std::optional<std::size_t> module)
    : Error(what), max_abs_(max_abs), iteration_(iteration), module_(module) {}

OverflowError OverflowError::with_block(std::size_t block) const {
  OverflowError e("block " + std::to_string(block) + ": " + what(), max_abs_,
                  iteration_, module_);
  e.block_ = block;
  return e;
}

}  // namespace gsj
