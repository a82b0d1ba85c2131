#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace gsj {

/// Sampling plan in the [Stack-GS-J-Else] notation: which blocks are
/// segmented, into how many equal modules, the Jacobi budget per module, and
/// the Jacobi budget of every other block.
struct Strategy {
  std::vector<std::size_t> stack;
  std::vector<std::size_t> gs;
  std::vector<std::size_t> j;
  std::size_t else_j = 1;

  /// Position of `block` in `stack`, or stack.size() when not stacked.
  std::size_t find(std::size_t block) const;

  /// Checks block indices against the model and that T // G >= 1.
  void validate(std::size_t num_blocks, std::size_t seq_len) const;

  bool operator==(const Strategy&) const = default;
};

/// Grammar: "[" list "-" list "-" list "-" int "]" where list is integers
/// separated by "/". A singleton gs or j list applies to every stacked block.
Strategy parse_strategy(std::string_view text);

/// Canonical text; equal gs (or j) lists collapse to a singleton.
std::string format_strategy(const Strategy& s);

}  // namespace gsj
