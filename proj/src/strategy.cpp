#include "gsj/strategy.hpp"

#include <algorithm>
#include <charconv>
#include <set>

#include "gsj/errors.hpp"

namespace gsj {

namespace {

std::size_t parse_count(std::string_view tok, std::string_view full) {
  if (tok.empty()) throw ParseError("empty number in strategy '" + std::string(full) + "'");
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size())
    throw ParseError("bad number '" + std::string(tok) + "' in strategy '" + std::string(full) + "'");
  return v;
}

std::vector<std::size_t> parse_list(std::string_view field, std::string_view full) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t slash = field.find('/', start);
    out.push_back(parse_count(field.substr(start, slash - start), full));
    if (slash == std::string_view::npos) break;
    start = slash + 1;
  }
  return out;
}

std::vector<std::size_t> broadcast(std::vector<std::size_t> v, std::size_t n, const char* what,
                                   std::string_view full) {
  if (v.size() == n) return v;
  if (v.size() == 1) return std::vector<std::size_t>(n, v.front());
  throw ParseError(std::string(what) + " list has " + std::to_string(v.size()) +
                   " entries for " + std::to_string(n) + " stacked blocks in '" +
                   std::string(full) + "'");
}

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += '/';
    out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace

std::size_t Strategy::find(std::size_t block) const {
  return static_cast<std::size_t>(std::ranges::find(stack, block) - stack.begin());
}

void Strategy::validate(std::size_t num_blocks, std::size_t seq_len) const {
  if (stack.size() != gs.size() || stack.size() != j.size())
    throw ParseError("strategy lists differ in length");
  if (else_j < 1) throw ParseError("strategy: Else budget must be >= 1");
  for (std::size_t i = 0; i < stack.size(); ++i) {
    if (stack[i] >= num_blocks)
      throw ParseError("strategy stacks block " + std::to_string(stack[i]) + " but the model has " +
                       std::to_string(num_blocks));
    if (gs[i] < 1 || j[i] < 1) throw ParseError("strategy: GS and J must be >= 1");
    if (seq_len / gs[i] < 1)
      throw ParseError("strategy: GS=" + std::to_string(gs[i]) + " exceeds sequence length " +
                       std::to_string(seq_len));
  }
}

Strategy parse_strategy(std::string_view text) {
  if (text.size() < 2 || text.front() != '[' || text.back() != ']')
    throw ParseError("strategy must be bracketed: '" + std::string(text) + "'");
  const std::string_view body = text.substr(1, text.size() - 2);
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t dash = body.find('-', start);
    fields.push_back(body.substr(start, dash - start));
    if (dash == std::string_view::npos) break;
    start = dash + 1;
  }
  if (fields.size() != 4)
    throw ParseError("strategy needs 4 '-'-separated fields: '" + std::string(text) + "'");

  Strategy s;
  s.stack = parse_list(fields[0], text);
  s.gs = broadcast(parse_list(fields[1], text), s.stack.size(), "GS", text);
  s.j = broadcast(parse_list(fields[2], text), s.stack.size(), "J", text);
  s.else_j = parse_count(fields[3], text);

  if (std::set<std::size_t>(s.stack.begin(), s.stack.end()).size() != s.stack.size())
    throw ParseError("duplicate stacked block in '" + std::string(text) + "'");
  if (std::ranges::any_of(s.gs, [](std::size_t v) { return v == 0; }) ||
      std::ranges::any_of(s.j, [](std::size_t v) { return v == 0; }) || s.else_j == 0)
    throw ParseError("strategy counts must be >= 1: '" + std::string(text) + "'");
  return s;
}

std::string format_strategy(const Strategy& s) {
  auto collapse = [](const std::vector<std::size_t>& v) {
    if (v.size() > 1 && std::ranges::all_of(v, [&](std::size_t x) { return x == v.front(); }))
      return std::vector<std::size_t>{v.front()};
    return v;
  };
  return "[" + join(s.stack) + "-" + join(collapse(s.gs)) + "-" + join(collapse(s.j)) + "-" +
         std::to_string(s.else_j) + "]";
}

}  // namespace gsj
