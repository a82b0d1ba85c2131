#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gsj/flow.hpp"

namespace gsj {

struct CheckResult {
  std::string suite;
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Suites: tensor, flow, samplers, metrics, analysis, cli, all.
std::vector<std::string> verify_suite_names();

/// Runs the invariant checks of one suite against a model. Sequence-heavy
/// checks use at most the first 16 positions of the model's length.
std::vector<CheckResult> run_verify(const FlowModel& model, const std::string& suite,
                                    std::uint64_t seed = 0);

}  // namespace gsj
