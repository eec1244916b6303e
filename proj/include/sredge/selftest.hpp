#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sredge {

struct GradCheckCase {
  std::string module;
  std::string name;
  double error = 0.0;
  double threshold = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_nonsmooth = 0;
  std::size_t skipped_unresolved = 0;  // derivative below finite-difference resolution
  bool pass() const { return error <= threshold; }
};

/// Finite-difference suite in double precision. `module` is one of
/// all, core, sr, edge, merge. Results stream to `progress` as they finish.
std::vector<GradCheckCase> run_gradcheck_suite(const std::string& module, std::ostream* progress);

std::string format_case(const GradCheckCase& c);

}  // namespace sredge
