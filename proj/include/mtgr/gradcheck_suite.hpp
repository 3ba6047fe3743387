#pragma once

// Finite-difference checks over every primitive and the composed modules,
// at 64-bit on small random inputs.

#include <cstdint>
#include <string>
#include <vector>

namespace mtgr {

struct ModuleCheck {
  std::string module;
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
};

std::vector<ModuleCheck> run_gradient_checks(std::uint64_t seed, double step = 1e-5);

}  // namespace mtgr
