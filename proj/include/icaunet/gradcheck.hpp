#pragma once

// Finite-difference verification of every differentiable op and of the
// end-to-end objective on a tiny model, all at 64-bit.

#include <functional>
#include <string>
#include <vector>

namespace icaunet {

enum class GradcheckScale { tiny, small };

GradcheckScale parse_gradcheck_scale(const std::string& text);  // ConfigError if unknown

struct GradcheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool end_to_end = false;

  bool passed() const { return max_rel_error < tolerance; }
};

struct GradcheckOptions {
  GradcheckScale scale = GradcheckScale::tiny;
  // Test hook: the analytic gradient of the named entry is perturbed before
  // comparison, so that entry must fail.
  std::string corrupt;
};

inline constexpr double kOpTolerance = 1e-4;
inline constexpr double kEndToEndTolerance = 1e-3;

std::vector<std::string> gradcheck_entry_names();

// Runs every entry in order, reporting each one as it finishes.
std::vector<GradcheckEntry> run_gradcheck(const GradcheckOptions& options = {},
                                          const std::function<void(const GradcheckEntry&)>& on_entry = {});

}  // namespace icaunet
