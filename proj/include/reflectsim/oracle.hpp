#ifndef REFLECTSIM_ORACLE_HPP_
#define REFLECTSIM_ORACLE_HPP_

#include <stdexcept>
#include <string>
#include <vector>

#include "reflectsim/environment.hpp"
#include "reflectsim/vec3.hpp"

namespace reflectsim::oracle {

// Brute-force reference for the joint allocation + focal-point problem:
// exhaustive over allocations, grid search over each segment group's
// feasible boxes with one local refinement pass at a fifth of the step.
struct OracleResult {
  env::Allocation alloc;
  std::vector<Vec3> focals;
  double reward_mw = 0.0;
  long evals = 0;
};

class OracleBudgetExceeded : public std::runtime_error {
 public:
  OracleBudgetExceeded(const std::string& what, OracleResult best)
      : std::runtime_error(what), best_so_far(std::move(best)) {}
  OracleResult best_so_far;
};

OracleResult best_allocation_exhaustive(const env::Scene& scene,
                                        const std::vector<Vec3>& users,
                                        double focal_grid_step,
                                        long node_cap = 200'000'000);

// Re-simulates a logged episode and checks the recorded rewards.
struct ReplayResult {
  long steps = 0;
  double max_rel_err = 0.0;
};

ReplayResult replay(const std::string& trace_path, const env::Scene& scene,
                    const env::EnvConfig& cfg);

}  // namespace reflectsim::oracle

#endif  // REFLECTSIM_ORACLE_HPP_
