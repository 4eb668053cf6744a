#ifndef REFLECTSIM_TRACE_HPP_
#define REFLECTSIM_TRACE_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "reflectsim/vec3.hpp"

namespace reflectsim::trace {

// Per-step episode log. Row t records the action applied at step t and the
// resulting state and rewards, so a trace plus the seed replays exactly.
struct TraceRow {
  long t = 0;
  std::vector<int> alloc;
  std::vector<Vec3> users;  // true positions
  std::vector<Vec3> focals;
  std::vector<Vec3> actions;
  std::vector<double> user_dbm;
  double system_mw = 0.0;
  double system_learn = 0.0;
};

struct TraceFile {
  std::string build_id;
  std::uint64_t scenario_hash = 0;
  std::uint64_t seed = 0;
  int K = 0;
  int L = 0;
  std::vector<TraceRow> rows;
};

inline constexpr const char* kTraceVersionLine = "# reflectsim-trace v1";

void write_trace(const std::string& path, const TraceFile& tf);
TraceFile read_trace(const std::string& path);

// Shortest exact decimal form of a double; bit-stable across runs.
std::string format_double(double v);

const char* build_id();

}  // namespace reflectsim::trace

#endif  // REFLECTSIM_TRACE_HPP_
