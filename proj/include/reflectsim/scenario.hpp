#ifndef REFLECTSIM_SCENARIO_HPP_
#define REFLECTSIM_SCENARIO_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "reflectsim/allocator.hpp"
#include "reflectsim/environment.hpp"
#include "reflectsim/mappo.hpp"

namespace reflectsim::scenario {

struct ReflectorSpec {
  Vec3 center;
  Vec3 normal;
  int rows = 5;
  int cols = 9;
  int segments = 2;
  double pitch = 0.05;
};

// Everything an experiment needs, parsed from the key-value scenario file.
// The parser is strict: unknown sections or keys are errors.
struct Scenario {
  int schema = 1;
  geometry::FeasibleBox room{{-6.0, -6.0, 0.0}, {6.0, 6.0, 3.0}};
  Vec3 ap{-7.0, 0.0, 2.5};
  env::UeRegion ue_region;
  double carrier_ghz = 60.0;
  double tx_power_dbm = 5.0;
  double wall_loss_db = 25.0;
  double beamwidth_deg = 10.0;
  double aperture = 0.0;  // 0 = calibrate (63 tiles focused at 5 m -> -65 dBm)
  double theta_limit_deg = 45.0;
  double phi_limit_deg = 45.0;
  double feasible_grid_step = 0.25;
  std::vector<ReflectorSpec> reflectors;
  env::EnvConfig env;
  mappo::PpoConfig ppo;
  int hidden = 256;
  alloc::AllocConfig alloc;
};

Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::string& path);

// Round-trippable serialization; the scenario hash is FNV-1a over this.
std::string canonical_text(const Scenario& s);
std::uint64_t scenario_hash(const Scenario& s);

env::Scene build_scene(const Scenario& s);

}  // namespace reflectsim::scenario

#endif  // REFLECTSIM_SCENARIO_HPP_
