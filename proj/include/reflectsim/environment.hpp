#ifndef REFLECTSIM_ENVIRONMENT_HPP_
#define REFLECTSIM_ENVIRONMENT_HPP_

#include <cstdint>
#include <utility>
#include <vector>

#include "reflectsim/channel.hpp"
#include "reflectsim/geometry.hpp"
#include "reflectsim/rng.hpp"
#include "reflectsim/vec3.hpp"

namespace reflectsim::env {

using geometry::FeasibleBox;
using geometry::FocalState;
using geometry::TileGrid;

// Static world: reflector grids, their segments with precomputed feasible
// boxes, the AP and the propagation parameters.
struct SceneSegment {
  int grid_index = 0;
  int segment_id = 0;  // within the grid
  FeasibleBox box;
  Vec3 centroid;
};

struct Scene {
  std::vector<TileGrid> grids;
  std::vector<SceneSegment> segments;
  Vec3 ap;
  channel::ChannelParams chan;

  int num_segments() const { return static_cast<int>(segments.size()); }
  channel::SegmentBeam beam(int l, const Vec3& focal) const {
    return {&grids[segments[l].grid_index], segments[l].segment_id, focal};
  }
};

struct UeRegion {
  double xmin = 0.0, xmax = 0.0;
  double ymin = 0.0, ymax = 0.0;
  double height = 1.5;

  bool empty() const { return !(xmax > xmin) || !(ymax > ymin); }
};

struct EnvConfig {
  int num_users = 2;       // K
  int period = 10;         // T, high-level decision interval
  double delta_max = 0.5;  // per-step focal displacement bound, meters
  int episode_len = 100;
  double mobility_step = 0.3;
  int mobility_period = 2;
  double loc_error_sigma = 0.0;
  int reward_exponent = 0;  // R = RSSI * d^-n
  Vec3 focal_init_mean{0.0, 0.0, 1.5};
  double focal_init_cov = 2.5;
  UeRegion ue_region;
};

// Segment -> user assignment, length L, entries in [0, K).
using Allocation = std::vector<int>;

struct LowObs {
  Vec3 assigned_user;  // observed (localization noise applied)
  Vec3 own_centroid;
  Vec3 own_focal;

  std::vector<double> flat() const;
};

struct HighState {
  std::vector<Vec3> user_positions;  // observed
  std::vector<Vec3> segment_centroids;
  std::vector<Vec3> focal_points;

  std::vector<double> flat() const;  // dimension 3K + 6L
};

struct StepResult {
  std::vector<LowObs> obs;
  std::vector<double> seg_reward;    // learner-scale shaped reward per segment
  std::vector<double> seg_rssi_mw;   // raw shaped value per segment
  std::vector<double> user_rssi_dbm;
  std::vector<double> user_power_mw;
  double system_reward_mw = 0.0;     // linear-domain aggregate
  double system_reward_learn = 0.0;  // mean of seg_reward
  bool done = false;
};

// Learner-scale compression of a linear-domain value: (dBm + 140) / 100.
double compress_reward(double linear_value);

class Environment {
 public:
  Environment(Scene scene, EnvConfig cfg);

  // Users uniform in the UE region, focal points Gaussian about the init
  // mean then clipped to their boxes. Installs a fixed round-robin
  // allocation so stepping is legal before the first high-level decision.
  std::pair<HighState, std::vector<LowObs>> reset(std::uint64_t seed);

  // Legal only at multiples of the high-level period.
  void set_allocation(const Allocation& alloc);

  StepResult step(const std::vector<Vec3>& actions);

  HighState high_state() const;
  std::vector<LowObs> low_observations() const;

  static Vec3 observe_with_error(const Vec3& true_pos, double sigma, Rng& rng);
  static double shape_reward(double rssi_mw, double dist, int n);

  const Scene& scene() const { return scene_; }
  const EnvConfig& config() const { return cfg_; }
  const std::vector<Vec3>& true_user_positions() const { return users_; }
  const std::vector<FocalState>& focal_states() const { return focals_; }
  const Allocation& allocation() const { return alloc_; }
  int t() const { return t_; }
  bool episode_active() const { return active_; }

  // Per-user coherent power under the current allocation and focal points.
  channel::PowerReading user_power(int k) const;

 private:
  void observe_users();

  Scene scene_;
  EnvConfig cfg_;
  Rng rng_;
  std::vector<Vec3> users_;           // true positions
  std::vector<Vec3> observed_users_;  // positions after localization noise
  std::vector<Vec3> headings_;        // unit xy heading per user
  std::vector<FocalState> focals_;
  Allocation alloc_;
  int t_ = 0;
  bool active_ = false;
};

}  // namespace reflectsim::env

#endif  // REFLECTSIM_ENVIRONMENT_HPP_
