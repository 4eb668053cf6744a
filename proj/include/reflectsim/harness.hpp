#ifndef REFLECTSIM_HARNESS_HPP_
#define REFLECTSIM_HARNESS_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "reflectsim/allocator.hpp"
#include "reflectsim/scenario.hpp"

namespace reflectsim::harness {

using alloc::Strategy;

struct TrainOptions {
  Strategy strategy = Strategy::kAllocator;
  long episodes = 400;
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  std::string resume_checkpoint;  // continue a previous run when set
  long checkpoint_every = 0;      // 0 = final checkpoint only
  bool trace_final_episode = false;
  bool quiet = true;
};

struct TrainResult {
  std::string checkpoint_path;
  std::string csv_path;
  std::vector<double> episode_rewards;  // per-episode mean learner reward
  bool collapsed = false;
};

TrainResult train(const scenario::Scenario& scn, const TrainOptions& opt);

struct EvalOptions {
  long timesteps = 300;
  std::uint64_t seed = 0;
  bool mobility = true;
  std::string out_dir = ".";
};

struct EvalResult {
  double mean_rssi_dbm = 0.0;  // mean over steps of the per-user mean
  double std_rssi_dbm = 0.0;   // std over steps
  std::string trace_path;
  std::vector<double> step_mean_dbm;
};

EvalResult evaluate(const scenario::Scenario& scn,
                    const std::string& checkpoint_path,
                    const EvalOptions& opt);

enum class SweepKind { kAperture, kRewardExponent, kLocError, kUsers };

SweepKind parse_sweep_kind(const std::string& name);
std::string sweep_kind_name(SweepKind k);
std::vector<double> default_sweep_values(SweepKind k);

struct SweepOptions {
  SweepKind kind = SweepKind::kAperture;
  std::vector<double> values;           // empty = defaults for the kind
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  long episodes = 400;
  long eval_timesteps = 300;
  std::string out_dir = ".";
  bool quiet = true;
};

struct SweepCell {
  double value = 0.0;
  std::uint64_t seed = 0;
  double mean_rssi_dbm = 0.0;
  double std_time_dbm = 0.0;
  bool failed = false;
  std::string error;
};

struct SweepResult {
  std::vector<SweepCell> cells;
  std::string detail_csv;
  std::string summary_csv;
  // Per sweep value: mean over seeds of the cell means, in value order.
  std::vector<double> value_means_dbm;
  std::vector<double> values;
};

SweepResult sweep(const scenario::Scenario& base, const SweepOptions& opt);

// Applies one sweep setting to a scenario copy.
scenario::Scenario apply_sweep_value(const scenario::Scenario& base,
                                     SweepKind kind, double value);

// Checkpoint blob: nets, strategy, progress counter and RNG state, so a
// resumed run continues the exact trajectory of an uninterrupted one.
struct Checkpoint {
  Strategy strategy = Strategy::kAllocator;
  int K = 0;
  int L = 0;
  int hidden = 0;
  long episodes_done = 0;
  std::uint64_t master_seed = 0;
  std::array<std::uint64_t, 4> train_rng_state{};
  mappo::GaussianPolicy actor;
  nn::ParamSet critic;
  std::optional<alloc::AllocPolicy> allocator;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace reflectsim::harness

#endif  // REFLECTSIM_HARNESS_HPP_
