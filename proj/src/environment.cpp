#include "reflectsim/environment.hpp"

#include <cmath>
#include <string>

#include "reflectsim/errors.hpp"

namespace reflectsim::env {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

std::vector<double> LowObs::flat() const {
  return {assigned_user.x, assigned_user.y, assigned_user.z,
          own_centroid.x,  own_centroid.y,  own_centroid.z,
          own_focal.x,     own_focal.y,     own_focal.z};
}

std::vector<double> HighState::flat() const {
  std::vector<double> out;
  out.reserve(3 * user_positions.size() + 6 * segment_centroids.size());
  for (const auto& u : user_positions) {
    out.push_back(u.x);
    out.push_back(u.y);
    out.push_back(u.z);
  }
  for (const auto& r : segment_centroids) {
    out.push_back(r.x);
    out.push_back(r.y);
    out.push_back(r.z);
  }
  for (const auto& f : focal_points) {
    out.push_back(f.x);
    out.push_back(f.y);
    out.push_back(f.z);
  }
  return out;
}

double compress_reward(double linear_value) {
  const double dbm = channel::mw_to_dbm(linear_value);
  return std::max(0.0, (dbm + 140.0) / 100.0);
}

Environment::Environment(Scene scene, EnvConfig cfg)
    : scene_(std::move(scene)), cfg_(cfg) {
  if (cfg_.num_users < 1) {
    throw InvalidArgument("environment: need at least one user");
  }
  if (cfg_.period < 1) {
    throw InvalidArgument("environment: period must be >= 1");
  }
  if (cfg_.episode_len < 1 || cfg_.episode_len % cfg_.period != 0) {
    throw InvalidArgument(
        "environment: episode_len must be a positive multiple of period");
  }
  if (!(cfg_.delta_max > 0.0)) {
    throw InvalidArgument("environment: delta_max must be positive");
  }
  if (cfg_.mobility_period < 1) {
    throw InvalidArgument("environment: mobility_period must be >= 1");
  }
  if (scene_.segments.empty()) {
    throw InvalidArgument("environment: scene has no segments");
  }
}

std::pair<HighState, std::vector<LowObs>> Environment::reset(
    std::uint64_t seed) {
  if (cfg_.ue_region.empty()) {
    throw InvalidArgument("reset: empty UE region");
  }
  rng_.reseed(seed);

  const int K = cfg_.num_users;
  users_.resize(K);
  headings_.resize(K);
  for (int k = 0; k < K; ++k) {
    users_[k] = {rng_.uniform(cfg_.ue_region.xmin, cfg_.ue_region.xmax),
                 rng_.uniform(cfg_.ue_region.ymin, cfg_.ue_region.ymax),
                 cfg_.ue_region.height};
    const double angle = rng_.uniform(0.0, 2.0 * kPi);
    headings_[k] = {std::cos(angle), std::sin(angle), 0.0};
  }

  const double stddev = std::sqrt(cfg_.focal_init_cov);
  const int L = scene_.num_segments();
  focals_.resize(L);
  for (int l = 0; l < L; ++l) {
    Vec3 f = cfg_.focal_init_mean;
    f.x += stddev * rng_.gaussian();
    f.y += stddev * rng_.gaussian();
    f.z += stddev * rng_.gaussian();
    focals_[l].box = scene_.segments[l].box;
    focals_[l].focal = geometry::clip_to_box(f, focals_[l].box);
  }

  // Round-robin default until the high-level controller decides.
  alloc_.resize(L);
  for (int l = 0; l < L; ++l) alloc_[l] = l % K;
  for (int l = 0; l < L; ++l) focals_[l].assigned_user = alloc_[l];

  t_ = 0;
  active_ = true;
  observe_users();
  return {high_state(), low_observations()};
}

void Environment::set_allocation(const Allocation& alloc) {
  if (!active_) {
    throw ProtocolViolation("set_allocation: episode not active");
  }
  if (t_ % cfg_.period != 0) {
    throw ProtocolViolation("set_allocation: off high-level boundary (t=" +
                            std::to_string(t_) + ")");
  }
  if (static_cast<int>(alloc.size()) != scene_.num_segments()) {
    throw InvalidArgument("set_allocation: wrong allocation length");
  }
  for (int b : alloc) {
    if (b < 0 || b >= cfg_.num_users) {
      throw InvalidArgument("set_allocation: user id out of range");
    }
  }
  alloc_ = alloc;
  for (int l = 0; l < scene_.num_segments(); ++l) {
    focals_[l].assigned_user = alloc_[l];
  }
}

Vec3 Environment::observe_with_error(const Vec3& true_pos, double sigma,
                                     Rng& rng) {
  if (sigma < 0.0) {
    throw InvalidArgument("observe_with_error: negative sigma");
  }
  // Horizontal components only; the draws always happen so RNG streams stay
  // aligned across error levels.
  const double gx = rng.gaussian();
  const double gy = rng.gaussian();
  return {true_pos.x + sigma * gx, true_pos.y + sigma * gy, true_pos.z};
}

double Environment::shape_reward(double rssi_mw, double dist, int n) {
  if (!(dist > 0.0)) {
    throw InvalidArgument("shape_reward: distance must be positive");
  }
  if (n < 0 || n > 4) {
    throw InvalidArgument("shape_reward: exponent out of range");
  }
  return rssi_mw * std::pow(dist, -static_cast<double>(n));
}

void Environment::observe_users() {
  observed_users_.resize(users_.size());
  for (std::size_t k = 0; k < users_.size(); ++k) {
    observed_users_[k] =
        observe_with_error(users_[k], cfg_.loc_error_sigma, rng_);
  }
}

channel::PowerReading Environment::user_power(int k) const {
  std::vector<channel::SegmentBeam> assigned;
  for (int l = 0; l < scene_.num_segments(); ++l) {
    if (alloc_[l] == k) assigned.push_back(scene_.beam(l, focals_[l].focal));
  }
  return channel::received_power(users_[k], assigned, scene_.ap, scene_.chan);
}

StepResult Environment::step(const std::vector<Vec3>& actions) {
  if (!active_) {
    throw ProtocolViolation("step: episode not active");
  }
  const int L = scene_.num_segments();
  if (static_cast<int>(actions.size()) != L) {
    throw InvalidArgument("step: need one action per segment");
  }
  for (const auto& a : actions) {
    if (!finite(a)) throw InvalidAction("step: non-finite action");
  }

  // Clamp to the displacement bound, move, then hard-clip to the box.
  for (int l = 0; l < L; ++l) {
    const double d = cfg_.delta_max;
    const Vec3 clamped{std::clamp(actions[l].x, -d, d),
                       std::clamp(actions[l].y, -d, d),
                       std::clamp(actions[l].z, -d, d)};
    focals_[l].focal =
        geometry::clip_to_box(focals_[l].focal + clamped, focals_[l].box);
  }

  t_ += 1;

  // Constant-heading bounce mobility.
  if (cfg_.mobility_step > 0.0 && t_ % cfg_.mobility_period == 0) {
    for (std::size_t k = 0; k < users_.size(); ++k) {
      Vec3 p = users_[k] + headings_[k] * cfg_.mobility_step;
      if (p.x < cfg_.ue_region.xmin || p.x > cfg_.ue_region.xmax) {
        headings_[k].x = -headings_[k].x;
        p.x = std::clamp(p.x, cfg_.ue_region.xmin, cfg_.ue_region.xmax);
      }
      if (p.y < cfg_.ue_region.ymin || p.y > cfg_.ue_region.ymax) {
        headings_[k].y = -headings_[k].y;
        p.y = std::clamp(p.y, cfg_.ue_region.ymin, cfg_.ue_region.ymax);
      }
      users_[k] = p;
    }
  }

  observe_users();

  StepResult out;
  const int K = cfg_.num_users;
  out.user_power_mw.resize(K);
  out.user_rssi_dbm.resize(K);
  for (int k = 0; k < K; ++k) {
    const auto reading = user_power(k);
    out.user_power_mw[k] = reading.rssi_mw;
    out.user_rssi_dbm[k] = reading.rssi_dbm;
    out.system_reward_mw += reading.rssi_mw;
  }

  out.seg_reward.resize(L);
  out.seg_rssi_mw.resize(L);
  for (int l = 0; l < L; ++l) {
    const int k = alloc_[l];
    const double dist = distance(users_[k], scene_.segments[l].centroid);
    const double shaped =
        shape_reward(out.user_power_mw[k], dist, cfg_.reward_exponent);
    out.seg_rssi_mw[l] = shaped;
    out.seg_reward[l] = compress_reward(shaped);
    out.system_reward_learn += out.seg_reward[l] / L;
  }

  out.obs = low_observations();
  out.done = (t_ >= cfg_.episode_len);
  if (out.done) active_ = false;
  return out;
}

HighState Environment::high_state() const {
  HighState hs;
  hs.user_positions = observed_users_;
  for (const auto& seg : scene_.segments) {
    hs.segment_centroids.push_back(seg.centroid);
  }
  for (const auto& f : focals_) hs.focal_points.push_back(f.focal);
  return hs;
}

std::vector<LowObs> Environment::low_observations() const {
  std::vector<LowObs> obs(scene_.num_segments());
  for (int l = 0; l < scene_.num_segments(); ++l) {
    obs[l].assigned_user = observed_users_[alloc_[l]];
    obs[l].own_centroid = scene_.segments[l].centroid;
    obs[l].own_focal = focals_[l].focal;
  }
  return obs;
}

}  // namespace reflectsim::env
