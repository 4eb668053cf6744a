#include "reflectsim/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "reflectsim/errors.hpp"
#include "reflectsim/trace.hpp"

namespace reflectsim::oracle {

namespace {

std::vector<double> axis_samples(double lo, double hi, double step) {
  std::vector<double> xs;
  const int n = static_cast<int>(std::floor((hi - lo) / step + 1e-9));
  for (int i = 0; i <= n; ++i) xs.push_back(lo + i * step);
  if (xs.back() < hi - 1e-9) xs.push_back(hi);
  return xs;
}

struct GroupSearch {
  const env::Scene* scene;
  const Vec3* user;
  std::vector<int> segments;
  long* evals;
  long cap;

  double best_power = -1.0;
  std::vector<Vec3> best_focals;

  // Jointly enumerate candidate focal points, one list per segment.
  void run(const std::vector<std::vector<Vec3>>& candidates) {
    std::vector<Vec3> current(segments.size());
    recurse(candidates, 0, current);
  }

  void recurse(const std::vector<std::vector<Vec3>>& candidates,
               std::size_t depth, std::vector<Vec3>& current) {
    if (depth == segments.size()) {
      std::vector<channel::SegmentBeam> beams;
      beams.reserve(segments.size());
      for (std::size_t i = 0; i < segments.size(); ++i) {
        beams.push_back(scene->beam(segments[i], current[i]));
      }
      ++(*evals);
      const double p =
          channel::received_power(*user, beams, scene->ap, scene->chan)
              .rssi_mw;
      if (p > best_power) {
        best_power = p;
        best_focals = current;
      }
      if (*evals > cap) {
        throw OracleBudgetExceeded("oracle: node cap exceeded",
                                   OracleResult{});
      }
      return;
    }
    for (const Vec3& f : candidates[depth]) {
      current[depth] = f;
      recurse(candidates, depth + 1, current);
    }
  }
};

std::vector<Vec3> box_samples(const geometry::FeasibleBox& box, double step) {
  std::vector<Vec3> out;
  for (double x : axis_samples(box.lo.x, box.hi.x, step)) {
    for (double y : axis_samples(box.lo.y, box.hi.y, step)) {
      for (double z : axis_samples(box.lo.z, box.hi.z, step)) {
        out.push_back({x, y, z});
      }
    }
  }
  return out;
}

}  // namespace

OracleResult best_allocation_exhaustive(const env::Scene& scene,
                                        const std::vector<Vec3>& users,
                                        double focal_grid_step, long node_cap) {
  const int L = scene.num_segments();
  const int K = static_cast<int>(users.size());
  if (K < 1 || L < 1) {
    throw InvalidArgument("oracle: need at least one user and segment");
  }
  double space = 1.0;
  for (int l = 0; l < L; ++l) space *= K;
  if (space > 256.0) {
    throw InvalidArgument("oracle: allocation space exceeds 256");
  }
  if (!(focal_grid_step > 0.0)) {
    throw InvalidArgument("oracle: focal_grid_step must be positive");
  }

  long evals = 0;
  OracleResult best;
  best.reward_mw = -1.0;

  // Best power for a (user, segment subset) group, memoized across
  // allocations. Distinct users never interact, so the per-allocation reward
  // is a sum of group results plus through-wall-only terms.
  std::map<std::pair<int, std::vector<int>>,
           std::pair<double, std::vector<Vec3>>>
      memo;

  const auto group_best = [&](int k, const std::vector<int>& segs)
      -> const std::pair<double, std::vector<Vec3>>& {
    const auto key = std::make_pair(k, segs);
    auto it = memo.find(key);
    if (it != memo.end()) return it->second;

    GroupSearch gs;
    gs.scene = &scene;
    gs.user = &users[k];
    gs.segments = segs;
    gs.evals = &evals;
    gs.cap = node_cap;

    try {
      // Coarse pass.
      std::vector<std::vector<Vec3>> coarse;
      for (int l : segs) {
        coarse.push_back(box_samples(scene.segments[l].box, focal_grid_step));
      }
      gs.run(coarse);

      // One refinement pass around the coarse winner.
      std::vector<std::vector<Vec3>> fine;
      for (std::size_t i = 0; i < segs.size(); ++i) {
        geometry::FeasibleBox rb;
        const geometry::FeasibleBox& full = scene.segments[segs[i]].box;
        const Vec3& c = gs.best_focals[i];
        rb.lo = {std::max(full.lo.x, c.x - focal_grid_step),
                 std::max(full.lo.y, c.y - focal_grid_step),
                 std::max(full.lo.z, c.z - focal_grid_step)};
        rb.hi = {std::min(full.hi.x, c.x + focal_grid_step),
                 std::min(full.hi.y, c.y + focal_grid_step),
                 std::min(full.hi.z, c.z + focal_grid_step)};
        fine.push_back(box_samples(rb, focal_grid_step / 5.0));
      }
      gs.run(fine);
    } catch (OracleBudgetExceeded& e) {
      e.best_so_far = best;
      throw;
    }

    return memo.emplace(key, std::make_pair(gs.best_power, gs.best_focals))
        .first->second;
  };

  // Walk every allocation in mixed-radix order.
  env::Allocation alloc(L, 0);
  const long total = static_cast<long>(space);
  for (long idx = 0; idx < total; ++idx) {
    double reward = 0.0;
    std::vector<Vec3> focals(L);
    for (int k = 0; k < K; ++k) {
      std::vector<int> segs;
      for (int l = 0; l < L; ++l) {
        if (alloc[l] == k) segs.push_back(l);
      }
      if (segs.empty()) {
        reward += channel::received_power(users[k], {}, scene.ap, scene.chan)
                      .rssi_mw;
        continue;
      }
      const auto& [power, group_focals] = group_best(k, segs);
      reward += power;
      for (std::size_t i = 0; i < segs.size(); ++i) {
        focals[segs[i]] = group_focals[i];
      }
    }
    if (reward > best.reward_mw) {
      best.reward_mw = reward;
      best.alloc = alloc;
      best.focals = focals;
    }
    for (int l = 0; l < L; ++l) {
      if (++alloc[l] < K) break;
      alloc[l] = 0;
    }
  }
  best.evals = evals;
  return best;
}

ReplayResult replay(const std::string& trace_path, const env::Scene& scene,
                    const env::EnvConfig& cfg) {
  const trace::TraceFile tf = trace::read_trace(trace_path);
  if (tf.K != cfg.num_users || tf.L != scene.num_segments()) {
    throw InvalidArgument("replay: trace dimensions do not match scenario");
  }

  // Episode length must stay a whole number of periods; rounding up is safe
  // because replay never steps past the recorded rows.
  env::EnvConfig replay_cfg = cfg;
  int len = static_cast<int>(tf.rows.size());
  if (len % replay_cfg.period != 0) {
    len = (len / replay_cfg.period + 1) * replay_cfg.period;
  }
  replay_cfg.episode_len = std::max(len, replay_cfg.period);

  env::Environment e(scene, replay_cfg);
  e.reset(tf.seed);

  ReplayResult out;
  const auto rel_err = [](double a, double b) {
    return std::abs(a - b) / std::max({1e-30, std::abs(a), std::abs(b)});
  };

  long step_index = 0;
  for (const auto& row : tf.rows) {
    if ((step_index % replay_cfg.period) == 0) {
      e.set_allocation(row.alloc);
    }
    const auto res = e.step(row.actions);
    ++step_index;

    double err = rel_err(res.system_reward_mw, row.system_mw);
    for (int k = 0; k < tf.K; ++k) {
      err = std::max(err, std::abs(res.user_rssi_dbm[k] - row.user_dbm[k]) /
                              std::max(1.0, std::abs(row.user_dbm[k])));
    }
    for (int l = 0; l < tf.L; ++l) {
      err = std::max(err,
                     distance(e.focal_states()[l].focal, row.focals[l]));
    }
    out.max_rel_err = std::max(out.max_rel_err, err);
    if (err > 1e-9) {
      throw ReplayDivergence(
          "replay: divergence at step " + std::to_string(row.t), row.t);
    }
  }
  out.steps = step_index;
  return out;
}

}  // namespace reflectsim::oracle
