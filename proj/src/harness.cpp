#include "reflectsim/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include "reflectsim/errors.hpp"
#include "reflectsim/trace.hpp"

namespace reflectsim::harness {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t x = seed ^ (0x9e3779b97f4a7c15ULL * (salt + 1));
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t kEvalSalt = 0x45564153ULL;  // distinct eval stream

struct Nets {
  mappo::GaussianPolicy actor;
  nn::ParamSet critic;
  std::optional<alloc::AllocPolicy> allocator;
};

Nets make_nets(const scenario::Scenario& scn, Strategy strategy, int K, int L,
               Rng& rng) {
  Nets nets;
  const int state_dim = 3 * K + 6 * L;
  if (strategy == Strategy::kNoAllocator) {
    nets.actor = mappo::make_policy(state_dim, scn.hidden, 3 * L,
                                    scn.env.delta_max, rng);
  } else {
    nets.actor = mappo::make_policy(9, scn.hidden, 3, scn.env.delta_max, rng);
  }
  nets.critic = mappo::make_critic(state_dim, scn.hidden, rng);
  if (strategy == Strategy::kAllocator || strategy == Strategy::kNoCompat) {
    nets.allocator = alloc::make_alloc_policy(K, L, scn.alloc, rng);
  }
  return nets;
}

// Mean learner reward across users for the centralized baseline.
double central_reward(const env::StepResult& res) {
  double r = 0.0;
  for (double p : res.user_power_mw) {
    r += env::compress_reward(p) / static_cast<double>(res.user_power_mw.size());
  }
  return r;
}

std::vector<Vec3> split_actions(const std::vector<double>& flat, int L) {
  std::vector<Vec3> out(L);
  for (int l = 0; l < L; ++l) {
    out[l] = {flat[3 * l], flat[3 * l + 1], flat[3 * l + 2]};
  }
  return out;
}

}  // namespace

SweepKind parse_sweep_kind(const std::string& name) {
  if (name == "aperture") return SweepKind::kAperture;
  if (name == "reward_exponent") return SweepKind::kRewardExponent;
  if (name == "loc_error") return SweepKind::kLocError;
  if (name == "users") return SweepKind::kUsers;
  throw InvalidArgument("unknown sweep kind: " + name);
}

std::string sweep_kind_name(SweepKind k) {
  switch (k) {
    case SweepKind::kAperture: return "aperture";
    case SweepKind::kRewardExponent: return "reward_exponent";
    case SweepKind::kLocError: return "loc_error";
    case SweepKind::kUsers: return "users";
  }
  return "?";
}

std::vector<double> default_sweep_values(SweepKind k) {
  switch (k) {
    case SweepKind::kAperture: return {5, 7, 9, 11};
    case SweepKind::kRewardExponent: return {0, 1, 2, 3, 4};
    case SweepKind::kLocError: return {0.0, 0.1, 0.3, 0.5, 1.0, 2.0, 3.0};
    case SweepKind::kUsers: return {2, 4};
  }
  return {};
}

scenario::Scenario apply_sweep_value(const scenario::Scenario& base,
                                     SweepKind kind, double value) {
  scenario::Scenario s = base;
  switch (kind) {
    case SweepKind::kAperture:
      for (auto& r : s.reflectors) r.rows = static_cast<int>(value);
      break;
    case SweepKind::kRewardExponent:
      s.env.reward_exponent = static_cast<int>(value);
      break;
    case SweepKind::kLocError:
      s.env.loc_error_sigma = value;
      break;
    case SweepKind::kUsers:
      s.env.num_users = static_cast<int>(value);
      break;
  }
  return s;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidArgument("save_checkpoint: cannot open " + path);
  os.write("RSCKPT1\n", 8);
  const auto w32 = [&os](std::int32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
  };
  const auto w64 = [&os](std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
  };
  w32(static_cast<std::int32_t>(ck.strategy));
  w32(ck.K);
  w32(ck.L);
  w32(ck.hidden);
  w64(static_cast<std::uint64_t>(ck.episodes_done));
  w64(ck.master_seed);
  for (auto v : ck.train_rng_state) w64(v);
  const double limit = ck.actor.action_limit;
  os.write(reinterpret_cast<const char*>(&limit), sizeof limit);
  w32(ck.allocator.has_value() ? 1 : 0);
  nn::write_param_set(os, ck.actor.net);
  nn::write_param_set(os, ck.critic);
  if (ck.allocator.has_value()) {
    w32(ck.allocator->K);
    w32(ck.allocator->L);
    nn::write_param_set(os, ck.allocator->trunk);
    nn::write_param_set(os, ck.allocator->q_head);
    nn::write_param_set(os, ck.allocator->p_head);
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidArgument("load_checkpoint: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::string(magic, 8) != "RSCKPT1\n") {
    throw InvalidArgument("load_checkpoint: bad magic in " + path);
  }
  const auto r32 = [&is]() {
    std::int32_t v;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is) throw InvalidArgument("load_checkpoint: truncated file");
    return v;
  };
  const auto r64 = [&is]() {
    std::uint64_t v;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is) throw InvalidArgument("load_checkpoint: truncated file");
    return v;
  };
  Checkpoint ck;
  ck.strategy = static_cast<Strategy>(r32());
  ck.K = r32();
  ck.L = r32();
  ck.hidden = r32();
  ck.episodes_done = static_cast<long>(r64());
  ck.master_seed = r64();
  for (auto& v : ck.train_rng_state) v = r64();
  double limit;
  is.read(reinterpret_cast<char*>(&limit), sizeof limit);
  const bool has_alloc = r32() != 0;
  ck.actor.net = nn::read_param_set(is);
  ck.actor.action_limit = limit;
  ck.critic = nn::read_param_set(is);
  if (has_alloc) {
    alloc::AllocPolicy ap;
    ap.K = r32();
    ap.L = r32();
    ap.trunk = nn::read_param_set(is);
    ap.q_head = nn::read_param_set(is);
    ap.p_head = nn::read_param_set(is);
    ck.allocator = std::move(ap);
  }
  return ck;
}

TrainResult train(const scenario::Scenario& scn, const TrainOptions& opt) {
  namespace fs = std::filesystem;
  fs::create_directories(opt.out_dir);

  const env::Scene scene = scenario::build_scene(scn);
  env::Environment environment(scene, scn.env);
  const int K = scn.env.num_users;
  const int L = scene.num_segments();
  const std::uint64_t scn_hash = scenario_hash(scn);

  Rng init_rng(mix_seed(opt.seed, 7));
  Nets nets = make_nets(scn, opt.strategy, K, L, init_rng);
  Rng train_rng(mix_seed(opt.seed, 11));
  long first_episode = 0;
  std::uint64_t master_seed = opt.seed;

  if (!opt.resume_checkpoint.empty()) {
    Checkpoint ck = load_checkpoint(opt.resume_checkpoint);
    if (ck.strategy != opt.strategy || ck.K != K || ck.L != L) {
      throw InvalidArgument("train: checkpoint does not match scenario");
    }
    nets.actor = std::move(ck.actor);
    nets.critic = std::move(ck.critic);
    nets.allocator = std::move(ck.allocator);
    train_rng.set_state(ck.train_rng_state);
    first_episode = ck.episodes_done;
    master_seed = ck.master_seed;
  }

  const std::string csv_path = opt.out_dir + "/train.csv";
  std::ofstream csv(csv_path,
                    first_episode > 0 ? std::ios::app : std::ios::trunc);
  if (first_episode == 0) {
    csv << "build_id,scenario_hash,seed,episode,strategy,mean_reward,"
           "mean_system_mw,policy_loss,value_loss,entropy,approx_kl,"
           "clip_fraction,alloc_q_loss,alloc_p_loss\n";
  }

  const bool central = (opt.strategy == Strategy::kNoAllocator);
  const bool learned_alloc = nets.allocator.has_value();
  const int num_agents = central ? 1 : L;

  TrainResult result;
  result.csv_path = csv_path;

  const std::string ckpt_path = opt.out_dir + "/checkpoint.bin";
  const auto write_ckpt = [&](const std::string& path, long episodes_done) {
    Checkpoint ck;
    ck.strategy = opt.strategy;
    ck.K = K;
    ck.L = L;
    ck.hidden = scn.hidden;
    ck.episodes_done = episodes_done;
    ck.master_seed = master_seed;
    ck.train_rng_state = train_rng.state();
    ck.actor = nets.actor;
    ck.critic = nets.critic;
    ck.allocator = nets.allocator;
    save_checkpoint(path, ck);
  };

  for (long ep = first_episode; ep < opt.episodes; ++ep) {
    environment.reset(mix_seed(master_seed, static_cast<std::uint64_t>(ep)));

    mappo::Rollout rollout;
    rollout.agents.resize(num_agents);
    std::vector<alloc::AllocTransition> alloc_batch;
    std::vector<double> window_rewards;
    env::HighState window_state;
    env::Allocation window_alloc;

    trace::TraceFile episode_trace;
    const bool tracing =
        opt.trace_final_episode && ep == opt.episodes - 1;
    episode_trace.build_id = trace::build_id();
    episode_trace.scenario_hash = scn_hash;
    episode_trace.seed = mix_seed(master_seed, static_cast<std::uint64_t>(ep));
    episode_trace.K = K;
    episode_trace.L = L;

    double ep_reward = 0.0;
    double ep_system_mw = 0.0;

    for (int t = 0; t < scn.env.episode_len; ++t) {
      const env::HighState hs = environment.high_state();
      const std::vector<double> global = hs.flat();

      if (t % scn.env.period == 0) {
        // Flush the previous window into the allocator batch.
        if (learned_alloc && !window_rewards.empty()) {
          double g = 0.0;
          double disc = 1.0;
          for (double r : window_rewards) {
            g += disc * r;
            disc *= scn.ppo.gamma;
          }
          g += disc * mappo::critic_value(nets.critic, global);
          alloc_batch.push_back({window_state, window_alloc, g});
        }
        const alloc::CompatMatrix cm =
            alloc::compat(hs.user_positions, hs.segment_centroids, scene.ap,
                          scn.alloc.d0);
        const env::Allocation b = alloc::select_allocation(
            opt.strategy, learned_alloc ? &*nets.allocator : nullptr, hs, cm,
            ep, /*explore=*/true, train_rng);
        environment.set_allocation(b);
        window_rewards.clear();
        window_state = hs;
        window_alloc = b;
      }

      const double value = mappo::critic_value(nets.critic, global);
      rollout.global_states.push_back(global);
      rollout.values.push_back(value);

      std::vector<Vec3> actions(L);
      if (central) {
        const auto sample =
            mappo::act(nets.actor, global, /*deterministic=*/false, train_rng);
        actions = split_actions(sample.action, L);
        rollout.agents[0].obs.push_back(global);
        rollout.agents[0].presquash.push_back(sample.presquash);
        rollout.agents[0].log_probs.push_back(sample.log_prob);
      } else {
        const auto obs = environment.low_observations();
        for (int l = 0; l < L; ++l) {
          const auto sample = mappo::act(nets.actor, obs[l].flat(),
                                         /*deterministic=*/false, train_rng);
          actions[l] = {sample.action[0], sample.action[1], sample.action[2]};
          rollout.agents[l].obs.push_back(obs[l].flat());
          rollout.agents[l].presquash.push_back(sample.presquash);
          rollout.agents[l].log_probs.push_back(sample.log_prob);
        }
      }

      const env::StepResult res = environment.step(actions);
      if (central) {
        rollout.agents[0].rewards.push_back(central_reward(res));
      } else {
        for (int l = 0; l < L; ++l) {
          rollout.agents[l].rewards.push_back(res.seg_reward[l]);
        }
      }
      window_rewards.push_back(res.system_reward_learn);
      ep_reward += res.system_reward_learn / scn.env.episode_len;
      ep_system_mw += res.system_reward_mw / scn.env.episode_len;

      if (tracing) {
        trace::TraceRow row;
        row.t = t + 1;
        row.alloc = environment.allocation();
        row.users = environment.true_user_positions();
        for (const auto& f : environment.focal_states()) {
          row.focals.push_back(f.focal);
        }
        row.actions = actions;
        row.user_dbm = res.user_rssi_dbm;
        row.system_mw = res.system_reward_mw;
        row.system_learn = res.system_reward_learn;
        episode_trace.rows.push_back(std::move(row));
      }
    }

    rollout.bootstrap_value =
        mappo::critic_value(nets.critic, environment.high_state().flat());

    // Final allocator window of the episode.
    if (learned_alloc && !window_rewards.empty()) {
      double g = 0.0;
      double disc = 1.0;
      for (double r : window_rewards) {
        g += disc * r;
        disc *= scn.ppo.gamma;
      }
      g += disc * rollout.bootstrap_value;
      alloc_batch.push_back({window_state, window_alloc, g});
    }

    const mappo::UpdateStats stats =
        mappo::update(nets.actor, nets.critic, rollout, scn.ppo, train_rng);
    alloc::AllocUpdateStats astats;
    if (learned_alloc) {
      astats = alloc::update_allocator(*nets.allocator, alloc_batch);
    }

    if (stats.aborted) {
      // Training collapse: keep the last good checkpoint and stop.
      write_ckpt(ckpt_path, ep);
      result.collapsed = true;
      result.checkpoint_path = ckpt_path;
      result.episode_rewards.push_back(ep_reward);
      csv.flush();
      return result;
    }

    result.episode_rewards.push_back(ep_reward);
    csv << trace::build_id() << "," << scn_hash << "," << master_seed << ","
        << ep << "," << alloc::strategy_name(opt.strategy) << ","
        << trace::format_double(ep_reward) << ","
        << trace::format_double(ep_system_mw) << ","
        << trace::format_double(stats.policy_loss) << ","
        << trace::format_double(stats.value_loss) << ","
        << trace::format_double(stats.entropy) << ","
        << trace::format_double(stats.approx_kl) << ","
        << trace::format_double(stats.clip_fraction) << ","
        << trace::format_double(astats.q_loss) << ","
        << trace::format_double(astats.policy_loss) << "\n";

    if (tracing) {
      trace::write_trace(opt.out_dir + "/train_trace.csv", episode_trace);
    }
    if (opt.checkpoint_every > 0 && (ep + 1) % opt.checkpoint_every == 0 &&
        ep + 1 < opt.episodes) {
      write_ckpt(opt.out_dir + "/checkpoint_ep" + std::to_string(ep + 1) +
                     ".bin",
                 ep + 1);
    }
    if (!opt.quiet && (ep % 50 == 0 || ep == opt.episodes - 1)) {
      std::cout << "episode " << ep << " mean_reward " << ep_reward
                << std::endl;
    }
  }

  write_ckpt(ckpt_path, opt.episodes);
  result.checkpoint_path = ckpt_path;
  return result;
}

EvalResult evaluate(const scenario::Scenario& scn,
                    const std::string& checkpoint_path,
                    const EvalOptions& opt) {
  namespace fs = std::filesystem;
  fs::create_directories(opt.out_dir);

  Checkpoint ck = load_checkpoint(checkpoint_path);
  const env::Scene scene = scenario::build_scene(scn);
  const int K = scn.env.num_users;
  const int L = scene.num_segments();
  if (ck.K != K || ck.L != L) {
    throw InvalidArgument("evaluate: checkpoint dimensions (K=" +
                          std::to_string(ck.K) + ",L=" + std::to_string(ck.L) +
                          ") do not match scenario");
  }
  const int expected_obs = ck.strategy == Strategy::kNoAllocator
                               ? 3 * K + 6 * L
                               : 9;
  if (nn::mlp_dims(ck.actor.net).front() != expected_obs) {
    throw InvalidArgument("evaluate: checkpoint observation shape mismatch");
  }

  env::EnvConfig cfg = scn.env;
  if (!opt.mobility) cfg.mobility_step = 0.0;
  int len = static_cast<int>(opt.timesteps);
  if (len % cfg.period != 0) len = (len / cfg.period + 1) * cfg.period;
  cfg.episode_len = std::max(len, cfg.period);

  env::Environment environment(scene, cfg);
  const std::uint64_t reset_seed = mix_seed(opt.seed, kEvalSalt);
  environment.reset(reset_seed);
  Rng eval_rng(mix_seed(opt.seed, kEvalSalt + 1));

  trace::TraceFile tf;
  tf.build_id = trace::build_id();
  tf.scenario_hash = scenario_hash(scn);
  tf.seed = reset_seed;
  tf.K = K;
  tf.L = L;

  EvalResult out;
  const bool central = (ck.strategy == Strategy::kNoAllocator);

  for (long t = 0; t < opt.timesteps; ++t) {
    if (t % cfg.period == 0) {
      const env::HighState hs = environment.high_state();
      const alloc::CompatMatrix cm = alloc::compat(
          hs.user_positions, hs.segment_centroids, scene.ap, scn.alloc.d0);
      const env::Allocation b = alloc::select_allocation(
          ck.strategy, ck.allocator.has_value() ? &*ck.allocator : nullptr,
          hs, cm, ck.episodes_done, /*explore=*/false, eval_rng);
      environment.set_allocation(b);
    }

    std::vector<Vec3> actions(L);
    if (central) {
      const auto sample = mappo::act(ck.actor, environment.high_state().flat(),
                                     /*deterministic=*/true, eval_rng);
      actions = split_actions(sample.action, L);
    } else {
      const auto obs = environment.low_observations();
      for (int l = 0; l < L; ++l) {
        const auto sample = mappo::act(ck.actor, obs[l].flat(),
                                       /*deterministic=*/true, eval_rng);
        actions[l] = {sample.action[0], sample.action[1], sample.action[2]};
      }
    }
    const env::StepResult res = environment.step(actions);

    double mean_dbm = 0.0;
    for (double d : res.user_rssi_dbm) mean_dbm += d / K;
    out.step_mean_dbm.push_back(mean_dbm);

    trace::TraceRow row;
    row.t = t + 1;
    row.alloc = environment.allocation();
    row.users = environment.true_user_positions();
    for (const auto& f : environment.focal_states()) {
      row.focals.push_back(f.focal);
    }
    row.actions = actions;
    row.user_dbm = res.user_rssi_dbm;
    row.system_mw = res.system_reward_mw;
    row.system_learn = res.system_reward_learn;
    tf.rows.push_back(std::move(row));
  }

  out.trace_path = opt.out_dir + "/eval_trace.csv";
  trace::write_trace(out.trace_path, tf);

  double mean = 0.0;
  for (double d : out.step_mean_dbm) mean += d;
  mean /= static_cast<double>(out.step_mean_dbm.size());
  double var = 0.0;
  for (double d : out.step_mean_dbm) var += (d - mean) * (d - mean);
  var /= static_cast<double>(out.step_mean_dbm.size());
  out.mean_rssi_dbm = mean;
  out.std_rssi_dbm = std::sqrt(var);
  return out;
}

SweepResult sweep(const scenario::Scenario& base, const SweepOptions& opt) {
  namespace fs = std::filesystem;
  fs::create_directories(opt.out_dir);

  const std::vector<double> values =
      opt.values.empty() ? default_sweep_values(opt.kind) : opt.values;

  SweepResult result;
  result.values = values;

  for (double value : values) {
    for (std::uint64_t seed : opt.seeds) {
      SweepCell cell;
      cell.value = value;
      cell.seed = seed;
      const std::string cell_dir = opt.out_dir + "/" +
                                   sweep_kind_name(opt.kind) + "_" +
                                   trace::format_double(value) + "_s" +
                                   std::to_string(seed);
      try {
        const scenario::Scenario scn =
            apply_sweep_value(base, opt.kind, value);
        TrainOptions topt;
        topt.strategy = Strategy::kAllocator;
        topt.episodes = opt.episodes;
        topt.seed = seed;
        topt.out_dir = cell_dir;
        topt.quiet = opt.quiet;
        const TrainResult tr = train(scn, topt);

        EvalOptions eopt;
        eopt.timesteps = opt.eval_timesteps;
        eopt.seed = seed;
        eopt.out_dir = cell_dir;
        const EvalResult er = evaluate(scn, tr.checkpoint_path, eopt);
        cell.mean_rssi_dbm = er.mean_rssi_dbm;
        cell.std_time_dbm = er.std_rssi_dbm;
      } catch (const std::exception& e) {
        cell.failed = true;
        cell.error = e.what();
      }
      result.cells.push_back(cell);
    }
  }

  // Detail rows.
  result.detail_csv = opt.out_dir + "/sweep_detail.csv";
  {
    std::ofstream os(result.detail_csv);
    os << "build_id,scenario_hash,seed,kind,value,mean_rssi_dbm,std_time_dbm,"
          "failed\n";
    const std::uint64_t h = scenario_hash(base);
    for (const auto& c : result.cells) {
      os << trace::build_id() << "," << h << "," << c.seed << ","
         << sweep_kind_name(opt.kind) << "," << trace::format_double(c.value)
         << "," << trace::format_double(c.mean_rssi_dbm) << ","
         << trace::format_double(c.std_time_dbm) << "," << (c.failed ? 1 : 0)
         << "\n";
    }
  }

  // Per-value aggregation over seeds; both variance views are reported.
  result.summary_csv = opt.out_dir + "/sweep_summary.csv";
  {
    std::ofstream os(result.summary_csv);
    os << "build_id,scenario_hash,kind,value,mean_rssi_dbm,std_over_seeds_dbm,"
          "mean_std_time_dbm,cells\n";
    const std::uint64_t h = scenario_hash(base);
    for (double value : values) {
      std::vector<double> means, stds;
      for (const auto& c : result.cells) {
        if (c.value == value && !c.failed) {
          means.push_back(c.mean_rssi_dbm);
          stds.push_back(c.std_time_dbm);
        }
      }
      double mean = 0.0, sd = 0.0, mstd = 0.0;
      if (!means.empty()) {
        for (double m : means) mean += m;
        mean /= static_cast<double>(means.size());
        for (double m : means) sd += (m - mean) * (m - mean);
        sd = std::sqrt(sd / static_cast<double>(means.size()));
        for (double s : stds) mstd += s;
        mstd /= static_cast<double>(stds.size());
      }
      result.value_means_dbm.push_back(mean);
      os << trace::build_id() << "," << h << "," << sweep_kind_name(opt.kind)
         << "," << trace::format_double(value) << ","
         << trace::format_double(mean) << "," << trace::format_double(sd)
         << "," << trace::format_double(mstd) << "," << means.size() << "\n";
    }
  }
  return result;
}

}  // namespace reflectsim::harness
