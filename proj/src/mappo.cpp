#include "reflectsim/mappo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "reflectsim/errors.hpp"

namespace reflectsim::mappo {

namespace {
constexpr double kLog2Pi = 1.8378770664093453;  // log(2*pi)

double softplus(double x) {
  if (x > 30.0) return x;
  return std::log1p(std::exp(x));
}

// log(1 - tanh(z)^2), stable for large |z|.
double log_one_minus_tanh_sq(double z) {
  return 2.0 * (std::log(2.0) - z - softplus(-2.0 * z));
}

std::vector<double> scaled(const std::vector<double>& v, double s) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * s;
  return out;
}
}  // namespace

std::pair<std::vector<double>, std::vector<double>> gae(
    const std::vector<double>& rewards, const std::vector<double>& values,
    double bootstrap, double gamma, double lambda) {
  if (rewards.empty()) {
    throw InvalidArgument("gae: empty trajectory");
  }
  if (rewards.size() != values.size()) {
    throw InvalidArgument("gae: rewards and values length mismatch");
  }
  if (!(gamma > 0.0 && gamma <= 1.0) || !(lambda >= 0.0 && lambda <= 1.0)) {
    throw InvalidArgument("gae: gamma/lambda out of range");
  }
  const int n = static_cast<int>(rewards.size());
  std::vector<double> adv(n, 0.0);
  double last = 0.0;
  for (int t = n - 1; t >= 0; --t) {
    const double next_value = (t == n - 1) ? bootstrap : values[t + 1];
    const double delta = rewards[t] + gamma * next_value - values[t];
    last = delta + gamma * lambda * last;
    adv[t] = last;
  }
  std::vector<double> targets(n);
  for (int t = 0; t < n; ++t) targets[t] = adv[t] + values[t];
  return {adv, targets};
}

double clipped_loss(double ratio, double advantage, double eps) {
  const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
  return -std::min(ratio * advantage, clipped * advantage);
}

GaussianPolicy make_policy(int obs_dim, int hidden, int action_dim,
                           double action_limit, Rng& rng) {
  GaussianPolicy p;
  p.net = nn::mlp_init({obs_dim, hidden, hidden, action_dim}, rng, 0.01);
  auto& ls = p.net.add("log_std", 1, action_dim);
  std::fill(ls.value.a.begin(), ls.value.a.end(),
            std::log(0.5 * action_limit));
  p.action_limit = action_limit;
  return p;
}

ActSample act(const GaussianPolicy& policy, const std::vector<double>& obs,
              bool deterministic, Rng& rng) {
  for (double v : obs) {
    if (!std::isfinite(v)) throw InvalidArgument("act: non-finite observation");
  }
  const std::vector<double> mean =
      nn::mlp_forward(policy.net, scaled(obs, policy.obs_scale));
  const nn::Tensor& log_std = policy.net.get("log_std").value;

  ActSample out;
  const int d = static_cast<int>(mean.size());
  out.presquash.resize(d);
  out.action.resize(d);
  for (int i = 0; i < d; ++i) {
    const double sigma = std::exp(log_std.a[i]);
    out.presquash[i] =
        deterministic ? mean[i] : mean[i] + sigma * rng.gaussian();
    out.action[i] = policy.action_limit * std::tanh(out.presquash[i]);
  }
  out.log_prob = action_log_prob(policy, obs, out.presquash);
  return out;
}

double action_log_prob(const GaussianPolicy& policy,
                       const std::vector<double>& obs,
                       const std::vector<double>& presquash) {
  const std::vector<double> mean =
      nn::mlp_forward(policy.net, scaled(obs, policy.obs_scale));
  const nn::Tensor& log_std = policy.net.get("log_std").value;
  double lp = 0.0;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    const double ls = log_std.a[i];
    const double z = (presquash[i] - mean[i]) / std::exp(ls);
    lp += -0.5 * z * z - ls - 0.5 * kLog2Pi;
    lp -= std::log(policy.action_limit) +
          log_one_minus_tanh_sq(presquash[i]);
  }
  return lp;
}

nn::GradSet action_log_prob_grad(const GaussianPolicy& policy,
                                 const std::vector<double>& obs,
                                 const std::vector<double>& presquash,
                                 double* log_prob_out) {
  nn::MlpTape tape;
  const std::vector<double> mean =
      nn::mlp_forward(policy.net, scaled(obs, policy.obs_scale), &tape);
  const nn::Tensor& log_std = policy.net.get("log_std").value;

  const int d = static_cast<int>(mean.size());
  double lp = 0.0;
  std::vector<double> gmean(d);
  std::vector<double> glogstd(d);
  for (int i = 0; i < d; ++i) {
    const double ls = log_std.a[i];
    const double sigma = std::exp(ls);
    const double z = (presquash[i] - mean[i]) / sigma;
    lp += -0.5 * z * z - ls - 0.5 * kLog2Pi;
    lp -= std::log(policy.action_limit) + log_one_minus_tanh_sq(presquash[i]);
    gmean[i] = z / sigma;
    glogstd[i] = z * z - 1.0;
  }
  if (log_prob_out != nullptr) *log_prob_out = lp;

  nn::GradSet grads = nn::mlp_backward(policy.net, tape, gmean);
  for (std::size_t i = 0; i < policy.net.params.size(); ++i) {
    if (policy.net.params[i].name == "log_std") {
      for (int j = 0; j < d; ++j) grads.g[i].a[j] = glogstd[j];
    }
  }
  return grads;
}

nn::ParamSet make_critic(int state_dim, int hidden, Rng& rng) {
  return nn::mlp_init({state_dim, hidden, hidden, 1}, rng);
}

double critic_value(const nn::ParamSet& critic, const std::vector<double>& s,
                    double obs_scale) {
  return nn::mlp_forward(critic, scaled(s, obs_scale))[0];
}

UpdateStats update(GaussianPolicy& actor, nn::ParamSet& critic,
                   const Rollout& rollout, const PpoConfig& cfg, Rng& rng,
                   bool update_critic) {
  UpdateStats stats;
  const int steps = rollout.steps();
  const int num_agents = static_cast<int>(rollout.agents.size());
  if (steps == 0 || num_agents == 0) {
    throw InvalidArgument("update: empty rollout");
  }

  // Per-agent GAE against the shared centralized value stream.
  std::vector<std::vector<double>> adv(num_agents);
  std::vector<double> value_targets;
  for (int a = 0; a < num_agents; ++a) {
    auto [ag_adv, ag_targets] =
        gae(rollout.agents[a].rewards, rollout.values, rollout.bootstrap_value,
            cfg.gamma, cfg.gae_lambda);
    adv[a] = std::move(ag_adv);
    if (a == 0) value_targets = std::move(ag_targets);
  }
  // The critic regresses the system-reward returns: recompute targets from
  // the mean agent reward so multi-agent rollouts share one value target.
  {
    std::vector<double> sys_rewards(steps, 0.0);
    for (int t = 0; t < steps; ++t) {
      for (int a = 0; a < num_agents; ++a) {
        sys_rewards[t] += rollout.agents[a].rewards[t] / num_agents;
      }
    }
    value_targets = gae(sys_rewards, rollout.values, rollout.bootstrap_value,
                        cfg.gamma, cfg.gae_lambda)
                        .second;
  }

  if (cfg.normalize_advantages) {
    double mean = 0.0, count = 0.0;
    for (const auto& v : adv) {
      for (double x : v) {
        mean += x;
        count += 1.0;
      }
    }
    mean /= count;
    double var = 0.0;
    for (const auto& v : adv) {
      for (double x : v) var += (x - mean) * (x - mean);
    }
    var /= count;
    const double inv = 1.0 / (std::sqrt(var) + 1e-8);
    for (auto& v : adv) {
      for (double& x : v) x = (x - mean) * inv;
    }
  }

  // Flat sample index: (agent, step).
  struct Idx {
    int agent;
    int step;
  };
  std::vector<Idx> order;
  order.reserve(static_cast<std::size_t>(steps) * num_agents);
  for (int a = 0; a < num_agents; ++a) {
    for (int t = 0; t < steps; ++t) order.push_back({a, t});
  }

  // Snapshot for the abort-and-restore path.
  const nn::ParamSet actor_snapshot = actor.net;
  const nn::ParamSet critic_snapshot = critic;

  nn::AdamConfig adam;
  adam.lr = cfg.lr;

  double sum_policy_loss = 0.0, sum_value_loss = 0.0, sum_entropy = 0.0;
  double sum_kl = 0.0;
  long clip_hits = 0, sample_count = 0;
  long minibatches = 0;

  const nn::Tensor& log_std_ref = actor.net.get("log_std").value;
  const int action_dim = log_std_ref.cols;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with the deterministic engine.
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = rng.uniform_int(i);
      std::swap(order[i - 1], order[j]);
    }

    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const double m = static_cast<double>(end - start);

      nn::GradSet actor_grads = nn::zero_grads(actor.net);
      nn::GradSet critic_grads = nn::zero_grads(critic);
      double mb_policy_loss = 0.0, mb_value_loss = 0.0, mb_kl = 0.0;

      for (std::size_t s = start; s < end; ++s) {
        const auto [a, t] = order[s];
        const auto& track = rollout.agents[a];
        const double advantage = adv[a][t];

        double logp_new = 0.0;
        nn::GradSet glp = action_log_prob_grad(actor, track.obs[t],
                                               track.presquash[t], &logp_new);
        const double log_ratio = logp_new - track.log_probs[t];
        const double ratio = std::exp(log_ratio);
        mb_kl += (ratio - 1.0) - log_ratio;

        const double surr_unclipped = ratio * advantage;
        const double clipped_ratio =
            std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
        const double surr_clipped = clipped_ratio * advantage;
        mb_policy_loss += -std::min(surr_unclipped, surr_clipped);
        if (ratio != clipped_ratio) ++clip_hits;
        ++sample_count;

        // d(-min)/dlogp: the unclipped branch when it is the active minimum.
        if (surr_unclipped <= surr_clipped) {
          nn::accumulate(actor_grads, glp, -ratio * advantage / m);
        }

        // Entropy bonus touches only log_std (Gaussian entropy).
        // H = sum(log sigma) + 0.5 d log(2 pi e); dH/dlog_sigma = 1.

        // Critic regression on the shared per-step target.
        if (update_critic) {
          nn::MlpTape vtape;
          const double v =
              nn::mlp_forward(critic,
                              scaled(rollout.global_states[t], 0.1), &vtape)[0];
          const double verr = v - value_targets[t];
          mb_value_loss += verr * verr;
          nn::GradSet gv = nn::mlp_backward(
              critic, vtape, {2.0 * cfg.value_coef * verr / m});
          nn::accumulate(critic_grads, gv);
        }
      }

      double entropy = 0.5 * action_dim * (1.0 + kLog2Pi);
      for (int i = 0; i < action_dim; ++i) entropy += log_std_ref.a[i];
      for (std::size_t i = 0; i < actor.net.params.size(); ++i) {
        if (actor.net.params[i].name == "log_std") {
          for (int j = 0; j < action_dim; ++j) {
            actor_grads.g[i].a[j] -= cfg.entropy_coef;
          }
        }
      }

      const double total_probe = mb_policy_loss + mb_value_loss;
      if (!std::isfinite(total_probe) || !nn::all_finite(actor_grads) ||
          !nn::all_finite(critic_grads)) {
        actor.net = actor_snapshot;
        critic = critic_snapshot;
        stats.aborted = true;
        return stats;
      }

      nn::clip_by_global_norm(actor_grads, cfg.grad_clip);
      nn::adam_step(actor.net, actor_grads, adam);
      if (update_critic) {
        nn::clip_by_global_norm(critic_grads, cfg.grad_clip);
        nn::adam_step(critic, critic_grads, adam);
      }

      sum_policy_loss += mb_policy_loss / m;
      sum_value_loss += mb_value_loss / m;
      sum_entropy += entropy;
      sum_kl += mb_kl / m;
      ++minibatches;
    }
  }

  stats.policy_loss = sum_policy_loss / minibatches;
  stats.value_loss = sum_value_loss / minibatches;
  stats.entropy = sum_entropy / minibatches;
  stats.approx_kl = sum_kl / minibatches;
  stats.clip_fraction =
      sample_count > 0 ? static_cast<double>(clip_hits) / sample_count : 0.0;
  return stats;
}

}  // namespace reflectsim::mappo
