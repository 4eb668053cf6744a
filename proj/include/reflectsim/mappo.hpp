#ifndef REFLECTSIM_MAPPO_HPP_
#define REFLECTSIM_MAPPO_HPP_

#include <utility>
#include <vector>

#include "reflectsim/nn.hpp"
#include "reflectsim/rng.hpp"
#include "reflectsim/vec3.hpp"

namespace reflectsim::mappo {

struct PpoConfig {
  double gamma = 0.985;
  double gae_lambda = 0.9;
  double clip_eps = 0.2;
  double entropy_coef = 1e-4;
  double value_coef = 1.0;
  int epochs = 40;
  int batch_size = 200;
  double lr = 2e-4;
  double grad_clip = 0.5;
  bool normalize_advantages = true;
  bool share_actor = true;
};

// Backward-recursive generalized advantage estimation.
// value_targets = advantages + values.
std::pair<std::vector<double>, std::vector<double>> gae(
    const std::vector<double>& rewards, const std::vector<double>& values,
    double bootstrap, double gamma, double lambda);

// Clipped surrogate for one sample, returned as a loss (negated objective).
double clipped_loss(double ratio, double advantage, double eps);

// Tanh-squashed Gaussian policy: MLP mean, state-independent learned
// log-std, actions scaled to the box |a_i| <= action_limit.
struct GaussianPolicy {
  nn::ParamSet net;  // MLP layers W0/b0... plus a "log_std" row vector
  double action_limit = 0.5;
  double obs_scale = 0.1;

  int obs_dim() const { return nn::mlp_dims(net).front(); }
  int action_dim() const { return nn::mlp_dims(net).back(); }
};

GaussianPolicy make_policy(int obs_dim, int hidden, int action_dim,
                           double action_limit, Rng& rng);

struct ActSample {
  std::vector<double> action;
  std::vector<double> presquash;  // z with action = limit * tanh(z)
  double log_prob = 0.0;
};

ActSample act(const GaussianPolicy& policy, const std::vector<double>& obs,
              bool deterministic, Rng& rng);

// log pi(a|obs) for a recorded pre-squash sample, including the tanh
// Jacobian correction.
double action_log_prob(const GaussianPolicy& policy,
                       const std::vector<double>& obs,
                       const std::vector<double>& presquash);

// Gradient of action_log_prob with respect to every policy parameter.
nn::GradSet action_log_prob_grad(const GaussianPolicy& policy,
                                 const std::vector<double>& obs,
                                 const std::vector<double>& presquash,
                                 double* log_prob_out = nullptr);

// One-episode experience for all agents; the critic value stream is shared.
struct Rollout {
  struct AgentTrack {
    std::vector<std::vector<double>> obs;
    std::vector<std::vector<double>> presquash;
    std::vector<double> log_probs;
    std::vector<double> rewards;
  };
  std::vector<AgentTrack> agents;
  std::vector<std::vector<double>> global_states;  // critic inputs per step
  std::vector<double> values;                      // V(s_global) per step
  double bootstrap_value = 0.0;

  int steps() const { return static_cast<int>(global_states.size()); }
  int sample_count() const {
    return steps() * static_cast<int>(agents.size());
  }
};

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  bool aborted = false;
};

// Clipped-surrogate update of the shared actor and the centralized critic
// over shuffled minibatches. Non-finite losses abort and restore both nets.
UpdateStats update(GaussianPolicy& actor, nn::ParamSet& critic,
                   const Rollout& rollout, const PpoConfig& cfg, Rng& rng,
                   bool update_critic = true);

// Critic forward: scalar value of the flattened global state.
double critic_value(const nn::ParamSet& critic, const std::vector<double>& s,
                    double obs_scale = 0.1);

nn::ParamSet make_critic(int state_dim, int hidden, Rng& rng);

}  // namespace reflectsim::mappo

#endif  // REFLECTSIM_MAPPO_HPP_
