#include "reflectsim/allocator.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "reflectsim/errors.hpp"

namespace reflectsim::alloc {

CompatMatrix compat(const std::vector<Vec3>& users,
                    const std::vector<Vec3>& centroids, const Vec3& ap,
                    double d0) {
  if (!(d0 > 0.0)) {
    throw InvalidArgument("compat: d0 must be positive");
  }
  CompatMatrix m;
  m.K = static_cast<int>(users.size());
  m.L = static_cast<int>(centroids.size());
  m.d0 = d0;
  m.c.resize(static_cast<size_t>(m.K) * m.L);
  for (int k = 0; k < m.K; ++k) {
    for (int l = 0; l < m.L; ++l) {
      const Vec3 to_user = users[k] - centroids[l];
      const Vec3 to_ap = ap - centroids[l];
      const double du = norm(to_user);
      const double da = norm(to_ap);
      if (du < 1e-12 || da < 1e-12) {
        throw DegenerateGeometry("compat: user or AP coincides with centroid");
      }
      const double cos_theta = dot(to_user, to_ap) / (du * da);
      m.c[static_cast<size_t>(k) * m.L + l] =
          std::exp(-du / d0) * std::clamp(cos_theta, -1.0, 1.0);
    }
  }
  return m;
}

AllocPolicy make_alloc_policy(int K, int L, const AllocConfig& cfg, Rng& rng) {
  if (K < 1 || L < 1) {
    throw InvalidArgument("make_alloc_policy: K and L must be >= 1");
  }
  AllocPolicy p;
  p.K = K;
  p.L = L;
  p.cfg = cfg;
  p.trunk = nn::attention_init(8, cfg.embed_dim, rng);
  // Zero-scaled heads: fresh policies score every allocation identically.
  p.q_head = nn::mlp_init({cfg.embed_dim + L * K, cfg.head_hidden, 1}, rng,
                          0.0);
  p.p_head = nn::mlp_init({cfg.embed_dim, cfg.head_hidden, L * K}, rng, 0.0);
  return p;
}

std::vector<std::vector<double>> build_tokens(const HighState& state) {
  std::vector<std::vector<double>> tokens;
  tokens.reserve(state.user_positions.size() + state.segment_centroids.size());
  for (const auto& u : state.user_positions) {
    tokens.push_back({u.x * 0.1, u.y * 0.1, u.z * 0.1, 0.0, 0.0, 0.0, 1.0,
                      0.0});
  }
  for (std::size_t l = 0; l < state.segment_centroids.size(); ++l) {
    const Vec3& r = state.segment_centroids[l];
    const Vec3& f = state.focal_points[l];
    tokens.push_back({r.x * 0.1, r.y * 0.1, r.z * 0.1, f.x * 0.1, f.y * 0.1,
                      f.z * 0.1, 0.0, 1.0});
  }
  return tokens;
}

double alpha_schedule(long episode, long threshold) {
  return episode < threshold ? 1.0 : 0.0;
}

namespace {

std::vector<double> allocation_one_hot(const Allocation& alloc, int K, int L) {
  std::vector<double> v(static_cast<size_t>(L) * K, 0.0);
  for (int l = 0; l < L; ++l) v[static_cast<size_t>(l) * K + alloc[l]] = 1.0;
  return v;
}

// Factored per-segment softmax rows from the proposal logits.
std::vector<std::vector<double>> proposal_rows(const std::vector<double>& lg,
                                               int K, int L) {
  std::vector<std::vector<double>> rows(L, std::vector<double>(K));
  for (int l = 0; l < L; ++l) {
    double mx = lg[static_cast<size_t>(l) * K];
    for (int k = 1; k < K; ++k) {
      mx = std::max(mx, lg[static_cast<size_t>(l) * K + k]);
    }
    double z = 0.0;
    for (int k = 0; k < K; ++k) {
      rows[l][k] = std::exp(lg[static_cast<size_t>(l) * K + k] - mx);
      z += rows[l][k];
    }
    for (int k = 0; k < K; ++k) rows[l][k] /= z;
  }
  return rows;
}

double pow_int(double base, int exp) {
  double out = 1.0;
  for (int i = 0; i < exp; ++i) out *= base;
  return out;
}

}  // namespace

double q_value(const AllocPolicy& policy, const HighState& state,
               const Allocation& alloc) {
  const auto pooled = nn::attention_forward(policy.trunk, build_tokens(state));
  std::vector<double> in = pooled;
  const auto onehot = allocation_one_hot(alloc, policy.K, policy.L);
  in.insert(in.end(), onehot.begin(), onehot.end());
  return nn::mlp_forward(policy.q_head, in)[0];
}

double proposal_log_prob(const AllocPolicy& policy, const HighState& state,
                         const Allocation& alloc) {
  const auto pooled = nn::attention_forward(policy.trunk, build_tokens(state));
  const auto logits = nn::mlp_forward(policy.p_head, pooled);
  const auto rows = proposal_rows(logits, policy.K, policy.L);
  double lp = 0.0;
  for (int l = 0; l < policy.L; ++l) {
    lp += std::log(std::max(rows[l][alloc[l]], 1e-300));
  }
  return lp;
}

std::vector<ScoredAllocation> score_allocations(const AllocPolicy& policy,
                                                const HighState& state,
                                                const CompatMatrix& compat,
                                                long episode, Rng* sample_rng) {
  const int K = policy.K;
  const int L = policy.L;
  const double alpha = alpha_schedule(episode, policy.cfg.alpha_threshold);

  const auto pooled = nn::attention_forward(policy.trunk, build_tokens(state));

  // Candidate set: exhaustive when tractable, proposal samples otherwise.
  std::vector<Allocation> candidates;
  const double space = pow_int(static_cast<double>(K), L);
  if (space <= static_cast<double>(policy.cfg.enumeration_cutoff)) {
    const long total = static_cast<long>(space);
    Allocation b(L, 0);
    for (long i = 0; i < total; ++i) {
      candidates.push_back(b);
      for (int l = 0; l < L; ++l) {
        if (++b[l] < K) break;
        b[l] = 0;
      }
    }
  } else {
    if (sample_rng == nullptr) {
      throw InvalidArgument(
          "score_allocations: sampling mode needs an RNG for K^L beyond the "
          "enumeration cutoff");
    }
    const auto logits = nn::mlp_forward(policy.p_head, pooled);
    const auto rows = proposal_rows(logits, K, L);
    std::set<Allocation> seen;
    for (int s = 0; s < policy.cfg.proposal_count; ++s) {
      Allocation b(L);
      for (int l = 0; l < L; ++l) {
        const double u = sample_rng->uniform01();
        double acc = 0.0;
        int pick = K - 1;
        for (int k = 0; k < K; ++k) {
          acc += rows[l][k];
          if (u < acc) {
            pick = k;
            break;
          }
        }
        b[l] = pick;
      }
      if (seen.insert(b).second) candidates.push_back(b);
    }
  }

  std::vector<ScoredAllocation> out;
  out.reserve(candidates.size());
  for (auto& b : candidates) {
    std::vector<double> in = pooled;
    const auto onehot = allocation_one_hot(b, K, L);
    in.insert(in.end(), onehot.begin(), onehot.end());
    double score = nn::mlp_forward(policy.q_head, in)[0];
    if (alpha != 0.0) {
      double prior = 0.0;
      for (int l = 0; l < L; ++l) prior += compat.at(b[l], l);
      score += alpha * prior;
    }
    out.push_back({std::move(b), score});
  }
  return out;
}

Strategy parse_strategy(const std::string& name) {
  if (name == "allocator") return Strategy::kAllocator;
  if (name == "no_compat") return Strategy::kNoCompat;
  if (name == "no_allocator") return Strategy::kNoAllocator;
  if (name == "random") return Strategy::kRandom;
  throw InvalidArgument("unknown strategy: " + name);
}

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kAllocator: return "allocator";
    case Strategy::kNoCompat: return "no_compat";
    case Strategy::kNoAllocator: return "no_allocator";
    case Strategy::kRandom: return "random";
  }
  return "?";
}

Allocation select_allocation(Strategy strategy, const AllocPolicy* policy,
                             const HighState& state,
                             const CompatMatrix& compat, long episode,
                             bool explore, Rng& rng) {
  const int L = static_cast<int>(state.segment_centroids.size());
  const int K = static_cast<int>(state.user_positions.size());

  if (strategy == Strategy::kRandom) {
    Allocation b(L);
    for (int l = 0; l < L; ++l) {
      b[l] = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(K)));
    }
    return b;
  }
  if (strategy == Strategy::kNoAllocator) {
    Allocation b(L);
    for (int l = 0; l < L; ++l) b[l] = l % K;
    return b;
  }
  if (policy == nullptr) {
    throw InvalidArgument("select_allocation: learned strategy needs a policy");
  }

  CompatMatrix effective = compat;
  if (strategy == Strategy::kNoCompat) {
    std::fill(effective.c.begin(), effective.c.end(), 0.0);
  }
  auto scored = score_allocations(*policy, state, effective, episode, &rng);

  if (!explore) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < scored.size(); ++i) {
      if (scored[i].score > scored[best].score) best = i;
    }
    return scored[best].alloc;
  }

  // Unit-temperature softmax over candidate scores.
  double mx = scored[0].score;
  for (const auto& s : scored) mx = std::max(mx, s.score);
  double z = 0.0;
  std::vector<double> w(scored.size());
  for (std::size_t i = 0; i < scored.size(); ++i) {
    w[i] = std::exp(scored[i].score - mx);
    z += w[i];
  }
  const double u = rng.uniform01() * z;
  double acc = 0.0;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    acc += w[i];
    if (u < acc) return scored[i].alloc;
  }
  return scored.back().alloc;
}

AllocUpdateStats update_allocator(AllocPolicy& policy,
                                  const std::vector<AllocTransition>& batch) {
  AllocUpdateStats stats;
  std::vector<const AllocTransition*> usable;
  for (const auto& tr : batch) {
    if (std::isfinite(tr.ret)) {
      usable.push_back(&tr);
    } else {
      ++stats.skipped;
    }
  }
  if (usable.empty()) return stats;

  const int K = policy.K;
  const int L = policy.L;
  const double m = static_cast<double>(usable.size());

  // Old proposal log-probs and normalized advantages, fixed across epochs.
  std::vector<double> logp_old(usable.size());
  for (std::size_t i = 0; i < usable.size(); ++i) {
    logp_old[i] = proposal_log_prob(policy, usable[i]->state,
                                    usable[i]->alloc);
  }
  double ret_mean = 0.0;
  for (const auto* tr : usable) ret_mean += tr->ret / m;
  double ret_var = 0.0;
  for (const auto* tr : usable) {
    ret_var += (tr->ret - ret_mean) * (tr->ret - ret_mean) / m;
  }
  const double ret_scale = 1.0 / (std::sqrt(ret_var) + 1e-8);
  std::vector<double> adv(usable.size());
  for (std::size_t i = 0; i < usable.size(); ++i) {
    adv[i] = (usable[i]->ret - ret_mean) * ret_scale;
  }

  nn::AdamConfig adam;
  adam.lr = policy.cfg.lr;

  for (int epoch = 0; epoch < policy.cfg.epochs; ++epoch) {
    nn::GradSet g_trunk = nn::zero_grads(policy.trunk);
    nn::GradSet g_q = nn::zero_grads(policy.q_head);
    nn::GradSet g_p = nn::zero_grads(policy.p_head);
    double q_loss = 0.0, p_loss = 0.0, ent = 0.0;

    for (std::size_t i = 0; i < usable.size(); ++i) {
      const AllocTransition& tr = *usable[i];
      nn::AttentionTape trunk_tape;
      const auto pooled = nn::attention_forward(
          policy.trunk, build_tokens(tr.state), &trunk_tape);
      std::vector<double> pooled_grad(pooled.size(), 0.0);

      // Q regression.
      nn::MlpTape q_tape;
      std::vector<double> q_in = pooled;
      const auto onehot = allocation_one_hot(tr.alloc, K, L);
      q_in.insert(q_in.end(), onehot.begin(), onehot.end());
      const double q = nn::mlp_forward(policy.q_head, q_in, &q_tape)[0];
      const double qerr = q - tr.ret;
      q_loss += qerr * qerr;
      std::vector<double> q_in_grad;
      nn::GradSet gq = nn::mlp_backward(policy.q_head, q_tape,
                                        {2.0 * qerr / m}, &q_in_grad);
      nn::accumulate(g_q, gq);
      for (std::size_t j = 0; j < pooled.size(); ++j) {
        pooled_grad[j] += q_in_grad[j];
      }

      // Clipped surrogate on the factored proposal.
      nn::MlpTape p_tape;
      const auto logits = nn::mlp_forward(policy.p_head, pooled, &p_tape);
      const auto rows = proposal_rows(logits, K, L);
      double logp = 0.0;
      for (int l = 0; l < L; ++l) {
        logp += std::log(std::max(rows[l][tr.alloc[l]], 1e-300));
      }
      const double log_ratio = logp - logp_old[i];
      const double ratio = std::exp(log_ratio);
      const double clipped =
          std::clamp(ratio, 1.0 - policy.cfg.clip_eps, 1.0 + policy.cfg.clip_eps);
      p_loss += -std::min(ratio * adv[i], clipped * adv[i]);

      double h = 0.0;
      for (int l = 0; l < L; ++l) {
        for (int k = 0; k < K; ++k) {
          if (rows[l][k] > 0.0) h -= rows[l][k] * std::log(rows[l][k]);
        }
      }
      ent += h;

      // d(loss)/dlogits: surrogate through log-prob plus entropy bonus.
      std::vector<double> glogits(logits.size(), 0.0);
      const double g_logp =
          (ratio * adv[i] <= clipped * adv[i]) ? -ratio * adv[i] / m : 0.0;
      for (int l = 0; l < L; ++l) {
        double row_h = 0.0;
        for (int k = 0; k < K; ++k) {
          if (rows[l][k] > 0.0) row_h -= rows[l][k] * std::log(rows[l][k]);
        }
        for (int k = 0; k < K; ++k) {
          const double p = rows[l][k];
          const double dlogp =
              (k == tr.alloc[l] ? 1.0 : 0.0) - p;  // d logp(b)/dz
          double g = g_logp * dlogp;
          // entropy gradient: dH/dz = -p (log p + H_row)
          if (p > 0.0) {
            g -= policy.cfg.entropy_coef * (-p * (std::log(p) + row_h)) / m;
          }
          glogits[static_cast<size_t>(l) * K + k] += g;
        }
      }
      std::vector<double> p_in_grad;
      nn::GradSet gp =
          nn::mlp_backward(policy.p_head, p_tape, glogits, &p_in_grad);
      nn::accumulate(g_p, gp);
      for (std::size_t j = 0; j < pooled.size(); ++j) {
        pooled_grad[j] += p_in_grad[j];
      }

      nn::GradSet gt =
          nn::attention_backward(policy.trunk, trunk_tape, pooled_grad);
      nn::accumulate(g_trunk, gt);
    }

    nn::clip_by_global_norm(g_trunk, policy.cfg.grad_clip);
    nn::clip_by_global_norm(g_q, policy.cfg.grad_clip);
    nn::clip_by_global_norm(g_p, policy.cfg.grad_clip);
    nn::adam_step(policy.trunk, g_trunk, adam);
    nn::adam_step(policy.q_head, g_q, adam);
    nn::adam_step(policy.p_head, g_p, adam);

    stats.q_loss = q_loss / m;
    stats.policy_loss = p_loss / m;
    stats.entropy = ent / m;
  }
  return stats;
}

}  // namespace reflectsim::alloc
