#ifndef REFLECTSIM_ALLOCATOR_HPP_
#define REFLECTSIM_ALLOCATOR_HPP_

#include <string>
#include <vector>

#include "reflectsim/environment.hpp"
#include "reflectsim/nn.hpp"
#include "reflectsim/rng.hpp"

namespace reflectsim::alloc {

using env::Allocation;
using env::HighState;

// Geometric prior over user-segment pairs:
// C_kl = exp(-|u_k - r_l| / d0) * cos(theta_kl), theta_kl the
// AP-reflector-user angle at the segment centroid.
struct CompatMatrix {
  int K = 0;
  int L = 0;
  double d0 = 0.0;
  std::vector<double> c;  // K x L row-major

  double at(int k, int l) const { return c[static_cast<size_t>(k) * L + l]; }
};

CompatMatrix compat(const std::vector<Vec3>& users,
                    const std::vector<Vec3>& centroids, const Vec3& ap,
                    double d0);

struct AllocConfig {
  double d0 = 10.0;
  long alpha_threshold = 300;  // episodes with the prior active
  int proposal_count = 256;
  int embed_dim = 32;
  int head_hidden = 128;
  double lr = 1e-3;
  int epochs = 4;
  double clip_eps = 0.2;
  double entropy_coef = 1e-3;
  double grad_clip = 0.5;
  long enumeration_cutoff = 4096;
};

// Attention trunk shared by the Q head (scores one allocation) and the
// policy head (factored proposal logits over segments x users).
struct AllocPolicy {
  nn::ParamSet trunk;
  nn::ParamSet q_head;  // input: pooled ++ allocation one-hot
  nn::ParamSet p_head;  // output: L*K proposal logits
  int K = 0;
  int L = 0;
  AllocConfig cfg;
};

AllocPolicy make_alloc_policy(int K, int L, const AllocConfig& cfg, Rng& rng);

// K user tokens then L segment tokens; 8 features each
// (position, focal-or-zero, role one-hot).
std::vector<std::vector<double>> build_tokens(const HighState& state);

// Prior weight: 1 below the episode threshold, 0 at or above.
double alpha_schedule(long episode, long threshold);

struct ScoredAllocation {
  Allocation alloc;
  double score = 0.0;
};

// Candidates scored Q_H(s, b) + alpha(episode) * sum_l C[b_l, l]. Full
// enumeration when K^L fits the cutoff, proposal sampling otherwise.
std::vector<ScoredAllocation> score_allocations(const AllocPolicy& policy,
                                                const HighState& state,
                                                const CompatMatrix& compat,
                                                long episode,
                                                Rng* sample_rng = nullptr);

double q_value(const AllocPolicy& policy, const HighState& state,
               const Allocation& alloc);

// Log-prob of an allocation under the factored proposal head.
double proposal_log_prob(const AllocPolicy& policy, const HighState& state,
                         const Allocation& alloc);

enum class Strategy { kAllocator, kNoCompat, kNoAllocator, kRandom };

Strategy parse_strategy(const std::string& name);
std::string strategy_name(Strategy s);

// Greedy argmax in deterministic mode; softmax over the scores when
// exploring. kRandom is uniform over K^L; kNoAllocator is the fixed
// round-robin assignment of the centralized baseline.
Allocation select_allocation(Strategy strategy, const AllocPolicy* policy,
                             const HighState& state,
                             const CompatMatrix& compat, long episode,
                             bool explore, Rng& rng);

struct AllocTransition {
  HighState state;
  Allocation alloc;
  double ret = 0.0;  // discounted return over the high-level window
};

struct AllocUpdateStats {
  double q_loss = 0.0;
  double policy_loss = 0.0;
  double entropy = 0.0;
  int skipped = 0;
};

// Q head regressed to window returns; proposal head moved by a clipped
// surrogate with batch-normalized advantages.
AllocUpdateStats update_allocator(AllocPolicy& policy,
                                  const std::vector<AllocTransition>& batch);

}  // namespace reflectsim::alloc

#endif  // REFLECTSIM_ALLOCATOR_HPP_
