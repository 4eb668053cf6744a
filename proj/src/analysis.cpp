#include "reflectsim/analysis.hpp"

#include <cmath>

#include "reflectsim/errors.hpp"

namespace reflectsim::analysis {

namespace {
void check_args(double K, double L, double N) {
  if (!(K >= 1.0) || !(L >= 1.0) || !(N >= 1.0)) {
    throw InvalidArgument("eta: K, L, N must be >= 1");
  }
}

// K^L as exp(L ln K); infinite when out of double range.
double pow_kl(double K, double L) { return std::exp(L * std::log(K)); }
}  // namespace

double eta(double K, double L, double N) {
  check_args(K, L, N);
  const double kl = pow_kl(K, L);
  if (!std::isfinite(kl)) return 1.0;  // saturated-regime shortcut
  return (kl + 2.0 * N * N) / (kl + 3.0 * L);
}

ComplexityPoint eta_gradients(double K, double L, double N) {
  check_args(K, L, N);
  ComplexityPoint p;
  p.K = K;
  p.L = L;
  p.N = N;

  const double kl = pow_kl(K, L);
  if (!std::isfinite(kl)) {
    p.eta = 1.0;
    p.overflowed = true;
    p.regime = Regime::kSaturated;
    return p;
  }

  const double denom = kl + 3.0 * L;
  p.eta = (kl + 2.0 * N * N) / denom;
  p.d_eta_dN = 4.0 * N / denom;
  p.d_eta_dL =
      (kl * (std::log(K) * (3.0 * L - 2.0 * N * N) - 3.0) - 6.0 * N * N) /
      (denom * denom);
  p.d_eta_dK = L * pow_kl(K, L - 1.0) * (3.0 * L - 2.0 * N * N) /
               (denom * denom);
  p.regime = (2.0 * N * N > kl) ? Regime::kEfficient : Regime::kSaturated;
  return p;
}

}  // namespace reflectsim::analysis
