#ifndef REFLECTSIM_ANALYSIS_HPP_
#define REFLECTSIM_ANALYSIS_HPP_

namespace reflectsim::analysis {

enum class Regime { kEfficient, kSaturated };

// Dimensionality reduction of focal-point control over tile-level control:
// eta = (K^L + 2N^2) / (K^L + 3L) for an N x N array.
struct ComplexityPoint {
  double K = 0.0;
  double L = 0.0;
  double N = 0.0;
  double eta = 0.0;
  double d_eta_dN = 0.0;
  double d_eta_dL = 0.0;
  double d_eta_dK = 0.0;
  Regime regime = Regime::kSaturated;
  bool overflowed = false;  // K^L exceeded double range; eta pinned to 1
};

double eta(double K, double L, double N);

// Closed-form partials plus the eta value and regime classification.
ComplexityPoint eta_gradients(double K, double L, double N);

}  // namespace reflectsim::analysis

#endif  // REFLECTSIM_ANALYSIS_HPP_
