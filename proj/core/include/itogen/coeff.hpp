#pragma once

#include "itogen/losses.hpp"
#include "itogen/types.hpp"

#include <span>

namespace itogen::coeff {

struct CoefficientEstimate {
  Vec mu;            // drift, units of X per time
  Mat sigma;         // Sigma = sigma sigma^T, units of X^2 per time
  Mat sqrt_sigma;    // R with R R^T = Sigma (after clamping)
  double K = 0.0;
  bool truncated_mu = false;
  bool truncated_sigma = false;
  int clamped_eigenvalues = 0;
  // sqrt_sigma is the model's own factor G2 rather than an eigen-sqrt.
  bool factor_from_model = false;
};

// R = V diag(sqrt(max(lambda, 0))) V^T of the symmetrized input.  Throws
// DataError if S is not symmetric to within 1e-10 (relative to max|S| when
// that exceeds 1).
Mat psd_sqrt(const Mat& S, int* clamped = nullptr);

// Elementwise clamp of mu and Sigma to [-K, K].  Does not touch sqrt_sigma.
CoefficientEstimate truncate(CoefficientEstimate est, double K);

// mu = (G_{t,delta} - X_t) / delta, Sigma = S_{t,delta} / delta, truncated at
// K, then R = psd_sqrt(Sigma).  `x_t` is the observed value (or G_{t,0}).
CoefficientEstimate estimate_baseline(const Vec& g_delta, const Vec& x_t,
                                      const Mat& s_delta, double delta, double K);

// mu = G1, Sigma = G2 G2^T from post-jump outputs, truncated at K.  G2 is
// kept as the factor unless truncation changed Sigma.
CoefficientEstimate estimate_instant(const Vec& g1, const Mat& g2, double K);

// 10 x the largest |Z^Q| over the training targets.
double default_truncation(std::span<const loss::PathTargets> train_targets);

}  // namespace itogen::coeff
