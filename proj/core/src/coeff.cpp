#include "itogen/coeff.hpp"

#include "itogen/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace itogen::coeff {

Mat psd_sqrt(const Mat& S, int* clamped) {
  if (S.rows() != S.cols()) throw DataError("psd_sqrt needs a square matrix");
  if (!S.allFinite()) throw DataError("psd_sqrt input is not finite");
  const double scale = std::max(1.0, S.cwiseAbs().maxCoeff());
  if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw DataError("psd_sqrt input is not symmetric");
  }
  const Mat sym = 0.5 * (S + S.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> eig(sym);
  if (eig.info() != Eigen::Success) throw DataError("eigendecomposition failed");
  Vec root = eig.eigenvalues();
  int n_clamped = 0;
  for (Eigen::Index i = 0; i < root.size(); ++i) {
    if (root[i] < 0.0) {
      root[i] = 0.0;
      ++n_clamped;
    } else {
      root[i] = std::sqrt(root[i]);
    }
  }
  if (clamped != nullptr) *clamped = n_clamped;
  const Mat& V = eig.eigenvectors();
  return V * root.asDiagonal() * V.transpose();
}

CoefficientEstimate truncate(CoefficientEstimate est, double K) {
  if (!(K > 0.0)) throw ConfigError("truncation level K must be > 0");
  est.K = K;
  if (est.mu.cwiseAbs().maxCoeff() > K) {
    est.truncated_mu = true;
    est.mu = est.mu.cwiseMax(-K).cwiseMin(K);
  }
  if (est.sigma.size() > 0 && est.sigma.cwiseAbs().maxCoeff() > K) {
    est.truncated_sigma = true;
    est.sigma = est.sigma.cwiseMax(-K).cwiseMin(K);
  }
  return est;
}

CoefficientEstimate estimate_baseline(const Vec& g_delta, const Vec& x_t, const Mat& s_delta,
                                      double delta, double K) {
  if (!(delta > 0.0)) throw ConfigError("baseline estimator needs delta > 0");
  if (g_delta.size() != x_t.size() || s_delta.rows() != x_t.size() ||
      s_delta.cols() != x_t.size()) {
    throw DataError("baseline estimator inputs have inconsistent shapes");
  }
  CoefficientEstimate est;
  est.mu = (g_delta - x_t) / delta;
  est.sigma = s_delta / delta;
  est = truncate(std::move(est), K);
  est.sqrt_sigma = psd_sqrt(est.sigma, &est.clamped_eigenvalues);
  return est;
}

CoefficientEstimate estimate_instant(const Vec& g1, const Mat& g2, double K) {
  if (g2.rows() != g1.size() || g2.cols() != g1.size()) {
    throw DataError("instantaneous estimator inputs have inconsistent shapes");
  }
  if (!g1.allFinite() || !g2.allFinite()) throw DataError("non-finite model output");
  CoefficientEstimate est;
  est.mu = g1;
  est.sigma = g2 * g2.transpose();
  est = truncate(std::move(est), K);
  if (est.truncated_sigma) {
    est.sqrt_sigma = psd_sqrt(est.sigma, &est.clamped_eigenvalues);
  } else {
    est.sqrt_sigma = g2;
    est.factor_from_model = true;
  }
  return est;
}

double default_truncation(std::span<const loss::PathTargets> train_targets) {
  return 10.0 * loss::max_abs_quadratic_quotient(train_targets);
}

}  // namespace itogen::coeff
