#pragma once

#include "itogen/njode.hpp"
#include "itogen/path_sim.hpp"
#include "itogen/scheme.hpp"
#include "itogen/tape.hpp"
#include "itogen/types.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace itogen::loss {

// Targets at one observation time t_i (i >= 1).  Matrices of d*d entries
// are flattened column-major.  Increments use each coordinate's own last
// observation time tau_j.
struct ObservationTargets {
  GridIndex index = 0;
  double time = 0.0;
  Vec x;           // observed values (0 where masked)
  Vec mask;        // M_i
  Vec gap;         // t - tau_j per coordinate
  Vec increment;   // X_t - X_{tau_j}
  Vec iq;          // increment / gap
  Vec iq_mask;     // mask with degenerate gaps removed
  Vec z;           // increment increment^T at t-
  Vec zq;          // z / gap
  Vec z_mask;      // m_j m_k [tau_j == tau_k]
  Vec z_post_mask; // m_j m_k (post-jump target is 0 whenever both are seen)
  Vec zq_mask;     // z_mask with degenerate gaps removed
  Vec z_gap;       // gap_j where z_mask is set, else 0
};

struct PathTargets {
  Scheme scheme = Scheme::kJointInstant;
  int dim = 1;
  std::vector<ObservationTargets> obs;

  std::size_t n() const { return obs.size(); }
};

struct TargetDiagnostics {
  std::size_t paths_without_observations = 0;
  std::size_t degenerate_gaps = 0;
};

// Gaps below this are excluded from quotient targets.
inline constexpr double kMinGap = 1e-12;

PathTargets build_targets(const sim::ObservationSequence& obs, Scheme scheme,
                          TargetDiagnostics* diag = nullptr);

std::vector<PathTargets> build_targets(std::span<const sim::ObservationSequence> obs,
                                       Scheme scheme, TargetDiagnostics* diag = nullptr);

// Largest |Z^Q| entry over all valid targets.
double max_abs_quadratic_quotient(std::span<const PathTargets> targets);

// Masked residuals of one path, one entry per observation.
struct PathResiduals {
  std::vector<Vec> post;  // empty for the noise-adapted loss
  std::vector<Vec> pre;
};

Vec masked_residual(const Vec& target, const Vec& prediction, const Vec& mask);

// mean over paths of (1/n) sum_i (|post_i| + |pre_i|)^2; paths with n = 0
// are skipped and counted.
double psi(std::span<const PathResiduals> paths, std::size_t* skipped = nullptr);
// mean over paths of (1/n) sum_i |pre_i|^2.
double psi_noisy(std::span<const PathResiduals> paths, std::size_t* skipped = nullptr);

enum class Channel { kDrift, kDiffusion };

struct LossOptions {
  Scheme scheme = Scheme::kJointInstant;
  bool drift = true;
  bool diffusion = true;
  // Treat G1 as a constant inside the joint diffusion targets.
  bool stop_gradient = true;
};

// Collects the loss terms of one batch while record_forward runs.  The
// batch loss is mean over paths with n > 0 of (1/n) sum_i term_i.  When
// the batch is a chunk of a larger one, `valid_total` is the number of
// paths with n > 0 in the whole batch, so chunk totals add up.
class LossRecorder {
 public:
  LossRecorder(const njode::NjodeConfig& model, LossOptions options,
               std::span<const PathTargets* const> batch,
               std::size_t valid_total = 0);

  void on_event(nn::Tape& tape, const njode::ObservationEvent& event);
  nn::Var total(nn::Tape& tape) const;

  std::size_t valid_paths() const { return valid_; }

 private:
  const ObservationTargets* take(Eigen::Index col);

  njode::NjodeConfig model_;
  LossOptions options_;
  std::vector<const PathTargets*> batch_;
  std::vector<std::size_t> cursor_;
  std::vector<double> weight_;
  std::size_t valid_ = 0;
  std::vector<nn::Var> terms_;
};

// Recorded batch loss of `model` on `batch` (dropout when rng is given).
nn::Var batch_loss(nn::Tape& tape, njode::Njode& model, const LossOptions& options,
                   std::span<const sim::ObservationSequence* const> obs,
                   std::span<const PathTargets* const> targets, const sim::Grid& grid,
                   Philox4x32* dropout_rng, std::size_t valid_total = 0);

}  // namespace itogen::loss
