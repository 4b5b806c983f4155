#include "itogen/errors.hpp"
#include "itogen/njode.hpp"

#include <gtest/gtest.h>

using namespace itogen;
using njode::Mode;

namespace {

njode::Njode small_model(std::uint64_t seed, bool diffusion = true) {
  njode::NjodeConfig cfg;
  cfg.dim = 1;
  cfg.arch.latent_dim = 8;
  cfg.arch.hidden = 6;
  cfg.drift_head = true;
  cfg.diffusion_head = diffusion;
  cfg.z_input = diffusion;
  njode::Njode m(cfg, "joint");
  m.init(seed);
  return m;
}

sim::ObservationSequence three_obs() {
  return sim::ObservationSequence(0.01, {{0, Vec::Ones(1), Vec::Ones(1)},
                                         {20, Vec::Constant(1, 1.5), Vec::Ones(1)},
                                         {55, Vec::Constant(1, 0.7), Vec::Ones(1)}});
}

const sim::Grid kGrid{0.01, 100};

}  // namespace

TEST(Njode, ZeroNetworksWithoutResidualsGiveZeroEverywhere) {
  njode::NjodeConfig cfg;
  cfg.dim = 1;
  cfg.arch.latent_dim = 8;
  cfg.arch.hidden = 6;
  cfg.arch.residual_encoder = false;
  cfg.arch.residual_decoder = false;
  cfg.drift_head = true;
  cfg.diffusion_head = true;
  cfg.z_input = true;
  njode::Njode m(cfg, "joint");
  m.init(1);
  m.set_zero();
  const auto traj = njode::forward(m, three_obs(), kGrid, 1, Mode::kEval);
  EXPECT_EQ(traj.latent.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(traj.outputs.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(traj.jumps.size(), 2u);
}

TEST(Njode, ZeroNetworksReduceToTheSkipPaths) {
  auto m = small_model(1);
  m.set_zero();
  const auto traj = njode::forward(m, three_obs(), kGrid, 1, Mode::kEval);
  // Only the identity skips remain: H = (last observation, 0, ...) and the
  // readout copies the leading latent coordinates.
  for (Eigen::Index k = 0; k < traj.latent.cols(); ++k) {
    const double last = k < 20 ? 1.0 : (k < 55 ? 1.5 : 0.7);
    EXPECT_EQ(traj.latent(0, k), last) << k;
    EXPECT_EQ(traj.latent.col(k).tail(7).cwiseAbs().maxCoeff(), 0.0) << k;
    EXPECT_EQ(traj.outputs(0, k), last) << k;
    EXPECT_EQ(traj.outputs(1, k), 0.0) << k;
  }
  EXPECT_EQ(traj.jumps.size(), 2u);
}

TEST(Njode, ZeroFieldIsPiecewiseConstant) {
  auto m = small_model(2);
  m.field().set_zero();
  const auto obs = three_obs();
  const auto traj = njode::forward(m, obs, kGrid, 1, Mode::kEval);
  for (Eigen::Index k = 1; k < traj.outputs.cols(); ++k) {
    const bool jump = k == 20 || k == 55;
    const double change = (traj.outputs.col(k) - traj.outputs.col(k - 1)).cwiseAbs().maxCoeff();
    if (jump) {
      EXPECT_GT(change, 0.0) << k;
    } else {
      EXPECT_EQ(change, 0.0) << k;
    }
  }
  ASSERT_EQ(traj.jumps.size(), 2u);
  EXPECT_EQ(traj.jumps[0].pre, traj.outputs.col(0));
}

TEST(Njode, JumpRecordsPreAndPost) {
  auto m = small_model(3);
  const auto traj = njode::forward(m, three_obs(), kGrid, 1, Mode::kEval);
  ASSERT_EQ(traj.jumps.size(), 2u);
  const auto& j = traj.jumps[1];
  EXPECT_EQ(j.eval_index, 55u);
  EXPECT_DOUBLE_EQ(j.time, 0.55);
  EXPECT_EQ(j.post, traj.outputs.col(55));
  EXPECT_GT((j.pre - j.post).norm(), 0.0);
}

TEST(Njode, EvaluationModeIsDeterministic) {
  auto m = small_model(4);
  const auto a = njode::forward(m, three_obs(), kGrid, 2, Mode::kEval);
  const auto b = njode::forward(m, three_obs(), kGrid, 2, Mode::kEval);
  EXPECT_EQ(a.outputs, b.outputs);
  const auto c = njode::forward(m, three_obs(), kGrid, 2, Mode::kTrain, 9);
  EXPECT_NE(a.outputs, c.outputs);
}

TEST(Njode, SubstepRefinementConverges) {
  auto m = small_model(5);
  auto at_grid = [&](int sub) {
    const auto t = njode::forward(m, three_obs(), kGrid, sub, Mode::kEval);
    Mat out(t.outputs.rows(), 101);
    for (Eigen::Index k = 0; k <= 100; ++k) out.col(k) = t.outputs.col(k * sub);
    return out;
  };
  const Mat fine = at_grid(32);
  double prev = 0.0;
  for (int sub : {1, 2, 4, 8}) {
    const double err = (at_grid(sub) - fine).cwiseAbs().maxCoeff();
    if (sub > 1) {
      // First-order Euler: halving the step roughly halves the error.
      EXPECT_LT(err, 0.75 * prev) << sub;
    }
    prev = err;
  }
  EXPECT_GT((at_grid(1) - at_grid(4)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Njode, OffGridObservationRejected) {
  auto m = small_model(6);
  const sim::ObservationSequence obs(0.005, {{0, Vec::Ones(1), Vec::Ones(1)},
                                             {3, Vec::Ones(1), Vec::Ones(1)}});
  EXPECT_THROW(njode::forward(m, obs, kGrid, 1, Mode::kEval), DataError);
}

TEST(PredictWindow, ZeroHorizonIsPostJumpOutput) {
  auto m = small_model(7);
  const auto traj = njode::forward(m, three_obs(), kGrid, 1, Mode::kEval);
  const auto w = njode::predict_window(m, three_obs(), 0.2, 0.0, kGrid, 1);
  ASSERT_EQ(w.outputs.cols(), 1);
  EXPECT_LE((w.outputs.col(0) - traj.jumps[0].post).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(PredictWindow, IgnoresLaterObservations) {
  auto m = small_model(8);
  const auto w = njode::predict_window(m, three_obs(), 0.2, 0.5, kGrid, 1);
  const auto traj = njode::forward(m, three_obs().truncated(0.2), kGrid, 1, Mode::kEval);
  ASSERT_EQ(w.outputs.cols(), 51);
  EXPECT_LE((w.outputs.col(50) - traj.outputs.col(70)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PredictWindow, ZeroFieldKeepsPostJumpValue) {
  auto m = small_model(9);
  m.field().set_zero();
  const auto w = njode::predict_window(m, three_obs(), 0.2, 0.3, kGrid, 1);
  for (Eigen::Index k = 1; k < w.outputs.cols(); ++k) EXPECT_EQ(w.outputs.col(k), w.outputs.col(0));
}

TEST(PredictWindow, Preconditions) {
  auto m = small_model(10);
  EXPECT_THROW(njode::predict_window(m, three_obs(), 0.3, 0.1, kGrid, 1), ConfigError);
  EXPECT_THROW(njode::predict_window(m, three_obs(), 0.2, 0.9, kGrid, 1), ConfigError);
}

TEST(ModelBundle, LayoutPerScheme) {
  njode::Architecture a;
  a.latent_dim = 5;
  a.hidden = 4;
  const auto joint = njode::ModelBundle::make(Scheme::kJointInstant, 2, a, 1);
  ASSERT_EQ(joint.models.size(), 1u);
  EXPECT_EQ(joint.models[0].config().output_dim(), 2 + 4);
  EXPECT_TRUE(joint.models[0].config().z_input);
  EXPECT_EQ(joint.diffusion_row(), 2);
  const auto sep = njode::ModelBundle::make(Scheme::kBase, 2, a, 1);
  ASSERT_EQ(sep.models.size(), 2u);
  EXPECT_FALSE(sep.models[0].config().diffusion_head);
  EXPECT_FALSE(sep.models[1].config().drift_head);
  EXPECT_EQ(sep.diffusion_row(), 0);
}
