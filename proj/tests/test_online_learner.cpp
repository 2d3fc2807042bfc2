// Copyright 2026-present the ohsl authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <atomic>
#include <random>
#include <sstream>
#include <thread>
#include <tuple>
#include <type_traits>

#include "ohsl/code_database.hpp"
#include "ohsl/online_learner.hpp"
#include "oracles.hpp"

using namespace ohsl;

namespace {

Eigen::VectorXd random_vec(Eigen::Index n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

BinaryCode random_code(std::size_t bits, std::mt19937_64& rng) {
  BinaryCode c(bits);
  for (std::size_t i = 0; i < bits; ++i) c.set(i, rng() & 1U);
  return c;
}

HashModel random_hash(std::size_t d, std::size_t b, std::mt19937_64& rng) {
  Eigen::MatrixXd w(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(b));
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = random_vec(1, rng)[0];
  return HashModel(w, random_vec(static_cast<Eigen::Index>(b), rng, 0.1));
}

template <typename T>
struct MemberArgs;
template <typename C, typename R, typename... A>
struct MemberArgs<R (C::*)(A...)> {
  using type = std::tuple<std::remove_cvref_t<A>...>;
};

template <typename Tuple, typename T>
struct TupleHas;
template <typename T, typename... A>
struct TupleHas<std::tuple<A...>, T> : std::disjunction<std::is_same<A, T>...> {};

}  // namespace

TEST(HingeLoss, ZeroVectorGivesUnitLoss) {
  std::mt19937_64 rng(1);
  const auto x = random_vec(6, rng);
  EXPECT_EQ(hinge_loss(Eigen::VectorXd::Zero(6), x, 1.0), 1.0);
  EXPECT_EQ(hinge_loss(Eigen::VectorXd::Zero(6), x, -1.0), 1.0);
}

TEST(HingeLoss, SatisfiedMarginIsZero) {
  const Eigen::Vector2d u(2.0, 0.0), x(1.0, 5.0);
  EXPECT_EQ(hinge_loss(u, x, 1.0), 0.0);
}

TEST(HingeLoss, PartialMargin) {
  // g u^T x = 0.25
  const Eigen::Vector3d u(0.5, -0.25, 1.0), x(1.0, 1.0, 0.0);
  EXPECT_DOUBLE_EQ(hinge_loss(u, x, 1.0), 0.75);
  EXPECT_DOUBLE_EQ(hinge_loss(u, x, -1.0), 1.25);
}

TEST(PaUpdateU, PassiveBranchLeavesVectorUnchanged) {
  const Eigen::Vector2d u(3.0, 1.0), x(1.0, 0.0);
  const Eigen::VectorXd out = pa_update(u, x, 1.0, 0.01);
  EXPECT_EQ(out, Eigen::VectorXd(u));
}

TEST(PaUpdateU, ClippedStepAtDefaultC) {
  const Eigen::VectorXd out = pa_update(Eigen::Vector2d::Zero(), Eigen::Vector2d(1.0, 0.0), 1.0, 0.01);
  EXPECT_DOUBLE_EQ(out[0], 0.01);
  EXPECT_DOUBLE_EQ(out[1], 0.0);
}

TEST(PaUpdateU, MatchesNumericQpOracle) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const auto u = random_vec(5, rng, 0.5);
    const auto x = random_vec(5, rng);
    const double g = (rng() & 1U) ? 1.0 : -1.0;
    const Eigen::VectorXd closed = pa_update(u, x, g, 10.0);
    const Eigen::VectorXd numeric = oracle::pa_qp(u, x, g, 10.0);
    EXPECT_LE((closed - numeric).cwiseAbs().maxCoeff(), 1e-6);
    const PaStep step = pa_step(u, x, g, 10.0);
    if (step.outcome == PaOutcome::kAggressive) {
      EXPECT_NEAR((closed - u).norm(), step.tau * x.norm(), 1e-12);
      EXPECT_GT(step.tau, 0.0);
      EXPECT_LE(step.tau, 10.0);
    }
  }
}

TEST(PaUpdateU, NormExponentOneUsesUnsquaredNorm) {
  const Eigen::Vector2d x(3.0, 4.0);
  const Eigen::VectorXd out = pa_update(Eigen::Vector2d::Zero(), x, 1.0, 100.0, NormExponent::kOne);
  // tau = 1 / ||x|| = 0.2
  EXPECT_NEAR(out[0], 0.6, 1e-15);
  EXPECT_NEAR(out[1], 0.8, 1e-15);
}

TEST(PaUpdateU, ZeroInputWithLossIsRejected) {
  EXPECT_THROW(pa_update(Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero(), 1.0, 0.01), DataError);
  EXPECT_EQ(pa_step(Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero(), 1.0, 0.01).outcome, PaOutcome::kDegenerate);
}

TEST(PaUpdateV, ZeroStartAtDefaultC) {
  std::mt19937_64 rng(4);
  const auto code = random_code(32, rng);
  const Eigen::VectorXd out = pa_update_code(Eigen::VectorXd::Zero(32), code, 1.0, 0.01);
  // loss 1, tau = min(0.01, 1/32)
  EXPECT_LE((out - 0.01 * code.to_signs()).cwiseAbs().maxCoeff(), 1e-18);
}

TEST(PaUpdateV, PassiveWhenMarginHolds) {
  std::mt19937_64 rng(5);
  const auto code = random_code(8, rng);
  const Eigen::VectorXd v = 0.5 * code.to_signs();
  EXPECT_EQ(pa_update_code(v, code, 1.0, 0.01), v);
}

TEST(PaUpdateV, MatchesNumericQpOracle) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const auto v = random_vec(8, rng, 0.3);
    const auto code = random_code(8, rng);
    const double g = (rng() & 1U) ? 1.0 : -1.0;
    const Eigen::VectorXd closed = pa_update_code(v, code, g, 100.0);
    const Eigen::VectorXd numeric = oracle::pa_qp(v, code.to_signs(), g, 100.0);
    EXPECT_LE((closed - numeric).cwiseAbs().maxCoeff(), 1e-6);
    if (closed != v) {
      EXPECT_NEAR(g * closed.dot(code.to_signs()), 1.0, 1e-9);
    }
  }
}

TEST(MaterializeM, ZeroAndRankOneCases) {
  EXPECT_TRUE(materialize_m(RowMatrix::Zero(3, 4), RowMatrix::Zero(3, 2)).isZero());
  std::mt19937_64 rng(8);
  const auto u = random_vec(4, rng);
  const auto v = random_vec(3, rng);
  const Eigen::MatrixXd m = materialize_m(u.transpose(), v.transpose());
  EXPECT_LE((m - u * v.transpose()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_THROW(materialize_m(RowMatrix::Zero(2, 4), RowMatrix::Zero(3, 2)), std::invalid_argument);
}

TEST(MaterializeM, FactoredScoreIdentity) {
  std::mt19937_64 rng(9);
  RowMatrix u(3, 4), v(3, 2);
  for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = random_vec(1, rng)[0];
  for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = random_vec(1, rng)[0];
  const Eigen::MatrixXd m = materialize_m(u, v);
  for (int trial = 0; trial < 100; ++trial) {
    const auto q = random_vec(4, rng);
    const auto x = random_code(2, rng).to_signs();
    const double direct = q.dot(m * x);
    const double factored = (u * q).dot(v * x);
    EXPECT_LE(std::abs(direct - factored), 1e-10 * std::max(1.0, std::abs(direct)));
  }
}

class ObserveTest : public ::testing::Test {
 protected:
  void SetUp() override {
    rng_.seed(12);
    hash_ = random_hash(8, 4, rng_);
  }

  SimilarityModel fresh(std::size_t l, double c = 0.01) {
    return SimilarityModel(LearnerConfig{l, c, NormExponent::kTwo, Variant::kAsymmetric}, 8, 4,
                           assign_class_codes(3, l, 1));
  }

  std::mt19937_64 rng_;
  HashModel hash_;
};

TEST_F(ObserveTest, FreshModelTakesFullFirstSteps) {
  auto model = fresh(12, 0.01);
  const auto x = random_vec(8, rng_);
  const std::vector<ClassId> labels{1};
  model.observe(x, labels, hash_);
  const auto g = model.codebook().code(1);
  const auto signs = hash_.encode(x).to_signs();
  const double tau_u = std::min(0.01, 1.0 / x.squaredNorm());
  const double tau_v = std::min(0.01, 1.0 / 4.0);
  for (Eigen::Index k = 0; k < 12; ++k) {
    EXPECT_LE((model.u().row(k).transpose() - tau_u * g[k] * x).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LE((model.v().row(k).transpose() - tau_v * g[k] * signs).cwiseAbs().maxCoeff(), 1e-15);
  }
  EXPECT_EQ(model.update_count(), 1u);
  EXPECT_LE((model.m() - materialize_m(model.u(), model.v())).cwiseAbs().maxCoeff(), 1e-15);
}

TEST_F(ObserveTest, FullyPassiveStepChangesNothing) {
  // Zero threshold so x and 2x share a code. After one unclipped step every
  // row of V sits exactly on the margin (tau = 1/b) and every row of U has
  // margin ~2 against 2x, so the second point is passive everywhere.
  const HashModel hash(hash_.projection(), Eigen::VectorXd::Zero(4));
  auto model = fresh(6, 100.0);
  const auto x = random_vec(8, rng_);
  const std::vector<ClassId> labels{2};
  model.observe(x, labels, hash);
  const RowMatrix u = model.u();
  const RowMatrix v = model.v();
  const Eigen::MatrixXd m = model.m();
  model.observe(2.0 * x, labels, hash);
  EXPECT_EQ(model.u(), u);
  EXPECT_EQ(model.v(), v);
  EXPECT_EQ(model.m(), m);
  EXPECT_EQ(model.update_count(), 2u);
}

TEST_F(ObserveTest, MatchesStraightLoopReplay) {
  auto model = fresh(12, 0.01);
  oracle::ReplayLearner ref(12, 8, 4, 0.01);
  for (int i = 0; i < 100; ++i) {
    const auto x = random_vec(8, rng_);
    std::vector<ClassId> labels{static_cast<ClassId>(rng_() % 3)};
    if (rng_() & 1U) labels.push_back((labels[0] + 1) % 3);
    model.observe(x, labels, hash_);
    std::vector<double> target(12);
    for (std::size_t k = 0; k < 12; ++k) {
      double s = 0.0;
      for (ClassId c : labels) s += model.codebook().code(c)[static_cast<Eigen::Index>(k)];
      target[k] = s >= 0 ? 1.0 : -1.0;
    }
    const auto code = hash_.encode(x);
    std::vector<double> xs(x.data(), x.data() + 8), signs(4);
    for (std::size_t j = 0; j < 4; ++j) signs[j] = code.sign(j);
    ref.observe(xs, signs, target);
  }
  const auto m_ref = ref.m();
  double diff = 0.0;
  for (Eigen::Index i = 0; i < 8; ++i)
    for (Eigen::Index j = 0; j < 4; ++j) diff = std::max(diff, std::abs(model.m()(i, j) - m_ref[i][j]));
  EXPECT_LE(diff, 1e-9);
}

TEST_F(ObserveTest, CachedMatrixTracksProductOverLongStreams) {
  auto model = fresh(12, 0.05);
  for (int i = 0; i < 3000; ++i) {
    const std::vector<ClassId> labels{static_cast<ClassId>(i % 3)};
    model.observe(random_vec(8, rng_), labels, hash_);
    if (i % 250 == 0 || i == 2999) {
      EXPECT_LE((model.m() - materialize_m(model.u(), model.v())).cwiseAbs().maxCoeff(), 1e-9);
      EXPECT_TRUE(model.u().allFinite() && model.v().allFinite());
    }
  }
}

TEST_F(ObserveTest, MarginAfterUnclippedStep) {
  auto model = fresh(4, 1e6);
  const auto x = random_vec(8, rng_);
  const std::vector<ClassId> labels{0};
  model.observe(x, labels, hash_);
  const auto g = model.codebook().code(0);
  for (Eigen::Index k = 0; k < 4; ++k) EXPECT_NEAR(g[k] * model.u().row(k).dot(x), 1.0, 1e-9);
}

TEST_F(ObserveTest, RankBoundedByBits) {
  auto model = fresh(12, 0.01);
  for (int i = 0; i < 200; ++i) {
    const std::vector<ClassId> labels{static_cast<ClassId>(i % 3)};
    model.observe(random_vec(8, rng_), labels, hash_);
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(model.m());
  EXPECT_LE(lu.rank(), 4);
}

TEST_F(ObserveTest, ReplayDeterminism) {
  auto a = fresh(12);
  auto b = fresh(12);
  std::mt19937_64 r1(3), r2(3);
  for (int i = 0; i < 50; ++i) {
    const std::vector<ClassId> labels{static_cast<ClassId>(i % 3)};
    a.observe(random_vec(8, r1), labels, hash_);
    b.observe(random_vec(8, r2), labels, hash_);
  }
  EXPECT_EQ(a.u(), b.u());
  EXPECT_EQ(a.v(), b.v());
  EXPECT_EQ(a.m(), b.m());
}

TEST_F(ObserveTest, RejectsMismatchesBeforeMutating) {
  auto model = fresh(6);
  std::mt19937_64 r(2);
  const HashModel wrong = random_hash(8, 5, r);
  const std::vector<ClassId> labels{0};
  EXPECT_THROW(model.observe(random_vec(8, rng_), labels, wrong), CompatibilityError);
  const std::vector<ClassId> unknown{7};
  EXPECT_THROW(model.observe(random_vec(8, rng_), unknown, hash_), std::invalid_argument);
  EXPECT_EQ(model.update_count(), 0u);
  EXPECT_TRUE(model.u().isZero());
}

TEST_F(ObserveTest, SymmetricVariantLearnsOnCodes) {
  SimilarityModel model(LearnerConfig{6, 0.01, NormExponent::kTwo, Variant::kSymmetric}, 8, 4,
                        assign_class_codes(3, 6, 1));
  EXPECT_EQ(model.query_dim(), 4u);
  const auto x = random_vec(8, rng_);
  const std::vector<ClassId> labels{1};
  model.observe(x, labels, hash_);
  const auto signs = hash_.encode(x).to_signs();
  const auto g = model.codebook().code(1);
  for (Eigen::Index k = 0; k < 6; ++k) {
    EXPECT_LE((model.u().row(k).transpose() - std::min(0.01, 0.25) * g[k] * signs).cwiseAbs().maxCoeff(), 1e-15);
  }
  EXPECT_EQ(model.m().rows(), 4);
  EXPECT_EQ(model.m().cols(), 4);
}

TEST(ObserveStructure, LearnerHasNoDatabaseAccessPath) {
  using Args = MemberArgs<decltype(&SimilarityModel::observe)>::type;
  static_assert(!TupleHas<Args, CodeDatabase>::value);
  using EncodedArgs = MemberArgs<decltype(&SimilarityModel::observe_encoded)>::type;
  static_assert(!TupleHas<EncodedArgs, CodeDatabase>::value);
  static_assert(!std::is_constructible_v<SimilarityModel, const LearnerConfig&, std::size_t, std::size_t,
                                         TargetCodebook, const CodeDatabase&>);
  SUCCEED();
}

TEST(SimilarityModelFile, RoundTripsByteIdentically) {
  std::mt19937_64 rng(31);
  const auto hash = random_hash(8, 4, rng);
  SimilarityModel model(LearnerConfig{12, 0.05, NormExponent::kOne, Variant::kAsymmetric}, 8, 4,
                        assign_class_codes(3, 12, 4));
  for (int i = 0; i < 40; ++i) {
    const std::vector<ClassId> labels{static_cast<ClassId>(i % 3)};
    model.observe(random_vec(8, rng), labels, hash);
  }
  std::stringstream first;
  model.write(first);
  EXPECT_EQ(first.str().substr(0, 4), "OHSM");
  std::stringstream in(first.str());
  const auto back = SimilarityModel::read(in);
  EXPECT_EQ(back.u(), model.u());
  EXPECT_EQ(back.v(), model.v());
  EXPECT_EQ(back.update_count(), 40u);
  EXPECT_EQ(back.config().norm_exponent, NormExponent::kOne);
  EXPECT_EQ(back.codebook(), model.codebook());
  EXPECT_LE((back.m() - model.m()).cwiseAbs().maxCoeff(), 1e-9);
  std::stringstream second;
  back.write(second);
  EXPECT_EQ(second.str(), first.str());
}

TEST(SimilarityModelFile, SymmetricModelRoundTrips) {
  std::mt19937_64 rng(32);
  const auto hash = random_hash(8, 4, rng);
  SimilarityModel model(LearnerConfig{6, 0.01, NormExponent::kTwo, Variant::kSymmetric}, 8, 4,
                        assign_class_codes(3, 6, 2));
  for (int i = 0; i < 20; ++i) {
    const std::vector<ClassId> labels{static_cast<ClassId>(i % 3)};
    model.observe(random_vec(8, rng), labels, hash);
  }
  std::stringstream first;
  model.write(first);
  std::stringstream in(first.str());
  const auto back = SimilarityModel::read(in);
  EXPECT_EQ(back.variant(), Variant::kSymmetric);
  EXPECT_EQ(back.feature_dim(), 8u);
  EXPECT_EQ(back.u(), model.u());
  std::stringstream second;
  back.write(second);
  EXPECT_EQ(second.str(), first.str());
}

TEST(SnapshotChannel, ReadersSeeConsistentPrefixes) {
  std::mt19937_64 rng(40);
  const auto hash = random_hash(8, 4, rng);
  SimilarityModel model(LearnerConfig{12, 0.01, NormExponent::kTwo, Variant::kAsymmetric}, 8, 4,
                        assign_class_codes(3, 12, 4));
  SnapshotChannel<SimilaritySnapshot> channel;
  channel.publish(model.snapshot());
  std::atomic<bool> done{false};
  std::atomic<int> bad{0};
  std::thread reader([&] {
    std::uint64_t last = 0;
    while (!done.load()) {
      const auto snap = channel.latest();
      if (snap->update_count < last || snap->m.rows() != 8) ++bad;
      last = snap->update_count;
    }
  });
  for (int i = 0; i < 500; ++i) {
    const std::vector<ClassId> labels{static_cast<ClassId>(i % 3)};
    model.observe(random_vec(8, rng), labels, hash);
    channel.publish(model.snapshot());
  }
  done = true;
  reader.join();
  EXPECT_EQ(bad.load(), 0);
  EXPECT_EQ(channel.latest()->update_count, 500u);
}
