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

#pragma once

// Online similarity learning: M = U^T V with every row of U and V trained as
// an independent Passive-Aggressive (PA-I) binary classifier against one bit
// of the class target code.
//
// The learner never sees the code database. Its only inputs are the current
// labeled point and the fixed hash functions, so update cost is O(l (D + b))
// plus an O(D b) refresh of the cached product, whatever the database size.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <istream>
#include <memory>
#include <mutex>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>

#include "ohsl/binary_code.hpp"
#include "ohsl/binary_io.hpp"
#include "ohsl/error.hpp"
#include "ohsl/hash_model.hpp"
#include "ohsl/target_codes.hpp"
#include "ohsl/types.hpp"

namespace ohsl {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Step-size denominator: ||x||^2 (exponent 2) solves the PA-I problem exactly;
// ||x|| (exponent 1) is kept as an alternative variant.
enum class NormExponent : std::uint8_t { kOne = 1, kTwo = 2 };

inline double hinge_loss(FeatureRef w, FeatureRef x, double target) {
  const double margin = target * w.dot(x);
  return margin >= 1.0 ? 0.0 : 1.0 - margin;
}

enum class PaOutcome { kPassive, kAggressive, kDegenerate };

struct PaStep {
  PaOutcome outcome = PaOutcome::kPassive;
  double tau = 0.0;
};

// Computes the PA-I step for w against (x, target) without applying it.
inline PaStep pa_step(FeatureRef w, FeatureRef x, double target, double aggressiveness,
                      NormExponent exponent = NormExponent::kTwo) {
  const double loss = hinge_loss(w, x, target);
  if (loss == 0.0) return {};
  const double sq = x.squaredNorm();
  if (sq == 0.0) return {PaOutcome::kDegenerate, 0.0};
  const double denom = exponent == NormExponent::kTwo ? sq : std::sqrt(sq);
  return {PaOutcome::kAggressive, std::min(aggressiveness, loss / denom)};
}

// argmin_w 1/2 ||w - w_prev||^2 + C xi  s.t.  hinge_loss(w; x, target) <= xi, xi >= 0.
inline Eigen::VectorXd pa_update(FeatureRef w, FeatureRef x, double target, double aggressiveness,
                                 NormExponent exponent = NormExponent::kTwo) {
  OHSL_REQUIRE(aggressiveness > 0.0, "pa_update: C must be positive");
  OHSL_REQUIRE(w.size() == x.size(), "pa_update: dimension mismatch");
  const PaStep step = pa_step(w, x, target, aggressiveness, exponent);
  if (step.outcome == PaOutcome::kDegenerate) throw DataError("pa_update: zero input vector with positive loss");
  if (step.outcome == PaOutcome::kPassive) return w;
  return w + step.tau * target * x;
}

inline Eigen::VectorXd pa_update_code(FeatureRef w, const BinaryCode& code, double target, double aggressiveness,
                                      NormExponent exponent = NormExponent::kTwo) {
  OHSL_REQUIRE(w.size() == static_cast<Eigen::Index>(code.bits()), "pa_update_code: dimension mismatch");
  return pa_update(w, code.to_signs(), target, aggressiveness, exponent);
}

inline Eigen::MatrixXd materialize_m(const RowMatrix& u, const RowMatrix& v) {
  if (u.rows() != v.rows()) throw std::invalid_argument("materialize_m: U and V row counts differ");
  return u.transpose() * v;
}

// Asymmetric: the query side sees raw features (M is D x b).
// Symmetric: both sides see the {-1,+1} code (M is b x b).
enum class Variant : std::uint8_t { kAsymmetric = 0, kSymmetric = 1 };

struct LearnerConfig {
  std::size_t target_length = 96;  // l; 3b at b = 32
  double aggressiveness = 0.01;    // C
  NormExponent norm_exponent = NormExponent::kTwo;
  Variant variant = Variant::kAsymmetric;
};

struct SimilaritySnapshot {
  Eigen::MatrixXd m;
  std::uint64_t update_count = 0;
  Variant variant = Variant::kAsymmetric;
};

class SimilarityModel {
 public:
  // Exact U^T V is recomputed after this many non-passive updates to stop
  // drift in the incrementally maintained M.
  static constexpr std::uint64_t kExactRefreshInterval = 1024;

  SimilarityModel() = default;

  SimilarityModel(const LearnerConfig& cfg, std::size_t feature_dim, std::size_t bits, TargetCodebook codebook)
      : config_(cfg), feature_dim_(feature_dim), bits_(bits), codebook_(std::move(codebook)) {
    OHSL_REQUIRE(cfg.aggressiveness > 0.0 && std::isfinite(cfg.aggressiveness), "C must be positive and finite");
    OHSL_REQUIRE(cfg.target_length >= 1, "target code length must be positive");
    OHSL_REQUIRE(feature_dim >= 1 && bits >= 1, "dimensions must be positive");
    if (codebook_.length() != cfg.target_length) {
      throw CompatibilityError("codebook length " + std::to_string(codebook_.length()) +
                               " does not match target length " + std::to_string(cfg.target_length));
    }
    const auto l = static_cast<Eigen::Index>(cfg.target_length);
    u_ = RowMatrix::Zero(l, static_cast<Eigen::Index>(query_dim()));
    v_ = RowMatrix::Zero(l, static_cast<Eigen::Index>(bits_));
    m_ = Eigen::MatrixXd::Zero(u_.cols(), v_.cols());
  }

  const LearnerConfig& config() const noexcept { return config_; }
  Variant variant() const noexcept { return config_.variant; }
  std::size_t target_length() const noexcept { return config_.target_length; }
  std::size_t feature_dim() const noexcept { return feature_dim_; }
  std::size_t bits() const noexcept { return bits_; }
  // Rows of M: D for the asymmetric variant, b for the symmetric one.
  std::size_t query_dim() const noexcept { return config_.variant == Variant::kSymmetric ? bits_ : feature_dim_; }
  std::uint64_t update_count() const noexcept { return update_count_; }
  std::uint64_t degenerate_skips() const noexcept { return degenerate_skips_; }

  const RowMatrix& u() const noexcept { return u_; }
  const RowMatrix& v() const noexcept { return v_; }
  const Eigen::MatrixXd& m() const noexcept { return m_; }
  const TargetCodebook& codebook() const noexcept { return codebook_; }
  TargetCodebook& codebook() noexcept { return codebook_; }

  // One round of the online algorithm for a labeled point. Unknown labels
  // throw before anything is modified.
  void observe(FeatureRef x, std::span<const ClassId> labels, const HashModel& hash) {
    if (hash.dim() != feature_dim_ || hash.bits() != bits_) {
      throw CompatibilityError("observe: hash model is " + std::to_string(hash.dim()) + "x" +
                               std::to_string(hash.bits()) + ", learner expects " + std::to_string(feature_dim_) +
                               "x" + std::to_string(bits_));
    }
    const Eigen::VectorXd target = codebook_.target_for_labels(labels);
    const BinaryCode code = hash.encode(x);
    if (config_.variant == Variant::kSymmetric) {
      observe_encoded(code.to_signs(), code, target);
    } else {
      observe_encoded(x, code, target);
    }
  }

  // Update with an explicit query-side vector, database-side code and target.
  void observe_encoded(FeatureRef query_side, const BinaryCode& code, const Eigen::VectorXd& target) {
    OHSL_REQUIRE(static_cast<std::size_t>(query_side.size()) == query_dim(), "observe: query-side dimension mismatch");
    OHSL_REQUIRE(code.bits() == bits_, "observe: code length mismatch");
    OHSL_REQUIRE(static_cast<std::size_t>(target.size()) == target_length(), "observe: target length mismatch");
    if (!query_side.allFinite()) throw DataError("observe: non-finite feature value");

    const Eigen::VectorXd signs = code.to_signs();
    const double c = config_.aggressiveness;
    // dM = x (sum_k a_k v_k)^T + (sum_k c_k u'_k) s^T, with a_k, c_k the signed steps.
    Eigen::VectorXd v_mix = Eigen::VectorXd::Zero(v_.cols());
    Eigen::VectorXd u_mix = Eigen::VectorXd::Zero(u_.cols());
    bool changed = false;

    for (Eigen::Index k = 0; k < u_.rows(); ++k) {
      const double g = target[k];
      const PaStep step = pa_step(u_.row(k).transpose(), query_side, g, c, config_.norm_exponent);
      if (step.outcome == PaOutcome::kDegenerate) {
        ++degenerate_skips_;
      } else if (step.outcome == PaOutcome::kAggressive) {
        const double a = step.tau * g;
        u_.row(k) += a * query_side.transpose();
        v_mix += a * v_.row(k).transpose();
        changed = true;
      }
    }
    for (Eigen::Index k = 0; k < v_.rows(); ++k) {
      const double g = target[k];
      const PaStep step = pa_step(v_.row(k).transpose(), signs, g, c, config_.norm_exponent);
      if (step.outcome == PaOutcome::kAggressive) {
        const double a = step.tau * g;
        v_.row(k) += a * signs.transpose();
        u_mix += a * u_.row(k).transpose();
        changed = true;
      }
    }

    ++update_count_;
    if (!changed) return;
    if (++changes_since_refresh_ >= kExactRefreshInterval) {
      refresh_m();
    } else {
      m_.noalias() += query_side * v_mix.transpose();
      m_.noalias() += u_mix * signs.transpose();
    }
  }

  // Recomputes M from U and V.
  void refresh_m() {
    m_ = materialize_m(u_, v_);
    changes_since_refresh_ = 0;
  }

  std::shared_ptr<const SimilaritySnapshot> snapshot() const {
    return std::make_shared<const SimilaritySnapshot>(SimilaritySnapshot{m_, update_count_, config_.variant});
  }

  // "OHSM" | u16 version | u8 variant | u8 norm exponent | u32 l | u32 D | u32 b | f64 C
  // | U row-major f64[l*Dq] | V row-major f64[l*b] | codebook | u64 update_count | u64 degenerate_skips
  static constexpr std::uint16_t kVersion = 1;

  void write(std::ostream& os) const {
    io::Writer w(os);
    w.magic("OHSM");
    w.u16(kVersion);
    w.u8(static_cast<std::uint8_t>(config_.variant));
    w.u8(static_cast<std::uint8_t>(config_.norm_exponent));
    w.u32(static_cast<std::uint32_t>(target_length()));
    w.u32(static_cast<std::uint32_t>(feature_dim_));
    w.u32(static_cast<std::uint32_t>(bits_));
    w.f64(config_.aggressiveness);
    w.f64s(std::span<const double>(u_.data(), static_cast<std::size_t>(u_.size())));
    w.f64s(std::span<const double>(v_.data(), static_cast<std::size_t>(v_.size())));
    codebook_.write(w);
    w.u64(update_count_);
    w.u64(degenerate_skips_);
    w.check();
  }

  static SimilarityModel read(std::istream& is, const std::string& source = "similarity model") {
    io::Reader r(is, source);
    r.expect_magic("OHSM");
    if (const auto ver = r.u16(); ver != kVersion) r.fail("unsupported version " + std::to_string(ver));
    LearnerConfig cfg;
    const auto variant = r.u8();
    if (variant > 1) r.fail("unknown variant");
    cfg.variant = static_cast<Variant>(variant);
    const auto exponent = r.u8();
    if (exponent != 1 && exponent != 2) r.fail("norm exponent must be 1 or 2");
    cfg.norm_exponent = static_cast<NormExponent>(exponent);
    cfg.target_length = r.u32();
    const auto d = r.u32();
    const auto b = r.u32();
    cfg.aggressiveness = r.f64();
    if (cfg.target_length == 0 || d == 0 || b == 0) r.fail("zero dimension");
    if (!(cfg.aggressiveness > 0.0)) r.fail("C must be positive");
    const auto l = static_cast<Eigen::Index>(cfg.target_length);
    RowMatrix u(l, static_cast<Eigen::Index>(cfg.variant == Variant::kSymmetric ? b : d));
    RowMatrix v(l, static_cast<Eigen::Index>(b));
    for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = r.f64();
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = r.f64();
    TargetCodebook cb = TargetCodebook::read(r);
    if (cb.length() != cfg.target_length) r.fail("codebook length does not match l");
    SimilarityModel model(cfg, d, b, std::move(cb));
    model.u_ = std::move(u);
    model.v_ = std::move(v);
    model.update_count_ = r.u64();
    model.degenerate_skips_ = r.u64();
    r.expect_eof();
    if (!model.u_.allFinite() || !model.v_.allFinite()) r.fail("non-finite U or V");
    model.refresh_m();
    return model;
  }

 private:
  LearnerConfig config_;
  std::size_t feature_dim_ = 0;
  std::size_t bits_ = 0;
  TargetCodebook codebook_;
  RowMatrix u_;
  RowMatrix v_;
  Eigen::MatrixXd m_;
  std::uint64_t update_count_ = 0;
  std::uint64_t degenerate_skips_ = 0;
  std::uint64_t changes_since_refresh_ = 0;
};

// Single-writer / many-reader hand-off of immutable snapshots.
template <typename T>
class SnapshotChannel {
 public:
  void publish(std::shared_ptr<const T> snap) {
    std::lock_guard lock(mu_);
    current_ = std::move(snap);
  }

  std::shared_ptr<const T> latest() const {
    std::lock_guard lock(mu_);
    return current_;
  }

 private:
  mutable std::mutex mu_;
  std::shared_ptr<const T> current_;
};

}  // namespace ohsl
