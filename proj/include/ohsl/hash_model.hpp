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

// Fixed linear hash functions x -> sgn(W^T x + t), trained once by PCA-ITQ.

#include <Eigen/Dense>

#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "ohsl/binary_code.hpp"
#include "ohsl/binary_io.hpp"
#include "ohsl/error.hpp"
#include "ohsl/types.hpp"

namespace ohsl {

class HashModel {
 public:
  HashModel() = default;

  // projection is D x b, threshold has b entries.
  HashModel(Eigen::MatrixXd projection, Eigen::VectorXd threshold)
      : projection_(std::move(projection)), threshold_(std::move(threshold)) {
    OHSL_REQUIRE(projection_.cols() > 0 && projection_.rows() > 0, "hash model needs D >= 1 and b >= 1");
    OHSL_REQUIRE(threshold_.size() == projection_.cols(), "threshold length must equal bit count");
    if (!projection_.allFinite() || !threshold_.allFinite()) throw DataError("hash model has non-finite entries");
  }

  std::size_t dim() const noexcept { return static_cast<std::size_t>(projection_.rows()); }
  std::size_t bits() const noexcept { return static_cast<std::size_t>(projection_.cols()); }
  const Eigen::MatrixXd& projection() const noexcept { return projection_; }
  const Eigen::VectorXd& threshold() const noexcept { return threshold_; }

  // Bit i is +1 iff (W^T x + t)_i >= 0.
  BinaryCode encode(FeatureRef x) const {
    if (static_cast<std::size_t>(x.size()) != dim()) {
      throw std::invalid_argument("encode: expected " + std::to_string(dim()) + " features, got " +
                                  std::to_string(x.size()));
    }
    if (!x.allFinite()) throw DataError("encode: non-finite feature value");
    const Eigen::VectorXd proj = projection_.transpose() * x + threshold_;
    BinaryCode code(bits());
    for (std::size_t i = 0; i < bits(); ++i) code.set(i, proj[static_cast<Eigen::Index>(i)] >= 0.0);
    return code;
  }

  friend bool operator==(const HashModel& a, const HashModel& b) {
    return a.projection_ == b.projection_ && a.threshold_ == b.threshold_;
  }

 private:
  Eigen::MatrixXd projection_;
  Eigen::VectorXd threshold_;
};

struct ItqOptions {
  std::size_t bits = 32;
  int iterations = 50;
  std::uint64_t seed = 0;
};

struct ItqResult {
  HashModel model;
  Eigen::MatrixXd pca;       // D x b, top principal directions
  Eigen::MatrixXd rotation;  // b x b orthogonal
  Eigen::RowVectorXd mean;
  // ||B - V R||_F^2 for the sign assignment and rotation at the start of each
  // iteration, plus the final state; iterations + 1 entries.
  std::vector<double> quantization_error;
};

namespace detail {

inline double quantization_error(const Eigen::MatrixXd& projected, const Eigen::MatrixXd& rotation) {
  const Eigen::MatrixXd z = projected * rotation;
  const Eigen::MatrixXd b = z.unaryExpr([](double v) { return v >= 0.0 ? 1.0 : -1.0; });
  return (b - z).squaredNorm();
}

}  // namespace detail

// PCA-ITQ: center, project onto the top-b principal directions, then alternate
// sign assignment and orthogonal Procrustes rotation updates.
inline ItqResult train_itq_detailed(const FeatureMatrix& sample, const ItqOptions& opt) {
  const auto n = sample.rows();
  const auto d = sample.cols();
  const auto b = static_cast<Eigen::Index>(opt.bits);
  OHSL_REQUIRE(b >= 1, "train_itq: bits must be positive");
  OHSL_REQUIRE(b <= d, "train_itq: bits must not exceed feature dimension");
  OHSL_REQUIRE(n >= b, "train_itq: need at least as many sample points as bits");
  OHSL_REQUIRE(opt.iterations >= 0, "train_itq: iterations must be non-negative");
  if (!sample.allFinite()) throw DataError("train_itq: sample contains non-finite values");

  ItqResult out;
  out.mean = sample.colwise().mean();
  const Eigen::MatrixXd centered = sample.rowwise() - out.mean;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw DataError("train_itq: covariance eigendecomposition failed");
  // Eigenvalues come out ascending.
  const Eigen::VectorXd& evals = eig.eigenvalues();
  const double top = evals[d - 1];
  const double weakest_kept = evals[d - b];
  if (!(top > 0.0) || weakest_kept <= 1e-10 * top) {
    throw DataError("train_itq: sample covariance has rank below " + std::to_string(b) +
                    " (insufficient or degenerate initial sample)");
  }
  out.pca.resize(d, b);
  for (Eigen::Index j = 0; j < b; ++j) out.pca.col(j) = eig.eigenvectors().col(d - 1 - j);

  const Eigen::MatrixXd projected = centered * out.pca;

  if (opt.iterations == 0) {
    out.rotation = Eigen::MatrixXd::Identity(b, b);
  } else {
    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd g(b, b);
    for (Eigen::Index i = 0; i < b; ++i)
      for (Eigen::Index j = 0; j < b; ++j) g(i, j) = normal(rng);
    Eigen::JacobiSVD<Eigen::MatrixXd> init(g, Eigen::ComputeFullU);
    out.rotation = init.matrixU();
  }

  for (int it = 0; it < opt.iterations; ++it) {
    const Eigen::MatrixXd z = projected * out.rotation;
    const Eigen::MatrixXd codes = z.unaryExpr([](double v) { return v >= 0.0 ? 1.0 : -1.0; });
    out.quantization_error.push_back((codes - z).squaredNorm());
    // argmin_R ||B - V R||  s.t. R^T R = I  is  R = S * Uhat^T  for  svd(V^T B) = S Sigma Uhat^T.
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(projected.transpose() * codes, Eigen::ComputeFullU | Eigen::ComputeFullV);
    out.rotation = svd.matrixU() * svd.matrixV().transpose();
  }
  out.quantization_error.push_back(detail::quantization_error(projected, out.rotation));

  Eigen::MatrixXd w = out.pca * out.rotation;
  Eigen::VectorXd t = -(w.transpose() * out.mean.transpose());
  out.model = HashModel(std::move(w), std::move(t));
  return out;
}

inline HashModel train_itq(const FeatureMatrix& sample, std::size_t bits, int iterations, std::uint64_t seed) {
  return train_itq_detailed(sample, ItqOptions{bits, iterations, seed}).model;
}

// "OHSL" | u16 version | u32 D | u32 b | W row-major f64[D*b] | t f64[b]
inline constexpr std::uint16_t kHashModelVersion = 1;

inline void write_hash_model(std::ostream& os, const HashModel& model) {
  io::Writer w(os);
  w.magic("OHSL");
  w.u16(kHashModelVersion);
  w.u32(static_cast<std::uint32_t>(model.dim()));
  w.u32(static_cast<std::uint32_t>(model.bits()));
  const auto& p = model.projection();
  for (Eigen::Index r = 0; r < p.rows(); ++r)
    for (Eigen::Index c = 0; c < p.cols(); ++c) w.f64(p(r, c));
  for (Eigen::Index i = 0; i < model.threshold().size(); ++i) w.f64(model.threshold()[i]);
  w.check();
}

inline HashModel read_hash_model(std::istream& is, const std::string& source = "hash model") {
  io::Reader r(is, source);
  r.expect_magic("OHSL");
  if (const auto v = r.u16(); v != kHashModelVersion) r.fail("unsupported version " + std::to_string(v));
  const auto d = r.u32();
  const auto b = r.u32();
  if (d == 0 || b == 0) r.fail("zero dimension or bit count");
  Eigen::MatrixXd p(d, b);
  for (Eigen::Index row = 0; row < p.rows(); ++row)
    for (Eigen::Index c = 0; c < p.cols(); ++c) p(row, c) = r.f64();
  Eigen::VectorXd t(b);
  for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = r.f64();
  r.expect_eof();
  return HashModel(std::move(p), std::move(t));
}

}  // namespace ohsl
