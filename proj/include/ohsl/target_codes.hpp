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

// Hadamard-derived l-bit target codes, one per class label.

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ohsl/binary_io.hpp"
#include "ohsl/error.hpp"
#include "ohsl/types.hpp"

namespace ohsl {

// Sylvester construction: H_1 = [1], H_2k = [[H_k, H_k], [H_k, -H_k]].
inline Eigen::MatrixXi build_hadamard(std::size_t n) {
  OHSL_REQUIRE(n >= 1 && std::has_single_bit(n), "build_hadamard: order must be a power of two");
  const auto order = static_cast<Eigen::Index>(n);
  Eigen::MatrixXi h(order, order);
  h(0, 0) = 1;
  for (Eigen::Index k = 1; k < order; k *= 2) {
    h.block(0, k, k, k) = h.block(0, 0, k, k);
    h.block(k, 0, k, k) = h.block(0, 0, k, k);
    h.block(k, k, k, k) = -h.block(0, 0, k, k);
  }
  return h;
}

class TargetCodebook {
 public:
  TargetCodebook() = default;

  // Builds the codebook for the given classes. The Hadamard order is the
  // smallest power of two >= max(l, capacity + 1), where capacity defaults to
  // the number of classes; a larger capacity leaves room for classes that
  // show up later in the stream.
  static TargetCodebook for_classes(std::span<const ClassId> classes, std::size_t code_length, std::uint64_t seed,
                                    std::size_t capacity = 0) {
    OHSL_REQUIRE(code_length >= 1, "target code length must be positive");
    OHSL_REQUIRE(!classes.empty(), "need at least one class");
    std::vector<ClassId> ids(classes.begin(), classes.end());
    std::sort(ids.begin(), ids.end());
    OHSL_REQUIRE(std::adjacent_find(ids.begin(), ids.end()) == ids.end(), "duplicate class id");

    capacity = std::max(capacity, ids.size());
    TargetCodebook cb;
    cb.length_ = code_length;
    cb.order_ = std::bit_ceil(std::max(code_length, capacity + 1));
    cb.seed_ = seed;
    cb.hadamard_ = build_hadamard(cb.order_);

    // Prefer a draw whose truncated codes stay mutually orthogonal; fall back
    // to the first draw whose codes are merely distinct.
    constexpr int kMaxDraws = 64;
    std::optional<TargetCodebook> fallback;
    for (int attempt = 0; attempt < kMaxDraws; ++attempt) {
      cb.classes_.clear();
      cb.cursor_ = 0;
      cb.column_order_.resize(cb.order_ - 1);
      // Column 0 is all ones and never used.
      std::iota(cb.column_order_.begin(), cb.column_order_.end(), std::uint32_t{1});
      std::mt19937_64 rng(seed + static_cast<std::uint64_t>(attempt));
      std::shuffle(cb.column_order_.begin(), cb.column_order_.end(), rng);
      for (ClassId id : ids) cb.classes_.emplace(id, cb.column_order_[cb.cursor_++]);
      const auto quality = cb.assignment_quality();
      if (quality == Quality::kOrthogonal) {
        cb.refresh_codes();
        return cb;
      }
      if (quality == Quality::kDistinct && !fallback) {
        cb.refresh_codes();
        fallback = cb;
      }
    }
    if (fallback) return *std::move(fallback);
    throw std::invalid_argument("cannot assign distinct truncated Hadamard codes: l=" + std::to_string(code_length) +
                                " is too short for " + std::to_string(ids.size()) + " classes");
  }

  std::size_t length() const noexcept { return length_; }
  std::size_t hadamard_order() const noexcept { return order_; }
  std::size_t num_classes() const noexcept { return classes_.size(); }
  std::uint64_t seed() const noexcept { return seed_; }
  bool contains(ClassId id) const { return classes_.contains(id); }

  std::uint32_t column_of(ClassId id) const {
    auto it = classes_.find(id);
    if (it == classes_.end()) throw std::invalid_argument("unknown class id " + std::to_string(id));
    return it->second;
  }

  // Full untruncated Hadamard column assigned to the class.
  Eigen::VectorXi full_code(ClassId id) const { return hadamard_.col(column_of(id)); }

  const Eigen::VectorXd& code(ClassId id) const {
    auto it = codes_.find(id);
    if (it == codes_.end()) throw std::invalid_argument("unknown class id " + std::to_string(id));
    return it->second;
  }

  std::vector<ClassId> class_ids() const {
    std::vector<ClassId> out;
    out.reserve(classes_.size());
    for (const auto& [id, col] : classes_) out.push_back(id);
    return out;
  }

  // Assigns the next unused Hadamard column to a class not seen before.
  // Returns false if the class already had a code.
  bool add_class(ClassId id) {
    if (classes_.contains(id)) return false;
    while (cursor_ < column_order_.size()) {
      const std::uint32_t col = column_order_[cursor_++];
      const Eigen::VectorXd candidate = truncated(col);
      bool clash = false;
      for (const auto& [other, code] : codes_) clash = clash || code == candidate;
      if (!clash) {
        classes_.emplace(id, col);
        codes_.emplace(id, candidate);
        return true;
      }
    }
    throw std::length_error("target codebook exhausted: no unused Hadamard column left for class " +
                            std::to_string(id));
  }

  // Componentwise majority vote over the label codes; ties go to +1.
  Eigen::VectorXd target_for_labels(std::span<const ClassId> labels) const {
    OHSL_REQUIRE(!labels.empty(), "target_for_labels: empty label set");
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(length_));
    for (ClassId id : labels) sum += code(id);
    return sum.unaryExpr([](double v) { return v >= 0.0 ? 1.0 : -1.0; });
  }

  friend bool operator==(const TargetCodebook& a, const TargetCodebook& b) {
    return a.length_ == b.length_ && a.order_ == b.order_ && a.seed_ == b.seed_ && a.classes_ == b.classes_ &&
           a.column_order_ == b.column_order_ && a.cursor_ == b.cursor_;
  }

  // u32 l | u32 order | u64 seed | u32 order-1 column order | u32 cursor | u32 count | (u32 class, u32 column)*
  void write(io::Writer& w) const {
    w.u32(static_cast<std::uint32_t>(length_));
    w.u32(static_cast<std::uint32_t>(order_));
    w.u64(seed_);
    for (auto c : column_order_) w.u32(c);
    w.u32(static_cast<std::uint32_t>(cursor_));
    w.u32(static_cast<std::uint32_t>(classes_.size()));
    for (const auto& [id, col] : classes_) {
      w.u32(id);
      w.u32(col);
    }
  }

  static TargetCodebook read(io::Reader& r) {
    TargetCodebook cb;
    cb.length_ = r.u32();
    cb.order_ = r.u32();
    cb.seed_ = r.u64();
    if (cb.length_ == 0 || cb.order_ < cb.length_ || !std::has_single_bit(cb.order_) || cb.order_ > (1U << 16)) {
      r.fail("invalid codebook header");
    }
    cb.column_order_.resize(cb.order_ - 1);
    for (auto& c : cb.column_order_) {
      c = r.u32();
      if (c == 0 || c >= cb.order_) r.fail("codebook column out of range");
    }
    cb.cursor_ = r.u32();
    if (cb.cursor_ > cb.column_order_.size()) r.fail("codebook cursor out of range");
    const auto count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
      const ClassId id = r.u32();
      const std::uint32_t col = r.u32();
      if (col == 0 || col >= cb.order_) r.fail("codebook column out of range");
      cb.classes_.emplace(id, col);
    }
    cb.hadamard_ = build_hadamard(cb.order_);
    cb.refresh_codes();
    return cb;
  }

 private:
  Eigen::VectorXd truncated(std::uint32_t column) const {
    return hadamard_.col(column).head(static_cast<Eigen::Index>(length_)).cast<double>();
  }

  enum class Quality { kClash, kDistinct, kOrthogonal };

  Quality assignment_quality() const {
    std::vector<Eigen::VectorXd> seen;
    bool orthogonal = true;
    for (const auto& [id, col] : classes_) {
      Eigen::VectorXd c = truncated(col);
      for (const auto& s : seen) {
        if (s == c) return Quality::kClash;
        orthogonal = orthogonal && s.dot(c) == 0.0;
      }
      seen.push_back(std::move(c));
    }
    return orthogonal ? Quality::kOrthogonal : Quality::kDistinct;
  }

  void refresh_codes() {
    codes_.clear();
    for (const auto& [id, col] : classes_) codes_.emplace(id, truncated(col));
  }

  std::size_t length_ = 0;
  std::size_t order_ = 0;
  std::uint64_t seed_ = 0;
  Eigen::MatrixXi hadamard_;
  std::vector<std::uint32_t> column_order_;
  std::size_t cursor_ = 0;
  std::map<ClassId, std::uint32_t> classes_;
  std::map<ClassId, Eigen::VectorXd> codes_;
};

// Classes 0 .. num_classes-1.
inline TargetCodebook assign_class_codes(std::size_t num_classes, std::size_t code_length, std::uint64_t seed) {
  OHSL_REQUIRE(num_classes >= 1, "assign_class_codes: need at least one class");
  std::vector<ClassId> ids(num_classes);
  std::iota(ids.begin(), ids.end(), ClassId{0});
  return TargetCodebook::for_classes(ids, code_length, seed);
}

}  // namespace ohsl
