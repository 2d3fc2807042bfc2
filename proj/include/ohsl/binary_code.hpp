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

#include <Eigen/Dense>

#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "ohsl/error.hpp"

namespace ohsl {

inline constexpr std::size_t words_for_bits(std::size_t bits) { return (bits + 63) / 64; }

// A b-bit code over {-1,+1}. Bit i lives in word i/64 at position i%64
// (little-endian within the word); a set bit means +1. Padding bits past b
// are always zero.
class BinaryCode {
 public:
  BinaryCode() = default;
  explicit BinaryCode(std::size_t bits) : bits_(bits), words_(words_for_bits(bits), 0) {}

  BinaryCode(std::size_t bits, std::span<const std::uint64_t> words) : bits_(bits), words_(words.begin(), words.end()) {
    OHSL_REQUIRE(words_.size() == words_for_bits(bits), "word count does not match bit count");
    OHSL_REQUIRE(padding_clear(), "padding bits beyond code length must be zero");
  }

  // sign >= 0 maps to +1.
  static BinaryCode from_signs(std::span<const double> signs) {
    BinaryCode code(signs.size());
    for (std::size_t i = 0; i < signs.size(); ++i) code.set(i, signs[i] >= 0.0);
    return code;
  }

  std::size_t bits() const noexcept { return bits_; }
  std::span<const std::uint64_t> words() const noexcept { return words_; }

  bool bit(std::size_t i) const noexcept { return (words_[i >> 6] >> (i & 63)) & 1U; }
  int sign(std::size_t i) const noexcept { return bit(i) ? 1 : -1; }

  void set(std::size_t i, bool on) noexcept {
    const std::uint64_t mask = std::uint64_t{1} << (i & 63);
    if (on) {
      words_[i >> 6] |= mask;
    } else {
      words_[i >> 6] &= ~mask;
    }
  }

  // The {-1,+1} vector this code stands for.
  Eigen::VectorXd to_signs() const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(bits_));
    for (std::size_t i = 0; i < bits_; ++i) out[static_cast<Eigen::Index>(i)] = sign(i);
    return out;
  }

  BinaryCode complement() const {
    BinaryCode out(*this);
    for (auto& w : out.words_) w = ~w;
    out.clear_padding();
    return out;
  }

  friend bool operator==(const BinaryCode&, const BinaryCode&) = default;

 private:
  bool padding_clear() const noexcept {
    const std::size_t tail = bits_ & 63;
    return tail == 0 || words_.empty() || (words_.back() >> tail) == 0;
  }

  void clear_padding() noexcept {
    const std::size_t tail = bits_ & 63;
    if (tail != 0 && !words_.empty()) words_.back() &= (std::uint64_t{1} << tail) - 1;
  }

  std::size_t bits_ = 0;
  std::vector<std::uint64_t> words_;
};

inline int hamming(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) noexcept {
  int d = 0;
  for (std::size_t w = 0; w < a.size(); ++w) d += std::popcount(a[w] ^ b[w]);
  return d;
}

inline int hamming(const BinaryCode& a, const BinaryCode& b) {
  if (a.bits() != b.bits()) throw std::invalid_argument("hamming: code lengths differ");
  return hamming(a.words(), b.words());
}

// <a,b> over the {-1,+1} interpretation.
inline int sign_inner_product(const BinaryCode& a, const BinaryCode& b) {
  return static_cast<int>(a.bits()) - 2 * hamming(a, b);
}

}  // namespace ohsl
