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

// Ranking codes against a query: weighted-Hamming scoring of the learned
// bilinear similarity (exhaustive and multi-index), plus plain Hamming and
// symmetric bilinear baselines.
//
// Every ranking orders by score (descending similarity, or ascending Hamming
// distance) and breaks ties by ascending record id.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "ohsl/binary_code.hpp"
#include "ohsl/code_database.hpp"
#include "ohsl/error.hpp"
#include "ohsl/types.hpp"

namespace ohsl {

struct Scored {
  RecordId id = 0;
  double score = 0.0;
  friend bool operator==(const Scored&, const Scored&) = default;
};

// a ranks ahead of b.
inline bool ranks_before(const Scored& a, const Scored& b) noexcept {
  return a.score > b.score || (a.score == b.score && a.id < b.id);
}

// Per-query weights m_hat = M^T q. Bit i contributes +m_hat_i when set and
// -m_hat_i when clear; byte-wise lookup tables fold 8 such terms per lookup.
class QueryWeights {
 public:
  QueryWeights() = default;

  explicit QueryWeights(Eigen::VectorXd m_hat) : m_hat_(std::move(m_hat)) {
    const auto b = static_cast<std::size_t>(m_hat_.size());
    luts_.resize((b + 7) / 8);
    for (std::size_t p = 0; p < luts_.size(); ++p) {
      for (std::size_t value = 0; value < 256; ++value) {
        double acc = 0.0;
        for (std::size_t j = 0; j < 8 && 8 * p + j < b; ++j) {
          const double w = m_hat_[static_cast<Eigen::Index>(8 * p + j)];
          acc += ((value >> j) & 1U) ? w : -w;
        }
        luts_[p][value] = acc;
      }
    }
  }

  std::size_t bits() const noexcept { return static_cast<std::size_t>(m_hat_.size()); }
  const Eigen::VectorXd& m_hat() const noexcept { return m_hat_; }

  // w_i(+1) = m_hat_i, w_i(-1) = -m_hat_i.
  double weight(std::size_t bit, int sign) const noexcept {
    const double w = m_hat_[static_cast<Eigen::Index>(bit)];
    return sign > 0 ? w : -w;
  }

  double score(std::span<const std::uint64_t> words) const noexcept {
    double acc = 0.0;
    for (std::size_t p = 0; p < luts_.size(); ++p) {
      const auto byte = static_cast<std::uint8_t>(words[p >> 3] >> (8 * (p & 7)));
      acc += luts_[p][byte];
    }
    return acc;
  }

  double score(const BinaryCode& code) const {
    if (code.bits() != bits()) throw std::invalid_argument("score: code length does not match query weights");
    return score(code.words());
  }

 private:
  Eigen::VectorXd m_hat_;
  std::vector<std::array<double, 256>> luts_;
};

// m_hat = M^T q, computed once per query (O(D b)).
inline QueryWeights query_weights(const Eigen::MatrixXd& m, FeatureRef q) {
  if (m.rows() != q.size()) {
    throw std::invalid_argument("query_weights: M has " + std::to_string(m.rows()) + " rows, query has " +
                                std::to_string(q.size()) + " entries");
  }
  return QueryWeights(m.transpose() * q);
}

// q~^T M~ x~ over the {-1,+1} interpretation of both codes.
inline double symmetric_score(const Eigen::MatrixXd& m_sym, const BinaryCode& q, const BinaryCode& x) {
  if (m_sym.rows() != static_cast<Eigen::Index>(q.bits()) || m_sym.cols() != static_cast<Eigen::Index>(x.bits())) {
    throw std::invalid_argument("symmetric_score: shape mismatch");
  }
  return q.to_signs().dot(m_sym * x.to_signs());
}

namespace detail {

inline std::vector<Scored> select_top(std::vector<Scored> all, std::size_t k) {
  k = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), ranks_before);
  all.resize(k);
  return all;
}

}  // namespace detail

inline std::vector<Scored> linear_scan_topk(const QueryWeights& w, const CodeDatabase& db, std::size_t k) {
  OHSL_REQUIRE(k >= 1, "linear_scan_topk: K must be at least 1");
  if (db.empty()) return {};
  if (w.bits() != db.bits()) throw std::invalid_argument("linear_scan_topk: weight/code length mismatch");
  std::vector<Scored> all(db.size());
  for (std::size_t i = 0; i < db.size(); ++i) all[i] = {db.id(i), w.score(db.code_words(i))};
  return detail::select_top(std::move(all), k);
}

// Ascending Hamming distance; Scored::score holds the distance.
inline std::vector<Scored> hamming_topk(const BinaryCode& q, const CodeDatabase& db, std::size_t k) {
  OHSL_REQUIRE(k >= 1, "hamming_topk: K must be at least 1");
  if (db.empty()) return {};
  if (q.bits() != db.bits()) throw std::invalid_argument("hamming_topk: code length mismatch");
  std::vector<Scored> all(db.size());
  for (std::size_t i = 0; i < db.size(); ++i) all[i] = {db.id(i), -static_cast<double>(hamming(q.words(), db.code_words(i)))};
  auto top = detail::select_top(std::move(all), k);
  for (auto& s : top) s.score = -s.score;
  return top;
}

// Substring inverted tables over a fixed database snapshot. The index keeps a
// pointer to the database, which must outlive it; appends after the build
// make the index stale and queries against it fail.
class MultiIndex {
 public:
  struct Table {
    std::size_t first_bit = 0;
    std::size_t length = 0;
    std::vector<std::uint64_t> keys;       // distinct substring values
    std::vector<std::uint32_t> offsets;    // posting list i = positions[offsets[i] .. offsets[i+1])
    std::vector<std::uint32_t> positions;  // database positions
  };

  MultiIndex(const CodeDatabase& db, std::size_t num_tables) : db_(&db), built_size_(db.size()) {
    const std::size_t b = db.bits();
    OHSL_REQUIRE(num_tables >= 1 && num_tables <= b, "build_multi_index: need 1 <= m <= b");
    OHSL_REQUIRE(b / num_tables <= 64, "build_multi_index: substrings longer than 64 bits are not supported");
    OHSL_REQUIRE(db.size() <= UINT32_MAX, "build_multi_index: database too large");
    tables_.resize(num_tables);
    std::size_t start = 0;
    for (std::size_t t = 0; t < num_tables; ++t) {
      // First b % m substrings get one extra bit.
      const std::size_t len = b / num_tables + (t < b % num_tables ? 1 : 0);
      tables_[t].first_bit = start;
      tables_[t].length = len;
      start += len;
    }
    for (auto& table : tables_) build_table(table);
  }

  std::size_t num_tables() const noexcept { return tables_.size(); }
  const Table& table(std::size_t t) const noexcept { return tables_[t]; }
  const CodeDatabase& database() const noexcept { return *db_; }
  std::size_t built_size() const noexcept { return built_size_; }
  bool stale() const noexcept { return db_->size() != built_size_; }

  std::uint64_t substring(std::span<const std::uint64_t> words, std::size_t t) const noexcept {
    return extract(words, tables_[t].first_bit, tables_[t].length);
  }

  static std::uint64_t extract(std::span<const std::uint64_t> words, std::size_t first, std::size_t len) noexcept {
    const std::size_t w = first >> 6;
    const std::size_t off = first & 63;
    std::uint64_t v = words[w] >> off;
    if (off + len > 64) v |= words[w + 1] << (64 - off);
    return len == 64 ? v : v & ((std::uint64_t{1} << len) - 1);
  }

 private:
  void build_table(Table& table) {
    std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> buckets;
    std::vector<std::uint64_t> order;
    for (std::size_t i = 0; i < db_->size(); ++i) {
      const auto key = extract(db_->code_words(i), table.first_bit, table.length);
      auto [it, inserted] = buckets.try_emplace(key);
      if (inserted) order.push_back(key);
      it->second.push_back(static_cast<std::uint32_t>(i));
    }
    std::sort(order.begin(), order.end());
    table.keys = order;
    table.offsets.reserve(order.size() + 1);
    table.offsets.push_back(0);
    for (auto key : order) {
      const auto& list = buckets[key];
      table.positions.insert(table.positions.end(), list.begin(), list.end());
      table.offsets.push_back(static_cast<std::uint32_t>(table.positions.size()));
    }
  }

  const CodeDatabase* db_;
  std::size_t built_size_;
  std::vector<Table> tables_;
};

inline std::size_t default_num_tables(std::size_t bits) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(bits) / 8.0)));
}

inline MultiIndex build_multi_index(const CodeDatabase& db, std::size_t num_tables) { return MultiIndex(db, num_tables); }

struct MultiIndexStats {
  std::size_t buckets_probed = 0;
  std::size_t codes_scored = 0;
};

// Exact top-K under the weighted score, probing each table's buckets in
// decreasing partial-score order. Every unseen code has, in each table, a
// substring value that has not been popped yet, so its score is bounded by the
// sum of the tables' current best remaining partial scores; the search stops
// once the K-th best full score beats that bound.
inline std::vector<Scored> multi_index_topk(const MultiIndex& idx, const QueryWeights& w, std::size_t k,
                                            MultiIndexStats* stats = nullptr) {
  OHSL_REQUIRE(k >= 1, "multi_index_topk: K must be at least 1");
  if (idx.stale()) {
    throw StaleIndexError("multi_index_topk: database has " + std::to_string(idx.database().size()) +
                          " codes but index was built over " + std::to_string(idx.built_size()) +
                          "; rebuild the index");
  }
  const CodeDatabase& db = idx.database();
  if (db.empty()) return {};
  if (w.bits() != db.bits()) throw std::invalid_argument("multi_index_topk: weight/code length mismatch");

  using Entry = std::pair<double, std::uint32_t>;  // (partial score, bucket)
  const std::size_t m = idx.num_tables();
  std::vector<std::vector<Entry>> heaps(m);
  double abs_sum = 0.0;
  for (Eigen::Index i = 0; i < w.m_hat().size(); ++i) abs_sum += std::abs(w.m_hat()[i]);
  for (std::size_t t = 0; t < m; ++t) {
    const auto& table = idx.table(t);
    double base = 0.0;  // score of the all-clear substring
    for (std::size_t j = 0; j < table.length; ++j) base -= w.m_hat()[static_cast<Eigen::Index>(table.first_bit + j)];
    auto& heap = heaps[t];
    heap.reserve(table.keys.size());
    for (std::size_t bucket = 0; bucket < table.keys.size(); ++bucket) {
      double partial = base;
      for (std::uint64_t bits = table.keys[bucket]; bits != 0; bits &= bits - 1) {
        const auto j = static_cast<std::size_t>(std::countr_zero(bits));
        partial += 2.0 * w.m_hat()[static_cast<Eigen::Index>(table.first_bit + j)];
      }
      heap.emplace_back(partial, static_cast<std::uint32_t>(bucket));
    }
    std::make_heap(heap.begin(), heap.end());
  }

  // Rounding slack between the partial-score bound and LUT-accumulated scores.
  const double slack = 1e-9 * (1.0 + abs_sum);
  // Max-heap on "ranks after", so top() is the current K-th best.
  auto worse_first = [](const Scored& a, const Scored& b) { return ranks_before(a, b); };
  std::priority_queue<Scored, std::vector<Scored>, decltype(worse_first)> best(worse_first);
  std::vector<bool> seen(db.size(), false);
  std::size_t seen_count = 0;

  while (seen_count < db.size()) {
    double bound = 0.0;
    std::size_t pick = 0;
    double pick_top = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < m; ++t) {
      // Every code lives in every table, so an exhausted table means all were seen.
      const double top = heaps[t].front().first;
      bound += top;
      if (top > pick_top) {
        pick_top = top;
        pick = t;
      }
    }
    if (best.size() == k && best.top().score > bound + slack) break;

    auto& heap = heaps[pick];
    std::pop_heap(heap.begin(), heap.end());
    const std::uint32_t bucket = heap.back().second;
    heap.pop_back();
    const auto& table = idx.table(pick);
    if (stats) ++stats->buckets_probed;
    for (auto p = table.offsets[bucket]; p < table.offsets[bucket + 1]; ++p) {
      const std::uint32_t pos = table.positions[p];
      if (seen[pos]) continue;
      seen[pos] = true;
      ++seen_count;
      if (stats) ++stats->codes_scored;
      const Scored cand{db.id(pos), w.score(db.code_words(pos))};
      if (best.size() < k) {
        best.push(cand);
      } else if (ranks_before(cand, best.top())) {
        best.pop();
        best.push(cand);
      }
    }
  }

  std::vector<Scored> out(best.size());
  for (auto it = out.rbegin(); it != out.rend(); ++it) {
    *it = best.top();
    best.pop();
  }
  return out;
}

}  // namespace ohsl
