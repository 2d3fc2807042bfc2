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

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include "ohsl/search.hpp"
#include "oracles.hpp"

using namespace ohsl;

namespace {

BinaryCode random_code(std::size_t bits, std::mt19937_64& rng) {
  BinaryCode c(bits);
  for (std::size_t i = 0; i < bits; ++i) c.set(i, rng() & 1U);
  return c;
}

BinaryCode from_signs(const std::vector<int>& s) {
  BinaryCode c(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) c.set(i, s[i] > 0);
  return c;
}

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

CodeDatabase random_db(std::size_t n, std::size_t bits, std::mt19937_64& rng, bool shuffle_ids = false) {
  std::vector<RecordId> ids(n);
  std::iota(ids.begin(), ids.end(), RecordId{100});
  if (shuffle_ids) std::shuffle(ids.begin(), ids.end(), rng);
  CodeDatabase db(bits);
  for (std::size_t i = 0; i < n; ++i) db.append(ids[i], random_code(bits, rng));
  return db;
}

std::vector<Scored> naive_rank(const CodeDatabase& db, const std::function<double(std::size_t)>& score,
                               std::size_t k) {
  std::vector<Scored> all;
  for (std::size_t i = 0; i < db.size(); ++i) all.push_back({db.id(i), score(i)});
  std::sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  all.resize(std::min(k, all.size()));
  return all;
}

}  // namespace

TEST(QueryWeights, ZeroMatrixScoresEverythingZero) {
  std::mt19937_64 rng(1);
  const auto w = query_weights(Eigen::MatrixXd::Zero(6, 16), Eigen::VectorXd::Ones(6));
  for (int i = 0; i < 20; ++i) EXPECT_EQ(w.score(random_code(16, rng)), 0.0);
}

TEST(QueryWeights, IdentityMatrixReducesToInnerProduct) {
  std::mt19937_64 rng(2);
  const Eigen::VectorXd q = random_matrix(8, 1, rng);
  const auto w = query_weights(Eigen::MatrixXd::Identity(8, 8), q);
  EXPECT_EQ(w.m_hat(), q);
  const auto code = random_code(8, rng);
  EXPECT_NEAR(w.score(code), q.dot(code.to_signs()), 1e-12);
}

TEST(QueryWeights, MatchesDirectMatVecAndIsAntisymmetric) {
  std::mt19937_64 rng(3);
  const Eigen::MatrixXd m = random_matrix(10, 24, rng);
  const Eigen::VectorXd q = random_matrix(10, 1, rng);
  const auto w = query_weights(m, q);
  for (Eigen::Index j = 0; j < 24; ++j) {
    double direct = 0.0;
    for (Eigen::Index i = 0; i < 10; ++i) direct += q[i] * m(i, j);
    EXPECT_NEAR(w.weight(static_cast<std::size_t>(j), 1), direct, 1e-12 * std::max(1.0, std::abs(direct)));
    EXPECT_EQ(w.weight(static_cast<std::size_t>(j), -1), -w.weight(static_cast<std::size_t>(j), 1));
  }
  EXPECT_THROW(query_weights(m, Eigen::VectorXd::Zero(9)), std::invalid_argument);
}

TEST(Score, AllOnesCodeSumsWeights) {
  std::mt19937_64 rng(4);
  const auto w = QueryWeights(random_matrix(20, 1, rng));
  BinaryCode ones(20);
  for (std::size_t i = 0; i < 20; ++i) ones.set(i, true);
  EXPECT_NEAR(w.score(ones), w.m_hat().sum(), 1e-12);
}

TEST(Score, ComplementNegates) {
  std::mt19937_64 rng(5);
  const auto w = QueryWeights(random_matrix(37, 1, rng));
  for (int i = 0; i < 50; ++i) {
    const auto c = random_code(37, rng);
    EXPECT_NEAR(w.score(c.complement()), -w.score(c), 1e-12);
  }
  EXPECT_THROW(w.score(BinaryCode(36)), std::invalid_argument);
}

TEST(Score, EqualsDenseBilinearForm) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t b = std::vector<std::size_t>{16, 32, 64, 96}[trial % 4];
    const Eigen::MatrixXd m = random_matrix(12, static_cast<Eigen::Index>(b), rng);
    const Eigen::VectorXd q = random_matrix(12, 1, rng);
    const auto signs = oracle::random_signs(b, rng);
    const double dense = oracle::dense_bilinear(m, q, signs);
    const double fast = query_weights(m, q).score(from_signs(signs));
    EXPECT_LE(std::abs(fast - dense), 1e-9 * (1.0 + std::abs(dense)));
  }
}

TEST(LinearScan, FullRankingIsAPermutation) {
  std::mt19937_64 rng(7);
  const auto db = random_db(30, 16, rng, true);
  const auto w = QueryWeights(random_matrix(16, 1, rng));
  const auto top = linear_scan_topk(w, db, 100);
  ASSERT_EQ(top.size(), 30u);
  std::vector<RecordId> ids;
  for (const auto& s : top) ids.push_back(s.id);
  std::sort(ids.begin(), ids.end());
  std::vector<RecordId> expect(db.ids().begin(), db.ids().end());
  std::sort(expect.begin(), expect.end());
  EXPECT_EQ(ids, expect);
}

TEST(LinearScan, ZeroWeightsFallBackToIdOrder) {
  std::mt19937_64 rng(8);
  const auto db = random_db(25, 16, rng, true);
  const auto top = linear_scan_topk(QueryWeights(Eigen::VectorXd::Zero(16)), db, 25);
  for (std::size_t i = 0; i < top.size(); ++i) EXPECT_EQ(top[i].id, 100 + i);
}

TEST(LinearScan, MatchesFullSortOracle) {
  std::mt19937_64 rng(9);
  const auto db = random_db(200, 24, rng, true);
  for (int trial = 0; trial < 20; ++trial) {
    const auto w = QueryWeights(random_matrix(24, 1, rng));
    const auto expect = naive_rank(db, [&](std::size_t i) { return w.score(db.code(i)); }, 17);
    EXPECT_EQ(linear_scan_topk(w, db, 17), expect);
  }
}

TEST(LinearScan, EmptyDatabaseAndBadK) {
  CodeDatabase db(8);
  const auto w = QueryWeights(Eigen::VectorXd::Ones(8));
  EXPECT_TRUE(linear_scan_topk(w, db, 5).empty());
  EXPECT_THROW(linear_scan_topk(w, db, 0), std::invalid_argument);
}

TEST(MultiIndex, SingleTableKeyedByWholeCode) {
  std::mt19937_64 rng(10);
  const auto db = random_db(50, 12, rng);
  const auto idx = build_multi_index(db, 1);
  ASSERT_EQ(idx.num_tables(), 1u);
  EXPECT_EQ(idx.table(0).length, 12u);
  for (std::size_t i = 0; i < db.size(); ++i) EXPECT_EQ(idx.substring(db.code_words(i), 0), db.code_words(i)[0]);
}

TEST(MultiIndex, SubstringKeysFollowLittleEndianBits) {
  CodeDatabase db(8);
  db.append(0, BinaryCode(8, std::vector<std::uint64_t>{0xA5}));
  const auto idx = build_multi_index(db, 2);
  ASSERT_EQ(idx.table(0).keys.size(), 1u);
  EXPECT_EQ(idx.table(0).keys[0], 0x5u);
  EXPECT_EQ(idx.table(1).keys[0], 0xAu);
}

TEST(MultiIndex, PartitionProperties) {
  std::mt19937_64 rng(11);
  const auto db = random_db(300, 37, rng);
  for (std::size_t m : {1, 2, 3, 5, 8}) {
    const auto idx = build_multi_index(db, m);
    std::size_t total_bits = 0, min_len = 100, max_len = 0;
    for (std::size_t t = 0; t < m; ++t) {
      const auto& table = idx.table(t);
      EXPECT_EQ(table.positions.size(), db.size());
      std::vector<std::uint32_t> pos(table.positions);
      std::sort(pos.begin(), pos.end());
      EXPECT_EQ(std::adjacent_find(pos.begin(), pos.end()), pos.end());
      total_bits += table.length;
      min_len = std::min(min_len, table.length);
      max_len = std::max(max_len, table.length);
    }
    EXPECT_EQ(total_bits, 37u);
    EXPECT_LE(max_len - min_len, 1u);
  }
  EXPECT_THROW(build_multi_index(db, 0), std::invalid_argument);
  EXPECT_THROW(build_multi_index(db, 38), std::invalid_argument);
}

TEST(MultiIndex, MatchesLinearScanExactly) {
  std::mt19937_64 rng(12);
  const auto db = random_db(500, 32, rng, true);
  for (std::size_t m : {1, 2, 4}) {
    const auto idx = build_multi_index(db, m);
    for (int trial = 0; trial < 100; ++trial) {
      const auto w = QueryWeights(random_matrix(32, 1, rng));
      EXPECT_EQ(multi_index_topk(idx, w, 10), linear_scan_topk(w, db, 10)) << "m=" << m;
    }
  }
}

TEST(MultiIndex, ZeroWeightsTerminateWithTieOrder) {
  std::mt19937_64 rng(13);
  const auto db = random_db(200, 32, rng, true);
  const auto w = QueryWeights(Eigen::VectorXd::Zero(32));
  for (std::size_t m : {1, 4}) {
    const auto idx = build_multi_index(db, m);
    EXPECT_EQ(multi_index_topk(idx, w, 7), linear_scan_topk(w, db, 7));
  }
}

TEST(MultiIndex, DuplicateCodesAndTiesStayExact) {
  std::mt19937_64 rng(14);
  CodeDatabase db(16);
  std::vector<BinaryCode> pool;
  for (int i = 0; i < 5; ++i) pool.push_back(random_code(16, rng));
  for (RecordId id = 0; id < 200; ++id) db.append(199 - id, pool[id % 5]);
  const auto idx = build_multi_index(db, 2);
  for (int trial = 0; trial < 20; ++trial) {
    // Integer weights make exact score ties common.
    Eigen::VectorXd m(16);
    for (Eigen::Index i = 0; i < 16; ++i) m[i] = static_cast<double>(static_cast<int>(rng() % 5) - 2);
    const QueryWeights w(m);
    for (std::size_t k : {1, 3, 50, 300}) EXPECT_EQ(multi_index_topk(idx, w, k), linear_scan_topk(w, db, k));
  }
}

TEST(MultiIndex, ProbesFewerCodesWhenWeightsAreSkewed) {
  std::mt19937_64 rng(15);
  const auto db = random_db(5000, 32, rng);
  const auto idx = build_multi_index(db, 4);
  Eigen::VectorXd m(32);
  for (Eigen::Index i = 0; i < 32; ++i) m[i] = std::pow(0.7, static_cast<double>(i));
  MultiIndexStats stats;
  const QueryWeights w(m);
  EXPECT_EQ(multi_index_topk(idx, w, 10, &stats), linear_scan_topk(w, db, 10));
  EXPECT_LT(stats.codes_scored, db.size());
}

TEST(MultiIndex, StaleIndexIsRefused) {
  std::mt19937_64 rng(16);
  auto db = random_db(20, 16, rng);
  const auto idx = build_multi_index(db, 2);
  db.append(999, random_code(16, rng));
  EXPECT_THROW(multi_index_topk(idx, QueryWeights(Eigen::VectorXd::Ones(16)), 3), StaleIndexError);
}

TEST(HammingTopk, QueryPresentRanksFirst) {
  std::mt19937_64 rng(17);
  auto db = random_db(100, 32, rng, true);
  const auto q = db.code(37);
  const auto top = hamming_topk(q, db, 1);
  ASSERT_EQ(top.size(), 1u);
  EXPECT_EQ(top[0].id, db.id(37));
  EXPECT_EQ(top[0].score, 0.0);
}

TEST(HammingTopk, MatchesNaiveOrder) {
  std::mt19937_64 rng(18);
  const auto db = random_db(150, 16, rng, true);
  for (int trial = 0; trial < 10; ++trial) {
    const auto q = random_code(16, rng);
    auto expect = naive_rank(db, [&](std::size_t i) { return -static_cast<double>(hamming(q, db.code(i))); }, 500);
    for (auto& s : expect) s.score = -s.score;
    const auto got = hamming_topk(q, db, 500);
    EXPECT_EQ(got, expect);
    for (std::size_t i = 1; i < got.size(); ++i) EXPECT_LE(got[i - 1].score, got[i].score);
  }
}

TEST(SymmetricScore, IdentityGivesSignInnerProduct) {
  std::mt19937_64 rng(19);
  for (int i = 0; i < 30; ++i) {
    const auto a = random_code(24, rng);
    const auto b = random_code(24, rng);
    EXPECT_EQ(symmetric_score(Eigen::MatrixXd::Identity(24, 24), a, b), 24 - 2 * hamming(a, b));
    EXPECT_EQ(symmetric_score(Eigen::MatrixXd::Zero(24, 24), a, b), 0.0);
  }
  EXPECT_THROW(symmetric_score(Eigen::MatrixXd::Zero(3, 4), BinaryCode(3), BinaryCode(3)), std::invalid_argument);
}

TEST(SymmetricScore, MatchesDenseOracle) {
  std::mt19937_64 rng(20);
  for (int i = 0; i < 100; ++i) {
    const Eigen::MatrixXd m = random_matrix(16, 16, rng);
    const auto qs = oracle::random_signs(16, rng);
    const auto xs = oracle::random_signs(16, rng);
    Eigen::VectorXd q(16);
    for (int j = 0; j < 16; ++j) q[j] = qs[static_cast<std::size_t>(j)];
    const double dense = oracle::dense_bilinear(m, q, xs);
    EXPECT_NEAR(symmetric_score(m, from_signs(qs), from_signs(xs)), dense, 1e-12 * (1.0 + std::abs(dense)));
  }
}

TEST(SymmetricScore, IdentityRankingEqualsHammingRanking) {
  std::mt19937_64 rng(21);
  const auto db = random_db(120, 16, rng, true);
  const auto q = random_code(16, rng);
  const auto sym = linear_scan_topk(query_weights(Eigen::MatrixXd::Identity(16, 16), q.to_signs()), db, 120);
  const auto ham = hamming_topk(q, db, 120);
  ASSERT_EQ(sym.size(), ham.size());
  for (std::size_t i = 0; i < sym.size(); ++i) EXPECT_EQ(sym[i].id, ham[i].id);
}

TEST(CodeDatabaseFile, RoundTripsByteIdentically) {
  std::mt19937_64 rng(22);
  CodeDatabase db(70);
  for (RecordId id = 0; id < 30; ++id) {
    std::vector<ClassId> labels;
    for (ClassId c = 0; c < id % 4; ++c) labels.push_back(c * 3);
    db.append(id * 7, random_code(70, rng), labels);
  }
  std::stringstream first;
  db.write(first);
  EXPECT_EQ(first.str().substr(0, 4), "OHDB");
  std::stringstream in(first.str());
  const auto back = CodeDatabase::read(in);
  EXPECT_EQ(back, db);
  std::stringstream second;
  back.write(second);
  EXPECT_EQ(second.str(), first.str());
  std::stringstream truncated(first.str().substr(0, first.str().size() - 3));
  EXPECT_THROW(CodeDatabase::read(truncated), DataError);
}
