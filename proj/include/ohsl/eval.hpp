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

// Streaming simulation and retrieval evaluation on synthetic multi-label data.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ohsl/code_database.hpp"
#include "ohsl/dataset_io.hpp"
#include "ohsl/error.hpp"
#include "ohsl/hash_model.hpp"
#include "ohsl/online_learner.hpp"
#include "ohsl/search.hpp"
#include "ohsl/target_codes.hpp"
#include "ohsl/types.hpp"

namespace ohsl {

struct Dataset {
  FeatureMatrix features;
  std::vector<LabelSet> labels;

  std::size_t size() const noexcept { return labels.size(); }
};

struct SynthConfig {
  std::size_t num_classes = 8;
  std::size_t dim = 64;
  std::size_t points = 0;
  std::size_t min_labels = 1;
  std::size_t max_labels = 3;
  double noise = 0.3;
  std::uint64_t seed = 0;
};

// splitmix64 finalizer; derives independent sub-seeds from one user seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Gaussian class prototypes with N(0, 1/dim) components (unit expected norm);
// each point sums the prototypes of 1..3 distinct labels and adds isotropic
// N(0, noise^2/dim) noise, so `noise` is the expected noise norm relative to
// one prototype.
inline Dataset synth_dataset(const SynthConfig& cfg, Eigen::MatrixXd* prototypes_out = nullptr) {
  OHSL_REQUIRE(cfg.num_classes >= 2, "synth_dataset: need at least two classes");
  OHSL_REQUIRE(cfg.dim >= 8, "synth_dataset: need dim >= 8");
  OHSL_REQUIRE(cfg.min_labels >= 1 && cfg.min_labels <= cfg.max_labels && cfg.max_labels <= cfg.num_classes,
               "synth_dataset: invalid labels-per-point range");
  OHSL_REQUIRE(cfg.noise >= 0.0, "synth_dataset: noise must be non-negative");
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto d = static_cast<Eigen::Index>(cfg.dim);
  const double unit = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
  Eigen::MatrixXd protos(static_cast<Eigen::Index>(cfg.num_classes), d);
  for (Eigen::Index c = 0; c < protos.rows(); ++c)
    for (Eigen::Index j = 0; j < d; ++j) protos(c, j) = unit * normal(rng);

  Dataset out;
  out.features = FeatureMatrix::Zero(static_cast<Eigen::Index>(cfg.points), d);
  out.labels.resize(cfg.points);
  std::uniform_int_distribution<std::size_t> count_dist(cfg.min_labels, cfg.max_labels);
  std::vector<ClassId> pool(cfg.num_classes);
  std::iota(pool.begin(), pool.end(), ClassId{0});
  for (std::size_t i = 0; i < cfg.points; ++i) {
    const std::size_t count = count_dist(rng);
    // Partial Fisher-Yates for `count` distinct labels.
    for (std::size_t k = 0; k < count; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
      std::swap(pool[k], pool[pick(rng)]);
    }
    LabelSet labels(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count));
    std::sort(labels.begin(), labels.end());
    auto row = out.features.row(static_cast<Eigen::Index>(i));
    for (ClassId c : labels) row += protos.row(c);
    if (cfg.noise > 0.0) {
      for (Eigen::Index j = 0; j < d; ++j) row[j] += cfg.noise * unit * normal(rng);
    }
    out.labels[i] = std::move(labels);
  }
  if (prototypes_out) *prototypes_out = protos;
  return out;
}

// First `num_queries` records become queries, the rest the database stream.
inline std::pair<Dataset, Dataset> split_queries(const Dataset& all, std::size_t num_queries) {
  OHSL_REQUIRE(num_queries <= all.size(), "split_queries: more queries than records");
  const auto q = static_cast<Eigen::Index>(num_queries);
  Dataset queries{all.features.topRows(q), {all.labels.begin(), all.labels.begin() + q}};
  Dataset rest{all.features.bottomRows(all.features.rows() - q), {all.labels.begin() + q, all.labels.end()}};
  return {std::move(rest), std::move(queries)};
}

inline bool shares_label(std::span<const ClassId> a, std::span<const ClassId> b) {
  // Both sorted.
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i == *j) return true;
    if (*i < *j) {
      ++i;
    } else {
      ++j;
    }
  }
  return false;
}

// Relevant iff the record shares at least one label with the query.
inline std::set<RecordId> ground_truth(const CodeDatabase& db, std::span<const ClassId> query_labels) {
  std::set<RecordId> out;
  for (std::size_t i = 0; i < db.size(); ++i) {
    if (shares_label(db.labels(i), query_labels)) out.insert(db.id(i));
  }
  return out;
}

// Full-ranking AP: mean over relevant items of precision at their rank,
// divided by the total number of relevant items. Empty relevant set gives 0.
inline double average_precision(std::span<const RecordId> ranking, const std::set<RecordId>& relevant) {
  if (relevant.empty()) return 0.0;
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < ranking.size(); ++r) {
    if (relevant.contains(ranking[r])) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  return sum / static_cast<double>(relevant.size());
}

// Same quantity from relevance flags in rank order.
inline double average_precision(const std::vector<bool>& relevance_by_rank, std::size_t total_relevant) {
  if (total_relevant == 0) return 0.0;
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < relevance_by_rank.size(); ++r) {
    if (relevance_by_rank[r]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  return sum / static_cast<double>(total_relevant);
}

enum class Engine { kScan, kMultiIndex, kHamming, kSymmetric };

// Fills scores[pos] for every database position; higher ranks first.
using ScoreFn = std::function<void(std::size_t query, std::vector<double>& scores)>;

struct MapReport {
  double map = 0.0;
  std::size_t evaluated_queries = 0;  // queries with a non-empty ground truth
  std::vector<double> per_query_ap;   // 0 for excluded queries
};

// Ranks the whole database for each query (ties by ascending id), truncated
// to `depth` when non-zero; AP still divides by the full relevant count.
inline MapReport mean_average_precision(const CodeDatabase& db, const std::vector<LabelSet>& query_labels,
                                        const ScoreFn& score_fn, std::size_t depth = 0) {
  MapReport rep;
  const std::size_t nq = query_labels.size();
  rep.per_query_ap.assign(nq, 0.0);
  std::vector<char> counted(nq, 0);
  const auto n = static_cast<std::ptrdiff_t>(db.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t qi = 0; qi < static_cast<std::ptrdiff_t>(nq); ++qi) {
    const auto q = static_cast<std::size_t>(qi);
    std::vector<double> scores(db.size());
    score_fn(q, scores);
    std::vector<std::uint32_t> order(db.size());
    std::iota(order.begin(), order.end(), 0U);
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
      return scores[a] > scores[b] || (scores[a] == scores[b] && db.id(a) < db.id(b));
    });
    std::size_t relevant = 0;
    for (std::ptrdiff_t i = 0; i < n; ++i) relevant += shares_label(db.labels(static_cast<std::size_t>(i)), query_labels[q]);
    if (relevant == 0) continue;
    const std::size_t limit = depth == 0 ? order.size() : std::min(depth, order.size());
    std::vector<bool> flags(limit);
    for (std::size_t r = 0; r < limit; ++r) flags[r] = shares_label(db.labels(order[r]), query_labels[q]);
    rep.per_query_ap[q] = average_precision(flags, relevant);
    counted[q] = 1;
  }
  double sum = 0.0;
  for (std::size_t q = 0; q < nq; ++q) {
    if (counted[q]) {
      sum += rep.per_query_ap[q];
      ++rep.evaluated_queries;
    }
  }
  rep.map = rep.evaluated_queries ? sum / static_cast<double>(rep.evaluated_queries) : 0.0;
  return rep;
}

// Learned similarity: asymmetric uses the raw query, symmetric its code.
inline ScoreFn similarity_scores(const CodeDatabase& db, const Eigen::MatrixXd& m, Variant variant,
                                 const FeatureMatrix& queries, const HashModel& hash) {
  return [&db, &m, variant, &queries, &hash](std::size_t q, std::vector<double>& scores) {
    const FeatureRef x = queries.row(static_cast<Eigen::Index>(q)).transpose();
    const QueryWeights w =
        variant == Variant::kSymmetric ? query_weights(m, hash.encode(x).to_signs()) : query_weights(m, x);
    for (std::size_t i = 0; i < db.size(); ++i) scores[i] = w.score(db.code_words(i));
  };
}

inline ScoreFn hamming_scores(const CodeDatabase& db, const FeatureMatrix& queries, const HashModel& hash) {
  return [&db, &queries, &hash](std::size_t q, std::vector<double>& scores) {
    const BinaryCode code = hash.encode(queries.row(static_cast<Eigen::Index>(q)).transpose());
    for (std::size_t i = 0; i < db.size(); ++i) scores[i] = -static_cast<double>(hamming(code.words(), db.code_words(i)));
  };
}

struct StreamConfig {
  std::size_t chunk_size = 1000;
  std::size_t init_sample = 300;
  std::size_t bits = 32;
  std::size_t target_length = 0;  // 0 means 3 * bits
  double aggressiveness = 0.01;
  NormExponent norm_exponent = NormExponent::kTwo;
  Variant variant = Variant::kAsymmetric;
  int itq_iterations = 50;
  std::vector<std::size_t> eval_schedule;  // point counts; evaluated against the full database
  bool hamming_baseline = false;           // also record plain-Hamming mAP at checkpoints
  double simulated_io_ms_per_point = 0.0;  // cost-model mode, e.g. 3.97
  std::uint64_t seed = 0;

  std::size_t resolved_target_length() const { return target_length == 0 ? 3 * bits : target_length; }
};

struct Checkpoint {
  std::size_t points = 0;
  std::size_t chunks = 0;  // completed chunks at this point
  double map = 0.0;
  std::optional<double> hamming_map;
  double cum_learn_ms = 0.0;
  double per_chunk_ms = 0.0;  // most recent completed chunk, 0 before the first
  double sim_io_ms = 0.0;
};

struct StreamResult {
  HashModel hash;
  SimilarityModel model;
  CodeDatabase db;
  std::vector<Checkpoint> timeline;
  std::vector<double> per_chunk_ms;
  std::vector<std::size_t> skipped_checkpoints;
};

inline TargetCodebook codebook_for(const std::vector<LabelSet>& labels, std::size_t length, std::uint64_t seed) {
  std::set<ClassId> classes;
  for (const auto& set : labels) classes.insert(set.begin(), set.end());
  if (classes.empty()) throw DataError("no class labels in the stream");
  const std::vector<ClassId> ids(classes.begin(), classes.end());
  return TargetCodebook::for_classes(ids, length, seed);
}

inline void check_stream_shapes(const Dataset& data, const Dataset& queries) {
  if (data.features.rows() != static_cast<Eigen::Index>(data.size())) throw DataError("stream: label/feature count mismatch");
  if (queries.features.rows() != static_cast<Eigen::Index>(queries.size())) {
    throw DataError("stream: query label/feature count mismatch");
  }
  if (queries.size() > 0 && queries.features.cols() != data.features.cols()) {
    throw DataError("stream: query dimension differs from stream dimension");
  }
}

// Encodes the stream into the database with a fixed hash, then feeds every
// point through the learner one at a time, chunk by chunk, evaluating at the
// scheduled point counts. cfg.bits and cfg.init_sample are not used here.
inline StreamResult run_stream_with_hash(const StreamConfig& cfg, HashModel hash, const Dataset& data,
                                         const Dataset& queries) {
  OHSL_REQUIRE(cfg.chunk_size >= 1, "run_stream: chunk size must be positive");
  check_stream_shapes(data, queries);
  if (data.size() > 0 && static_cast<std::size_t>(data.features.cols()) != hash.dim()) {
    throw CompatibilityError("stream: features have dimension " + std::to_string(data.features.cols()) +
                             ", hash model expects " + std::to_string(hash.dim()));
  }

  StreamResult res;
  res.hash = std::move(hash);
  const std::size_t bits = res.hash.bits();
  const std::size_t l = cfg.target_length == 0 ? 3 * bits : cfg.target_length;
  LearnerConfig lc{l, cfg.aggressiveness, cfg.norm_exponent, cfg.variant};
  res.model = SimilarityModel(lc, res.hash.dim(), bits, codebook_for(data.labels, l, derive_seed(cfg.seed, 2)));

  res.db = CodeDatabase(bits);
  for (std::size_t i = 0; i < data.size(); ++i) {
    res.db.append(i, res.hash.encode(data.features.row(static_cast<Eigen::Index>(i)).transpose()), data.labels[i]);
  }

  std::vector<std::size_t> schedule = cfg.eval_schedule;
  std::sort(schedule.begin(), schedule.end());
  schedule.erase(std::unique(schedule.begin(), schedule.end()), schedule.end());
  for (auto p : schedule)
    if (p > data.size()) res.skipped_checkpoints.push_back(p);
  std::erase_if(schedule, [&](std::size_t p) { return p > data.size(); });

  double cum_ms = 0.0;
  double chunk_ms = 0.0;
  double sim_io_ms = 0.0;
  std::size_t next = 0;
  auto evaluate = [&](std::size_t points) {
    Checkpoint cp;
    cp.points = points;
    cp.chunks = res.per_chunk_ms.size();
    cp.cum_learn_ms = cum_ms;
    cp.per_chunk_ms = res.per_chunk_ms.empty() ? 0.0 : res.per_chunk_ms.back();
    cp.sim_io_ms = sim_io_ms;
    if (queries.size() > 0) {
      const auto snap = res.model.snapshot();
      cp.map = mean_average_precision(res.db, queries.labels,
                                      similarity_scores(res.db, snap->m, snap->variant, queries.features, res.hash))
                   .map;
      if (cfg.hamming_baseline) {
        cp.hamming_map = mean_average_precision(res.db, queries.labels, hamming_scores(res.db, queries.features, res.hash)).map;
      }
    }
    res.timeline.push_back(cp);
  };

  while (next < schedule.size() && schedule[next] == 0) {
    evaluate(0);
    ++next;
  }
  using Clock = std::chrono::steady_clock;
  for (std::size_t start = 0; start < data.size(); start += cfg.chunk_size) {
    const std::size_t end = std::min(data.size(), start + cfg.chunk_size);
    chunk_ms = 0.0;
    for (std::size_t i = start; i < end; ++i) {
      const auto t0 = Clock::now();
      res.model.observe(data.features.row(static_cast<Eigen::Index>(i)).transpose(), data.labels[i], res.hash);
      const double ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
      chunk_ms += ms;
      cum_ms += ms;
      if (i + 1 == end) {
        res.per_chunk_ms.push_back(chunk_ms);
        sim_io_ms += cfg.simulated_io_ms_per_point * static_cast<double>(end - start);
      }
      while (next < schedule.size() && schedule[next] == i + 1) {
        evaluate(i + 1);
        ++next;
      }
    }
  }
  return res;
}

// Trains the hash functions on the first init_sample points, then streams.
inline StreamResult run_stream(const StreamConfig& cfg, const Dataset& data, const Dataset& queries) {
  OHSL_REQUIRE(cfg.init_sample >= cfg.bits, "run_stream: init sample must be at least the bit count");
  check_stream_shapes(data, queries);
  if (data.size() < cfg.init_sample) {
    throw DataError("run_stream: stream has " + std::to_string(data.size()) + " points, init sample needs " +
                    std::to_string(cfg.init_sample));
  }
  HashModel hash = train_itq(data.features.topRows(static_cast<Eigen::Index>(cfg.init_sample)), cfg.bits,
                             cfg.itq_iterations, derive_seed(cfg.seed, 1));
  return run_stream_with_hash(cfg, std::move(hash), data, queries);
}

inline double final_map(const StreamResult& res, const Dataset& queries, Engine engine = Engine::kScan) {
  if (engine == Engine::kHamming) {
    return mean_average_precision(res.db, queries.labels, hamming_scores(res.db, queries.features, res.hash)).map;
  }
  const auto snap = res.model.snapshot();
  return mean_average_precision(res.db, queries.labels,
                                similarity_scores(res.db, snap->m, snap->variant, queries.features, res.hash))
      .map;
}

struct VariantRow {
  std::string variant;  // "ohsl", "ohsl-sym", "hamming", "C", "l"
  double parameter = 0.0;
  double map = 0.0;
};

// Final mAP for the asymmetric learner, the symmetric learner, the plain
// Hamming baseline, a C sweep at l = b and an l sweep over 1x..4x b.
inline std::vector<VariantRow> compare_variants(const StreamConfig& cfg, const Dataset& data, const Dataset& queries) {
  std::vector<VariantRow> rows;
  StreamConfig base = cfg;
  base.eval_schedule.clear();
  base.hamming_baseline = false;

  const StreamResult asym = run_stream(base, data, queries);
  rows.push_back({"ohsl", 0.0, final_map(asym, queries)});
  rows.push_back({"hamming", 0.0, final_map(asym, queries, Engine::kHamming)});

  StreamConfig sym = base;
  sym.variant = Variant::kSymmetric;
  rows.push_back({"ohsl-sym", 0.0, final_map(run_stream(sym, data, queries), queries)});

  for (double c : {0.001, 0.01, 0.1, 1.0}) {
    StreamConfig v = base;
    v.aggressiveness = c;
    v.target_length = cfg.bits;
    rows.push_back({"C", c, final_map(run_stream(v, data, queries), queries)});
  }
  for (std::size_t mult = 1; mult <= 4; ++mult) {
    StreamConfig v = base;
    v.target_length = mult * cfg.bits;
    rows.push_back({"l", static_cast<double>(mult), final_map(run_stream(v, data, queries), queries)});
  }
  return rows;
}

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};

// Least squares y = slope * x + intercept over x = 0, 1, ...
inline LineFit fit_line(std::span<const double> ys) {
  const auto n = static_cast<double>(ys.size());
  if (ys.size() < 2) return {0.0, ys.empty() ? 0.0 : ys[0]};
  const double mean_x = (n - 1.0) / 2.0;
  const double mean_y = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    const double dx = static_cast<double>(i) - mean_x;
    sxy += dx * (ys[i] - mean_y);
    sxx += dx * dx;
  }
  const double slope = sxy / sxx;
  return {slope, mean_y - slope * mean_x};
}

struct CostProfile {
  std::vector<double> per_chunk_ms;
  double mean_ms = 0.0;
  LineFit fit;
};

inline CostProfile update_cost_profile(const StreamConfig& cfg, const Dataset& data) {
  CostProfile prof;
  if (data.size() == 0) return prof;
  StreamConfig c = cfg;
  c.eval_schedule.clear();
  const StreamResult res = run_stream(c, data, Dataset{});
  prof.per_chunk_ms = res.per_chunk_ms;
  prof.mean_ms = std::accumulate(prof.per_chunk_ms.begin(), prof.per_chunk_ms.end(), 0.0) /
                 static_cast<double>(prof.per_chunk_ms.size());
  prof.fit = fit_line(prof.per_chunk_ms);
  return prof;
}

}  // namespace ohsl
