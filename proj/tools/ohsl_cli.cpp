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

// ohsl: train hash functions, stream labelled points through the similarity
// learner, query and evaluate the resulting code database.

#include <zlib.h>

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ohsl/code_database.hpp"
#include "ohsl/dataset_io.hpp"
#include "ohsl/error.hpp"
#include "ohsl/eval.hpp"
#include "ohsl/hash_model.hpp"
#include "ohsl/online_learner.hpp"
#include "ohsl/search.hpp"

#ifndef OHSL_GIT_DESCRIBE
#define OHSL_GIT_DESCRIBE "unknown"
#endif

namespace {

using json = nlohmann::ordered_json;
using namespace ohsl;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitCompat = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint32_t file_crc32(const std::string& path, std::uint64_t* bytes) {
  auto in = io::open_in(path);
  uLong crc = crc32(0L, Z_NULL, 0);
  std::vector<char> buf(1 << 16);
  *bytes = 0;
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const auto got = in.gcount();
    if (got <= 0) break;
    crc = crc32(crc, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(got));
    *bytes += static_cast<std::uint64_t>(got);
  }
  return static_cast<std::uint32_t>(crc);
}

json file_entry(const std::string& path, const std::string& format, int version) {
  std::uint64_t bytes = 0;
  const auto crc = file_crc32(path, &bytes);
  char hex[9];
  std::snprintf(hex, sizeof(hex), "%08x", crc);
  json e{{"path", path}, {"format", format}};
  if (version > 0) e["version"] = version;
  e["bytes"] = bytes;
  e["crc32"] = hex;
  return e;
}

// One manifest per run, written next to the primary output.
class Manifest {
 public:
  explicit Manifest(std::string command) { doc_["command"] = std::move(command); }

  json& config() { return doc_["config"]; }
  json& seeds() { return doc_["seeds"]; }
  void input(const std::string& path, const std::string& format, int version = 0) {
    inputs_.push_back(file_entry(path, format, version));
  }
  void output(const std::string& path, const std::string& format, int version = 0) {
    outputs_.push_back(file_entry(path, format, version));
  }

  void write(const std::string& primary) {
    doc_["git_describe"] = OHSL_GIT_DESCRIBE;
    doc_["inputs"] = inputs_;
    doc_["outputs"] = outputs_;
    auto out = io::open_out(primary + ".manifest.json");
    out << doc_.dump(2) << '\n';
  }

 private:
  json doc_;
  json inputs_ = json::array();
  json outputs_ = json::array();
};

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <class Fn>
void write_file(const std::string& path, Fn&& fn) {
  auto out = io::open_out(path);
  fn(out);
  out.flush();
  if (!out) throw DataError("write to '" + path + "' failed");
}

HashModel load_hash(const std::string& path) {
  auto in = io::open_in(path);
  return read_hash_model(in, path);
}

SimilarityModel load_similarity(const std::string& path) {
  auto in = io::open_in(path);
  return SimilarityModel::read(in, path);
}

CodeDatabase load_db(const std::string& path) {
  auto in = io::open_in(path);
  return CodeDatabase::read(in, path);
}

void require_feature_dim(const FeatureMatrix& x, std::size_t dim, const std::string& what) {
  if (x.rows() > 0 && static_cast<std::size_t>(x.cols()) != dim) {
    throw CompatibilityError(what + " have dimension " + std::to_string(x.cols()) + ", model expects " +
                             std::to_string(dim));
  }
}

// ---- init-hash ---------------------------------------------------------

struct InitHashArgs {
  std::string features;
  std::string out;
  std::size_t bits = 32;
  std::size_t sample = 300;
  int iterations = 50;
  std::uint64_t seed = 0;
};

int cmd_init_hash(const InitHashArgs& a) {
  const FeatureMatrix x = load_features(a.features);
  if (a.sample > static_cast<std::size_t>(x.rows())) {
    throw DataError(a.features + ": --sample " + std::to_string(a.sample) + " exceeds the " +
                    std::to_string(x.rows()) + " records in the file");
  }
  const HashModel model =
      train_itq(x.topRows(static_cast<Eigen::Index>(a.sample)), a.bits, a.iterations, derive_seed(a.seed, 1));
  write_file(a.out, [&](std::ostream& os) { write_hash_model(os, model); });

  Manifest m("init-hash");
  m.config() = {{"bits", a.bits}, {"sample", a.sample}, {"iterations", a.iterations}};
  m.seeds() = {{"seed", a.seed}, {"rotation", derive_seed(a.seed, 1)}};
  m.input(a.features, "features");
  m.output(a.out, "OHSL", kHashModelVersion);
  m.write(a.out);
  return kExitOk;
}

// ---- stream ------------------------------------------------------------

struct StreamArgs {
  std::string features, labels, hash_model, out_model, out_db;
  std::string metrics;
  std::string queries, query_labels;
  double c = 0.01;
  std::size_t l_mult = 3;
  std::size_t chunk = 1000;
  std::size_t eval_every = 0;
  int norm_exponent = 2;
  bool symmetric = false;
  bool hamming_baseline = false;
  double simulate_io = -1.0;
  std::uint64_t seed = 0;
};

int cmd_stream(StreamArgs a) {
  if (a.queries.empty() != a.query_labels.empty()) throw UsageError("--queries and --query-labels go together");
  if (a.metrics.empty()) a.metrics = a.out_model + ".metrics";

  Dataset data{load_features(a.features), load_labels(a.labels)};
  if (data.labels.empty()) throw DataError(a.labels + ": label file is empty");
  if (static_cast<std::size_t>(data.features.rows()) != data.labels.size()) {
    throw DataError("label/feature count mismatch: " + std::to_string(data.labels.size()) + " label lines, " +
                    std::to_string(data.features.rows()) + " feature records");
  }
  Dataset queries;
  if (!a.queries.empty()) {
    queries = Dataset{load_features(a.queries), load_labels(a.query_labels)};
    if (static_cast<std::size_t>(queries.features.rows()) != queries.labels.size()) {
      throw DataError("query label/feature count mismatch");
    }
  }
  HashModel hash = load_hash(a.hash_model);
  require_feature_dim(data.features, hash.dim(), "stream features");
  require_feature_dim(queries.features, hash.dim(), "query features");

  StreamConfig cfg;
  cfg.chunk_size = a.chunk;
  cfg.target_length = a.l_mult * hash.bits();
  cfg.aggressiveness = a.c;
  cfg.norm_exponent = a.norm_exponent == 1 ? NormExponent::kOne : NormExponent::kTwo;
  cfg.variant = a.symmetric ? Variant::kSymmetric : Variant::kAsymmetric;
  cfg.hamming_baseline = a.hamming_baseline && queries.size() > 0;
  cfg.simulated_io_ms_per_point = a.simulate_io < 0.0 ? 0.0 : a.simulate_io;
  cfg.seed = a.seed;
  const std::size_t every = a.eval_every == 0 ? a.chunk : a.eval_every;
  cfg.eval_schedule.push_back(0);
  for (std::size_t p = every; p < data.size(); p += every) cfg.eval_schedule.push_back(p);
  cfg.eval_schedule.push_back(data.size());

  const StreamResult res = run_stream_with_hash(cfg, std::move(hash), data, queries);

  write_file(a.out_model, [&](std::ostream& os) { res.model.write(os); });
  write_file(a.out_db, [&](std::ostream& os) { res.db.write(os); });
  const bool scored = queries.size() > 0;
  const std::string jsonl = a.metrics + ".jsonl";
  const std::string tsv = a.metrics + ".tsv";
  write_file(jsonl, [&](std::ostream& os) {
    for (const auto& cp : res.timeline) {
      json row{{"checkpoint", cp.points}, {"chunks", cp.chunks}};
      row["map"] = scored ? json(cp.map) : json(nullptr);
      if (cp.hamming_map) row["hamming_map"] = *cp.hamming_map;
      row["cum_learn_ms"] = cp.cum_learn_ms;
      row["per_chunk_ms"] = cp.per_chunk_ms;
      if (a.simulate_io >= 0.0) row["sim_io_ms"] = cp.sim_io_ms;
      os << row.dump() << '\n';
    }
  });
  write_file(tsv, [&](std::ostream& os) {
    os << "points\tchunks\tmap\thamming_map\tcum_learn_ms\tper_chunk_ms\tsim_io_ms\n";
    for (const auto& cp : res.timeline) {
      os << cp.points << '\t' << cp.chunks << '\t' << (scored ? fmt17(cp.map) : "nan") << '\t'
         << (cp.hamming_map ? fmt17(*cp.hamming_map) : "nan") << '\t' << fmt17(cp.cum_learn_ms) << '\t'
         << fmt17(cp.per_chunk_ms) << '\t' << fmt17(cp.sim_io_ms) << '\n';
    }
  });

  Manifest m("stream");
  m.config() = {{"C", a.c},
                {"l_mult", a.l_mult},
                {"target_length", cfg.target_length},
                {"chunk", a.chunk},
                {"eval_every", every},
                {"pa_norm_exponent", a.norm_exponent},
                {"variant", a.symmetric ? "symmetric" : "asymmetric"},
                {"simulate_io_ms_per_point", cfg.simulated_io_ms_per_point}};
  m.seeds() = {{"seed", a.seed}, {"codebook", derive_seed(a.seed, 2)}};
  m.input(a.features, "features");
  m.input(a.labels, "labels");
  m.input(a.hash_model, "OHSL", kHashModelVersion);
  if (scored) {
    m.input(a.queries, "features");
    m.input(a.query_labels, "labels");
  }
  m.output(a.out_model, "OHSM", SimilarityModel::kVersion);
  m.output(a.out_db, "OHDB", CodeDatabase::kVersion);
  m.output(jsonl, "metrics-jsonl");
  m.output(tsv, "metrics-tsv");
  m.write(a.out_model);

  if (scored && !res.timeline.empty()) std::cout << "final mAP " << fmt17(res.timeline.back().map) << '\n';
  return kExitOk;
}

// ---- shared query plumbing ----------------------------------------------

struct EngineSetup {
  Engine engine = Engine::kScan;
  std::optional<HashModel> hash;
  std::optional<SimilarityModel> model;
};

Engine parse_engine(const std::string& name) {
  if (name == "scan") return Engine::kScan;
  if (name == "multi-index") return Engine::kMultiIndex;
  if (name == "hamming") return Engine::kHamming;
  return Engine::kSymmetric;
}

// Loads the models an engine needs and checks them against the database and
// the query features. The hamming engine never reads the similarity model.
EngineSetup setup_engine(const std::string& engine_name, const std::string& sim_path, const std::string& hash_path,
                         const CodeDatabase& db, const FeatureMatrix& queries) {
  EngineSetup s;
  s.engine = parse_engine(engine_name);
  if (s.engine != Engine::kHamming) s.model = load_similarity(sim_path);
  const bool needs_hash = s.engine == Engine::kHamming || s.engine == Engine::kSymmetric ||
                          (s.model && s.model->variant() == Variant::kSymmetric);
  if (needs_hash) {
    if (hash_path.empty()) throw UsageError("--hash-model is required to encode queries for this engine/model");
    s.hash = load_hash(hash_path);
    if (s.hash->bits() != db.bits()) {
      throw CompatibilityError("hash model has " + std::to_string(s.hash->bits()) + " bits, database has " +
                               std::to_string(db.bits()));
    }
    require_feature_dim(queries, s.hash->dim(), "query features");
  }
  if (s.model) {
    if (s.model->bits() != db.bits()) {
      throw CompatibilityError("similarity model has " + std::to_string(s.model->bits()) + " bits, database has " +
                               std::to_string(db.bits()));
    }
    if (s.engine == Engine::kSymmetric && s.model->m().rows() != s.model->m().cols()) {
      throw CompatibilityError("sym engine needs a square (code-by-code) similarity model; this one is " +
                               std::to_string(s.model->m().rows()) + "x" + std::to_string(s.model->m().cols()));
    }
    if (s.model->variant() == Variant::kAsymmetric) require_feature_dim(queries, s.model->feature_dim(), "query features");
    if (s.hash && s.hash->dim() != s.model->feature_dim()) {
      throw CompatibilityError("hash model and similarity model disagree on feature dimension");
    }
  }
  return s;
}

QueryWeights weights_for(const EngineSetup& s, FeatureRef x) {
  if (s.model->variant() == Variant::kSymmetric) return query_weights(s.model->m(), s.hash->encode(x).to_signs());
  return query_weights(s.model->m(), x);
}

// ---- query -------------------------------------------------------------

struct QueryArgs {
  std::string db, sim_model, queries, hash_model, out;
  std::string engine = "scan";
  std::size_t k = 10;
  std::size_t tables = 0;
};

int cmd_query(const QueryArgs& a) {
  const CodeDatabase db = load_db(a.db);
  const FeatureMatrix q = load_features(a.queries);
  const EngineSetup s = setup_engine(a.engine, a.sim_model, a.hash_model, db, q);

  std::ostringstream os;
  if (a.k > 0) {
    std::optional<MultiIndex> index;
    if (s.engine == Engine::kMultiIndex && !db.empty()) {
      index.emplace(db, a.tables == 0 ? default_num_tables(db.bits()) : a.tables);
    }
    os << "rank\tid\tscore\n";
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
      const FeatureRef x = q.row(i).transpose();
      std::vector<Scored> top;
      switch (s.engine) {
        case Engine::kHamming:
          top = hamming_topk(s.hash->encode(x), db, a.k);
          break;
        case Engine::kMultiIndex:
          if (index) top = multi_index_topk(*index, weights_for(s, x), a.k);
          break;
        case Engine::kSymmetric:
          top = linear_scan_topk(query_weights(s.model->m(), s.hash->encode(x).to_signs()), db, a.k);
          break;
        case Engine::kScan:
          top = linear_scan_topk(weights_for(s, x), db, a.k);
          break;
      }
      os << "# query " << i << '\n';
      for (std::size_t r = 0; r < top.size(); ++r) os << r + 1 << '\t' << top[r].id << '\t' << fmt17(top[r].score) << '\n';
    }
  }

  if (a.out.empty()) {
    std::cout << os.str();
    return kExitOk;
  }
  write_file(a.out, [&](std::ostream& f) { f << os.str(); });
  Manifest m("query");
  m.config() = {{"engine", a.engine}, {"k", a.k}, {"tables", a.tables}};
  m.seeds() = json::object();
  m.input(a.db, "OHDB", CodeDatabase::kVersion);
  if (s.model) m.input(a.sim_model, "OHSM", SimilarityModel::kVersion);
  if (s.hash) m.input(a.hash_model, "OHSL", kHashModelVersion);
  m.input(a.queries, "features");
  m.output(a.out, "results-tsv");
  m.write(a.out);
  return kExitOk;
}

// ---- eval --------------------------------------------------------------

struct EvalArgs {
  std::string db, sim_model, queries, query_labels, hash_model, out;
  std::string engine = "scan";
  std::size_t k = 0;
};

int cmd_eval(const EvalArgs& a) {
  const CodeDatabase db = load_db(a.db);
  const FeatureMatrix q = load_features(a.queries);
  const auto labels = load_labels(a.query_labels);
  if (static_cast<std::size_t>(q.rows()) != labels.size()) throw DataError("query label/feature count mismatch");
  const EngineSetup s = setup_engine(a.engine, a.sim_model, a.hash_model, db, q);

  ScoreFn fn;
  if (s.engine == Engine::kHamming) {
    fn = hamming_scores(db, q, *s.hash);
  } else {
    // Multi-index search is exact, so ranking the whole database by the
    // weighted score evaluates scan and multi-index alike.
    fn = [&](std::size_t i, std::vector<double>& scores) {
      const FeatureRef x = q.row(static_cast<Eigen::Index>(i)).transpose();
      const QueryWeights w = s.engine == Engine::kSymmetric
                                 ? query_weights(s.model->m(), s.hash->encode(x).to_signs())
                                 : weights_for(s, x);
      for (std::size_t j = 0; j < db.size(); ++j) scores[j] = w.score(db.code_words(j));
    };
  }
  const MapReport rep = mean_average_precision(db, labels, fn, a.k);

  json report{{"engine", a.engine},
              {"depth", a.k},
              {"queries", labels.size()},
              {"evaluated_queries", rep.evaluated_queries},
              {"map", rep.map}};
  std::cout << report.dump(2) << '\n';
  if (!a.out.empty()) {
    write_file(a.out, [&](std::ostream& f) { f << report.dump(2) << '\n'; });
    Manifest m("eval");
    m.config() = {{"engine", a.engine}, {"k", a.k}};
    m.seeds() = json::object();
    m.input(a.db, "OHDB", CodeDatabase::kVersion);
    if (s.model) m.input(a.sim_model, "OHSM", SimilarityModel::kVersion);
    if (s.hash) m.input(a.hash_model, "OHSL", kHashModelVersion);
    m.input(a.queries, "features");
    m.input(a.query_labels, "labels");
    m.output(a.out, "eval-json");
    m.write(a.out);
  }
  return kExitOk;
}

// ---- synth -------------------------------------------------------------

struct SynthArgs {
  std::string prefix;
  SynthConfig cfg;
  std::size_t queries = 400;
  bool csv = false;
};

int cmd_synth(SynthArgs a) {
  const std::size_t db_points = a.cfg.points;
  a.cfg.points = db_points + a.queries;
  const auto [db, q] = split_queries(synth_dataset(a.cfg), a.queries);
  const std::string ext = a.csv ? ".csv" : ".ohfv";
  const std::string db_x = a.prefix + ".db" + ext, db_l = a.prefix + ".db.labels";
  const std::string q_x = a.prefix + ".q" + ext, q_l = a.prefix + ".q.labels";
  auto save = [&](const std::string& path, const FeatureMatrix& x) {
    if (a.csv) {
      write_file(path, [&](std::ostream& os) { write_features_csv(os, x); });
    } else {
      save_features(path, x);
    }
  };
  save(db_x, db.features);
  save_labels(db_l, db.labels);
  save(q_x, q.features);
  save_labels(q_l, q.labels);

  Manifest m("synth");
  m.config() = {{"points", db_points},   {"queries", a.queries},     {"classes", a.cfg.num_classes},
                {"dim", a.cfg.dim},      {"noise", a.cfg.noise},     {"min_labels", a.cfg.min_labels},
                {"max_labels", a.cfg.max_labels}, {"format", a.csv ? "csv" : "ohfv"}};
  m.seeds() = {{"seed", a.cfg.seed}};
  m.output(db_x, a.csv ? "features-csv" : "OHFV");
  m.output(db_l, "labels");
  m.output(q_x, a.csv ? "features-csv" : "OHFV");
  m.output(q_l, "labels");
  m.write(db_x);
  return kExitOk;
}

// ---- bench -------------------------------------------------------------

struct BenchArgs {
  std::string prefix;
  SynthConfig data;
  std::size_t queries = 400;
  std::size_t seeds = 3;
  std::size_t bits = 32;
  std::size_t chunk = 1000;
  std::size_t cost_chunks = 50;
  double simulate_io = -1.0;
  std::uint64_t seed = 0;
};

int cmd_bench(const BenchArgs& a) {
  const std::string variants_tsv = a.prefix + ".variants.tsv";
  const std::string cost_tsv = a.prefix + ".cost.tsv";
  std::ostringstream vt;
  vt << "seed\tvariant\tparameter\tmap\n";
  for (std::size_t s = 0; s < a.seeds; ++s) {
    const std::uint64_t seed = derive_seed(a.seed, 100 + s);
    SynthConfig dc = a.data;
    dc.points = a.data.points + a.queries;
    dc.seed = derive_seed(seed, 3);
    const auto [db, q] = split_queries(synth_dataset(dc), a.queries);
    StreamConfig cfg;
    cfg.bits = a.bits;
    cfg.chunk_size = a.chunk;
    cfg.seed = seed;
    for (const auto& row : compare_variants(cfg, db, q)) {
      vt << s << '\t' << row.variant << '\t' << fmt17(row.parameter) << '\t' << fmt17(row.map) << '\n';
    }
    std::cerr << "seed " << s + 1 << "/" << a.seeds << " done\n";
  }
  write_file(variants_tsv, [&](std::ostream& os) { os << vt.str(); });

  SynthConfig dc = a.data;
  dc.points = a.cost_chunks * a.chunk;
  dc.seed = derive_seed(a.seed, 4);
  StreamConfig cfg;
  cfg.bits = a.bits;
  cfg.chunk_size = a.chunk;
  cfg.seed = a.seed;
  cfg.simulated_io_ms_per_point = a.simulate_io < 0.0 ? 0.0 : a.simulate_io;
  const CostProfile prof = update_cost_profile(cfg, synth_dataset(dc));
  write_file(cost_tsv, [&](std::ostream& os) {
    os << "chunk\tlearn_ms\tsim_io_ms\n";
    for (std::size_t i = 0; i < prof.per_chunk_ms.size(); ++i) {
      os << i << '\t' << fmt17(prof.per_chunk_ms[i]) << '\t'
         << fmt17(cfg.simulated_io_ms_per_point * static_cast<double>(a.chunk)) << '\n';
    }
  });
  std::cout << "per-chunk learner cost: mean " << fmt17(prof.mean_ms) << " ms, slope " << fmt17(prof.fit.slope)
            << " ms/chunk\n";

  Manifest m("bench");
  m.config() = {{"points", a.data.points}, {"queries", a.queries}, {"classes", a.data.num_classes},
                {"dim", a.data.dim},       {"noise", a.data.noise}, {"bits", a.bits},
                {"chunk", a.chunk},        {"cost_chunks", a.cost_chunks}, {"runs", a.seeds}};
  m.seeds() = {{"seed", a.seed}};
  m.output(variants_tsv, "variants-tsv");
  m.output(cost_tsv, "cost-tsv");
  m.write(variants_tsv);
  return kExitOk;
}

void add_synth_data_options(CLI::App* sub, SynthConfig& cfg, std::size_t& queries) {
  sub->add_option("--points", cfg.points, "database points")->capture_default_str();
  sub->add_option("--queries", queries, "query points")->capture_default_str();
  sub->add_option("--classes", cfg.num_classes, "number of classes")->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_option("--dim", cfg.dim, "feature dimension")->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_option("--noise", cfg.noise, "noise scale relative to the prototype scale")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  sub->add_option("--min-labels", cfg.min_labels, "fewest labels per point")->capture_default_str();
  sub->add_option("--max-labels", cfg.max_labels, "most labels per point")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online supervised hashing: hash training, streaming similarity learning, retrieval"};
  app.require_subcommand(1);
  app.set_version_flag("--version", OHSL_GIT_DESCRIBE);
  std::function<int()> run;

  InitHashArgs ih;
  auto* init = app.add_subcommand("init-hash", "train PCA-ITQ hash functions on the first records of a feature file");
  init->add_option("features", ih.features, "feature file (OHFV binary or CSV)")->required();
  init->add_option("out", ih.out, "output hash model (OHSL)")->required();
  init->add_option("--bits", ih.bits, "code length b")->capture_default_str()->check(CLI::PositiveNumber);
  init->add_option("--sample", ih.sample, "number of leading records to train on")->capture_default_str();
  init->add_option("--iterations", ih.iterations, "ITQ rotation iterations")->capture_default_str()->check(CLI::NonNegativeNumber);
  init->add_option("--seed", ih.seed, "random seed")->capture_default_str();
  init->callback([&] { run = [&] { return cmd_init_hash(ih); }; });

  StreamArgs st;
  auto* stream = app.add_subcommand("stream", "encode a labelled stream and learn the similarity online, chunk by chunk");
  stream->add_option("features", st.features, "stream feature file")->required();
  stream->add_option("labels", st.labels, "stream label file, one line per record")->required();
  stream->add_option("hash_model", st.hash_model, "hash model from init-hash")->required();
  stream->add_option("out_model", st.out_model, "output similarity model (OHSM)")->required();
  stream->add_option("out_db", st.out_db, "output code database (OHDB)")->required();
  stream->add_option("--C", st.c, "aggressiveness")->capture_default_str()->check(CLI::PositiveNumber);
  stream->add_option("--l-mult", st.l_mult, "target code length as a multiple of b")->capture_default_str()->check(CLI::PositiveNumber);
  stream->add_option("--chunk", st.chunk, "points per chunk")->capture_default_str()->check(CLI::PositiveNumber);
  stream->add_option("--pa-norm-exponent", st.norm_exponent, "step denominator uses |x|^e (1 or 2)")
      ->capture_default_str()
      ->check(CLI::IsMember({1, 2}));
  stream->add_flag("--symmetric", st.symmetric, "learn on query codes instead of raw query features");
  stream->add_option("--simulate-io", st.simulate_io, "add a per-point transfer cost (ms) to the timeline, e.g. 3.97")
      ->check(CLI::NonNegativeNumber);
  stream->add_option("--queries", st.queries, "query features for checkpoint mAP");
  stream->add_option("--query-labels", st.query_labels, "query labels for checkpoint mAP");
  stream->add_option("--eval-every", st.eval_every, "checkpoint spacing in points (default: one chunk)");
  stream->add_flag("--hamming-baseline", st.hamming_baseline, "also record plain Hamming mAP at checkpoints");
  stream->add_option("--metrics", st.metrics, "metrics path prefix (default: <out_model>.metrics)");
  stream->add_option("--seed", st.seed, "random seed")->capture_default_str();
  stream->callback([&] { run = [&] { return cmd_stream(st); }; });

  const auto engines = CLI::IsMember({"scan", "multi-index", "hamming", "sym"});
  QueryArgs qa;
  auto* query = app.add_subcommand("query", "top-k retrieval, TSV rows rank<TAB>id<TAB>score per query");
  query->add_option("db", qa.db, "code database")->required();
  query->add_option("sim_model", qa.sim_model, "similarity model (not read by the hamming engine)")->required();
  query->add_option("queries", qa.queries, "query feature file")->required();
  query->add_option("-k,--k", qa.k, "results per query; 0 prints nothing")->capture_default_str();
  query->add_option("--engine", qa.engine, "scan | multi-index | hamming | sym")->capture_default_str()->check(engines);
  query->add_option("--hash-model", qa.hash_model, "hash model, needed by hamming, sym and symmetric models");
  query->add_option("--tables", qa.tables, "multi-index table count (default: about b/8)");
  query->add_option("-o,--out", qa.out, "write results here (with a manifest) instead of stdout");
  query->callback([&] { run = [&] { return cmd_query(qa); }; });

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "mean average precision of a database against labelled queries");
  eval->add_option("db", ev.db, "code database")->required();
  eval->add_option("sim_model", ev.sim_model, "similarity model (not read by the hamming engine)")->required();
  eval->add_option("queries", ev.queries, "query feature file")->required();
  eval->add_option("query_labels", ev.query_labels, "query label file")->required();
  eval->add_option("-k,--k", ev.k, "ranking depth; 0 ranks the whole database")->capture_default_str();
  eval->add_option("--engine", ev.engine, "scan | multi-index | hamming | sym")->capture_default_str()->check(engines);
  eval->add_option("--hash-model", ev.hash_model, "hash model, needed by hamming, sym and symmetric models");
  eval->add_option("-o,--out", ev.out, "also write the JSON report here (with a manifest)");
  eval->callback([&] { run = [&] { return cmd_eval(ev); }; });

  SynthArgs sy;
  sy.cfg.points = 20000;
  auto* synth = app.add_subcommand("synth", "write a synthetic multi-label dataset: <prefix>.db.*, <prefix>.q.*");
  synth->add_option("prefix", sy.prefix, "output path prefix")->required();
  add_synth_data_options(synth, sy.cfg, sy.queries);
  synth->add_option("--seed", sy.cfg.seed, "random seed")->capture_default_str();
  synth->add_flag("--csv", sy.csv, "write features as CSV instead of OHFV");
  synth->callback([&] { run = [&] { return cmd_synth(sy); }; });

  BenchArgs be;
  be.data.points = 20000;
  be.data.noise = 2.0;
  auto* bench = app.add_subcommand("bench", "variant comparison and per-chunk cost profile on synthetic data");
  bench->add_option("prefix", be.prefix, "output path prefix")->required();
  add_synth_data_options(bench, be.data, be.queries);
  bench->add_option("--runs", be.seeds, "number of seeds for the variant comparison")->capture_default_str();
  bench->add_option("--bits", be.bits, "code length b")->capture_default_str()->check(CLI::PositiveNumber);
  bench->add_option("--chunk", be.chunk, "points per chunk")->capture_default_str()->check(CLI::PositiveNumber);
  bench->add_option("--cost-chunks", be.cost_chunks, "chunks in the cost profile stream")->capture_default_str();
  bench->add_option("--simulate-io", be.simulate_io, "per-point transfer cost (ms) reported beside learner time")
      ->check(CLI::NonNegativeNumber);
  bench->add_option("--seed", be.seed, "random seed")->capture_default_str();
  bench->callback([&] { run = [&] { return cmd_bench(be); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    return run();
  } catch (const CompatibilityError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCompat;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
