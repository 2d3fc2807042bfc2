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

// Feature and label files.
//
// Features: binary "OHFV" | u64 n | u32 D | f32[n*D] row-major, or CSV with
// one comma-separated row of numbers per record. Labels: one line per record
// holding comma-separated class ids; an empty line means no labels.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ohsl/binary_io.hpp"
#include "ohsl/error.hpp"
#include "ohsl/types.hpp"

namespace ohsl {

using LabelSet = std::vector<ClassId>;

inline void write_features_binary(std::ostream& os, const FeatureMatrix& x) {
  io::Writer w(os);
  w.magic("OHFV");
  w.u64(static_cast<std::uint64_t>(x.rows()));
  w.u32(static_cast<std::uint32_t>(x.cols()));
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) w.f32(static_cast<float>(x(i, j)));
  w.check();
}

inline FeatureMatrix read_features_binary(std::istream& is, const std::string& source) {
  io::Reader r(is, source);
  r.expect_magic("OHFV");
  const auto n = r.u64();
  const auto d = r.u32();
  if (d == 0) r.fail("feature dimension is zero");
  FeatureMatrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const float v = r.f32();
      if (!std::isfinite(v)) r.fail("non-finite feature value in record " + std::to_string(i));
      x(i, j) = v;
    }
  }
  r.expect_eof();
  return x;
}

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace detail

inline FeatureMatrix read_features_csv(std::istream& is, const std::string& source) {
  std::vector<double> values;
  std::size_t dim = 0;
  std::size_t rows = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_commas(line);
    if (rows == 0) {
      dim = fields.size();
    } else if (fields.size() != dim) {
      throw DataError(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(dim) + " values, got " +
                      std::to_string(fields.size()));
    }
    for (auto field : fields) {
      const std::string token(detail::trim(field));
      char* end = nullptr;
      const double v = std::strtod(token.c_str(), &end);
      if (token.empty() || end != token.c_str() + token.size() || !std::isfinite(v)) {
        throw DataError(source + ":" + std::to_string(line_no) + ": bad feature value '" + token + "'");
      }
      values.push_back(v);
    }
    ++rows;
  }
  FeatureMatrix x(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
  std::copy(values.begin(), values.end(), x.data());
  return x;
}

inline void write_features_csv(std::ostream& os, const FeatureMatrix& x) {
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      char buf[32];
      const auto res = std::to_chars(buf, buf + sizeof(buf), x(i, j));
      if (j) os << ',';
      os.write(buf, res.ptr - buf);
    }
    os << '\n';
  }
}

// Binary if the file starts with the "OHFV" magic, CSV otherwise.
inline FeatureMatrix load_features(const std::string& path) {
  auto in = io::open_in(path);
  char head[4] = {};
  in.read(head, 4);
  const bool binary = in.gcount() == 4 && std::string_view(head, 4) == "OHFV";
  in.clear();
  in.seekg(0);
  return binary ? read_features_binary(in, path) : read_features_csv(in, path);
}

inline void save_features(const std::string& path, const FeatureMatrix& x) {
  auto out = io::open_out(path);
  write_features_binary(out, x);
}

// Class ids within a line are returned sorted and de-duplicated.
inline std::vector<LabelSet> read_labels(std::istream& is, const std::string& source) {
  std::vector<LabelSet> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    LabelSet labels;
    if (!detail::trim(line).empty()) {
      for (auto field : detail::split_commas(line)) {
        const auto tok = detail::trim(field);
        ClassId id = 0;
        const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), id);
        if (tok.empty() || res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
          throw DataError(source + ":" + std::to_string(line_no) + ": bad class id '" + std::string(tok) + "'");
        }
        labels.push_back(id);
      }
      std::sort(labels.begin(), labels.end());
      labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    }
    out.push_back(std::move(labels));
  }
  return out;
}

inline std::vector<LabelSet> load_labels(const std::string& path) {
  auto in = io::open_in(path);
  return read_labels(in, path);
}

inline void write_labels(std::ostream& os, const std::vector<LabelSet>& labels) {
  for (const auto& set : labels) {
    for (std::size_t i = 0; i < set.size(); ++i) os << (i ? "," : "") << set[i];
    os << '\n';
  }
}

inline void save_labels(const std::string& path, const std::vector<LabelSet>& labels) {
  auto out = io::open_out(path);
  write_labels(out, labels);
}

}  // namespace ohsl
