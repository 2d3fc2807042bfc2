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

#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ohsl/binary_code.hpp"
#include "ohsl/binary_io.hpp"
#include "ohsl/error.hpp"
#include "ohsl/types.hpp"

namespace ohsl {

// Append-only store of packed codes with record ids and label sets. Codes
// are never rewritten once inserted. Labels are kept for evaluation only.
//
// Not internally synchronized: the appending thread publishes copies (or
// shared_ptr<const CodeDatabase>) to readers.
class CodeDatabase {
 public:
  CodeDatabase() = default;
  explicit CodeDatabase(std::size_t bits) : bits_(bits), words_(words_for_bits(bits)) {
    OHSL_REQUIRE(bits >= 1, "code database needs at least one bit");
  }

  std::size_t bits() const noexcept { return bits_; }
  std::size_t words_per_code() const noexcept { return words_; }
  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }

  void append(RecordId id, const BinaryCode& code, std::span<const ClassId> labels = {}) {
    if (code.bits() != bits_) {
      throw std::invalid_argument("append: code has " + std::to_string(code.bits()) + " bits, database holds " +
                                  std::to_string(bits_));
    }
    codes_.insert(codes_.end(), code.words().begin(), code.words().end());
    ids_.push_back(id);
    labels_.insert(labels_.end(), labels.begin(), labels.end());
    label_offsets_.push_back(labels_.size());
  }

  std::span<const std::uint64_t> code_words(std::size_t pos) const noexcept {
    return {codes_.data() + pos * words_, words_};
  }
  BinaryCode code(std::size_t pos) const { return BinaryCode(bits_, code_words(pos)); }
  RecordId id(std::size_t pos) const noexcept { return ids_[pos]; }
  std::span<const RecordId> ids() const noexcept { return ids_; }

  std::span<const ClassId> labels(std::size_t pos) const noexcept {
    return {labels_.data() + label_offsets_[pos], label_offsets_[pos + 1] - label_offsets_[pos]};
  }

  friend bool operator==(const CodeDatabase&, const CodeDatabase&) = default;

  // "OHDB" | u16 version | u64 n | u32 b | codes u64[n*words] | ids u64[n]
  // | label offsets u64[n+1] | labels u32[offsets[n]]
  static constexpr std::uint16_t kVersion = 1;

  void write(std::ostream& os) const {
    io::Writer w(os);
    w.magic("OHDB");
    w.u16(kVersion);
    w.u64(size());
    w.u32(static_cast<std::uint32_t>(bits_));
    for (auto word : codes_) w.u64(word);
    for (auto id : ids_) w.u64(id);
    for (auto off : label_offsets_) w.u64(off);
    for (auto label : labels_) w.u32(label);
    w.check();
  }

  static CodeDatabase read(std::istream& is, const std::string& source = "code database") {
    io::Reader r(is, source);
    r.expect_magic("OHDB");
    if (const auto ver = r.u16(); ver != kVersion) r.fail("unsupported version " + std::to_string(ver));
    const auto n = r.u64();
    const auto b = r.u32();
    if (b == 0) r.fail("zero bit count");
    CodeDatabase db(b);
    db.codes_.resize(n * db.words_);
    for (auto& word : db.codes_) word = r.u64();
    db.ids_.resize(n);
    for (auto& id : db.ids_) id = r.u64();
    db.label_offsets_.resize(n + 1);
    for (auto& off : db.label_offsets_) off = r.u64();
    if (db.label_offsets_.front() != 0) r.fail("label offsets must start at 0");
    for (std::size_t i = 0; i < n; ++i) {
      if (db.label_offsets_[i + 1] < db.label_offsets_[i]) r.fail("label offsets must be non-decreasing");
    }
    db.labels_.resize(db.label_offsets_.back());
    for (auto& label : db.labels_) label = r.u32();
    r.expect_eof();
    const std::size_t tail = b & 63;
    if (tail != 0) {
      for (std::size_t i = 0; i < n; ++i) {
        if ((db.codes_[(i + 1) * db.words_ - 1] >> tail) != 0) r.fail("nonzero padding bits in code");
      }
    }
    return db;
  }

 private:
  std::size_t bits_ = 0;
  std::size_t words_ = 0;
  std::vector<std::uint64_t> codes_;
  std::vector<RecordId> ids_;
  std::vector<std::uint64_t> label_offsets_{0};
  std::vector<ClassId> labels_;
};

}  // namespace ohsl
