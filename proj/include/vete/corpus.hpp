// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "vete/common.hpp"
#include "vete/rng.hpp"

namespace vete {

inline const std::string kSentenceStart = "<S>";
inline const std::string kSentenceEnd = "</S>";
inline const std::string kUnknown = "<UNK>";

struct CaptionRecord {
  std::string image_id;
  std::string caption;
};

// A tokenized caption: lowercase tokens wrapped in <S> ... </S>.
using TokenSequence = std::vector<std::string>;

namespace detail {

inline bool is_detachable_punct(char c) {
  static const std::string punct = ".,!?;:\"'()";
  return punct.find(c) != std::string::npos;
}

}  // namespace detail

// Lowercase, split on whitespace, detach leading/trailing punctuation
// (.,!?;:"'()) as separate tokens, wrap with <S>/</S>.
inline TokenSequence tokenize(const std::string& raw) {
  TokenSequence out;
  out.push_back(kSentenceStart);
  std::size_t i = 0;
  const std::size_t n = raw.size();
  std::size_t content = 0;
  while (i < n) {
    while (i < n && std::isspace(static_cast<unsigned char>(raw[i]))) ++i;
    if (i >= n) break;
    std::size_t j = i;
    while (j < n && !std::isspace(static_cast<unsigned char>(raw[j]))) ++j;
    std::string word = raw.substr(i, j - i);
    for (char& c : word) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    i = j;

    std::size_t lo = 0, hi = word.size();
    while (lo < hi && detail::is_detachable_punct(word[lo])) {
      out.push_back(std::string(1, word[lo]));
      ++content;
      ++lo;
    }
    std::vector<char> tail;
    while (hi > lo && detail::is_detachable_punct(word[hi - 1])) {
      tail.push_back(word[hi - 1]);
      --hi;
    }
    if (hi > lo) {
      out.push_back(word.substr(lo, hi - lo));
      ++content;
    }
    for (auto it = tail.rbegin(); it != tail.rend(); ++it) {
      out.push_back(std::string(1, *it));
      ++content;
    }
  }
  if (content == 0) {
    throw EmptyCaption("caption has no tokens: '" + raw + "'");
  }
  out.push_back(kSentenceEnd);
  return out;
}

// Keeps the first caption seen for each image id, preserving order.
inline std::vector<CaptionRecord> filter_one_caption_per_image(
    const std::vector<CaptionRecord>& records) {
  std::vector<CaptionRecord> out;
  std::unordered_set<std::string> seen;
  out.reserve(records.size());
  for (const auto& rec : records) {
    if (seen.insert(rec.image_id).second) out.push_back(rec);
  }
  return out;
}

class Vocabulary {
 public:
  Vocabulary() = default;

  // Tokens occurring >= min_count plus the three special tokens. Ids are
  // assigned by descending frequency, ties broken lexicographically.
  static Vocabulary build(const std::vector<TokenSequence>& sequences, int min_count) {
    if (min_count < 1) throw ConfigError("min_count must be >= 1");
    std::unordered_map<std::string, std::int64_t> counts;
    for (const auto& seq : sequences) {
      for (const auto& tok : seq) ++counts[tok];
    }
    for (const auto& special : {kSentenceStart, kSentenceEnd, kUnknown}) {
      counts.emplace(special, 0);
    }
    std::vector<std::pair<std::string, std::int64_t>> kept;
    for (const auto& [tok, count] : counts) {
      bool special = tok == kSentenceStart || tok == kSentenceEnd || tok == kUnknown;
      if (special || count >= min_count) kept.emplace_back(tok, count);
    }
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    Vocabulary vocab;
    for (auto& [tok, count] : kept) vocab.add(std::move(tok));
    return vocab;
  }

  // Rebuild from an id-ordered token list (checkpoint loading).
  static Vocabulary from_tokens(std::vector<std::string> tokens) {
    Vocabulary vocab;
    for (auto& tok : tokens) vocab.add(std::move(tok));
    for (const auto& special : {kSentenceStart, kSentenceEnd, kUnknown}) {
      if (!vocab.contains(special)) {
        throw FormatError("vocabulary is missing special token " + special);
      }
    }
    return vocab;
  }

  int size() const { return static_cast<int>(id_to_token_.size()); }
  bool contains(const std::string& token) const { return token_to_id_.count(token) > 0; }

  int id(const std::string& token) const {
    auto it = token_to_id_.find(token);
    if (it == token_to_id_.end()) {
      throw DataError("token not in vocabulary: " + token);
    }
    return it->second;
  }

  // Id for a token, mapping out-of-vocabulary tokens to <UNK>.
  int id_or_unk(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? unk_id() : it->second;
  }

  const std::string& token(int id) const { return id_to_token_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return id_to_token_; }

  int start_id() const { return id(kSentenceStart); }
  int end_id() const { return id(kSentenceEnd); }
  int unk_id() const { return id(kUnknown); }

  bool is_special(int token_id) const {
    const std::string& tok = token(token_id);
    return tok == kSentenceStart || tok == kSentenceEnd || tok == kUnknown;
  }

 private:
  void add(std::string token) {
    int next = size();
    auto [it, inserted] = token_to_id_.emplace(std::move(token), next);
    if (!inserted) throw FormatError("duplicate vocabulary token: " + it->first);
    id_to_token_.push_back(it->first);
  }

  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

inline std::vector<int> encode_caption(const Vocabulary& vocab, const TokenSequence& seq) {
  std::vector<int> ids;
  ids.reserve(seq.size());
  for (const auto& tok : seq) ids.push_back(vocab.id_or_unk(tok));
  return ids;
}

struct SplitSpec {
  double train_fraction = 0.8;
  double validation_fraction = 0.1;
  double test_fraction = 0.1;
  std::uint64_t seed = 0;

  void validate() const {
    if (train_fraction <= 0 || validation_fraction <= 0 || test_fraction <= 0) {
      throw ConfigError("split fractions must be positive");
    }
    double sum = train_fraction + validation_fraction + test_fraction;
    if (std::abs(sum - 1.0) > 1e-9) {
      throw ConfigError("split fractions must sum to 1");
    }
  }
};

struct SplitResult {
  std::vector<CaptionRecord> train;
  std::vector<CaptionRecord> validation;
  std::vector<CaptionRecord> test;
};

// Seeded random partition. Validation/test sizes round down; the
// remainder goes to train.
inline SplitResult split_dataset(const std::vector<CaptionRecord>& records,
                                 const SplitSpec& spec) {
  spec.validate();
  if (records.size() < 3) {
    throw TooFewRecords("need at least 3 records to split, got " +
                        std::to_string(records.size()));
  }
  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(spec.seed);
  rng.shuffle(order);

  const auto n = records.size();
  const auto n_val = static_cast<std::size_t>(spec.validation_fraction * n);
  const auto n_test = static_cast<std::size_t>(spec.test_fraction * n);
  const auto n_train = n - n_val - n_test;

  SplitResult out;
  for (std::size_t i = 0; i < n; ++i) {
    const CaptionRecord& rec = records[order[i]];
    if (i < n_train) {
      out.train.push_back(rec);
    } else if (i < n_train + n_val) {
      out.validation.push_back(rec);
    } else {
      out.test.push_back(rec);
    }
  }
  return out;
}

// --- caption files: UTF-8 lines "image_id<TAB>caption" ---

inline std::vector<CaptionRecord> load_captions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open captions file: " + path);
  std::vector<CaptionRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size()) {
      throw FormatError(path + ":" + std::to_string(line_no) +
                        ": expected 'image_id<TAB>caption'");
    }
    out.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  return out;
}

inline void save_captions(const std::vector<CaptionRecord>& records, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write captions file: " + path);
  for (const auto& rec : records) {
    out << rec.image_id << '\t' << rec.caption << '\n';
  }
}

// --- image feature table and its binary file format ---

class FeatureTable {
 public:
  explicit FeatureTable(Index dim) : dim_(dim) {
    if (dim <= 0) throw ConfigError("feature dim must be positive");
  }

  Index dim() const { return dim_; }
  std::size_t size() const { return order_.size(); }

  void insert(const std::string& image_id, const Vector& feature) {
    if (feature.size() != dim_) {
      throw ShapeError("feature for '" + image_id + "' has dim " +
                       std::to_string(feature.size()) + ", table dim is " +
                       std::to_string(dim_));
    }
    if (!feature.allFinite()) {
      throw FormatError("feature for '" + image_id + "' has non-finite components");
    }
    auto [it, inserted] = index_.emplace(image_id, order_.size());
    if (!inserted) throw FormatError("duplicate image id: " + image_id);
    order_.emplace_back(image_id, feature);
  }

  const Vector* find(const std::string& image_id) const {
    auto it = index_.find(image_id);
    return it == index_.end() ? nullptr : &order_[it->second].second;
  }

  const Vector& at(const std::string& image_id) const {
    const Vector* v = find(image_id);
    if (!v) throw DataError("no feature vector for image id: " + image_id);
    return *v;
  }

  // Entries in insertion order (also the on-disk record order).
  const std::vector<std::pair<std::string, Vector>>& entries() const { return order_; }

 private:
  Index dim_;
  std::vector<std::pair<std::string, Vector>> order_;
  std::unordered_map<std::string, std::size_t> index_;
};

namespace detail {

constexpr char kFeatureMagic[4] = {'V', 'E', 'T', 'F'};
constexpr std::uint32_t kFeatureVersion = 1;

template <class T>
void write_le(std::ofstream& out, T value) {
  // Little-endian host assumed; the formats are defined little-endian.
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
bool read_le(std::ifstream& in, T& value) {
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  return static_cast<bool>(in);
}

}  // namespace detail

// Binary feature file: magic "VETF", version u32, dim u32, count u64,
// then per record: id_len u16, id bytes, dim x f32 (little-endian).
inline void save_image_features(const FeatureTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write feature file: " + path);
  out.write(detail::kFeatureMagic, 4);
  detail::write_le(out, detail::kFeatureVersion);
  detail::write_le(out, static_cast<std::uint32_t>(table.dim()));
  detail::write_le(out, static_cast<std::uint64_t>(table.size()));
  for (const auto& [id, vec] : table.entries()) {
    if (id.size() > UINT16_MAX) throw FormatError("image id too long: " + id);
    detail::write_le(out, static_cast<std::uint16_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    for (Index i = 0; i < vec.size(); ++i) {
      detail::write_le(out, static_cast<float>(vec[i]));
    }
  }
  if (!out) throw IoError("short write to feature file: " + path);
}

inline FeatureTable load_image_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open feature file: " + path);
  auto fail = [&](const std::string& what) -> FormatError {
    auto off = in.tellg();
    std::string at = off < 0 ? "eof" : std::to_string(static_cast<long long>(off));
    return FormatError(path + ": " + what + " (at byte " + at + ")");
  };

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, detail::kFeatureMagic, 4) != 0) {
    throw fail("bad magic, not a VETF feature file");
  }
  std::uint32_t version = 0, dim = 0;
  std::uint64_t count = 0;
  if (!detail::read_le(in, version)) throw fail("truncated header");
  if (version != detail::kFeatureVersion) {
    throw fail("unsupported version " + std::to_string(version));
  }
  if (!detail::read_le(in, dim)) throw fail("truncated header");
  if (dim == 0) throw fail("feature dim is zero");
  if (!detail::read_le(in, count)) throw fail("truncated header");

  FeatureTable table(static_cast<Index>(dim));
  std::string id;
  Vector vec(static_cast<Index>(dim));
  for (std::uint64_t rec = 0; rec < count; ++rec) {
    std::uint16_t id_len = 0;
    if (!detail::read_le(in, id_len)) throw fail("truncated record " + std::to_string(rec));
    id.resize(id_len);
    in.read(id.data(), id_len);
    if (!in) throw fail("truncated record id " + std::to_string(rec));
    for (std::uint32_t i = 0; i < dim; ++i) {
      float f = 0.0f;
      if (!detail::read_le(in, f)) {
        throw fail("truncated feature vector in record " + std::to_string(rec));
      }
      if (!std::isfinite(f)) {
        throw fail("non-finite component in record " + std::to_string(rec));
      }
      vec[static_cast<Index>(i)] = static_cast<double>(f);
    }
    table.insert(id, vec);
  }
  return table;
}

}  // namespace vete
