// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "vete/common.hpp"
#include "vete/corpus.hpp"
#include "vete/model.hpp"
#include "vete/rng.hpp"

namespace vete {

// Population-moment Pearson correlation. Unlike the training-loss guard,
// evaluation reports constant input as DegenerateInput.
inline Scalar pearson(const Vector& x, const Vector& y) {
  if (x.size() != y.size()) throw ShapeError("pearson: length mismatch");
  if (x.size() < 2) throw DegenerateInput("pearson: need at least 2 points");
  const Scalar n = static_cast<Scalar>(x.size());
  Vector xc = x.array() - x.mean();
  Vector yc = y.array() - y.mean();
  const Scalar sx = std::sqrt(xc.squaredNorm() / n);
  const Scalar sy = std::sqrt(yc.squaredNorm() / n);
  if (sx < 1e-12 || sy < 1e-12) throw DegenerateInput("pearson: (near-)constant input");
  return (xc.dot(yc) / n) / (sx * sy);
}

// --- datasets ---

struct StsItem {
  std::string sentence_a;
  std::string sentence_b;
  Scalar gold = 0.0;
};

struct StsDataset {
  std::string name;
  std::vector<StsItem> items;
  Scalar score_lo = 0.0;
  Scalar score_hi = 0.0;
};

struct BinaryPair {
  std::string sentence_a;
  std::string sentence_b;
  int label = 0;
};

struct BinaryPairSet {
  std::string name;
  std::vector<BinaryPair> items;

  void validate() const {
    bool pos = false, neg = false;
    for (const auto& item : items) {
      (item.label == 1 ? pos : neg) = true;
    }
    if (!pos || !neg) throw DataError(name + ": binary pair set needs both classes");
  }
};

inline std::string dataset_name_from_path(const std::string& path) {
  auto slash = path.find_last_of("/\\");
  std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
  auto dot = base.find_last_of('.');
  return dot == std::string::npos || dot == 0 ? base : base.substr(0, dot);
}

// --- model-based similarity ---

inline Scalar sentence_similarity(const Model& model, const std::string& a,
                                  const std::string& b) {
  return cosine_similarity(embed_sentence(model, a), embed_sentence(model, b));
}

// Pearson between model similarities and gold scores. Items that fail to
// encode (empty after tokenization, degenerate norms) score 0 and are
// counted, so impoverished vocabularies are penalized rather than hidden.
inline Scalar eval_sts(const Model& model, const StsDataset& ds,
                       std::size_t* failed_out = nullptr) {
  if (ds.items.empty()) throw EvaluationImpossible(ds.name + ": empty dataset");
  Vector sims(static_cast<Index>(ds.items.size()));
  Vector gold(static_cast<Index>(ds.items.size()));
  std::size_t failed = 0;
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    const auto& item = ds.items[i];
    gold[static_cast<Index>(i)] = item.gold;
    Scalar sim = 0.0;
    try {
      sim = sentence_similarity(model, item.sentence_a, item.sentence_b);
    } catch (const Error&) {
      sim = 0.0;
      ++failed;
    }
    sims[static_cast<Index>(i)] = sim;
  }
  if (failed == ds.items.size()) {
    throw EvaluationImpossible(ds.name + ": no item could be encoded");
  }
  if (failed_out) *failed_out = failed;
  return pearson(sims, gold);
}

// Captions sharing an image id become label-1 pairs; captions of different
// images become label-0 pairs. Sampling is uniform without replacement,
// deterministic per seed.
inline BinaryPairSet build_binary_pair_set(const std::vector<CaptionRecord>& records,
                                           std::size_t n_pos, std::size_t n_neg,
                                           std::uint64_t seed) {
  if (n_pos == 0 || n_neg == 0) throw ConfigError("build_binary_pair_set: need n_pos, n_neg > 0");
  std::vector<std::pair<std::size_t, std::size_t>> related;
  {
    std::unordered_map<std::string, std::vector<std::size_t>> by_image;
    for (std::size_t i = 0; i < records.size(); ++i) {
      by_image[records[i].image_id].push_back(i);
    }
    // Deterministic enumeration order: first occurrence order of images.
    std::vector<const std::vector<std::size_t>*> groups;
    std::unordered_set<std::string> seen;
    for (const auto& rec : records) {
      if (seen.insert(rec.image_id).second) groups.push_back(&by_image[rec.image_id]);
    }
    for (const auto* group : groups) {
      for (std::size_t i = 0; i < group->size(); ++i) {
        for (std::size_t j = i + 1; j < group->size(); ++j) {
          related.emplace_back((*group)[i], (*group)[j]);
        }
      }
    }
  }
  if (related.size() < n_pos) {
    throw TooFewPairs("build_binary_pair_set: only " + std::to_string(related.size()) +
                      " related caption pairs available, need " + std::to_string(n_pos));
  }
  const std::size_t n = records.size();
  const std::size_t all_pairs = n * (n - 1) / 2;
  if (all_pairs - related.size() < n_neg) {
    throw TooFewPairs("build_binary_pair_set: not enough unrelated caption pairs");
  }

  Rng rng(seed);
  rng.shuffle(related);

  BinaryPairSet out;
  for (std::size_t k = 0; k < n_pos; ++k) {
    const auto& [i, j] = related[k];
    out.items.push_back({records[i].caption, records[j].caption, 1});
  }
  std::set<std::pair<std::size_t, std::size_t>> used;
  while (used.size() < n_neg) {
    std::size_t i = static_cast<std::size_t>(rng.below(n));
    std::size_t j = static_cast<std::size_t>(rng.below(n));
    if (i == j) continue;
    if (records[i].image_id == records[j].image_id) continue;
    auto key = std::minmax(i, j);
    if (!used.insert({key.first, key.second}).second) continue;
    out.items.push_back({records[i].caption, records[j].caption, 0});
  }
  out.validate();
  return out;
}

// Fraction of (positive, negative) pairs ranked correctly by score, ties
// counted half, computed via the rank-sum statistic.
inline Scalar auc_from_scores(const std::vector<Scalar>& scores,
                              const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw ShapeError("auc: scores/labels length mismatch");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (int label : labels) n_pos += label == 1 ? 1 : 0;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DataError("auc: needs both classes");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Average ranks across ties, 1-based.
  std::vector<Scalar> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const Scalar avg = (static_cast<Scalar>(i + 1) + static_cast<Scalar>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  Scalar rank_sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (labels[k] == 1) rank_sum += rank[k];
  }
  const Scalar u = rank_sum - static_cast<Scalar>(n_pos) * (static_cast<Scalar>(n_pos) + 1) / 2.0;
  return u / (static_cast<Scalar>(n_pos) * static_cast<Scalar>(n_neg));
}

struct BinaryEvalResult {
  Scalar pearson = 0.0;
  Scalar auc = 0.0;
  std::size_t failed = 0;
};

// Pearson of similarities against labels mapped to {-1, +1}, plus AUC.
inline BinaryEvalResult eval_binary_pairs(const Model& model, const BinaryPairSet& ds) {
  ds.validate();
  const std::size_t n = ds.items.size();
  Vector sims(static_cast<Index>(n));
  Vector signed_labels(static_cast<Index>(n));
  std::vector<Scalar> scores(n);
  std::vector<int> labels(n);
  std::size_t failed = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& item = ds.items[i];
    Scalar sim = 0.0;
    try {
      sim = sentence_similarity(model, item.sentence_a, item.sentence_b);
    } catch (const Error&) {
      sim = 0.0;
      ++failed;
    }
    sims[static_cast<Index>(i)] = sim;
    scores[i] = sim;
    labels[i] = item.label;
    signed_labels[static_cast<Index>(i)] = item.label == 1 ? 1.0 : -1.0;
  }
  if (failed == n) throw EvaluationImpossible(ds.name + ": no item could be encoded");
  BinaryEvalResult out;
  out.pearson = pearson(sims, signed_labels);
  out.auc = auc_from_scores(scores, labels);
  out.failed = failed;
  return out;
}

inline Scalar average_scores(const std::vector<Scalar>& scores) {
  if (scores.empty()) throw EmptyReport("average_scores: no scores to average");
  Scalar total = 0.0;
  for (Scalar s : scores) total += s;
  return total / static_cast<Scalar>(scores.size());
}

// --- file formats ---

namespace detail {

inline Scalar parse_scalar(const std::string& text, const std::string& where) {
  try {
    std::size_t used = 0;
    Scalar v = std::stod(text, &used);
    if (used != text.size() || !std::isfinite(v)) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw FormatError(where + ": bad numeric value '" + text + "'");
  }
}

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    auto tab = line.find('\t', start);
    if (tab == std::string::npos) {
      parts.push_back(line.substr(start));
      return parts;
    }
    parts.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

}  // namespace detail

// Lines: gold<TAB>sentence_a<TAB>sentence_b
inline StsDataset load_sts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open STS file: " + path);
  StsDataset ds;
  ds.name = dataset_name_from_path(path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto parts = detail::split_tabs(line);
    const std::string where = path + ":" + std::to_string(line_no);
    if (parts.size() != 3 || parts[1].empty() || parts[2].empty()) {
      throw FormatError(where + ": expected 'gold<TAB>sentence_a<TAB>sentence_b'");
    }
    ds.items.push_back({parts[1], parts[2], detail::parse_scalar(parts[0], where)});
  }
  if (ds.items.empty()) throw FormatError(path + ": no items");
  ds.score_lo = ds.score_hi = ds.items.front().gold;
  for (const auto& item : ds.items) {
    ds.score_lo = std::min(ds.score_lo, item.gold);
    ds.score_hi = std::max(ds.score_hi, item.gold);
  }
  return ds;
}

inline void save_sts(const StsDataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write STS file: " + path);
  char buf[64];
  for (const auto& item : ds.items) {
    std::snprintf(buf, sizeof(buf), "%.9g", item.gold);
    out << buf << '\t' << item.sentence_a << '\t' << item.sentence_b << '\n';
  }
}

// Lines: label<TAB>sentence_a<TAB>sentence_b with label in {0,1}
inline BinaryPairSet load_binary_pairs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open binary pair file: " + path);
  BinaryPairSet ds;
  ds.name = dataset_name_from_path(path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto parts = detail::split_tabs(line);
    const std::string where = path + ":" + std::to_string(line_no);
    if (parts.size() != 3 || parts[1].empty() || parts[2].empty()) {
      throw FormatError(where + ": expected 'label<TAB>sentence_a<TAB>sentence_b'");
    }
    if (parts[0] != "0" && parts[0] != "1") {
      throw FormatError(where + ": label must be 0 or 1, got '" + parts[0] + "'");
    }
    ds.items.push_back({parts[1], parts[2], parts[0] == "1" ? 1 : 0});
  }
  if (ds.items.empty()) throw FormatError(path + ": no items");
  ds.validate();
  return ds;
}

inline void save_binary_pairs(const BinaryPairSet& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write binary pair file: " + path);
  for (const auto& item : ds.items) {
    out << item.label << '\t' << item.sentence_a << '\t' << item.sentence_b << '\n';
  }
}

// --- reports ---

struct ReportRow {
  std::string dataset;
  std::string metric;
  Scalar value = 0.0;
};

using EvalReport = std::vector<ReportRow>;

inline std::string format_scalar(Scalar v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

inline void write_report(const EvalReport& report, std::ostream& out) {
  out << "dataset\tmetric\tvalue\n";
  for (const auto& row : report) {
    out << row.dataset << '\t' << row.metric << '\t' << format_scalar(row.value) << '\n';
  }
}

inline void write_report(const EvalReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write report: " + path);
  write_report(report, out);
}

}  // namespace vete
