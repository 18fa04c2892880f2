// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "vete/common.hpp"
#include "vete/rng.hpp"

namespace vete {

enum class LossKind { Pearson, Covariance, Skt, Rank };

inline std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::Pearson: return "pearson";
    case LossKind::Covariance: return "covariance";
    case LossKind::Skt: return "skt";
    case LossKind::Rank: return "rank";
  }
  throw ConfigError("unknown loss kind");
}

inline LossKind loss_kind_from_string(const std::string& name) {
  if (name == "pearson") return LossKind::Pearson;
  if (name == "covariance") return LossKind::Covariance;
  if (name == "skt") return LossKind::Skt;
  if (name == "rank") return LossKind::Rank;
  throw ConfigError("unknown loss kind: " + name);
}

struct LossSpec {
  LossKind kind = LossKind::Pearson;
  Scalar skt_alpha = 1.0;
  Scalar rank_margin = 0.2;
  Scalar epsilon = 1e-8;  // std-dev guard for the Pearson denominator
};

// Labels for a batch of `batch` matched pairs followed by `batch` mismatched
// pairs: +1 repeated `batch` times, then -1 repeated `batch` times.
inline Vector make_labels(Index batch) {
  if (batch < 2) throw BatchTooSmall("make_labels: batch must be >= 2");
  Vector y(2 * batch);
  y.head(batch).setConstant(1.0);
  y.tail(batch).setConstant(-1.0);
  return y;
}

// Uniform random derangement of {0..n-1} by rejection from uniform
// permutations, so every derangement is equally likely.
inline std::vector<Index> sample_derangement(Index n, Rng& rng) {
  if (n < 2) throw BatchTooSmall("sample_derangement: need n >= 2");
  std::vector<Index> perm(static_cast<std::size_t>(n));
  while (true) {
    std::iota(perm.begin(), perm.end(), Index{0});
    rng.shuffle(perm);
    bool fixed_point = false;
    for (Index i = 0; i < n; ++i) {
      if (perm[static_cast<std::size_t>(i)] == i) {
        fixed_point = true;
        break;
      }
    }
    if (!fixed_point) return perm;
  }
}

// One training batch: B true (image, sentence) pairs plus the fixed-point-free
// permutation sigma pairing image i with sentence sigma(i) as a wrong pair.
struct PairBatch {
  Matrix image_features;                       // B x feature_dim
  std::vector<std::vector<int>> sentence_ids;  // B token-id sequences
  std::vector<Index> sigma;
  Vector labels;  // +1 x B then -1 x B

  Index batch_size() const { return image_features.rows(); }

  void validate() const {
    const Index b = batch_size();
    if (b < 2) throw BatchTooSmall("PairBatch: need B >= 2");
    if (static_cast<Index>(sentence_ids.size()) != b || static_cast<Index>(sigma.size()) != b ||
        labels.size() != 2 * b) {
      throw ShapeError("PairBatch: inconsistent sizes");
    }
    std::vector<bool> seen(static_cast<std::size_t>(b), false);
    for (Index i = 0; i < b; ++i) {
      const Index s = sigma[static_cast<std::size_t>(i)];
      if (s < 0 || s >= b) throw ShapeError("PairBatch: sigma out of range");
      if (s == i) throw ShapeError("PairBatch: sigma has a fixed point");
      if (seen[static_cast<std::size_t>(s)]) throw ShapeError("PairBatch: sigma not a permutation");
      seen[static_cast<std::size_t>(s)] = true;
    }
    for (Index i = 0; i < b; ++i) {
      if (labels[i] != 1.0 || labels[b + i] != -1.0) {
        throw ShapeError("PairBatch: labels must be +1 x B then -1 x B");
      }
    }
  }
};

inline PairBatch make_contrastive_batch(Matrix image_features,
                                        std::vector<std::vector<int>> sentence_ids, Rng& rng) {
  const Index b = image_features.rows();
  if (b < 2) throw BatchTooSmall("make_contrastive_batch: need B >= 2");
  if (static_cast<Index>(sentence_ids.size()) != b) {
    throw ShapeError("make_contrastive_batch: images/sentences count mismatch");
  }
  PairBatch batch;
  batch.image_features = std::move(image_features);
  batch.sentence_ids = std::move(sentence_ids);
  batch.sigma = sample_derangement(b, rng);
  batch.labels = make_labels(b);
  return batch;
}

struct LossResult {
  Scalar value = 0.0;  // the quantity to minimize
  Vector d_sims;       // d value / d sims
};

namespace detail {

inline void check_same_length(const Vector& x, const Vector& y, const char* who) {
  if (x.size() != y.size()) {
    throw ShapeError(std::string(who) + ": sims/labels length mismatch");
  }
  if (x.size() < 2) throw BatchTooSmall(std::string(who) + ": need at least 2 points");
}

}  // namespace detail

// loss = -rho(x, y) with population (1/n) moments.
inline LossResult pearson_loss(const Vector& x, const Vector& y, Scalar epsilon = 1e-8) {
  detail::check_same_length(x, y, "pearson_loss");
  const Index n = x.size();
  const Scalar nn = static_cast<Scalar>(n);
  Vector xc = x.array() - x.mean();
  Vector yc = y.array() - y.mean();
  const Scalar varx = xc.squaredNorm() / nn;
  const Scalar vary = yc.squaredNorm() / nn;
  const Scalar sx = std::sqrt(varx);
  const Scalar sy = std::sqrt(vary);
  if (sx < epsilon || sy < epsilon) {
    throw DegenerateSimilarities("pearson_loss: (near-)constant input");
  }
  const Scalar cov = xc.dot(yc) / nn;
  const Scalar rho = cov / (sx * sy);
  LossResult out;
  out.value = -rho;
  out.d_sims = -(yc / (nn * sx * sy) - rho * xc / (nn * varx));
  return out;
}

// loss = -cov(x, y) with population (1/n) normalization.
inline LossResult covariance_loss(const Vector& x, const Vector& y) {
  detail::check_same_length(x, y, "covariance_loss");
  const Scalar nn = static_cast<Scalar>(x.size());
  Vector xc = x.array() - x.mean();
  Vector yc = y.array() - y.mean();
  LossResult out;
  out.value = -xc.dot(yc) / nn;
  out.d_sims = -yc / nn;
  return out;
}

// Soft Kendall correlation: mean over unordered pairs of
// tanh(alpha * (x_i - x_j) * (y_i - y_j)). loss = -that.
inline LossResult skt_loss(const Vector& x, const Vector& y, Scalar alpha) {
  detail::check_same_length(x, y, "skt_loss");
  const Index n = x.size();
  const Scalar denom = static_cast<Scalar>(n) * static_cast<Scalar>(n - 1) / 2.0;
  Scalar total = 0.0;
  Vector grad = Vector::Zero(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const Scalar dy = y[i] - y[j];
      const Scalar t = std::tanh(alpha * (x[i] - x[j]) * dy);
      total += t;
      const Scalar g = (1.0 - t * t) * alpha * dy / denom;
      grad[i] += g;
      grad[j] -= g;
    }
  }
  LossResult out;
  out.value = -total / denom;
  out.d_sims = -grad;
  return out;
}

// Margin ranking loss over positionally paired sims: the first half holds
// matched-pair similarities, the second half the mismatched ones, and pair i
// contributes max(0, margin - sims[i] + sims[B+i]). Mean over pairs.
inline LossResult rank_loss(const Vector& sims, Scalar margin) {
  if (sims.size() % 2 != 0) throw ShapeError("rank_loss: sims length must be even");
  const Index batch = sims.size() / 2;
  if (batch < 2) throw BatchTooSmall("rank_loss: need at least 2 pairs");
  const Scalar inv = 1.0 / static_cast<Scalar>(batch);
  LossResult out;
  out.d_sims = Vector::Zero(sims.size());
  for (Index i = 0; i < batch; ++i) {
    const Scalar hinge = margin - sims[i] + sims[batch + i];
    if (hinge > 0.0) {
      out.value += hinge * inv;
      out.d_sims[i] -= inv;
      out.d_sims[batch + i] += inv;
    }
  }
  return out;
}

// --- objective values (the maximized quantities, before loss negation) ---

inline Scalar pearson_objective(const Vector& sims, const Vector& labels,
                                Scalar epsilon = 1e-8) {
  return -pearson_loss(sims, labels, epsilon).value;
}

inline Scalar covariance_objective(const Vector& sims, const Vector& labels) {
  return -covariance_loss(sims, labels).value;
}

inline Scalar skt_objective(const Vector& sims, const Vector& labels, Scalar alpha) {
  return -skt_loss(sims, labels, alpha).value;
}

// Mean hinge over aligned positives/negatives; minimized directly.
inline Scalar rank_objective(const Vector& sim_pos, const Vector& sim_neg, Scalar gamma) {
  if (sim_pos.size() != sim_neg.size()) {
    throw ShapeError("rank_objective: positive/negative length mismatch");
  }
  if (sim_pos.size() < 1) throw BatchTooSmall("rank_objective: need at least 1 pair");
  Scalar total = 0.0;
  for (Index i = 0; i < sim_pos.size(); ++i) {
    total += std::max(0.0, gamma - sim_pos[i] + sim_neg[i]);
  }
  return total / static_cast<Scalar>(sim_pos.size());
}

// Unified entry point. `labels` must come from make_labels for the same
// batch layout; the rank loss uses the positional pairing instead of the
// label values.
inline LossResult loss_with_grad(const LossSpec& spec, const Vector& sims,
                                 const Vector& labels) {
  switch (spec.kind) {
    case LossKind::Pearson: return pearson_loss(sims, labels, spec.epsilon);
    case LossKind::Covariance: return covariance_loss(sims, labels);
    case LossKind::Skt: return skt_loss(sims, labels, spec.skt_alpha);
    case LossKind::Rank:
      detail::check_same_length(sims, labels, "rank_loss");
      return rank_loss(sims, spec.rank_margin);
  }
  throw ConfigError("unknown loss kind");
}

}  // namespace vete
