// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "vete/common.hpp"
#include "vete/contrastive.hpp"
#include "vete/corpus.hpp"
#include "vete/encoders.hpp"
#include "vete/model.hpp"
#include "vete/rng.hpp"
#include "vete/tensors.hpp"

namespace vete {

enum class TrainingLevel { Sentence, Word };

inline std::string to_string(TrainingLevel level) {
  return level == TrainingLevel::Sentence ? "sentence" : "word";
}

inline TrainingLevel training_level_from_string(const std::string& name) {
  if (name == "sentence") return TrainingLevel::Sentence;
  if (name == "word") return TrainingLevel::Word;
  throw ConfigError("unknown training level: " + name);
}

struct HyperParams {
  Index embedding_dim = 128;
  Index batch_size = 32;
  Scalar learning_rate = 1e-3;
  Scalar lr_decay = 1.0;
  Scalar init_scale = 0.1;
  int epochs = 1;
  EncoderSpec encoder;
  LossSpec loss;
  std::uint64_t seed = 0;
  TrainingLevel training_level = TrainingLevel::Sentence;

  void validate() const {
    if (embedding_dim < 1) throw ConfigError("embedding_dim must be >= 1");
    if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
    if (!(learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
    if (!(lr_decay > 0)) throw ConfigError("lr_decay must be > 0");
    if (!(init_scale > 0)) throw ConfigError("init_scale must be > 0");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    encoder.validate();
  }
};

struct TrainHistory {
  std::vector<Scalar> step_losses;       // successful steps, in order
  std::vector<Scalar> epoch_mean_loss;   // NaN for an epoch with no successful step
  std::vector<Scalar> epoch_val_metric;  // batch-mean Pearson on validation pairs
  std::vector<Scalar> epoch_seconds;
  std::uint64_t skipped_batches = 0;
  Scalar wall_seconds = 0.0;
};

// --- Adam ---

struct AdamState {
  ParamMap m;
  ParamMap v;
  std::uint64_t t = 0;
  Scalar beta1 = 0.9;
  Scalar beta2 = 0.999;
  Scalar eps = 1e-8;

  static AdamState like(const ParamMap& params) {
    AdamState state;
    state.m = zeros_like(params);
    state.v = zeros_like(params);
    return state;
  }
};

inline void adam_step(AdamState& state, ParamMap& params, const ParamMap& grads, Scalar lr) {
  if (!all_finite(grads)) throw NonFiniteGradient("adam_step: non-finite gradient");
  state.t += 1;
  const Scalar bc1 = 1.0 - std::pow(state.beta1, static_cast<Scalar>(state.t));
  const Scalar bc2 = 1.0 - std::pow(state.beta2, static_cast<Scalar>(state.t));
  for (auto& [name, p] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) throw ShapeError("adam_step: missing gradient for " + name);
    const Matrix& g = git->second;
    if (g.rows() != p.rows() || g.cols() != p.cols()) {
      throw ShapeError("adam_step: gradient shape mismatch for " + name);
    }
    Matrix& m = state.m.at(name);
    Matrix& v = state.v.at(name);
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
    p.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + state.eps);
  }
}

// --- batch forward/backward ---

// sims[i] = cos(W^T f_i + b, E_txt(S_i)); sims[B+i] pairs image i with
// sentence sigma(i).
inline Vector forward_batch(const EncoderSpec& spec, const ParamMap& params,
                            const PairBatch& batch) {
  batch.validate();
  const Index b = batch.batch_size();
  const Matrix& weight = params.at("img_proj.weight");
  const Vector bias = params.at("img_proj.bias").col(0);

  std::vector<Vector> text(static_cast<std::size_t>(b));
  std::vector<Vector> image(static_cast<std::size_t>(b));
  for (Index i = 0; i < b; ++i) {
    text[i] = encode_sequence(spec, params, batch.sentence_ids[i]);
    image[i] = project_image(weight, bias, batch.image_features.row(i).transpose());
  }

  Vector sims(2 * b);
  for (Index i = 0; i < b; ++i) {
    try {
      sims[i] = cosine_similarity(image[i], text[i]);
      sims[b + i] = cosine_similarity(image[i], text[batch.sigma[i]]);
    } catch (const DegenerateVector& e) {
      throw DegenerateVector("batch pair " + std::to_string(i) + ": " + e.what());
    }
  }
  return sims;
}

struct BatchGradients {
  Scalar loss = 0.0;
  Vector sims;
  ParamMap grads;
};

inline BatchGradients backward_batch(const EncoderSpec& spec, const ParamMap& params,
                                     const PairBatch& batch, const LossSpec& loss_spec) {
  batch.validate();
  const Index b = batch.batch_size();
  const Matrix& weight = params.at("img_proj.weight");
  const Vector bias = params.at("img_proj.bias").col(0);

  std::vector<Vector> text(static_cast<std::size_t>(b));
  std::vector<Vector> image(static_cast<std::size_t>(b));
  for (Index i = 0; i < b; ++i) {
    text[i] = encode_sequence(spec, params, batch.sentence_ids[i]);
    image[i] = project_image(weight, bias, batch.image_features.row(i).transpose());
  }

  Vector sims(2 * b);
  std::vector<CosineGrad> pos(static_cast<std::size_t>(b));
  std::vector<CosineGrad> neg(static_cast<std::size_t>(b));
  for (Index i = 0; i < b; ++i) {
    try {
      pos[i] = cosine_with_grad(image[i], text[i]);
      neg[i] = cosine_with_grad(image[i], text[batch.sigma[i]]);
    } catch (const DegenerateVector& e) {
      throw DegenerateVector("batch pair " + std::to_string(i) + ": " + e.what());
    }
    sims[i] = pos[i].value;
    sims[b + i] = neg[i].value;
  }

  LossResult loss = loss_with_grad(loss_spec, sims, batch.labels);

  BatchGradients out;
  out.loss = loss.value;
  out.sims = sims;
  out.grads = zeros_like(params);

  std::vector<Vector> d_text(static_cast<std::size_t>(b), Vector::Zero(text[0].size()));
  Matrix& d_weight = out.grads.at("img_proj.weight");
  Matrix& d_bias = out.grads.at("img_proj.bias");
  for (Index i = 0; i < b; ++i) {
    Vector d_image = loss.d_sims[i] * pos[i].d_a + loss.d_sims[b + i] * neg[i].d_a;
    d_text[i] += loss.d_sims[i] * pos[i].d_b;
    d_text[batch.sigma[i]] += loss.d_sims[b + i] * neg[i].d_b;
    d_weight += batch.image_features.row(i).transpose() * d_image.transpose();
    d_bias.col(0) += d_image;
  }
  for (Index i = 0; i < b; ++i) {
    if (d_text[i].isZero(0.0)) continue;
    encode_sequence_backward(spec, params, batch.sentence_ids[i], d_text[i], out.grads);
  }
  return out;
}

inline Vector forward_batch(const Model& model, const PairBatch& batch) {
  return forward_batch(model.encoder, model.params, batch);
}

inline BatchGradients backward_batch(const Model& model, const PairBatch& batch,
                                     const LossSpec& loss_spec) {
  return backward_batch(model.encoder, model.params, batch, loss_spec);
}

// --- training loop ---

namespace detail {

struct TrainItem {
  std::vector<int> token_ids;
  std::size_t feature_row;
};

inline PairBatch assemble_batch(const std::vector<TrainItem>& items,
                                const std::vector<std::size_t>& picks, const Matrix& features,
                                Rng& rng) {
  const Index b = static_cast<Index>(picks.size());
  Matrix feats(b, features.cols());
  std::vector<std::vector<int>> ids(static_cast<std::size_t>(b));
  for (Index i = 0; i < b; ++i) {
    const TrainItem& item = items[picks[static_cast<std::size_t>(i)]];
    feats.row(i) = features.row(static_cast<Index>(item.feature_row));
    ids[static_cast<std::size_t>(i)] = item.token_ids;
  }
  return make_contrastive_batch(std::move(feats), std::move(ids), rng);
}

}  // namespace detail

struct TrainOutcome {
  Model model;
  TrainHistory history;
};

// Trains on (caption, image feature) pairs. The vocabulary is built from the
// training captions only; validation captions map unseen words to <UNK>. Each
// epoch shuffles, walks full batches of size B (trailing partial batches are
// dropped), and records the batch-mean Pearson correlation on fixed
// validation batches. Word-level training expands every caption into one
// single-word pair per content token and still validates on full sentences.
inline TrainOutcome train(const HyperParams& hyper,
                          const std::vector<CaptionRecord>& train_records,
                          const std::vector<CaptionRecord>& val_records,
                          const FeatureTable& features, int min_count = 1,
                          std::ostream* log = nullptr, const Model* warm_start = nullptr) {
  hyper.validate();
  const EncoderSpec& enc = warm_start ? warm_start->encoder : hyper.encoder;
  if (hyper.training_level == TrainingLevel::Word && !enc.is_bow()) {
    throw UnsupportedConfiguration(
        "word-level training combines word embeddings at inference and needs a BOW encoder");
  }
  if (train_records.empty()) throw EmptyInput("train: no training records");

  std::vector<TokenSequence> sequences;
  sequences.reserve(train_records.size());
  for (const auto& rec : train_records) sequences.push_back(tokenize(rec.caption));
  Vocabulary vocab =
      warm_start ? warm_start->vocab : Vocabulary::build(sequences, min_count);

  // Features for record i live in row i of a dense matrix, train then val.
  Matrix feature_rows(train_records.size() + val_records.size(), features.dim());
  std::vector<detail::TrainItem> train_items(train_records.size());
  for (std::size_t i = 0; i < train_records.size(); ++i) {
    const auto& rec = train_records[i];
    const Vector* f = features.find(rec.image_id);
    if (!f) throw DataError("no feature vector for image id: " + rec.image_id);
    feature_rows.row(static_cast<Index>(i)) = f->transpose();
    train_items[i].token_ids = encode_caption(vocab, sequences[i]);
    train_items[i].feature_row = i;
  }
  std::vector<detail::TrainItem> val_items(val_records.size());
  for (std::size_t i = 0; i < val_records.size(); ++i) {
    const auto& rec = val_records[i];
    const Vector* f = features.find(rec.image_id);
    if (!f) throw DataError("no feature vector for image id: " + rec.image_id);
    const std::size_t row = train_records.size() + i;
    feature_rows.row(static_cast<Index>(row)) = f->transpose();
    val_items[i].token_ids = encode_caption(vocab, tokenize(rec.caption));
    val_items[i].feature_row = row;
  }

  Rng rng(hyper.seed);
  Model model;
  if (warm_start) {
    if (warm_start->embed_dim != hyper.embedding_dim) {
      throw ConfigError("train: embedding_dim " + std::to_string(hyper.embedding_dim) +
                        " does not match checkpoint dim " +
                        std::to_string(warm_start->embed_dim));
    }
    if (warm_start->feature_dim != features.dim()) {
      throw ConfigError("train: feature dim " + std::to_string(features.dim()) +
                        " does not match checkpoint dim " +
                        std::to_string(warm_start->feature_dim));
    }
    model = *warm_start;
  } else {
    model = make_model(hyper.encoder, std::move(vocab), hyper.embedding_dim, features.dim(),
                       hyper.init_scale, rng);
  }

  // Word-level mode trains on (image, single content word) pairs.
  std::vector<detail::TrainItem> step_items;
  if (hyper.training_level == TrainingLevel::Word) {
    const int start = model.vocab.start_id();
    const int end = model.vocab.end_id();
    for (const auto& item : train_items) {
      for (int id : item.token_ids) {
        if (id == start || id == end) continue;
        step_items.push_back({{id}, item.feature_row});
      }
    }
  } else {
    step_items = train_items;
  }
  const std::size_t batch = static_cast<std::size_t>(hyper.batch_size);
  if (step_items.size() < batch) {
    throw ConfigError("train: " + std::to_string(step_items.size()) +
                      " training pairs cannot fill one batch of " + std::to_string(batch));
  }

  // Validation batches are fixed up front so epochs are comparable.
  std::vector<PairBatch> val_batches;
  {
    Rng val_rng(derive_seed(hyper.seed, 0x76616cull));
    std::vector<std::size_t> order(val_items.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const std::size_t full = val_items.size() / batch;
    if (full == 0 && val_items.size() >= 2) {
      std::vector<std::size_t> picks(order.begin(), order.end());
      val_batches.push_back(detail::assemble_batch(val_items, picks, feature_rows, val_rng));
    }
    for (std::size_t k = 0; k < full; ++k) {
      std::vector<std::size_t> picks(order.begin() + k * batch, order.begin() + (k + 1) * batch);
      val_batches.push_back(detail::assemble_batch(val_items, picks, feature_rows, val_rng));
    }
  }
  auto validate_now = [&]() -> Scalar {
    Scalar total = 0.0;
    int ok = 0;
    for (const PairBatch& vb : val_batches) {
      try {
        Vector sims = forward_batch(model, vb);
        total += pearson_objective(sims, vb.labels, hyper.loss.epsilon);
        ++ok;
      } catch (const Error&) {
        continue;
      }
    }
    return ok == 0 ? std::numeric_limits<Scalar>::quiet_NaN() : total / ok;
  };

  AdamState adam = AdamState::like(model.params);
  TrainHistory history;
  std::vector<std::size_t> order(step_items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const auto t_start = std::chrono::steady_clock::now();
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    const auto e_start = std::chrono::steady_clock::now();
    const Scalar lr = hyper.learning_rate * std::pow(hyper.lr_decay, epoch);
    rng.shuffle(order);
    Scalar epoch_loss = 0.0;
    std::size_t epoch_steps = 0;
    std::uint64_t epoch_skipped = 0;
    const std::size_t n_batches = order.size() / batch;
    for (std::size_t k = 0; k < n_batches; ++k) {
      std::vector<std::size_t> picks(order.begin() + k * batch, order.begin() + (k + 1) * batch);
      PairBatch pb = detail::assemble_batch(step_items, picks, feature_rows, rng);
      try {
        BatchGradients bg = backward_batch(model, pb, hyper.loss);
        if (model.encoder.is_rnn()) {
          const Scalar norm = global_norm(bg.grads);
          if (std::isfinite(norm) && norm > 5.0) {
            for (auto& [name, g] : bg.grads) g *= 5.0 / norm;
          }
        }
        adam_step(adam, model.params, bg.grads, lr);
        history.step_losses.push_back(bg.loss);
        epoch_loss += bg.loss;
        ++epoch_steps;
      } catch (const DegenerateSimilarities&) {
        ++epoch_skipped;
      } catch (const DegenerateVector&) {
        ++epoch_skipped;
      } catch (const DegenerateEmbedding&) {
        ++epoch_skipped;
      } catch (const NonFiniteGradient&) {
        ++epoch_skipped;
      }
    }
    history.skipped_batches += epoch_skipped;
    const Scalar mean_loss = epoch_steps == 0 ? std::numeric_limits<Scalar>::quiet_NaN()
                                              : epoch_loss / static_cast<Scalar>(epoch_steps);
    history.epoch_mean_loss.push_back(mean_loss);
    history.epoch_val_metric.push_back(validate_now());
    const Scalar seconds =
        std::chrono::duration<Scalar>(std::chrono::steady_clock::now() - e_start).count();
    history.epoch_seconds.push_back(seconds);
    if (log) {
      (*log) << epoch << '\t' << mean_loss << '\t' << history.epoch_val_metric.back() << '\t'
             << epoch_skipped << '\t' << seconds << '\n';
    }
  }
  history.wall_seconds =
      std::chrono::duration<Scalar>(std::chrono::steady_clock::now() - t_start).count();

  model.trained_steps += adam.t;
  TrainOutcome out;
  out.model = std::move(model);
  out.history = std::move(history);
  return out;
}

inline TrainOutcome train_word_level(HyperParams hyper,
                                     const std::vector<CaptionRecord>& train_records,
                                     const std::vector<CaptionRecord>& val_records,
                                     const FeatureTable& features, int min_count = 1,
                                     std::ostream* log = nullptr) {
  hyper.training_level = TrainingLevel::Word;
  return train(hyper, train_records, val_records, features, min_count, log);
}

// --- finite-difference gradient checking ---

// Central differences per coordinate against the supplied analytic gradient;
// returns max over coordinates of |analytic - numeric| / max(1, |numeric|).
template <class Objective>
Scalar finite_difference_check(Objective&& objective, const ParamMap& params,
                               const ParamMap& analytic, Scalar h) {
  if (h < 1e-7 || h > 1e-3) {
    throw ConfigError("finite_difference_check: h must lie in [1e-7, 1e-3]");
  }
  ParamMap work = params;
  Scalar max_rel = 0.0;
  for (auto& [name, tensor] : work) {
    auto it = analytic.find(name);
    if (it == analytic.end()) {
      throw ShapeError("finite_difference_check: missing analytic gradient for " + name);
    }
    const Matrix& grad = it->second;
    if (grad.rows() != tensor.rows() || grad.cols() != tensor.cols()) {
      throw ShapeError("finite_difference_check: gradient shape mismatch for " + name);
    }
    for (Index c = 0; c < tensor.cols(); ++c) {
      for (Index r = 0; r < tensor.rows(); ++r) {
        const Scalar orig = tensor(r, c);
        tensor(r, c) = orig + h;
        const Scalar fp = objective(work);
        tensor(r, c) = orig - h;
        const Scalar fm = objective(work);
        tensor(r, c) = orig;
        const Scalar numeric = (fp - fm) / (2.0 * h);
        const Scalar rel = std::abs(grad(r, c) - numeric) / std::max(1.0, std::abs(numeric));
        max_rel = std::max(max_rel, rel);
      }
    }
  }
  return max_rel;
}

struct GradCheckCase {
  EncoderKind encoder;
  LossKind loss;
  Scalar max_rel_error = 0.0;
};

// Full-model gradient check over the encoder x loss grid on random toy
// instances (B=3, N=4, feature dim 8).
inline std::vector<GradCheckCase> grad_check_grid(std::uint64_t seed, int instances = 5,
                                                  Scalar h = 1e-5) {
  const std::vector<EncoderKind> encoders = {EncoderKind::BowSum, EncoderKind::BowMean,
                                             EncoderKind::RnnGru, EncoderKind::RnnLstm,
                                             EncoderKind::Cnn};
  const std::vector<LossKind> losses = {LossKind::Pearson, LossKind::Covariance, LossKind::Skt,
                                        LossKind::Rank};
  const Index b = 3, embed_dim = 4, feature_dim = 8;
  Vocabulary vocab = Vocabulary::from_tokens(
      {kSentenceStart, kSentenceEnd, kUnknown, "a", "b", "c", "d", "e", "f", "g", "h"});

  std::vector<GradCheckCase> grid;
  std::uint64_t cell = 0;
  for (EncoderKind ek : encoders) {
    for (LossKind lk : losses) {
      GradCheckCase result;
      result.encoder = ek;
      result.loss = lk;
      for (int inst = 0; inst < instances; ++inst) {
        Rng rng(derive_seed(seed, cell * 1000 + static_cast<std::uint64_t>(inst)));
        EncoderSpec spec;
        switch (ek) {
          case EncoderKind::BowSum: spec = EncoderSpec::bow(BowMode::Sum); break;
          case EncoderKind::BowMean: spec = EncoderSpec::bow(BowMode::Mean); break;
          case EncoderKind::RnnGru: spec = EncoderSpec::rnn(EncoderKind::RnnGru, 2, 5); break;
          case EncoderKind::RnnLstm: spec = EncoderSpec::rnn(EncoderKind::RnnLstm, 2, 5); break;
          case EncoderKind::Cnn: spec = EncoderSpec::cnn(3); break;
        }
        LossSpec loss;
        loss.kind = lk;
        loss.skt_alpha = 1.0;
        loss.rank_margin = 0.2;

        ParamMap params = init_params(spec, vocab.size(), embed_dim, feature_dim, 0.5, rng);
        Matrix feats(b, feature_dim);
        for (Index r = 0; r < b; ++r) {
          for (Index c = 0; c < feature_dim; ++c) feats(r, c) = rng.normal();
        }
        std::vector<std::vector<int>> ids(static_cast<std::size_t>(b));
        for (auto& seq : ids) {
          seq.push_back(vocab.start_id());
          const std::uint64_t len = 3 + rng.below(4);
          for (std::uint64_t k = 0; k < len; ++k) {
            seq.push_back(3 + static_cast<int>(rng.below(8)));
          }
          seq.push_back(vocab.end_id());
        }
        PairBatch batch = make_contrastive_batch(std::move(feats), std::move(ids), rng);

        BatchGradients bg = backward_batch(spec, params, batch, loss);
        auto objective = [&](const ParamMap& p) {
          Vector sims = forward_batch(spec, p, batch);
          return loss_with_grad(loss, sims, batch.labels).value;
        };
        const Scalar err = finite_difference_check(objective, params, bg.grads, h);
        result.max_rel_error = std::max(result.max_rel_error, err);
      }
      grid.push_back(result);
      ++cell;
    }
  }
  return grid;
}

}  // namespace vete
