// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "vete/common.hpp"
#include "vete/rng.hpp"
#include "vete/tensors.hpp"

namespace vete {

enum class EncoderKind { BowSum, BowMean, RnnGru, RnnLstm, Cnn };
enum class BowMode { Sum, Mean };

inline std::string to_string(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::BowSum: return "BOW_SUM";
    case EncoderKind::BowMean: return "BOW_MEAN";
    case EncoderKind::RnnGru: return "RNN_GRU";
    case EncoderKind::RnnLstm: return "RNN_LSTM";
    case EncoderKind::Cnn: return "CNN";
  }
  throw ConfigError("unknown encoder kind");
}

inline EncoderKind encoder_kind_from_string(const std::string& name) {
  if (name == "BOW_SUM" || name == "bow_sum") return EncoderKind::BowSum;
  if (name == "BOW_MEAN" || name == "bow_mean") return EncoderKind::BowMean;
  if (name == "RNN_GRU" || name == "rnn_gru") return EncoderKind::RnnGru;
  if (name == "RNN_LSTM" || name == "rnn_lstm") return EncoderKind::RnnLstm;
  if (name == "CNN" || name == "cnn") return EncoderKind::Cnn;
  throw ConfigError("unknown encoder kind: " + name);
}

// Which text encoder to use and its structural constants. RNN-only and
// CNN-only fields stay at their zero/empty sentinels for other kinds.
struct EncoderSpec {
  EncoderKind kind = EncoderKind::BowSum;
  int layers = 0;                  // RNN stack depth
  int hidden = 0;                  // RNN hidden size / CNN channels per width
  std::vector<int> filter_widths;  // CNN only
  bool normalize_output = false;

  static EncoderSpec bow(BowMode mode, bool normalize = false) {
    EncoderSpec spec;
    spec.kind = mode == BowMode::Sum ? EncoderKind::BowSum : EncoderKind::BowMean;
    spec.normalize_output = normalize;
    return spec;
  }

  static EncoderSpec rnn(EncoderKind cell, int layers, int hidden, bool normalize = false) {
    EncoderSpec spec;
    spec.kind = cell;
    spec.layers = layers;
    spec.hidden = hidden;
    spec.normalize_output = normalize;
    spec.validate();
    return spec;
  }

  static EncoderSpec cnn(int channels, std::vector<int> widths = {2, 3, 4, 5},
                         bool normalize = false) {
    EncoderSpec spec;
    spec.kind = EncoderKind::Cnn;
    spec.hidden = channels;
    spec.filter_widths = std::move(widths);
    spec.normalize_output = normalize;
    spec.validate();
    return spec;
  }

  bool is_bow() const { return kind == EncoderKind::BowSum || kind == EncoderKind::BowMean; }
  bool is_rnn() const { return kind == EncoderKind::RnnGru || kind == EncoderKind::RnnLstm; }
  bool is_cnn() const { return kind == EncoderKind::Cnn; }

  BowMode bow_mode() const {
    if (!is_bow()) throw ConfigError("not a BOW encoder");
    return kind == EncoderKind::BowSum ? BowMode::Sum : BowMode::Mean;
  }

  void validate() const {
    if (is_bow()) {
      if (layers != 0 || hidden != 0 || !filter_widths.empty()) {
        throw ConfigError("BOW encoder takes no layers/hidden/filter_widths");
      }
    } else if (is_rnn()) {
      if (layers < 1) throw ConfigError("RNN encoder needs layers >= 1");
      if (hidden < 1) throw ConfigError("RNN encoder needs hidden >= 1");
      if (!filter_widths.empty()) throw ConfigError("RNN encoder takes no filter_widths");
    } else {
      if (hidden < 1) throw ConfigError("CNN encoder needs hidden (channels) >= 1");
      if (layers != 0) throw ConfigError("CNN encoder takes no layers");
      if (filter_widths.empty()) throw ConfigError("CNN encoder needs filter widths");
      for (int w : filter_widths) {
        if (w < 1) throw ConfigError("CNN filter widths must be >= 1");
      }
      std::vector<int> sorted = filter_widths;
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw ConfigError("CNN filter widths must be distinct");
      }
    }
  }
};

namespace detail {

inline Scalar sigmoid(Scalar x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Vector sigmoid(const Vector& x) {
  return x.unaryExpr([](Scalar v) { return sigmoid(v); });
}

inline std::string rnn_layer_name(int layer, const char* part) {
  return "rnn.l" + std::to_string(layer) + "." + part;
}

inline std::string cnn_width_name(int width, const char* part) {
  return "cnn.w" + std::to_string(width) + "." + part;
}

}  // namespace detail

// Allocates and initializes all encoder parameters, including the word
// embedding matrix (|V| x N) and the image projection (F x N plus bias).
// Weights are uniform(-init_scale, init_scale); the LSTM forget-gate bias
// starts at 1.
inline ParamMap init_params(const EncoderSpec& spec, int vocab_size, Index embed_dim,
                            Index feature_dim, Scalar init_scale, Rng& rng) {
  spec.validate();
  if (vocab_size < 1 || embed_dim < 1 || feature_dim < 1) {
    throw ConfigError("vocab/embedding/feature dims must be positive");
  }
  ParamMap params;
  auto uniform_matrix = [&](Index rows, Index cols) {
    Matrix m(rows, cols);
    for (Index c = 0; c < cols; ++c) {
      for (Index r = 0; r < rows; ++r) m(r, c) = rng.uniform(-init_scale, init_scale);
    }
    return m;
  };

  params.emplace("embedding", uniform_matrix(vocab_size, embed_dim));
  params.emplace("img_proj.weight", uniform_matrix(feature_dim, embed_dim));
  params.emplace("img_proj.bias", Matrix::Zero(embed_dim, 1));

  if (spec.is_rnn()) {
    const Index H = spec.hidden;
    const Index gates = spec.kind == EncoderKind::RnnGru ? 3 : 4;
    for (int l = 0; l < spec.layers; ++l) {
      const Index in_dim = l == 0 ? embed_dim : H;
      params.emplace(detail::rnn_layer_name(l, "wx"), uniform_matrix(gates * H, in_dim));
      params.emplace(detail::rnn_layer_name(l, "wh"), uniform_matrix(gates * H, H));
      Matrix b = Matrix::Zero(gates * H, 1);
      if (spec.kind == EncoderKind::RnnLstm) {
        b.block(H, 0, H, 1).setOnes();  // forget gate
      }
      params.emplace(detail::rnn_layer_name(l, "b"), std::move(b));
    }
    if (H != embed_dim) {
      params.emplace("rnn.out", uniform_matrix(embed_dim, H));
    }
  } else if (spec.is_cnn()) {
    const Index C = spec.hidden;
    for (int w : spec.filter_widths) {
      params.emplace(detail::cnn_width_name(w, "weight"), uniform_matrix(C, w * embed_dim));
      params.emplace(detail::cnn_width_name(w, "bias"), Matrix::Zero(C, 1));
    }
    const Index pooled = C * static_cast<Index>(spec.filter_widths.size());
    params.emplace("cnn.fc.weight", uniform_matrix(embed_dim, pooled));
    params.emplace("cnn.fc.bias", Matrix::Zero(embed_dim, 1));
  }
  return params;
}

// --- BOW ---

inline Vector bow_encode(const ParamMap& params, const std::vector<int>& token_ids,
                         BowMode mode, bool normalize) {
  if (token_ids.empty()) throw EmptyInput("bow_encode: empty token sequence");
  const Matrix& emb = params.at("embedding");
  Vector sum = Vector::Zero(emb.cols());
  for (int id : token_ids) sum += emb.row(id).transpose();
  if (mode == BowMode::Mean) sum /= static_cast<Scalar>(token_ids.size());
  if (normalize) {
    Scalar norm = sum.norm();
    if (norm <= 1e-12) {
      throw DegenerateEmbedding("bow_encode: aggregate has (near-)zero norm");
    }
    sum /= norm;
  }
  return sum;
}

namespace detail {

// Gradient of y = v / |v| given dL/dy, evaluated at v.
inline Vector normalize_backward(const Vector& v, const Vector& upstream) {
  Scalar norm = v.norm();
  if (norm <= 1e-12) {
    throw DegenerateEmbedding("normalize: vector has (near-)zero norm");
  }
  Vector y = v / norm;
  return (upstream - y.dot(upstream) * y) / norm;
}

inline void bow_backward(const ParamMap& params, const std::vector<int>& token_ids,
                         BowMode mode, bool normalize, const Vector& upstream,
                         ParamMap& grads) {
  if (token_ids.empty()) throw EmptyInput("bow_backward: empty token sequence");
  Vector up = upstream;
  if (normalize) {
    const Matrix& emb = params.at("embedding");
    Vector sum = Vector::Zero(emb.cols());
    for (int id : token_ids) sum += emb.row(id).transpose();
    if (mode == BowMode::Mean) sum /= static_cast<Scalar>(token_ids.size());
    up = normalize_backward(sum, upstream);
  }
  if (mode == BowMode::Mean) up /= static_cast<Scalar>(token_ids.size());
  Matrix& demb = grads.at("embedding");
  for (int id : token_ids) demb.row(id) += up.transpose();
}

// --- RNN (GRU / LSTM) ---

struct GruStep {
  Vector x, h_prev, z, r, rh, hc, h;
};

struct LstmStep {
  Vector x, h_prev, c_prev, i, f, o, g, c, tc, h;
};

struct RnnTrace {
  // [layer][time]
  std::vector<std::vector<GruStep>> gru;
  std::vector<std::vector<LstmStep>> lstm;
  Vector raw_output;  // top-layer projection target before normalize
};

inline Vector embedding_row(const ParamMap& params, int id) {
  return params.at("embedding").row(id).transpose();
}

inline RnnTrace rnn_forward_trace(const EncoderSpec& spec, const ParamMap& params,
                                  const std::vector<int>& token_ids) {
  if (token_ids.empty()) throw EmptyInput("rnn_encode: empty token sequence");
  const Index H = spec.hidden;
  const std::size_t T = token_ids.size();
  const bool gru = spec.kind == EncoderKind::RnnGru;

  RnnTrace trace;
  if (gru) {
    trace.gru.resize(spec.layers);
  } else {
    trace.lstm.resize(spec.layers);
  }

  std::vector<Vector> inputs(T);
  for (std::size_t t = 0; t < T; ++t) inputs[t] = embedding_row(params, token_ids[t]);

  for (int l = 0; l < spec.layers; ++l) {
    const Matrix& wx = params.at(rnn_layer_name(l, "wx"));
    const Matrix& wh = params.at(rnn_layer_name(l, "wh"));
    const Vector b = params.at(rnn_layer_name(l, "b")).col(0);
    Vector h = Vector::Zero(H);
    Vector c = Vector::Zero(H);
    std::vector<Vector> outputs(T);
    for (std::size_t t = 0; t < T; ++t) {
      const Vector& x = inputs[t];
      if (gru) {
        GruStep step;
        step.x = x;
        step.h_prev = h;
        Vector pre_zr = wx.topRows(2 * H) * x + wh.topRows(2 * H) * h + b.head(2 * H);
        step.z = sigmoid(pre_zr.head(H));
        step.r = sigmoid(pre_zr.tail(H));
        step.rh = step.r.cwiseProduct(h);
        Vector pre_c = wx.bottomRows(H) * x + wh.bottomRows(H) * step.rh + b.tail(H);
        step.hc = pre_c.array().tanh();
        step.h = (Vector::Ones(H) - step.z).cwiseProduct(h) + step.z.cwiseProduct(step.hc);
        h = step.h;
        trace.gru[l].push_back(std::move(step));
      } else {
        LstmStep step;
        step.x = x;
        step.h_prev = h;
        step.c_prev = c;
        Vector pre = wx * x + wh * h + b;
        step.i = sigmoid(Vector(pre.segment(0, H)));
        step.f = sigmoid(Vector(pre.segment(H, H)));
        step.o = sigmoid(Vector(pre.segment(2 * H, H)));
        step.g = pre.segment(3 * H, H).array().tanh();
        step.c = step.f.cwiseProduct(c) + step.i.cwiseProduct(step.g);
        step.tc = step.c.array().tanh();
        step.h = step.o.cwiseProduct(step.tc);
        h = step.h;
        c = step.c;
        trace.lstm[l].push_back(std::move(step));
      }
      outputs[t] = h;
    }
    inputs = std::move(outputs);
  }

  const Vector& top = inputs.back();
  if (params.count("rnn.out")) {
    trace.raw_output = params.at("rnn.out") * top;
  } else {
    trace.raw_output = top;
  }
  return trace;
}

inline void rnn_backward(const EncoderSpec& spec, const ParamMap& params,
                         const std::vector<int>& token_ids, const Vector& upstream,
                         ParamMap& grads) {
  RnnTrace trace = rnn_forward_trace(spec, params, token_ids);
  const Index H = spec.hidden;
  const std::size_t T = token_ids.size();
  const bool gru = spec.kind == EncoderKind::RnnGru;

  Vector up = upstream;
  if (spec.normalize_output) up = normalize_backward(trace.raw_output, upstream);

  // Gradient flowing into the final hidden state of the top layer.
  Vector d_top;
  if (params.count("rnn.out")) {
    const Matrix& out = params.at("rnn.out");
    const Vector& h_final =
        gru ? trace.gru[spec.layers - 1].back().h : trace.lstm[spec.layers - 1].back().h;
    grads.at("rnn.out") += up * h_final.transpose();
    d_top = out.transpose() * up;
  } else {
    d_top = up;
  }

  // dh_from_above[t]: gradient into layer l's output at step t coming from
  // the layer above (or the output map for the top layer's last step).
  std::vector<Vector> dh_from_above(T, Vector::Zero(H));
  dh_from_above[T - 1] = d_top;

  for (int l = spec.layers - 1; l >= 0; --l) {
    const Matrix& wx = params.at(rnn_layer_name(l, "wx"));
    const Matrix& wh = params.at(rnn_layer_name(l, "wh"));
    Matrix& dwx = grads.at(rnn_layer_name(l, "wx"));
    Matrix& dwh = grads.at(rnn_layer_name(l, "wh"));
    Matrix& db = grads.at(rnn_layer_name(l, "b"));

    const Index in_dim = l == 0 ? params.at("embedding").cols() : H;
    std::vector<Vector> dx(T, Vector::Zero(in_dim));
    Vector dh_carry = Vector::Zero(H);
    Vector dc_carry = Vector::Zero(H);

    for (std::size_t t = T; t-- > 0;) {
      Vector dh = dh_from_above[t] + dh_carry;
      if (gru) {
        const GruStep& s = trace.gru[l][t];
        Vector dz = dh.cwiseProduct(s.hc - s.h_prev);
        Vector dhc = dh.cwiseProduct(s.z);
        Vector dh_prev = dh.cwiseProduct(Vector::Ones(H) - s.z);

        Vector dac = dhc.cwiseProduct(Vector::Ones(H) - s.hc.cwiseProduct(s.hc));
        dwx.bottomRows(H) += dac * s.x.transpose();
        dwh.bottomRows(H) += dac * s.rh.transpose();
        db.col(0).tail(H) += dac;
        dx[t] += wx.bottomRows(H).transpose() * dac;
        Vector drh = wh.bottomRows(H).transpose() * dac;
        Vector dr = drh.cwiseProduct(s.h_prev);
        dh_prev += drh.cwiseProduct(s.r);

        Vector daz = dz.cwiseProduct(s.z).cwiseProduct(Vector::Ones(H) - s.z);
        Vector dar = dr.cwiseProduct(s.r).cwiseProduct(Vector::Ones(H) - s.r);
        dwx.topRows(H) += daz * s.x.transpose();
        dwh.topRows(H) += daz * s.h_prev.transpose();
        db.col(0).head(H) += daz;
        dwx.block(H, 0, H, in_dim) += dar * s.x.transpose();
        dwh.block(H, 0, H, H) += dar * s.h_prev.transpose();
        db.col(0).segment(H, H) += dar;
        dx[t] += wx.topRows(H).transpose() * daz + wx.block(H, 0, H, in_dim).transpose() * dar;
        dh_prev += wh.topRows(H).transpose() * daz + wh.block(H, 0, H, H).transpose() * dar;

        dh_carry = dh_prev;
      } else {
        const LstmStep& s = trace.lstm[l][t];
        Vector do_ = dh.cwiseProduct(s.tc);
        Vector dc = dc_carry +
                    dh.cwiseProduct(s.o).cwiseProduct(Vector::Ones(H) - s.tc.cwiseProduct(s.tc));
        Vector di = dc.cwiseProduct(s.g);
        Vector dg = dc.cwiseProduct(s.i);
        Vector df = dc.cwiseProduct(s.c_prev);
        dc_carry = dc.cwiseProduct(s.f);

        Vector da(4 * H);
        da.segment(0, H) = di.cwiseProduct(s.i).cwiseProduct(Vector::Ones(H) - s.i);
        da.segment(H, H) = df.cwiseProduct(s.f).cwiseProduct(Vector::Ones(H) - s.f);
        da.segment(2 * H, H) = do_.cwiseProduct(s.o).cwiseProduct(Vector::Ones(H) - s.o);
        da.segment(3 * H, H) = dg.cwiseProduct(Vector::Ones(H) - s.g.cwiseProduct(s.g));

        dwx += da * s.x.transpose();
        dwh += da * s.h_prev.transpose();
        db.col(0) += da;
        dx[t] += wx.transpose() * da;
        dh_carry = wh.transpose() * da;
      }
    }

    if (l == 0) {
      Matrix& demb = grads.at("embedding");
      for (std::size_t t = 0; t < T; ++t) {
        demb.row(token_ids[t]) += dx[t].transpose();
      }
    } else {
      dh_from_above = std::move(dx);
    }
  }
}

// --- CNN ---

struct CnnTrace {
  Matrix embedded;                    // T' x N, right zero-padded
  std::size_t seq_len = 0;            // unpadded length
  std::vector<Matrix> activations;    // per width: C x positions, tanh applied
  std::vector<std::vector<Index>> argmax;  // per width: argmax position per channel
  Vector pooled;
  Vector raw_output;
};

inline CnnTrace cnn_forward_trace(const EncoderSpec& spec, const ParamMap& params,
                                  const std::vector<int>& token_ids) {
  if (token_ids.empty()) throw EmptyInput("cnn_encode: empty token sequence");
  const Matrix& emb = params.at("embedding");
  const Index N = emb.cols();
  const Index C = spec.hidden;
  const int max_width = *std::max_element(spec.filter_widths.begin(), spec.filter_widths.end());
  const Index padded = std::max<Index>(static_cast<Index>(token_ids.size()), max_width);

  CnnTrace trace;
  trace.seq_len = token_ids.size();
  trace.embedded = Matrix::Zero(padded, N);
  for (std::size_t t = 0; t < token_ids.size(); ++t) {
    trace.embedded.row(static_cast<Index>(t)) = emb.row(token_ids[t]);
  }

  trace.pooled = Vector(C * static_cast<Index>(spec.filter_widths.size()));
  Index pool_at = 0;
  for (int w : spec.filter_widths) {
    const Matrix& weight = params.at(cnn_width_name(w, "weight"));
    const Vector bias = params.at(cnn_width_name(w, "bias")).col(0);
    const Index positions = padded - w + 1;
    Matrix acts(C, positions);
    for (Index p = 0; p < positions; ++p) {
      Vector window(w * N);
      for (int k = 0; k < w; ++k) {
        window.segment(k * N, N) = trace.embedded.row(p + k).transpose();
      }
      acts.col(p) = (weight * window + bias).array().tanh();
    }
    std::vector<Index> argmax(C);
    for (Index c = 0; c < C; ++c) {
      Index best = 0;
      acts.row(c).maxCoeff(&best);
      argmax[c] = best;
      trace.pooled[pool_at + c] = acts(c, best);
    }
    trace.activations.push_back(std::move(acts));
    trace.argmax.push_back(std::move(argmax));
    pool_at += C;
  }

  trace.raw_output = params.at("cnn.fc.weight") * trace.pooled + params.at("cnn.fc.bias").col(0);
  return trace;
}

inline void cnn_backward(const EncoderSpec& spec, const ParamMap& params,
                         const std::vector<int>& token_ids, const Vector& upstream,
                         ParamMap& grads) {
  CnnTrace trace = cnn_forward_trace(spec, params, token_ids);
  const Matrix& emb = params.at("embedding");
  const Index N = emb.cols();
  const Index C = spec.hidden;

  Vector up = upstream;
  if (spec.normalize_output) up = normalize_backward(trace.raw_output, upstream);

  grads.at("cnn.fc.weight") += up * trace.pooled.transpose();
  grads.at("cnn.fc.bias").col(0) += up;
  Vector dpooled = params.at("cnn.fc.weight").transpose() * up;

  Matrix dembedded = Matrix::Zero(trace.embedded.rows(), N);
  Index pool_at = 0;
  for (std::size_t wi = 0; wi < spec.filter_widths.size(); ++wi) {
    const int w = spec.filter_widths[wi];
    const Matrix& weight = params.at(cnn_width_name(w, "weight"));
    Matrix& dweight = grads.at(cnn_width_name(w, "weight"));
    Matrix& dbias = grads.at(cnn_width_name(w, "bias"));
    for (Index c = 0; c < C; ++c) {
      const Index p = trace.argmax[wi][c];
      const Scalar act = trace.activations[wi](c, p);
      const Scalar da = dpooled[pool_at + c] * (1.0 - act * act);
      Vector window(w * N);
      for (int k = 0; k < w; ++k) {
        window.segment(k * N, N) = trace.embedded.row(p + k).transpose();
      }
      dweight.row(c) += da * window.transpose();
      dbias(c, 0) += da;
      for (int k = 0; k < w; ++k) {
        dembedded.row(p + k) += da * weight.row(c).segment(k * N, N);
      }
    }
    pool_at += C;
  }

  Matrix& demb = grads.at("embedding");
  for (std::size_t t = 0; t < trace.seq_len; ++t) {
    demb.row(token_ids[t]) += dembedded.row(static_cast<Index>(t));
  }
}

}  // namespace detail

inline Vector rnn_encode(const EncoderSpec& spec, const ParamMap& params,
                         const std::vector<int>& token_ids) {
  Vector raw = detail::rnn_forward_trace(spec, params, token_ids).raw_output;
  if (spec.normalize_output) {
    Scalar norm = raw.norm();
    if (norm <= 1e-12) throw DegenerateEmbedding("rnn_encode: (near-)zero output norm");
    raw /= norm;
  }
  return raw;
}

inline Vector cnn_encode(const EncoderSpec& spec, const ParamMap& params,
                         const std::vector<int>& token_ids) {
  Vector raw = detail::cnn_forward_trace(spec, params, token_ids).raw_output;
  if (spec.normalize_output) {
    Scalar norm = raw.norm();
    if (norm <= 1e-12) throw DegenerateEmbedding("cnn_encode: (near-)zero output norm");
    raw /= norm;
  }
  return raw;
}

// E_txt(S): sentence embedding for a token-id sequence under any encoder.
inline Vector encode_sequence(const EncoderSpec& spec, const ParamMap& params,
                              const std::vector<int>& token_ids) {
  if (spec.is_bow()) {
    return bow_encode(params, token_ids, spec.bow_mode(), spec.normalize_output);
  }
  if (spec.is_rnn()) return rnn_encode(spec, params, token_ids);
  return cnn_encode(spec, params, token_ids);
}

// Accumulates d(upstream . output)/d theta into `grads` for every tensor.
// Embedding rows of tokens absent from `token_ids` are untouched.
inline void encode_sequence_backward(const EncoderSpec& spec, const ParamMap& params,
                                     const std::vector<int>& token_ids,
                                     const Vector& upstream, ParamMap& grads) {
  if (spec.is_bow()) {
    detail::bow_backward(params, token_ids, spec.bow_mode(), spec.normalize_output, upstream,
                         grads);
  } else if (spec.is_rnn()) {
    detail::rnn_backward(spec, params, token_ids, upstream, grads);
  } else {
    detail::cnn_backward(spec, params, token_ids, upstream, grads);
  }
}

// --- image projection and similarity ---

// W^T f + b, taking a feature vector into the embedding space.
inline Vector project_image(const Matrix& weight, const Vector& bias, const Vector& feature) {
  if (feature.size() != weight.rows()) {
    throw ShapeError("project_image: feature dim " + std::to_string(feature.size()) +
                     " vs projection dim " + std::to_string(weight.rows()));
  }
  return weight.transpose() * feature + bias;
}

inline Scalar cosine_similarity(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw ShapeError("cosine_similarity: length mismatch");
  Scalar na = a.norm(), nb = b.norm();
  if (na <= 1e-12 || nb <= 1e-12) {
    throw DegenerateVector("cosine_similarity: (near-)zero norm input");
  }
  return a.dot(b) / (na * nb);
}

struct CosineGrad {
  Scalar value;
  Vector d_a;
  Vector d_b;
};

inline CosineGrad cosine_with_grad(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw ShapeError("cosine_with_grad: length mismatch");
  Scalar na = a.norm(), nb = b.norm();
  if (na <= 1e-12 || nb <= 1e-12) {
    throw DegenerateVector("cosine_with_grad: (near-)zero norm input");
  }
  Scalar value = a.dot(b) / (na * nb);
  CosineGrad out;
  out.value = value;
  out.d_a = b / (na * nb) - value * a / (na * na);
  out.d_b = a / (na * nb) - value * b / (nb * nb);
  return out;
}

}  // namespace vete
