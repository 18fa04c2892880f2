// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "vete/common.hpp"
#include "vete/corpus.hpp"
#include "vete/encoders.hpp"
#include "vete/tensors.hpp"

namespace vete {

// A trained (or initialized) embedding model: text encoder parameters plus
// the image-feature projection, bound to the vocabulary they were built on.
struct Model {
  EncoderSpec encoder;
  Vocabulary vocab;
  ParamMap params;
  Index embed_dim = 0;
  Index feature_dim = 0;
  std::uint64_t trained_steps = 0;
};

inline Model make_model(const EncoderSpec& spec, Vocabulary vocab, Index embed_dim,
                        Index feature_dim, Scalar init_scale, Rng& rng) {
  Model model;
  model.encoder = spec;
  model.vocab = std::move(vocab);
  model.embed_dim = embed_dim;
  model.feature_dim = feature_dim;
  model.params =
      init_params(spec, model.vocab.size(), embed_dim, feature_dim, init_scale, rng);
  return model;
}

// E_txt(S) for raw text: tokenize, map through the vocabulary, encode.
inline Vector embed_sentence(const Model& model, const std::string& text) {
  return encode_sequence(model.encoder, model.params,
                         encode_caption(model.vocab, tokenize(text)));
}

// W E_img(I) + b for a precomputed feature vector.
inline Vector embed_image(const Model& model, const Vector& feature) {
  return project_image(model.params.at("img_proj.weight"),
                       model.params.at("img_proj.bias").col(0), feature);
}

namespace detail {

constexpr char kModelMagic[4] = {'V', 'E', 'T', 'M'};
constexpr std::uint32_t kModelVersion = 1;

inline std::uint32_t encoder_kind_code(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::BowSum: return 0;
    case EncoderKind::BowMean: return 1;
    case EncoderKind::RnnGru: return 2;
    case EncoderKind::RnnLstm: return 3;
    case EncoderKind::Cnn: return 4;
  }
  throw ConfigError("unknown encoder kind");
}

inline EncoderKind encoder_kind_from_code(std::uint32_t code) {
  switch (code) {
    case 0: return EncoderKind::BowSum;
    case 1: return EncoderKind::BowMean;
    case 2: return EncoderKind::RnnGru;
    case 3: return EncoderKind::RnnLstm;
    case 4: return EncoderKind::Cnn;
  }
  throw FormatError("unknown encoder kind code " + std::to_string(code));
}

inline void write_string16(std::ofstream& out, const std::string& s) {
  if (s.size() > UINT16_MAX) throw FormatError("string too long for checkpoint: " + s);
  write_le(out, static_cast<std::uint16_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

}  // namespace detail

// Binary checkpoint: magic "VETM", version u32, encoder header, dims,
// trained-step count, id-ordered vocabulary, then name-sorted tensors as
// rows u64, cols u64, column-major f32 (little-endian).
inline void save_model(const Model& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write model file: " + path);
  out.write(detail::kModelMagic, 4);
  detail::write_le(out, detail::kModelVersion);

  detail::write_le(out, detail::encoder_kind_code(model.encoder.kind));
  detail::write_le(out, static_cast<std::uint32_t>(model.encoder.layers));
  detail::write_le(out, static_cast<std::uint32_t>(model.encoder.hidden));
  detail::write_le(out, static_cast<std::uint32_t>(model.encoder.filter_widths.size()));
  for (int w : model.encoder.filter_widths) {
    detail::write_le(out, static_cast<std::uint32_t>(w));
  }
  detail::write_le(out, static_cast<std::uint8_t>(model.encoder.normalize_output ? 1 : 0));

  detail::write_le(out, static_cast<std::uint32_t>(model.embed_dim));
  detail::write_le(out, static_cast<std::uint32_t>(model.feature_dim));
  detail::write_le(out, model.trained_steps);

  detail::write_le(out, static_cast<std::uint64_t>(model.vocab.size()));
  for (const auto& token : model.vocab.tokens()) {
    detail::write_string16(out, token);
  }

  detail::write_le(out, static_cast<std::uint64_t>(model.params.size()));
  for (const auto& [name, tensor] : model.params) {
    detail::write_string16(out, name);
    detail::write_le(out, static_cast<std::uint64_t>(tensor.rows()));
    detail::write_le(out, static_cast<std::uint64_t>(tensor.cols()));
    for (Index c = 0; c < tensor.cols(); ++c) {
      for (Index r = 0; r < tensor.rows(); ++r) {
        detail::write_le(out, static_cast<float>(tensor(r, c)));
      }
    }
  }
  if (!out) throw IoError("short write to model file: " + path);
}

inline Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file: " + path);
  auto fail = [&](const std::string& what) -> FormatError {
    auto off = in.tellg();
    std::string at = off < 0 ? "eof" : std::to_string(static_cast<long long>(off));
    return FormatError(path + ": " + what + " (at byte " + at + ")");
  };

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, detail::kModelMagic, 4) != 0) {
    throw fail("bad magic, not a VETM model file");
  }
  std::uint32_t version = 0;
  if (!detail::read_le(in, version)) throw fail("truncated header");
  if (version != detail::kModelVersion) {
    throw fail("unsupported version " + std::to_string(version));
  }

  Model model;
  std::uint32_t kind_code = 0, layers = 0, hidden = 0, n_widths = 0;
  if (!detail::read_le(in, kind_code) || !detail::read_le(in, layers) ||
      !detail::read_le(in, hidden) || !detail::read_le(in, n_widths)) {
    throw fail("truncated encoder header");
  }
  model.encoder.kind = detail::encoder_kind_from_code(kind_code);
  model.encoder.layers = static_cast<int>(layers);
  model.encoder.hidden = static_cast<int>(hidden);
  for (std::uint32_t i = 0; i < n_widths; ++i) {
    std::uint32_t w = 0;
    if (!detail::read_le(in, w)) throw fail("truncated filter widths");
    model.encoder.filter_widths.push_back(static_cast<int>(w));
  }
  std::uint8_t normalize = 0;
  if (!detail::read_le(in, normalize)) throw fail("truncated encoder header");
  model.encoder.normalize_output = normalize != 0;
  try {
    model.encoder.validate();
  } catch (const ConfigError& e) {
    throw FormatError(path + ": invalid encoder header: " + e.what());
  }

  std::uint32_t embed_dim = 0, feature_dim = 0;
  if (!detail::read_le(in, embed_dim) || !detail::read_le(in, feature_dim) ||
      !detail::read_le(in, model.trained_steps)) {
    throw fail("truncated header");
  }
  if (embed_dim == 0 || feature_dim == 0) throw fail("zero embedding/feature dim");
  model.embed_dim = static_cast<Index>(embed_dim);
  model.feature_dim = static_cast<Index>(feature_dim);

  std::uint64_t vocab_count = 0;
  if (!detail::read_le(in, vocab_count)) throw fail("truncated vocabulary");
  std::vector<std::string> tokens;
  tokens.reserve(vocab_count);
  for (std::uint64_t i = 0; i < vocab_count; ++i) {
    std::uint16_t len = 0;
    if (!detail::read_le(in, len)) throw fail("truncated vocabulary");
    std::string tok(len, '\0');
    in.read(tok.data(), len);
    if (!in) throw fail("truncated vocabulary token " + std::to_string(i));
    tokens.push_back(std::move(tok));
  }
  model.vocab = Vocabulary::from_tokens(std::move(tokens));

  std::uint64_t n_tensors = 0;
  if (!detail::read_le(in, n_tensors)) throw fail("truncated tensor table");
  for (std::uint64_t i = 0; i < n_tensors; ++i) {
    std::uint16_t name_len = 0;
    if (!detail::read_le(in, name_len)) throw fail("truncated tensor name");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw fail("truncated tensor name");
    std::uint64_t rows = 0, cols = 0;
    if (!detail::read_le(in, rows) || !detail::read_le(in, cols)) {
      throw fail("truncated tensor dims for " + name);
    }
    Matrix tensor(static_cast<Index>(rows), static_cast<Index>(cols));
    for (std::uint64_t c = 0; c < cols; ++c) {
      for (std::uint64_t r = 0; r < rows; ++r) {
        float f = 0.0f;
        if (!detail::read_le(in, f)) throw fail("truncated tensor data for " + name);
        if (!std::isfinite(f)) throw fail("non-finite value in tensor " + name);
        tensor(static_cast<Index>(r), static_cast<Index>(c)) = static_cast<double>(f);
      }
    }
    if (!model.params.emplace(name, std::move(tensor)).second) {
      throw fail("duplicate tensor " + name);
    }
  }

  // Structural check: the tensor set must match what a fresh model of this
  // shape would allocate.
  Rng probe(0);
  ParamMap reference = init_params(model.encoder, model.vocab.size(), model.embed_dim,
                                   model.feature_dim, 0.1, probe);
  if (reference.size() != model.params.size()) {
    throw FormatError(path + ": tensor set does not match encoder shape");
  }
  for (const auto& [name, ref] : reference) {
    auto it = model.params.find(name);
    if (it == model.params.end()) throw FormatError(path + ": missing tensor " + name);
    if (it->second.rows() != ref.rows() || it->second.cols() != ref.cols()) {
      throw FormatError(path + ": tensor " + name + " has shape " +
                        std::to_string(it->second.rows()) + "x" +
                        std::to_string(it->second.cols()) + ", expected " +
                        std::to_string(ref.rows()) + "x" + std::to_string(ref.cols()));
    }
  }
  return model;
}

}  // namespace vete
