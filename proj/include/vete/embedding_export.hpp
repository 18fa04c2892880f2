// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "vete/common.hpp"
#include "vete/model.hpp"

namespace vete {

// Text word-vector format: header `count dim`, then one `token v1 .. vN`
// line per vocabulary entry in id order. %.9g keeps 32-bit precision.
inline void export_word_vectors(const Model& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write word vectors: " + path);
  const Matrix& emb = model.params.at("embedding");
  out << model.vocab.size() << ' ' << emb.cols() << '\n';
  char buf[64];
  for (int id = 0; id < model.vocab.size(); ++id) {
    out << model.vocab.token(id);
    for (Index c = 0; c < emb.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.9g", emb(id, c));
      out << ' ' << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("short write to word vectors: " + path);
}

struct WordVectors {
  std::vector<std::string> tokens;
  Matrix vectors;  // one row per token
};

inline WordVectors load_word_vectors(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open word vectors: " + path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path + ": missing header");
  std::istringstream header(line);
  long long count = 0, dim = 0;
  if (!(header >> count >> dim) || count < 1 || dim < 1) {
    throw FormatError(path + ":1: expected header 'count dim'");
  }
  WordVectors out;
  out.vectors = Matrix(count, dim);
  std::size_t line_no = 1;
  for (long long i = 0; i < count; ++i) {
    ++line_no;
    if (!std::getline(in, line)) {
      throw FormatError(path + ": expected " + std::to_string(count) + " rows, got " +
                        std::to_string(i));
    }
    std::istringstream row(line);
    std::string token;
    if (!(row >> token)) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": empty row");
    }
    for (long long c = 0; c < dim; ++c) {
      double v = 0.0;
      if (!(row >> v)) {
        throw FormatError(path + ":" + std::to_string(line_no) + ": expected " +
                          std::to_string(dim) + " components");
      }
      out.vectors(static_cast<Index>(i), static_cast<Index>(c)) = v;
    }
    double extra = 0.0;
    if (row >> extra) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": too many components");
    }
    out.tokens.push_back(std::move(token));
  }
  return out;
}

// TSV: sentence<TAB>v1,...,vN with the model's sentence embedding.
inline void export_sentence_vectors(const Model& model,
                                    const std::vector<std::string>& sentences,
                                    const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write sentence vectors: " + path);
  char buf[64];
  for (const auto& sentence : sentences) {
    Vector v = embed_sentence(model, sentence);
    out << sentence << '\t';
    for (Index i = 0; i < v.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.9g", v[i]);
      if (i) out << ',';
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("short write to sentence vectors: " + path);
}

}  // namespace vete
