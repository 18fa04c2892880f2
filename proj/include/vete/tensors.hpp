// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <map>
#include <string>

#include "vete/common.hpp"

namespace vete {

// Named parameter tensors. std::map keeps iteration order stable
// (lexicographic by name), which fixes the flattening order used by the
// gradient checker and the checkpoint layout.
using ParamMap = std::map<std::string, Matrix>;

inline ParamMap zeros_like(const ParamMap& params) {
  ParamMap out;
  for (const auto& [name, tensor] : params) {
    out.emplace(name, Matrix::Zero(tensor.rows(), tensor.cols()));
  }
  return out;
}

inline Index total_size(const ParamMap& params) {
  Index n = 0;
  for (const auto& [name, tensor] : params) n += tensor.size();
  return n;
}

// dst += a * src, matched by name. Shapes must agree.
inline void add_scaled(ParamMap& dst, const ParamMap& src, Scalar a) {
  for (const auto& [name, tensor] : src) {
    auto it = dst.find(name);
    if (it == dst.end() || it->second.rows() != tensor.rows() ||
        it->second.cols() != tensor.cols()) {
      throw ShapeError("add_scaled: tensor mismatch for '" + name + "'");
    }
    it->second += a * tensor;
  }
}

inline Vector flatten(const ParamMap& params) {
  Vector flat(total_size(params));
  Index at = 0;
  for (const auto& [name, tensor] : params) {
    flat.segment(at, tensor.size()) = Eigen::Map<const Vector>(tensor.data(), tensor.size());
    at += tensor.size();
  }
  return flat;
}

// Inverse of flatten; writes into the existing shapes of `params`.
inline void unflatten(const Vector& flat, ParamMap& params) {
  if (flat.size() != total_size(params)) {
    throw ShapeError("unflatten: size mismatch");
  }
  Index at = 0;
  for (auto& [name, tensor] : params) {
    Eigen::Map<Vector>(tensor.data(), tensor.size()) = flat.segment(at, tensor.size());
    at += tensor.size();
  }
}

inline bool all_finite(const ParamMap& params) {
  for (const auto& [name, tensor] : params) {
    if (!tensor.allFinite()) return false;
  }
  return true;
}

inline Scalar global_norm(const ParamMap& params) {
  Scalar sq = 0.0;
  for (const auto& [name, tensor] : params) sq += tensor.squaredNorm();
  return std::sqrt(sq);
}

}  // namespace vete
