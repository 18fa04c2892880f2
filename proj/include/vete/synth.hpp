// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vete/common.hpp"
#include "vete/corpus.hpp"
#include "vete/eval.hpp"
#include "vete/rng.hpp"

namespace vete {

// Synthetic compositional corpus: every word names one of k concepts, a
// caption's ground truth is the mean of its words' one-hot concept vectors,
// and the paired image feature is a fixed random linear map of that truth
// plus Gaussian noise. Linearly alignable by construction.
struct SyntheticSpec {
  int vocab_size = 50;
  int concepts = 8;
  int min_caption_len = 4;
  int max_caption_len = 8;
  int n_examples = 2000;
  Index feature_dim = 16;
  Scalar noise_sigma = 0.05;
  std::uint64_t seed = 0;

  void validate() const {
    if (concepts < 1) throw ConfigError("concepts must be >= 1");
    if (vocab_size < concepts) throw ConfigError("vocab_size must be >= concepts");
    if (noise_sigma < 0) throw ConfigError("noise_sigma must be >= 0");
    if (feature_dim < concepts) throw ConfigError("feature_dim must be >= concepts");
    if (min_caption_len < 1) throw ConfigError("min_caption_len must be >= 1");
    if (max_caption_len < min_caption_len) {
      throw ConfigError("max_caption_len must be >= min_caption_len");
    }
    if (n_examples < 1) throw ConfigError("n_examples must be >= 1");
  }
};

struct SyntheticData {
  std::vector<CaptionRecord> captions;
  FeatureTable features;
  StsDataset sts;
  BinaryPairSet pairs;
};

namespace detail {

struct SynthWorld {
  SyntheticSpec spec;
  Matrix map;  // feature_dim x concepts, entries N(0,1)/sqrt(k)

  int concept_of(int word) const { return word % spec.concepts; }

  int class_size(int c) const { return (spec.vocab_size - 1 - c) / spec.concepts + 1; }

  std::string word_text(int word) const { return "w" + std::to_string(word); }

  int word_for_concept(int c, Rng& rng) const {
    return c + spec.concepts * static_cast<int>(rng.below(class_size(c)));
  }

  // Captions are scene-bound: concepts 2s and 2s+1 only ever co-occur with
  // each other, so per-word image marginals collapse toward scene centroids
  // while each caption's true concept mix still varies within its scene.
  std::vector<int> sample_words(Rng& rng) const {
    const int scenes = (spec.concepts + 1) / 2;
    const int scene = static_cast<int>(rng.below(static_cast<std::uint64_t>(scenes)));
    const int first = 2 * scene;
    const int second = std::min(first + 1, spec.concepts - 1);
    const int len = spec.min_caption_len +
                    static_cast<int>(rng.below(
                        static_cast<std::uint64_t>(spec.max_caption_len - spec.min_caption_len + 1)));
    std::vector<int> words(static_cast<std::size_t>(len));
    for (auto& w : words) {
      const int c = rng.below(2) == 0 ? first : second;
      w = word_for_concept(c, rng);
    }
    return words;
  }

  // Same concept sequence, words independently resampled within each
  // concept class.
  std::vector<int> reword(const std::vector<int>& words, Rng& rng) const {
    std::vector<int> out(words.size());
    for (std::size_t i = 0; i < words.size(); ++i)
      out[i] = word_for_concept(concept_of(words[i]), rng);
    return out;
  }

  Vector truth(const std::vector<int>& words) const {
    Vector t = Vector::Zero(spec.concepts);
    for (int w : words) t[concept_of(w)] += 1.0;
    return t / static_cast<Scalar>(words.size());
  }

  std::string caption_text(const std::vector<int>& words) const {
    std::string text;
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (i) text += ' ';
      text += word_text(words[i]);
    }
    return text;
  }

  Vector feature_for(const Vector& truth_vec, Rng& rng) const {
    Vector noise(spec.feature_dim);
    for (Index i = 0; i < spec.feature_dim; ++i) noise[i] = rng.normal();
    return map * truth_vec + spec.noise_sigma * noise;
  }
};

}  // namespace detail

inline SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  detail::SynthWorld world;
  world.spec = spec;
  {
    Rng map_rng(derive_seed(spec.seed, 0x6d6170ull));
    world.map = Matrix(spec.feature_dim, spec.concepts);
    const Scalar scale = 1.0 / std::sqrt(static_cast<Scalar>(spec.concepts));
    for (Index c = 0; c < spec.concepts; ++c) {
      for (Index r = 0; r < spec.feature_dim; ++r) world.map(r, c) = map_rng.normal() * scale;
    }
  }

  SyntheticData data{{}, FeatureTable(spec.feature_dim), {}, {}};
  Rng rng(derive_seed(spec.seed, 0x636f7270ull));
  for (int i = 0; i < spec.n_examples; ++i) {
    const std::vector<int> words = world.sample_words(rng);
    const std::string id = "img" + std::to_string(i);
    data.captions.push_back({id, world.caption_text(words)});
    data.features.insert(id, world.feature_for(world.truth(words), rng));
  }

  // Evaluation sentences are drawn fresh, so they are held out from training
  // by construction. Gold scores come from ground-truth concept vectors, not
  // from any model.
  const std::size_t n_eval = std::max<std::size_t>(
      50, static_cast<std::size_t>(spec.n_examples) / 4);
  Rng eval_rng(derive_seed(spec.seed, 0x6576616cull));
  data.sts.name = "synthetic_sts";
  for (std::size_t i = 0; i < n_eval; ++i) {
    const std::vector<int> a = world.sample_words(eval_rng);
    std::vector<int> b;
    if (eval_rng.below(4) == 0) {
      b = world.reword(a, eval_rng);
    } else {
      b = world.sample_words(eval_rng);
    }
    const Scalar gold = cosine_similarity(world.truth(a), world.truth(b));
    data.sts.items.push_back({world.caption_text(a), world.caption_text(b), gold});
  }
  data.sts.score_lo = data.sts.score_hi = data.sts.items.front().gold;
  for (const auto& item : data.sts.items) {
    data.sts.score_lo = std::min(data.sts.score_lo, item.gold);
    data.sts.score_hi = std::max(data.sts.score_hi, item.gold);
  }

  data.pairs.name = "synthetic_pairs";
  for (std::size_t i = 0; i < n_eval; ++i) {
    if (i % 2 == 0) {
      const std::vector<int> a = world.sample_words(eval_rng);
      const std::vector<int> b = world.reword(a, eval_rng);
      data.pairs.items.push_back({world.caption_text(a), world.caption_text(b), 1});
    } else {
      const std::vector<int> a = world.sample_words(eval_rng);
      std::vector<int> b;
      int attempts = 0;
      do {
        b = world.sample_words(eval_rng);
        if (++attempts > 10000) {
          throw ConfigError("generate_synthetic: cannot sample an unrelated caption pair");
        }
      } while (cosine_similarity(world.truth(a), world.truth(b)) > 0.8);
      data.pairs.items.push_back({world.caption_text(a), world.caption_text(b), 0});
    }
  }
  data.pairs.validate();
  return data;
}

struct SyntheticPaths {
  std::string captions;
  std::string features;
  std::string sts;
  std::string pairs;
};

inline SyntheticPaths write_synthetic(const SyntheticData& data, const std::string& dir) {
  std::filesystem::create_directories(dir);
  SyntheticPaths paths;
  paths.captions = dir + "/captions.tsv";
  paths.features = dir + "/features.vetf";
  paths.sts = dir + "/sts.tsv";
  paths.pairs = dir + "/pairs.tsv";
  save_captions(data.captions, paths.captions);
  save_image_features(data.features, paths.features);
  save_sts(data.sts, paths.sts);
  save_binary_pairs(data.pairs, paths.pairs);
  return paths;
}

}  // namespace vete
