#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "vete/synth.hpp"

using namespace vete;

namespace {

SyntheticSpec small_spec() {
  SyntheticSpec spec;
  spec.vocab_size = 30;
  spec.concepts = 6;
  spec.n_examples = 200;
  spec.feature_dim = 8;
  spec.noise_sigma = 0.05;
  spec.seed = 4;
  return spec;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

int word_count(const std::string& caption) {
  std::istringstream ss(caption);
  std::string w;
  int n = 0;
  while (ss >> w) ++n;
  return n;
}

}  // namespace

TEST_CASE("generation is deterministic per seed") {
  SyntheticData a = generate_synthetic(small_spec());
  SyntheticData b = generate_synthetic(small_spec());
  REQUIRE(a.captions.size() == b.captions.size());
  for (std::size_t i = 0; i < a.captions.size(); ++i) {
    REQUIRE(a.captions[i].image_id == b.captions[i].image_id);
    REQUIRE(a.captions[i].caption == b.captions[i].caption);
  }
  for (std::size_t i = 0; i < a.features.entries().size(); ++i) {
    REQUIRE(a.features.entries()[i].first == b.features.entries()[i].first);
    REQUIRE(a.features.entries()[i].second.isApprox(b.features.entries()[i].second, 0.0));
  }
  REQUIRE(a.sts.items.size() == b.sts.items.size());

  SyntheticSpec other = small_spec();
  other.seed = 5;
  SyntheticData c = generate_synthetic(other);
  bool all_same = true;
  for (std::size_t i = 0; i < a.captions.size() && all_same; ++i) {
    all_same = a.captions[i].caption == c.captions[i].caption;
  }
  REQUIRE_FALSE(all_same);
}

TEST_CASE("the corpus has the advertised shape") {
  SyntheticSpec spec = small_spec();
  SyntheticData data = generate_synthetic(spec);
  REQUIRE(data.captions.size() == 200);
  REQUIRE(data.features.size() == 200);
  REQUIRE(data.features.dim() == 8);
  std::set<std::string> ids;
  for (const auto& rec : data.captions) {
    ids.insert(rec.image_id);
    const int n = word_count(rec.caption);
    REQUIRE(n >= spec.min_caption_len);
    REQUIRE(n <= spec.max_caption_len);
    REQUIRE(data.features.find(rec.image_id) != nullptr);
  }
  REQUIRE(ids.size() == 200);
}

TEST_CASE("sts gold scores are cosines in [0,1] with exact rewordings at 1") {
  SyntheticData data = generate_synthetic(small_spec());
  REQUIRE_FALSE(data.sts.items.empty());
  int at_one = 0;
  for (const auto& item : data.sts.items) {
    REQUIRE(item.gold >= 0.0);
    REQUIRE(item.gold <= 1.0 + 1e-12);
    at_one += item.gold == 1.0;
  }
  // about a quarter of the items are rewordings of the same concept sequence
  REQUIRE(at_one >= static_cast<int>(data.sts.items.size()) / 8);
}

TEST_CASE("binary pairs carry both labels and related pairs share lengths") {
  SyntheticData data = generate_synthetic(small_spec());
  REQUIRE_NOTHROW(data.pairs.validate());
  int pos = 0, neg = 0;
  for (const auto& item : data.pairs.items) {
    if (item.label == 1) {
      ++pos;
      // rewording preserves the concept sequence, hence the word count
      REQUIRE(word_count(item.sentence_a) == word_count(item.sentence_b));
    } else {
      ++neg;
    }
  }
  REQUIRE(pos > 0);
  REQUIRE(neg > 0);
}

TEST_CASE("zero noise makes features a pure function of the caption") {
  SyntheticSpec spec;
  spec.vocab_size = 6;  // one word per concept, so captions collide often
  spec.concepts = 6;
  spec.min_caption_len = 4;
  spec.max_caption_len = 4;
  spec.n_examples = 300;
  spec.feature_dim = 8;
  spec.noise_sigma = 0.0;
  spec.seed = 4;
  SyntheticData data = generate_synthetic(spec);
  int collisions = 0;
  for (std::size_t i = 0; i < data.captions.size(); ++i) {
    for (std::size_t j = i + 1; j < data.captions.size(); ++j) {
      if (data.captions[i].caption != data.captions[j].caption) continue;
      ++collisions;
      const Vector& fi = data.features.at(data.captions[i].image_id);
      const Vector& fj = data.features.at(data.captions[j].image_id);
      REQUIRE(fi.isApprox(fj, 0.0));
    }
  }
  REQUIRE(collisions > 0);
}

TEST_CASE("spec invariants reject inconsistent configurations") {
  SyntheticSpec bad = small_spec();
  bad.vocab_size = 3;  // below the concept count
  REQUIRE_THROWS_AS(generate_synthetic(bad), ConfigError);

  SyntheticSpec negative = small_spec();
  negative.noise_sigma = -0.1;
  REQUIRE_THROWS_AS(generate_synthetic(negative), ConfigError);

  SyntheticSpec narrow = small_spec();
  narrow.feature_dim = 2;  // below the concept count
  REQUIRE_THROWS_AS(generate_synthetic(narrow), ConfigError);

  SyntheticSpec lengths = small_spec();
  lengths.min_caption_len = 9;
  lengths.max_caption_len = 4;
  REQUIRE_THROWS_AS(generate_synthetic(lengths), ConfigError);
}

TEST_CASE("written files are loadable and byte-stable across runs") {
  const auto dir1 = std::filesystem::temp_directory_path() / "vete_synth_a" / "nested";
  const auto dir2 = std::filesystem::temp_directory_path() / "vete_synth_b";
  SyntheticData data = generate_synthetic(small_spec());
  SyntheticPaths p1 = write_synthetic(data, dir1.string());
  SyntheticPaths p2 = write_synthetic(generate_synthetic(small_spec()), dir2.string());

  REQUIRE(slurp(p1.captions) == slurp(p2.captions));
  REQUIRE(slurp(p1.features) == slurp(p2.features));
  REQUIRE(slurp(p1.sts) == slurp(p2.sts));
  REQUIRE(slurp(p1.pairs) == slurp(p2.pairs));

  auto captions = load_captions(p1.captions);
  REQUIRE(captions.size() == 200);
  FeatureTable features = load_image_features(p1.features);
  REQUIRE(features.size() == 200);
  StsDataset sts = load_sts(p1.sts);
  REQUIRE_FALSE(sts.items.empty());
  BinaryPairSet pairs = load_binary_pairs(p1.pairs);
  REQUIRE_NOTHROW(pairs.validate());

  std::filesystem::remove_all(dir1.parent_path());
  std::filesystem::remove_all(dir2);
}
