#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "vete/eval.hpp"
#include "vete/model.hpp"

using namespace vete;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Index>(xs.size()));
  Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

// tiny deterministic model: 3 content words with hand-set embeddings
Model toy_model() {
  Vocabulary vocab = Vocabulary::from_tokens(
      {"cat", "dog", "car", kSentenceStart, kSentenceEnd, kUnknown});
  EncoderSpec spec = EncoderSpec::bow(BowMode::Mean);
  Rng rng(1);
  Model model = make_model(spec, vocab, 3, 4, 0.1, rng);
  Matrix emb = Matrix::Zero(6, 3);
  emb.row(0) << 1.0, 0.0, 0.0;   // cat
  emb.row(1) << 0.9, 0.1, 0.0;   // dog: close to cat
  emb.row(2) << 0.0, 0.0, 1.0;   // car: orthogonal
  // specials stay zero so pure-special sentences cannot be embedded
  model.params["embedding"] = emb;
  return model;
}

double brute_force_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("vete_eval_" + name);
}

}  // namespace

TEST_CASE("pearson matches a hand value and the degenerate guards fire") {
  REQUIRE(pearson(vec({1, 2, 3}), vec({1, 2, 4})) ==
          Catch::Approx(0.98198050606196585).margin(1e-12));
  Vector x = vec({0.3, -0.2, 1.7, 0.4});
  REQUIRE(pearson(x, x) == Catch::Approx(1.0).margin(1e-12));
  Vector nx = -x;
  REQUIRE(pearson(x, nx) == Catch::Approx(-1.0).margin(1e-12));
  REQUIRE_THROWS_AS(pearson(Vector::Constant(4, 1.0), x), DegenerateInput);
  REQUIRE_THROWS_AS(pearson(vec({1, 2}), vec({1, 2, 3})), ShapeError);
}

TEST_CASE("rank-sum AUC equals the brute-force pair count, ties averaged") {
  Rng rng(71);
  std::vector<double> scores(200);
  std::vector<int> labels(200);
  for (std::size_t i = 0; i < 200; ++i) {
    // quantized scores force ties
    scores[i] = std::floor(rng.uniform() * 20.0) / 20.0;
    labels[i] = rng.below(2) == 0 ? 0 : 1;
  }
  labels[0] = 1;
  labels[1] = 0;
  REQUIRE(auc_from_scores(scores, labels) ==
          Catch::Approx(brute_force_auc(scores, labels)).margin(1e-12));
}

TEST_CASE("AUC endpoints: perfect, inverted, and uninformative scores") {
  std::vector<double> scores = {0.9, 0.8, 0.2, 0.1};
  std::vector<int> labels = {1, 1, 0, 0};
  REQUIRE(auc_from_scores(scores, labels) == Catch::Approx(1.0));
  std::vector<int> inverted = {0, 0, 1, 1};
  REQUIRE(auc_from_scores(scores, inverted) == Catch::Approx(0.0));
  std::vector<double> flat = {0.5, 0.5, 0.5, 0.5};
  REQUIRE(auc_from_scores(flat, labels) == Catch::Approx(0.5));
}

TEST_CASE("sts evaluation scores a faithful model highly") {
  Model model = toy_model();
  StsDataset ds;
  ds.name = "toy";
  ds.items = {
      {"cat", "cat", 1.0},
      {"cat", "dog", 0.95},
      {"cat", "car", 0.0},
      {"dog", "car", 0.05},
  };
  std::size_t failed = 9;
  const Scalar score = eval_sts(model, ds, &failed);
  REQUIRE(failed == 0);
  REQUIRE(score > 0.9);
}

TEST_CASE("unencodable items score zero and are counted; all failing is an error") {
  Model model = toy_model();
  StsDataset ds;
  ds.name = "partial";
  ds.items = {
      {"cat", "dog", 1.0},
      {"cat", "car", 0.0},
      // pure-special sentence: zero embedding, cosine undefined
      {"<S>", "cat", 0.5},
  };
  std::size_t failed = 0;
  REQUIRE_NOTHROW(eval_sts(model, ds, &failed));
  REQUIRE(failed == 1);

  StsDataset hopeless;
  hopeless.name = "hopeless";
  hopeless.items = {{"<S>", "<S>", 1.0}, {"</S>", "<S>", 0.2}};
  REQUIRE_THROWS_AS(eval_sts(model, hopeless), EvaluationImpossible);
}

TEST_CASE("binary pair construction draws both classes deterministically") {
  std::vector<CaptionRecord> records;
  for (int img = 0; img < 30; ++img) {
    records.push_back({"img" + std::to_string(img), "first caption " + std::to_string(img)});
    records.push_back({"img" + std::to_string(img), "second caption " + std::to_string(img)});
  }
  BinaryPairSet ds = build_binary_pair_set(records, 20, 20, 13);
  REQUIRE(ds.items.size() == 40);
  REQUIRE_NOTHROW(ds.validate());
  int pos = 0;
  for (const auto& item : ds.items) pos += item.label == 1;
  REQUIRE(pos == 20);

  BinaryPairSet again = build_binary_pair_set(records, 20, 20, 13);
  REQUIRE(again.items.size() == ds.items.size());
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    REQUIRE(again.items[i].sentence_a == ds.items[i].sentence_a);
    REQUIRE(again.items[i].sentence_b == ds.items[i].sentence_b);
    REQUIRE(again.items[i].label == ds.items[i].label);
  }

  std::vector<CaptionRecord> unrelated = {
      {"a", "one"}, {"b", "two"}, {"c", "three"}, {"d", "four"}};
  REQUIRE_THROWS_AS(build_binary_pair_set(unrelated, 5, 5, 13), TooFewPairs);
  REQUIRE_THROWS_AS(build_binary_pair_set(records, 0, 5, 13), ConfigError);
}

TEST_CASE("average_scores means its inputs and rejects empty reports") {
  REQUIRE(average_scores({0.2, 0.4, 0.9}) == Catch::Approx(0.5));
  REQUIRE_THROWS_AS(average_scores({}), EmptyReport);
}

TEST_CASE("sts files round-trip and reject malformed rows") {
  StsDataset ds;
  ds.name = "roundtrip";
  ds.items = {{"a cat", "a dog", 0.75}, {"blue car", "red car", 0.5}};
  auto path = temp_file("sts.tsv");
  save_sts(ds, path.string());
  StsDataset loaded = load_sts(path.string());
  REQUIRE(loaded.items.size() == 2);
  REQUIRE(loaded.items[0].sentence_a == "a cat");
  REQUIRE(loaded.items[0].gold == Catch::Approx(0.75));
  REQUIRE(loaded.items[1].sentence_b == "red car");

  std::ofstream bad(path);
  bad << "not_a_number\tx\ty\n";
  bad.close();
  REQUIRE_THROWS_AS(load_sts(path.string()), FormatError);
  std::filesystem::remove(path);
}

TEST_CASE("binary pair files round-trip and validate labels") {
  BinaryPairSet ds;
  ds.name = "pairs";
  ds.items = {{"a cat", "a dog", 1}, {"a cat", "blue car", 0}};
  auto path = temp_file("pairs.tsv");
  save_binary_pairs(ds, path.string());
  BinaryPairSet loaded = load_binary_pairs(path.string());
  REQUIRE(loaded.items.size() == 2);
  REQUIRE(loaded.items[0].label == 1);
  REQUIRE(loaded.items[1].label == 0);

  std::ofstream bad(path);
  bad << "2\tx\ty\n";
  bad.close();
  REQUIRE_THROWS_AS(load_binary_pairs(path.string()), FormatError);
  std::filesystem::remove(path);
}

TEST_CASE("reports serialize as dataset/metric/value TSV") {
  EvalReport report = {{"sts", "pearson", 0.5}, {"pairs", "auc", 0.984375}};
  std::ostringstream out;
  write_report(report, out);
  REQUIRE(out.str() == "dataset\tmetric\tvalue\nsts\tpearson\t0.5\npairs\tauc\t0.984375\n");
}

TEST_CASE("binary pair evaluation separates related from unrelated pairs") {
  Model model = toy_model();
  BinaryPairSet ds;
  ds.name = "toy";
  ds.items = {
      {"cat", "dog", 1},
      {"dog", "cat", 1},
      {"cat", "car", 0},
      {"dog", "car", 0},
  };
  BinaryEvalResult r = eval_binary_pairs(model, ds);
  REQUIRE(r.auc == Catch::Approx(1.0));
  REQUIRE(r.pearson > 0.9);
  REQUIRE(r.failed == 0);
}
