#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "vete/search.hpp"
#include "vete/synth.hpp"

using namespace vete;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("vete_search_" + name);
}

std::vector<ParamRange> write_and_load(const std::string& body, const std::string& name) {
  auto path = temp_file(name);
  std::ofstream out(path);
  out << body;
  out.close();
  auto ranges = load_ranges(path.string());
  std::filesystem::remove(path);
  return ranges;
}

const std::string kBaseRanges =
    "# comment lines and blanks are skipped\n"
    "\n"
    "learning_rate  log_uniform  0.005 0.05\n"
    "batch_size     choice       16\n"
    "embedding_dim  choice       8\n"
    "epochs         choice       3\n"
    "init_scale     uniform      0.05 0.2\n"
    "lr_decay       uniform      0.9 1.0\n"
    "encoder        choice       BOW_MEAN\n"
    "loss           choice       pearson covariance\n";

struct TaskFixture {
  SyntheticData data;
  SearchTask task;

  TaskFixture() : data(make_data()) {
    SplitSpec split_spec;
    split_spec.seed = 10;
    SplitResult split = split_dataset(data.captions, split_spec);
    task.train_records = split.train;
    task.val_records = split.validation;
    task.features = &data.features;
    task.val_datasets = {data.sts};
    task.test_sts = {data.sts};
    task.test_binary = {data.pairs};
  }

  static SyntheticData make_data() {
    SyntheticSpec spec;
    spec.vocab_size = 30;
    spec.concepts = 6;
    spec.n_examples = 300;
    spec.feature_dim = 8;
    spec.noise_sigma = 0.05;
    spec.seed = 2;
    return generate_synthetic(spec);
  }
};

}  // namespace

TEST_CASE("ranges files parse kinds, bounds and comments") {
  auto ranges = write_and_load(kBaseRanges, "ok.txt");
  REQUIRE(ranges.size() == 8);
  REQUIRE(ranges[0].name == "learning_rate");
  REQUIRE(ranges[0].kind == RangeKind::LogUniform);
  REQUIRE(ranges[1].kind == RangeKind::Choice);
  REQUIRE(ranges[1].choices == std::vector<std::string>{"16"});
  REQUIRE(ranges[7].choices == std::vector<std::string>{"pearson", "covariance"});

  REQUIRE_THROWS_AS(write_and_load("learning_rate gaussian 0 1\n", "badkind.txt"), FormatError);
  REQUIRE_THROWS_AS(write_and_load("learning_rate uniform 2 1\n", "badbounds.txt"), FormatError);
  REQUIRE_THROWS_AS(write_and_load("loss choice\n", "emptychoice.txt"), FormatError);
  REQUIRE_THROWS_AS(load_ranges("/nonexistent/ranges.txt"), IoError);
}

TEST_CASE("sampling respects singleton choices and log-uniform medians") {
  auto ranges = write_and_load(kBaseRanges, "sample.txt");
  Rng rng(3);
  std::vector<double> lrs;
  for (int i = 0; i < 10000; ++i) {
    RawConfig raw = sample_raw_config(ranges, rng);
    REQUIRE(raw.at("batch_size") == "16");
    REQUIRE(raw.at("encoder") == "BOW_MEAN");
    const std::string& loss = raw.at("loss");
    REQUIRE((loss == "pearson" || loss == "covariance"));
    lrs.push_back(std::stod(raw.at("learning_rate")));
  }
  std::nth_element(lrs.begin(), lrs.begin() + 5000, lrs.end());
  // geometric midpoint of [0.005, 0.05] is 0.0158
  REQUIRE(lrs[5000] > 0.010);
  REQUIRE(lrs[5000] < 0.025);
}

TEST_CASE("sampled configs are deterministic per seed") {
  auto ranges = write_and_load(kBaseRanges, "det.txt");
  Rng a(9), b(9);
  for (int i = 0; i < 50; ++i) {
    REQUIRE(sample_raw_config(ranges, a) == sample_raw_config(ranges, b));
  }
}

TEST_CASE("raw configs become hyperparameters with defaults filled in") {
  RawConfig raw = {
      {"learning_rate", "0.01"}, {"batch_size", "16"}, {"embedding_dim", "8"},
      {"epochs", "3"},           {"init_scale", "0.1"}, {"lr_decay", "0.95"},
      {"encoder", "RNN_GRU"},    {"loss", "skt"},       {"skt_alpha", "1.5"},
  };
  HyperParams hyper = hyper_from_raw(raw, 42);
  REQUIRE(hyper.embedding_dim == 8);
  REQUIRE(hyper.encoder.kind == EncoderKind::RnnGru);
  REQUIRE(hyper.encoder.layers == 1);
  REQUIRE(hyper.encoder.hidden == 8);  // defaults to the embedding dim
  REQUIRE(hyper.loss.kind == LossKind::Skt);
  REQUIRE(hyper.loss.skt_alpha == Catch::Approx(1.5));
  REQUIRE(hyper.encoder.normalize_output == false);
  REQUIRE(hyper.seed == 42);

  RawConfig missing = raw;
  missing.erase("learning_rate");
  REQUIRE_THROWS_AS(hyper_from_raw(missing, 42), ConfigError);

  RawConfig garbled = raw;
  garbled["batch_size"] = "sixteen";
  REQUIRE_THROWS_AS(hyper_from_raw(garbled, 42), FormatError);
}

TEST_CASE("random search is deterministic and argmax-consistent") {
  TaskFixture fx;
  auto ranges = write_and_load(kBaseRanges, "search.txt");
  SearchReport report = random_search(ranges, 6, fx.task, 9);
  REQUIRE(report.trials.size() == 6);
  REQUIRE(report.any_succeeded);

  double best = -2.0;
  std::size_t best_at = 0;
  for (const auto& trial : report.trials) {
    REQUIRE_FALSE(trial.failed);
    if (trial.val_score > best) {
      best = trial.val_score;
      best_at = trial.index;
    }
  }
  REQUIRE(report.best_index == best_at);
  REQUIRE(report.trials[report.best_index].val_score == best);
  REQUIRE_FALSE(report.best_test_report.empty());

  SearchReport again = random_search(ranges, 6, fx.task, 9);
  REQUIRE(again.best_index == report.best_index);
  for (std::size_t i = 0; i < 6; ++i) {
    REQUIRE(again.trials[i].val_score == report.trials[i].val_score);
    REQUIRE(again.trials[i].config == report.trials[i].config);
  }
}

TEST_CASE("a learning trial beats a collapsed learning rate") {
  TaskFixture fx;
  auto learning = write_and_load(
      "learning_rate choice 0.02\nbatch_size choice 16\nembedding_dim choice 8\n"
      "epochs choice 3\ninit_scale choice 0.1\nlr_decay choice 1.0\n"
      "encoder choice BOW_MEAN\nloss choice pearson\n",
      "lr_on.txt");
  auto collapsed = write_and_load(
      "learning_rate choice 1e-15\nbatch_size choice 16\nembedding_dim choice 8\n"
      "epochs choice 3\ninit_scale choice 0.1\nlr_decay choice 1.0\n"
      "encoder choice BOW_MEAN\nloss choice pearson\n",
      "lr_off.txt");
  SearchReport on = random_search(learning, 1, fx.task, 5);
  SearchReport off = random_search(collapsed, 1, fx.task, 5);
  REQUIRE(on.trials[0].val_score > off.trials[0].val_score + 0.1);
}

TEST_CASE("every trial failing is a search failure") {
  TaskFixture fx;
  auto ranges = write_and_load(
      "learning_rate choice 0.02\nbatch_size choice 100000\nembedding_dim choice 8\n"
      "epochs choice 1\ninit_scale choice 0.1\nlr_decay choice 1.0\n"
      "encoder choice BOW_MEAN\nloss choice pearson\n",
      "doomed.txt");
  REQUIRE_THROWS_AS(random_search(ranges, 2, fx.task, 5), SearchFailed);
}

TEST_CASE("ablation shares base configurations across all candidate values") {
  TaskFixture fx;
  auto ranges = write_and_load(kBaseRanges, "ablate.txt");
  AblationReport report =
      ablation_study(ranges, "loss", {"pearson", "covariance"}, 5, fx.task, 7);
  REQUIRE(report.param == "loss");
  REQUIRE(report.rows.size() == 2);
  for (const auto& row : report.rows) {
    REQUIRE(row.trials.size() == 5);
    REQUIRE(row.any_succeeded);
    double best = -2.0;
    for (const auto& trial : row.trials) {
      if (!trial.failed) best = std::max(best, trial.val_score);
    }
    REQUIRE(row.best_score == best);
  }
  // paired design: trial j differs between rows only in the ablated key
  for (std::size_t j = 0; j < 5; ++j) {
    RawConfig a = report.rows[0].trials[j].config;
    RawConfig b = report.rows[1].trials[j].config;
    REQUIRE(a.at("loss") == "pearson");
    REQUIRE(b.at("loss") == "covariance");
    a.erase("loss");
    b.erase("loss");
    REQUIRE(a == b);
  }

  AblationReport again = ablation_study(ranges, "loss", {"pearson", "covariance"}, 5, fx.task, 7);
  for (std::size_t r = 0; r < 2; ++r) {
    REQUIRE(again.rows[r].best_score == report.rows[r].best_score);
  }

  REQUIRE_THROWS_AS(ablation_study(ranges, "loss", {}, 5, fx.task, 7), ConfigError);
}

TEST_CASE("a single-value ablation row matches a constrained random search") {
  TaskFixture fx;
  auto constrained = write_and_load(
      "learning_rate choice 0.02\nbatch_size choice 16\nembedding_dim choice 8\n"
      "epochs choice 3\ninit_scale choice 0.1\nlr_decay choice 1.0\n"
      "encoder choice BOW_MEAN\nloss choice pearson\n",
      "single.txt");
  AblationReport ablation = ablation_study(constrained, "loss", {"pearson"}, 3, fx.task, 11);
  SearchReport search = random_search(constrained, 3, fx.task, 11);
  REQUIRE(ablation.rows.size() == 1);
  for (std::size_t j = 0; j < 3; ++j) {
    REQUIRE(ablation.rows[0].trials[j].val_score == search.trials[j].val_score);
  }
}

TEST_CASE("report rows serialize searches and ablations") {
  TaskFixture fx;
  auto ranges = write_and_load(kBaseRanges, "rows.txt");
  SearchReport search = random_search(ranges, 2, fx.task, 13);
  EvalReport rows = search_report_rows(search);
  REQUIRE(rows.size() >= 4);
  REQUIRE(rows[0].dataset == "trial_0");

  AblationReport ablation = ablation_study(ranges, "loss", {"pearson"}, 2, fx.task, 13);
  EvalReport arows = ablation_report_rows(ablation);
  bool has_best = false;
  for (const auto& row : arows) {
    if (row.dataset == "loss=pearson" && row.metric == "best_val_pearson") has_best = true;
  }
  REQUIRE(has_best);
}
