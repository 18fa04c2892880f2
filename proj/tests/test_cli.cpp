#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "vete/corpus.hpp"
#include "vete/embedding_export.hpp"
#include "vete/model.hpp"
#include "vete/synth.hpp"

using namespace vete;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

CliResult run_cli(const std::vector<std::string>& args) {
  static int counter = 0;
  ++counter;
  const fs::path out_path =
      fs::temp_directory_path() / ("vete_cli_stdout_" + std::to_string(counter) + ".txt");
  const fs::path err_path =
      fs::temp_directory_path() / ("vete_cli_stderr_" + std::to_string(counter) + ".txt");
  std::string cmd = std::string("\"") + VETE_CLI_PATH + "\"";
  for (const auto& arg : args) cmd += " \"" + arg + "\"";
  cmd += " > \"" + out_path.string() + "\" 2> \"" + err_path.string() + "\"";
  const int status = std::system(cmd.c_str());
  CliResult result;
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  result.out = slurp(out_path);
  result.err = slurp(err_path);
  fs::remove(out_path);
  fs::remove(err_path);
  return result;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("vete_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<std::string> synth_args(const fs::path& dir) {
  return {"synth",         "--out-dir", dir.string(), "--vocab", "30",    "--concepts",
          "6",             "--examples", "300",       "--feature-dim", "8", "--noise",
          "0.05",          "--seed",     "2"};
}

// dataset -> metric -> value, parsed from a written TSV report
std::map<std::string, std::map<std::string, double>> parse_report(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::string line;
  REQUIRE(std::getline(in, line));
  REQUIRE(line == "dataset\tmetric\tvalue");
  std::map<std::string, std::map<std::string, double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = line.find('\t', t1 + 1);
    REQUIRE(t1 != std::string::npos);
    REQUIRE(t2 != std::string::npos);
    rows[line.substr(0, t1)][line.substr(t1 + 1, t2 - t1 - 1)] =
        std::stod(line.substr(t2 + 1));
  }
  return rows;
}

}  // namespace

TEST_CASE("bad invocations exit 1 and help exits 0") {
  CHECK(run_cli({}).exit_code == 1);
  CHECK(run_cli({"frobnicate"}).exit_code == 1);
  CHECK(run_cli({"train"}).exit_code == 1);
  CHECK(run_cli({"eval", "--model"}).exit_code == 1);

  CliResult help = run_cli({"--help"});
  CHECK(help.exit_code == 0);
  CHECK(help.out.find("train") != std::string::npos);
  CHECK(help.out.find("synth") != std::string::npos);
}

TEST_CASE("synth writes a loadable corpus and reruns byte-identically") {
  const fs::path dir_a = fresh_dir("synth_a");
  const fs::path dir_b = fresh_dir("synth_b");
  CliResult first = run_cli(synth_args(dir_a));
  REQUIRE(first.exit_code == 0);
  REQUIRE(first.out.find("captions\t") != std::string::npos);
  REQUIRE(run_cli(synth_args(dir_b)).exit_code == 0);

  for (const char* name : {"captions.tsv", "features.vetf", "sts.tsv", "pairs.tsv"}) {
    INFO(name);
    REQUIRE(slurp(dir_a / name) == slurp(dir_b / name));
  }

  auto records = load_captions((dir_a / "captions.tsv").string());
  REQUIRE(records.size() == 300);
  FeatureTable features = load_image_features((dir_a / "features.vetf").string());
  REQUIRE(features.dim() == 8);
  REQUIRE_FALSE(load_sts((dir_a / "sts.tsv").string()).items.empty());
  REQUIRE_FALSE(load_binary_pairs((dir_a / "pairs.tsv").string()).items.empty());

  // directories are created as needed
  const fs::path nested = dir_a / "deeper" / "still";
  REQUIRE(run_cli({"synth", "--out-dir", nested.string(), "--examples", "50"}).exit_code == 0);
  REQUIRE(fs::exists(nested / "captions.tsv"));
}

TEST_CASE("prep splits a caption file and can keep one caption per image") {
  const fs::path dir = fresh_dir("prep");
  const fs::path captions = dir / "captions.tsv";
  {
    std::ofstream out(captions);
    for (int img = 0; img < 15; ++img) {
      out << "img" << img << "\tfirst caption for image " << img << "\n";
      out << "img" << img << "\tsecond caption for image " << img << "\n";
    }
  }

  auto counts = [](const std::string& stdout_text) {
    std::istringstream in(stdout_text);
    std::map<std::string, std::size_t> sizes;
    std::string name;
    std::size_t n = 0;
    while (in >> name >> n) sizes[name] = n;
    return sizes;
  };

  const fs::path all_dir = dir / "all";
  CliResult full = run_cli({"prep", "--captions", captions.string(), "--out-dir",
                            all_dir.string(), "--seed", "10"});
  REQUIRE(full.exit_code == 0);
  auto full_sizes = counts(full.out);
  REQUIRE(full_sizes.at("train") + full_sizes.at("val") + full_sizes.at("test") == 30);
  REQUIRE(load_captions((all_dir / "train.tsv").string()).size() == full_sizes.at("train"));
  REQUIRE(load_captions((all_dir / "val.tsv").string()).size() == full_sizes.at("val"));
  REQUIRE(load_captions((all_dir / "test.tsv").string()).size() == full_sizes.at("test"));

  const fs::path one_dir = dir / "one";
  CliResult one = run_cli({"prep", "--captions", captions.string(), "--out-dir",
                           one_dir.string(), "--one-per-image", "--seed", "10"});
  REQUIRE(one.exit_code == 0);
  auto one_sizes = counts(one.out);
  REQUIRE(one_sizes.at("train") + one_sizes.at("val") + one_sizes.at("test") == 15);

  // same seed, same split
  const fs::path again_dir = dir / "again";
  REQUIRE(run_cli({"prep", "--captions", captions.string(), "--out-dir", again_dir.string(),
                   "--seed", "10"})
              .exit_code == 0);
  REQUIRE(slurp(again_dir / "train.tsv") == slurp(all_dir / "train.tsv"));
}

TEST_CASE("synth, prep, train, eval, export run end to end") {
  const fs::path dir = fresh_dir("pipeline");
  REQUIRE(run_cli(synth_args(dir)).exit_code == 0);

  const fs::path splits = dir / "splits";
  REQUIRE(run_cli({"prep", "--captions", (dir / "captions.tsv").string(), "--out-dir",
                   splits.string(), "--seed", "10"})
              .exit_code == 0);

  const fs::path model_path = dir / "model.vetm";
  CliResult train_run = run_cli(
      {"train", "--captions", (splits / "train.tsv").string(), "--val-captions",
       (splits / "val.tsv").string(), "--features", (dir / "features.vetf").string(),
       "--checkpoint-out", model_path.string(), "--encoder", "BOW_MEAN", "--loss", "pearson",
       "--dim", "8", "--batch", "16", "--lr", "0.02", "--epochs", "4", "--seed", "3"});
  REQUIRE(train_run.exit_code == 0);
  {
    std::istringstream log(train_run.out);
    std::string line;
    REQUIRE(std::getline(log, line));
    REQUIRE(line == "epoch\tmean_loss\tval_metric\tskipped_batches\tseconds");
    int epochs = 0;
    while (std::getline(log, line)) {
      if (!line.empty()) ++epochs;
    }
    REQUIRE(epochs == 4);
  }
  Model model = load_model(model_path.string());
  REQUIRE(model.trained_steps > 0);

  const fs::path report_path = dir / "report.tsv";
  CliResult eval_run = run_cli({"eval", "--model", model_path.string(), "--sts",
                                (dir / "sts.tsv").string(), "--binary",
                                (dir / "pairs.tsv").string(), "--report", report_path.string()});
  REQUIRE(eval_run.exit_code == 0);
  auto report = parse_report(report_path);
  REQUIRE(report.count("avg") == 1);
  REQUIRE(report.at("avg").at("pearson") > 0.2);
  const auto& pairs_row = report.at("pairs");
  REQUIRE(pairs_row.at("auc") >= 0.0);
  REQUIRE(pairs_row.at("auc") <= 1.0);
  REQUIRE(pairs_row.at("failed_items") == 0.0);

  // without --report the same rows land on stdout
  CliResult eval_stdout = run_cli(
      {"eval", "--model", model_path.string(), "--sts", (dir / "sts.tsv").string()});
  REQUIRE(eval_stdout.exit_code == 0);
  REQUIRE(eval_stdout.out.rfind("dataset\tmetric\tvalue\n", 0) == 0);

  // eval with neither dataset kind is a config error
  REQUIRE(run_cli({"eval", "--model", model_path.string()}).exit_code == 2);

  // word export round-trips the embedding table at 32-bit precision
  const fs::path words_path = dir / "words.vec";
  CliResult export_run = run_cli(
      {"export", "--model", model_path.string(), "--format", "word", "--out", words_path.string()});
  REQUIRE(export_run.exit_code == 0);
  REQUIRE(export_run.err.find("warning") == std::string::npos);
  WordVectors wv = load_word_vectors(words_path.string());
  REQUIRE(wv.tokens == model.vocab.tokens());
  const Matrix& emb = model.params.at("embedding");
  REQUIRE(wv.vectors.rows() == emb.rows());
  for (Index r = 0; r < emb.rows(); ++r) {
    for (Index c = 0; c < emb.cols(); ++c) {
      REQUIRE(static_cast<float>(wv.vectors(r, c)) == static_cast<float>(emb(r, c)));
    }
  }

  // mean of the exported rows reproduces the model's sentence embedding
  auto records = load_captions((splits / "val.tsv").string());
  const std::string sentence = records.front().caption;
  std::vector<int> ids = encode_caption(model.vocab, tokenize(sentence));
  Vector manual = Vector::Zero(wv.vectors.cols());
  for (int id : ids) manual += wv.vectors.row(id).transpose();
  manual /= static_cast<double>(ids.size());
  Vector direct = embed_sentence(model, sentence);
  REQUIRE((manual - direct).norm() < 1e-6 * (1.0 + direct.norm()));

  // sentence export matches embed_sentence too
  const fs::path sentences_path = dir / "sentences.txt";
  {
    std::ofstream out(sentences_path);
    out << sentence << "\n" << records.back().caption << "\n";
  }
  const fs::path sent_vec_path = dir / "sentences.tsv";
  REQUIRE(run_cli({"export", "--model", model_path.string(), "--format", "sentence", "--input",
                   sentences_path.string(), "--out", sent_vec_path.string()})
              .exit_code == 0);
  {
    std::ifstream in(sent_vec_path);
    std::string line;
    REQUIRE(std::getline(in, line));
    const auto tab = line.find('\t');
    REQUIRE(line.substr(0, tab) == sentence);
    std::istringstream values(line.substr(tab + 1));
    std::string field;
    Vector parsed(direct.size());
    for (Index i = 0; i < direct.size(); ++i) {
      REQUIRE(std::getline(values, field, ','));
      parsed[i] = std::stod(field);
    }
    REQUIRE((parsed - direct).norm() < 1e-6 * (1.0 + direct.norm()));
  }

  REQUIRE(run_cli({"export", "--model", model_path.string(), "--format", "glove", "--out",
                   (dir / "x.vec").string()})
              .exit_code == 2);
  REQUIRE(run_cli({"export", "--model", model_path.string(), "--format", "sentence", "--out",
                   (dir / "x.tsv").string()})
              .exit_code == 2);
}

TEST_CASE("identical train invocations write byte-identical checkpoints") {
  const fs::path dir = fresh_dir("repro");
  REQUIRE(run_cli(synth_args(dir)).exit_code == 0);
  auto train_to = [&](const std::string& name) {
    const fs::path out = dir / name;
    REQUIRE(run_cli({"train", "--captions", (dir / "captions.tsv").string(), "--features",
                     (dir / "features.vetf").string(), "--checkpoint-out", out.string(), "--dim",
                     "8", "--batch", "16", "--lr", "0.02", "--epochs", "2", "--seed", "5"})
                .exit_code == 0);
    return slurp(out);
  };
  REQUIRE(train_to("model_a.vetm") == train_to("model_b.vetm"));
}

TEST_CASE("missing or malformed inputs exit 2") {
  const fs::path dir = fresh_dir("errors");
  CliResult missing = run_cli({"train", "--captions", (dir / "nope.tsv").string(), "--features",
                               (dir / "nope.vetf").string(), "--checkpoint-out",
                               (dir / "m.vetm").string()});
  REQUIRE(missing.exit_code == 2);
  REQUIRE(missing.err.rfind("error:", 0) == 0);

  REQUIRE(run_cli({"eval", "--model", (dir / "nope.vetm").string(), "--sts",
                   (dir / "nope.tsv").string()})
              .exit_code == 2);

  const fs::path garbage = dir / "garbage.vetm";
  {
    std::ofstream out(garbage, std::ios::binary);
    out << "not a model";
  }
  REQUIRE(run_cli({"export", "--model", garbage.string(), "--out", (dir / "w.vec").string()})
              .exit_code == 2);
}

TEST_CASE("a search whose every trial fails exits 3") {
  const fs::path dir = fresh_dir("exit3");
  REQUIRE(run_cli(synth_args(dir)).exit_code == 0);
  const fs::path ranges = dir / "ranges.txt";
  {
    std::ofstream out(ranges);
    out << "learning_rate log_uniform 0.005 0.05\n"
           "batch_size choice 100000\n"
           "embedding_dim choice 8\n"
           "epochs choice 1\n"
           "init_scale uniform 0.05 0.2\n"
           "lr_decay uniform 0.9 1.0\n"
           "encoder choice BOW_MEAN\n"
           "loss choice pearson\n";
  }
  CliResult failed = run_cli({"search", "--ranges", ranges.string(), "--trials", "2",
                              "--captions", (dir / "captions.tsv").string(), "--features",
                              (dir / "features.vetf").string(), "--val-sts",
                              (dir / "sts.tsv").string(), "--report",
                              (dir / "report.tsv").string(), "--seed", "9"});
  REQUIRE(failed.exit_code == 3);
  REQUIRE(failed.err.find("error:") != std::string::npos);
}

TEST_CASE("search and ablate commands write deterministic reports") {
  const fs::path dir = fresh_dir("searchcli");
  REQUIRE(run_cli(synth_args(dir)).exit_code == 0);
  const fs::path ranges = dir / "ranges.txt";
  {
    std::ofstream out(ranges);
    out << "learning_rate log_uniform 0.01 0.03\n"
           "batch_size choice 16\n"
           "embedding_dim choice 8\n"
           "epochs choice 2\n"
           "init_scale uniform 0.05 0.2\n"
           "lr_decay uniform 0.9 1.0\n"
           "encoder choice BOW_MEAN\n"
           "loss choice pearson covariance\n";
  }
  auto search_to = [&](const std::string& name) {
    const fs::path report = dir / name;
    REQUIRE(run_cli({"search", "--ranges", ranges.string(), "--trials", "2", "--captions",
                     (dir / "captions.tsv").string(), "--features",
                     (dir / "features.vetf").string(), "--val-sts", (dir / "sts.tsv").string(),
                     "--report", report.string(), "--seed", "9"})
                .exit_code == 0);
    return slurp(report);
  };
  const std::string search_report = search_to("search_a.tsv");
  REQUIRE(search_report == search_to("search_b.tsv"));
  REQUIRE(search_report.find("best\ttrial_index\t") != std::string::npos);

  const fs::path ablate_report = dir / "ablate.tsv";
  REQUIRE(run_cli({"ablate", "--ranges", ranges.string(), "--param", "loss", "--values",
                   "pearson,covariance", "--sets", "2", "--captions",
                   (dir / "captions.tsv").string(), "--features",
                   (dir / "features.vetf").string(), "--val-sts", (dir / "sts.tsv").string(),
                   "--report", ablate_report.string(), "--seed", "7"})
              .exit_code == 0);
  const std::string ablate_text = slurp(ablate_report);
  REQUIRE(ablate_text.find("loss=pearson") != std::string::npos);
  REQUIRE(ablate_text.find("loss=covariance") != std::string::npos);
}

TEST_CASE("exporting an untrained checkpoint warns on stderr") {
  const fs::path dir = fresh_dir("untrained");
  Rng rng(1);
  SyntheticData data = [] {
    SyntheticSpec spec;
    spec.vocab_size = 20;
    spec.concepts = 4;
    spec.n_examples = 60;
    spec.feature_dim = 6;
    spec.seed = 8;
    return generate_synthetic(spec);
  }();
  std::vector<TokenSequence> sequences;
  for (const auto& record : data.captions) sequences.push_back(tokenize(record.caption));
  Vocabulary vocab = Vocabulary::build(sequences, 1);
  Model model = make_model(EncoderSpec::bow(BowMode::Mean), vocab, 6, 6, 0.1, rng);
  const fs::path model_path = dir / "fresh.vetm";
  save_model(model, model_path.string());

  CliResult export_run = run_cli(
      {"export", "--model", model_path.string(), "--out", (dir / "w.vec").string()});
  REQUIRE(export_run.exit_code == 0);
  REQUIRE(export_run.err.find("warning: exporting an untrained model (0 optimizer steps)") !=
          std::string::npos);
}

TEST_CASE("the gradient check command prints one verdict per grid cell") {
  CliResult grads = run_cli({"check-grads", "--seed", "7", "--instances", "1"});
  REQUIRE(grads.exit_code == 0);
  int lines = 0;
  std::istringstream in(grads.out);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++lines;
    REQUIRE(line.find("PASS") != std::string::npos);
  }
  REQUIRE(lines == 20);
}
