// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vete/common.hpp"
#include "vete/corpus.hpp"
#include "vete/embedding_export.hpp"
#include "vete/eval.hpp"
#include "vete/model.hpp"
#include "vete/optim.hpp"
#include "vete/search.hpp"
#include "vete/synth.hpp"

namespace vete {
namespace cli {

// 0 success, 1 usage, 2 data/format, 3 numerical failure.
inline int exit_code_for(const Error& e) {
  if (dynamic_cast<const DegenerateVector*>(&e) || dynamic_cast<const DegenerateEmbedding*>(&e) ||
      dynamic_cast<const DegenerateSimilarities*>(&e) ||
      dynamic_cast<const DegenerateInput*>(&e) || dynamic_cast<const NonFiniteGradient*>(&e) ||
      dynamic_cast<const EvaluationImpossible*>(&e) || dynamic_cast<const SearchFailed*>(&e)) {
    return 3;
  }
  return 2;
}

namespace detail {

inline std::vector<std::string> split_commas(const std::string& list) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    auto comma = list.find(',', start);
    if (comma == std::string::npos) {
      if (start < list.size()) out.push_back(list.substr(start));
      break;
    }
    if (comma > start) out.push_back(list.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

inline std::vector<std::string> load_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

struct HyperFlags {
  std::string encoder = "BOW_MEAN";
  std::string loss = "pearson";
  std::string level = "sentence";
  Index dim = 128;
  Index batch = 32;
  double lr = 1e-3;
  double lr_decay = 1.0;
  double init_scale = 0.1;
  int epochs = 1;
  int hidden = 0;
  int layers = 1;
  std::vector<int> widths = {2, 3, 4, 5};
  bool normalize = false;
  double skt_alpha = 1.0;
  double rank_margin = 0.2;
  std::uint64_t seed = 0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--encoder", encoder, "BOW_SUM|BOW_MEAN|RNN_GRU|RNN_LSTM|CNN");
    cmd->add_option("--loss", loss, "pearson|covariance|skt|rank");
    cmd->add_option("--level", level, "sentence|word training level");
    cmd->add_option("--dim", dim, "embedding dimension N");
    cmd->add_option("--batch", batch, "batch size B (>= 2)");
    cmd->add_option("--lr", lr, "Adam learning rate");
    cmd->add_option("--lr-decay", lr_decay, "per-epoch multiplicative decay");
    cmd->add_option("--init-scale", init_scale, "uniform init half-width");
    cmd->add_option("--epochs", epochs, "training epochs");
    cmd->add_option("--hidden", hidden, "RNN hidden size / CNN channels (default: N)");
    cmd->add_option("--layers", layers, "RNN stack depth");
    cmd->add_option("--widths", widths, "CNN filter widths")->delimiter(',');
    cmd->add_flag("--normalize", normalize, "L2-normalize encoder output");
    cmd->add_option("--skt-alpha", skt_alpha, "soft Kendall steepness");
    cmd->add_option("--rank-margin", rank_margin, "rank loss margin");
    cmd->add_option("--seed", seed, "master seed; all randomness derives from it");
  }

  HyperParams build() const {
    HyperParams hyper;
    hyper.embedding_dim = dim;
    hyper.batch_size = batch;
    hyper.learning_rate = lr;
    hyper.lr_decay = lr_decay;
    hyper.init_scale = init_scale;
    hyper.epochs = epochs;
    hyper.seed = seed;
    hyper.training_level = training_level_from_string(level);
    const int h = hidden > 0 ? hidden : static_cast<int>(dim);
    const EncoderKind kind = encoder_kind_from_string(encoder);
    switch (kind) {
      case EncoderKind::BowSum: hyper.encoder = EncoderSpec::bow(BowMode::Sum, normalize); break;
      case EncoderKind::BowMean:
        hyper.encoder = EncoderSpec::bow(BowMode::Mean, normalize);
        break;
      case EncoderKind::RnnGru:
      case EncoderKind::RnnLstm:
        hyper.encoder = EncoderSpec::rnn(kind, layers, h, normalize);
        break;
      case EncoderKind::Cnn: hyper.encoder = EncoderSpec::cnn(h, widths, normalize); break;
    }
    hyper.loss.kind = loss_kind_from_string(loss);
    hyper.loss.skt_alpha = skt_alpha;
    hyper.loss.rank_margin = rank_margin;
    hyper.validate();
    return hyper;
  }
};

struct SplitFlags {
  double val_frac = 0.1;
  double test_frac = 0.1;

  void attach(CLI::App* cmd) {
    cmd->add_option("--val-frac", val_frac, "validation fraction of the caption file");
    cmd->add_option("--test-frac", test_frac, "held-out fraction of the caption file");
  }

  SplitResult split(const std::vector<CaptionRecord>& records, std::uint64_t seed) const {
    SplitSpec spec;
    spec.validation_fraction = val_frac;
    spec.test_fraction = test_frac;
    spec.train_fraction = 1.0 - val_frac - test_frac;
    spec.seed = derive_seed(seed, 0x73706c6974ull);
    return split_dataset(records, spec);
  }
};

inline SearchTask build_search_task(const std::string& captions_path,
                                    const std::string& features_path,
                                    const std::vector<std::string>& val_sts,
                                    const std::vector<std::string>& test_sts,
                                    const std::vector<std::string>& test_binary,
                                    const SplitFlags& split_flags, int min_count,
                                    std::uint64_t seed, FeatureTable& features_storage) {
  SearchTask task;
  auto records = load_captions(captions_path);
  SplitResult split = split_flags.split(records, seed);
  task.train_records = std::move(split.train);
  task.val_records = std::move(split.validation);
  features_storage = load_image_features(features_path);
  task.features = &features_storage;
  for (const auto& path : val_sts) task.val_datasets.push_back(load_sts(path));
  for (const auto& path : test_sts) task.test_sts.push_back(load_sts(path));
  for (const auto& path : test_binary) task.test_binary.push_back(load_binary_pairs(path));
  task.min_count = min_count;
  return task;
}

}  // namespace detail

inline int run(int argc, const char* const* argv) {
  CLI::App app{"text/image embedding trainer: correlation-trained sentence encoders "
               "over precomputed image features"};
  app.require_subcommand(1);

  // prep
  auto* prep = app.add_subcommand("prep", "split a caption file into train/val/test");
  std::string prep_captions, prep_out_dir;
  bool prep_one_per_image = false;
  std::uint64_t prep_seed = 0;
  detail::SplitFlags prep_split;
  prep->add_option("--captions", prep_captions, "image_id<TAB>caption lines")->required();
  prep->add_option("--out-dir", prep_out_dir, "directory for train/val/test .tsv")->required();
  prep->add_flag("--one-per-image", prep_one_per_image, "keep only each image's first caption");
  prep_split.attach(prep);
  prep->add_option("--seed", prep_seed, "split shuffle seed");
  prep->callback([&] {
    auto records = load_captions(prep_captions);
    if (prep_one_per_image) records = filter_one_caption_per_image(records);
    SplitResult split = prep_split.split(records, prep_seed);
    std::filesystem::create_directories(prep_out_dir);
    save_captions(split.train, prep_out_dir + "/train.tsv");
    save_captions(split.validation, prep_out_dir + "/val.tsv");
    save_captions(split.test, prep_out_dir + "/test.tsv");
    std::cout << "train\t" << split.train.size() << "\nval\t" << split.validation.size()
              << "\ntest\t" << split.test.size() << '\n';
  });

  // train
  auto* train_cmd = app.add_subcommand("train", "train an embedding model");
  std::string train_captions, train_features, train_val_captions, checkpoint_out, checkpoint_in;
  int train_min_count = 1;
  detail::HyperFlags hyper_flags;
  detail::SplitFlags train_split;
  train_cmd->add_option("--captions", train_captions, "training captions")->required();
  train_cmd->add_option("--features", train_features, "binary image-feature file")->required();
  train_cmd->add_option("--val-captions", train_val_captions,
                        "explicit validation captions (otherwise split from --captions)");
  train_cmd->add_option("--checkpoint-out", checkpoint_out, "model file to write")->required();
  train_cmd->add_option("--checkpoint-in", checkpoint_in,
                        "resume from this model (vocabulary and encoder come from it)");
  train_cmd->add_option("--min-count", train_min_count, "vocabulary frequency threshold");
  hyper_flags.attach(train_cmd);
  train_split.attach(train_cmd);
  train_cmd->callback([&] {
    auto records = load_captions(train_captions);
    std::vector<CaptionRecord> train_records, val_records;
    if (train_val_captions.empty()) {
      SplitResult split = train_split.split(records, hyper_flags.seed);
      train_records = std::move(split.train);
      val_records = std::move(split.validation);
    } else {
      train_records = std::move(records);
      val_records = load_captions(train_val_captions);
    }
    FeatureTable features = load_image_features(train_features);
    HyperParams hyper = hyper_flags.build();
    Model warm;
    const Model* warm_ptr = nullptr;
    if (!checkpoint_in.empty()) {
      warm = load_model(checkpoint_in);
      warm_ptr = &warm;
    }
    std::cout << "epoch\tmean_loss\tval_metric\tskipped_batches\tseconds\n";
    TrainOutcome outcome = train(hyper, train_records, val_records, features, train_min_count,
                                 &std::cout, warm_ptr);
    save_model(outcome.model, checkpoint_out);
  });

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "score a model on STS / binary-pair datasets");
  std::string eval_model, eval_sts_list, eval_binary_list, eval_report;
  eval_cmd->add_option("--model", eval_model, "model checkpoint")->required();
  eval_cmd->add_option("--sts", eval_sts_list, "comma-separated STS files");
  eval_cmd->add_option("--binary", eval_binary_list, "comma-separated binary-pair files");
  eval_cmd->add_option("--report", eval_report, "TSV report path (default: stdout)");
  eval_cmd->callback([&] {
    const auto sts_paths = detail::split_commas(eval_sts_list);
    const auto binary_paths = detail::split_commas(eval_binary_list);
    if (sts_paths.empty() && binary_paths.empty()) {
      throw ConfigError("eval: need at least one of --sts/--binary");
    }
    Model model = load_model(eval_model);
    EvalReport report;
    std::vector<Scalar> pearsons;
    for (const auto& path : sts_paths) {
      StsDataset ds = load_sts(path);
      std::size_t failed = 0;
      const Scalar score = eval_sts(model, ds, &failed);
      report.push_back({ds.name, "pearson", score});
      report.push_back({ds.name, "failed_items", static_cast<Scalar>(failed)});
      pearsons.push_back(score);
    }
    for (const auto& path : binary_paths) {
      BinaryPairSet ds = load_binary_pairs(path);
      const BinaryEvalResult r = eval_binary_pairs(model, ds);
      report.push_back({ds.name, "pearson", r.pearson});
      report.push_back({ds.name, "auc", r.auc});
      report.push_back({ds.name, "failed_items", static_cast<Scalar>(r.failed)});
      pearsons.push_back(r.pearson);
    }
    report.push_back({"avg", "pearson", average_scores(pearsons)});
    if (eval_report.empty()) {
      write_report(report, std::cout);
    } else {
      write_report(report, eval_report);
    }
  });

  // search
  auto* search_cmd = app.add_subcommand("search", "random hyperparameter search");
  std::string search_ranges, search_captions, search_features;
  std::string search_val_sts, search_test_sts, search_test_binary, search_report_path;
  std::size_t search_trials = 100;
  int search_min_count = 1;
  std::uint64_t search_seed = 0;
  detail::SplitFlags search_split;
  search_cmd->add_option("--ranges", search_ranges, "ranges file: name kind args")->required();
  search_cmd->add_option("--trials", search_trials, "number of sampled configurations");
  search_cmd->add_option("--captions", search_captions, "training captions")->required();
  search_cmd->add_option("--features", search_features, "binary image-feature file")->required();
  search_cmd->add_option("--val-sts", search_val_sts, "comma-separated validation STS files")
      ->required();
  search_cmd->add_option("--test-sts", search_test_sts, "test STS files for the winner");
  search_cmd->add_option("--test-binary", search_test_binary,
                         "test binary-pair files for the winner");
  search_cmd->add_option("--report", search_report_path, "TSV report path")->required();
  search_cmd->add_option("--min-count", search_min_count, "vocabulary frequency threshold");
  search_cmd->add_option("--seed", search_seed, "master seed; trial i derives from (seed, i)");
  search_split.attach(search_cmd);
  search_cmd->callback([&] {
    std::vector<ParamRange> ranges = load_ranges(search_ranges);
    FeatureTable features(1);
    SearchTask task = detail::build_search_task(
        search_captions, search_features, detail::split_commas(search_val_sts),
        detail::split_commas(search_test_sts), detail::split_commas(search_test_binary),
        search_split, search_min_count, search_seed, features);
    SearchReport report = random_search(ranges, search_trials, task, search_seed, &std::cerr);
    write_report(search_report_rows(report), search_report_path);
  });

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "paired per-hyperparameter ablation");
  std::string ablate_ranges, ablate_captions, ablate_features;
  std::string ablate_val_sts, ablate_param, ablate_values, ablate_report_path;
  std::size_t ablate_sets = 100;
  int ablate_min_count = 1;
  std::uint64_t ablate_seed = 0;
  detail::SplitFlags ablate_split;
  ablate_cmd->add_option("--ranges", ablate_ranges, "ranges file: name kind args")->required();
  ablate_cmd->add_option("--param", ablate_param, "hyperparameter to ablate")->required();
  ablate_cmd->add_option("--values", ablate_values, "comma-separated candidate values")
      ->required();
  ablate_cmd->add_option("--sets", ablate_sets, "number of shared base configurations");
  ablate_cmd->add_option("--captions", ablate_captions, "training captions")->required();
  ablate_cmd->add_option("--features", ablate_features, "binary image-feature file")->required();
  ablate_cmd->add_option("--val-sts", ablate_val_sts, "comma-separated validation STS files")
      ->required();
  ablate_cmd->add_option("--report", ablate_report_path, "TSV report path")->required();
  ablate_cmd->add_option("--min-count", ablate_min_count, "vocabulary frequency threshold");
  ablate_cmd->add_option("--seed", ablate_seed, "master seed; set j derives from (seed, j)");
  ablate_split.attach(ablate_cmd);
  ablate_cmd->callback([&] {
    std::vector<ParamRange> ranges = load_ranges(ablate_ranges);
    FeatureTable features(1);
    SearchTask task = detail::build_search_task(
        ablate_captions, ablate_features, detail::split_commas(ablate_val_sts), {}, {},
        ablate_split, ablate_min_count, ablate_seed, features);
    AblationReport report =
        ablation_study(ranges, ablate_param, detail::split_commas(ablate_values), ablate_sets,
                       task, ablate_seed, &std::cerr);
    write_report(ablation_report_rows(report), ablate_report_path);
  });

  // export
  auto* export_cmd = app.add_subcommand("export", "export embeddings from a checkpoint");
  std::string export_model, export_format = "word", export_out, export_input;
  export_cmd->add_option("--model", export_model, "model checkpoint")->required();
  export_cmd->add_option("--format", export_format, "word|sentence");
  export_cmd->add_option("--out", export_out, "output path")->required();
  export_cmd->add_option("--input", export_input, "sentences file (one per line), for sentence");
  export_cmd->callback([&] {
    Model model = load_model(export_model);
    if (model.trained_steps == 0) {
      std::cerr << "warning: exporting an untrained model (0 optimizer steps)\n";
    }
    if (export_format == "word") {
      export_word_vectors(model, export_out);
    } else if (export_format == "sentence") {
      if (export_input.empty()) throw ConfigError("export: sentence format needs --input");
      export_sentence_vectors(model, detail::load_lines(export_input), export_out);
    } else {
      throw ConfigError("export: unknown format '" + export_format + "'");
    }
  });

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic benchmark corpus");
  SyntheticSpec synth_spec;
  std::string synth_out_dir;
  synth_cmd->add_option("--out-dir", synth_out_dir, "output directory")->required();
  synth_cmd->add_option("--vocab", synth_spec.vocab_size, "number of synthetic words");
  synth_cmd->add_option("--concepts", synth_spec.concepts, "number of latent concepts");
  synth_cmd->add_option("--examples", synth_spec.n_examples, "number of caption/image pairs");
  synth_cmd->add_option("--feature-dim", synth_spec.feature_dim, "image feature dimension");
  synth_cmd->add_option("--noise", synth_spec.noise_sigma, "feature noise sigma");
  synth_cmd->add_option("--min-len", synth_spec.min_caption_len, "min words per caption");
  synth_cmd->add_option("--max-len", synth_spec.max_caption_len, "max words per caption");
  synth_cmd->add_option("--seed", synth_spec.seed, "generator seed");
  synth_cmd->callback([&] {
    SyntheticData data = generate_synthetic(synth_spec);
    SyntheticPaths paths = write_synthetic(data, synth_out_dir);
    std::cout << "captions\t" << paths.captions << "\nfeatures\t" << paths.features << "\nsts\t"
              << paths.sts << "\npairs\t" << paths.pairs << '\n';
  });

  // check-grads
  auto* grads_cmd = app.add_subcommand(
      "check-grads", "finite-difference check of all encoder x loss gradients");
  std::uint64_t grads_seed = 0;
  int grads_instances = 5;
  double grads_h = 1e-5;
  double grads_tolerance = 1e-4;
  grads_cmd->add_option("--seed", grads_seed, "toy instance seed");
  grads_cmd->add_option("--instances", grads_instances, "random instances per grid cell");
  grads_cmd->add_option("--step", grads_h, "central-difference step");
  grads_cmd->add_option("--tolerance", grads_tolerance, "max allowed relative error");
  bool grads_ok = true;
  grads_cmd->callback([&] {
    auto grid = grad_check_grid(grads_seed, grads_instances, grads_h);
    for (const auto& cell : grid) {
      const bool pass = cell.max_rel_error < grads_tolerance;
      grads_ok = grads_ok && pass;
      std::cout << to_string(cell.encoder) << '\t' << to_string(cell.loss) << '\t'
                << format_scalar(cell.max_rel_error) << '\t' << (pass ? "PASS" : "FAIL") << '\n';
    }
    if (!grads_ok) throw NonFiniteGradient("check-grads: tolerance exceeded");
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return 0;
}

}  // namespace cli
}  // namespace vete
