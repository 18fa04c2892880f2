// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "vete/common.hpp"
#include "vete/corpus.hpp"
#include "vete/eval.hpp"
#include "vete/optim.hpp"
#include "vete/rng.hpp"

namespace vete {

enum class RangeKind { LogUniform, Uniform, Choice };

struct ParamRange {
  std::string name;
  RangeKind kind = RangeKind::Choice;
  Scalar lo = 0.0;
  Scalar hi = 0.0;
  std::vector<std::string> choices;

  void validate() const {
    if (name.empty()) throw ConfigError("range with empty name");
    if (kind == RangeKind::Choice) {
      if (choices.empty()) throw ConfigError("range '" + name + "': empty choice list");
    } else {
      if (!(lo < hi)) throw ConfigError("range '" + name + "': need lo < hi");
      if (kind == RangeKind::LogUniform && !(lo > 0)) {
        throw ConfigError("range '" + name + "': log_uniform needs lo > 0");
      }
    }
  }
};

// Lines: `name kind args`, e.g. `learning_rate log_uniform 1e-4 1e-1`,
// `encoder choice BOW_SUM CNN`. Blank lines and #-comments are skipped.
inline std::vector<ParamRange> load_ranges(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open ranges file: " + path);
  std::vector<ParamRange> ranges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string name;
    if (!(ss >> name) || name[0] == '#') continue;
    const std::string where = path + ":" + std::to_string(line_no);
    std::string kind;
    if (!(ss >> kind)) throw FormatError(where + ": expected 'name kind args'");
    ParamRange range;
    range.name = name;
    if (kind == "log_uniform" || kind == "uniform") {
      range.kind = kind == "uniform" ? RangeKind::Uniform : RangeKind::LogUniform;
      std::string lo, hi;
      if (!(ss >> lo >> hi)) throw FormatError(where + ": expected two bounds");
      range.lo = detail::parse_scalar(lo, where);
      range.hi = detail::parse_scalar(hi, where);
      std::string extra;
      if (ss >> extra) throw FormatError(where + ": unexpected trailing value '" + extra + "'");
    } else if (kind == "choice") {
      range.kind = RangeKind::Choice;
      std::string item;
      while (ss >> item) range.choices.push_back(item);
    } else {
      throw FormatError(where + ": unknown range kind '" + kind + "'");
    }
    try {
      range.validate();
    } catch (const ConfigError& e) {
      throw FormatError(where + ": " + e.what());
    }
    for (const auto& existing : ranges) {
      if (existing.name == name) throw FormatError(where + ": duplicate range '" + name + "'");
    }
    ranges.push_back(std::move(range));
  }
  if (ranges.empty()) throw FormatError(path + ": no ranges");
  return ranges;
}

// A sampled configuration as drawn, keyed by range name. Kept as strings so
// ablation overrides and paired-design checks are mechanical.
using RawConfig = std::map<std::string, std::string>;

namespace detail {

// Fields are drawn in this fixed order, so sampling is independent of the
// ranges-file line order.
inline const std::vector<std::string>& canonical_field_order() {
  static const std::vector<std::string> order = {
      "batch_size", "embedding_dim", "encoder",   "epochs",      "hidden",
      "init_scale", "layers",        "learning_rate", "loss",    "lr_decay",
      "normalize",  "rank_margin",   "skt_alpha", "training_level"};
  return order;
}

inline std::string draw_value(const ParamRange& range, Rng& rng) {
  switch (range.kind) {
    case RangeKind::Choice:
      return range.choices[static_cast<std::size_t>(rng.below(range.choices.size()))];
    case RangeKind::Uniform:
      return format_scalar(rng.uniform(range.lo, range.hi));
    case RangeKind::LogUniform:
      return format_scalar(rng.log_uniform(range.lo, range.hi));
  }
  throw ConfigError("unknown range kind");
}

inline Index parse_int_field(const std::string& name, const std::string& value) {
  const Scalar v = parse_scalar(value, "field " + name);
  const Scalar rounded = std::llround(v);
  if (std::abs(v - rounded) > 1e-6) {
    throw ConfigError("field " + name + ": expected an integer, got '" + value + "'");
  }
  return static_cast<Index>(rounded);
}

inline bool parse_bool_field(const std::string& name, const std::string& value) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  throw ConfigError("field " + name + ": expected 0/1/true/false, got '" + value + "'");
}

}  // namespace detail

inline RawConfig sample_raw_config(const std::vector<ParamRange>& ranges, Rng& rng) {
  for (const auto& range : ranges) range.validate();
  RawConfig raw;
  for (const auto& field : detail::canonical_field_order()) {
    for (const auto& range : ranges) {
      if (range.name == field) {
        raw[field] = detail::draw_value(range, rng);
        break;
      }
    }
  }
  for (const auto& range : ranges) {
    bool known = false;
    for (const auto& field : detail::canonical_field_order()) {
      if (range.name == field) known = true;
    }
    if (!known) throw ConfigError("unknown hyperparameter range: " + range.name);
  }
  return raw;
}

// Builds HyperParams from a raw config. Required: learning_rate, batch_size,
// embedding_dim, epochs, init_scale, lr_decay, encoder, loss. Optional with
// defaults: hidden (= embedding_dim), layers (= 1), normalize (= false),
// skt_alpha (= 1), rank_margin (= 0.2), training_level (= sentence).
inline HyperParams hyper_from_raw(const RawConfig& raw, std::uint64_t seed) {
  for (const auto& field : {"learning_rate", "batch_size", "embedding_dim", "epochs",
                            "init_scale", "lr_decay", "encoder", "loss"}) {
    if (!raw.count(field)) {
      throw ConfigError(std::string("missing required hyperparameter: ") + field);
    }
  }
  HyperParams hyper;
  hyper.seed = seed;
  hyper.embedding_dim = detail::parse_int_field("embedding_dim", raw.at("embedding_dim"));
  hyper.batch_size = detail::parse_int_field("batch_size", raw.at("batch_size"));
  hyper.learning_rate = detail::parse_scalar(raw.at("learning_rate"), "field learning_rate");
  hyper.lr_decay = detail::parse_scalar(raw.at("lr_decay"), "field lr_decay");
  hyper.init_scale = detail::parse_scalar(raw.at("init_scale"), "field init_scale");
  hyper.epochs = static_cast<int>(detail::parse_int_field("epochs", raw.at("epochs")));
  if (raw.count("training_level")) {
    hyper.training_level = training_level_from_string(raw.at("training_level"));
  }

  const EncoderKind kind = encoder_kind_from_string(raw.at("encoder"));
  const bool normalize =
      raw.count("normalize") ? detail::parse_bool_field("normalize", raw.at("normalize")) : false;
  const Index hidden = raw.count("hidden") ? detail::parse_int_field("hidden", raw.at("hidden"))
                                           : hyper.embedding_dim;
  const Index layers = raw.count("layers") ? detail::parse_int_field("layers", raw.at("layers")) : 1;
  switch (kind) {
    case EncoderKind::BowSum:
      hyper.encoder = EncoderSpec::bow(BowMode::Sum, normalize);
      break;
    case EncoderKind::BowMean:
      hyper.encoder = EncoderSpec::bow(BowMode::Mean, normalize);
      break;
    case EncoderKind::RnnGru:
    case EncoderKind::RnnLstm:
      hyper.encoder = EncoderSpec::rnn(kind, static_cast<int>(layers),
                                       static_cast<int>(hidden), normalize);
      break;
    case EncoderKind::Cnn:
      hyper.encoder = EncoderSpec::cnn(static_cast<int>(hidden), {2, 3, 4, 5}, normalize);
      break;
  }

  hyper.loss.kind = loss_kind_from_string(raw.at("loss"));
  if (raw.count("skt_alpha")) {
    hyper.loss.skt_alpha = detail::parse_scalar(raw.at("skt_alpha"), "field skt_alpha");
  }
  if (raw.count("rank_margin")) {
    hyper.loss.rank_margin = detail::parse_scalar(raw.at("rank_margin"), "field rank_margin");
  }
  hyper.validate();
  return hyper;
}

inline HyperParams sample_hyperparameters(const std::vector<ParamRange>& ranges, Rng& rng) {
  return hyper_from_raw(sample_raw_config(ranges, rng), rng.seed());
}

// --- search protocols ---

struct SearchTask {
  std::vector<CaptionRecord> train_records;
  std::vector<CaptionRecord> val_records;  // drives the per-epoch metric in train()
  const FeatureTable* features = nullptr;
  std::vector<StsDataset> val_datasets;    // validation benchmarks, averaged
  std::vector<StsDataset> test_sts;        // benchmarks for the winning model
  std::vector<BinaryPairSet> test_binary;
  int min_count = 1;

  void validate() const {
    if (!features) throw ConfigError("search task: no feature table");
    if (train_records.empty()) throw ConfigError("search task: no training records");
    if (val_datasets.empty()) throw ConfigError("search task: no validation datasets");
  }
};

struct TrialResult {
  std::size_t index = 0;
  RawConfig config;
  bool failed = false;
  std::string failure_reason;
  Scalar val_score = std::numeric_limits<Scalar>::quiet_NaN();
  std::vector<std::pair<std::string, Scalar>> per_dataset;
};

struct SearchReport {
  std::vector<TrialResult> trials;
  std::size_t best_index = 0;     // into trials; only meaningful if any succeeded
  bool any_succeeded = false;
  EvalReport best_test_report;    // test benchmarks of the winning model
};

namespace detail {

struct TrialOutcome {
  TrialResult result;
  Model model;
};

inline TrialOutcome run_trial(std::size_t index, const RawConfig& raw, std::uint64_t seed,
                              const SearchTask& task) {
  TrialOutcome out;
  out.result.index = index;
  out.result.config = raw;
  try {
    HyperParams hyper = hyper_from_raw(raw, seed);
    TrainOutcome trained =
        train(hyper, task.train_records, task.val_records, *task.features, task.min_count);
    std::vector<Scalar> scores;
    for (const auto& ds : task.val_datasets) {
      const Scalar score = eval_sts(trained.model, ds);
      scores.push_back(score);
      out.result.per_dataset.emplace_back(ds.name, score);
    }
    out.result.val_score = average_scores(scores);
    out.model = std::move(trained.model);
  } catch (const Error& e) {
    out.result.failed = true;
    out.result.failure_reason = e.what();
  }
  return out;
}

inline EvalReport evaluate_best(const Model& model, const SearchTask& task) {
  EvalReport report;
  for (const auto& ds : task.test_sts) {
    std::size_t failed = 0;
    const Scalar score = eval_sts(model, ds, &failed);
    report.push_back({ds.name, "pearson", score});
    report.push_back({ds.name, "failed_items", static_cast<Scalar>(failed)});
  }
  for (const auto& ds : task.test_binary) {
    const BinaryEvalResult r = eval_binary_pairs(model, ds);
    report.push_back({ds.name, "pearson", r.pearson});
    report.push_back({ds.name, "auc", r.auc});
  }
  return report;
}

}  // namespace detail

// Samples n_trials configurations, trains each with a seed derived from
// (master_seed, trial index), scores on the validation benchmarks, keeps the
// argmax, and re-evaluates the winner on the test benchmarks. Failed trials
// are recorded and skipped.
inline SearchReport random_search(const std::vector<ParamRange>& ranges, std::size_t n_trials,
                                  const SearchTask& task, std::uint64_t master_seed,
                                  std::ostream* log = nullptr) {
  if (n_trials < 1) throw ConfigError("random_search: need n_trials >= 1");
  task.validate();
  SearchReport report;
  Model best_model;
  Scalar best_score = -std::numeric_limits<Scalar>::infinity();
  for (std::size_t i = 0; i < n_trials; ++i) {
    const std::uint64_t seed = derive_seed(master_seed, i);
    Rng rng(seed);
    RawConfig raw = sample_raw_config(ranges, rng);
    detail::TrialOutcome trial = detail::run_trial(i, raw, seed, task);
    if (log) {
      (*log) << "trial " << i << ": "
             << (trial.result.failed ? "FAILED " + trial.result.failure_reason
                                     : format_scalar(trial.result.val_score))
             << '\n';
    }
    if (!trial.result.failed && trial.result.val_score > best_score) {
      best_score = trial.result.val_score;
      best_model = std::move(trial.model);
      report.best_index = i;
      report.any_succeeded = true;
    }
    report.trials.push_back(std::move(trial.result));
  }
  if (!report.any_succeeded) {
    throw SearchFailed("random_search: all " + std::to_string(n_trials) + " trials failed");
  }
  report.best_test_report = detail::evaluate_best(best_model, task);
  return report;
}

struct AblationRow {
  std::string value;
  std::vector<TrialResult> trials;
  Scalar best_score = std::numeric_limits<Scalar>::quiet_NaN();
  bool any_succeeded = false;
};

struct AblationReport {
  std::string param;
  std::vector<AblationRow> rows;
};

// Paired ablation: n_sets base configurations are sampled once (trial j uses
// the seed derived from (master_seed, j)); every candidate value reruns the
// same n_sets configs with `param` forced, so rows differ in nothing else.
inline AblationReport ablation_study(const std::vector<ParamRange>& ranges,
                                     const std::string& param,
                                     const std::vector<std::string>& values,
                                     std::size_t n_sets, const SearchTask& task,
                                     std::uint64_t master_seed, std::ostream* log = nullptr) {
  if (values.empty()) throw ConfigError("ablation_study: no values");
  if (n_sets < 1) throw ConfigError("ablation_study: need n_sets >= 1");
  task.validate();
  bool known = false;
  for (const auto& range : ranges) {
    if (range.name == param) known = true;
  }
  if (!known) throw ConfigError("ablation_study: param '" + param + "' not in ranges");

  std::vector<RawConfig> bases;
  std::vector<std::uint64_t> seeds;
  for (std::size_t j = 0; j < n_sets; ++j) {
    const std::uint64_t seed = derive_seed(master_seed, j);
    Rng rng(seed);
    bases.push_back(sample_raw_config(ranges, rng));
    seeds.push_back(seed);
  }

  AblationReport report;
  report.param = param;
  bool any = false;
  for (const auto& value : values) {
    AblationRow row;
    row.value = value;
    for (std::size_t j = 0; j < n_sets; ++j) {
      RawConfig raw = bases[j];
      raw[param] = value;
      detail::TrialOutcome trial = detail::run_trial(j, raw, seeds[j], task);
      if (log) {
        (*log) << param << "=" << value << " trial " << j << ": "
               << (trial.result.failed ? "FAILED " + trial.result.failure_reason
                                       : format_scalar(trial.result.val_score))
               << '\n';
      }
      if (!trial.result.failed) {
        if (!row.any_succeeded || trial.result.val_score > row.best_score) {
          row.best_score = trial.result.val_score;
        }
        row.any_succeeded = true;
        any = true;
      }
      row.trials.push_back(std::move(trial.result));
    }
    report.rows.push_back(std::move(row));
  }
  if (!any) throw SearchFailed("ablation_study: every trial failed");
  return report;
}

// --- report serialization (TSV, 3 columns) ---

inline EvalReport search_report_rows(const SearchReport& report) {
  EvalReport rows;
  for (const auto& trial : report.trials) {
    const std::string label = "trial_" + std::to_string(trial.index);
    if (trial.failed) {
      rows.push_back({label, "failed", 1.0});
    } else {
      rows.push_back({label, "val_avg_pearson", trial.val_score});
      for (const auto& [name, score] : trial.per_dataset) {
        rows.push_back({label, "val_pearson_" + name, score});
      }
    }
  }
  rows.push_back({"best", "trial_index", static_cast<Scalar>(report.best_index)});
  for (const auto& row : report.best_test_report) {
    rows.push_back({"best_" + row.dataset, row.metric, row.value});
  }
  return rows;
}

inline EvalReport ablation_report_rows(const AblationReport& report) {
  EvalReport rows;
  for (const auto& row : report.rows) {
    const std::string label = report.param + "=" + row.value;
    rows.push_back({label, "best_val_pearson", row.best_score});
    for (const auto& trial : row.trials) {
      const std::string trial_label = label + "/trial_" + std::to_string(trial.index);
      if (trial.failed) {
        rows.push_back({trial_label, "failed", 1.0});
      } else {
        rows.push_back({trial_label, "val_avg_pearson", trial.val_score});
      }
    }
  }
  return rows;
}

}  // namespace vete
