/* Copyright 2026 The hefriendly Authors.
 * This program is Licensed under the Apache License, Version 2.0
 * (the "License"); you may not use this file except in compliance
 * with the License. You may obtain a copy of the License at
 *   http://www.apache.org/licenses/LICENSE-2.0
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License. See accompanying LICENSE file.
 */
#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "hef/adam.hpp"
#include "hef/checkpoint.hpp"
#include "hef/dataset.hpp"
#include "hef/distill.hpp"
#include "hef/errors.hpp"
#include "hef/graph.hpp"
#include "hef/metrics.hpp"
#include "hef/passes.hpp"
#include "hef/schedule.hpp"
#include "hef/text.hpp"

namespace hef {

/// One row of the ablation grid.
enum class Arm {
  BaselineReluMaxpool,
  BaselineReluAvgpool,
  Square,
  ApproxRelu,
  Tp,
  TpSt,
  TpStKd,
};

inline constexpr Arm kAllArms[] = {Arm::BaselineReluMaxpool, Arm::BaselineReluAvgpool, Arm::Square,
                                   Arm::ApproxRelu,          Arm::Tp,                  Arm::TpSt,
                                   Arm::TpStKd};

inline std::string_view arm_name(Arm a) {
  switch (a) {
    case Arm::BaselineReluMaxpool: return "baseline_relu_maxpool";
    case Arm::BaselineReluAvgpool: return "baseline_relu_avgpool";
    case Arm::Square: return "square";
    case Arm::ApproxRelu: return "approx_relu";
    case Arm::Tp: return "tp";
    case Arm::TpSt: return "tp_st";
    case Arm::TpStKd: return "tp_st_kd";
  }
  return "?";
}

inline Arm parse_arm(std::string_view s) {
  for (auto a : kAllArms)
    if (arm_name(a) == s) return a;
  throw ConfigError("unknown arm '" + std::string(s) + "'");
}

enum class StudentInit {
  /// Start from the same-seed baseline checkpoint (the teacher).
  Teacher,
  Scratch,
};

struct TrainConfig {
  std::string model_path;
  DatasetSpec dataset;
  std::vector<Arm> arms{Arm::TpStKd};
  std::vector<std::uint64_t> seeds{111, 222, 333, 444, 555};
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  AdamOptions adam;
  TransitionSchedule transition;
  KDParams kd;
  /// Unset: distillation on exactly for tp_st_kd.
  std::optional<bool> kd_enabled;
  /// Apply the distillation loss only once lambda has reached 1.
  bool kd_delay_until_full = false;
  /// Path, may contain "{seed}". Empty: the baseline checkpoint of the same
  /// seed under the output directory.
  std::string teacher_checkpoint;
  std::string coeff_init = "relu_like";
  StudentInit student_init = StudentInit::Teacher;
  std::string out_dir = "runs";

  bool distills(Arm a) const {
    if (a == Arm::BaselineReluMaxpool || a == Arm::BaselineReluAvgpool) return false;
    return kd_enabled.value_or(a == Arm::TpStKd);
  }
};

/// Parses `key = value` lines. Relative paths resolve against `base_dir`.
inline TrainConfig parse_train_config(std::string_view src, const std::filesystem::path& base_dir = {}) {
  TrainConfig cfg;
  std::istringstream is{std::string(src)};
  std::string raw;
  std::size_t lineno = 0;
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return (path.is_absolute() || base_dir.empty() ? path : base_dir / path).string();
  };
  while (std::getline(is, raw)) {
    ++lineno;
    const auto line = text::strip_comment(raw);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key(text::trim(line.substr(0, eq)));
    const std::string val(text::trim(line.substr(eq + 1)));
    auto& d = cfg.dataset;
    if (key == "model") cfg.model_path = resolve(val);
    else if (key == "arm") cfg.arms = {parse_arm(val)};
    else if (key == "arms") {
      cfg.arms.clear();
      for (const auto& a : text::split(val, ',')) cfg.arms.push_back(parse_arm(a));
    } else if (key == "seeds") {
      cfg.seeds.clear();
      for (const auto& s : text::split(val, ',')) cfg.seeds.push_back(text::parse_size(s, key));
    } else if (key == "epochs") cfg.epochs = text::parse_size(val, key);
    else if (key == "batch_size") cfg.batch_size = text::parse_size(val, key);
    else if (key == "lr") cfg.adam.lr = text::parse_double(val, key);
    else if (key == "adam.beta1") cfg.adam.beta1 = text::parse_double(val, key);
    else if (key == "adam.beta2") cfg.adam.beta2 = text::parse_double(val, key);
    else if (key == "adam.eps") cfg.adam.eps = text::parse_double(val, key);
    else if (key == "transition.start_epoch") cfg.transition.start_epoch = text::parse_size(val, key);
    else if (key == "transition.duration") cfg.transition.duration = text::parse_size(val, key);
    else if (key == "transition.layer_by_layer") {
      if (text::parse_bool(val, key))
        throw ConfigError("layer-by-layer replacement is not supported; all activation layers move together");
    } else if (key == "kd.enabled") cfg.kd_enabled = text::parse_bool(val, key);
    else if (key == "kd.tau") cfg.kd.tau = text::parse_double(val, key);
    else if (key == "kd.alpha") cfg.kd.alpha = text::parse_double(val, key);
    else if (key == "kd.teacher_checkpoint") cfg.teacher_checkpoint = val.empty() ? val : resolve(val);
    else if (key == "kd.delay_until_full") cfg.kd_delay_until_full = text::parse_bool(val, key);
    else if (key == "coeff_init") {
      CoeffInit::preset(val);
      cfg.coeff_init = val;
    } else if (key == "student_init") {
      if (val != "teacher" && val != "scratch") throw ConfigError("student_init must be teacher|scratch");
      cfg.student_init = val == "teacher" ? StudentInit::Teacher : StudentInit::Scratch;
    } else if (key == "out") cfg.out_dir = resolve(val);
    else if (key == "dataset.name") d.name = val;
    else if (key == "dataset.generator") d.generator = val;
    else if (key == "dataset.path") d.path = resolve(val);
    else if (key == "dataset.train") d.train = text::parse_size(val, key);
    else if (key == "dataset.validation") d.validation = text::parse_size(val, key);
    else if (key == "dataset.test") d.test = text::parse_size(val, key);
    else if (key == "dataset.classes") d.classes = text::parse_size(val, key);
    else if (key == "dataset.channels") d.channels = text::parse_size(val, key);
    else if (key == "dataset.height") d.height = text::parse_size(val, key);
    else if (key == "dataset.width") d.width = text::parse_size(val, key);
    else if (key == "dataset.noise") d.noise = text::parse_double(val, key);
    else if (key == "dataset.seed") d.seed = text::parse_size(val, key);
    else if (key == "dataset.hflip") d.augment.hflip = text::parse_bool(val, key);
    else if (key == "dataset.rotate") d.augment.rotate = text::parse_bool(val, key);
    else if (key == "dataset.normalize") d.augment.normalize = text::parse_bool(val, key);
    else throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  cfg.transition.validate();
  cfg.kd.validate();
  if (!(cfg.adam.lr > 0.0)) throw ConfigError("lr must be positive");
  if (cfg.batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (cfg.seeds.empty()) throw ConfigError("at least one seed is required");
  return cfg;
}

inline TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config", path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str(), std::filesystem::path(path).parent_path());
}

inline std::string checkpoint_path(const std::string& out_dir, Arm arm, std::uint64_t seed) {
  return (std::filesystem::path(out_dir) / std::string(arm_name(arm)) /
          ("seed_" + std::to_string(seed) + ".ckpt"))
      .string();
}

inline std::string teacher_path(const TrainConfig& cfg, std::uint64_t seed) {
  if (cfg.teacher_checkpoint.empty()) return checkpoint_path(cfg.out_dir, Arm::BaselineReluMaxpool, seed);
  std::string p = cfg.teacher_checkpoint;
  if (auto pos = p.find("{seed}"); pos != std::string::npos) p.replace(pos, 6, std::to_string(seed));
  return p;
}

namespace detail {

inline ModelGraph load_required_checkpoint(const std::string& path, const char* role) {
  if (!std::filesystem::exists(path))
    throw ConfigError(std::string(role) + " checkpoint not found: " + path);
  return load_checkpoint(path);
}

/// Activation state of every layer at the start of `epoch`.
inline double configure_epoch(ModelGraph& g, Arm arm, const TrainConfig& cfg, std::size_t epoch) {
  const std::size_t e0 = cfg.transition.start_epoch;
  auto set_fixed = [&](ActivationKind k) {
    for (auto& n : g.nodes())
      if (auto* a = n.as<ActivationLayer>()) a->act.kind = k;
  };
  switch (arm) {
    case Arm::BaselineReluMaxpool:
    case Arm::BaselineReluAvgpool: return 0.0;
    case Arm::Square:
    case Arm::ApproxRelu: {
      const double lambda = step_lambda(e0, epoch);
      set_fixed(lambda == 1.0 ? (arm == Arm::Square ? ActivationKind::Square : ActivationKind::ApproxRelu)
                              : ActivationKind::Relu);
      return lambda;
    }
    case Arm::Tp: {
      const double lambda = step_lambda(e0, epoch);
      set_transition(g, lambda);
      return lambda;
    }
    case Arm::TpSt:
    case Arm::TpStKd: {
      const double lambda = lambda_at_epoch(cfg.transition, epoch);
      set_transition(g, lambda);
      return lambda;
    }
  }
  return 0.0;
}

}  // namespace detail

/// Builds the starting graph of a run for `arm`.
inline ModelGraph initial_model(const TrainConfig& cfg, Arm arm, std::uint64_t seed,
                                const ModelGraph& base) {
  ModelGraph g;
  if (arm == Arm::BaselineReluMaxpool || cfg.student_init == StudentInit::Scratch) {
    g = base;
    Rng rng(seed);
    g.initialize(rng);
  } else {
    g = detail::load_required_checkpoint(teacher_path(cfg, seed), "student-init");
  }
  if (arm != Arm::BaselineReluMaxpool) g = replace_maxpool_with_avgpool(g).graph;
  g.set_coefficients(CoeffInit::preset(cfg.coeff_init));
  g.set_mode(Mode::Train);
  return g;
}

/// Trains one (arm, seed) run. Divergence marks the record failed instead
/// of throwing; configuration problems throw.
inline MetricsRecord train_run(const TrainConfig& cfg, Arm arm, std::uint64_t seed, const Dataset& data,
                               const ModelGraph& base, ModelGraph* final_model = nullptr,
                               std::ostream* log = nullptr) {
  MetricsRecord rec;
  rec.arm = std::string(arm_name(arm));
  rec.seed = seed;

  ModelGraph model = initial_model(cfg, arm, seed, base);
  std::optional<ModelGraph> teacher;
  if (cfg.distills(arm)) {
    teacher = detail::load_required_checkpoint(teacher_path(cfg, seed), "teacher");
    teacher->set_mode(Mode::Eval);
    if (teacher->output_shape() != model.output_shape())
      throw ConfigError("teacher and student output shapes differ");
  }

  Adam adam(cfg.adam);
  Rng rng(seed ^ 0xd1b54a32d192ed03ULL);
  BatchIterator batches(data.train, cfg.batch_size, seed, data.spec.augment);
  Tensor images;
  std::vector<std::size_t> labels;
  const auto t0 = std::chrono::steady_clock::now();

  std::size_t epoch = 0;
  try {
    for (; epoch < cfg.epochs; ++epoch) {
      const double lambda = detail::configure_epoch(model, arm, cfg, epoch);
      const bool use_kd = teacher && (!cfg.kd_delay_until_full || lambda == 1.0);
      model.set_mode(Mode::Train);
      batches.start_epoch();
      double loss_sum = 0.0;
      std::size_t seen = 0;
      while (batches.next(images, labels)) {
        Tape tape;
        Var logits = model.forward(tape, tape.constant(images), &rng);
        Var loss = use_kd ? kd_loss(tape, logits, tape.constant(teacher->predict(images)), labels, cfg.kd)
                          : cross_entropy(tape, logits, labels);
        const double lv = tape.value(loss).item();
        if (!std::isfinite(lv)) throw NumericError("non-finite training loss");
        tape.backward(loss);
        auto params = model.parameters();
        adam.step(params);
        for (auto& p : params) p.tensor->drop_grad();
        loss_sum += lv * static_cast<double>(labels.size());
        seen += labels.size();
      }
      model.set_mode(Mode::Eval);
      EpochMetrics em{epoch, lambda, loss_sum / static_cast<double>(seen), 0.0};
      if (data.validation.size()) em.val_acc = evaluate(model, data.validation).accuracy;
      rec.epochs.push_back(em);
      if (log)
        *log << "  [" << rec.arm << " seed " << seed << "] epoch " << epoch << " lambda "
             << text::format_double(lambda) << " loss " << em.train_loss << " val_acc " << em.val_acc
             << '\n';
    }
    model.set_mode(Mode::Eval);
    const EvalResult test = evaluate(model, data.test);
    rec.test_acc = test.accuracy;
    rec.macro_f1 = test.macro_f1;
    rec.per_class_f1 = test.per_class_f1;
  } catch (const NumericError& e) {
    rec.failed = true;
    rec.failed_epoch = epoch;
    rec.failure = e.what();
  }
  if (log) {
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char buf[200];
    if (rec.failed)
      std::snprintf(buf, sizeof buf, "%-22s seed %-5llu FAILED at epoch %zu (%s) %.1fs\n", rec.arm.c_str(),
                    static_cast<unsigned long long>(seed), *rec.failed_epoch, rec.failure.c_str(), secs);
    else
      std::snprintf(buf, sizeof buf, "%-22s seed %-5llu test_acc %.4f macro_f1 %.4f %.1fs\n",
                    rec.arm.c_str(), static_cast<unsigned long long>(seed), rec.test_acc, rec.macro_f1, secs);
    *log << buf << std::flush;
  }
  if (!rec.failed) {
    const auto path = checkpoint_path(cfg.out_dir, arm, seed);
    std::filesystem::create_directories(std::filesystem::path(path).parent_path());
    save_checkpoint(model, path);
  }
  if (final_model) *final_model = std::move(model);
  return rec;
}

struct ExperimentResult {
  std::vector<MetricsRecord> runs;
  std::vector<AggregateMetrics> aggregates;

  bool any_failed() const {
    for (const auto& r : runs)
      if (r.failed) return true;
    return false;
  }

  const AggregateMetrics* aggregate(Arm arm) const {
    for (const auto& a : aggregates)
      if (a.arm == arm_name(arm)) return &a;
    return nullptr;
  }
};

/// Runs every configured arm for every seed, in config order.
inline ExperimentResult run_experiment(const TrainConfig& cfg, std::ostream* log = nullptr) {
  if (cfg.model_path.empty()) throw ConfigError("config has no 'model' entry");
  const ModelGraph base = load_model_config(cfg.model_path);
  const Dataset data = load_dataset(cfg.dataset);
  ExperimentResult result;
  for (Arm arm : cfg.arms) {
    std::vector<MetricsRecord> arm_runs;
    for (auto seed : cfg.seeds) arm_runs.push_back(train_run(cfg, arm, seed, data, base, nullptr, log));
    result.aggregates.push_back(seed_sweep_aggregate(arm_runs));
    if (result.aggregates.back().arm.empty()) result.aggregates.back().arm = std::string(arm_name(arm));
    for (auto& r : arm_runs) result.runs.push_back(std::move(r));
  }
  return result;
}

// ------------------------------------------------------------------ export

/// The first eight columns are the stable public layout; the rest carry
/// aggregate spread and run status.
inline constexpr const char* kMetricsHeader =
    "arm,seed,epoch,lambda,train_loss,val_acc,test_acc,macro_f1,test_acc_std,macro_f1_std,completed,"
    "failures,status";

inline std::string metrics_csv(const ExperimentResult& r) {
  using text::format_double;
  std::ostringstream os;
  os << kMetricsHeader << '\n';
  for (const auto& agg : r.aggregates) {
    for (const auto& run : r.runs) {
      if (run.arm != agg.arm) continue;
      for (const auto& e : run.epochs)
        os << run.arm << ',' << run.seed << ',' << e.epoch << ',' << format_double(e.lambda) << ','
           << format_double(e.train_loss) << ',' << format_double(e.val_acc) << ",,,,,,,epoch\n";
      os << run.arm << ',' << run.seed << ",final,";
      if (!run.epochs.empty()) {
        const auto& last = run.epochs.back();
        os << format_double(last.lambda) << ',' << format_double(last.train_loss) << ','
           << format_double(last.val_acc);
      } else {
        os << ",,";
      }
      if (run.failed)
        os << ",,,,,,,failed@" << *run.failed_epoch << '\n';
      else
        os << ',' << format_double(run.test_acc) << ',' << format_double(run.macro_f1) << ",,,,,ok\n";
    }
    os << agg.arm << ",aggregate,,,,," << format_double(agg.acc_mean) << ',' << format_double(agg.f1_mean)
       << ',' << format_double(agg.acc_std) << ',' << format_double(agg.f1_std) << ',' << agg.completed
       << ',' << agg.failure_count << ',' << (agg.failed ? "failed" : "ok") << '\n';
  }
  return os.str();
}

inline void export_metrics(const ExperimentResult& r, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write metrics", path);
  out << metrics_csv(r);
  if (!out) throw IoError("failed writing metrics", path);
}

inline void export_checkpoint(const ModelGraph& g, const std::string& path) { save_checkpoint(g, path); }

/// Table of aggregate rows from a metrics CSV.
inline std::string render_report(std::string_view csv) {
  std::istringstream is{std::string(csv)};
  std::string line;
  std::getline(is, line);
  if (text::trim(line) != kMetricsHeader) throw DataError("metrics file has an unexpected header");
  std::ostringstream os;
  char buf[200];
  std::snprintf(buf, sizeof buf, "%-24s %-18s %-18s %s\n", "Technique", "Accuracy", "Macro-F1", "Runs");
  os << buf;
  while (std::getline(is, line)) {
    auto f = text::split(line, ',');
    if (f.size() < 13 || f[1] != "aggregate") continue;
    const std::size_t completed = text::parse_size(f[10], "completed");
    const std::size_t failures = text::parse_size(f[11], "failures");
    auto cell = [&](const std::string& mean, const std::string& sd) {
      char c[64];
      std::snprintf(c, sizeof c, "%.3f +/- %.3f", text::parse_double(mean, "mean"), text::parse_double(sd, "std"));
      return std::string(completed ? c : "n/a");
    };
    std::snprintf(buf, sizeof buf, "%-24s %-18s %-18s %zu/%zu\n", f[0].c_str(), cell(f[6], f[8]).c_str(),
                  cell(f[7], f[9]).c_str(), completed, completed + failures);
    os << buf;
  }
  return os.str();
}

}  // namespace hef
