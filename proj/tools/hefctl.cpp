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
// hefctl: train, evaluate and transform HE-friendly models.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "hef/harness.hpp"

namespace fs = std::filesystem;
using namespace hef;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file", path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ModelGraph load_any_model(const std::string& path) {
  return is_checkpoint_file(path) ? load_checkpoint(path) : load_model_config(path);
}

std::string env_output_root() {
  const char* v = std::getenv("HEF_OUTPUT_ROOT");
  return v ? v : "";
}

int cmd_train(const std::string& config, const std::vector<std::string>& arms,
              const std::vector<std::uint64_t>& seeds, const std::string& out, bool verbose) {
  TrainConfig cfg = load_train_config(config);
  if (!arms.empty()) {
    cfg.arms.clear();
    for (const auto& a : arms) cfg.arms.push_back(parse_arm(a));
  }
  if (!seeds.empty()) cfg.seeds = seeds;
  if (!out.empty())
    cfg.out_dir = out;
  else if (auto root = env_output_root(); !root.empty())
    cfg.out_dir = root;
  fs::create_directories(cfg.out_dir);

  std::ostream* log = verbose ? &std::cerr : nullptr;
  std::cerr << "training " << cfg.arms.size() << " arm(s) x " << cfg.seeds.size() << " seed(s), "
            << cfg.epochs << " epochs -> " << cfg.out_dir << '\n';
  ExperimentResult result;
  if (verbose) {
    result = run_experiment(cfg, log);
  } else {
    // Per-run summary lines only.
    struct SummaryBuf : std::stringbuf {
      int sync() override {
        const auto s = str();
        std::size_t start = 0;
        for (std::size_t nl; (nl = s.find('\n', start)) != std::string::npos; start = nl + 1) {
          const auto line = s.substr(start, nl - start);
          if (line.rfind("  [", 0) != 0) std::cerr << line << '\n';
        }
        str(s.substr(start));
        return 0;
      }
    } buf;
    std::ostream summary(&buf);
    result = run_experiment(cfg, &summary);
  }
  const auto metrics = (fs::path(cfg.out_dir) / "metrics.csv").string();
  export_metrics(result, metrics);
  std::cout << render_report(metrics_csv(result));
  std::cout << "metrics written to " << metrics << '\n';
  return result.any_failed() ? 1 : 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& dataset_cfg, const std::string& split) {
  ModelGraph model = load_checkpoint(checkpoint);
  model.set_mode(Mode::Eval);
  const TrainConfig cfg = load_train_config(dataset_cfg);
  const Dataset data = load_dataset(cfg.dataset);
  const Split* s = split == "test" ? &data.test : split == "validation" ? &data.validation : &data.train;
  const EvalResult r = evaluate(model, *s);
  std::cout << "accuracy " << text::format_double(r.accuracy) << '\n';
  std::cout << "macro_f1 " << text::format_double(r.macro_f1) << '\n';
  for (std::size_t c = 0; c < r.per_class_f1.size(); ++c)
    std::cout << "f1_class_" << c << ' ' << text::format_double(r.per_class_f1[c]) << '\n';
  return 0;
}

int cmd_report(const std::string& in) {
  fs::path dir = in.empty() ? fs::path(env_output_root()) : fs::path(in);
  if (dir.empty()) throw ConfigError("report needs --in or HEF_OUTPUT_ROOT");
  std::cout << render_report(read_file((dir / "metrics.csv").string()));
  return 0;
}

int cmd_lint(const std::string& path) {
  const auto violations = he_lint(load_any_model(path));
  for (const auto& v : violations) std::cout << v.node << ": " << v.reason << '\n';
  return violations.empty() ? 0 : 1;
}

int cmd_depth(const std::string& path, const std::string& convention) {
  const DepthConvention conv =
      convention.empty() ? DepthConvention::defaults() : DepthConvention::parse(read_file(convention));
  std::cout << format_depth_report(multiplicative_depth(load_any_model(path), conv));
  return 0;
}

int cmd_fold(const std::string& in, const std::string& out) {
  ModelGraph g = load_checkpoint(in);
  g.set_mode(Mode::Eval);
  save_checkpoint(fold_batch_norm(g), out);
  return 0;
}

int cmd_finalize(const std::string& in, const std::string& out) {
  save_checkpoint(finalize_he_friendly(load_checkpoint(in)), out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Train and transform HE-friendly neural networks"};
  app.require_subcommand(1);

  std::string config, out, checkpoint, dataset, in_dir, model_path, convention, split = "test";
  std::vector<std::string> arms;
  std::vector<std::uint64_t> seeds;
  bool verbose = false;

  auto* train = app.add_subcommand("train", "Run the configured arms over all seeds");
  train->add_option("--config", config, "Experiment config file")->required()->check(CLI::ExistingFile);
  train->add_option("--arm", arms, "Arm(s) to run, overriding the config");
  train->add_option("--seeds", seeds, "Seeds, overriding the config")->delimiter(',');
  train->add_option("--out", out, "Output directory (default: $HEF_OUTPUT_ROOT or config 'out')");
  train->add_flag("-v,--verbose", verbose, "Per-epoch progress on stderr");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  eval->add_option("--dataset", dataset, "Config file whose dataset.* keys describe the data")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--split", split)->check(CLI::IsMember({"train", "validation", "test"}));

  auto* report = app.add_subcommand("report", "Render the comparison table of a run directory");
  report->add_option("--in", in_dir, "Run directory containing metrics.csv");

  auto* lint = app.add_subcommand("lint", "List HE-unfriendly nodes; silent when clean");
  lint->add_option("model", model_path, "Model config or checkpoint")->required()->check(CLI::ExistingFile);

  auto* depth = app.add_subcommand("depth", "Multiplicative depth report");
  depth->add_option("model", model_path, "Model config or checkpoint")->required()->check(CLI::ExistingFile);
  depth->add_option("--convention", convention, "Depth convention file")->check(CLI::ExistingFile);

  auto* fold = app.add_subcommand("fold", "Fold batch-norm layers into the following layer");
  fold->add_option("checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  fold->add_option("-o,--output", out)->required();

  auto* finalize = app.add_subcommand("finalize", "Produce the HE-friendly inference graph");
  finalize->add_option("checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  finalize->add_option("-o,--output", out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(config, arms, seeds, out, verbose);
    if (*eval) return cmd_eval(checkpoint, dataset, split);
    if (*report) return cmd_report(in_dir);
    if (*lint) return cmd_lint(model_path);
    if (*depth) return cmd_depth(model_path, convention);
    if (*fold) return cmd_fold(checkpoint, out);
    if (*finalize) return cmd_finalize(checkpoint, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
