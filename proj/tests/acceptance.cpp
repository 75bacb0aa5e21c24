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
// Acceptance runner. Prints one PASS/FAIL line per criterion and exits
// non-zero if any selected criterion fails. `--only 1,3` restricts the set.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <sys/wait.h>

#include "hef/checkpoint.hpp"
#include "hef/distill.hpp"
#include "hef/gradcheck.hpp"
#include "hef/harness.hpp"
#include "hef/passes.hpp"
#include "hef/schedule.hpp"
#include "oracles.hpp"
#include "random_models.hpp"

using namespace hef;
namespace fs = std::filesystem;

namespace {

const std::string kConfigDir = HEF_CONFIG_DIR;
const std::string kHefctl = HEFCTL_PATH;

// Collects failed checks for one criterion.
struct Check {
  std::vector<std::string> problems;
  std::ostringstream detail;

  void expect(bool ok, const std::string& what) {
    if (!ok) problems.push_back(what);
  }
};

std::string fmt(double v, int prec = 6) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ------------------------------------------------------------------ 1

double oracle_lambda(long e, long e0, long d) {
  const long k = e - e0;
  if (k <= 0) return 0.0;
  if (k < d) return static_cast<double>(k) / static_cast<double>(d);
  return 1.0;
}

void exact_formulas(Check& c) {
  std::size_t grid = 0;
  for (auto [e0, d] : {std::pair{0L, 1L}, {3L, 10L}, {5L, 2L}})
    for (long e = 0; e <= 50; ++e, ++grid) {
      const double got = lambda_at_epoch({static_cast<std::size_t>(e0), static_cast<std::size_t>(d)},
                                         static_cast<std::size_t>(e));
      c.expect(got == oracle_lambda(e, e0, d),
               "lambda(e=" + std::to_string(e) + ", e0=" + std::to_string(e0) + ", d=" + std::to_string(d) + ")");
    }

  std::mt19937_64 rng(1);
  double worst_sum = 0, worst_shift = 0, worst_ce = 0;
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = 1 + i % 5, k = 2 + i % 7;
    const double scale = i % 3 == 0 ? 50.0 : 3.0;
    Tensor z = oracle::random_tensor({n, k}, rng, -scale, scale);
    const double tau = 0.5 + (i % 20);
    const Tensor q = soft_targets(z, tau);
    Tensor shifted = z;
    for (std::size_t r = 0; r < n; ++r) {
      const double s = std::uniform_real_distribution<double>(-100, 100)(rng);
      for (std::size_t j = 0; j < k; ++j) shifted[r * k + j] += s;
    }
    const Tensor qs = soft_targets(shifted, tau);
    for (std::size_t r = 0; r < n; ++r) {
      double sum = 0;
      for (std::size_t j = 0; j < k; ++j) {
        sum += q[r * k + j];
        worst_shift = std::max(worst_shift, std::abs(q[r * k + j] - qs[r * k + j]));
      }
      worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
    }

    std::vector<std::size_t> labels(n);
    for (auto& y : labels) y = std::uniform_int_distribution<std::size_t>(0, k - 1)(rng);
    Tensor t = oracle::random_tensor({n, k}, rng, -scale, scale);
    Tape tape(false);
    const double kd = tape.value(kd_loss(tape, tape.constant(z), tape.constant(t), labels, {tau, 0.0})).item();
    const double ce = tape.value(cross_entropy(tape, tape.constant(z), labels)).item();
    const double ref = oracle::cross_entropy(z, labels);
    worst_ce = std::max({worst_ce, std::abs(kd - ce), std::abs(kd - ref)});
  }
  c.expect(worst_sum <= 1e-12, "soft_targets row sum off by " + fmt(worst_sum));
  c.expect(worst_shift <= 1e-12, "soft_targets shift changed output by " + fmt(worst_shift));
  c.expect(worst_ce <= 1e-12, "kd_loss(alpha=0) differs from CE by " + fmt(worst_ce));
  c.detail << grid << " grid points; row-sum err " << fmt(worst_sum, 3) << ", shift err " << fmt(worst_shift, 3)
           << ", kd-ce " << fmt(worst_ce, 3);
}

// ------------------------------------------------------------------ 2

constexpr double kGradTol = 1e-4;
constexpr int kInstances = 20;

void gradients(Check& c) {
  std::mt19937_64 rng(2024);
  std::map<std::string, double> worst;
  auto check = [&](const std::string& name, const std::function<Var(Tape&)>& f, std::vector<ParamRef> params) {
    // Random projection so the scalar loss touches every output element.
    Tensor y;
    {
      Tape t(false);
      y = t.value(f(t));
    }
    const std::size_t width = y.rank() <= 1 ? y.size() : y.size() / y.dim(0);
    Tensor r = oracle::random_tensor({1, width}, rng);
    auto loss = [&](Tape& t) {
      Var out = f(t);
      if (t.value(out).rank() != 2) out = flatten(t, out);
      return sum(t, dense(t, out, t.constant(r), t.constant(Tensor({1}))));
    };
    auto rep = check_gradients(loss, params, kGradTol);
    worst[name] = std::max(worst[name], rep.max_rel_error);
    c.expect(rep.passed(), name + " rel error " + fmt(rep.max_rel_error));
  };
  auto scalar_check = [&](const std::string& name, const std::function<Var(Tape&)>& f,
                          std::vector<ParamRef> params) {
    auto rep = check_gradients(f, params, kGradTol);
    worst[name] = std::max(worst[name], rep.max_rel_error);
    c.expect(rep.passed(), name + " rel error " + fmt(rep.max_rel_error));
  };
  auto away_from_zero = [&](Shape s) {
    Tensor t = oracle::random_tensor(std::move(s), rng, 0.05, 1.0);
    for (auto& v : t.data()) v = std::bernoulli_distribution(0.5)(rng) ? v : -v;
    return t;
  };

  for (int i = 0; i < kInstances; ++i) {
    {
      Tensor x = oracle::random_tensor({3, 4}, rng), w = oracle::random_tensor({2, 4}, rng),
             b = oracle::random_tensor({2}, rng);
      check("dense", [&](Tape& t) { return dense(t, t.variable(x), t.variable(w), t.variable(b)); },
            {{"x", &x}, {"w", &w}, {"b", &b}});
    }
    {
      const std::size_t s = 1 + i % 2;
      const Padding pad = i % 3 == 0 ? Padding::Valid : Padding::Same;
      Tensor x = oracle::random_tensor({2, 2, 5, 4}, rng), k = oracle::random_tensor({3, 2, 3, 2}, rng),
             b = oracle::random_tensor({3}, rng);
      check("conv2d",
            [&](Tape& t) {
              return conv2d(t, t.variable(x), t.variable(k), t.variable(b), {.stride = s, .padding = pad, .pad_fill = {}});
            },
            {{"x", &x}, {"k", &k}, {"b", &b}});
    }
    {
      Tensor x = oracle::random_tensor({2, 2, 7, 7}, rng);
      Pool2dOptions o{.window_h = 3, .window_w = 3, .stride = 1 + std::size_t(i % 2)};
      check("avg_pool", [&](Tape& t) { return avg_pool(t, t.variable(x), o); }, {{"x", &x}});
    }
    {
      Tensor x({2, 2, 6, 6});
      std::vector<double> vals(x.size());
      for (std::size_t j = 0; j < vals.size(); ++j) vals[j] = 0.1 * static_cast<double>(j);
      std::shuffle(vals.begin(), vals.end(), rng);
      std::copy(vals.begin(), vals.end(), x.data().begin());
      check("max_pool", [&](Tape& t) { return max_pool(t, t.variable(x), {}); }, {{"x", &x}});
    }
    {
      const bool conv = i % 2 == 0;
      Tensor x = conv ? oracle::random_tensor({3, 2, 2, 3}, rng, -2, 2) : oracle::random_tensor({5, 2}, rng, -2, 2);
      Tensor g = oracle::random_tensor({2}, rng, 0.5, 2), b = oracle::random_tensor({2}, rng);
      Tensor rm0 = oracle::random_tensor({2}, rng), rv0 = oracle::random_tensor({2}, rng, 0.5, 2);
      const Mode mode = i % 4 < 2 ? Mode::Train : Mode::Eval;
      Tensor rm = rm0, rv = rv0;
      check("batch_norm",
            [&](Tape& t) {
              rm = rm0;
              rv = rv0;
              return batch_norm(t, t.variable(x), t.variable(g), t.variable(b), {&rm, &rv, 1e-5, 0.1}, mode);
            },
            {{"x", &x}, {"gamma", &g}, {"beta", &b}});
    }
    {
      Tensor x = away_from_zero({3, 5});
      check("relu", [&](Tape& t) { return relu(t, t.variable(x)); }, {{"x", &x}});
    }
    {
      Tensor x = oracle::random_tensor({3, 5}, rng, -3, 3);
      check("square", [&](Tape& t) { return square(t, t.variable(x)); }, {{"x", &x}});
      check("approx_relu", [&](Tape& t) { return approx_relu(t, t.variable(x)); }, {{"x", &x}});
    }
    {
      Tensor x = oracle::random_tensor({3, 5}, rng, -3, 3);
      Tensor a = oracle::random_tensor({1}, rng), b = oracle::random_tensor({1}, rng);
      check("trainable_poly(x, a, b)",
            [&](Tape& t) { return trainable_poly(t, t.variable(x), t.variable(a), t.variable(b)); },
            {{"x", &x}, {"a", &a}, {"b", &b}});
    }
    {
      Tensor x = away_from_zero({3, 5});
      Tensor a = oracle::random_tensor({1}, rng), b = oracle::random_tensor({1}, rng);
      const double lambda = static_cast<double>(i) / (kInstances - 1);
      check("weighted",
            [&](Tape& t) { return weighted_act(t, t.variable(x), t.variable(a), t.variable(b), lambda); },
            {{"x", &x}, {"a", &a}, {"b", &b}});
    }
    {
      Tensor x = oracle::random_tensor({2, 3, 2, 2}, rng), y = oracle::random_tensor({2, 3, 2, 2}, rng);
      const double k = std::uniform_real_distribution<double>(-2, 2)(rng);
      check("flatten", [&](Tape& t) { return flatten(t, t.variable(x)); }, {{"x", &x}});
      check("scale", [&](Tape& t) { return scale(t, t.variable(x), k); }, {{"x", &x}});
      check("add", [&](Tape& t) { return add(t, t.variable(x), t.variable(y)); }, {{"x", &x}, {"y", &y}});
      check("dropout",
            [&](Tape& t) {
              Rng r(static_cast<std::uint64_t>(i));
              return dropout(t, t.variable(x), 0.3, r, Mode::Train);
            },
            {{"x", &x}});
    }
    {
      Tensor z = oracle::random_tensor({4, 3}, rng, -3, 3);
      std::vector<std::size_t> labels{0, 1, 2, std::size_t(i % 3)};
      Tensor teacher = oracle::random_tensor({4, 3}, rng, -3, 3);
      check("log_softmax", [&](Tape& t) { return log_softmax(t, t.variable(z)); }, {{"z", &z}});
      scalar_check("cross_entropy", [&](Tape& t) { return cross_entropy(t, t.variable(z), labels); }, {{"z", &z}});
      scalar_check("kd_loss",
                   [&](Tape& t) {
                     return kd_loss(t, t.variable(z), t.constant(teacher), labels, {2.0 + i % 5, 0.3});
                   },
                   {{"z", &z}});
    }
  }
  double overall = 0;
  for (auto& [k, v] : worst) overall = std::max(overall, v);
  c.detail << worst.size() << " primitives x " << kInstances << " instances, max rel error " << fmt(overall, 3);
}

// ------------------------------------------------------------------ 3

void bn_fold(Check& c) {
  double worst = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto g = testmodels::random_cnn(seed, seed % 2 == 0);
    auto f = fold_batch_norm(g);
    c.expect(f.nodes().size() < g.nodes().size(), "model " + std::to_string(seed) + " kept its batch norms");
    std::mt19937_64 rng(seed * 7919);
    Shape s{100};
    s.insert(s.end(), g.input_shape().begin(), g.input_shape().end());
    const Tensor x = oracle::random_tensor(s, rng, -3, 3);
    const Tensor a = g.predict(x), b = f.predict(x);
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  c.expect(worst <= 1e-9, "max-abs output difference " + fmt(worst));

  // gamma=2, beta=1, mean=0, var=1, eps=0 feeding w=3, b=0 gives 6x + 3.
  auto g = parse_model_config("input 1\nmode eval\nbatchnorm eps=0\ndense out=1\n");
  auto& bn = *g.nodes()[0].as<BatchNormLayer>();
  bn.gamma[0] = 2;
  bn.beta[0] = 1;
  bn.running_mean[0] = 0;
  bn.running_var[0] = 1;
  auto& d = *g.nodes()[1].as<DenseLayer>();
  d.weight = Tensor({1, 1}, 3.0);
  d.bias = Tensor({1}, 0.0);
  auto f = fold_batch_norm(g);
  const auto* fd = f.nodes().size() == 1 ? f.nodes()[0].as<DenseLayer>() : nullptr;
  c.expect(fd && fd->weight[0] == 6.0 && fd->bias[0] == 3.0, "scalar case is not W'=6, b'=3");
  c.detail << "10 models x 100 inputs, max-abs diff " << fmt(worst, 3) << "; scalar case W'="
           << (fd ? fmt(fd->weight[0]) : "?") << " b'=" << (fd ? fmt(fd->bias[0]) : "?");
}

// ------------------------------------------------------------------ 4

void static_analysis(Check& c) {
  auto he = load_model_config(kConfigDir + "/alexnet_he.model");
  const auto layers = multiplicative_depth(he).layer_count;
  c.expect(layers == 21, "layer count " + std::to_string(layers));
  he.set_mode(Mode::Eval);
  set_transition(he, 1.0);
  const auto depth = multiplicative_depth(fold_batch_norm(he)).total;
  c.expect(depth == 18, "depth after fold " + std::to_string(depth));
  const auto fin = he_lint(finalize_he_friendly(he)).size();
  c.expect(fin == 0, std::to_string(fin) + " violations on the finalized graph");
  const auto base = he_lint(load_model_config(kConfigDir + "/alexnet_baseline.model")).size();
  c.expect(base >= 10, "baseline has only " + std::to_string(base) + " violations");
  c.detail << "layers " << layers << ", folded depth " << depth << ", finalized violations " << fin
           << ", baseline violations " << base;
}

// ------------------------------------------------------------------ 5, 7

fs::path scratch_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("hef_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::optional<std::string> ablation_csv;

std::string run_ablation(const fs::path& out) {
  auto cfg = load_train_config(kConfigDir + "/desk_ablation.cfg");
  cfg.out_dir = out.string();
  auto r = run_experiment(cfg, &std::cerr);
  return metrics_csv(r);
}

void ablation(Check& c) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto csv = run_ablation(scratch_dir("ablation_a"));
  const double secs = seconds_since(t0);
  ablation_csv = csv;
  std::cerr << render_report(csv);

  // Aggregate rows: arm,aggregate,,,,,acc_mean,f1_mean,acc_std,f1_std,completed,failures,status
  struct Agg {
    double acc = 0, sd = 0;
    std::size_t completed = 0, failures = 0;
  };
  std::map<std::string, Agg> agg;
  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    auto f = text::split(line, ',');
    if (f.size() == 13 && f[1] == "aggregate")
      agg[f[0]] = {std::stod(f[6]), std::stod(f[8]), std::stoul(f[10]), std::stoul(f[11])};
  }
  for (const char* arm : {"baseline_relu_maxpool", "square", "tp", "tp_st", "tp_st_kd"})
    if (!agg.count(arm)) {
      c.expect(false, std::string("no aggregate for ") + arm);
      return;
    }
  const auto& base = agg["baseline_relu_maxpool"];
  const auto& tp = agg["tp"];
  const auto& st = agg["tp_st"];
  const auto& sq = agg["square"];
  const auto& kd = agg["tp_st_kd"];
  c.expect(base.acc >= 0.85, "(a) baseline mean " + fmt(base.acc, 4) + " < 0.85");
  c.expect(std::abs(st.acc - base.acc) <= 0.06, "(b) tp_st mean " + fmt(st.acc, 4) + " vs baseline " + fmt(base.acc, 4));
  c.expect(st.sd <= tp.sd, "(c) tp_st std " + fmt(st.sd, 4) + " > tp std " + fmt(tp.sd, 4));
  c.expect(sq.acc <= st.acc - 0.10 || sq.failures >= 2,
           "(d) square mean " + fmt(sq.acc, 4) + " with " + std::to_string(sq.failures) + " diverged runs");
  c.expect(kd.acc >= st.acc - 0.01, "(e) tp_st_kd mean " + fmt(kd.acc, 4) + " < tp_st " + fmt(st.acc, 4) + " - 0.01");
  c.detail << "baseline " << fmt(base.acc, 4) << "+/-" << fmt(base.sd, 3) << ", square " << fmt(sq.acc, 4) << " ("
           << sq.failures << " diverged), tp " << fmt(tp.acc, 4) << "+/-" << fmt(tp.sd, 3) << ", tp_st "
           << fmt(st.acc, 4) << "+/-" << fmt(st.sd, 3) << ", tp_st_kd " << fmt(kd.acc, 4) << "; " << fmt(secs, 4)
           << " s";
}

void reproducibility(Check& c) {
  if (!ablation_csv) ablation_csv = run_ablation(scratch_dir("ablation_a"));
  const auto again = run_ablation(scratch_dir("ablation_b"));
  c.expect(again == *ablation_csv, "metrics CSV differs between identical runs");
  c.detail << (again == *ablation_csv ? "identical" : "different") << " CSV (" << again.size() << " bytes)";
}

// ------------------------------------------------------------------ 6

struct Proc {
  int status = -1;
  std::string out;
};

Proc sh(const std::string& cmd) {
  Proc p;
  FILE* f = popen((cmd + " 2>&1").c_str(), "r");
  if (!f) return p;
  char buf[4096];
  while (std::size_t n = fread(buf, 1, sizeof buf, f)) p.out.append(buf, n);
  const int rc = pclose(f);
  p.status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  return p;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

std::optional<double> accuracy_line(const std::string& out) {
  std::istringstream is(out);
  std::string line;
  while (std::getline(is, line))
    if (line.rfind("accuracy", 0) == 0) {
      auto tok = text::split_ws(line);
      if (tok.size() >= 2) return std::stod(tok.back());
    }
  return std::nullopt;
}

void pipeline(Check& c) {
  const auto dir = scratch_dir("pipeline");
  const auto cfg = fs::path(kConfigDir) / "pipeline.cfg";
  const auto train = sh(q(kHefctl) + " train --config " + q(cfg) + " --out " + q(dir));
  c.expect(train.status == 0, "train exited " + std::to_string(train.status) + ": " + train.out);
  if (train.status != 0) return;
  const auto ckpt = dir / "tp_st_kd" / "seed_111.ckpt";
  const auto fin = dir / "final.ckpt";
  const auto finalize = sh(q(kHefctl) + " finalize " + q(ckpt) + " -o " + q(fin));
  c.expect(finalize.status == 0, "finalize: " + finalize.out);
  if (finalize.status != 0) return;
  const auto lint = sh(q(kHefctl) + " lint " + q(fin));
  c.expect(lint.status == 0 && lint.out.empty(), "lint output: '" + lint.out + "'");
  const auto before = accuracy_line(sh(q(kHefctl) + " eval --checkpoint " + q(ckpt) + " --dataset " + q(cfg)).out);
  const auto after = accuracy_line(sh(q(kHefctl) + " eval --checkpoint " + q(fin) + " --dataset " + q(cfg)).out);
  c.expect(before && after, "eval printed no accuracy");
  if (!before || !after) return;
  c.expect(std::abs(*before - *after) <= 1e-6, "accuracy " + fmt(*before, 17) + " vs " + fmt(*after, 17));
  const auto lint_raw = sh(q(kHefctl) + " lint " + q(ckpt));
  c.detail << "lint empty, eval accuracy " << fmt(*before) << " before and " << fmt(*after)
           << " after finalize; unfinalized checkpoint lint exit " << lint_raw.status;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      for (const auto& t : text::split(argv[++i], ',')) only.insert(std::stoi(t));
    } else {
      std::cerr << "usage: acceptance [--only N[,N...]]\n";
      return 2;
    }
  }
  // Wall-clock budget in seconds; 0 means none.
  const std::vector<std::tuple<int, std::string, double, std::function<void(Check&)>>> criteria = {
      {1, "exact formulas", 10, exact_formulas},
      {2, "gradients", 60, gradients},
      {3, "batch-norm fold equivalence", 30, bn_fold},
      {4, "static analysis", 5, static_analysis},
      {5, "desk-scale ablation", 1800, ablation},
      {6, "end-to-end pipeline", 0, pipeline},
      {7, "reproducibility", 0, reproducibility},
  };
  int failed = 0;
  for (const auto& [id, name, budget, fn] : criteria) {
    if (!only.empty() && !only.count(id)) continue;
    Check c;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      fn(c);
    } catch (const std::exception& e) {
      c.problems.push_back(std::string("exception: ") + e.what());
    }
    const double secs = seconds_since(t0);
    if (budget > 0 && secs > budget) c.problems.push_back("over the " + fmt(budget) + " s budget");
    const bool ok = c.problems.empty();
    failed += !ok;
    std::cout << (ok ? "PASS" : "FAIL") << " criterion " << id << ": " << name << " [" << fmt(secs, 3) << " s] "
              << c.detail.str();
    for (const auto& p : c.problems) std::cout << "\n    " << p;
    std::cout << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
