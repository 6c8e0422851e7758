// Copyright 2026 The knobtune Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

// knobtune: space-validate | run | compare | report

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "knobtune/knobtune.hpp"

namespace {

using namespace knobtune;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("knobtune");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* level = std::getenv("TUNER_LOG");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::warn);
}

std::string format_number(double v, int precision = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

// --- run ------------------------------------------------------------------------

struct RunFlags {
  std::string space;
  std::string evaluator;
  std::string optimizer = "gp";
  std::string projection = "hesbo";
  std::size_t dims = 16;
  double bias = kDefaultBias;
  std::size_t buckets = kDefaultBuckets;
  std::size_t iters = 100;
  std::size_t init = 10;
  std::uint64_t seed = 0;
  bool maximize = false;
  bool minimize = false;
  std::string early_stop;
  double timeout = 600.0;
  std::string output;
};

std::optional<EarlyStopPolicy> parse_early_stop(const std::string& text) {
  if (text.empty()) return std::nullopt;
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw CLI::ValidationError("--early-stop", "expected x,k");
  EarlyStopPolicy p;
  p.min_improvement_percent = std::stod(text.substr(0, comma));
  p.patience = static_cast<std::size_t>(std::stoul(text.substr(comma + 1)));
  return p;
}

int cmd_space_validate(const std::string& path) {
  try {
    const auto space = parse_space(path);
    std::cout << "ok: " << space.size() << " knobs (" << space.hybrid_count() << " hybrid)\n";
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "invalid space: " << e.what() << '\n';
    return kExitFailure;
  }
}

int cmd_run(const RunFlags& f) {
  SessionConfig cfg;
  cfg.space_path = f.space;
  cfg.evaluator = f.evaluator;
  cfg.optimizer = f.optimizer;
  cfg.projection = parse_projection_kind(f.projection);
  cfg.dims = f.dims;
  cfg.bias = f.bias;
  cfg.buckets = f.buckets == 0 ? std::nullopt : std::optional<std::size_t>(f.buckets);
  cfg.iters = f.iters;
  cfg.n_init = f.init;
  cfg.seed = f.seed;
  cfg.direction = f.minimize ? Direction::kMinimize : Direction::kMaximize;
  cfg.early_stop = parse_early_stop(f.early_stop);
  cfg.timeout_seconds = f.timeout;

  std::ofstream out(f.output);
  if (!out) {
    std::cerr << "cannot write " << f.output << '\n';
    return kExitFailure;
  }
  HistoryWriter writer(out);
  try {
    const auto result = run_session(cfg, &writer, [](const Observation& o) {
      spdlog::info("iter {} status={} value={} best={}", o.iter,
                   o.status == EvalStatus::kOk ? "ok" : "crash",
                   o.raw_value ? std::to_string(*o.raw_value) : std::string("-"), o.best);
    });
    const auto& h = result.history;
    std::cout << "best=" << h.final_best() << " iterations=" << h.observations.size()
              << " stop=" << result.stop_reason << '\n';
    return kExitOk;
  } catch (const SpawnError& e) {
    std::cerr << "evaluator failed to start: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << '\n';
    return kExitFailure;
  }
}

// --- compare --------------------------------------------------------------------

struct Loaded {
  std::string path;
  History history;
};

std::vector<Loaded> load_all(const std::vector<std::string>& paths) {
  std::vector<Loaded> out;
  for (const auto& p : paths) out.push_back({p, read_history(p)});
  return out;
}

/// Pairs treatments with baselines: by seed when every treatment seed has a
/// baseline, else by position, else against a single shared baseline.
std::vector<std::pair<const Loaded*, const Loaded*>> pair_up(const std::vector<Loaded>& base,
                                                            const std::vector<Loaded>& treat) {
  std::vector<std::pair<const Loaded*, const Loaded*>> pairs;
  std::map<std::uint64_t, const Loaded*> by_seed;
  for (const auto& b : base) by_seed.emplace(b.history.config.seed, &b);
  const bool seeds_match = by_seed.size() == base.size() &&
                           std::all_of(treat.begin(), treat.end(), [&](const Loaded& t) {
                             return by_seed.count(t.history.config.seed) > 0;
                           });
  for (std::size_t i = 0; i < treat.size(); ++i) {
    const Loaded* b = nullptr;
    if (seeds_match) b = by_seed.at(treat[i].history.config.seed);
    else if (base.size() == treat.size()) b = &base[i];
    else if (base.size() == 1) b = &base[0];
    else throw std::invalid_argument("cannot pair baselines with treatments");
    pairs.emplace_back(b, &treat[i]);
  }
  return pairs;
}

int cmd_compare(const std::vector<std::string>& baseline_paths,
                const std::vector<std::string>& treatment_paths) {
  std::vector<Loaded> base, treat;
  try {
    base = load_all(baseline_paths);
    treat = load_all(treatment_paths);
  } catch (const std::exception& e) {
    std::cerr << "cannot read history: " << e.what() << '\n';
    return kExitFailure;
  }
  const Direction dir = base.front().history.config.direction;
  for (const auto* set : {&base, &treat})
    for (const auto& l : *set)
      if (l.history.config.direction != dir) {
        std::cerr << "direction mismatch: " << l.path << '\n';
        return kExitFailure;
      }

  std::vector<std::pair<const Loaded*, const Loaded*>> pairs;
  try {
    pairs = pair_up(base, treat);
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return kExitFailure;
  }

  std::vector<double> improvements, speedups, iterations;
  std::size_t not_reached = 0;
  std::cout << "baseline,treatment,final_improvement_pct,time_to_optimal_iter,speedup\n";
  for (const auto& [b, t] : pairs) {
    double imp = 0.0;
    try {
      imp = final_improvement(b->history, t->history);
    } catch (const std::exception& e) {
      std::cerr << e.what() << '\n';
      return kExitFailure;
    }
    const auto tto = time_to_optimal(b->history, t->history);
    improvements.push_back(imp);
    std::cout << b->path << ',' << t->path << ',' << format_number(imp, 2) << ',';
    if (tto.reached()) {
      speedups.push_back(*tto.speedup);
      iterations.push_back(static_cast<double>(*tto.iteration));
      std::cout << *tto.iteration << ',' << format_number(*tto.speedup, 2) << '\n';
    } else {
      ++not_reached;
      std::cout << "not reached,not reached\n";
    }
  }

  std::cout << '\n'
            << std::left << std::setw(26) << "metric" << std::setw(22) << "average"
            << "[5%, 95%] CI\n";
  std::cout << std::setw(26) << "final improvement (%)" << std::setw(22)
            << format_number(mean(improvements), 2)
            << "[" << format_number(percentile(improvements, 5), 2) << ", "
            << format_number(percentile(improvements, 95), 2) << "]\n";
  std::cout << std::setw(26) << "time-to-optimal speedup";
  if (speedups.empty()) {
    std::cout << std::setw(22) << "not reached" << "not reached\n";
  } else {
    const std::string avg = format_number(mean(speedups), 2) + "x [" +
                            format_number(mean(iterations), 0) + " iter]";
    std::cout << std::setw(22) << avg << "[" << format_number(percentile(speedups, 5), 2) << "x, "
              << format_number(percentile(speedups, 95), 2) << "x]";
    if (not_reached > 0) std::cout << "  (not reached in " << not_reached << ")";
    std::cout << '\n';
  }
  return kExitOk;
}

// --- report ---------------------------------------------------------------------

int cmd_report(const std::vector<std::string>& paths, const std::string& output) {
  std::vector<Loaded> all;
  try {
    all = load_all(paths);
  } catch (const std::exception& e) {
    std::cerr << "cannot read history: " << e.what() << '\n';
    return kExitFailure;
  }
  for (const auto& l : all) {
    if (l.history.observations.empty()) {
      std::cerr << l.path << ": history has no observations\n";
      return kExitFailure;
    }
  }

  std::ofstream file;
  if (!output.empty()) {
    file.open(output);
    if (!file) {
      std::cerr << "cannot write " << output << '\n';
      return kExitFailure;
    }
  }
  std::ostream& csv = output.empty() ? std::cout : file;
  std::ostream& summary = output.empty() ? std::cerr : std::cout;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (all.size() > 1) {
      if (i > 0) csv << '\n';
      csv << "# session: " << all[i].path << '\n';
    }
    write_convergence_csv(csv, all[i].history);
  }

  for (const auto& l : all) {
    const auto& h = l.history;
    const auto at = first_reaching(h, h.final_best());
    std::size_t crashes = 0;
    for (const auto& o : h.observations) crashes += o.penalized ? 1 : 0;
    summary << l.path << ": iterations=" << h.observations.size() << " best=" << h.final_best()
            << " first_at=" << *at << " crashes=" << crashes;
    if (h.default_config.raw_value) summary << " default=" << *h.default_config.raw_value;
    summary << '\n';
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Sample-efficient configuration tuning with low-dimensional projections"};
  app.require_subcommand(1);

  std::string validate_path;
  auto* validate = app.add_subcommand("space-validate", "Parse and validate a space file");
  validate->add_option("--space", validate_path, "Space JSON file")->required();

  RunFlags rf;
  auto* run = app.add_subcommand("run", "Run one tuning session");
  run->add_option("--space", rf.space, "Space JSON file")->required();
  run->add_option("--evaluator", rf.evaluator,
                  "synthetic:<kind>[:k=v,...] or exec:<command>")->required();
  run->add_option("--optimizer", rf.optimizer)->check(CLI::IsMember({"gp", "random"}));
  run->add_option("--projection", rf.projection)->check(CLI::IsMember({"hesbo", "rembo", "none"}));
  run->add_option("--dims", rf.dims, "Low dimension d");
  run->add_option("--bias", rf.bias, "Special-value probability per special value");
  run->add_option("--buckets", rf.buckets, "Grid size K per coordinate (0 disables)");
  run->add_option("--iters", rf.iters, "Iteration budget, initial design included");
  run->add_option("--init", rf.init, "Number of LHS points");
  run->add_option("--seed", rf.seed);
  auto* max_flag = run->add_flag("--maximize", rf.maximize);
  auto* min_flag = run->add_flag("--minimize", rf.minimize);
  max_flag->excludes(min_flag);
  run->add_option("--early-stop", rf.early_stop, "x,k: stop when best improves < x% over k iterations");
  run->add_option("--timeout", rf.timeout, "Seconds per external evaluation");
  run->add_option("--output", rf.output, "History file (NDJSON)")->required();

  std::vector<std::string> baselines, treatments;
  auto* compare = app.add_subcommand("compare", "Compare baseline and treatment histories");
  compare->add_option("--baseline", baselines)->required()->expected(1, -1);
  compare->add_option("--treatment", treatments)->required()->expected(1, -1);

  std::vector<std::string> reports;
  std::string report_out;
  auto* report = app.add_subcommand("report", "Convergence CSV for one or more histories");
  report->add_option("histories", reports)->required()->expected(1, -1);
  report->add_option("--output", report_out, "CSV path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kExitUsage;
  }

  if (*validate) return cmd_space_validate(validate_path);
  if (*run) {
    try {
      parse_early_stop(rf.early_stop);
    } catch (const std::exception& e) {
      std::cerr << "invalid --early-stop: " << e.what() << '\n' << run->help();
      return kExitUsage;
    }
    return cmd_run(rf);
  }
  if (*compare) return cmd_compare(baselines, treatments);
  if (*report) return cmd_report(reports, report_out);
  return kExitUsage;
}
