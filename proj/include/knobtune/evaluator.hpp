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

#pragma once

#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "knobtune/config_space.hpp"
#include "knobtune/errors.hpp"
#include "knobtune/pipeline.hpp"
#include "knobtune/rng.hpp"

extern char** environ;

namespace knobtune {

enum class EvalStatus { kOk, kCrash };

struct EvalOutcome {
  EvalStatus status = EvalStatus::kOk;
  std::optional<double> value;  ///< present iff status == kOk
  std::chrono::duration<double, std::milli> wall_time{0};
  std::string cause;            ///< why a crash was declared

  static EvalOutcome ok(double v) { return {EvalStatus::kOk, v, {}, {}}; }
  static EvalOutcome crash(std::string why) { return {EvalStatus::kCrash, std::nullopt, {}, std::move(why)}; }
  bool is_ok() const { return status == EvalStatus::kOk; }
};

class Evaluator {
 public:
  virtual ~Evaluator() = default;
  virtual EvalOutcome evaluate(const KnobAssignment& assignment) = 0;
  virtual std::string describe() const = 0;
};

/// Knob value mapped onto [0, 1] over the knob's full domain.
inline double normalized_value(const KnobSpec& knob, const KnobValue& value) {
  if (knob.kind == KnobKind::kCategorical) {
    const auto& s = std::get<std::string>(value);
    const auto it = std::find(knob.choices.begin(), knob.choices.end(), s);
    return static_cast<double>(it - knob.choices.begin()) /
           static_cast<double>(knob.choices.size() - 1);
  }
  return (as_double(value) - knob.min) / (knob.max - knob.min);
}

// --- synthetic surfaces -----------------------------------------------------

enum class SyntheticKind { kEmbeddedQuadratic, kSpecialValueCliff, kCrashyQuadratic };

inline SyntheticKind parse_synthetic_kind(const std::string& name) {
  if (name == "embedded_quadratic") return SyntheticKind::kEmbeddedQuadratic;
  if (name == "special_value_cliff") return SyntheticKind::kSpecialValueCliff;
  if (name == "crashy_quadratic") return SyntheticKind::kCrashyQuadratic;
  throw std::invalid_argument("unknown synthetic objective '" + name + "'");
}

/**
 * Parameters of an analytic objective.
 *
 * Quadratic kinds: value = peak - sum_i weights[i] * (norm(v_i) - targets[i])^2
 * over effective_dims; all other knobs carry zero weight.
 *
 * Cliff: the special value of `cliff_knob` scores base + bonus; regular
 * values score base + regular_gain * t, with t the position inside the
 * knob's regular range. bonus > regular_gain keeps the special value best.
 */
struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::kEmbeddedQuadratic;
  std::vector<std::size_t> effective_dims;
  std::vector<double> targets;
  std::vector<double> weights;
  double peak = 100.0;
  double noise_sd = 0.0;

  std::size_t cliff_knob = 0;
  double base = 50.0;
  double bonus = 30.0;
  double regular_gain = 20.0;

  // crashy_quadratic: normalized value of crash_knob in [crash_lo, crash_hi].
  std::size_t crash_knob = 0;
  double crash_lo = 0.9;
  double crash_hi = 1.0;
};

inline void check_synthetic(const SyntheticSpec& spec, const ConfigSpace& space) {
  if (!std::isfinite(spec.noise_sd) || spec.noise_sd < 0.0)
    throw std::invalid_argument("noise_sd must be finite and >= 0");
  if (spec.kind == SyntheticKind::kSpecialValueCliff) {
    if (spec.cliff_knob >= space.size() || !is_hybrid(space[spec.cliff_knob]))
      throw std::invalid_argument("special_value_cliff needs a hybrid knob");
    if (!(spec.bonus > spec.regular_gain))
      throw std::invalid_argument("cliff bonus must exceed the regular gain");
    return;
  }
  if (spec.effective_dims.size() != spec.targets.size() ||
      spec.effective_dims.size() != spec.weights.size())
    throw std::invalid_argument("effective_dims, targets and weights differ in length");
  for (auto i : spec.effective_dims)
    if (i >= space.size()) throw std::invalid_argument("effective dimension out of range");
  if (spec.kind == SyntheticKind::kCrashyQuadratic && spec.crash_knob >= space.size())
    throw std::invalid_argument("crash knob out of range");
}

/// Noise-free quadratic value.
inline double embedded_quadratic_value(const ConfigSpace& space, const KnobAssignment& a,
                                       const SyntheticSpec& spec) {
  double v = spec.peak;
  for (std::size_t e = 0; e < spec.effective_dims.size(); ++e) {
    const auto i = spec.effective_dims[e];
    const double diff = normalized_value(space[i], a[i].value) - spec.targets[e];
    v -= spec.weights[e] * diff * diff;
  }
  return v;
}

inline double special_value_cliff_value(const ConfigSpace& space, const KnobAssignment& a,
                                        const SyntheticSpec& spec) {
  const auto& knob = space[spec.cliff_knob];
  const auto& value = a[spec.cliff_knob].value;
  if (special_index(knob, value)) return spec.base + spec.bonus;
  const auto [lo, hi] = effective_numeric_range(knob);
  const double t = std::clamp((as_double(value) - lo) / (hi - lo), 0.0, 1.0);
  return spec.base + spec.regular_gain * t;
}

class SyntheticEvaluator final : public Evaluator {
 public:
  SyntheticEvaluator(ConfigSpace space, SyntheticSpec spec, std::uint64_t noise_seed)
      : space_(std::move(space)), spec_(std::move(spec)), noise_(noise_seed) {
    check_synthetic(spec_, space_);
  }

  EvalOutcome evaluate(const KnobAssignment& a) override {
    if (a.size() != space_.size())
      throw std::invalid_argument("assignment does not match the space");
    double v = 0.0;
    switch (spec_.kind) {
      case SyntheticKind::kCrashyQuadratic: {
        const double t = normalized_value(space_[spec_.crash_knob], a[spec_.crash_knob].value);
        if (t >= spec_.crash_lo && t <= spec_.crash_hi)
          return EvalOutcome::crash("crash region of " + space_[spec_.crash_knob].name);
        v = embedded_quadratic_value(space_, a, spec_);
        break;
      }
      case SyntheticKind::kEmbeddedQuadratic:
        v = embedded_quadratic_value(space_, a, spec_);
        break;
      case SyntheticKind::kSpecialValueCliff:
        v = special_value_cliff_value(space_, a, spec_);
        break;
    }
    if (spec_.noise_sd > 0.0) v += noise_.normal(0.0, spec_.noise_sd);
    return EvalOutcome::ok(v);
  }

  std::string describe() const override { return "synthetic"; }
  const SyntheticSpec& spec() const { return spec_; }

 private:
  ConfigSpace space_;
  SyntheticSpec spec_;
  Rng noise_;
};

using ParamMap = std::map<std::string, std::string>;

/// "a=1,b=2" -> {a: 1, b: 2}
inline ParamMap parse_params(const std::string& text) {
  ParamMap out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("parameter '" + item + "' lacks '='");
    out[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return out;
}

/**
 * Builds a SyntheticSpec from CLI-style parameters. Quadratic kinds plant
 * `effective` (default 8) numeric knobs with targets in [0.1, 0.9] drawn from
 * `plant_seed`; `noise` is a fraction of the objective's range.
 */
inline SyntheticSpec plant_synthetic(SyntheticKind kind, const ConfigSpace& space,
                                     const ParamMap& params) {
  auto num = [&](const char* key, double fallback) {
    auto it = params.find(key);
    return it == params.end() ? fallback : std::stod(it->second);
  };
  auto knob_param = [&](const char* key) -> std::optional<std::size_t> {
    auto it = params.find(key);
    if (it == params.end()) return std::nullopt;
    return space.index_of(it->second);
  };
  for (const auto& [key, _] : params) {
    static const std::vector<std::string> known{"effective", "noise", "peak", "weight",
                                                "plant_seed", "knob", "base", "bonus",
                                                "gain", "crash_knob", "crash_lo", "crash_hi"};
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw std::invalid_argument("unknown synthetic parameter '" + key + "'");
  }

  SyntheticSpec spec;
  spec.kind = kind;
  if (kind == SyntheticKind::kSpecialValueCliff) {
    spec.base = num("base", spec.base);
    spec.bonus = num("bonus", spec.bonus);
    spec.regular_gain = num("gain", spec.regular_gain);
    if (auto k = knob_param("knob")) {
      spec.cliff_knob = *k;
    } else {
      const auto it = std::find_if(space.begin(), space.end(), [](const KnobSpec& k) { return is_hybrid(k); });
      if (it == space.end()) throw std::invalid_argument("space has no hybrid knob for the cliff");
      spec.cliff_knob = static_cast<std::size_t>(it - space.begin());
    }
    spec.noise_sd = num("noise", 0.0) * spec.bonus;
    check_synthetic(spec, space);
    return spec;
  }

  std::vector<std::size_t> numeric;
  for (std::size_t i = 0; i < space.size(); ++i)
    if (is_numeric(space[i])) numeric.push_back(i);
  const auto effective = static_cast<std::size_t>(num("effective", 8));
  if (effective == 0 || effective > numeric.size())
    throw std::invalid_argument("effective dimension count out of range");
  Rng plant(static_cast<std::uint64_t>(num("plant_seed", 0)));
  plant.shuffle(numeric);
  spec.effective_dims.assign(numeric.begin(), numeric.begin() + static_cast<std::ptrdiff_t>(effective));
  std::sort(spec.effective_dims.begin(), spec.effective_dims.end());
  const double weight = num("weight", 10.0);
  for (std::size_t e = 0; e < effective; ++e) {
    spec.targets.push_back(plant.uniform(0.1, 0.9));
    spec.weights.push_back(weight);
  }
  spec.peak = num("peak", 100.0);
  spec.noise_sd = num("noise", 0.0) * weight * static_cast<double>(effective);
  if (kind == SyntheticKind::kCrashyQuadratic) {
    spec.crash_knob = knob_param("crash_knob").value_or(spec.effective_dims.front());
    spec.crash_lo = num("crash_lo", spec.crash_lo);
    spec.crash_hi = num("crash_hi", spec.crash_hi);
  }
  check_synthetic(spec, space);
  return spec;
}

// --- external command ---------------------------------------------------------

/**
 * Runs `<argv...> --config <path> --output <path>` once per evaluation. The
 * command reads the assignment JSON and writes {"status": "ok"|"crash",
 * "value": number}. Nonzero exit, missing or garbled output and timeouts are
 * all crashes; failing to start the process is a SpawnError.
 */
class ExternalEvaluator final : public Evaluator {
 public:
  ExternalEvaluator(std::vector<std::string> argv, double timeout_seconds)
      : argv_(std::move(argv)), timeout_(timeout_seconds) {
    if (argv_.empty()) throw std::invalid_argument("external evaluator needs a command");
    if (!(timeout_seconds > 0.0)) throw std::invalid_argument("timeout must be positive");
    std::string tmpl = (std::filesystem::temp_directory_path() / "knobtune-XXXXXX").string();
    if (::mkdtemp(tmpl.data()) == nullptr) throw SpawnError("cannot create a scratch directory");
    workdir_ = tmpl;
  }

  ~ExternalEvaluator() override {
    std::error_code ec;
    std::filesystem::remove_all(workdir_, ec);
  }

  ExternalEvaluator(const ExternalEvaluator&) = delete;
  ExternalEvaluator& operator=(const ExternalEvaluator&) = delete;

  EvalOutcome evaluate(const KnobAssignment& assignment) override {
    const auto config_path = workdir_ / ("config-" + std::to_string(counter_) + ".json");
    const auto output_path = workdir_ / ("result-" + std::to_string(counter_) + ".json");
    ++counter_;
    {
      std::ofstream out(config_path);
      out << assignment_to_json(assignment).dump(2) << '\n';
    }
    std::filesystem::remove(output_path);

    std::vector<std::string> args = argv_;
    args.insert(args.end(), {"--config", config_path.string(), "--output", output_path.string()});
    std::vector<char*> cargs;
    for (auto& s : args) cargs.push_back(s.data());
    cargs.push_back(nullptr);

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, STDERR_FILENO, STDOUT_FILENO);

    const auto start = std::chrono::steady_clock::now();
    pid_t pid = 0;
    const int rc = ::posix_spawnp(&pid, cargs[0], &actions, nullptr, cargs.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    if (rc != 0)
      throw SpawnError("cannot start '" + argv_.front() + "': " + std::strerror(rc));

    int status = 0;
    bool timed_out = false;
    const auto deadline = start + std::chrono::duration<double>(timeout_);
    for (;;) {
      const pid_t done = ::waitpid(pid, &status, WNOHANG);
      if (done == pid) break;
      if (done < 0) throw SpawnError("waitpid failed: " + std::string(std::strerror(errno)));
      if (std::chrono::steady_clock::now() >= deadline) {
        ::kill(pid, SIGKILL);
        ::waitpid(pid, &status, 0);
        timed_out = true;
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }

    EvalOutcome outcome = timed_out ? EvalOutcome::crash("timeout") : read_result(status, output_path);
    outcome.wall_time = std::chrono::steady_clock::now() - start;
    return outcome;
  }

  std::string describe() const override { return "exec"; }

 private:
  static EvalOutcome read_result(int status, const std::filesystem::path& path) {
    if (!WIFEXITED(status)) return EvalOutcome::crash("terminated by signal");
    if (WEXITSTATUS(status) != 0)
      return EvalOutcome::crash("exit code " + std::to_string(WEXITSTATUS(status)));
    std::ifstream in(path);
    if (!in) return EvalOutcome::crash("missing output file");
    try {
      const auto j = nlohmann::json::parse(in);
      const auto st = j.at("status").get<std::string>();
      if (st == "crash") return EvalOutcome::crash("reported crash");
      if (st != "ok") return EvalOutcome::crash("unknown status '" + st + "'");
      const double v = j.at("value").get<double>();
      if (!std::isfinite(v)) return EvalOutcome::crash("non-finite value");
      return EvalOutcome::ok(v);
    } catch (const nlohmann::json::exception&) {
      return EvalOutcome::crash("garbled output");
    }
  }

  std::vector<std::string> argv_;
  double timeout_;
  std::filesystem::path workdir_;
  std::uint64_t counter_ = 0;
};

/// Whitespace-separated argv; no shell quoting.
inline std::vector<std::string> split_command(const std::string& command) {
  std::vector<std::string> out;
  std::istringstream in(command);
  std::string word;
  while (in >> word) out.push_back(word);
  return out;
}

/**
 * Evaluator from a spec string:
 *   synthetic:<kind>[:<k=v,...>]
 *   exec:<command line>
 */
inline std::unique_ptr<Evaluator> make_evaluator(const std::string& spec, const ConfigSpace& space,
                                                 std::uint64_t noise_seed, double timeout_seconds) {
  if (spec.rfind("exec:", 0) == 0)
    return std::make_unique<ExternalEvaluator>(split_command(spec.substr(5)), timeout_seconds);
  if (spec.rfind("synthetic:", 0) == 0) {
    const auto rest = spec.substr(10);
    const auto colon = rest.find(':');
    const auto kind = parse_synthetic_kind(rest.substr(0, colon));
    const auto params = colon == std::string::npos ? ParamMap{} : parse_params(rest.substr(colon + 1));
    return std::make_unique<SyntheticEvaluator>(space, plant_synthetic(kind, space, params), noise_seed);
  }
  throw std::invalid_argument("evaluator must be 'synthetic:<kind>[:params]' or 'exec:<command>'");
}

}  // namespace knobtune
