/*
 * Copyright 2026 The fedlora Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "fedlora/error.hpp"
#include "fedlora/experiment.hpp"
#include "fedlora/theory.hpp"

namespace fedlora {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_commas(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    out.push_back(trim(s.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

[[noreturn]] void bad_value(std::string_view value, const char* what) {
  throw Error(ErrorKind::kParseError, "expected " + std::string(what) + ", got '" +
                                          std::string(value) + "'");
}

std::uint64_t to_u64(std::string_view v) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size())
    bad_value(v, "a non-negative integer");
  return out;
}

std::size_t to_size(std::string_view v) { return static_cast<std::size_t>(to_u64(v)); }

double to_double(std::string_view v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size())
    bad_value(v, "a number");
  return out;
}

bool to_bool(std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(v, "true or false");
}

std::string from_bool(bool b) { return b ? "true" : "false"; }

template <typename T, typename F>
std::string join(const std::vector<T>& items, F fmt) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    out += fmt(items[i]);
  }
  return out;
}

using Setter = std::function<void(ExperimentConfig&, std::string_view)>;
using Getter = std::function<std::vector<std::string>(const ExperimentConfig&)>;

struct Field {
  const char* key;
  Setter set;
  Getter get;
  bool list = false;  // first occurrence clears the default, later ones append
};

#define FEDLORA_SIZE_FIELD(name)                                                          \
  Field {                                                                                 \
    #name, [](ExperimentConfig& c, std::string_view v) { c.name = to_size(v); },          \
        [](const ExperimentConfig& c) { return std::vector<std::string>{std::to_string(c.name)}; } \
  }
#define FEDLORA_DOUBLE_FIELD(key, member)                                                 \
  Field {                                                                                 \
    key, [](ExperimentConfig& c, std::string_view v) { c.member = to_double(v); },        \
        [](const ExperimentConfig& c) { return std::vector<std::string>{format_double(c.member)}; } \
  }
#define FEDLORA_STRING_FIELD(name)                                                        \
  Field {                                                                                 \
    #name, [](ExperimentConfig& c, std::string_view v) { c.name = std::string(v); },      \
        [](const ExperimentConfig& c) {                                                   \
          return c.name.empty() ? std::vector<std::string>{} : std::vector<std::string>{c.name}; \
        }                                                                                 \
  }
#define FEDLORA_BOOL_FIELD(name)                                                          \
  Field {                                                                                 \
    #name, [](ExperimentConfig& c, std::string_view v) { c.name = to_bool(v); },          \
        [](const ExperimentConfig& c) { return std::vector<std::string>{from_bool(c.name)}; } \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"kind",
       [](ExperimentConfig& c, std::string_view v) {
         auto k = parse_experiment_kind(v);
         if (!k) throw Error(ErrorKind::kValidationError, "unknown experiment kind '" + std::string(v) + "'");
         c.kind = *k;
       },
       [](const ExperimentConfig& c) { return std::vector<std::string>{std::string(to_string(c.kind))}; }},
      FEDLORA_STRING_FIELD(task),
      FEDLORA_SIZE_FIELD(d),
      FEDLORA_SIZE_FIELD(m),
      FEDLORA_SIZE_FIELD(clients),
      FEDLORA_DOUBLE_FIELD("b_norm", b_norm),
      FEDLORA_DOUBLE_FIELD("gamma", gamma),
      {"mode",
       [](ExperimentConfig& c, std::string_view v) {
         if (v == "finite") c.mode = SampleMode::kFiniteSample;
         else if (v == "population") c.mode = SampleMode::kPopulation;
         else throw Error(ErrorKind::kValidationError, "mode must be finite or population");
       },
       [](const ExperimentConfig& c) {
         return std::vector<std::string>{c.mode == SampleMode::kPopulation ? "population" : "finite"};
       }},
      FEDLORA_BOOL_FIELD(resample),
      {"delta0",
       [](ExperimentConfig& c, std::string_view v) {
         for (auto item : split_commas(v)) c.delta0.push_back(to_double(item));
       },
       [](const ExperimentConfig& c) {
         return std::vector<std::string>{join(c.delta0, [](double x) { return format_double(x); })};
       },
       true},
      FEDLORA_SIZE_FIELD(trials),
      FEDLORA_SIZE_FIELD(iterations),
      FEDLORA_DOUBLE_FIELD("eta_scale", eta_scale),
      FEDLORA_BOOL_FIELD(fresh_samples),
      FEDLORA_STRING_FIELD(dataset),
      FEDLORA_SIZE_FIELD(clusters.classes),
      FEDLORA_SIZE_FIELD(clusters.train_per_class),
      FEDLORA_SIZE_FIELD(clusters.test_per_class),
      FEDLORA_SIZE_FIELD(clusters.signal_dim),
      FEDLORA_DOUBLE_FIELD("clusters.margin", clusters.margin),
      FEDLORA_DOUBLE_FIELD("clusters.noise", clusters.noise),
      FEDLORA_STRING_FIELD(idx_train_images),
      FEDLORA_STRING_FIELD(idx_train_labels),
      FEDLORA_STRING_FIELD(idx_test_images),
      FEDLORA_STRING_FIELD(idx_test_labels),
      FEDLORA_STRING_FIELD(partition),
      FEDLORA_SIZE_FIELD(labels_per_client),
      FEDLORA_DOUBLE_FIELD("dirichlet_alpha", dirichlet_alpha),
      FEDLORA_SIZE_FIELD(rounds),
      FEDLORA_SIZE_FIELD(rank),
      FEDLORA_SIZE_FIELD(local_steps),
      FEDLORA_SIZE_FIELD(local_epochs),
      FEDLORA_SIZE_FIELD(batch_size),
      FEDLORA_DOUBLE_FIELD("eta", eta),
      FEDLORA_DOUBLE_FIELD("eta_b_scale", eta_b_scale),
      FEDLORA_DOUBLE_FIELD("alpha", alpha),
      FEDLORA_DOUBLE_FIELD("a_std", a_std),
      FEDLORA_STRING_FIELD(b_init),
      FEDLORA_DOUBLE_FIELD("b_std", b_std),
      {"solver",
       [](ExperimentConfig& c, std::string_view v) {
         if (v == "gradient") c.solver = LocalSolver::kGradient;
         else if (v == "exact-b") c.solver = LocalSolver::kExactB;
         else throw Error(ErrorKind::kValidationError, "solver must be gradient or exact-b");
       },
       [](const ExperimentConfig& c) {
         return std::vector<std::string>{c.solver == LocalSolver::kExactB ? "exact-b" : "gradient"};
       }},
      {"strategy",
       [](ExperimentConfig& c, std::string_view v) {
         for (auto item : split_commas(v)) {
           auto s = parse_strategy(item);
           if (!s) throw Error(ErrorKind::kValidationError, "unknown strategy '" + std::string(item) + "'");
           c.strategies.push_back(*s);
         }
       },
       [](const ExperimentConfig& c) {
         std::vector<std::string> out;
         for (StrategyKind s : c.strategies) out.emplace_back(to_string(s));
         return out;
       },
       true},
      {"schedule",
       [](ExperimentConfig& c, std::string_view v) {
         (void)parse_schedule_spec(v);
         c.schedules.emplace_back(v);
       },
       [](const ExperimentConfig& c) { return c.schedules; },
       true},
      {"local_steps_sweep",
       [](ExperimentConfig& c, std::string_view v) {
         for (auto item : split_commas(v)) c.local_steps_sweep.push_back(to_size(item));
       },
       [](const ExperimentConfig& c) {
         return std::vector<std::string>{
             join(c.local_steps_sweep, [](std::size_t x) { return std::to_string(x); })};
       },
       true},
      FEDLORA_SIZE_FIELD(step_budget),
      FEDLORA_STRING_FIELD(output_dir),
      {"seeds",
       [](ExperimentConfig& c, std::string_view v) {
         for (auto item : split_commas(v)) c.seeds.push_back(to_u64(item));
       },
       [](const ExperimentConfig& c) {
         return std::vector<std::string>{join(c.seeds, [](std::uint64_t x) { return std::to_string(x); })};
       },
       true},
      FEDLORA_SIZE_FIELD(workers),
      FEDLORA_BOOL_FIELD(timing),
  };
  return table;
}

#undef FEDLORA_SIZE_FIELD
#undef FEDLORA_DOUBLE_FIELD
#undef FEDLORA_STRING_FIELD
#undef FEDLORA_BOOL_FIELD

[[noreturn]] void invalid(const std::string& field, const std::string& why) {
  throw Error(ErrorKind::kValidationError, field + ": " + why);
}

}  // namespace

std::string_view to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kCompareProtocols: return "compare-protocols";
    case ExperimentKind::kTheoryHomog: return "theory-homog";
    case ExperimentKind::kTheoryHeter: return "theory-heter";
    case ExperimentKind::kFfaMonteCarlo: return "ffa-monte-carlo";
    case ExperimentKind::kNonlinearToy: return "nonlinear-toy";
    case ExperimentKind::kAblationSchedule: return "ablation-schedule";
    case ExperimentKind::kAblationLocalSteps: return "ablation-local-steps";
  }
  return "?";
}

std::optional<ExperimentKind> parse_experiment_kind(std::string_view text) {
  for (auto k : {ExperimentKind::kCompareProtocols, ExperimentKind::kTheoryHomog,
                 ExperimentKind::kTheoryHeter, ExperimentKind::kFfaMonteCarlo,
                 ExperimentKind::kNonlinearToy, ExperimentKind::kAblationSchedule,
                 ExperimentKind::kAblationLocalSteps}) {
    if (text == to_string(k)) return k;
  }
  return std::nullopt;
}

UpdateSchedule parse_schedule_spec(std::string_view text) {
  text = trim(text);
  if (text == "alternating") return UpdateSchedule::alternating();
  if (text == "freeze-a") return UpdateSchedule::freeze_a();
  if (text == "both") return UpdateSchedule::train_both();
  constexpr std::string_view kThenFreeze = "alternate-then-freeze:";
  if (text.substr(0, kThenFreeze.size()) == kThenFreeze)
    return UpdateSchedule::alternate_then_freeze(to_size(trim(text.substr(kThenFreeze.size()))));
  return UpdateSchedule::parse(text);
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  std::set<std::string> seen_lists;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto eol = text.find('\n', pos);
    std::string_view line = text.substr(pos, eol == std::string_view::npos ? text.npos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw Error(ErrorKind::kParseError, where + "expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    const auto& table = fields();
    const auto it = std::find_if(table.begin(), table.end(),
                                 [&](const Field& f) { return key == f.key; });
    if (it == table.end()) throw Error(ErrorKind::kParseError, where + "unknown key '" + key + "'");
    if (it->list && seen_lists.insert(key).second) {
      if (key == "delta0") cfg.delta0.clear();
      if (key == "local_steps_sweep") cfg.local_steps_sweep.clear();
    }
    try {
      it->set(cfg, value);
    } catch (const Error& e) {
      throw Error(e.kind(), where + key + ": " + e.message());
    }
  }
  if (cfg.seeds.empty()) cfg.seeds = {1};
  if (cfg.strategies.empty()) {
    if (cfg.kind == ExperimentKind::kAblationSchedule) {
      cfg.strategies = {StrategyKind::kRoLoRA};
    } else {
      cfg.strategies = {StrategyKind::kRoLoRA, StrategyKind::kFfaLoRA, StrategyKind::kFedAvgLoRA};
    }
  }
  validate(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIoError, "cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize(const ExperimentConfig& config) {
  std::string out;
  for (const Field& f : fields())
    for (const std::string& v : f.get(config)) out += std::string(f.key) + " = " + v + "\n";
  return out;
}

void validate(const ExperimentConfig& c) {
  if (c.seeds.empty()) invalid("seeds", "seed list is empty");
  if (c.strategies.empty()) invalid("strategy", "no strategies");
  if (c.task != "linear" && c.task != "classifier") invalid("task", "must be linear or classifier");
  if (c.d == 0) invalid("d", "must be >= 1");
  if (c.clients == 0) invalid("clients", "must be >= 1");
  if (c.rounds == 0) invalid("rounds", "must be >= 1");
  if (c.rank == 0) invalid("rank", "must be >= 1");
  if (c.workers == 0) invalid("workers", "must be >= 1");
  if (!(c.eta > 0.0)) invalid("eta", "must be positive");
  if (!(c.eta_b_scale > 0.0)) invalid("eta_b_scale", "must be positive");
  if (!(c.alpha > 0.0)) invalid("alpha", "must be positive");
  if (!(c.eta_scale > 0.0)) invalid("eta_scale", "must be positive");
  if (c.b_norm < 0.0) invalid("b_norm", "must be non-negative");
  if (c.gamma < 0.0) invalid("gamma", "must be non-negative");
  if (c.delta0.empty()) invalid("delta0", "empty list");
  for (double d0 : c.delta0)
    if (!(d0 > 0.0 && d0 < 1.0)) invalid("delta0", "values must lie in (0, 1)");
  if (c.b_init != "zero" && c.b_init != "gaussian") invalid("b_init", "must be zero or gaussian");
  if (c.dataset != "clusters" && c.dataset != "idx") invalid("dataset", "must be clusters or idx");
  if (c.partition != "label" && c.partition != "dirichlet" && c.partition != "iid")
    invalid("partition", "must be label, dirichlet or iid");
  if (c.local_steps_sweep.empty()) invalid("local_steps_sweep", "empty list");
  for (std::size_t q : c.local_steps_sweep)
    if (q == 0) invalid("local_steps_sweep", "values must be >= 1");

  const bool theory = c.kind == ExperimentKind::kTheoryHomog ||
                      c.kind == ExperimentKind::kTheoryHeter ||
                      c.kind == ExperimentKind::kFfaMonteCarlo;
  if (c.kind == ExperimentKind::kFfaMonteCarlo) {
    if (c.m < 3) invalid("m", "needs m >= 3");
    if (c.trials < kMinMonteCarloTrials) invalid("trials", "needs at least 100 trials");
  }
  if (c.kind == ExperimentKind::kTheoryHomog && c.m == 0) invalid("m", "must be >= 1");
  if (c.kind == ExperimentKind::kTheoryHeter && c.clients < 1) invalid("clients", "must be >= 1");
  if (!theory && c.task == "linear" && c.mode == SampleMode::kFiniteSample && c.m == 0)
    invalid("m", "must be >= 1");
  if (c.kind == ExperimentKind::kAblationSchedule) {
    if (c.schedules.empty()) invalid("schedule", "ablation-schedule needs schedule lines");
    for (StrategyKind s : c.strategies)
      for (const std::string& sched : c.schedules) {
        try {
          validate_schedule(s, parse_schedule_spec(sched));
        } catch (const Error& e) {
          invalid("schedule", e.message());
        }
      }
  }
  if (c.kind == ExperimentKind::kAblationLocalSteps && c.step_budget > 0) {
    for (std::size_t q : c.local_steps_sweep)
      if (c.step_budget % q != 0)
        invalid("step_budget", "must be divisible by every local_steps_sweep entry");
  }
  if ((c.task == "classifier" || c.kind == ExperimentKind::kNonlinearToy) && !theory) {
    if (c.dataset == "idx" && (c.idx_train_images.empty() || c.idx_train_labels.empty()))
      invalid("idx_train_images", "idx dataset needs image and label paths");
  }
}

}  // namespace fedlora
