// Copyright 2026 The nhlearn Authors
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
#include "nhlearn/config.h"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <utility>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "nhlearn/error.h"
#include "nhlearn/eval.h"
#include "nhlearn/linalg.h"

namespace nhlearn {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string Num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double ParseDouble(const std::string& s) {
  std::string t = boost::algorithm::trim_copy(s);
  size_t used = 0;
  double v = std::stod(t, &used);
  if (used != t.size()) throw std::invalid_argument("trailing characters");
  return v;
}

long long ParseInt(const std::string& s) {
  std::string t = boost::algorithm::trim_copy(s);
  size_t used = 0;
  long long v = std::stoll(t, &used);
  if (used != t.size()) throw std::invalid_argument("trailing characters");
  return v;
}

std::vector<std::string> SplitList(const std::string& s) {
  std::vector<std::string> parts;
  std::string t = boost::algorithm::trim_copy(s);
  if (t.empty()) return parts;
  boost::algorithm::split(parts, t, boost::is_any_of(","));
  for (std::string& p : parts) boost::algorithm::trim(p);
  return parts;
}

template <typename T, typename F>
std::string JoinList(const std::vector<T>& v, F fmt) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt(v[i]);
  return out;
}

Box MakeBox(std::vector<Interval> dims) { return Box{std::move(dims)}; }

std::string VariantName(InfoNceVariant v) {
  return v == InfoNceVariant::kWithPositive ? "with_positive"
                                            : "negatives_only";
}

InfoNceVariant ParseVariant(const std::string& s) {
  if (s == "negatives_only") return InfoNceVariant::kNegativesOnly;
  if (s == "with_positive") return InfoNceVariant::kWithPositive;
  throw std::invalid_argument("expected negatives_only or with_positive");
}

struct Binding {
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

Binding Dbl(double& f) {
  return {[&f] { return Num(f); }, [&f](const std::string& s) { f = ParseDouble(s); }};
}

Binding Int(int& f) {
  return {[&f] { return std::to_string(f); },
          [&f](const std::string& s) { f = static_cast<int>(ParseInt(s)); }};
}

Binding U64(uint64_t& f) {
  return {[&f] { return std::to_string(f); },
          [&f](const std::string& s) {
            long long v = ParseInt(s);
            if (v < 0) throw std::invalid_argument("must be non-negative");
            f = static_cast<uint64_t>(v);
          }};
}

Binding Flag(bool& f) {
  return {[&f] { return std::string(f ? "true" : "false"); },
          [&f](const std::string& s) {
            std::string t = boost::algorithm::to_lower_copy(
                boost::algorithm::trim_copy(s));
            if (t == "true" || t == "1") {
              f = true;
            } else if (t == "false" || t == "0") {
              f = false;
            } else {
              throw std::invalid_argument("expected true or false");
            }
          }};
}

Binding Intervals(std::vector<Interval>& f) {
  return {[&f] { return FormatIntervals(f); },
          [&f](const std::string& s) { f = ParseIntervals(s); }};
}

Binding Region(Box& f) { return Intervals(f.dims); }

Binding Variant(InfoNceVariant& f) {
  return {[&f] { return VariantName(f); },
          [&f](const std::string& s) {
            f = ParseVariant(boost::algorithm::trim_copy(s));
          }};
}

Binding DblList(std::vector<double>& f) {
  return {[&f] { return JoinList(f, Num); },
          [&f](const std::string& s) {
            f.clear();
            for (const auto& p : SplitList(s)) f.push_back(ParseDouble(p));
          }};
}

Binding IntList(std::vector<int>& f) {
  return {[&f] { return JoinList(f, [](int v) { return std::to_string(v); }); },
          [&f](const std::string& s) {
            f.clear();
            for (const auto& p : SplitList(s)) {
              f.push_back(static_cast<int>(ParseInt(p)));
            }
          }};
}

Binding StrList(std::vector<std::string>& f) {
  return {[&f] { return JoinList(f, [](const std::string& v) { return v; }); },
          [&f](const std::string& s) { f = SplitList(s); }};
}

void AddMetric(std::vector<std::pair<std::string, Binding>>& b,
               const std::string& prefix, MetricTrainConfig& m) {
  b.push_back({prefix + "eps", Dbl(m.eps)});
  b.push_back({prefix + "eps_fraction", Dbl(m.eps_fraction)});
  b.push_back({prefix + "batch_size", Int(m.batch_size)});
  b.push_back({prefix + "steps", Int(m.steps)});
  b.push_back({prefix + "learn_rate", Dbl(m.learn_rate)});
  b.push_back({prefix + "variant", Variant(m.variant)});
}

void AddGp(std::vector<std::pair<std::string, Binding>>& b,
           const std::string& prefix, GpFitConfig& g) {
  b.push_back({prefix + "iterations", Int(g.iterations)});
  b.push_back({prefix + "restarts", Int(g.restarts)});
  b.push_back({prefix + "rel_tol", Dbl(g.rel_tol)});
  b.push_back({prefix + "jitter", Dbl(g.jitter)});
  b.push_back({prefix + "min_noise_variance", Dbl(g.min_noise_variance)});
  b.push_back({prefix + "max_points", Int(g.max_points)});
  b.push_back({prefix + "standardize", Flag(g.standardize)});
}

// Ordered "section.key" bindings; the order defines WriteConfig output.
std::vector<std::pair<std::string, Binding>> Bindings(PipelineConfig& c) {
  std::vector<std::pair<std::string, Binding>> b;
  b.push_back({"system.name",
               {[&c] { return c.system; },
                [&c](const std::string& s) {
                  c.system = boost::algorithm::trim_copy(s);
                }}});
  b.push_back({"system.control_bounds", Intervals(c.control_bounds)});
  b.push_back({"system.mass", Dbl(c.quadrotor.mass)});
  b.push_back({"system.inertia", Dbl(c.quadrotor.inertia)});
  b.push_back({"system.arm_length", Dbl(c.quadrotor.arm_length)});
  b.push_back({"system.gravity", Dbl(c.quadrotor.gravity)});

  b.push_back({"data.seed", U64(c.seed)});
  b.push_back({"data.trajectories", Int(c.data.trajectories)});
  b.push_back({"data.horizon", Int(c.data.horizon)});
  b.push_back({"data.dt", Dbl(c.data.dt)});
  b.push_back({"data.hold_steps", Int(c.data.hold_steps)});
  b.push_back({"data.start_region", Region(c.data.start_region)});
  b.push_back({"data.envelope", Region(c.data.envelope)});
  b.push_back({"data.test_region", Region(c.data.test_region)});
  b.push_back({"data.test_count", Int(c.data.test_count)});
  b.push_back({"data.ood_margin", Dbl(c.data.ood_margin)});
  b.push_back({"data.noise_std", Dbl(c.data.noise_std)});
  b.push_back({"data.max_attempts", Int(c.data.max_attempts)});

  AddMetric(b, "metric.", c.metric);
  b.push_back({"metric.mask_threshold", Dbl(c.mask_threshold)});
  AddMetric(b, "metric.constraint_", c.constraint_metric);
  b.push_back({"metric.constraint_mask_threshold",
               Dbl(c.constraint_mask_threshold)});

  AddGp(b, "gp.", c.gp);
  AddGp(b, "gp.constraint_", c.constraint_gp);

  b.push_back({"manifold.lma_rows", Int(c.manifold.lma_rows)});
  b.push_back({"manifold.sv_rel", Dbl(c.manifold.sv_rel)});
  b.push_back({"manifold.c_expected", Int(c.manifold.c_expected)});
  b.push_back({"manifold.agreement", Dbl(c.manifold.agreement)});

  b.push_back({"eval.seeds", Int(c.eval_seeds)});
  b.push_back({"eval.models", StrList(c.models)});

  b.push_back({"sweep.mask_thresholds", DblList(c.sweep.mask_thresholds)});
  b.push_back({"sweep.sv_rel", DblList(c.sweep.sv_rel)});
  b.push_back({"sweep.lma_rows", IntList(c.sweep.lma_rows)});
  b.push_back({"sweep.noise_std", DblList(c.sweep.noise_std)});

  b.push_back({"output.dir",
               {[&c] { return c.output_dir.string(); },
                [&c](const std::string& s) {
                  c.output_dir = boost::algorithm::trim_copy(s);
                }}});
  return b;
}

}  // namespace

std::vector<Interval> ParseIntervals(const std::string& text) {
  std::vector<Interval> out;
  for (const std::string& part : SplitList(text)) {
    const size_t colon = part.find(':');
    if (colon == std::string::npos) {
      throw ConfigError("interval '" + part + "' is not lo:hi");
    }
    Interval iv;
    try {
      iv.lo = ParseDouble(part.substr(0, colon));
      iv.hi = ParseDouble(part.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("interval '" + part + "' has a malformed bound");
    }
    if (!(iv.lo <= iv.hi)) {
      throw ConfigError("interval '" + part + "' has lo > hi");
    }
    out.push_back(iv);
  }
  return out;
}

std::string FormatIntervals(const std::vector<Interval>& intervals) {
  return JoinList(intervals, [](const Interval& iv) {
    return Num(iv.lo) + ":" + Num(iv.hi);
  });
}

PipelineConfig DefaultConfig(const std::string& system) {
  PipelineConfig c;
  c.system = system;
  if (system == "unicycle") {
    c.data.dt = 0.05;
    c.data.start_region = MakeBox({{-1, 1}, {-1, 1}, {1.0, 2.14}});
    c.data.envelope = MakeBox({{-1.5, 1.5}, {-1.5, 1.5}, {0.4, 2.74}});
    c.data.test_region = MakeBox({{4, 6}, {4, 6}, {0.6, 2.54}});
    c.manifold.c_expected = 1;
  } else if (system == "quadrotor") {
    c.data.dt = 0.02;
    c.data.start_region = MakeBox({{-1, 1},
                                   {-1, 1},
                                   {-0.05, 0.05},
                                   {-0.1, 0.1},
                                   {-0.1, 0.1},
                                   {-0.1, 0.1}});
    c.data.envelope = MakeBox({{-1.5, 1.5},
                               {-1.5, 1.5},
                               {-0.8, 0.8},
                               {-kInf, kInf},
                               {-kInf, kInf},
                               {-kInf, kInf}});
    c.data.test_region = MakeBox({{4, 6},
                                  {4, 6},
                                  {-0.3, 0.3},
                                  {-0.5, 0.5},
                                  {-0.5, 0.5},
                                  {-0.5, 0.5}});
    c.manifold.c_expected = 4;
  } else {
    throw ConfigError("unknown system '" + system +
                      "' (expected unicycle or quadrotor)");
  }
  c.gp.max_points = 250;
  c.constraint_gp = c.gp;
  c.constraint_gp.max_points = 150;
  c.constraint_metric = c.metric;
  return c;
}

PipelineConfig ParseConfig(const std::string& ini_text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in(ini_text);
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  std::string system = "unicycle";
  if (auto s = tree.get_optional<std::string>("system.name")) {
    system = boost::algorithm::trim_copy(*s);
  }
  PipelineConfig cfg = DefaultConfig(system);
  auto bindings = Bindings(cfg);
  std::map<std::string, Binding*> index;
  for (auto& [key, binding] : bindings) index[key] = &binding;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError("config: key '" + section + "' outside a section");
    }
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      auto it = index.find(full);
      if (it == index.end()) {
        throw ConfigError("config: unknown key '" + full + "'");
      }
      try {
        it->second->set(value.data());
      } catch (const ConfigError& e) {
        throw ConfigError("config: " + full + ": " + e.what());
      } catch (const std::exception& e) {
        throw ConfigError("config: " + full + " = '" + value.data() +
                          "': " + e.what());
      }
    }
  }
  return cfg;
}

PipelineConfig LoadConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ParseConfig(ss.str());
}

std::string WriteConfig(const PipelineConfig& cfg) {
  PipelineConfig copy = cfg;
  std::string out;
  std::string section;
  for (auto& [key, binding] : Bindings(copy)) {
    const size_t dot = key.find('.');
    const std::string s = key.substr(0, dot);
    if (s != section) {
      out += (section.empty() ? "[" : "\n[") + s + "]\n";
      section = s;
    }
    out += key.substr(dot + 1) + " = " + binding.get() + "\n";
  }
  return out;
}

std::string ConfigHash(const PipelineConfig& cfg) {
  PipelineConfig copy = cfg;
  copy.output_dir.clear();
  copy.seed = 0;
  copy.eval_seeds = 1;
  copy.models.clear();
  Fingerprint fp;
  fp.Add(WriteConfig(copy));
  return fp.hex();
}

std::unique_ptr<SystemModel> BuildSystem(const PipelineConfig& cfg) {
  try {
    return MakeSystem(cfg.system, cfg.quadrotor, cfg.control_bounds);
  } catch (const ContractViolation& e) {
    throw ConfigError(std::string("config: system: ") + e.what());
  }
}

void ValidateConfig(const PipelineConfig& cfg) {
  auto sys = BuildSystem(cfg);
  ValidateGenerationConfig(*sys, cfg.data);
  auto check = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("config: " + what);
  };
  for (const MetricTrainConfig* m : {&cfg.metric, &cfg.constraint_metric}) {
    check(m->batch_size >= 2, "metric batch_size must be >= 2");
    check(m->steps >= 1, "metric steps must be >= 1");
    check(m->learn_rate > 0.0, "metric learn_rate must be positive");
    check(m->eps_fraction > 0.0, "metric eps_fraction must be positive");
  }
  for (double t : {cfg.mask_threshold, cfg.constraint_mask_threshold}) {
    check(t > 0.0 && t < 1.0, "mask thresholds must lie in (0, 1)");
  }
  for (const GpFitConfig* g : {&cfg.gp, &cfg.constraint_gp}) {
    check(g->iterations >= 0, "gp iterations must be >= 0");
    check(g->restarts >= 1, "gp restarts must be >= 1");
    check(g->jitter > 0.0 && g->jitter <= 1e-4, "gp jitter must be in (0, 1e-4]");
    check(g->min_noise_variance > 0.0, "gp min_noise_variance must be positive");
  }
  const int n = sys->state_dim();
  check(cfg.manifold.sv_rel > 0.0 && cfg.manifold.sv_rel < 1.0,
        "manifold sv_rel must lie in (0, 1)");
  check(cfg.manifold.c_expected < n, "manifold c_expected must be < n");
  check(cfg.manifold.agreement > 0.0 && cfg.manifold.agreement <= 1.0,
        "manifold agreement must lie in (0, 1]");
  if (cfg.manifold.lma_rows > 0 && cfg.manifold.c_expected >= 0) {
    check(cfg.manifold.lma_rows >= n - cfg.manifold.c_expected,
          "manifold lma_rows must be >= n - c_expected");
  }
  check(cfg.eval_seeds >= 1, "eval seeds must be >= 1");
  const auto& names = StandardModelNames();
  for (const std::string& m : cfg.models) {
    check(std::find(names.begin(), names.end(), m) != names.end(),
          "unknown model '" + m + "'");
  }
}

}  // namespace nhlearn
