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
#include "nhlearn/pipeline.h"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <utility>

#include "nhlearn/error.h"
#include "nhlearn/log.h"
#include "nhlearn/rng.h"
#include "nhlearn/systems.h"

namespace nhlearn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// stream ids for seed derivation
constexpr uint64_t kDynamicsMetricStream = 10;
constexpr uint64_t kDynamicsGpStream = 11;
constexpr uint64_t kBaselineGpStream = 12;
constexpr uint64_t kConstraintDataStream = 13;
constexpr uint64_t kConstraintMetricStream = 14;
constexpr uint64_t kConstraintGpStream = 15;

std::vector<std::string> InputLayout(const SystemModel& sys) {
  std::vector<std::string> names = sys.StateNames();
  for (const std::string& c : sys.ControlNames()) names.push_back(c);
  return names;
}

json VecJson(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

json GpLine(const IgpModel& m) {
  json lml = json::array();
  for (int k = 0; k < m.output_dim(); ++k) {
    lml.push_back(m.gp(k).log_marginal_likelihood());
  }
  return {{"mask", m.mask()}, {"train_points", m.train_rows().size()},
          {"lml", lml}};
}

struct Context {
  const PipelineConfig& cfg;
  uint64_t seed;
  const RunPaths& paths;
  std::string config_hash;
  std::string data_fingerprint;
};

json Envelope(const Context& ctx, const std::string& stage, json payload) {
  return {{"stage", stage},
          {"config_hash", ctx.config_hash},
          {"seed", ctx.seed},
          {"data_fingerprint", ctx.data_fingerprint},
          {"payload", std::move(payload)}};
}

enum class Found { kAbsent, kStale, kValid };

// Reads a checkpoint; throws StageError when it exists but cannot be parsed.
Found ReadCheckpoint(const Context& ctx, const std::string& stage,
                     json* payload) {
  const fs::path file = ctx.paths.checkpoint(stage);
  if (!fs::exists(file)) return Found::kAbsent;
  json j;
  try {
    j = json::parse(ReadTextFile(file));
    if (j.at("stage").get<std::string>() != stage) {
      throw FormatError("stage field is '" + j.at("stage").get<std::string>() +
                        "'");
    }
    if (j.at("config_hash").get<std::string>() != ctx.config_hash ||
        j.at("seed").get<uint64_t>() != ctx.seed ||
        j.at("data_fingerprint").get<std::string>() != ctx.data_fingerprint) {
      return Found::kStale;
    }
    *payload = j.at("payload");
  } catch (const std::exception& e) {
    throw StageError(stage, "corrupted checkpoint " + file.string() + ": " +
                                e.what());
  }
  return Found::kValid;
}

void WriteCheckpoint(const Context& ctx, const std::string& stage,
                     json payload) {
  fs::create_directories(ctx.paths.checkpoints());
  const fs::path file = ctx.paths.checkpoint(stage);
  const fs::path tmp = file.string() + ".tmp";
  WriteTextFile(tmp, Envelope(ctx, stage, std::move(payload)).dump() + "\n");
  fs::rename(tmp, file);
}

// Loads a valid checkpoint (when resume is allowed) or trains afresh.
// require_existing turns absence into MissingArtifact.
template <typename T>
T RunStage(const Context& ctx, const std::string& stage,
           bool require_existing, std::vector<StageLine>* lines,
           const std::function<T(const json&)>& load,
           const std::function<std::pair<T, json>()>& train,
           const std::function<json(const T&)>& metrics) {
  json payload;
  const Found found = ReadCheckpoint(ctx, stage, &payload);
  if (found == Found::kValid) {
    T value;
    try {
      value = load(payload);
    } catch (const std::exception& e) {
      throw StageError(stage, "corrupted checkpoint " +
                                  ctx.paths.checkpoint(stage).string() + ": " +
                                  e.what());
    }
    LogInfo(stage + ": resumed from checkpoint");
    if (lines) lines->push_back({stage, true, metrics(value)});
    return value;
  }
  if (require_existing) {
    throw MissingArtifact(
        (found == Found::kStale ? "stale checkpoint " : "missing checkpoint ") +
        ctx.paths.checkpoint(stage).string() + " (run train first)");
  }
  std::pair<T, json> fresh;
  try {
    fresh = train();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
  WriteCheckpoint(ctx, stage, std::move(fresh.second));
  if (lines) lines->push_back({stage, false, metrics(fresh.first)});
  return std::move(fresh.first);
}

struct MetricStageValue {
  DiagonalPseudometric metric;
  SparsityMask mask;
  double eps = 0.0;
  int skipped = 0;
};

TrainedModels TrainOrLoad(const PipelineConfig& cfg, uint64_t seed,
                          const RunPaths& paths, bool require_existing,
                          std::vector<StageLine>* lines) {
  ValidateConfig(cfg);
  auto sys = BuildSystem(cfg);
  DatasetBundle bundle;
  try {
    bundle = LoadBundle(paths.data());
  } catch (const std::exception& e) {
    const std::string msg = "cannot load dataset from " +
                            paths.data().string() + " (run generate first): " +
                            e.what();
    if (require_existing) throw MissingArtifact(msg);
    throw StageError("data", msg);
  }
  if (bundle.meta.system != sys->name() ||
      bundle.state_dim() != sys->state_dim() ||
      bundle.control_dim() != sys->control_dim()) {
    throw ConfigError("dataset in " + paths.data().string() +
                      " was generated for another system");
  }
  Context ctx{cfg, seed, paths, ConfigHash(cfg), BundleFingerprint(bundle)};
  const int n = sys->state_dim();
  const Triples offline = Flatten(bundle, kOffline);
  const Matrix inputs = offline.Inputs();
  const Matrix& labels = offline.derivs;
  TrainedModels out;

  // dynamics pseudometric d_f and its mask
  auto metric = RunStage<MetricStageValue>(
      ctx, "dynamics_metric", require_existing, lines,
      [&](const json& p) {
        MetricStageValue v;
        v.metric = PseudometricFromJson(p.at("pseudometric"));
        v.mask = ExtractMask(v.metric, cfg.mask_threshold);
        v.eps = p.at("eps").get<double>();
        v.skipped = p.at("skipped").get<int>();
        return v;
      },
      [&] {
        MetricTrainConfig mc = cfg.metric;
        mc.seed = DeriveSeed(seed, kDynamicsMetricStream);
        mc.layout = InputLayout(*sys);
        MetricTrainResult r = TrainPseudometric(inputs, labels, mc);
        MetricStageValue v{r.metric, ExtractMask(r.metric, cfg.mask_threshold),
                           r.eps_used, r.skipped};
        json p = {{"pseudometric",
                   PseudometricToJson(v.metric, v.mask.threshold_used)},
                  {"eps", v.eps},
                  {"skipped", v.skipped}};
        return std::make_pair(v, p);
      },
      [&](const MetricStageValue& v) {
        return json{{"initial_loss", v.metric.initial_loss},
                    {"final_loss", v.metric.final_loss},
                    {"eps", v.eps},
                    {"skipped", v.skipped},
                    {"diag", VecJson(v.metric.diag())},
                    {"retained", v.mask.retained}};
      });
  out.dynamics_metric = metric.metric;
  out.dynamics_mask = metric.mask;

  auto gp_stage = [&](const std::string& stage, const Mask& mask,
                      uint64_t stream) {
    return RunStage<IgpModel>(
        ctx, stage, require_existing, lines,
        [&](const json& p) {
          IgpModel m = IgpFromJson(p, inputs, labels);
          if (m.mask() != mask) {
            throw FormatError("mask differs from the dynamics metric");
          }
          return m;
        },
        [&] {
          GpFitConfig gc = cfg.gp;
          gc.seed = DeriveSeed(seed, stream);
          IgpModel m = FitIgp(inputs, labels, mask, gc);
          return std::make_pair(m, IgpToJson(m, inputs, labels));
        },
        GpLine);
  };
  out.dynamics = gp_stage("dynamics_gp", out.dynamics_mask.retained,
                          kDynamicsGpStream);
  out.baseline = gp_stage("baseline_gp", Mask(inputs.cols(), true),
                          kBaselineGpStream);

  const Matrix constraint_states = Flatten(bundle, kOffline | kOnline).states;
  out.constraints = RunStage<ConstraintDataset>(
      ctx, "constraint_data", require_existing, lines,
      [&](const json& p) { return ConstraintDatasetFromJson(p); },
      [&] {
        ConstraintDatasetConfig cc = cfg.manifold;
        cc.seed = DeriveSeed(seed, kConstraintDataStream);
        ConstraintDataset d = BuildConstraintDataset(
            IgpDynamics(out.dynamics, n), constraint_states,
            sys->control_bounds(), sys->control_dim(), cc);
        return std::make_pair(d, ConstraintDatasetToJson(d));
      },
      [&](const ConstraintDataset& d) {
        double residual = 0.0, ratio = 0.0;
        for (const ConstraintBasis& b : d.items) {
          residual = std::max(residual, b.residual);
          if (b.threshold > 0.0) ratio = std::max(ratio, b.residual / b.threshold);
        }
        return json{{"constraint_count", d.constraint_count},
                    {"states", d.items.size()},
                    {"discarded", d.discarded.size()},
                    {"max_residual", residual},
                    {"max_residual_over_threshold", ratio}};
      });

  out.manifold = RunStage<ManifoldModel>(
      ctx, "manifold", require_existing, lines,
      [&](const json& p) { return ManifoldFromJson(p, out.constraints); },
      [&] {
        ManifoldTrainConfig mc;
        mc.metric = cfg.constraint_metric;
        mc.metric.seed = DeriveSeed(seed, kConstraintMetricStream);
        mc.metric.layout = sys->StateNames();
        mc.gp = cfg.constraint_gp;
        mc.gp.seed = DeriveSeed(seed, kConstraintGpStream);
        mc.mask_threshold = cfg.constraint_mask_threshold;
        ManifoldModel m = TrainManifold(out.constraints, mc);
        return std::make_pair(m, ManifoldToJson(m, out.constraints));
      },
      [&](const ManifoldModel& m) {
        json rows = json::array();
        for (int i = 0; i < m.constraint_count(); ++i) {
          rows.push_back({{"final_loss", m.row_metric(i).final_loss},
                          {"retained", m.row_mask(i).retained}});
        }
        return json{{"constraint_count", m.constraint_count()},
                    {"rows", rows}};
      });
  return out;
}

}  // namespace

void WriteTextFile(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string ReadTextFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunPaths SeedPaths(const fs::path& out, uint64_t seed) {
  return RunPaths{out / ("seed_" + std::to_string(seed))};
}

GenerateSummary RunGenerate(const PipelineConfig& cfg, uint64_t seed,
                            const RunPaths& paths) {
  ValidateConfig(cfg);
  auto sys = BuildSystem(cfg);
  DatasetBundle bundle = GenerateBundle(*sys, cfg.data, seed);
  SaveBundle(bundle, paths.data());
  GenerateSummary s;
  s.offline_trajectories = static_cast<int>(bundle.offline.size());
  s.online_samples = static_cast<int>(bundle.online.states.rows());
  s.test_count = bundle.test.size();
  s.ood_margin_attained =
      NearestDistances(bundle.test.states,
                       Flatten(bundle, kOffline | kOnline).states)
          .minCoeff();
  return s;
}

TrainedModels RunTrain(const PipelineConfig& cfg, uint64_t seed,
                       const RunPaths& paths, std::vector<StageLine>* lines) {
  std::vector<StageLine> local;
  TrainedModels m = TrainOrLoad(cfg, seed, paths, false, &local);
  std::string log;
  for (const StageLine& l : local) {
    log += json{{"stage", l.stage}, {"resumed", l.resumed},
                {"metrics", l.metrics}}
               .dump() +
           "\n";
  }
  WriteTextFile(paths.train_log(), log);
  if (lines) *lines = std::move(local);
  return m;
}

TrainedModels LoadTrained(const PipelineConfig& cfg, uint64_t seed,
                          const RunPaths& paths) {
  return TrainOrLoad(cfg, seed, paths, true, nullptr);
}

EvalReport RunEval(const PipelineConfig& cfg, uint64_t seed,
                   const RunPaths& paths,
                   const std::vector<std::string>& models) {
  TrainedModels t = LoadTrained(cfg, seed, paths);
  auto sys = BuildSystem(cfg);
  DatasetBundle bundle = LoadBundle(paths.data());
  EvalReport report = Evaluate(
      StandardEntrants(t.baseline, t.dynamics, t.manifold, *sys, models),
      bundle, *sys);
  report.config_hash = ConfigHash(cfg);
  report.seed = seed;
  report.constraint =
      MeasureConstraintRecovery(t.manifold, *sys, bundle.test.states);
  WriteTextFile(paths.report(), ReportToJson(report).dump(2) + "\n");
  WriteTextFile(paths.residuals(), ResidualsCsv(report));
  return report;
}

std::vector<SweepCell> RunSweep(const PipelineConfig& cfg,
                                const std::vector<uint64_t>& seeds,
                                const fs::path& out) {
  auto axis = [](const std::vector<double>& v, double base) {
    return v.empty() ? std::vector<double>{base} : v;
  };
  const auto masks = axis(cfg.sweep.mask_thresholds, cfg.mask_threshold);
  const auto svs = axis(cfg.sweep.sv_rel, cfg.manifold.sv_rel);
  const auto noises = axis(cfg.sweep.noise_std, cfg.data.noise_std);
  const auto ks = cfg.sweep.lma_rows.empty()
                      ? std::vector<int>{cfg.manifold.lma_rows}
                      : cfg.sweep.lma_rows;
  std::vector<SweepCell> cells;
  for (double mask : masks) {
    for (double sv : svs) {
      for (int k : ks) {
        for (double noise : noises) {
          SweepCell cell;
          cell.mask_threshold = mask;
          cell.sv_rel = sv;
          cell.lma_rows = k;
          cell.noise_std = noise;
          cells.push_back(cell);
        }
      }
    }
  }
  for (size_t i = 0; i < cells.size(); ++i) {
    SweepCell& cell = cells[i];
    PipelineConfig c = cfg;
    c.mask_threshold = cell.mask_threshold;
    c.constraint_mask_threshold = cell.mask_threshold;
    c.manifold.sv_rel = cell.sv_rel;
    c.manifold.lma_rows = cell.lma_rows;
    c.data.noise_std = cell.noise_std;
    char name[32];
    std::snprintf(name, sizeof(name), "cell_%03zu", i);
    const fs::path dir = out / "sweep" / name;
    try {
      WriteTextFile(dir / "config.ini", WriteConfig(c));
      for (uint64_t seed : seeds) {
        const RunPaths paths = SeedPaths(dir, seed);
        RunGenerate(c, seed, paths);
        RunTrain(c, seed, paths);
        cell.reports.push_back(RunEval(c, seed, paths, c.models));
      }
    } catch (const std::exception& e) {
      cell.ok = false;
      cell.error = e.what();
      LogWarn(std::string("sweep ") + name + " failed: " + e.what());
    }
  }
  return cells;
}

json SweepToJson(const std::vector<SweepCell>& cells) {
  json out = json::array();
  for (const SweepCell& c : cells) {
    json j = {{"mask_threshold", c.mask_threshold},
              {"sv_rel", c.sv_rel},
              {"lma_rows", c.lma_rows},
              {"noise_std", c.noise_std},
              {"ok", c.ok}};
    if (c.ok) {
      j["aggregate"] = AggregateReports(c.reports);
    } else {
      j["error"] = c.error;
    }
    out.push_back(std::move(j));
  }
  return {{"version", "1"}, {"cells", std::move(out)}};
}

std::vector<EvalReport> CollectReports(const fs::path& out) {
  std::vector<std::pair<uint64_t, fs::path>> found;
  if (!fs::is_directory(out)) return {};
  for (const auto& entry : fs::directory_iterator(out)) {
    const std::string name = entry.path().filename().string();
    if (!entry.is_directory() || name.rfind("seed_", 0) != 0) continue;
    const fs::path report = RunPaths{entry.path()}.report();
    if (!fs::exists(report)) continue;
    try {
      found.push_back({std::stoull(name.substr(5)), report});
    } catch (const std::exception&) {
      continue;
    }
  }
  std::sort(found.begin(), found.end());
  std::vector<EvalReport> reports;
  for (const auto& [seed, path] : found) {
    try {
      reports.push_back(ReportFromJson(json::parse(ReadTextFile(path))));
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ": " + e.what());
    }
  }
  return reports;
}

std::string FormatSummary(const std::vector<EvalReport>& reports) {
  if (reports.empty()) return "no reports\n";
  json agg = AggregateReports(reports);
  std::ostringstream out;
  out << "system " << agg.at("system").get<std::string>() << ", "
      << reports.size() << " seed(s)\n";
  char line[160];
  std::snprintf(line, sizeof(line), "%-18s %12s %12s %12s %14s\n", "model",
                "rmse_med", "rmse_q1", "rmse_q3", "violation_med");
  out << line;
  for (const json& m : agg.at("models")) {
    const json& r = m.at("rmse_total");
    std::snprintf(line, sizeof(line), "%-18s %12.5g %12.5g %12.5g %14.5g\n",
                  m.at("name").get<std::string>().c_str(),
                  r.at("median").get<double>(), r.at("q1").get<double>(),
                  r.at("q3").get<double>(),
                  m.at("constraint_violation_mean").at("median").get<double>());
    out << line;
  }
  const json& c = agg.at("constraint_recovery");
  std::snprintf(line, sizeof(line),
                "constraint count matched in %d of %zu seed(s); "
                "recovery error median %.5g\n",
                c.at("count_match").get<int>(), reports.size(),
                c.at("error_max").at("median").get<double>());
  out << line;
  return out.str();
}

}  // namespace nhlearn
