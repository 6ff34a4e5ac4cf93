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
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <cstdio>

#include "doctest.h"
#include "nhlearn/config.h"
#include "nhlearn/error.h"
#include "nhlearn/eval.h"
#include "nhlearn/pipeline.h"
#include "test_util.h"

namespace nhlearn {
namespace {

using testing::TempDir;

// per-model sum of squared residuals and point counts parsed from the CSV
std::map<std::string, std::pair<double, int>> CsvSquares(const std::string& csv) {
  std::map<std::string, std::pair<double, int>> out;
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string cell, model;
    std::getline(row, cell, ',');
    std::getline(row, model, ',');
    auto& acc = out[model];
    while (std::getline(row, cell, ',')) {
      const double v = std::stod(cell);
      acc.first += v * v;
    }
    acc.second += 1;
  }
  return out;
}

// Seed-averaged mean max-norm error of the SVD bases against the analytic
// constraint at the processed states; infinite when the count is wrong.
double BasisError(const std::filesystem::path& cell_dir,
                  const std::vector<uint64_t>& seeds) {
  const PipelineConfig c = LoadConfig(cell_dir / "config.ini");
  auto sys = BuildSystem(c);
  double total = 0.0;
  for (uint64_t seed : seeds) {
    const ConstraintDataset d = LoadTrained(c, seed, SeedPaths(cell_dir, seed)).constraints;
    if (d.constraint_count != sys->constraint_count()) {
      return std::numeric_limits<double>::infinity();
    }
    double sum = 0.0;
    for (const auto& item : d.items) {
      sum += (item.gamma - EvalTrueConstraint(*sys, item.at_state)).cwiseAbs().maxCoeff();
    }
    total += sum / d.items.size();
  }
  return total / seeds.size();
}

double MeanRmse(const SweepCell& cell, const std::string& model) {
  REQUIRE(cell.ok);
  double sum = 0.0;
  for (const auto& r : cell.reports) sum += r.Find(model)->rmse_total;
  return sum / cell.reports.size();
}

TEST_SUITE("eval") {

TEST_CASE("true dynamics as a model are exact") {
  const auto& run = testing::UnicycleRun();
  Unicycle uni;
  std::vector<NamedModel> models = {
      {"truth", [&uni](const Vector& x, const Vector& u) { return uni.Dynamics(x, u); }}};
  EvalReport r = Evaluate(models, run.bundle, uni);
  REQUIRE(r.models.size() == 1);
  CHECK(r.models[0].rmse_total <= 1e-9);
  CHECK(r.models[0].constraint_violation_max <= 1e-9);
  CHECK(r.test_count == run.bundle.test.size());
  CHECK(r.ood_distance.min >= run.cfg.data.ood_margin);
  CHECK(r.ood_distance.min <= r.ood_distance.median);
  CHECK(r.ood_distance.median <= r.ood_distance.max);
}

TEST_CASE("standard entrants on the fixture") {
  const auto& run = testing::UnicycleRun();
  Unicycle uni;
  auto entrants = StandardEntrants(run.models.baseline, run.models.dynamics,
                                   run.models.manifold, uni);
  REQUIRE(entrants.size() == 4);
  for (size_t i = 0; i < 4; ++i) CHECK(entrants[i].name == StandardModelNames()[i]);
  EvalReport r = Evaluate(entrants, run.bundle, uni);
  const ModelReport* sparse = r.Find("sparse_gp");
  const ModelReport* oracle = r.Find("oracle_projected");
  REQUIRE(sparse != nullptr);
  REQUIRE(oracle != nullptr);
  CHECK(r.Find("missing") == nullptr);
  CHECK(oracle->rmse_total <= sparse->rmse_total);
  CHECK(oracle->constraint_violation_max <= 1e-9);
  for (int i = 0; i < sparse->residuals.rows(); ++i) {
    CHECK(oracle->residuals.row(i).norm() <= sparse->residuals.row(i).norm() + 1e-12);
  }
  for (const auto& m : r.models) {
    CHECK(std::abs(RmseFromResiduals(m.residuals) - m.rmse_total) <= 1e-12);
    Vector per = (m.residuals.colwise().squaredNorm().transpose() /
                  m.residuals.rows()).cwiseSqrt();
    CHECK((per - m.rmse_per_dim).cwiseAbs().maxCoeff() <= 1e-12);
  }
  auto two = StandardEntrants(run.models.baseline, run.models.dynamics,
                              run.models.manifold, uni, {"projected", "full_gp"});
  CHECK(two.size() == 2);
  CHECK_THROWS_AS(StandardEntrants(run.models.baseline, run.models.dynamics,
                                   run.models.manifold, uni, {"bogus"}),
                  ConfigError);
}

TEST_CASE("constraint recovery on test states") {
  const auto& run = testing::UnicycleRun();
  Unicycle uni;
  ConstraintRecovery c =
      MeasureConstraintRecovery(run.models.manifold, uni, run.bundle.test.states);
  CHECK(c.detected_count == 1);
  CHECK(c.true_count == 1);
  CHECK(c.error_max <= 0.1);
  CHECK(c.error_mean <= c.error_max);
  ConstraintRecovery none = MeasureConstraintRecovery(ManifoldModel{}, uni,
                                                      run.bundle.test.states);
  CHECK(none.detected_count == 0);
  CHECK(std::isnan(none.error_max));
}

TEST_CASE("report files are recomputable") {
  TempDir dir("eval_files");
  PipelineConfig cfg = testing::TinyConfig("unicycle");
  const RunPaths paths = SeedPaths(dir.path(), 3);
  RunGenerate(cfg, 3, paths);
  RunTrain(cfg, 3, paths);
  EvalReport r = RunEval(cfg, 3, paths, {});
  CHECK(r.seed == 3);
  CHECK(r.config_hash == ConfigHash(cfg));
  const auto j = nlohmann::json::parse(ReadTextFile(paths.report()));
  EvalReport back = ReportFromJson(j);
  CHECK(ReportToJson(back) == j);
  auto squares = CsvSquares(ReadTextFile(paths.residuals()));
  REQUIRE(squares.size() == 4);
  for (const auto& m : back.models) {
    const auto& [sum, count] = squares.at(m.name);
    CHECK(count == r.test_count);
    CHECK(std::abs(std::sqrt(sum / count) - m.rmse_total) <= 1e-12);
  }
  CHECK(ReadTextFile(paths.residuals()).rfind("test_index,model,dim_0,dim_1,dim_2\n", 0) == 0);
}

TEST_CASE("quartiles") {
  Quartiles a = ComputeQuartiles({5, 1, 3, 2, 4});
  CHECK(a.q1 == 2.0);
  CHECK(a.median == 3.0);
  CHECK(a.q3 == 4.0);
  Quartiles b = ComputeQuartiles({4, 1, 3, 2});
  CHECK(b.q1 == doctest::Approx(1.75));
  CHECK(b.median == doctest::Approx(2.5));
  CHECK(b.q3 == doctest::Approx(3.25));
  Quartiles c = ComputeQuartiles({7});
  CHECK(c.q1 == 7.0);
  CHECK(c.q3 == 7.0);
}

TEST_CASE("aggregate over seeds") {
  EvalReport a, b, c;
  a.seed = 1;
  b.seed = 2;
  c.seed = 3;
  double v = 1.0;
  for (EvalReport* r : {&a, &b, &c}) {
    r->system = "unicycle";
    ModelReport m;
    m.name = "sparse_gp";
    m.rmse_total = v;
    m.constraint_violation_mean = 10 * v;
    r->models.push_back(m);
    r->constraint = {1, 1, v / 10, v / 20};
    v *= 2;
  }
  nlohmann::json j = AggregateReports({a, b, c});
  CHECK(j["seeds"] == nlohmann::json({1, 2, 3}));
  CHECK(j["models"][0]["rmse_total"]["median"] == 2.0);
  CHECK(j["models"][0]["rmse_total"]["iqr"] == doctest::Approx(1.5));
  CHECK(j["models"][0]["constraint_violation_mean"]["median"] == 20.0);
  CHECK(j["constraint_recovery"]["count_match"] == 3);
}

TEST_CASE("single cell sweep matches a direct run") {
  TempDir dir("sweep_single");
  PipelineConfig cfg = testing::TinyConfig("unicycle");
  auto cells = RunSweep(cfg, {2}, dir.path());
  REQUIRE(cells.size() == 1);
  REQUIRE(cells[0].ok);
  const RunPaths paths = SeedPaths(dir.path() / "direct", 2);
  RunGenerate(cfg, 2, paths);
  RunTrain(cfg, 2, paths);
  EvalReport direct = RunEval(cfg, 2, paths, {});
  CHECK(ReportToJson(direct).dump() == ReportToJson(cells[0].reports[0]).dump());
  nlohmann::json s = SweepToJson(cells);
  CHECK(s["cells"].size() == 1);
}

TEST_CASE("noise degrades the sparse model on seed averages") {
  TempDir dir("sweep_noise");
  PipelineConfig cfg = testing::TinyConfig("unicycle");
  cfg.sweep.noise_std = {0.0, 1e-3, 1e-2};
  auto cells = RunSweep(cfg, {1, 2, 3}, dir.path());
  REQUIRE(cells.size() == 3);
  const double r0 = MeanRmse(cells[0], "sparse_gp");
  const double r1 = MeanRmse(cells[1], "sparse_gp");
  const double r2 = MeanRmse(cells[2], "sparse_gp");
  CHECK(r0 <= r1);
  CHECK(r1 <= r2);
}

TEST_CASE("more LMA rows do not worsen constraint recovery") {
  TempDir dir("sweep_k");
  PipelineConfig cfg = testing::TinyConfig("unicycle");
  cfg.sweep.lma_rows = {2, 4, 8};
  const std::vector<uint64_t> seeds = {1, 2, 3};
  auto cells = RunSweep(cfg, seeds, dir.path());
  REQUIRE(cells.size() == 3);
  std::vector<double> err;
  for (size_t i = 0; i < cells.size(); ++i) {
    REQUIRE(cells[i].ok);
    char name[16];
    std::snprintf(name, sizeof(name), "cell_%03zu", i);
    err.push_back(BasisError(dir.path() / "sweep" / name, seeds));
  }
  // K = n - c leaves the LMA rank below n + 1 - c, so the count is wrong
  CHECK(std::isinf(err[0]));
  CHECK(err[1] <= err[0]);
  CHECK(err[2] <= err[1]);
  CHECK(std::isfinite(err[2]));
  for (size_t i = 1; i < cells.size(); ++i) {
    for (const auto& r : cells[i].reports) CHECK(r.constraint.detected_count == 1);
  }
}

}  // TEST_SUITE

}  // namespace
}  // namespace nhlearn
