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
#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "nhlearn/datasets.h"
#include "nhlearn/error.h"
#include "nhlearn/metric.h"
#include "nhlearn/rng.h"
#include "test_util.h"

namespace nhlearn {
namespace {

Vector Vec(std::initializer_list<double> v) {
  Vector out(v.size());
  int i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Vector RandomVector(int d, Rng& rng) {
  Vector v(d);
  for (int i = 0; i < d; ++i) v[i] = rng.Normal();
  return v;
}

Vector RandomDiag(int d, Rng& rng) {
  Vector v(d);
  for (int i = 0; i < d; ++i) v[i] = rng.Uniform(0.05, 2.0);
  return v;
}

// Unicycle triples with exact derivatives.
Triples UnicycleTriples(uint64_t seed, int trajectories) {
  Unicycle uni;
  GenerationConfig g = DefaultConfig("unicycle").data;
  g.trajectories = trajectories;
  return Flatten(GenerateBundle(uni, g, seed), kOffline);
}

TEST_SUITE("metric") {

TEST_CASE("distance examples") {
  auto pm = DiagonalPseudometric::FromDiag(Vec({2, 3}));
  CHECK(pm.Distance(Vec({1, 1}), Vec({0, 0})) == doctest::Approx(5.0));
  CHECK(pm.Distance(Vec({1, 1}), Vec({1, 1})) == 0.0);
  auto flat = DiagonalPseudometric::FromDiag(Vec({1, 0}));
  CHECK(flat.Distance(Vec({0, 5}), Vec({0, -5})) == 0.0);
  CHECK_THROWS_AS(pm.Distance(Vec({1}), Vec({0, 0})), ContractViolation);
  CHECK_THROWS_AS(DiagonalPseudometric::FromDiag(Vec({1, -1})), ContractViolation);
}

TEST_CASE("similarity examples") {
  auto id = DiagonalPseudometric::FromDiag(Vec({1, 1}));
  CHECK(id.Similarity(Vec({1, 0}), Vec({0, 1})).value == 0.0);
  CHECK(id.Similarity(Vec({3, -2}), Vec({3, -2})).value ==
        doctest::Approx(1.0).epsilon(1e-15));
  auto pm = DiagonalPseudometric::FromDiag(Vec({4, 1}));
  CHECK(pm.Similarity(Vec({1, 1}), Vec({1, -1})).value ==
        doctest::Approx(0.6).epsilon(1e-14));
  SimilarityValue zero = pm.Similarity(Vec({0, 0}), Vec({1, 1}));
  CHECK(zero.degenerate);
  CHECK(zero.value == 0.0);
  auto masked = DiagonalPseudometric::FromDiag(Vec({0, 1}));
  CHECK(masked.Similarity(Vec({1, 0}), Vec({1, 1})).degenerate);
}

TEST_CASE("pseudometric axioms on random samples") {
  Rng rng(1);
  for (int k = 0; k < 10000; ++k) {
    const int d = 1 + k % 6;
    auto pm = DiagonalPseudometric::FromDiag(RandomDiag(d, rng));
    Vector a = RandomVector(d, rng), b = RandomVector(d, rng),
           c = RandomVector(d, rng);
    REQUIRE(pm.Distance(a, a) == 0.0);
    REQUIRE(pm.Distance(a, b) == pm.Distance(b, a));
    REQUIRE(pm.Distance(a, b) >= 0.0);
    REQUIRE(pm.DistanceSqrt(a, c) <=
            pm.DistanceSqrt(a, b) + pm.DistanceSqrt(b, c) + 1e-12);
  }
}

TEST_CASE("similarity is bounded and scale invariant") {
  Rng rng(2);
  for (int k = 0; k < 1000; ++k) {
    auto pm = DiagonalPseudometric::FromDiag(RandomDiag(4, rng));
    Vector a = RandomVector(4, rng), b = RandomVector(4, rng);
    const double s = pm.Similarity(a, b).value;
    CHECK(std::abs(s) <= 1.0 + 1e-15);
    // powers of two scale exactly
    const double c = std::ldexp(1.0, rng.Index(20) - 10);
    CHECK(pm.Similarity(c * a, b).value == s);
  }
}

TEST_CASE("InfoNCE closed forms") {
  // sim(anchor, positive) = sim(anchor, negative)
  Matrix z(3, 2);
  z << 1, 0, 1, 1, 1, -1;
  std::vector<SamplePair> pairs = {{0, 1, {2}}};
  CHECK(InfoNceLoss(Vec({1, 1}), z, pairs, InfoNceVariant::kNegativesOnly) == 0.0);

  // positive aligned, every negative opposite
  for (int nb : {1, 4, 9}) {
    Matrix w(nb + 2, 2);
    w.row(0) << 1, 2;
    w.row(1) << 2, 4;
    for (int k = 0; k < nb; ++k) w.row(2 + k) << -(k + 1), -2.0 * (k + 1);
    SamplePair p{0, 1, {}};
    for (int k = 0; k < nb; ++k) p.negatives.push_back(2 + k);
    std::vector<SamplePair> ps = {p};
    CHECK(InfoNceLoss(Vec({1, 1}), w, ps, InfoNceVariant::kNegativesOnly) ==
          doctest::Approx(std::log(nb) - 2.0).epsilon(1e-13));
    CHECK(InfoNceLoss(Vec({1, 1}), w, ps, InfoNceVariant::kWithPositive) ==
          doctest::Approx(std::log(std::exp(1.0) + nb * std::exp(-1.0)) - 1.0)
              .epsilon(1e-13));
  }
  std::vector<SamplePair> bad = {{0, 1, {}}};
  CHECK_THROWS_AS(InfoNceLoss(Vec({1, 1}), z, bad, InfoNceVariant::kNegativesOnly),
                  ContractViolation);
}

TEST_CASE("InfoNCE gradient matches central differences") {
  Rng rng(3);
  for (int k = 0; k < 20; ++k) {
    const int d = 2 + k % 4;
    Matrix z(12, d);
    for (int i = 0; i < z.size(); ++i) z.data()[i] = rng.Normal();
    std::vector<SamplePair> pairs;
    for (int a = 0; a < 4; ++a) {
      SamplePair p{a, 4 + a, {}};
      for (int n = 8; n < 12; ++n) p.negatives.push_back(n);
      pairs.push_back(p);
    }
    const auto variant = k % 2 ? InfoNceVariant::kWithPositive
                               : InfoNceVariant::kNegativesOnly;
    Vector diag = RandomDiag(d, rng);
    Vector grad;
    InfoNceLoss(diag, z, pairs, variant, &grad);
    Vector numeric(d);
    const double h = 1e-6;
    for (int i = 0; i < d; ++i) {
      Vector a = diag, b = diag;
      a[i] += h;
      b[i] -= h;
      numeric[i] = (InfoNceLoss(a, z, pairs, variant) -
                    InfoNceLoss(b, z, pairs, variant)) /
                   (2 * h);
    }
    CHECK((grad - numeric).norm() / std::max(1e-8, numeric.norm()) < 1e-4);
  }
}

TEST_CASE("extract mask examples") {
  SparsityMask m = ExtractMask(DiagonalPseudometric::FromDiag(Vec({1e-6, 1.0, 0.8})), 0.01);
  CHECK(m.retained == Mask{false, true, true});
  CHECK(m.threshold_used == doctest::Approx(0.01));
  CHECK(ExtractMask(DiagonalPseudometric::FromDiag(Vec({0.3, 0.3, 0.3})), 0.01)
            .retained == Mask{true, true, true});
  CHECK(ExtractMask(DiagonalPseudometric::FromDiag(Vec({0.49, 1.0})), 0.5)
            .retained == Mask{false, true});
  // the argmax survives even an all-zero diagonal
  CHECK(ExtractMask(DiagonalPseudometric::FromDiag(Vec({0, 0})), 0.5)
            .retained == Mask{true, false});
  CHECK_THROWS_AS(ExtractMask(DiagonalPseudometric::FromDiag(Vec({1, 1})), 1.0),
                  ContractViolation);
  CHECK_THROWS_AS(ExtractMask(DiagonalPseudometric::FromDiag(Vec({1, 1})), 0.0),
                  ContractViolation);
}

TEST_CASE("mask agrees with its snapshot") {
  Rng rng(4);
  for (int k = 0; k < 200; ++k) {
    Vector diag = RandomDiag(6, rng);
    diag[rng.Index(6)] *= 1e-4;
    const double rel = rng.Uniform(1e-3, 0.9);
    SparsityMask m = ExtractMask(DiagonalPseudometric::FromDiag(diag), rel);
    for (int i = 0; i < 6; ++i) {
      CHECK(m.retained[i] == (m.diag_snapshot[i] > m.threshold_used));
    }
  }
}

TEST_CASE("training recovers unicycle sparsity") {
  Triples t = UnicycleTriples(5, 20);
  MetricTrainConfig cfg;
  cfg.seed = 5;
  MetricTrainResult r = TrainPseudometric(t.Inputs(), t.derivs, cfg);
  Vector diag = r.metric.diag();
  CHECK(diag[0] * 100 <= diag.maxCoeff());
  CHECK(diag[1] * 100 <= diag.maxCoeff());
  CHECK(r.metric.final_loss < r.metric.initial_loss);
  CHECK(r.loss_trace.back() < r.loss_trace.front());
  CHECK((diag.array() >= 0).all());

  MetricTrainResult again = TrainPseudometric(t.Inputs(), t.derivs, cfg);
  CHECK(again.metric.weights() == r.metric.weights());
}

TEST_CASE("trained metric ignores position shifts") {
  const auto& run = testing::UnicycleRun();
  Triples t = Flatten(run.bundle, kOffline);
  Matrix z = run.models.dynamics_metric.Embed(t.Inputs());
  const auto& pm = run.models.dynamics_metric;
  std::vector<double> dist;
  for (int i = 0; i < z.rows(); i += 7) {
    for (int j = i + 3; j < z.rows(); j += 11) {
      dist.push_back(pm.Distance(z.row(i).transpose(), z.row(j).transpose()));
    }
  }
  std::nth_element(dist.begin(), dist.begin() + dist.size() / 2, dist.end());
  const double median = dist[dist.size() / 2];
  const double diameter =
      (t.states.col(0).maxCoeff() - t.states.col(0).minCoeff());
  Matrix raw = t.Inputs();
  for (int i = 0; i < raw.rows(); i += 13) {
    for (double alpha : {0.1 * diameter, 0.5 * diameter, diameter}) {
      Vector a = raw.row(i).transpose();
      Vector b = a;
      b[0] += alpha;
      CHECK(pm.Distance(pm.Embed(a), pm.Embed(b)) <= 1e-3 * median);
    }
  }
}

TEST_CASE("constant labels still train") {
  Triples t = UnicycleTriples(6, 4);
  Matrix labels = Matrix::Ones(t.size(), 3);
  MetricTrainConfig cfg;
  cfg.steps = 200;
  cfg.batch_size = 16;
  MetricTrainResult r = TrainPseudometric(t.Inputs(), labels, cfg);
  CHECK(r.metric.weights().allFinite());
  CHECK(r.skipped == 0);
}

TEST_CASE("eps larger than every separation is rejected") {
  Triples t = UnicycleTriples(7, 4);
  MetricTrainConfig cfg;
  cfg.eps = 1e6;
  cfg.batch_size = 16;
  CHECK_THROWS_AS(TrainPseudometric(t.Inputs(), t.derivs, cfg), ConfigError);
  cfg.eps = -1.0;
  cfg.batch_size = 1000;
  CHECK_THROWS_AS(TrainPseudometric(t.Inputs(), t.derivs, cfg), ContractViolation);
}

TEST_CASE("checkpoint round trip") {
  Rng rng(8);
  Matrix raw(30, 3);
  for (int i = 0; i < raw.size(); ++i) raw.data()[i] = rng.Normal(3.0);
  DiagonalPseudometric pm(Vec({0.5, 0.0, 1.5}), Standardizer::Fit(raw),
                          {"a", "b", "c"});
  pm.final_loss = 0.25;
  nlohmann::json j = PseudometricToJson(pm, 0.01);
  DiagonalPseudometric back = PseudometricFromJson(nlohmann::json::parse(j.dump()));
  CHECK(back.weights() == pm.weights());
  CHECK(back.layout() == pm.layout());
  CHECK(back.input_stats().mean == pm.input_stats().mean);
  CHECK(back.Embed(raw) == pm.Embed(raw));
  CHECK(back.final_loss == 0.25);
  nlohmann::json broken = j;
  broken["version"] = "9";
  CHECK_THROWS_AS(PseudometricFromJson(broken), FormatError);
  broken = j;
  broken.erase("weights");
  CHECK_THROWS_AS(PseudometricFromJson(broken), FormatError);
}

}  // TEST_SUITE

}  // namespace
}  // namespace nhlearn
