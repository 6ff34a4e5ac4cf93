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

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "doctest.h"
#include "nhlearn/config.h"
#include "nhlearn/datasets.h"
#include "nhlearn/error.h"
#include "nhlearn/gp.h"
#include "nhlearn/rng.h"

namespace nhlearn {
namespace {

Matrix RandomMatrix(int r, int c, Rng& rng, double sd = 1.0) {
  Matrix m(r, c);
  for (int i = 0; i < m.size(); ++i) m.data()[i] = rng.Normal(sd);
  return m;
}

KernelHyperparams RandomHyper(int d, Rng& rng) {
  KernelHyperparams h;
  h.log_signal_variance = rng.Uniform(-1, 1);
  h.log_lengthscales = Vector(d);
  for (int i = 0; i < d; ++i) h.log_lengthscales[i] = rng.Uniform(-0.5, 1.0);
  h.log_noise_variance = rng.Uniform(-4, -1);
  return h;
}

// Central differences of the LML in packed log-parameters.
Vector FiniteDifferenceGradient(const KernelHyperparams& h, const Matrix& x,
                                const Vector& y, double step) {
  Vector p = h.Pack();
  Vector g(p.size());
  for (int i = 0; i < p.size(); ++i) {
    Vector a = p, b = p;
    a[i] += step;
    b[i] -= step;
    g[i] = (LogMarginalLikelihood(KernelHyperparams::Unpack(a), x, y, false)
                .value -
            LogMarginalLikelihood(KernelHyperparams::Unpack(b), x, y, false)
                .value) /
           (2 * step);
  }
  return g;
}

struct UnicycleData {
  Matrix inputs;
  Matrix labels;
};

UnicycleData NoiselessUnicycle() {
  Unicycle uni;
  GenerationConfig g = DefaultConfig("unicycle").data;
  g.trajectories = 6;
  g.horizon = 30;
  Triples t = Flatten(GenerateBundle(uni, g, 17), kOffline);
  return {t.Inputs(), t.derivs};
}

TEST_SUITE("gp") {

TEST_CASE("kernel closed forms") {
  KernelHyperparams h = KernelHyperparams::FromValues(1.0, Vector::Ones(1), 1e-2);
  Vector a = Vector::Zero(1), b = Vector::Ones(1);
  CHECK(KernelEval(h, a, b) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  CHECK(KernelEval(h, a, b) == doctest::Approx(0.60653).epsilon(1e-5));
  KernelHyperparams h2 =
      KernelHyperparams::FromValues(2.5, Vector::Constant(3, 0.7), 1e-2);
  Rng rng(1);
  Vector p = RandomMatrix(3, 1, rng), q = RandomMatrix(3, 1, rng);
  CHECK(KernelEval(h2, p, p) == 2.5);
  CHECK(KernelEval(h2, p, q) == KernelEval(h2, q, p));
  KernelHyperparams wide =
      KernelHyperparams::FromValues(2.5, Vector::Constant(3, 1e9), 1e-2);
  CHECK(KernelEval(wide, p, q) == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("Gram matrices are symmetric positive semidefinite") {
  Rng rng(2);
  for (int k = 0; k < 20; ++k) {
    Matrix x = RandomMatrix(30, 4, rng);
    Matrix gram = CrossKernel(RandomHyper(4, rng), x, x);
    CHECK((gram - gram.transpose()).cwiseAbs().maxCoeff() <= 1e-14);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-10);
  }
}

TEST_CASE("cross kernel agrees with pointwise evaluation") {
  Rng rng(3);
  KernelHyperparams h = RandomHyper(3, rng);
  Matrix a = RandomMatrix(5, 3, rng), b = RandomMatrix(4, 3, rng);
  Matrix k = CrossKernel(h, a, b);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 4; ++j) {
      CHECK(k(i, j) == doctest::Approx(KernelEval(h, a.row(i).transpose(),
                                                  b.row(j).transpose()))
                           .epsilon(1e-12));
    }
  }
}

TEST_CASE("LML gradient matches central differences") {
  Rng rng(4);
  for (int k = 0; k < 20; ++k) {
    const int d = 1 + k % 3;
    Matrix x = RandomMatrix(5, d, rng);
    Vector y = RandomMatrix(5, 1, rng);
    KernelHyperparams h = RandomHyper(d, rng);
    Vector analytic = LogMarginalLikelihood(h, x, y, true).gradient;
    Vector numeric = FiniteDifferenceGradient(h, x, y, 1e-5);
    CHECK((analytic - numeric).norm() / std::max(1e-8, numeric.norm()) < 1e-4);
  }
}

TEST_CASE("LML matches a dense evaluation") {
  Rng rng(5);
  Matrix x = RandomMatrix(8, 2, rng);
  Vector y = RandomMatrix(8, 1, rng);
  KernelHyperparams h = RandomHyper(2, rng);
  Matrix c = CrossKernel(h, x, x);
  c.diagonal().array() += h.noise_variance() + 1e-8;
  const double dense = -0.5 * y.dot(c.inverse() * y) -
                       0.5 * std::log(c.determinant()) -
                       0.5 * 8 * std::log(2 * M_PI);
  CHECK(LogMarginalLikelihood(h, x, y, false).value ==
        doctest::Approx(dense).epsilon(1e-10));
}

TEST_CASE("single point posterior mean") {
  KernelHyperparams h = KernelHyperparams::FromValues(1.7, Vector::Ones(2), 0.3);
  Matrix x(1, 2);
  x << 0.4, -0.2;
  Vector y = Vector::Constant(1, 2.0);
  ScalarGp gp = ScalarGp::Condition(h, x, y, 1e-12);
  CHECK(gp.PredictMean(x.row(0).transpose()) ==
        doctest::Approx(2.0 * 1.7 / (1.7 + 0.3 + gp.jitter())).epsilon(1e-12));
}

TEST_CASE("zero labels give a zero mean") {
  Rng rng(6);
  Matrix x = RandomMatrix(10, 2, rng);
  ScalarGp gp = FitScalarGp(x, Vector::Zero(10), GpFitConfig{});
  CHECK(gp.is_constant());
  for (int k = 0; k < 5; ++k) {
    CHECK(gp.PredictMean(RandomMatrix(2, 1, rng)) == 0.0);
  }
}

TEST_CASE("interpolation, prior reversion and dense oracle") {
  Rng rng(7);
  Matrix x = RandomMatrix(12, 2, rng);
  Vector y = RandomMatrix(12, 1, rng);
  KernelHyperparams h = KernelHyperparams::FromValues(1.0, Vector::Constant(2, 0.5), 1e-8);
  ScalarGp gp = ScalarGp::Condition(h, x, y, 1e-12);
  for (int i = 0; i < 12; ++i) {
    CHECK(std::abs(gp.PredictMean(x.row(i).transpose()) - y[i]) <= 1e-4);
  }
  Vector far = Vector::Constant(2, 10 * 0.5 + x.cwiseAbs().maxCoeff() + 5.0);
  CHECK(std::abs(gp.PredictMean(far)) < 1e-3 * y.cwiseAbs().maxCoeff());

  KernelHyperparams hn = KernelHyperparams::FromValues(0.8, Vector::Constant(2, 0.9), 0.05);
  ScalarGp noisy = ScalarGp::Condition(hn, x, y);
  Matrix c = CrossKernel(hn, x, x);
  c.diagonal().array() += 0.05 + noisy.jitter();
  Vector alpha = c.fullPivLu().solve(y);
  for (int k = 0; k < 10; ++k) {
    Vector q = RandomMatrix(2, 1, rng);
    const double dense = (CrossKernel(hn, q.transpose(), x) * alpha)(0, 0);
    CHECK(std::abs(noisy.PredictMean(q) - dense) <= 1e-10);
  }
}

TEST_CASE("cached factor reconstructs the regularized Gram matrix") {
  Rng rng(8);
  Matrix x = RandomMatrix(15, 3, rng);
  Vector y = RandomMatrix(15, 1, rng);
  KernelHyperparams h = RandomHyper(3, rng);
  ScalarGp gp = ScalarGp::Condition(h, x, y);
  Matrix c = CrossKernel(h, x, x);
  c.diagonal().array() += h.noise_variance() + gp.jitter();
  const Matrix& l = gp.chol_factor();
  CHECK((l * l.transpose() - c).norm() <= 1e-8 * c.norm());
}

TEST_CASE("prediction is linear in the labels") {
  Rng rng(9);
  Matrix x = RandomMatrix(10, 2, rng);
  Vector y1 = RandomMatrix(10, 1, rng), y2 = RandomMatrix(10, 1, rng);
  KernelHyperparams h = RandomHyper(2, rng);
  ScalarGp a = ScalarGp::Condition(h, x, y1);
  ScalarGp b = ScalarGp::Condition(h, x, y2);
  ScalarGp s = ScalarGp::Condition(h, x, y1 + y2);
  for (int k = 0; k < 10; ++k) {
    Vector q = RandomMatrix(2, 1, rng);
    CHECK(s.PredictMean(q) ==
          doctest::Approx(a.PredictMean(q) + b.PredictMean(q)).epsilon(1e-10));
  }
}

TEST_CASE("jitter escalates for duplicated inputs") {
  Matrix x = Matrix::Zero(6, 1);
  Vector y = Vector::Zero(6);
  KernelHyperparams h = KernelHyperparams::FromValues(1e10, Vector::Ones(1), 1e-300);
  LmlValue v = LogMarginalLikelihood(h, x, y, false);
  CHECK(v.jitter > 1e-8);
  CHECK(v.jitter <= 1e-4);
  KernelHyperparams huge = KernelHyperparams::FromValues(1e14, Vector::Ones(1), 1e-300);
  CHECK_THROWS_AS(LogMarginalLikelihood(huge, x, y, false), NumericalFailure);
}

TEST_CASE("fit never lowers the LML and accepted steps are monotone") {
  Rng rng(10);
  Matrix x = RandomMatrix(40, 2, rng);
  Vector y = (x.col(0).array().sin() + 0.1 * x.col(1).array()).matrix();
  GpFitConfig cfg;
  cfg.seed = 3;
  GpFitTrace trace;
  ScalarGp gp = FitScalarGp(x, y, cfg, &trace);
  CHECK(trace.final_lml >= trace.initial_lml);
  REQUIRE(trace.accepted_lml.size() >= 2);
  for (size_t k = 1; k < trace.accepted_lml.size(); ++k) {
    CHECK(trace.accepted_lml[k] >= trace.accepted_lml[k - 1]);
  }
  CHECK(gp.log_marginal_likelihood() ==
        doctest::Approx(trace.final_lml).epsilon(1e-8));
  GpFitConfig again = cfg;
  ScalarGp gp2 = FitScalarGp(x, y, again);
  CHECK(gp2.PredictMean(x.row(0).transpose()) ==
        gp.PredictMean(x.row(0).transpose()));
}

TEST_CASE("fit preconditions") {
  CHECK_THROWS_AS(FitScalarGp(Matrix(0, 2), Vector(0), GpFitConfig{}),
                  ContractViolation);
  CHECK_THROWS_AS(FitScalarGp(Matrix::Zero(1, 2), Vector::Zero(1), GpFitConfig{}),
                  ContractViolation);
  Matrix x = Matrix::Zero(3, 1);
  x(1, 0) = std::nan("");
  CHECK_THROWS_AS(FitScalarGp(x, Vector::Ones(3), GpFitConfig{}),
                  ContractViolation);
  CHECK_THROWS_AS(FitIgp(Matrix(0, 5), Matrix(0, 3), Mask(5, true), GpFitConfig{}),
                  ContractViolation);
  CHECK_THROWS_AS(FitIgp(Matrix::Zero(4, 2), Matrix::Zero(4, 1), Mask(2, false),
                         GpFitConfig{}),
                  ContractViolation);
}

TEST_CASE("IGP on the relevant inputs fits noiseless unicycle data") {
  UnicycleData d = NoiselessUnicycle();
  GpFitConfig cfg;
  cfg.iterations = 80;
  cfg.restarts = 1;
  IgpModel m = FitIgp(d.inputs, d.labels, {false, false, true, true, true}, cfg);
  Matrix err(d.inputs.rows(), 3);
  for (int i = 0; i < d.inputs.rows(); ++i) {
    err.row(i) = (m.Predict(d.inputs.row(i).transpose()) -
                  d.labels.row(i).transpose())
                     .transpose();
  }
  Vector rmse = (err.colwise().squaredNorm().transpose() / err.rows()).cwiseSqrt();
  CHECK(rmse.maxCoeff() < 1e-3);
}

TEST_CASE("mask equals fitting on hand-reduced inputs") {
  UnicycleData d = NoiselessUnicycle();
  GpFitConfig cfg;
  cfg.iterations = 40;
  cfg.restarts = 2;
  Mask mask = {false, false, true, true, true};
  IgpModel masked = FitIgp(d.inputs, d.labels, mask, cfg);
  Matrix reduced = d.inputs.rightCols(3);
  IgpModel hand = FitIgp(reduced, d.labels, Mask(3, true), cfg);
  for (int i = 0; i < d.inputs.rows(); i += 7) {
    Vector a = masked.Predict(d.inputs.row(i).transpose());
    Vector b = hand.Predict(reduced.row(i).transpose());
    CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("dropped inputs never change the output") {
  UnicycleData d = NoiselessUnicycle();
  GpFitConfig cfg;
  cfg.iterations = 20;
  cfg.restarts = 1;
  IgpModel m = FitIgp(d.inputs, d.labels, {false, false, true, true, true}, cfg);
  Rng rng(12);
  for (int k = 0; k < 100; ++k) {
    Vector z = d.inputs.row(rng.Index(d.inputs.rows())).transpose();
    Vector w = z;
    w[0] += rng.Uniform(-100, 100);
    w[1] += rng.Uniform(-100, 100);
    CHECK(m.Predict(z) == m.Predict(w));
  }
}

TEST_CASE("coverage subset") {
  Matrix line(1000, 1);
  for (int i = 0; i < 1000; ++i) line(i, 0) = i;
  auto a = CoverageSubset(line, 11, 4);
  CHECK(a == CoverageSubset(line, 11, 4));
  CHECK(a.size() == 11);
  CHECK(std::is_sorted(a.begin(), a.end()));
  CHECK(std::adjacent_find(a.begin(), a.end()) == a.end());
  CHECK(a.front() == 0);
  CHECK(a.back() == 999);
  // no gap is left much wider than an even spacing
  for (size_t i = 1; i < a.size(); ++i) CHECK(a[i] - a[i - 1] <= 2 * 999 / 10);
  CHECK(CoverageSubset(line.topRows(30), 50, 4).size() == 30);
  CHECK(CoverageSubset(line, 0, 4).size() == 1000);
}

TEST_CASE("checkpoint round trip rebuilds identical predictions") {
  UnicycleData d = NoiselessUnicycle();
  GpFitConfig cfg;
  cfg.iterations = 20;
  cfg.restarts = 1;
  cfg.max_points = 60;
  IgpModel m = FitIgp(d.inputs, d.labels, {false, false, true, true, true}, cfg);
  nlohmann::json j = IgpToJson(m, d.inputs, d.labels);
  IgpModel back = IgpFromJson(nlohmann::json::parse(j.dump()), d.inputs, d.labels);
  CHECK(back.train_rows() == m.train_rows());
  for (int i = 0; i < d.inputs.rows(); i += 5) {
    CHECK(back.Predict(d.inputs.row(i).transpose()) ==
          m.Predict(d.inputs.row(i).transpose()));
  }
  Matrix other = d.labels;
  other(0, 0) += 1e-9;
  CHECK_THROWS_AS(IgpFromJson(j, d.inputs, other), FormatError);
  j["outputs"][0].erase("log_lengthscales");
  CHECK_THROWS_AS(IgpFromJson(j, d.inputs, d.labels), FormatError);
}

}  // TEST_SUITE

}  // namespace
}  // namespace nhlearn
