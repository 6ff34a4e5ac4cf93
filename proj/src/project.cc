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
#include "nhlearn/project.h"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "nhlearn/error.h"

namespace nhlearn {

ProjectionResult Project(const Matrix& G, const Vector& g,
                         const Vector& xdot_pred) {
  const int c = static_cast<int>(G.rows());
  const int n = static_cast<int>(G.cols());
  if (g.size() != c || xdot_pred.size() != n) {
    throw ContractViolation("Project: dimension mismatch");
  }
  if (c > n) throw ContractViolation("Project: more constraints than states");
  ProjectionResult r;
  r.projected = xdot_pred;
  r.residual_before = G * xdot_pred + g;
  if (c == 0) return r;
  if (G.cwiseAbs().maxCoeff() == 0.0) {
    r.degenerate = true;
    return r;
  }
  Matrix ggt = G * G.transpose();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(ggt, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  Vector correction;
  if (!(lo > 0.0) || hi / lo > 1e10) {
    ggt.diagonal().array() += 1e-8 * ggt.trace() / c;
    r.degenerate = true;
    correction = G.transpose() * ggt.ldlt().solve(r.residual_before);
  } else {
    // G^T = Q R gives G^T (G G^T)^-1 = Q R^-T without squaring cond(G)
    Eigen::HouseholderQR<Matrix> qr(G.transpose());
    const Matrix q = qr.householderQ() * Matrix::Identity(n, c);
    const auto rt = qr.matrixQR().topRows(c).triangularView<Eigen::Upper>().transpose();
    correction = q * rt.solve(r.residual_before);
  }
  r.projected = xdot_pred - correction;
  r.correction_norm = correction.norm();
  return r;
}

Vector PredictProjected(const IgpModel& dyn, const ManifoldModel& mm,
                        const Vector& x, const Vector& u) {
  if (mm.constraint_count() > 0 && mm.state_dim() != x.size()) {
    throw ContractViolation("PredictProjected: state layout mismatch");
  }
  Vector z(x.size() + u.size());
  z << x, u;
  const Vector pred = dyn.Predict(z);
  if (mm.constraint_count() == 0) return pred;
  const ConstraintEval ce = EvalConstraint(mm, x);
  return Project(ce.G, ce.g, pred).projected;
}

}  // namespace nhlearn
