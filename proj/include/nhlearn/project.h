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
#ifndef NHLEARN_PROJECT_H_
#define NHLEARN_PROJECT_H_

#include "nhlearn/gp.h"
#include "nhlearn/manifold.h"
#include "nhlearn/types.h"

namespace nhlearn {

struct ProjectionResult {
  Vector projected;
  Vector residual_before;  // G xdot_pred + g
  double correction_norm = 0.0;
  bool degenerate = false;
};

// argmin |xdot - xdot_pred|^2  s.t.  G xdot + g = 0, in closed form
//   xdot* = xdot_pred - G^T (G G^T)^-1 (G xdot_pred + g).
// G G^T with condition number above 1e10 is regularized by
// 1e-8 trace(G G^T) / c and flagged; an all-zero G leaves xdot_pred as is.
ProjectionResult Project(const Matrix& G, const Vector& g,
                         const Vector& xdot_pred);

// f_hat(x, u) projected onto the learned constraint at x.
Vector PredictProjected(const IgpModel& dyn, const ManifoldModel& mm,
                        const Vector& x, const Vector& u);

}  // namespace nhlearn

#endif  // NHLEARN_PROJECT_H_
