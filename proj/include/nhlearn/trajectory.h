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
#ifndef NHLEARN_TRAJECTORY_H_
#define NHLEARN_TRAJECTORY_H_

#include "nhlearn/types.h"

namespace nhlearn {

// Sampled state-control-derivative sequence.
//   states:   T x n
//   controls: (T-1) x m, control t is held over [t, t+1)
//   derivs:   T x n, derivative recorded at each sample instant
struct Trajectory {
  Matrix states;
  Matrix controls;
  Matrix derivs;
  double dt = 0.0;

  int length() const { return static_cast<int>(states.rows()); }

  // control paired with sample t; the final sample reuses the last control
  Vector ControlAt(int t) const {
    int row = t < controls.rows() ? t : static_cast<int>(controls.rows()) - 1;
    return controls.row(row).transpose();
  }
};

}  // namespace nhlearn

#endif  // NHLEARN_TRAJECTORY_H_
