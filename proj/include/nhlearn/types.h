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

#ifndef NHLEARN_TYPES_H_
#define NHLEARN_TYPES_H_

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace nhlearn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// boolean selection over input coordinates; true = retained
using Mask = std::vector<bool>;

}  // namespace nhlearn

#endif  // NHLEARN_TYPES_H_
