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
#ifndef NHLEARN_LINALG_H_
#define NHLEARN_LINALG_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nhlearn/types.h"

namespace nhlearn {

struct RrefResult {
  Matrix reduced;           // same shape as the input
  std::vector<int> pivots;  // pivot column of each nonzero row
  int rank = 0;
};

// Gauss-Jordan elimination with partial pivoting. Columns whose largest
// remaining magnitude is below pivot_tol are treated as zero, and entries of
// the result below pivot_tol are flushed to exactly zero.
RrefResult ReducedRowEchelon(const Matrix& a, double pivot_tol = 1e-9);

// Per-column z-scoring with statistics from a fixed (training) sample.
// Columns with (near) zero spread keep unit scale.
struct Standardizer {
  Vector mean;
  Vector scale;

  static Standardizer Fit(const Matrix& rows);
  static Standardizer Identity(int dim);

  int dim() const { return static_cast<int>(mean.size()); }
  Vector Apply(const Vector& v) const;
  Matrix Apply(const Matrix& rows) const;
  Vector Invert(const Vector& v) const;
};

// 64-bit FNV-1a, used for data fingerprints in checkpoints
class Fingerprint {
 public:
  void Add(std::span<const double> values);
  void Add(const Matrix& m);
  void Add(const std::string& s);
  uint64_t value() const { return state_; }
  std::string hex() const;

 private:
  void AddBytes(const unsigned char* data, size_t size);
  uint64_t state_ = 0xcbf29ce484222325ull;
};

}  // namespace nhlearn

#endif  // NHLEARN_LINALG_H_
