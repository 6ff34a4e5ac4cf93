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
#include "nhlearn/linalg.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

namespace nhlearn {

RrefResult ReducedRowEchelon(const Matrix& a, double pivot_tol) {
  RrefResult result;
  Matrix r = a;
  const int rows = r.rows();
  const int cols = r.cols();
  int lead_row = 0;
  for (int col = 0; col < cols && lead_row < rows; ++col) {
    // partial pivoting on the remaining rows
    Eigen::Index best;
    double best_abs =
        r.col(col).segment(lead_row, rows - lead_row).cwiseAbs().maxCoeff(&best);
    if (best_abs < pivot_tol) {
      r.col(col).segment(lead_row, rows - lead_row).setZero();
      continue;
    }
    best += lead_row;
    if (best != lead_row) r.row(best).swap(r.row(lead_row));
    r.row(lead_row) /= r(lead_row, col);
    r(lead_row, col) = 1.0;
    for (int i = 0; i < rows; ++i) {
      if (i == lead_row) continue;
      double factor = r(i, col);
      if (factor != 0.0) {
        r.row(i) -= factor * r.row(lead_row);
        r(i, col) = 0.0;
      }
    }
    result.pivots.push_back(col);
    ++lead_row;
  }
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      if (std::abs(r(i, j)) < pivot_tol) r(i, j) = 0.0;
    }
  }
  result.rank = lead_row;
  result.reduced = std::move(r);
  return result;
}

Standardizer Standardizer::Fit(const Matrix& rows) {
  Standardizer s;
  const int n = rows.rows();
  s.mean = rows.colwise().mean().transpose();
  s.scale = Vector::Ones(rows.cols());
  if (n > 1) {
    for (int j = 0; j < rows.cols(); ++j) {
      double var = (rows.col(j).array() - s.mean[j]).square().sum() / n;
      double sd = std::sqrt(var);
      if (sd > 1e-12 * std::max(1.0, std::abs(s.mean[j]))) s.scale[j] = sd;
    }
  }
  return s;
}

Standardizer Standardizer::Identity(int dim) {
  return {Vector::Zero(dim), Vector::Ones(dim)};
}

Vector Standardizer::Apply(const Vector& v) const {
  return ((v - mean).array() / scale.array()).matrix();
}

Matrix Standardizer::Apply(const Matrix& rows) const {
  Matrix out = rows.rowwise() - mean.transpose();
  return out.array().rowwise() / scale.transpose().array();
}

Vector Standardizer::Invert(const Vector& v) const {
  return (v.array() * scale.array()).matrix() + mean;
}

void Fingerprint::AddBytes(const unsigned char* data, size_t size) {
  for (size_t i = 0; i < size; ++i) {
    state_ ^= data[i];
    state_ *= 0x100000001b3ull;
  }
}

void Fingerprint::Add(std::span<const double> values) {
  for (double v : values) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    AddBytes(bytes, sizeof(double));
  }
}

void Fingerprint::Add(const Matrix& m) {
  // row-major traversal so the value does not depend on storage order
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) {
      double v = m(i, j);
      Add(std::span<const double>(&v, 1));
    }
  }
}

void Fingerprint::Add(const std::string& s) {
  AddBytes(reinterpret_cast<const unsigned char*>(s.data()), s.size());
}

std::string Fingerprint::hex() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(state_));
  return buf;
}

}  // namespace nhlearn
