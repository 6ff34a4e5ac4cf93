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
#include "nhlearn/systems.h"

#include <cmath>
#include <sstream>

#include "nhlearn/error.h"
#include "nhlearn/linalg.h"

namespace nhlearn {

bool Interval::bounded() const { return std::isfinite(lo) && std::isfinite(hi); }

SystemModel::SystemModel(int n, int m, int c, std::vector<Interval> bounds)
    : state_dim_(n), control_dim_(m), constraint_count_(c),
      bounds_(std::move(bounds)) {
  if (static_cast<int>(bounds_.size()) != m) {
    throw ContractViolation("system: expected " + std::to_string(m) +
                            " control bounds, got " +
                            std::to_string(bounds_.size()));
  }
  for (const auto& b : bounds_) {
    if (!b.bounded() || b.lo > b.hi) {
      throw ContractViolation("system: control bounds must be finite, lo <= hi");
    }
  }
  if (c >= n) throw ContractViolation("system: constraint count must be < n");
}

// unicycle

Unicycle::Unicycle(std::vector<Interval> bounds)
    : SystemModel(3, 2, 1, std::move(bounds)) {}

Vector Unicycle::Dynamics(const Vector& x, const Vector& u) const {
  Vector xdot(3);
  xdot << u[0] * std::cos(x[2]), u[0] * std::sin(x[2]), u[1];
  return xdot;
}

Matrix Unicycle::RawConstraint(const Vector& x) const {
  Matrix gamma(1, 4);
  gamma << -std::sin(x[2]), std::cos(x[2]), 0.0, 0.0;
  return gamma;
}

std::vector<std::string> Unicycle::StateNames() const {
  return {"px", "py", "theta"};
}
std::vector<std::string> Unicycle::ControlNames() const {
  return {"v", "omega"};
}

// planar quadrotor

namespace {

std::vector<Interval> DefaultThrustBounds(const PlanarQuadrotorParams& p) {
  double hover = 0.5 * p.mass * p.gravity;
  return {{hover - 1.0, hover + 1.0}, {hover - 1.0, hover + 1.0}};
}

}  // namespace

PlanarQuadrotor::PlanarQuadrotor(PlanarQuadrotorParams params,
                                 std::vector<Interval> bounds)
    : SystemModel(6, 2, 4,
                  bounds.empty() ? DefaultThrustBounds(params)
                                 : std::move(bounds)),
      params_(params) {
  if (!(params_.mass > 0 && params_.inertia > 0 && params_.arm_length > 0 &&
        params_.gravity > 0)) {
    throw ContractViolation("quadrotor: physical parameters must be positive");
  }
}

Vector PlanarQuadrotor::Dynamics(const Vector& x, const Vector& u) const {
  const double thrust = u[0] + u[1];
  const double theta = x[2];
  Vector xdot(6);
  xdot << x[3], x[4], x[5],
      -thrust * std::sin(theta) / params_.mass,
      thrust * std::cos(theta) / params_.mass - params_.gravity,
      (u[1] - u[0]) * params_.arm_length / params_.inertia;
  return xdot;
}

Matrix PlanarQuadrotor::RawConstraint(const Vector& x) const {
  const double s = std::sin(x[2]);
  const double c = std::cos(x[2]);
  Matrix gamma = Matrix::Zero(4, 7);
  gamma(0, 0) = 1.0;
  gamma(0, 6) = -x[3];
  gamma(1, 1) = 1.0;
  gamma(1, 6) = -x[4];
  gamma(2, 2) = 1.0;
  gamma(2, 6) = -x[5];
  gamma(3, 3) = c;
  gamma(3, 4) = s;
  gamma(3, 6) = params_.gravity * s;
  return gamma;
}

std::vector<std::string> PlanarQuadrotor::StateNames() const {
  return {"px", "pz", "theta", "vx", "vz", "omega"};
}
std::vector<std::string> PlanarQuadrotor::ControlNames() const {
  return {"u1", "u2"};
}

// free functions

namespace {

void CheckState(const SystemModel& sys, const Vector& x, const char* what) {
  if (x.size() != sys.state_dim()) {
    throw ContractViolation(std::string(what) + ": state has dimension " +
                            std::to_string(x.size()) + ", expected " +
                            std::to_string(sys.state_dim()));
  }
}

void CheckControl(const SystemModel& sys, const Vector& u) {
  if (u.size() != sys.control_dim()) {
    throw ContractViolation("control has dimension " +
                            std::to_string(u.size()) + ", expected " +
                            std::to_string(sys.control_dim()));
  }
  std::ostringstream report;
  bool bad = false;
  for (int i = 0; i < u.size(); ++i) {
    const Interval& b = sys.control_bounds()[i];
    if (!b.Contains(u[i])) {
      report << " u[" << i << "]=" << u[i] << " not in [" << b.lo << ", "
             << b.hi << "]";
      bad = true;
    }
  }
  if (bad) throw ControlOutOfBounds("control out of bounds:" + report.str());
}

Vector Rk4Step(const SystemModel& sys, const Vector& x, const Vector& u,
               double dt) {
  Vector k1 = sys.Dynamics(x, u);
  Vector k2 = sys.Dynamics(x + 0.5 * dt * k1, u);
  Vector k3 = sys.Dynamics(x + 0.5 * dt * k2, u);
  Vector k4 = sys.Dynamics(x + dt * k3, u);
  return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace

Vector EvalDynamics(const SystemModel& sys, const Vector& x, const Vector& u) {
  CheckState(sys, x, "EvalDynamics");
  CheckControl(sys, u);
  return sys.Dynamics(x, u);
}

Matrix EvalTrueConstraint(const SystemModel& sys, const Vector& x) {
  CheckState(sys, x, "EvalTrueConstraint");
  Matrix raw = sys.RawConstraint(x);
  for (int i = 0; i < raw.rows(); ++i) raw.row(i).normalize();
  return ReducedRowEchelon(raw).reduced;
}

Trajectory Rollout(const SystemModel& sys, const Vector& x0,
                   const Matrix& controls, double dt) {
  CheckState(sys, x0, "Rollout");
  if (!(dt > 0.0)) throw ContractViolation("Rollout: dt must be positive");
  if (controls.rows() < 1 || controls.cols() != sys.control_dim()) {
    throw ContractViolation("Rollout: controls must be (T-1) x m with T >= 2");
  }
  for (int t = 0; t < controls.rows(); ++t) {
    CheckControl(sys, controls.row(t).transpose());
  }
  const int horizon = static_cast<int>(controls.rows()) + 1;
  Trajectory traj;
  traj.dt = dt;
  traj.controls = controls;
  traj.states.resize(horizon, sys.state_dim());
  traj.derivs.resize(horizon, sys.state_dim());
  Vector x = x0;
  for (int t = 0; t < horizon; ++t) {
    if (!x.allFinite()) {
      throw NumericalFailure("Rollout: non-finite state at step " +
                             std::to_string(t));
    }
    Vector u = traj.ControlAt(t);
    traj.states.row(t) = x.transpose();
    traj.derivs.row(t) = sys.Dynamics(x, u).transpose();
    if (t + 1 < horizon) x = Rk4Step(sys, x, u, dt);
  }
  return traj;
}

std::unique_ptr<SystemModel> MakeSystem(const std::string& name,
                                        const PlanarQuadrotorParams& params,
                                        const std::vector<Interval>& bounds) {
  if (name == "unicycle") {
    return bounds.empty() ? std::make_unique<Unicycle>()
                          : std::make_unique<Unicycle>(bounds);
  }
  if (name == "quadrotor") {
    return std::make_unique<PlanarQuadrotor>(params, bounds);
  }
  throw ConfigError("unknown system '" + name +
                    "' (expected unicycle or quadrotor)");
}

}  // namespace nhlearn
