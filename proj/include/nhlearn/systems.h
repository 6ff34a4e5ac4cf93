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
#ifndef NHLEARN_SYSTEMS_H_
#define NHLEARN_SYSTEMS_H_

#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "nhlearn/trajectory.h"
#include "nhlearn/types.h"

namespace nhlearn {

struct Interval {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();

  bool Contains(double v) const { return v >= lo && v <= hi; }
  bool bounded() const;
  double width() const { return hi - lo; }
};

// Ground-truth simulated system. Immutable after construction.
class SystemModel {
 public:
  virtual ~SystemModel() = default;

  virtual std::string name() const = 0;
  int state_dim() const { return state_dim_; }
  int control_dim() const { return control_dim_; }
  // number of rows of the analytic constraint
  int constraint_count() const { return constraint_count_; }
  const std::vector<Interval>& control_bounds() const { return bounds_; }

  // f(x, u) without argument checks
  virtual Vector Dynamics(const Vector& x, const Vector& u) const = 0;

  // analytic constraint rows [G(x) g(x)] before standardization
  virtual Matrix RawConstraint(const Vector& x) const = 0;

  // state coordinates the dynamics do not depend on
  virtual std::vector<int> InvariantStateDims() const = 0;

  // human-readable state / control coordinate names
  virtual std::vector<std::string> StateNames() const = 0;
  virtual std::vector<std::string> ControlNames() const = 0;

 protected:
  SystemModel(int n, int m, int c, std::vector<Interval> bounds);

 private:
  int state_dim_;
  int control_dim_;
  int constraint_count_;
  std::vector<Interval> bounds_;
};

// Kinematic unicycle, state [px, py, theta], control [v, omega].
class Unicycle : public SystemModel {
 public:
  explicit Unicycle(std::vector<Interval> bounds = {{-1.0, 1.0}, {-1.0, 1.0}});

  std::string name() const override { return "unicycle"; }
  Vector Dynamics(const Vector& x, const Vector& u) const override;
  Matrix RawConstraint(const Vector& x) const override;
  std::vector<int> InvariantStateDims() const override { return {0, 1}; }
  std::vector<std::string> StateNames() const override;
  std::vector<std::string> ControlNames() const override;
};

struct PlanarQuadrotorParams {
  double mass = 1.0;
  double inertia = 0.2;
  double arm_length = 0.2;
  double gravity = 9.81;
};

// Planar quadrotor, state [px, pz, theta, vx, vz, omega], control = the two
// rotor thrusts. Besides the kinematic rows (pdot = v, thetadot = omega) the
// thrust direction gives  cos(theta) vxdot + sin(theta) vzdot + g sin(theta)=0,
// a constraint with a nonzero bias term.
class PlanarQuadrotor : public SystemModel {
 public:
  explicit PlanarQuadrotor(PlanarQuadrotorParams params = {},
                           std::vector<Interval> bounds = {});

  std::string name() const override { return "quadrotor"; }
  Vector Dynamics(const Vector& x, const Vector& u) const override;
  Matrix RawConstraint(const Vector& x) const override;
  std::vector<int> InvariantStateDims() const override { return {0, 1}; }
  std::vector<std::string> StateNames() const override;
  std::vector<std::string> ControlNames() const override;

  const PlanarQuadrotorParams& params() const { return params_; }
  double hover_thrust() const { return 0.5 * params_.mass * params_.gravity; }

 private:
  PlanarQuadrotorParams params_;
};

// Checked f(x, u). Throws ContractViolation on dimension mismatch and
// ControlOutOfBounds (with a per-dimension report) on inadmissible controls.
Vector EvalDynamics(const SystemModel& sys, const Vector& x, const Vector& u);

// Analytic constraint, row-normalized and reduced to rref, c x (n+1).
Matrix EvalTrueConstraint(const SystemModel& sys, const Vector& x);

// Fixed-step RK4 rollout. controls is (T-1) x m; the result has T samples
// and exact derivatives f(x_t, u_t).
Trajectory Rollout(const SystemModel& sys, const Vector& x0,
                   const Matrix& controls, double dt);

std::unique_ptr<SystemModel> MakeSystem(const std::string& name,
                                        const PlanarQuadrotorParams& params,
                                        const std::vector<Interval>& bounds);

}  // namespace nhlearn

#endif  // NHLEARN_SYSTEMS_H_
