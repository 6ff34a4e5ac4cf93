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

#ifndef NHLEARN_ERROR_H_
#define NHLEARN_ERROR_H_

#include <stdexcept>
#include <string>

namespace nhlearn {

// violated precondition (dimension mismatch, bad argument)
class ContractViolation : public std::invalid_argument {
 public:
  explicit ContractViolation(const std::string& what)
      : std::invalid_argument(what) {}
};

// control outside the admissible box; message carries the bounds report
class ControlOutOfBounds : public ContractViolation {
 public:
  explicit ControlOutOfBounds(const std::string& what)
      : ContractViolation(what) {}
};

// configuration or data rejected during validation
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// numerical breakdown (factorization failure, non-finite values, rank loss)
class NumericalFailure : public std::runtime_error {
 public:
  explicit NumericalFailure(const std::string& what)
      : std::runtime_error(what) {}
};

// malformed or inconsistent file on disk
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// a pipeline stage failed; stage() names it
class StageError : public std::runtime_error {
 public:
  StageError(const std::string& stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

// a required artifact (bundle, checkpoint) is absent
class MissingArtifact : public std::runtime_error {
 public:
  explicit MissingArtifact(const std::string& what)
      : std::runtime_error(what) {}
};

}  // namespace nhlearn

#endif  // NHLEARN_ERROR_H_
