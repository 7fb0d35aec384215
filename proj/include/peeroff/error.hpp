/*
 * Copyright 2026 The peeroff Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef PEEROFF_ERROR_HPP
#define PEEROFF_ERROR_HPP

#include <stdexcept>
#include <string>

namespace peeroff {

// Invalid configuration or argument values (non-positive rates, bad sizes).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A closed-form cost function was evaluated outside its stable domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// An offloading profile violates positivity, conservation, stability or
// LAN stability. condition() names the violated rule.
class FeasibilityError : public std::runtime_error {
 public:
  FeasibilityError(std::string condition, const std::string& what)
      : std::runtime_error(what), condition_(std::move(condition)) {}

  const std::string& condition() const noexcept { return condition_; }

 private:
  std::string condition_;
};

// An iterative solver failed to converge or hit an inconsistent state.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Configuration, IO or stream problems inside the experiment harness.
class HarnessError : public std::runtime_error {
 public:
  enum class Kind { Config, Io, Stream };

  HarnessError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace peeroff

#endif  // PEEROFF_ERROR_HPP
