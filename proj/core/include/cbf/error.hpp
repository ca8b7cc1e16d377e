// Copyright 2026 The cbfdecode Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cbf {

enum class ErrorCode {
  kInvalidToken,
  kNumericInput,
  kInvalidDistribution,
  kTrainingInput,
  kInvalidScores,
  kInvalidConfig,
  kInfeasibleConstraint,
  kInfeasibleHorizon,
  kUnsafeStart,
  kBackendUnavailable,
  kProtocol,
  kBadSpec,
  kIo,
};

const char* to_string(ErrorCode code);

// Base for every error raised by the library. The code is stable and is what
// the CLI maps onto exit statuses.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// No admissible token (or not enough) under the CBF inequality.
class InfeasibleConstraintError : public Error {
 public:
  InfeasibleConstraintError(double gamma, double base_h, std::size_t scans);

  double gamma() const noexcept { return gamma_; }
  double base_h() const noexcept { return base_h_; }
  std::size_t scans() const noexcept { return scans_; }

 private:
  double gamma_;
  double base_h_;
  std::size_t scans_;
};

// Remote predictor/classifier could not be reached. Carries enough for a
// caller to decide whether to retry.
class BackendUnavailableError : public Error {
 public:
  BackendUnavailableError(const std::string& endpoint, const std::string& reason,
                          int attempts, std::int64_t retry_after_ms)
      : Error(ErrorCode::kBackendUnavailable,
              "backend unavailable (" + endpoint + "): " + reason),
        endpoint_(endpoint),
        attempts_(attempts),
        retry_after_ms_(retry_after_ms) {}

  const std::string& endpoint() const noexcept { return endpoint_; }
  int attempts() const noexcept { return attempts_; }
  std::int64_t retry_after_ms() const noexcept { return retry_after_ms_; }

 private:
  std::string endpoint_;
  int attempts_;
  std::int64_t retry_after_ms_;
};

}  // namespace cbf
