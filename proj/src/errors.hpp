// Copyright 2026 The routeadapt Authors
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

#ifndef ROUTEADAPT_ERRORS_HPP_
#define ROUTEADAPT_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace routeadapt {

// Values are part of the C API (see include/routeadapt/routeadapt.h).
enum class ErrorCode : int {
  kOk = 0,
  kDimension = 1,
  kDomain = 2,
  kInfeasibleState = 3,
  kContract = 4,
  kArgument = 5,
  kFeasibilityViolation = 6,
  kUnsupportedFeature = 7,
  kMalformedDocument = 8,
  kDegenerateInstance = 9,
  kConfiguration = 10,
  kTrainingDiverged = 11,
  kAdaptationDiverged = 12,
  kSize = 13,
  kJoin = 14,
  kIo = 15,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace routeadapt

#endif  // ROUTEADAPT_ERRORS_HPP_
