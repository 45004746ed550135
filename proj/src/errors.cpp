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

#include "errors.hpp"

namespace routeadapt {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kOk: return "ok";
    case ErrorCode::kDimension: return "dimension error";
    case ErrorCode::kDomain: return "domain error";
    case ErrorCode::kInfeasibleState: return "infeasible state";
    case ErrorCode::kContract: return "contract error";
    case ErrorCode::kArgument: return "argument error";
    case ErrorCode::kFeasibilityViolation: return "feasibility violation";
    case ErrorCode::kUnsupportedFeature: return "unsupported feature";
    case ErrorCode::kMalformedDocument: return "malformed document";
    case ErrorCode::kDegenerateInstance: return "degenerate instance";
    case ErrorCode::kConfiguration: return "configuration error";
    case ErrorCode::kTrainingDiverged: return "training diverged";
    case ErrorCode::kAdaptationDiverged: return "adaptation diverged";
    case ErrorCode::kSize: return "size error";
    case ErrorCode::kJoin: return "join error";
    case ErrorCode::kIo: return "i/o error";
  }
  return "unknown error";
}

}  // namespace routeadapt
