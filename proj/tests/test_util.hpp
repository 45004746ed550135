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

#ifndef ROUTEADAPT_TESTS_TEST_UTIL_HPP_
#define ROUTEADAPT_TESTS_TEST_UTIL_HPP_

#include <functional>

#include "errors.hpp"

namespace routeadapt::testing {

// Error code thrown by `f`, or kOk.
inline ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kOk;
}

}  // namespace routeadapt::testing

#endif  // ROUTEADAPT_TESTS_TEST_UTIL_HPP_
