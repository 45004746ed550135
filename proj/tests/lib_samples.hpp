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

// Synthesised CVRPLIB-style documents and a byte fuzzer for the parser.

#ifndef ROUTEADAPT_TESTS_LIB_SAMPLES_HPP_
#define ROUTEADAPT_TESTS_LIB_SAMPLES_HPP_

#include <sstream>
#include <string>

#include "instance_io.hpp"
#include "rng.hpp"

namespace routeadapt::testing {

// X-instance shaped document: integer grid coordinates in [0, 1000], integer
// demands, depot id 1, CRLF line endings when `crlf` is set.
inline std::string synth_x_document(std::size_t customers, std::uint64_t seed, bool crlf = false) {
  Rng rng(seed);
  const std::string eol = crlf ? "\r\n" : "\n";
  const long capacity = rng.integer(30, 200);
  std::ostringstream os;
  os << "NAME : \tX-n" << customers + 1 << "-k" << rng.integer(2, 30) << eol;
  os << "COMMENT : \"synthetic\"" << eol;
  os << "TYPE : CVRP" << eol;
  os << "DIMENSION : " << customers + 1 << eol;
  os << "EDGE_WEIGHT_TYPE : EUC_2D" << eol;
  os << "CAPACITY : " << capacity << eol;
  os << "NODE_COORD_SECTION" << eol;
  for (std::size_t i = 1; i <= customers + 1; ++i) {
    os << "  " << i << "\t" << rng.integer(0, 1000) << "   " << rng.integer(0, 1000) << eol;
  }
  os << "DEMAND_SECTION" << eol;
  for (std::size_t i = 1; i <= customers + 1; ++i) {
    os << i << " " << (i == 1 ? 0 : rng.integer(1, capacity)) << eol;
  }
  os << "DEPOT_SECTION" << eol << " 1" << eol << " -1" << eol << "EOF" << eol;
  return os.str();
}

enum class FuzzOutcome { kDocument, kError, kCrash };

// Runs the parser (and to_instance on success) and classifies the result.
// Anything other than routeadapt::Error escaping counts as a crash.
inline FuzzOutcome fuzz_once(const std::string& bytes) {
  try {
    auto doc = parse_lib(bytes);
    try {
      (void)to_instance(doc);
    } catch (const Error&) {
    }
    return FuzzOutcome::kDocument;
  } catch (const Error&) {
    return FuzzOutcome::kError;
  } catch (...) {
    return FuzzOutcome::kCrash;
  }
}

// Mix of raw random bytes, keyword soup and mutated valid documents.
inline std::string fuzz_input(Rng& rng, std::size_t i) {
  static const char* words[] = {"NAME", ":", "DIMENSION", "CAPACITY", "NODE_COORD_SECTION",
                                "DEMAND_SECTION", "DEPOT_SECTION", "EOF", "-1", "1", "2",
                                "3.5", "EUC_2D", "EDGE_WEIGHT_TYPE", "TYPE", "CVRP", "\n",
                                "\r\n", " ", "1e308", "nan", "-0", "99999999999999999999"};
  std::string s;
  switch (i % 3) {
    case 0: {
      const auto len = rng.integer(0, 300);
      for (long k = 0; k < len; ++k) s.push_back(static_cast<char>(rng.integer(0, 255)));
      break;
    }
    case 1: {
      const auto len = rng.integer(0, 80);
      for (long k = 0; k < len; ++k) {
        s += words[rng.integer(0, std::size(words) - 1)];
        s += rng.uniform() < 0.5 ? " " : "\n";
      }
      break;
    }
    default: {
      s = synth_x_document(static_cast<std::size_t>(rng.integer(1, 6)), i);
      const auto edits = rng.integer(1, 6);
      for (long k = 0; k < edits && !s.empty(); ++k) {
        const auto at = static_cast<std::size_t>(rng.integer(0, static_cast<long>(s.size()) - 1));
        switch (rng.integer(0, 2)) {
          case 0: s[at] = static_cast<char>(rng.integer(0, 255)); break;
          case 1: s.erase(at, static_cast<std::size_t>(rng.integer(1, 10))); break;
          default: s.insert(at, words[rng.integer(0, std::size(words) - 1)]);
        }
      }
    }
  }
  return s;
}

}  // namespace routeadapt::testing

#endif  // ROUTEADAPT_TESTS_LIB_SAMPLES_HPP_
