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

// TSPLIB/CVRPLIB subset reader and writer, plus the native JSON instance
// format.

#ifndef ROUTEADAPT_INSTANCE_IO_HPP_
#define ROUTEADAPT_INSTANCE_IO_HPP_

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "domain.hpp"

namespace routeadapt {

struct LibNode {
  long id = 0;
  double x = 0.0;
  double y = 0.0;
  bool operator==(const LibNode&) const = default;
};

struct LibDemand {
  long id = 0;
  double demand = 0.0;
  bool operator==(const LibDemand&) const = default;
};

struct LibDocument {
  std::string name;
  std::string type;  // TSP or CVRP
  std::string comment;
  long dimension = 0;
  std::string edge_weight_type;
  std::optional<long> capacity;
  std::vector<LibNode> node_coords;
  std::optional<std::vector<LibDemand>> demands;
  std::optional<long> depot;
};

// Keywords: NAME, TYPE, COMMENT, DIMENSION, CAPACITY, EDGE_WEIGHT_TYPE
// (EUC_2D only), NODE_COORD_SECTION, DEMAND_SECTION, DEPOT_SECTION, EOF.
// Whitespace and CRLF tolerant; every failure is an Error.
LibDocument parse_lib(std::string_view text);

// Rescales coordinates into the unit square by the largest extent, keeping
// the aspect ratio; the depot becomes node 0 and demands are divided by the
// capacity.
Instance to_instance(const LibDocument& doc);
// Inverse of to_instance (restores original units and integer demands).
LibDocument to_lib(const Instance& instance);
std::string write_lib(const LibDocument& doc);

// Converts a unit-square length back to the document's units.
double to_original_units(const Instance& instance, double length);

// Native JSON; floats are written with 17 significant digits.
std::string write_native(const Instance& instance);
Instance parse_native(std::string_view text);

enum class InstanceFormat { kNative, kLib };
InstanceFormat parse_format(std::string_view name);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);
Instance load_instance(const std::filesystem::path& path, InstanceFormat format);
// kLib is only defined for TSP and CVRP instances.
void save_instance(const Instance& instance, const std::filesystem::path& path,
                   InstanceFormat format);

// "%.17g"; throws kArgument on non-finite input.
std::string format_double(double value);

}  // namespace routeadapt

#endif  // ROUTEADAPT_INSTANCE_IO_HPP_
