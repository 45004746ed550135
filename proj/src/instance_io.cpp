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

#include "instance_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

namespace routeadapt {

namespace {

std::string_view trim(std::string_view s) {
  const char* ws = " \t\r\n\f\v";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

std::string upper(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return out;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

[[noreturn]] void malformed(std::size_t line_no, const std::string& what) {
  fail(ErrorCode::kMalformedDocument, "line " + std::to_string(line_no) + ": " + what);
}

long to_long(std::string_view token, std::size_t line_no) {
  long value = 0;
  const auto* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    malformed(line_no, "expected an integer, got '" + std::string(token) + "'");
  }
  return value;
}

double to_double(std::string_view token, std::size_t line_no) {
  double value = 0.0;
  const auto* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) {
    malformed(line_no, "expected a number, got '" + std::string(token) + "'");
  }
  return value;
}

enum class Section { kNone, kCoords, kDemands, kDepot };

const std::set<std::string> kSections = {"NODE_COORD_SECTION", "DEMAND_SECTION",
                                         "DEPOT_SECTION", "EOF"};
const std::set<std::string> kUnsupportedSections = {
    "EDGE_WEIGHT_SECTION", "DISPLAY_DATA_SECTION", "TOUR_SECTION", "EDGE_DATA_SECTION",
    "FIXED_EDGES_SECTION", "LINEHAUL_SECTION",     "BACKHAUL_SECTION"};

}  // namespace

std::string format_double(double value) {
  if (!std::isfinite(value)) fail(ErrorCode::kArgument, "cannot serialise a non-finite number");
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

LibDocument parse_lib(std::string_view text) {
  LibDocument doc;
  bool have_dimension = false;
  Section section = Section::kNone;
  std::set<long> coord_ids, demand_ids;
  std::vector<LibDemand> demands;
  bool have_demands = false;
  bool depot_done = false;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty()) {
      if (nl == text.size()) break;
      continue;
    }

    const auto colon = line.find(':');
    const auto tokens = split_ws(line);
    const std::string head = upper(colon != std::string_view::npos
                                       ? trim(line.substr(0, colon))
                                       : tokens.front());
    if (head == "EOF") break;
    if (kUnsupportedSections.count(head)) {
      fail(ErrorCode::kUnsupportedFeature, head + " is not supported");
    }
    if (kSections.count(head)) {
      if (head == "NODE_COORD_SECTION") section = Section::kCoords;
      if (head == "DEMAND_SECTION") {
        section = Section::kDemands;
        have_demands = true;
      }
      if (head == "DEPOT_SECTION") section = Section::kDepot;
      continue;
    }
    if (colon != std::string_view::npos) {
      const std::string value(trim(line.substr(colon + 1)));
      section = Section::kNone;
      if (head == "NAME") {
        doc.name = value;
      } else if (head == "TYPE") {
        doc.type = upper(value);
      } else if (head == "COMMENT") {
        doc.comment = value;
      } else if (head == "DIMENSION") {
        doc.dimension = to_long(value, line_no);
        if (doc.dimension <= 0) malformed(line_no, "DIMENSION must be positive");
        have_dimension = true;
      } else if (head == "CAPACITY") {
        doc.capacity = to_long(value, line_no);
        if (*doc.capacity <= 0) malformed(line_no, "CAPACITY must be positive");
      } else if (head == "EDGE_WEIGHT_TYPE") {
        doc.edge_weight_type = upper(value);
        if (doc.edge_weight_type != "EUC_2D") {
          fail(ErrorCode::kUnsupportedFeature,
               "EDGE_WEIGHT_TYPE " + doc.edge_weight_type + " is not supported (EUC_2D only)");
        }
      } else if (head == "EDGE_WEIGHT_FORMAT" || head == "NODE_COORD_TYPE" ||
                 head == "DISPLAY_DATA_TYPE") {
        fail(ErrorCode::kUnsupportedFeature, head + " is not supported");
      }
      // Other header keywords are informational and ignored.
      continue;
    }

    switch (section) {
      case Section::kCoords: {
        if (tokens.size() != 3) malformed(line_no, "node line needs 'id x y'");
        LibNode node{to_long(tokens[0], line_no), to_double(tokens[1], line_no),
                     to_double(tokens[2], line_no)};
        if (!coord_ids.insert(node.id).second) {
          malformed(line_no, "duplicate node id " + std::to_string(node.id));
        }
        doc.node_coords.push_back(node);
        break;
      }
      case Section::kDemands: {
        if (tokens.size() != 2) malformed(line_no, "demand line needs 'id demand'");
        LibDemand d{to_long(tokens[0], line_no), to_double(tokens[1], line_no)};
        if (!demand_ids.insert(d.id).second) {
          malformed(line_no, "duplicate demand id " + std::to_string(d.id));
        }
        if (d.demand < 0) malformed(line_no, "negative demand");
        demands.push_back(d);
        break;
      }
      case Section::kDepot: {
        for (auto tok : tokens) {
          const long id = to_long(tok, line_no);
          if (id == -1) {
            depot_done = true;
          } else if (!depot_done) {
            if (doc.depot) fail(ErrorCode::kUnsupportedFeature, "multiple depots");
            doc.depot = id;
          }
        }
        break;
      }
      case Section::kNone:
        malformed(line_no, "unrecognised line '" + std::string(line.substr(0, 40)) + "'");
    }
  }

  if (!have_dimension) fail(ErrorCode::kMalformedDocument, "missing DIMENSION");
  if (static_cast<long>(doc.node_coords.size()) != doc.dimension) {
    fail(ErrorCode::kMalformedDocument,
         "DIMENSION " + std::to_string(doc.dimension) + " but " +
             std::to_string(doc.node_coords.size()) + " coordinates");
  }
  for (long id : coord_ids) {
    if (id < 1 || id > doc.dimension) {
      fail(ErrorCode::kMalformedDocument, "node id " + std::to_string(id) + " outside 1.." +
                                              std::to_string(doc.dimension));
    }
  }
  if (have_demands) {
    if (demand_ids != coord_ids) {
      fail(ErrorCode::kMalformedDocument, "DEMAND_SECTION ids do not match node ids");
    }
    doc.demands = std::move(demands);
  }
  if (doc.depot && !coord_ids.count(*doc.depot)) {
    fail(ErrorCode::kMalformedDocument, "depot id " + std::to_string(*doc.depot) + " unknown");
  }
  return doc;
}

Instance to_instance(const LibDocument& doc) {
  if (!doc.edge_weight_type.empty() && doc.edge_weight_type != "EUC_2D") {
    fail(ErrorCode::kUnsupportedFeature, "EDGE_WEIGHT_TYPE " + doc.edge_weight_type);
  }
  Instance inst;
  inst.name = doc.name;
  const bool cvrp = doc.type == "CVRP" || (doc.type.empty() && doc.demands.has_value());
  if (!cvrp && !doc.type.empty() && doc.type != "TSP") {
    fail(ErrorCode::kUnsupportedFeature, "TYPE " + doc.type + " is not supported");
  }
  inst.task = cvrp ? Task::kCvrp : Task::kTsp;
  if (doc.node_coords.empty()) fail(ErrorCode::kMalformedDocument, "no coordinates");

  double minx = doc.node_coords[0].x, maxx = minx;
  double miny = doc.node_coords[0].y, maxy = miny;
  for (const auto& n : doc.node_coords) {
    minx = std::min(minx, n.x);
    maxx = std::max(maxx, n.x);
    miny = std::min(miny, n.y);
    maxy = std::max(maxy, n.y);
  }
  const double extent = std::max(maxx - minx, maxy - miny);
  if (!(extent > 0.0)) fail(ErrorCode::kDegenerateInstance, "all coordinates coincide");
  inst.scale = extent;
  inst.offset = {minx, miny};

  // Depot first, remaining nodes in id order.
  std::vector<LibNode> nodes = doc.node_coords;
  std::sort(nodes.begin(), nodes.end(),
            [](const LibNode& a, const LibNode& b) { return a.id < b.id; });
  if (cvrp) {
    const long depot = doc.depot.value_or(nodes.front().id);
    std::stable_partition(nodes.begin(), nodes.end(),
                          [depot](const LibNode& n) { return n.id == depot; });
  }
  for (const auto& n : nodes) {
    inst.coords.push_back({std::clamp((n.x - minx) / extent, 0.0, 1.0),
                           std::clamp((n.y - miny) / extent, 0.0, 1.0)});
  }
  if (cvrp) {
    if (!doc.capacity) fail(ErrorCode::kMalformedDocument, "CVRP document without CAPACITY");
    if (!doc.demands) fail(ErrorCode::kMalformedDocument, "CVRP document without DEMAND_SECTION");
    std::map<long, double> by_id;
    for (const auto& d : *doc.demands) by_id[d.id] = d.demand;
    inst.capacity = static_cast<double>(*doc.capacity);
    for (const auto& n : nodes) inst.demands.push_back(by_id.at(n.id) / *inst.capacity);
  }
  validate_instance(inst);
  return inst;
}

LibDocument to_lib(const Instance& inst) {
  if (inst.task != Task::kTsp && inst.task != Task::kCvrp) {
    fail(ErrorCode::kUnsupportedFeature,
         "library format holds TSP and CVRP only, not " + std::string(task_name(inst.task)));
  }
  LibDocument doc;
  doc.name = inst.name.empty() ? std::string(task_name(inst.task)) + "-n" +
                                     std::to_string(inst.nodes()) + "-s" +
                                     std::to_string(inst.seed)
                               : inst.name;
  doc.type = inst.task == Task::kCvrp ? "CVRP" : "TSP";
  doc.dimension = static_cast<long>(inst.nodes());
  doc.edge_weight_type = "EUC_2D";
  for (std::size_t i = 0; i < inst.nodes(); ++i) {
    doc.node_coords.push_back({static_cast<long>(i + 1),
                               inst.offset.x + inst.scale * inst.coords[i].x,
                               inst.offset.y + inst.scale * inst.coords[i].y});
  }
  if (inst.task == Task::kCvrp) {
    doc.capacity = std::lround(*inst.capacity);
    std::vector<LibDemand> demands;
    for (std::size_t i = 0; i < inst.nodes(); ++i) {
      demands.push_back({static_cast<long>(i + 1),
                         static_cast<double>(std::lround(inst.demands[i] * *inst.capacity))});
    }
    doc.demands = std::move(demands);
    doc.depot = 1;
  }
  return doc;
}

std::string write_lib(const LibDocument& doc) {
  std::ostringstream os;
  os << "NAME : " << doc.name << "\n";
  if (!doc.comment.empty()) os << "COMMENT : " << doc.comment << "\n";
  os << "TYPE : " << doc.type << "\n";
  os << "DIMENSION : " << doc.dimension << "\n";
  os << "EDGE_WEIGHT_TYPE : " << (doc.edge_weight_type.empty() ? "EUC_2D" : doc.edge_weight_type)
     << "\n";
  if (doc.capacity) os << "CAPACITY : " << *doc.capacity << "\n";
  os << "NODE_COORD_SECTION\n";
  for (const auto& n : doc.node_coords) {
    os << n.id << ' ' << format_double(n.x) << ' ' << format_double(n.y) << "\n";
  }
  if (doc.demands) {
    os << "DEMAND_SECTION\n";
    for (const auto& d : *doc.demands) os << d.id << ' ' << format_double(d.demand) << "\n";
  }
  if (doc.depot) os << "DEPOT_SECTION\n " << *doc.depot << "\n -1\n";
  os << "EOF\n";
  return os.str();
}

double to_original_units(const Instance& inst, double length) { return length * inst.scale; }

// ---- native JSON -------------------------------------------------------------

namespace {

void write_array(std::ostringstream& os, const std::vector<double>& v) {
  os << '[';
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << ',';
    os << format_double(v[i]);
  }
  os << ']';
}

std::vector<double> read_array(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return {};
  std::vector<double> out;
  for (const auto& v : j.at(key)) {
    if (!v.is_number()) fail(ErrorCode::kMalformedDocument, std::string(key) + " must be numeric");
    out.push_back(v.get<double>());
  }
  return out;
}

std::optional<double> read_optional(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  if (!j[key].is_number()) fail(ErrorCode::kMalformedDocument, std::string(key) + " must be numeric");
  return j[key].get<double>();
}

}  // namespace

std::string write_native(const Instance& inst) {
  std::ostringstream os;
  os << "{\"task\":\"" << task_name(inst.task) << "\",\"n\":" << inst.problem_size();
  os << ",\"coords\":[";
  for (std::size_t i = 0; i < inst.coords.size(); ++i) {
    if (i) os << ',';
    os << '[' << format_double(inst.coords[i].x) << ',' << format_double(inst.coords[i].y) << ']';
  }
  os << ']';
  if (!inst.demands.empty()) {
    os << ",\"demands\":";
    write_array(os, inst.demands);
  }
  if (!inst.prizes.empty()) {
    os << ",\"prizes\":";
    write_array(os, inst.prizes);
  }
  if (!inst.penalties.empty()) {
    os << ",\"penalties\":";
    write_array(os, inst.penalties);
  }
  if (inst.capacity) os << ",\"capacity\":" << format_double(*inst.capacity);
  if (inst.max_length) os << ",\"max_length\":" << format_double(*inst.max_length);
  if (inst.min_prize) os << ",\"min_prize\":" << format_double(*inst.min_prize);
  os << ",\"seed\":" << inst.seed;
  if (!inst.name.empty()) os << ",\"name\":" << nlohmann::json(inst.name).dump();
  if (inst.scale != 1.0 || inst.offset.x != 0.0 || inst.offset.y != 0.0) {
    os << ",\"scale\":" << format_double(inst.scale) << ",\"offset\":["
       << format_double(inst.offset.x) << ',' << format_double(inst.offset.y) << ']';
  }
  os << "}\n";
  return os.str();
}

Instance parse_native(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kMalformedDocument, std::string("invalid JSON: ") + e.what());
  }
  try {
    Instance inst;
    inst.task = parse_task(j.at("task").get<std::string>());
    for (const auto& p : j.at("coords")) {
      if (!p.is_array() || p.size() != 2) {
        fail(ErrorCode::kMalformedDocument, "coords entries must be [x, y]");
      }
      inst.coords.push_back({p[0].get<double>(), p[1].get<double>()});
    }
    inst.demands = read_array(j, "demands");
    inst.prizes = read_array(j, "prizes");
    inst.penalties = read_array(j, "penalties");
    inst.capacity = read_optional(j, "capacity");
    inst.max_length = read_optional(j, "max_length");
    inst.min_prize = read_optional(j, "min_prize");
    if (j.contains("seed")) inst.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("name")) inst.name = j["name"].get<std::string>();
    if (j.contains("scale")) inst.scale = j["scale"].get<double>();
    if (j.contains("offset")) inst.offset = {j["offset"][0].get<double>(), j["offset"][1].get<double>()};
    validate_instance(inst);
    if (j.contains("n") && j["n"].get<std::size_t>() != inst.problem_size()) {
      fail(ErrorCode::kMalformedDocument, "field n disagrees with coords");
    }
    return inst;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kMalformedDocument, std::string("bad instance field: ") + e.what());
  }
}

InstanceFormat parse_format(std::string_view name) {
  if (name == "native" || name == "json") return InstanceFormat::kNative;
  if (name == "lib" || name == "tsplib" || name == "cvrplib") return InstanceFormat::kLib;
  fail(ErrorCode::kArgument, "unknown format '" + std::string(name) + "'");
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot read " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) fail(ErrorCode::kIo, "write failed for " + path.string());
}

Instance load_instance(const std::filesystem::path& path, InstanceFormat format) {
  const std::string text = read_text(path);
  Instance inst = format == InstanceFormat::kLib ? to_instance(parse_lib(text)) : parse_native(text);
  if (inst.name.empty()) inst.name = path.stem().string();
  return inst;
}

void save_instance(const Instance& inst, const std::filesystem::path& path, InstanceFormat format) {
  write_text(path, format == InstanceFormat::kLib ? write_lib(to_lib(inst)) : write_native(inst));
}

}  // namespace routeadapt
