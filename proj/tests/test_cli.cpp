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

// Drives the routeadapt executable as a user would.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>

#include "commands.hpp"
#include "doctest.h"
#include "instance_io.hpp"

#ifndef ROUTEADAPT_CLI
#error "ROUTEADAPT_CLI must name the command-line executable"
#endif

namespace {

namespace fs = std::filesystem;
using namespace routeadapt;

const fs::path& workdir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "routeadapt_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

Outcome cli(const std::string& args, const std::string& env = "") {
  const fs::path o = workdir() / "stdout.txt";
  const fs::path e = workdir() / "stderr.txt";
  const std::string cmd = "cd '" + workdir().string() + "' && " + env + " '" ROUTEADAPT_CLI "' " +
                          args + " > '" + o.string() + "' 2> '" + e.string() + "'";
  const int status = std::system(cmd.c_str());
  Outcome r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_text(o);
  r.err = read_text(e);
  return r;
}

std::string file(const std::string& rel) { return read_text(workdir() / rel); }

// Tiny policy shared by the adaptation checks.
const std::string& tiny_policy() {
  static const std::string path = [] {
    const Outcome r = cli(
        "pretrain -o pre --set policy.embed_dim=16 --set policy.heads=2 --set policy.ff_dim=32 "
        "--set policy.layers=1 --epochs 1 --steps 2 --batch 4 --multistart 4 --n-train 6");
    REQUIRE(r.code == 0);
    return std::string("pre/policy.bin");
  }();
  return path;
}

std::map<std::string, double> by_instance(const std::string& results, const std::string& method) {
  std::map<std::string, double> out;
  for (const auto& r : read_results_csv(workdir() / results)) {
    if (r.method == method) out[r.instance] = r.obj;
  }
  return out;
}

}  // namespace

TEST_CASE("help is available for every subcommand") {
  const Outcome top = cli("--help");
  CHECK(top.code == 0);
  CHECK(top.out.find("Usage") != std::string::npos);
  for (std::string_view c : kCommands) {
    const Outcome r = cli(std::string(c) + " --help");
    CHECK(r.code == 0);
    CHECK(r.out.find("Usage") != std::string::npos);
  }
  CHECK(cli("--keys").out.find("sage.iterations") != std::string::npos);
  CHECK(cli("").code != 0);
  CHECK(cli("frobnicate").code != 0);
}

TEST_CASE("gen writes identical bytes for identical flags") {
  REQUIRE(cli("gen tsp 20 5 -o g1").code == 0);
  REQUIRE(cli("gen tsp 20 5 -o g2").code == 0);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(workdir() / "g1")) {
    // The snapshot and log name their own output directory.
    if (e.path().filename() == "log.txt" || e.path().filename() == "config.toml") continue;
    const auto name = e.path().filename().string();
    CHECK(file("g1/" + name) == file("g2/" + name));
    ++files;
  }
  CHECK(files == 5 + 1);  // instances and manifest
  CHECK(file("g1/manifest.json").find("\"seed\"") != std::string::npos);
}

TEST_CASE("gen with the library format emits parseable CVRP text") {
  REQUIRE(cli("gen cvrp 12 2 --format lib -o glib").code == 0);
  const std::string text = file("glib/cvrp_n12_0000.vrp");
  const LibDocument doc = parse_lib(text);
  CHECK(doc.type == "CVRP");
  CHECK(doc.dimension == 13);
  const Instance inst = to_instance(doc);
  CHECK(inst.nodes() == 13);
  CHECK(write_lib(doc) == text);
  CHECK(write_lib(to_lib(inst)) == text);
  CHECK(cli("gen op 12 2 --format lib -o gop").code == 1);
}

TEST_CASE("environment variables and flags override in order") {
  REQUIRE(cli("gen tsp 6 -o genv", "ROUTEADAPT_GEN_COUNT=2").code == 0);
  CHECK(fs::exists(workdir() / "genv" / "tsp_n6_0001.json"));
  CHECK_FALSE(fs::exists(workdir() / "genv" / "tsp_n6_0002.json"));
  REQUIRE(cli("gen tsp 6 --count 1 -o genv2", "ROUTEADAPT_GEN_COUNT=2").code == 0);
  CHECK_FALSE(fs::exists(workdir() / "genv2" / "tsp_n6_0001.json"));
}

TEST_CASE("missing checkpoints are reported with the expected path") {
  REQUIRE(cli("gen tsp 6 2 -o gmiss").code == 0);
  const Outcome r = cli("adapt -o amiss --instances gmiss --policy no/such/policy.bin");
  CHECK(r.code == 1);
  CHECK(r.err.find("no/such/policy.bin") != std::string::npos);
  CHECK(r.out.empty());
}

TEST_CASE("zero iterations reproduce zero-shot decoding") {
  const std::string& policy = tiny_policy();
  REQUIRE(cli("gen tsp 6 3 -o g0").code == 0);
  REQUIRE(cli("adapt -o a0 --mode sage --iters 0 --samples 4 --instances g0 --policy " + policy)
              .code == 0);
  const auto zero = by_instance("a0/results.csv", "sage_k0");
  const auto best = by_instance("a0/results.csv", "sage");
  REQUIRE(zero.size() == 3);
  CHECK(zero == best);

  // Without the locality bias, zero-shot is the evaluator's greedy decode.
  REQUIRE(cli("adapt -o e0 --mode eas --iters 0 --instances g0 --policy " + policy).code == 0);
  REQUIRE(cli("eval -o v0 --methods greedy --baseline greedy --instances g0 --policy " + policy)
              .code == 0);
  CHECK(by_instance("e0/results.csv", "eas") == by_instance("v0/results.csv", "greedy"));
}

TEST_CASE("sage and eas runs share seeds and yield paired curves") {
  const std::string& policy = tiny_policy();
  REQUIRE(cli("gen tsp 6 2 -o gp").code == 0);
  for (const char* mode : {"sage", "eas"}) {
    REQUIRE(cli(std::string("adapt -o p_") + mode + " --mode " + mode +
                " --iters 3 --samples 4 --instances gp --policy " + policy)
                .code == 0);
  }
  const auto s = read_results_csv(workdir() / "p_sage/results.csv");
  const auto e = read_results_csv(workdir() / "p_eas/results.csv");
  REQUIRE(s.size() == e.size());
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(s[i].instance == e[i].instance);
  CHECK(file("p_sage/curves.csv").find("sage,3,") != std::string::npos);
  CHECK(file("p_eas/curves.csv").find("eas,3,") != std::string::npos);
  REQUIRE(cli("report -o rp --baseline eas --runs p_sage/results.csv,p_eas/results.csv").code ==
          0);
  CHECK(file("rp/gap_summary.csv").find("sage,2,") != std::string::npos);
}

TEST_CASE("a run repeated from its snapshot writes byte-identical CSVs") {
  const std::string& policy = tiny_policy();
  REQUIRE(cli("gen tsp 6 2 -o gr").code == 0);
  REQUIRE(cli("adapt -o r1 --iters 2 --samples 4 --instances gr --policy " + policy).code == 0);
  REQUIRE(cli("adapt --config r1/config.toml -o r2").code == 0);
  for (const char* f : {"results.csv", "curves.csv"}) {
    CHECK(file(std::string("r1/") + f) == file(std::string("r2/") + f));
  }
}
