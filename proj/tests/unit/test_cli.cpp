// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "fixtures.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int rc = -1;
  std::string out;
};

Run run(const std::string &args) {
  const std::string cmd = std::string(THERMOTWIN_CLI) + " " + args + " 2>/dev/null";
  Run r;
  FILE *p = popen(cmd.c_str(), "r");
  REQUIRE(p);
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.rc = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::size_t line_count(const fs::path &p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

fs::path workdir() {
  const fs::path d = fs::temp_directory_path() / "thermotwin_cli_test";
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run("").rc != 0);
  CHECK(run("no-such-verb").rc == 2);
  CHECK(run("train").rc == 2);  // --data is required
  CHECK(run("twin --model /nonexistent.json").rc == 2);
  CHECK(run("gen-dataset --steps 0").rc == 2);
  CHECK(run("--help").rc == 0);
}

TEST_CASE("simulate and gen-dataset write the expected rows") {
  const fs::path d = workdir();
  REQUIRE(run("gen-dataset --steps 300 --seed 3 --out " + (d / "a.csv").string()).rc == 0);
  REQUIRE(run("gen-dataset --steps 300 --seed 3 --out " + (d / "b.csv").string()).rc == 0);
  CHECK(line_count(d / "a.csv") == 301);
  CHECK(fixtures::read_text(d / "a.csv") == fixtures::read_text(d / "b.csv"));
  REQUIRE(run("simulate --scenario demand --out " + (d / "s.csv").string()).rc == 0);
  CHECK(line_count(d / "s.csv") > 100);
}

TEST_CASE("train, evaluate and twin chain") {
  const fs::path d = workdir();
  const std::string data = (d / "train.csv").string();
  const std::string model = (d / "m.json").string();
  REQUIRE(run("gen-dataset --steps 400 --seed 5 --out " + data).rc == 0);
  Run tr = run("train --data " + data + " --out " + model +
               " --hidden 128 --layers 1 --epochs 2 --seed 1 --history " +
               (d / "h.csv").string());
  REQUIRE(tr.rc == 0);
  const json metrics = json::parse(tr.out);
  CHECK(metrics.contains("temperature_K"));
  CHECK(line_count(d / "h.csv") == 3);
  CHECK(fs::exists(model));

  Run ev = run("evaluate --model " + model + " --data " + data);
  REQUIRE(ev.rc == 0);
  CHECK(json::parse(ev.out).contains("actuator_pct"));

  Run tw = run("--threads 1 twin --model " + model + " --demand 1.889 --max-steps 60");
  REQUIRE(tw.rc == 0);
  const json rep = json::parse(tw.out);
  CHECK(rep["steps"].get<int>() <= 60);
  CHECK(rep["final_values"].contains("TF12"));
  CHECK(run("twin --model " + model + " --demand -1").rc != 0);

  std::ofstream(d / "bad.json") << "{ not a model";
  CHECK(run("twin --model " + (d / "bad.json").string()).rc == 1);
}

TEST_CASE("assist with the fallback advisor") {
  const fs::path d = workdir();
  Run r = run("assist --backend fallback --query 'status?' --advisory " +
              (d / "adv.json").string());
  REQUIRE(r.rc == 0);
  CHECK(r.out.find("[fallback advisory]") != std::string::npos);
  CHECK(fs::exists(d / "adv.json"));
  CHECK(run("assist --backend fallback --query ''").rc != 0);
}

TEST_CASE("serve runs for a fixed duration") {
  Run r = run("serve --port 0 --http-port 0 --duration 1 --speed 5 --no-noise");
  REQUIRE(r.rc == 0);
  const auto nl = r.out.find('\n');
  REQUIRE(nl != std::string::npos);
  const json ready = json::parse(r.out.substr(0, nl));
  CHECK(ready["port"].get<int>() > 0);
  CHECK(ready["twin"] == false);
  const json done = json::parse(r.out.substr(nl + 1));
  CHECK(done["ticks"].get<int>() >= 5);
  CHECK(run("serve --plant --twin --duration 1").rc == 2);
}
