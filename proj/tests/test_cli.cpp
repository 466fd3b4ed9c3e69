/* Copyright 2026 The Photocal Authors. All Rights Reserved.
Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at
    http://www.apache.org/licenses/LICENSE-2.0
Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <catch2/catch_amalgamated.hpp>

#ifndef PHOTOCAL_CLI_PATH
#define PHOTOCAL_CLI_PATH "photocal"
#endif

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

int run_cli(const std::string& args) {
  const std::string cmd =
      std::string(PHOTOCAL_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Normalizes the parts of the config echo that legitimately differ between
// two equivalent runs: the --threads flag and the output directory. The
// echo records the invocation; the results must not depend on either.
std::string normalize_echo(std::string text, const std::string& dir) {
  for (std::size_t pos = text.find(dir); pos != std::string::npos;
       pos = text.find(dir, pos)) {
    text.replace(pos, dir.size(), "OUT");
  }
  std::istringstream in(text);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find("\"threads\"") == std::string::npos) out << line << '\n';
  }
  return out.str();
}

}  // namespace

TEST_CASE("cli generate is reproducible and respects --noise 0") {
  TempDir a("photocal_cli_gen_a"), b("photocal_cli_gen_b");
  const std::string common =
      "--seed 7 generate --steps 4 --n 12 --noise 0.01";
  REQUIRE(run_cli("--out-dir " + a.str() + " " + common) == 0);
  REQUIRE(run_cli("--out-dir " + b.str() + " " + common) == 0);
  REQUIRE(slurp(a.path / "dataset.txt") == slurp(b.path / "dataset.txt"));
  REQUIRE(slurp(a.path / "truth_params.txt") ==
          slurp(b.path / "truth_params.txt"));
  REQUIRE(run_cli("--out-dir " + a.str() +
                  " generate --steps 4 --n 5 --noise 0 --prefix clean_") == 0);
  REQUIRE(fs::exists(a.path / "clean_dataset.txt"));
}

TEST_CASE("cli pipeline: generate, calibrate, validate, qw, tomo") {
  TempDir dir("photocal_cli_pipeline");
  const std::string out = "--out-dir " + dir.str();

  // small instance so the whole pipeline stays fast
  REQUIRE(run_cli(out + " --seed 11 generate --steps 4 --n 60 --noise 0") == 0);
  REQUIRE(run_cli(out + " --seed 12 generate --steps 4 --n 30 --noise 0 " +
                  "--params " + (dir.path / "truth_params.txt").string() +
                  " --prefix test_") == 0);
  REQUIRE(run_cli(out + " --seed 5 calibrate --steps 4 --data " +
                  (dir.path / "dataset.txt").string() + " --truth " +
                  (dir.path / "truth_params.txt").string() +
                  " --rounds 2 --max-epochs 150") == 0);
  REQUIRE(fs::exists(dir.path / "calibration.json"));
  REQUIRE(fs::exists(dir.path / "recovery.json"));
  REQUIRE(fs::exists(dir.path / "recovery.tsv"));

  REQUIRE(run_cli(out + " validate --steps 4 --data " +
                  (dir.path / "test_dataset.txt").string() + " --calib " +
                  (dir.path / "calibration.json").string() + " --truth " +
                  (dir.path / "truth_params.txt").string()) == 0);
  REQUIRE(fs::exists(dir.path / "metrics.json"));

  REQUIRE(run_cli(out + " qw --steps 4 --max-current 1000 --calib " +
                  (dir.path / "calibration.json").string()) == 0);
  REQUIRE(fs::exists(dir.path / "qw_report.json"));
  const std::string tsv = slurp(dir.path / "qw_distribution.tsv");
  REQUIRE(tsv.rfind("port\treference\tmodel\n", 0) == 0);

  REQUIRE(run_cli(out + " --seed 3 tomo --steps 4 --depth 2 "
                        "--settings-count 10 --n-dynamics 2 --params " +
                  (dir.path / "truth_params.txt").string()) == 0);
  REQUIRE(fs::exists(dir.path / "tomo_report.json"));
  REQUIRE(fs::exists(dir.path / "settings.txt"));
  REQUIRE(fs::exists(dir.path / "measured_distributions.txt"));

  // replay the first reconstruction from the written bundle
  REQUIRE(run_cli(out + " --seed 3 tomo --steps 4 --depth 2 --params " +
                  (dir.path / "truth_params.txt").string() + " --settings " +
                  (dir.path / "settings.txt").string() + " --measured " +
                  (dir.path / "measured_distributions.txt").string() +
                  " --reference " +
                  (dir.path / "reference_state.json").string() +
                  " --prefix replay_") == 0);
  const std::string replay = slurp(dir.path / "replay_tomo_report.json");
  REQUIRE(replay.find("\"infidelity\"") != std::string::npos);
  REQUIRE(replay.find("\"state\"") != std::string::npos);
}

TEST_CASE("cli qw with ideal parameters reproduces the reference") {
  TempDir dir("photocal_cli_qw_ideal");
  REQUIRE(run_cli("--out-dir " + dir.str() + " qw --steps 5") == 0);
  const std::string report = slurp(dir.path / "qw_report.json");
  const auto pos = report.find("\"l1_distance_to_reference\"");
  REQUIRE(pos != std::string::npos);
  const double d = std::strtod(report.c_str() + report.find(':', pos) + 1,
                               nullptr);
  REQUIRE(d < 1e-12);
}

TEST_CASE("cli exit codes distinguish error classes") {
  TempDir dir("photocal_cli_errors");
  // config error: bad subcommand flag value
  REQUIRE(run_cli("--out-dir " + dir.str() +
                  " calibrate --steps 4 --data /nonexistent --loss bogus") ==
          2);
  // io error: missing dataset
  REQUIRE(run_cli("--out-dir " + dir.str() +
                  " calibrate --steps 4 --data /nonexistent/file.txt") == 3);
  // config error: invalid steps
  REQUIRE(run_cli("--out-dir " + dir.str() + " generate --steps 0 --n 3") ==
          2);
  // numeric error: unreachable phases
  TempDir dir2("photocal_cli_unreachable");
  REQUIRE(run_cli("--out-dir " + dir2.str() +
                  " generate --steps 3 --n 2 --noise 0") == 0);
  std::ofstream phases(dir2.path / "phases.txt");
  phases << "6.2 0 0\n";  // nearly 2*pi on the first shifter: out of range
  phases.close();
  REQUIRE(run_cli("--out-dir " + dir2.str() + " qw --steps 3 --phases " +
                  (dir2.path / "phases.txt").string()) == 4);
}

TEST_CASE("cli runs are bit-reproducible and thread-independent") {
  TempDir a("photocal_cli_repro_a"), b("photocal_cli_repro_b");
  auto pipeline = [&](const TempDir& dir, int threads) {
    const std::string out = "--out-dir " + dir.str();
    REQUIRE(run_cli(out + " --seed 21 generate --steps 4 --n 40 --noise 0.01") == 0);
    REQUIRE(run_cli(out + " --seed 22 --threads " + std::to_string(threads) +
                    " calibrate --steps 4 --data " +
                    (dir.path / "dataset.txt").string() +
                    " --rounds 1 --max-epochs 60") == 0);
    REQUIRE(run_cli(out + " --seed 23 tomo --steps 4 --depth 2 "
                          "--settings-count 8 --n-dynamics 1 --params " +
                    (dir.path / "truth_params.txt").string()) == 0);
  };
  pipeline(a, 1);
  pipeline(b, 4);
  for (const char* name :
       {"dataset.txt", "truth_params.txt", "calibration.json",
        "tomo_report.json"}) {
    INFO(name);
    REQUIRE(normalize_echo(slurp(a.path / name), a.str()) ==
            normalize_echo(slurp(b.path / name), b.str()));
  }
}
