#include "cli.hpp"

#include <doctest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using heatlab::cli::run_cli;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "heatlab_unit_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

nlohmann::json load_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

const std::vector<std::string> kSmallSim = {"simulate", "--model", "bep", "--m", "1", "--n", "8", "--t-end",
                                            "0.002", "--ensemble", "3", "--snapshots", "3", "--record-noise"};

std::vector<std::string> with_out(std::vector<std::string> args, const std::string& dir) {
  args.insert(args.begin(), {"--out-dir", dir, "--seed", "5"});
  return args;
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  CHECK(cli({}).code == heatlab::cli::kExitUsage);
  CHECK(cli({"bogus"}).code == heatlab::cli::kExitUsage);
  CHECK(cli({"simulate", "--no-such-flag"}).code == heatlab::cli::kExitUsage);
  const std::string dir = scratch("usage");
  CHECK(cli({"--out-dir", dir, "simulate", "--n", "2"}).code == heatlab::cli::kExitUsage);
  CHECK(cli({"--out-dir", dir, "simulate", "--model", "sip"}).code == heatlab::cli::kExitUsage);
  CHECK(cli({"--out-dir", dir, "ldp-eq", "--c", "0.5"}).code == heatlab::cli::kExitUsage);
  CHECK(cli({"--out-dir", dir, "--config", dir + "/missing.cfg", "simulate"}).code == heatlab::cli::kExitUsage);
  CHECK(cli({"--help"}).code == heatlab::cli::kExitOk);
}

TEST_CASE("simulate writes its files and reruns byte-identically") {
  const std::string dir = scratch("sim");
  const Run first = cli(with_out(kSmallSim, dir));
  REQUIRE(first.code == 0);
  for (const char* f : {"trajectory_0.csv", "noise_0.bin", "summary.json", "simulate.config"})
    CHECK(fs::exists(fs::path(dir) / f));
  const std::string traj = slurp(fs::path(dir) / "trajectory_0.csv");
  const std::string noise = slurp(fs::path(dir) / "noise_0.bin");
  const std::string summary = slurp(fs::path(dir) / "summary.json");
  REQUIRE(cli(with_out(kSmallSim, dir)).code == 0);
  CHECK(slurp(fs::path(dir) / "trajectory_0.csv") == traj);
  CHECK(slurp(fs::path(dir) / "noise_0.bin") == noise);
  CHECK(slurp(fs::path(dir) / "summary.json") == summary);
  CHECK(traj.rfind("# ", 0) == 0);
}

TEST_CASE("a resolved config reproduces the run") {
  const std::string a = scratch("cfg_a"), b = scratch("cfg_b");
  REQUIRE(cli(with_out(kSmallSim, a)).code == 0);
  const Run again = cli({"--config", a + "/simulate.config", "--out-dir", b});
  REQUIRE(again.code == 0);
  CHECK(slurp(fs::path(a) / "trajectory_0.csv") == slurp(fs::path(b) / "trajectory_0.csv"));
  CHECK(load_json(fs::path(a) / "summary.json")["config_digest"] == load_json(fs::path(b) / "summary.json")["config_digest"]);
  // Flags override the file.
  const std::string c = scratch("cfg_c");
  REQUIRE(cli({"--config", a + "/simulate.config", "--out-dir", c, "simulate", "--seed", "6"}).code == 0);
  CHECK(slurp(fs::path(a) / "trajectory_0.csv") != slurp(fs::path(c) / "trajectory_0.csv"));
}

TEST_CASE("unknown config keys are rejected") {
  const std::string dir = scratch("cfg_bad");
  {
    std::ofstream os(dir + "/bad.cfg");
    os << "command=simulate\n# comment\nwibble=3\n";
  }
  CHECK(cli({"--config", dir + "/bad.cfg", "--out-dir", dir}).code == heatlab::cli::kExitUsage);
}

TEST_CASE("ldp-eq approaches the rate within 5 percent") {
  const std::string dir = scratch("ldp");
  REQUIRE(cli({"--out-dir", dir, "ldp-eq"}).code == 0);
  const auto j = load_json(fs::path(dir) / "ldp_eq.json");
  CHECK(j["last_relative_error"].get<double>() < 0.05);
  CHECK(j["monotone"].get<bool>());
  CHECK(slurp(fs::path(dir) / "ldp_eq.csv").find("N,minus_log_p_over_N,rate_value\n") != std::string::npos);
}

TEST_CASE("rate of a hydrodynamic solution is negligible") {
  const std::string dir = scratch("rate");
  REQUIRE(cli({"--out-dir", dir, "hydro", "--model", "bep", "--m", "1", "--nx", "256", "--nt", "256", "--t-end", "0.1",
               "--substeps", "4"})
              .code == 0);
  REQUIRE(cli({"--out-dir", dir, "rate", "--model", "bep", "--m", "1", "--traj", dir + "/hydro.csv"}).code == 0);
  const auto j = load_json(fs::path(dir) / "rate.json");
  CHECK(std::abs(j["I_onsager"].get<double>()) <= 1e-10);
  CHECK(std::abs(j["I_direct"].get<double>()) <= 1e-10);
  CHECK(cli({"--out-dir", dir, "rate", "--traj", dir + "/missing.csv"}).code == heatlab::cli::kExitUsage);
}

TEST_CASE("bb reports a finite analytic action") {
  const std::string dir = scratch("bb");
  REQUIRE(cli({"--out-dir", dir, "bb", "--nx", "128", "--nt", "129", "--amplifications", "1,2"}).code == 0);
  CHECK(fs::exists(fs::path(dir) / "bb.csv"));
  CHECK(fs::exists(fs::path(dir) / "bb.json"));
}
