#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "qdetect/config.hpp"
#include "qdetect/errors.hpp"
#include "qdetect/harness.hpp"
#include "qdetect/path_io.hpp"

using namespace qdetect;

namespace {

const char* kToml = R"(
seed = 7
n_paths = 300
dt = 0.002
horizon = 40.0
output_dir = "out"
gamma_sweep = [100.0, 1000.0]
tau_scenarios = [[0.0, inf], [inf, inf], [0.5, 0.25]]
mc_verify = true

[system]
strengths = [1.0, 2.0]
drift = "linear_state_space"
r = 0.25
)";

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("qdetect_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("config parses and round-trips") {
  const auto c = parse_config_toml(kToml);
  CHECK(c.seed == 7);
  CHECK(c.n_paths == 300);
  CHECK(c.n_sensors() == 2);
  CHECK(c.tau_scenarios.size() == 3);
  CHECK(c.tau_scenarios[1] == ChangePointVector::none(2));
  CHECK(c.tau_scenarios[2] == ChangePointVector({0.5, 0.25}));
  CHECK(std::get<LinearStateSpaceDrift>(c.system.drift).r == 0.25);
  CHECK(c.mc_verify);
  CHECK_FALSE(c.thresholds.has_value());

  const auto from_json = parse_config_json(to_json(c));
  const auto from_toml = parse_config_toml(to_toml(c));
  CHECK(from_json == c);
  CHECK(from_toml == c);
  CHECK(config_hash(from_json) == config_hash(c));
  CHECK(config_hash(c).size() == 16);

  auto d = c;
  d.seed = 8;
  CHECK_FALSE(d == c);
  CHECK(config_hash(d) != config_hash(c));
}

TEST_CASE("config with explicit thresholds and null taus in JSON") {
  const auto c = parse_config_json(R"({"gamma_sweep":[50],"tau_scenarios":[[null,"inf"],[0,0]],
      "thresholds":[5.5,6.0],"system":{"strengths":[1,1],"drift":"constant","mu":-0.5}})");
  REQUIRE(c.thresholds.has_value());
  CHECK(*c.thresholds == ThresholdVector({5.5, 6.0}));
  CHECK(c.tau_scenarios[0] == ChangePointVector::none(2));
  CHECK(std::get<ConstantDrift>(c.system.drift).mu == -0.5);
  CHECK(parse_config_json(to_json(c)) == c);
}

TEST_CASE("config validation") {
  const auto bad = [](const std::string& toml) { CHECK_THROWS_AS(parse_config_toml(toml), ConfigError); };
  bad("gamma_sweep = []\ntau_scenarios = [[0.0]]\n[system]\nstrengths = [1.0]\n");
  bad("gamma_sweep = [10.0]\ntau_scenarios = []\n[system]\nstrengths = [1.0]\n");
  bad("gamma_sweep = [10.0]\ntau_scenarios = [[0.0, 0.0]]\n[system]\nstrengths = [1.0]\n");
  bad("gamma_sweep = [10.0]\ntau_scenarios = [[0.0]]\nbogus = 1\n[system]\nstrengths = [1.0]\n");
  bad("gamma_sweep = [10.0]\ntau_scenarios = [[0.0]]\n[system]\nstrengths = [2.0]\n");
  bad("gamma_sweep = [-1.0]\ntau_scenarios = [[0.0]]\n[system]\nstrengths = [1.0]\n");
  bad("gamma_sweep = [10.0]\ntau_scenarios = [[0.0]]\ndt = 0\n[system]\nstrengths = [1.0]\n");
  bad("gamma_sweep = [10.0]\ntau_scenarios = [[0.0]]\n[system]\nstrengths = [1.0]\ndrift = \"wiggly\"\n");
  bad("this is = not toml [");
  CHECK_THROWS_AS(parse_config_json("{"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/qdetect.toml"), ConfigError);
}

TEST_CASE("binary path dump layout and round trip") {
  const SensorSystemSpec spec{SignalStrengths({1.0, 1.0, 3.0}), ConstantDrift{0.4}};
  const auto path = simulate(spec, ChangePointVector({0.1, kNoChange, 0.0}), 0.5, 1e-2, 42, 3);
  std::stringstream buf;
  write_path_binary(path, buf);
  const std::string bytes = buf.str();
  REQUIRE(bytes.size() == 5 + 4 + 8 + 8 + 8 + 4 + 8 * path.samples.size());
  CHECK(bytes.substr(0, 5) == "QDPB1");
  CHECK(static_cast<unsigned char>(bytes[5]) == 3);  // little-endian n_sensors
  CHECK(bytes[6] == 0);
  // first sample after the header is Z_1(0) = 0, the next row starts at byte 37 + 24
  double z = 0.0;
  std::uint64_t raw = 0;
  for (int b = 7; b >= 0; --b) raw = (raw << 8) | static_cast<unsigned char>(bytes[37 + 24 + b]);
  std::memcpy(&z, &raw, 8);
  CHECK(z == path.z(0, 1));

  std::stringstream in(bytes);
  const auto back = read_path_binary(in);
  CHECK(back.n_sensors == 3);
  CHECK(back.n_points == path.n_points);
  CHECK(back.dt == path.dt);
  CHECK(back.rng_seed == 42);
  CHECK(back.path_index == 3);
  CHECK(std::memcmp(back.samples.data(), path.samples.data(), 8 * path.samples.size()) == 0);

  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_path_binary(truncated), ConfigError);
  std::stringstream wrong("QDPB2" + bytes.substr(5));
  CHECK_THROWS_AS(read_path_binary(wrong), ConfigError);
}

TEST_CASE("CSV path export round trip") {
  const SensorSystemSpec spec{SignalStrengths({1.0, 2.0}), LinearStateSpaceDrift{0.5}};
  const auto path = simulate(spec, ChangePointVector({0.0, 0.2}), 0.3, 1e-2, 5);
  std::stringstream buf;
  write_path_csv(path, buf);
  std::string header;
  std::getline(std::stringstream(buf.str()), header);
  CHECK(header == "t,Z1,Z2");
  const auto back = read_path_csv(buf);
  CHECK(back.n_points == path.n_points);
  CHECK(back.dt == doctest::Approx(path.dt));
  CHECK(back.samples == path.samples);  // shortest round-trip decimal form
}

TEST_CASE("path files dispatch on content") {
  const auto dir = scratch("paths");
  const SensorSystemSpec spec{SignalStrengths({1.0})};
  const auto path = simulate(spec, ChangePointVector({0.0}), 0.2, 1e-2, 1);
  {
    std::ofstream b(dir / "p.bin", std::ios::binary);
    write_path_binary(path, b);
    std::ofstream c(dir / "p.csv");
    write_path_csv(path, c);
  }
  CHECK(read_path_file((dir / "p.bin").string()).samples == path.samples);
  CHECK(read_path_file((dir / "p.csv").string()).samples == path.samples);
}

TEST_CASE("gap experiment rows carry provenance and reproduce byte for byte") {
  auto c = parse_config_toml(kToml);
  c.system = {SignalStrengths({1.0, 1.0}), ConstantDrift{1.0}};
  c.n_paths = 200;
  c.dt = 1e-2;
  c.gamma_sweep = {30.0, 60.0};
  c.tau_scenarios = {ChangePointVector::none(2)};
  const auto a = run_gap_experiment(c);
  const auto b = run_gap_experiment(c);
  const std::string csv = gap_csv(a);
  CHECK(csv == gap_csv(b));
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "gamma,h1,h2,j_kl,lower_bound,gap,error,n_paths,wall_time,provenance");
  int analytic = 0, asymptotic = 0, mc = 0;
  while (std::getline(lines, line)) {
    const auto tag = line.substr(line.rfind(',') + 1);
    analytic += tag == "analytic";
    asymptotic += tag == "asymptotic";
    mc += tag == "mc";
  }
  CHECK(analytic == 2);
  CHECK(asymptotic == 2);
  CHECK(mc == 2);
  CHECK(a.mc.size() == 4);
}

TEST_CASE("demo false-alarm energy and simultaneous change") {
  auto c = parse_config_toml(kToml);
  c.system = {SignalStrengths({1.0, 1.0}), ConstantDrift{1.0}};
  c.n_paths = 4000;
  c.dt = 1e-3;
  c.gamma_sweep = {50.0};
  c.tau_scenarios = {ChangePointVector::none(2), ChangePointVector({0.0, 0.0})};
  const auto rec = run_detection_demo(c);
  REQUIRE(rec.mc.size() == 2);
  const auto& fa = rec.mc[0];
  CHECK(fa.false_alarm);
  CHECK(std::abs(fa.estimate.mean - 50.0) <= 0.05 * 50.0);
  const auto& both = rec.mc[1];
  CHECK(both.reference_kind == "j_kl_bound");
  CHECK(both.estimate.mean <= rec.calibrations[0].delays[0] + 3.0 * both.estimate.stderr_mc);
  CHECK(both.estimate.samples.size() == 4000);
  CHECK(demo_csv(rec) == demo_csv(run_detection_demo(c)));
}

TEST_CASE("outputs land on disk and records append") {
  const auto dir = scratch("out");
  auto c = parse_config_toml(kToml);
  c.system = {SignalStrengths({1.0, 1.0}), ConstantDrift{1.0}};
  c.output_dir = dir.string();
  c.mc_verify = false;
  c.gamma_sweep = {20.0};
  auto rec = run_gap_experiment(c);
  write_outputs(rec, c);
  write_outputs(rec, c);
  CHECK(std::filesystem::exists(dir / "gap.csv"));
  CHECK(std::filesystem::exists(dir / "gap_analytic.dat"));
  std::ifstream jl(dir / "records.jsonl");
  int n = 0;
  for (std::string line; std::getline(jl, line);) n += !line.empty();
  CHECK(n == 2);
}

TEST_CASE("histogram data") {
  const std::string dat = histogram_dat({0.0, 1.0, 1.0, 2.0}, 2);
  CHECK(dat.rfind("# ", 0) == 0);
  std::istringstream in(dat.substr(dat.find('\n') + 1));
  double x0, d0, x1, d1;
  in >> x0 >> d0 >> x1 >> d1;
  CHECK(x0 == doctest::Approx(0.5));
  CHECK(x1 == doctest::Approx(1.5));
  CHECK(d0 + d1 == doctest::Approx(1.0));  // density times unit bin width
}

TEST_CASE("gap bounds and asymptotic thresholds") {
  const auto c = parse_config_toml(kToml);
  CHECK(gap_bound(SignalStrengths({1.0, 1.0}), c) == doctest::Approx(std::log(2.0) + 0.1));
  CHECK(gap_bound(SignalStrengths({1.0, 1.0, 2.0}), c) == doctest::Approx(std::log(2.0) + 0.1));
  CHECK(gap_bound(SignalStrengths({1.0, 2.0}), c) == doctest::Approx(0.15));
  const SignalStrengths cs({1.0, 2.0});
  const auto h = asymptotic_thresholds(cs, 1e4);
  CHECK(f_false_alarm_asymptotic(h, cs) == doctest::Approx(4e4).epsilon(1e-9));
  CHECK(cs.squared(0) * (h[0] - 1.0) == doctest::Approx(cs.squared(1) * (h[1] - 1.0)));
}
