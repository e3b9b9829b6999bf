#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "json.hpp"
#include "liftdig/config.hpp"

namespace fs = std::filesystem;

namespace {

std::string binary() {
  const char* b = std::getenv("LIFTDIG_BIN");
  return b ? b : "liftdig";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CliRun {
  int code = -1;
  std::string err;
};

CliRun run_cli(const std::string& cmd, const fs::path& cfg, const fs::path& out) {
  const fs::path err = out.string() + "." + cmd + ".stderr";
  std::string line = "'" + binary() + "' " + cmd + " --config '" + cfg.string() + "' --out '" + out.string() +
                     "' > /dev/null 2> '" + err.string() + "'";
  int status = std::system(line.c_str());
  CliRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err);
  return r;
}

class Workdir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("liftdig_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write_config(const nlohmann::json& j, const std::string& name = "cfg.json") {
    fs::path p = dir_ / name;
    std::ofstream(p) << j.dump(2);
    return p;
  }

  fs::path dir_;
};

// Small enough that the whole pipeline runs in well under a minute.
nlohmann::json small_config() {
  return nlohmann::json::parse(R"({
    "seed": 7,
    "collect": {"n_terrains": 2, "train_samples": 600, "test_samples": 300},
    "train": {"variants": ["dfl", "koopman_poly"]},
    "eval": {"starts": 5},
    "dig": {"q_theta": [1], "options": {"max_steps": 200}},
    "sweep": {"sizes": [300, 600], "repeats": 1, "dig_terrains": 1}
  })");
}

std::vector<std::string> csv_lines(const fs::path& p) {
  std::vector<std::string> out;
  std::ifstream in(p);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string f; std::getline(ss, f, ',');) out.push_back(f);
  return out;
}

}  // namespace

TEST_F(Workdir, TrainRefusesATinyDataset) {
  nlohmann::json j = small_config();
  j["collect"]["train_samples"] = 10;
  fs::path cfg = write_config(j);
  ASSERT_EQ(run_cli("collect", cfg, dir_ / "out").code, 0);
  EXPECT_EQ(csv_lines(dir_ / "out" / "train.csv").size(), 11u);
  CliRun r = run_cli("train", cfg, dir_ / "out");
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("insufficient data"), std::string::npos) << r.err;
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1) << r.err;
  EXPECT_FALSE(fs::exists(dir_ / "out" / "models" / "dfl.json"));
}

TEST_F(Workdir, MissingDependencyIsNamed) {
  fs::path cfg = write_config(small_config());
  CliRun r = run_cli("train", cfg, dir_ / "empty");
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("train.csv"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("collect"), std::string::npos) << r.err;

  r = run_cli("dig", cfg, dir_ / "empty");
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("terrain.csv"), std::string::npos) << r.err;
}

TEST_F(Workdir, BadConfigFailsWithOneLine) {
  fs::path cfg = dir_ / "broken.json";
  std::ofstream(cfg) << "{\"collect\": {\"n_terrains\": 0}}";
  CliRun r = run_cli("collect", cfg, dir_ / "out");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("n_terrains"), std::string::npos) << r.err;
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1) << r.err;
}

TEST_F(Workdir, PipelineIsDeterministicAndTagged) {
  fs::path cfg = write_config(small_config());
  const std::vector<std::string> stages{"terrain", "collect", "train", "eval", "dig", "sweep"};
  for (const char* run : {"a", "b"})
    for (const auto& s : stages) {
      CliRun r = run_cli(s, cfg, dir_ / run);
      ASSERT_EQ(r.code, 0) << s << ": " << r.err;
    }

  const std::string hash = liftdig::load_config(cfg.string()).hash();
  int csvs = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir_ / "a")) {
    if (e.path().extension() != ".csv") continue;
    fs::path other = dir_ / "b" / fs::relative(e.path(), dir_ / "a");
    ASSERT_TRUE(fs::exists(other)) << other;
    EXPECT_EQ(slurp(e.path()), slurp(other)) << e.path();
    ++csvs;
  }
  EXPECT_GE(csvs, 6);

  // Every report row carries the config hash.
  for (const char* name : {"mse.csv", "dig_qtheta_1.csv", "sweep.csv"}) {
    std::vector<std::string> lines = csv_lines(dir_ / "a" / "reports" / name);
    ASSERT_GE(lines.size(), 2u) << name;
    std::vector<std::string> header = split(lines[0]);
    auto col = std::find(header.begin(), header.end(), "config_hash");
    ASSERT_NE(col, header.end()) << name;
    const std::size_t c = static_cast<std::size_t>(col - header.begin());
    for (std::size_t i = 1; i < lines.size(); ++i) EXPECT_EQ(split(lines[i]).at(c), hash) << name << " row " << i;
  }

  // Three variables by five horizons per variant.
  std::vector<std::string> mse = csv_lines(dir_ / "a" / "reports" / "mse.csv");
  std::map<std::string, int> per_variant;
  for (std::size_t i = 1; i < mse.size(); ++i) ++per_variant[split(mse[i]).at(3)];
  ASSERT_EQ(per_variant.size(), 2u);
  for (const auto& [v, n] : per_variant) EXPECT_EQ(n, 15) << v;
}

TEST_F(Workdir, SeedOverrideChangesTheData) {
  fs::path cfg = write_config(small_config());
  ASSERT_EQ(run_cli("terrain", cfg, dir_ / "a").code, 0);
  std::string line = "'" + binary() + "' terrain --config '" + cfg.string() + "' --seed 8 --out '" +
                     (dir_ / "b").string() + "' > /dev/null 2>&1";
  ASSERT_EQ(std::system(line.c_str()), 0);
  EXPECT_NE(slurp(dir_ / "a" / "terrain.csv"), slurp(dir_ / "b" / "terrain.csv"));
}
