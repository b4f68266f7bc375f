#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

#ifdef PAGB_CLI_PATH

namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
protected:
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("pagb_cli_" + std::to_string(::getpid()) + "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  void write_config(const std::string& name, const std::string& body) { std::ofstream(dir / name) << body; }

  int run(const std::string& args) {
    const std::string cmd = "cd '" + dir.string() + "' && '" PAGB_CLI_PATH "' " + args + " >stdout.txt 2>stderr.txt";
    const int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  }

  std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  /// File tree with run timestamps removed from stage manifests.
  std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
      if (!e.is_regular_file()) continue;
      std::string body = slurp(e.path());
      if (e.path().parent_path().filename() == "manifests" && e.path().extension() == ".json") {
        auto j = nlohmann::ordered_json::parse(body);
        j.erase("timestamps");
        body = j.dump(2);
      }
      out[fs::relative(e.path(), root).generic_string()] = std::move(body);
    }
    return out;
  }

  fs::path dir;
};

const char* kTiny = R"([paths]
data_dir = data
output_dir = out
[synth]
n_cols = 12
n_rows = 12
n_bumps = 3
density = 1.0
)";

}  // namespace

TEST_F(CliTest, UnknownKeyExitsOneNamingKey) {
  write_config("c.ini", "[rf]\nn_trees = 10\nbogus_key = 3\n");
  EXPECT_EQ(run("synth --config c.ini"), 1);
  EXPECT_NE(slurp(dir / "stderr.txt").find("rf.bogus_key"), std::string::npos);
}

TEST_F(CliTest, MalformedValueExitsOne) {
  write_config("c.ini", "[cv]\nfolds = five\n");
  EXPECT_EQ(run("train --config c.ini"), 1);
  EXPECT_NE(slurp(dir / "stderr.txt").find("cv.folds"), std::string::npos);
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run("synth"), 1);
  EXPECT_EQ(run("nonsense --config c.ini"), 1);
}

TEST_F(CliTest, MissingInputLeavesNoPartialOutputs) {
  write_config("c.ini", kTiny);
  EXPECT_EQ(run("normalize --config c.ini"), 1);
  EXPECT_NE(slurp(dir / "stderr.txt").find("missing input"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "out" / "normalized"));
  EXPECT_FALSE(fs::exists(dir / "out" / ".staging"));
}

TEST_F(CliTest, SynthIsDeterministicAcrossThreadCounts) {
  write_config("c.ini", kTiny);
  ASSERT_EQ(run("synth --config c.ini --threads 1"), 0);
  const auto a = tree(dir / "data");
  fs::remove_all(dir / "data");
  ASSERT_EQ(run("--threads 3 synth --config c.ini"), 0);
  const auto b = tree(dir / "data");
  EXPECT_FALSE(a.empty());
  ASSERT_EQ(a.size(), b.size());
  for (const auto& [name, body] : a) {
    const auto it = b.find(name);
    ASSERT_NE(it, b.end()) << name;
    EXPECT_TRUE(it->second == body) << name;
  }
  EXPECT_TRUE(fs::exists(dir / "data" / "inventory.csv"));
}

TEST_F(CliTest, ManifestRecordsStage) {
  write_config("c.ini", kTiny);
  ASSERT_EQ(run("synth --config c.ini"), 0);
  fs::path manifest;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.path().filename() == "synth.json") manifest = e.path();
  ASSERT_FALSE(manifest.empty());
  const auto m = slurp(manifest);
  for (const char* key : {"\"stage\": \"synth\"", "config_sha256", "outputs", "seeds", "timestamps", "module_versions"})
    EXPECT_NE(m.find(key), std::string::npos) << key;
}

#endif
