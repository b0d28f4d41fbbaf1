#include <cstdlib>
#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "nsbm/csv.hpp"

#ifndef NSBM_CLI_PATH
#error "NSBM_CLI_PATH must point at the built command-line binary"
#endif

namespace {

namespace fs = std::filesystem;

int run_cli(const std::string& args) {
  const std::string cmd =
      std::string(NSBM_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  if (status == -1) return -1;
  return WEXITSTATUS(status);
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = fs::temp_directory_path() / ("nsbm_cli_" + tag);
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  std::string str() const { return path_.string(); }

 private:
  fs::path path_;
};

TEST(CliTest, UsageErrorsExitOne) {
  EXPECT_EQ(run_cli(""), 1);
  EXPECT_EQ(run_cli("frobnicate"), 1);
  EXPECT_EQ(run_cli("synth --no-such-flag"), 1);
  EXPECT_EQ(run_cli("predict"), 1);  // --sample is required
}

TEST(CliTest, HelpExitsZero) {
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli("synth --help"), 0);
}

TEST(CliTest, SynthWritesDeterministicData) {
  const TempDir tmp("synth");
  const std::string a = (tmp.path() / "a").string();
  const std::string b = (tmp.path() / "b").string();
  const std::string args = "synth --n-crash 4 --n-noncrash 10 --seed 7 --out ";
  ASSERT_EQ(run_cli(args + a), 0);
  ASSERT_EQ(run_cli(args + b), 0);

  const std::string csv_a = nsbm::read_text_file(a + "/data/trajectories.csv");
  const std::string csv_b = nsbm::read_text_file(b + "/data/trajectories.csv");
  EXPECT_EQ(csv_a, csv_b);
  EXPECT_NE(csv_a.find("sample_id"), std::string::npos);
  EXPECT_TRUE(fs::exists(a + "/config.txt"));

  const std::string c = (tmp.path() / "c").string();
  ASSERT_EQ(run_cli("synth --n-crash 4 --n-noncrash 10 --seed 8 --out " + c), 0);
  EXPECT_NE(csv_a, nsbm::read_text_file(c + "/data/trajectories.csv"));
}

TEST(CliTest, ExtractProducesEvents) {
  const TempDir tmp("extract");
  const std::string out = (tmp.path() / "run").string();
  ASSERT_EQ(run_cli("synth --n-crash 4 --n-noncrash 10 --seed 7 --out " + out), 0);
  ASSERT_EQ(run_cli("extract --T 1.0 --seed 7 --out " + out), 0);
  EXPECT_TRUE(fs::exists(out + "/data/events_T1.0_crash.json"));
  EXPECT_TRUE(fs::exists(out + "/data/events_noncrash.json"));
}

TEST(CliTest, MissingDataExitsTwo) {
  const TempDir tmp("missing");
  const std::string out = (tmp.path() / "empty").string();
  EXPECT_EQ(run_cli("extract --T 1.0 --out " + out), 2);
  EXPECT_EQ(run_cli("evaluate --T 1.0 --out " + out), 2);
}

TEST(CliTest, BadConfigExitsTwo) {
  const TempDir tmp("badcfg");
  const std::string cfg = (tmp.path() / "bad.cfg").string();
  nsbm::write_text_file(cfg, "seed = 1\nno_such_key = 4\n");
  EXPECT_EQ(run_cli("synth --config " + cfg + " --out " +
                    (tmp.path() / "run").string()),
            2);

  EXPECT_EQ(run_cli("synth --config " + (tmp.path() / "absent.cfg").string() +
                    " --out " + (tmp.path() / "run2").string()),
            2);
}

TEST(CliTest, BadLeadTimeExitsOne) {
  const TempDir tmp("badT");
  const std::string out = (tmp.path() / "run").string();
  ASSERT_EQ(run_cli("synth --n-crash 4 --n-noncrash 10 --seed 7 --out " + out), 0);
  EXPECT_EQ(run_cli("extract --T nonsense --out " + out), 1);
  EXPECT_EQ(run_cli("extract --T=-2.0 --out " + out), 1);
  EXPECT_EQ(run_cli("extract --T 0.55 --out " + out), 1);  // off the 0.1 s grid
}

}  // namespace
