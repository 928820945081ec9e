#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "rd3d/data.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

// Runs the CLI with stdout captured and stderr discarded.
Run cli(const std::string& args) {
  const std::string cmd = std::string(RD3D_CLI) + " " + args + " 2>/dev/null";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  for (std::size_t n; (n = fread(buf, 1, sizeof buf, pipe)) > 0;) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("rd3d_cli_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream(dir_ / "run.cfg") << "# small run\ncount = 6\ncanvas_side = 40\ninput_side = 32\nepochs = 2\nbatch_size = 3\n";
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string p(const std::string& rel) const { return (dir_ / rel).string(); }
  std::string cfg() const { return " --config " + p("run.cfg"); }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, HelpListsEveryFlag) {
  const auto r = cli("--help");
  EXPECT_EQ(r.code, 0);
  for (const char* word : {"synth", "train", "infer", "eval", "ablate", "check", "--config", "--set", "--out", "--data",
                           "--resume", "--ckpt", "--pred", "--gt", "--dataset", "--seed", "--draws", "--w1-perturbation"}) {
    EXPECT_NE(r.out.find(word), std::string::npos) << word;
  }
  EXPECT_EQ(cli("").code, 2);
  EXPECT_EQ(cli("train --bogus-flag").code, 2);
}

TEST_F(Cli, SynthLayoutCountAndDeterminism) {
  ASSERT_EQ(cli("synth" + cfg() + " --out " + p("a")).code, 0);
  ASSERT_EQ(cli("synth" + cfg() + " --out " + p("b")).code, 0);
  for (const char* sub : {"rgb", "depth", "gt"}) {
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(dir_ / "a" / sub)) {
      ++n;
      EXPECT_EQ(e.path().extension(), std::string(sub) == "rgb" ? ".ppm" : ".pgm");
      EXPECT_EQ(slurp(e.path()), slurp(dir_ / "b" / sub / e.path().filename()));
    }
    EXPECT_EQ(n, 6u) << sub;
  }
  const auto img = rd3d::load_image(dir_ / "a" / "rgb" / "syn00000.ppm");
  EXPECT_EQ(img.rows, 40u);
  EXPECT_EQ(img.channels, 3u);
  ASSERT_EQ(cli("synth" + cfg() + " --set synth_seed=9 --out " + p("c")).code, 0);
  EXPECT_NE(slurp(dir_ / "a" / "rgb" / "syn00000.ppm"), slurp(dir_ / "c" / "rgb" / "syn00000.ppm"));
}

TEST_F(Cli, TrainInferEval) {
  ASSERT_EQ(cli("synth" + cfg() + " --out " + p("data")).code, 0);
  ASSERT_EQ(cli("train" + cfg() + " --data " + p("data") + " --out " + p("run")).code, 0);
  EXPECT_TRUE(fs::exists(dir_ / "run" / "checkpoint.rd3d"));
  std::istringstream log(slurp(dir_ / "run" / "train.log"));
  std::string line;
  std::size_t lines = 0;
  for (; std::getline(log, line); ++lines) {
    std::istringstream f(line);
    double e, s, lr, loss;
    EXPECT_TRUE(f >> e >> s >> lr >> loss) << line;
  }
  EXPECT_EQ(lines, 4u);

  ASSERT_EQ(cli("infer --ckpt " + p("run/checkpoint.rd3d") + " --data " + p("data") + " --out " + p("pred")).code, 0);
  ASSERT_EQ(cli("infer --ckpt " + p("run/checkpoint.rd3d") + " --data " + p("data") + " --out " + p("pred2")).code, 0);
  std::size_t maps = 0;
  for (const auto& e : fs::directory_iterator(dir_ / "pred")) {
    ++maps;
    const auto img = rd3d::load_image(e.path());
    EXPECT_EQ(img.rows, 40u);
    EXPECT_EQ(img.channels, 1u);
    EXPECT_EQ(slurp(e.path()), slurp(dir_ / "pred2" / e.path().filename()));
  }
  EXPECT_EQ(maps, 6u);

  const auto r = cli("eval --pred " + p("pred") + " --gt " + p("data"));
  ASSERT_EQ(r.code, 0);
  std::istringstream table(r.out);
  std::string header, row;
  std::getline(table, header);
  std::getline(table, row);
  EXPECT_EQ(header, "dataset\tSα\tFβmax\tEφmax\tM");
  std::istringstream fields(row);
  std::string name;
  std::vector<double> values(4);
  std::getline(fields, name, '\t');
  for (auto& v : values) {
    std::string cell;
    std::getline(fields, cell, '\t');
    v = std::stod(cell);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_EQ(name, "test");
}

TEST_F(Cli, EvalPerfectPredictions) {
  ASSERT_EQ(cli("synth" + cfg() + " --out " + p("data")).code, 0);
  const auto r = cli("eval --pred " + p("data/gt") + " --gt " + p("data/gt") + " --dataset synthetic");
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "dataset\tSα\tFβmax\tEφmax\tM\nsynthetic\t1.000\t1.000\t1.000\t0.000\n");
  EXPECT_EQ(cli("eval --pred " + p("data/depth") + " --gt " + p("empty_does_not_exist")).code, 2);
}

TEST_F(Cli, ResumeMatchesUninterrupted) {
  ASSERT_EQ(cli("synth" + cfg() + " --out " + p("data")).code, 0);
  ASSERT_EQ(cli("train" + cfg() + " --set epochs=1 --data " + p("data") + " --out " + p("head")).code, 0);
  ASSERT_EQ(cli("train" + cfg() + " --data " + p("data") + " --out " + p("head") + " --resume " + p("head/checkpoint.rd3d")).code, 0);
  ASSERT_EQ(cli("train" + cfg() + " --data " + p("data") + " --out " + p("full")).code, 0);
  EXPECT_EQ(slurp(dir_ / "head" / "checkpoint.rd3d"), slurp(dir_ / "full" / "checkpoint.rd3d"));
  EXPECT_EQ(slurp(dir_ / "head" / "train.log"), slurp(dir_ / "full" / "train.log"));
  // A checkpoint trained with another seed is refused.
  EXPECT_EQ(cli("train" + cfg() + " --set seed=5 --data " + p("data") + " --out " + p("x") + " --resume " + p("full/checkpoint.rd3d")).code, 1);
}

TEST_F(Cli, ConfigErrorsExitTwo) {
  ASSERT_EQ(cli("synth" + cfg() + " --out " + p("data")).code, 0);
  std::ofstream(dir_ / "bad.cfg") << "epochs = 1\nlearnig_rate = 0.1\n";
  EXPECT_EQ(cli("train --config " + p("bad.cfg") + " --data " + p("data") + " --out " + p("r")).code, 2);
  EXPECT_EQ(cli("train" + cfg() + " --set epochs=zero --data " + p("data") + " --out " + p("r")).code, 2);
  EXPECT_EQ(cli("synth --set count --out " + p("s")).code, 2);
  EXPECT_EQ(cli("infer --ckpt " + p("run.cfg") + " --data " + p("data") + " --out " + p("r")).code, 1);
}

TEST_F(Cli, CheckPassesAndDetectsPerturbation) {
  const auto ok = cli("check --draws 20");
  EXPECT_EQ(ok.code, 0);
  EXPECT_EQ(ok.out.find("FAIL"), std::string::npos) << ok.out;
  const auto bad = cli("check --draws 5 --w1-perturbation 0.1");
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.out.find("FAIL\tinflation equals shared 2D encoder"), std::string::npos) << bad.out;
}

TEST_F(Cli, AblateEmitsAllRowsDeterministically) {
  std::ofstream(dir_ / "ablate.cfg") << "count = 8\ncanvas_side = 32\ninput_side = 32\nepochs = 1\nbatch_size = 4\n"
                                        "ablation_seeds = 0\nablation_test_count = 2\n";
  const std::string base = " --config " + p("ablate.cfg") + " --data " + p("data");
  ASSERT_EQ(cli("synth --config " + p("ablate.cfg") + " --out " + p("data")).code, 0);
  const auto a = cli("ablate" + base + " --out " + p("a"));
  const auto b = cli("ablate" + base + " --out " + p("b"));
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(slurp(dir_ / "a" / "ablation.tsv"), slurp(dir_ / "b" / "ablation.tsv"));
  for (const char* v : {"\tinput_fusion\t", "\ttwo_stream\t", "\tsiamese\t", "\trd3d\t", "\tmodel1\t", "\tmodel2\t", "\tmodel3\t", "\tmodel4\t"}) {
    EXPECT_NE(a.out.find(v), std::string::npos) << v;
  }
  EXPECT_NE(a.out.find("params"), std::string::npos);
  EXPECT_NE(a.out.find("rd3d = 3 x siamese"), std::string::npos);
  EXPECT_EQ(a.out.find("VIOLATED"), std::string::npos);
}
