#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "synthmorph/io.hpp"
#include "synthmorph/metrics.hpp"

using namespace synthmorph;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code;
  std::string out;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("synthmorph_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  CliResult run(const std::string& args) const {
    const std::string log = path("stdout.txt");
    const std::string cmd = std::string(SYNTHMORPH_CLI) + " " + args + " > " + log + " 2> " + path("stderr.txt");
    const int status = std::system(cmd.c_str());
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
  }

  static std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, ArgumentErrors) {
  EXPECT_EQ(run("gen-labels --out " + path("x.smvf")).code, 2);
  EXPECT_EQ(run("gen-labels --seed 1 --out " + path("x.smvf") + " --bogus").code, 2);
  EXPECT_EQ(run("train --seed 1 --iterations 1 --loss nope --out " + path("w.smwt")).code, 2);
  EXPECT_EQ(run("gen-labels --seed 1 --labels 0 --out " + path("x.smvf")).code, 2);
  EXPECT_EQ(run("--help").code, 0);
}

TEST_F(Cli, IoErrors) {
  EXPECT_EQ(run("jacobian --disp " + path("missing.smvf")).code, 3);
  EXPECT_EQ(run("gen-labels --seed 1 --dims 16,16 --out " + path("no/such/dir/x.smvf")).code, 3);
  std::ofstream(path("junk.smvf")) << "not a volume";
  EXPECT_EQ(run("evaluate --a " + path("junk.smvf") + " --b " + path("junk.smvf")).code, 3);
}

TEST_F(Cli, GenLabelsHistogramAndDeterminism) {
  const CliResult r = run("gen-labels --seed 7 --dims 32,32 --labels 5 --out " + path("a.smvf"));
  ASSERT_EQ(r.code, 0);
  ASSERT_EQ(run("gen-labels --seed 7 --dims 32,32 --labels 5 --out " + path("b.smvf")).code, 0);
  EXPECT_EQ(slurp(path("a.smvf")), slurp(path("b.smvf")));
  const LabelMap s = load_labels(path("a.smvf"));
  EXPECT_EQ(s.dims(), (Dims{32, 32}));
  std::istringstream lines(r.out);
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "label,count");
  std::size_t total = 0;
  while (std::getline(lines, line)) total += std::stoul(line.substr(line.find(',') + 1));
  EXPECT_EQ(total, 32u * 32u);
}

TEST_F(Cli, GenPairWritesEverything) {
  ASSERT_EQ(run("gen-pair --seed 3 --dims 32,32 --labels 6 --supervised --out-dir " + path("pair")).code, 0);
  for (const char* f : {"s_m", "s_f", "m", "f", "v_m", "v_f", "u_net"})
    EXPECT_TRUE(fs::exists(path("pair/") + f + ".smvf")) << f;
  const LabelMap sm = load_labels(path("pair/s_m.smvf"));
  const LabelMap sf = load_labels(path("pair/s_f.smvf"));
  const VectorField u = load_vector(path("pair/u_net.smvf"));
  EXPECT_EQ(warp_nearest(sm, u, 0), sf);
  ASSERT_EQ(run("gen-labels --seed 1 --dims 32,32 --labels 4 --out " + path("src.smvf")).code, 0);
  ASSERT_EQ(run("gen-pair --seed 4 --dims 32,32 --source " + path("src.smvf") + " " + path("src.smvf") +
                " --out-dir " + path("pair2"))
                .code,
            0);
  EXPECT_FALSE(fs::exists(path("pair2/u_net.smvf")));
}

TEST_F(Cli, SynthImageRange) {
  ASSERT_EQ(run("gen-labels --seed 2 --dims 32,32 --labels 4 --out " + path("s.smvf")).code, 0);
  const CliResult r = run("synth-image --seed 5 --labels-in " + path("s.smvf") + " --lut-sigma 64 --out " + path("i.smvf"));
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("gamma,"), std::string::npos);
  for (const auto& held = load_scalar(path("i.smvf")); float v : held.data()) {
    ASSERT_GE(v, 0.0f);
    ASSERT_LE(v, 1.0f);
  }
}

TEST_F(Cli, TrainRegisterEvaluate) {
  ASSERT_EQ(run("train --seed 1 --iterations 3 --dims 32,32 --labels 4 --width 4 --levels 2 --out " + path("w.smwt") +
                " --trace " + path("t.csv"))
                .code,
            0);
  const NetState state = load_weights(path("w.smwt"));
  EXPECT_EQ(state.config.width, 4);
  EXPECT_EQ(state.train.iteration, 3);
  std::istringstream trace(slurp(path("t.csv")));
  std::string line;
  int rows = 0;
  while (std::getline(trace, line)) ++rows;
  EXPECT_EQ(rows, 4);

  ASSERT_EQ(run("gen-pair --seed 9 --dims 32,32 --labels 4 --out-dir " + path("p")).code, 0);
  ASSERT_EQ(run("register --weights " + path("w.smwt") + " --moving " + path("p/m.smvf") + " --fixed " +
                path("p/f.smvf") + " --out " + path("u.smvf") + " --moved-image " + path("mm.smvf") +
                " --moving-labels " + path("p/s_m.smvf") + " --moved-labels " + path("ml.smvf"))
                .code,
            0);
  EXPECT_EQ(load_vector(path("u.smvf")).dims(), (Dims{32, 32}));
  EXPECT_EQ(load_labels(path("ml.smvf")).dims(), (Dims{32, 32}));

  const CliResult e = run("evaluate --a " + path("p/s_m.smvf") + " --b " + path("p/s_m.smvf") + " --csv " + path("r.csv") +
                    " --json " + path("r.json"));
  ASSERT_EQ(e.code, 0);
  EXPECT_NE(e.out.find("mean_dice,1\n"), std::string::npos);
  EXPECT_EQ(slurp(path("r.csv")).rfind("label,dice,msd_mm,absent_flag\n", 0), 0u);
  EXPECT_TRUE(fs::exists(path("r.json")));
}

TEST_F(Cli, RegisterWithZeroNetIsIdentity) {
  UNetConfig c;
  c.levels = 2;
  c.width = 4;
  NetState s = init_state(c, RngStream(1));
  for (auto& w : s.weights) std::fill(w.values.begin(), w.values.end(), 0.0f);
  save_weights(path("zero.smwt"), s);
  ASSERT_EQ(run("gen-pair --seed 2 --dims 32,32 --labels 4 --out-dir " + path("p")).code, 0);
  ASSERT_EQ(run("register --weights " + path("zero.smwt") + " --moving " + path("p/m.smvf") + " --fixed " +
                path("p/f.smvf") + " --out " + path("u.smvf") + " --moved-image " + path("mm.smvf"))
                .code,
            0);
  for (const auto& held = load_vector(path("u.smvf")); float v : held.data()) ASSERT_EQ(v, 0.0f);
  EXPECT_EQ(load_scalar(path("mm.smvf")), load_scalar(path("p/m.smvf")));
}

TEST_F(Cli, JacobianOfZeroField) {
  save_volume(path("z.smvf"), VectorField(GridMeta({8, 8})), VolumeKind::vector);
  const CliResult r = run("jacobian --disp " + path("z.smvf") + " --out " + path("det.smvf"));
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "folding_fraction,0\nmean_det,1\n");
  for (const auto& held = load_scalar(path("det.smvf")); float v : held.data()) EXPECT_EQ(v, 1.0f);
}

TEST_F(Cli, ExportPng) {
  ASSERT_EQ(run("gen-labels --seed 2 --dims 16,24 --labels 4 --out " + path("s.smvf")).code, 0);
  ASSERT_EQ(run("export-png --in " + path("s.smvf") + " --out " + path("s.png")).code, 0);
  EXPECT_EQ(slurp(path("s.png")).substr(0, 8), std::string("\x89PNG\r\n\x1a\n", 8));
  EXPECT_EQ(run("export-png --in " + path("s.smvf") + " --channel 3 --out " + path("t.png")).code, 2);
}
