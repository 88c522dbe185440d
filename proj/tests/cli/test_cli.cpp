#include <gtest/gtest.h>

#include <sys/wait.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "hmcloak/io.hpp"
#include "hmcloak/levelset.hpp"

using namespace hmcloak;
namespace fs = std::filesystem;

namespace {

const fs::path kBin = HMCLOAK_BIN;

struct Result {
    int code = -1;
    std::string out;
};

Result run(const std::string& args) {
    const fs::path log = fs::temp_directory_path() / "hmcloak_cli_test.log";
    const std::string cmd = "\"" + kBin.string() + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    r.out = ss.str();
    return r;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("hmcloak_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write(const fs::path& p, const std::string& s) {
    std::ofstream out(p);
    out << s;
}

const std::string kTiny = R"({
  "scenario": {
    "geometry": {"Lx": 5.0, "Ly": 8.0, "R_D": 1.35, "R_c": 0.4},
    "materials": {"k_cell_a": 386.0, "k_cell_b": 0.15, "K_E": 67.0, "K_obstacle": 386.0},
    "bc": {"T_low": 0.0, "T_high": 1.0},
    "w": 1.0,
    "max_iter": 3,
    "d_schedule": [[1, 0.2], [2, 0.01]]
  },
  "mesh": {"cell_divisions": 16, "sector_divisions": 1},
  "checkpoint_every": 2
})";

}  // namespace

TEST(Cli, HelpAndUnknownSubcommand) {
    EXPECT_EQ(run("--help").code, 0);
    EXPECT_EQ(run("frobnicate").code, 2);
    EXPECT_EQ(run("").code, 2);
}

TEST(Cli, ConfigErrorsExitTwo) {
    const fs::path dir = scratch("cfg");
    write(dir / "bad.json", "{\"scenario\": {\"w\": 1.0,}}");
    Result r = run("optimize --config " + (dir / "bad.json").string() + " --out " + (dir / "o").string());
    EXPECT_EQ(r.code, 2) << r.out;
    EXPECT_NE(r.out.find("bad.json:1"), std::string::npos) << r.out;

    std::string unknown = kTiny;
    unknown.replace(unknown.find("\"w\": 1.0"), 8, "\"w\": 1.0, \"dt_max\": 3");
    write(dir / "unknown.json", unknown);
    r = run("optimize --config " + (dir / "unknown.json").string() + " --out " + (dir / "o").string());
    EXPECT_EQ(r.code, 2) << r.out;
    EXPECT_NE(r.out.find("scenario.dt_max"), std::string::npos) << r.out;

    EXPECT_EQ(run("optimize --config " + (dir / "missing.json").string()).code, 2);
    EXPECT_EQ(run("validate --run " + (dir / "no_such_run").string()).code, 2);
    fs::remove_all(dir);
}

TEST(Cli, HomogenizeReportsTensor) {
    const fs::path dir = scratch("hom");
    const TriMesh m = build_cell_mesh({1.0, 16});
    write_level_set_csv(dir / "phi.csv", m, initialize(UniformPhase{1}, m));
    Result r = run("homogenize --phi " + (dir / "phi.csv").string() + " --k-a 386 --k-b 0.15");
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("386"), std::string::npos) << r.out;
    r = run("homogenize --phi " + (dir / "phi.csv").string());
    EXPECT_EQ(r.code, 2) << r.out;
    fs::remove_all(dir);
}

TEST(Cli, OptimizeResumeValidate) {
    const fs::path dir = scratch("opt");
    write(dir / "tiny.json", kTiny);
    const fs::path out = dir / "run";
    Result r = run("optimize --config " + (dir / "tiny.json").string() + " --out " + out.string() + " --threads 2");
    ASSERT_EQ(r.code, 0) << r.out;
    for (const char* f : {"history.csv", "tensors.csv", "macro.vtk", "cell_1.vtk", "config.json", "final/state.json",
                          "checkpoints/iter_0002/state.json"})
        EXPECT_TRUE(fs::exists(out / f)) << f;
    const auto full = read_history_csv(out / "history.csv");
    ASSERT_EQ(full.size(), 3u);
    EXPECT_EQ(read_tensor_csv(out / "tensors.csv").size(), 8u);

    const fs::path out2 = dir / "resumed";
    r = run("optimize --config " + (dir / "tiny.json").string() + " --out " + out2.string() + " --resume " +
            (out / "checkpoints/iter_0002").string());
    ASSERT_EQ(r.code, 0) << r.out;
    const auto resumed = read_history_csv(out2 / "history.csv");
    ASSERT_EQ(resumed.size(), full.size());
    for (std::size_t i = 0; i < full.size(); ++i) EXPECT_EQ(resumed[i].J1, full[i].J1) << i;

    r = run("validate --run " + out.string() + " --epsilon0 0.5");
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_TRUE(fs::exists(out / "validation/validation.csv"));
    fs::remove_all(dir);
}
