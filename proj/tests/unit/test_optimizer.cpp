#include <gtest/gtest.h>

#include <filesystem>

#include "hmcloak/optimizer.hpp"

using namespace hmcloak;
namespace fs = std::filesystem;

namespace {

Scenario small_scenario(double w, int iters) {
    Scenario s;
    s.w = w;
    s.max_iter = iters;
    s.d_schedule.steps = {{1, 0.2}, {4, 0.01}};
    return s;
}

MeshSettings small_mesh() {
    MeshSettings m;
    m.macro = {2, 0, 0, 0};
    m.cell_divisions = 16;
    return m;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("hmcloak_test_" + name);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST(Scenario, Validation) {
    Scenario s;
    EXPECT_NO_THROW(s.validate());
    s.max_iter = 0;
    EXPECT_THROW(s.validate(), std::invalid_argument);
    s = {};
    s.w = 1.2;
    EXPECT_THROW(s.validate(), std::invalid_argument);
    s = {};
    s.d_schedule.steps = {{1, 0.2}, {10, 1.5}};
    EXPECT_THROW(s.validate(), std::invalid_argument);
    s = {};
    s.d_schedule.steps = {{2, 0.2}};
    EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(DSchedule, PiecewiseConstant) {
    DSchedule d;
    EXPECT_EQ(d.at(1), 0.2);
    EXPECT_EQ(d.at(70), 0.2);
    EXPECT_EQ(d.at(71), 0.01);
    EXPECT_EQ(d.at(150), 0.01);
    EXPECT_EQ(d.last_switch(), 71);
}

TEST(Optimizer, SingleIterationReturnsInitialObjectives) {
    const Optimizer opt(small_scenario(1.0, 1), small_mesh());
    const DesignState s = opt.run();
    ASSERT_EQ(s.history.size(), 1u);
    EXPECT_EQ(s.iteration, 1);
    EXPECT_TRUE(s.finished);
    EXPECT_EQ(s.history[0].J1_ratio, 1.0);
    EXPECT_EQ(s.counters.adjoint_J1_solves, 0);
    EXPECT_EQ(s.counters.levelset_updates, 0);
    EXPECT_EQ(s.tensors.size(), 8u);
}

TEST(Optimizer, HistoryLengthAndCounters) {
    const Optimizer opt(small_scenario(1.0, 5), small_mesh());
    const DesignState s = opt.run();
    EXPECT_EQ(static_cast<int>(s.history.size()), s.iteration);
    EXPECT_EQ(s.counters.adjoint_J2_solves, 0);
    EXPECT_EQ(s.counters.adjoint_J1_solves, 4);
    EXPECT_EQ(s.counters.cell_solves, 5 * 16);
    EXPECT_EQ(s.history[3].d, 0.01);
    EXPECT_EQ(s.history[2].d, 0.2);

    const Optimizer opt0(small_scenario(0.0, 3), small_mesh());
    const DesignState s0 = opt0.run();
    EXPECT_EQ(s0.counters.adjoint_J1_solves, 0);
    EXPECT_EQ(s0.counters.adjoint_J2_solves, 2);
}

TEST(Optimizer, DeterministicHistory) {
    const Optimizer a(small_scenario(0.5, 6), small_mesh());
    RunOptions threaded;
    threaded.threads = 3;
    const Optimizer b(small_scenario(0.5, 6), small_mesh(), threaded);
    const DesignState sa = a.run(), sb = b.run();
    ASSERT_EQ(sa.history.size(), sb.history.size());
    for (std::size_t i = 0; i < sa.history.size(); ++i) {
        EXPECT_EQ(sa.history[i].J1, sb.history[i].J1);
        EXPECT_EQ(sa.history[i].J2, sb.history[i].J2);
    }
    EXPECT_EQ(sa.phis[2].phi, sb.phis[2].phi);
}

TEST(Optimizer, CheckpointResumeIsExact) {
    const fs::path dir = scratch("ckpt");
    RunOptions o;
    o.checkpoint_every = 3;
    o.checkpoint_dir = dir;
    const Optimizer full(small_scenario(1.0, 7), small_mesh(), o);
    const DesignState ref = full.run();
    ASSERT_TRUE(fs::exists(dir / "iter_0003" / "state.json"));
    ASSERT_TRUE(fs::exists(dir / "iter_0006" / "state.json"));

    const Optimizer again(small_scenario(1.0, 7), small_mesh());
    const DesignState mid = resume(dir / "iter_0003", again.cell_mesh());
    EXPECT_EQ(mid.iteration, 3);
    const DesignState cont = again.run(mid);
    ASSERT_EQ(cont.history.size(), ref.history.size());
    for (std::size_t i = 0; i < ref.history.size(); ++i) {
        EXPECT_EQ(cont.history[i].J1, ref.history[i].J1) << "iteration " << i + 1;
        EXPECT_EQ(cont.history[i].J, ref.history[i].J);
    }
    for (std::size_t l = 0; l < ref.phis.size(); ++l) EXPECT_EQ(cont.phis[l].phi, ref.phis[l].phi);
    fs::remove_all(dir);
}

TEST(Optimizer, ResumeAcrossSwitchUsesScheduleAndFinishedIsNoop) {
    const fs::path dir = scratch("ckpt_switch");
    RunOptions o;
    o.checkpoint_every = 3;
    o.checkpoint_dir = dir;
    const Optimizer opt(small_scenario(1.0, 6), small_mesh(), o);
    const DesignState ref = opt.run();
    const Optimizer plain(small_scenario(1.0, 6), small_mesh());
    const DesignState done = plain.run(resume(dir / "iter_0003", plain.cell_mesh()));
    EXPECT_EQ(done.history[3].d, 0.01);
    EXPECT_EQ(done.history[3].J1, ref.history[3].J1);
    EXPECT_EQ(done.iteration, 6);
    EXPECT_TRUE(done.finished);

    checkpoint(done, plain.cell_mesh(), dir / "final");
    const DesignState again = plain.run(resume(dir / "final", plain.cell_mesh()));
    EXPECT_EQ(again.iteration, 6);
    EXPECT_EQ(again.history.size(), done.history.size());
    EXPECT_EQ(again.counters.state_solves, done.counters.state_solves);
    fs::remove_all(dir);
}

TEST(Optimizer, CorruptCheckpointRejected) {
    const fs::path dir = scratch("ckpt_bad");
    const Optimizer opt(small_scenario(1.0, 2), small_mesh());
    const DesignState s = opt.run();
    checkpoint(s, opt.cell_mesh(), dir);
    {
        std::ofstream out(dir / "state.json");
        out << "{\"iteration\": 2";
    }
    EXPECT_THROW((void)resume(dir, opt.cell_mesh()), std::runtime_error);
    fs::remove_all(dir);
    EXPECT_THROW((void)resume(dir, opt.cell_mesh()), std::runtime_error);
}

TEST(Optimizer, FixedWidthRunDescendsMonotonically) {
    Scenario s = small_scenario(1.0, 40);
    s.d_schedule.steps = {{1, 0.2}};
    MeshSettings m = small_mesh();
    m.cell_divisions = 24;
    const DesignState st = Optimizer(s, m).run();
    for (std::size_t i = 1; i < st.history.size(); ++i) EXPECT_LT(st.history[i].J1, st.history[i - 1].J1) << i;
    EXPECT_LT(st.history.back().J1, 0.95 * st.history.front().J1);
}
