#include <gtest/gtest.h>

#include "hmcloak/validation.hpp"

using namespace hmcloak;

namespace {

TilingSpec make_spec(const InitPattern& init, double eps = 1.0 / 3.0) {
    TilingSpec s;
    s.epsilon0 = eps;
    s.cell_mesh = build_cell_mesh({1.0, 16});
    for (int l = 1; l <= 8; ++l) s.phis.push_back(initialize(init, s.cell_mesh, l, 0.01));
    return s;
}

}  // namespace

TEST(Tiling, UniformCopperFillsDesignZone) {
    const TilingSpec s = make_spec(UniformPhase{1});
    const TriMesh fine = tiled_mesh(s.geometry, s.epsilon0);
    const auto k = tile_conductivity(s, fine);
    for (int e = 0; e < fine.num_elements(); ++e) {
        const Zone z = fine.element_region[static_cast<std::size_t>(e)].zone;
        if (z == Zone::design) {
            EXPECT_EQ(k[static_cast<std::size_t>(e)], 386.0);
        }
        if (z == Zone::exterior) {
            EXPECT_EQ(k[static_cast<std::size_t>(e)], 67.0);
        }
        if (z == Zone::core) {
            EXPECT_EQ(k[static_cast<std::size_t>(e)], 386.0);
        }
    }
}

TEST(Tiling, ConductivityWithinPhaseRange) {
    const TilingSpec s = make_spec(PdmsDisk{});
    const TriMesh fine = tiled_mesh(s.geometry, s.epsilon0);
    const auto k = tile_conductivity(s, fine);
    int pdms = 0;
    for (int e = 0; e < fine.num_elements(); ++e) {
        if (fine.element_region[static_cast<std::size_t>(e)].zone != Zone::design) continue;
        EXPECT_GE(k[static_cast<std::size_t>(e)], 0.15);
        EXPECT_LE(k[static_cast<std::size_t>(e)], 386.0);
        pdms += k[static_cast<std::size_t>(e)] < 1.0;
    }
    EXPECT_GT(pdms, 0);
}

TEST(Tiling, SamplingIsPeriodicInEpsilon) {
    const TilingSpec s = make_spec(PdmsDisk{});
    const double eps = s.epsilon0;
    for (Point2 x : {Point2{0.71, 0.33}, Point2{-0.5, 1.1}, Point2{0.05, 0.9}}) {
        const double a = sample_characteristic(s.cell_mesh, s.phis[0].phi, x, eps, s.d);
        const double b = sample_characteristic(s.cell_mesh, s.phis[0].phi, {x.x + eps, x.y}, eps, s.d);
        const double c = sample_characteristic(s.cell_mesh, s.phis[0].phi, {x.x, x.y - 2 * eps}, eps, s.d);
        EXPECT_NEAR(a, b, 1e-9);
        EXPECT_NEAR(a, c, 1e-9);
    }
}

TEST(Tiling, AllSteelReproducesReference) {
    TilingSpec s = make_spec(UniformPhase{1});
    s.materials.k_cell_a = 67.0;
    s.materials.k_cell_b = 67.0;
    s.materials.K_obstacle = 67.0;
    const TriMesh fine = tiled_mesh(s.geometry, s.epsilon0);
    const TiledResult r = evaluate_tiled(s, fine);
    EXPECT_LT(r.J1, 1e-20);
}

TEST(Tiling, UnderResolvedMeshRejected) {
    const TilingSpec s = make_spec(PdmsDisk{}, 1.0 / 9.0);
    const TriMesh coarse = build_macro_mesh(s.geometry, {});
    EXPECT_THROW((void)tile_conductivity(s, coarse), std::invalid_argument);
    EXPECT_THROW((void)tiled_mesh(s.geometry, 0.1, 4), std::invalid_argument);
}

TEST(Obstacle, HalfDiskRotation) {
    ObstacleSpec o;
    const double Rc = 0.4;
    EXPECT_TRUE(o.contains({0.1, 0.01}, Rc));
    EXPECT_FALSE(o.contains({-0.1, 0.01}, Rc));
    o.psi_deg = 180.0;
    EXPECT_TRUE(o.contains({-0.1, 0.01}, Rc));
    o.psi_deg = 90.0;
    EXPECT_TRUE(o.contains({0.0, 0.1}, Rc));
    EXPECT_FALSE(o.contains({0.0, 0.2}, Rc));
    o.radius_factor = 1.5;
    EXPECT_THROW(o.validate(), std::invalid_argument);
}

TEST(Sweep, EmptyDesignListGivesEmptyTable) {
    const TilingSpec s = make_spec(PdmsDisk{});
    const TiledEvaluator ev(tiled_mesh(s.geometry, s.epsilon0), 67.0, s.bc, 8);
    EXPECT_TRUE(robustness_sweep(ev, {}, {0.0, 45.0}).empty());
    const auto rows = robustness_sweep(ev, {{"init", s, 1.0}}, {0.0, 90.0}, {}, 2);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[1].psi_deg, 90.0);
    EXPECT_GT(rows[0].J1, 0.0);
}
