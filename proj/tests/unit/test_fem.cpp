#include <gtest/gtest.h>

#include "hmcloak/fem.hpp"
#include "hmcloak/geometry.hpp"
#include "hmcloak/macro_solver.hpp"

using namespace hmcloak;

TEST(Fem, MassIntegratesArea) {
    const TriMesh m = build_cell_mesh({1.0, 16});
    const SparseMatrix M = assemble_mass(m);
    const Vector one = Vector::Ones(m.num_nodes());
    EXPECT_NEAR(one.dot(M * one), 1.0, 1e-13);
}

TEST(Fem, LaplacianAnnihilatesConstants) {
    const TriMesh m = build_macro_mesh({}, {});
    const SparseMatrix A = assemble_laplacian(m);
    EXPECT_LT((A * Vector::Ones(m.num_nodes())).cwiseAbs().maxCoeff(), 1e-11);
}

// Uniform conductivity between two Dirichlet faces: the exact solution is
// linear in x1 and P1 elements reproduce it to round-off.
TEST(Fem, PatchTestLinearField) {
    const MacroGeometry g;
    const TriMesh m = build_macro_mesh(g, {});
    const BoundaryData bc{0.0, 1.0};
    const ScalarField T = reference_steel(m, 67.0, bc, g.n_sectors);
    double err = 0.0;
    for (int i = 0; i < m.num_nodes(); ++i) {
        const double exact = (m.nodes[static_cast<std::size_t>(i)].x + 0.5 * g.Lx) / g.Lx;
        err = std::max(err, std::abs(T.values[i] - exact));
    }
    EXPECT_LT(err, 1e-10);
}

// Isotropic but piecewise conductivity with a linear field is not a patch
// test; a tensor K = diag(k, k') with gradient along x1 still is.
TEST(Fem, AnisotropicTensorLinearField) {
    const MacroGeometry g;
    const TriMesh m = build_macro_mesh(g, {});
    MacroMaterialMap mm;
    mm.K_E = 5.0;
    mm.K_obstacle = 5.0;
    mm.sector_tensors.assign(8, Tensor2{5.0, 0.0, 70.0});
    const ScalarField T = solve_state(m, mm, {0.0, 1.0});
    double err = 0.0;
    for (int i = 0; i < m.num_nodes(); ++i)
        err = std::max(err, std::abs(T.values[i] - (m.nodes[static_cast<std::size_t>(i)].x + 2.5) / 5.0));
    EXPECT_LT(err, 1e-10);
}

TEST(Fem, HeatFlowBalance) {
    const MacroGeometry g;
    const TriMesh m = build_macro_mesh(g, {});
    MacroMaterialMap mm = MacroMaterialMap::uniform(8, 0.15, 67.0, 386.0);
    const auto K = mm.element_tensors(m);
    const MacroState s(m, K, {0.0, 1.0});
    const double qa = s.boundary_heat_flow(m, BoundaryTag::gamma_a);
    const double qb = s.boundary_heat_flow(m, BoundaryTag::gamma_b);
    EXPECT_NEAR(qa + qb, 0.0, 1e-10 * std::abs(qb));
    EXPECT_GT(qb, 0.0);
}

TEST(Fem, SolutionBoundedByDirichletData) {
    const TriMesh m = build_macro_mesh({}, {});
    const ScalarField T = solve_state(m, MacroMaterialMap::uniform(8, 0.15, 67.0, 386.0), {0.0, 1.0});
    EXPECT_GE(T.values.minCoeff(), -1e-12);
    EXPECT_LE(T.values.maxCoeff(), 1.0 + 1e-12);
}

TEST(Fem, SingularSystemReported) {
    const TriMesh c = build_cell_mesh({1.0, 16});
    const std::vector<double> k(static_cast<std::size_t>(c.num_elements()), 1.0);
    SparseSystem sys = assemble_diffusion(c, std::span<const double>(k));
    EXPECT_THROW((void)solve(sys), SolverError);
}
