#include <gtest/gtest.h>

#include <map>

#include "hmcloak/homogenization.hpp"
#include "hmcloak/levelset.hpp"
#include "hmcloak/macro_solver.hpp"
#include "hmcloak/objectives.hpp"
#include "hmcloak/sensitivity.hpp"

using namespace hmcloak;

TEST(Topological, Prefactors) {
    // copper host with a PDMS inclusion, and the reverse
    EXPECT_NEAR(topological_prefactor(386.0, 0.15), -771.40, 0.01);
    EXPECT_NEAR(topological_prefactor(0.15, 386.0), 0.29977, 1e-5);
    EXPECT_EQ(topological_prefactor(5.0, 5.0), 0.0);
    const CellMaterialField mat{{}, 386.0, 0.15};
    EXPECT_DOUBLE_EQ(insertion_prefactor(mat, Insertion::b_into_a), topological_prefactor(386.0, 0.15));
    EXPECT_DOUBLE_EQ(insertion_prefactor(mat, Insertion::a_into_b), topological_prefactor(0.15, 386.0));
}

// A uniform cell has zero correctors so D_T K*_ij = prefactor * delta_ij.
TEST(Topological, UniformCellDerivative) {
    const TriMesh c = build_cell_mesh({1.0, 16});
    const CellMaterialField mat{std::vector<double>(static_cast<std::size_t>(c.num_elements()), 1.0), 386.0, 0.15};
    const CellResponse r = homogenize(c, mat);
    const auto D = topological_derivative_tensor(c, mat, r.w1, r.w2, Insertion::b_into_a);
    for (const auto& t : D) {
        EXPECT_NEAR(t.xx, topological_prefactor(386.0, 0.15), 1e-8);
        EXPECT_NEAR(t.yy, topological_prefactor(386.0, 0.15), 1e-8);
        EXPECT_NEAR(t.xy, 0.0, 1e-8);
    }
}

namespace {

struct Fixture {
    MacroGeometry g;
    TriMesh mesh = build_macro_mesh(g, {2, 0, 0, 0});
    BoundaryData bc{0.0, 1.0};
    MacroMaterialMap mm;
    Fixture() {
        mm.K_E = 67.0;
        mm.K_obstacle = 386.0;
        for (int l = 0; l < 8; ++l) mm.sector_tensors.push_back({20.0 + 10.0 * l, 3.0 * (l % 3) - 2.0, 150.0 - 7.0 * l});
    }
    std::pair<double, double> objectives(const MacroMaterialMap& m, const ScalarField& Ts) const {
        const ScalarField T = solve_state(mesh, m, bc);
        const ObjectiveEvaluator ev(mesh);
        return {ev.J1(T.values, Ts.values), ev.J2(T.values)};
    }
};

}  // namespace

TEST(Adjoint, MatchesFiniteDifferences) {
    Fixture f;
    const ScalarField Ts = reference_steel(f.mesh, 67.0, f.bc, 8);
    const auto K = f.mm.element_tensors(f.mesh);
    const MacroState st(f.mesh, K, f.bc);
    const ObjectiveEvaluator ev(f.mesh);
    const ScalarField v1 = st.adjoint(ev.J1_gradient(st.temperature().values, Ts.values));
    const ScalarField v2 = st.adjoint(ev.J2_gradient(st.temperature().values));
    for (int l : {0, 3, 6}) {
        const TensorSensitivity s1 = tensor_sensitivity(st.temperature(), v1, f.mesh, l);
        const TensorSensitivity s2 = tensor_sensitivity(st.temperature(), v2, f.mesh, l);
        const double h = 1e-4 * f.mm.sector_tensors[static_cast<std::size_t>(l)].norm();
        for (int ij = 0; ij < 3; ++ij) {
            Tensor2 dK{ij == 0 ? 1.0 : 0.0, ij == 1 ? 1.0 : 0.0, ij == 2 ? 1.0 : 0.0};
            MacroMaterialMap p = f.mm, m = f.mm;
            auto& tp = p.sector_tensors[static_cast<std::size_t>(l)];
            auto& tm = m.sector_tensors[static_cast<std::size_t>(l)];
            tp = {tp.xx + h * dK.xx, tp.xy + h * dK.xy, tp.yy + h * dK.yy};
            tm = {tm.xx - h * dK.xx, tm.xy - h * dK.xy, tm.yy - h * dK.yy};
            const auto [J1p, J2p] = f.objectives(p, Ts);
            const auto [J1m, J2m] = f.objectives(m, Ts);
            const double fd1 = (J1p - J1m) / (2 * h), fd2 = (J2p - J2m) / (2 * h);
            EXPECT_NEAR(s1.contract(dK), fd1, 1e-3 * std::abs(fd1) + 1e-14) << "J1 sector " << l << " entry " << ij;
            EXPECT_NEAR(s2.contract(dK), fd2, 1e-3 * std::abs(fd2) + 1e-14) << "J2 sector " << l << " entry " << ij;
        }
    }
}

TEST(Combined, NormalizationSplitsWeight) {
    const TriMesh c = build_cell_mesh({1.0, 24});
    const LevelSetField f = initialize(PdmsDisk{}, c, 1, 0.2);
    const CellMaterialField mat{element_characteristic(c, f.phi, 0.2), 386.0, 0.15};
    const CellResponse r = homogenize(c, mat);
    CellSensitivityInputs in;
    in.dJ1 = {1e-3, 2e-4, -5e-4};
    in.dJ2 = {-3e-7, 1e-7, 4e-7};
    in.DT_K_a_into_b = element_topological_derivative(c, mat, r.w1, r.w2, Insertion::a_into_b);
    in.DT_K_b_into_a = element_topological_derivative(c, mat, r.w1, r.w2, Insertion::b_into_a);
    const auto chi_n = nodal_characteristic(f.phi, 0.2);
    const Vector chi = Eigen::Map<const Vector>(chi_n.data(), static_cast<Eigen::Index>(chi_n.size()));
    const Vector wts = periodic_weights(c);
    EXPECT_NEAR(wts.sum(), 1.0, 1e-12);
    for (double w : {0.0, 0.3, 0.5, 1.0}) {
        const CombinedSensitivity cs = combined_sensitivity(c, in, mat.chi, chi, w, wts);
        const Vector p1 = phase_selected_sensitivity(c, in.dJ1, in, mat.chi, chi);
        const Vector p2 = phase_selected_sensitivity(c, in.dJ2, in, mat.chi, chi);
        if (w > 0) {
            EXPECT_NEAR(cs.C1 * wts.dot(p1.cwiseAbs()), w, 1e-12);
        }
        if (w < 1) {
            EXPECT_NEAR(cs.C2 * wts.dot(p2.cwiseAbs()), 1.0 - w, 1e-12);
        }
        const Vector expect = cs.C1 * p1 + cs.C2 * p2;
        EXPECT_LT((cs.J_prime - expect).cwiseAbs().maxCoeff(), 1e-12 * expect.cwiseAbs().maxCoeff());
        for (const auto& [m, s] : c.periodic_pairs) EXPECT_EQ(cs.J_prime[m], cs.J_prime[s]);
    }
}

TEST(Combined, VanishingTermIsDropped) {
    const TriMesh c = build_cell_mesh({1.0, 16});
    const CellMaterialField mat{std::vector<double>(static_cast<std::size_t>(c.num_elements()), 1.0), 386.0, 0.15};
    const CellResponse r = homogenize(c, mat);
    CellSensitivityInputs in;
    in.dJ1 = {1.0, 0.0, 1.0};
    in.DT_K_a_into_b = element_topological_derivative(c, mat, r.w1, r.w2, Insertion::a_into_b);
    in.DT_K_b_into_a = element_topological_derivative(c, mat, r.w1, r.w2, Insertion::b_into_a);
    const Vector chi = Vector::Ones(c.num_nodes());
    const CombinedSensitivity cs = combined_sensitivity(c, in, mat.chi, chi, 0.5, periodic_weights(c));
    EXPECT_FALSE(cs.term1_dropped);
    EXPECT_TRUE(cs.term2_dropped);
    EXPECT_TRUE(cs.J_prime.allFinite());
}

// Phase selection: in an all-copper cell only the PDMS insertion is seen.
TEST(Combined, PhaseSelection) {
    const TriMesh c = build_cell_mesh({1.0, 16});
    const CellMaterialField mat{std::vector<double>(static_cast<std::size_t>(c.num_elements()), 1.0), 386.0, 0.15};
    const CellResponse r = homogenize(c, mat);
    CellSensitivityInputs in;
    in.dJ1 = {1.0, 0.0, 0.0};
    in.DT_K_a_into_b = element_topological_derivative(c, mat, r.w1, r.w2, Insertion::a_into_b);
    in.DT_K_b_into_a = element_topological_derivative(c, mat, r.w1, r.w2, Insertion::b_into_a);
    const Vector p = phase_selected_sensitivity(c, in.dJ1, in, mat.chi, Vector::Ones(c.num_nodes()));
    EXPECT_NEAR(p.maxCoeff(), -topological_prefactor(386.0, 0.15), 1e-8);
    EXPECT_NEAR(p.minCoeff(), -topological_prefactor(386.0, 0.15), 1e-8);
}

TEST(Adjoint, ZeroAndLinearInAdjoint) {
    Fixture f;
    const ScalarField Ts = reference_steel(f.mesh, 67.0, f.bc, 8);
    const MacroState st(f.mesh, f.mm.element_tensors(f.mesh), f.bc);
    const ObjectiveEvaluator ev(f.mesh);
    const ScalarField zero{Vector::Zero(f.mesh.num_nodes()), {}};
    const TensorSensitivity s0 = tensor_sensitivity(st.temperature(), zero, f.mesh, 2);
    EXPECT_EQ(s0.s11, 0.0);
    EXPECT_EQ(s0.s12, 0.0);
    EXPECT_EQ(s0.s22, 0.0);
    const Vector load = ev.J1_gradient(st.temperature().values, Ts.values);
    const TensorSensitivity a = tensor_sensitivity(st.temperature(), st.adjoint(load), f.mesh, 2);
    const TensorSensitivity b = tensor_sensitivity(st.temperature(), st.adjoint(-3.5 * load), f.mesh, 2);
    EXPECT_NEAR(b.s11, -3.5 * a.s11, 1e-9 * std::abs(a.s11));
    EXPECT_NEAR(b.s12, -3.5 * a.s12, 1e-9 * std::abs(a.s11));
    EXPECT_NEAR(b.s22, -3.5 * a.s22, 1e-9 * std::abs(a.s22));
}

// First-order prediction of a small finite change in every sector tensor.
TEST(Adjoint, ChainRulePredictsSmallChange) {
    Fixture f;
    const ScalarField Ts = reference_steel(f.mesh, 67.0, f.bc, 8);
    const MacroState st(f.mesh, f.mm.element_tensors(f.mesh), f.bc);
    const ObjectiveEvaluator ev(f.mesh);
    const ScalarField v1 = st.adjoint(ev.J1_gradient(st.temperature().values, Ts.values));
    const ScalarField v2 = st.adjoint(ev.J2_gradient(st.temperature().values));
    const auto [J1, J2] = f.objectives(f.mm, Ts);
    MacroMaterialMap p = f.mm;
    double pred1 = 0.0, pred2 = 0.0;
    for (int l = 0; l < 8; ++l) {
        Tensor2& t = p.sector_tensors[static_cast<std::size_t>(l)];
        const double s = 1e-3 * t.norm();
        const Tensor2 dK{s * std::cos(1.3 * l), s * 0.5 * std::sin(0.7 * l), -s * std::sin(2.1 * l + 0.4)};
        t = {t.xx + dK.xx, t.xy + dK.xy, t.yy + dK.yy};
        pred1 += tensor_sensitivity(st.temperature(), v1, f.mesh, l).contract(dK);
        pred2 += tensor_sensitivity(st.temperature(), v2, f.mesh, l).contract(dK);
    }
    const auto [J1p, J2p] = f.objectives(p, Ts);
    EXPECT_NEAR(pred1, J1p - J1, 0.05 * std::abs(J1p - J1));
    EXPECT_NEAR(pred2, J2p - J2, 0.05 * std::abs(J2p - J2));
}

// Uniform PDMS cell with dJ/dK = I: only copper insertion counts, with a
// positive prefactor, so the normalized J' is the constant 1.
TEST(Combined, SignOnHomogeneousCell) {
    const TriMesh c = build_cell_mesh({1.0, 16});
    const CellMaterialField mat{std::vector<double>(static_cast<std::size_t>(c.num_elements()), 0.0), 386.0, 0.15};
    const CellResponse r = homogenize(c, mat);
    CellSensitivityInputs in;
    in.dJ1 = {1.0, 0.0, 1.0};
    in.DT_K_a_into_b = element_topological_derivative(c, mat, r.w1, r.w2, Insertion::a_into_b);
    in.DT_K_b_into_a = element_topological_derivative(c, mat, r.w1, r.w2, Insertion::b_into_a);
    const Vector p = phase_selected_sensitivity(c, in.dJ1, in, mat.chi, Vector::Zero(c.num_nodes()));
    EXPECT_NEAR(p.minCoeff(), 2.0 * topological_prefactor(0.15, 386.0), 1e-10);
    EXPECT_NEAR(p.maxCoeff(), 2.0 * topological_prefactor(0.15, 386.0), 1e-10);
    const CombinedSensitivity cs = combined_sensitivity(c, in, mat.chi, Vector::Zero(c.num_nodes()), 1.0, periodic_weights(c));
    EXPECT_EQ(cs.C2, 0.0);
    EXPECT_NEAR(cs.J_prime.minCoeff(), 1.0, 1e-10);
    EXPECT_NEAR(cs.J_prime.maxCoeff(), 1.0, 1e-10);
}

// A 4-fold symmetric layout with isotropic dJ/dK gives a 4-fold symmetric J'.
TEST(Combined, InheritsSquareSymmetry) {
    const int n = 32;
    const TriMesh c = build_cell_mesh({1.0, n});
    const LevelSetField f = initialize(PdmsDisk{}, c, 1, 0.2);
    const CellMaterialField mat{element_characteristic(c, f.phi, 0.2), 386.0, 0.15};
    const CellResponse r = homogenize(c, mat);
    CellSensitivityInputs in;
    in.dJ1 = {2e-3, 0.0, 2e-3};
    in.DT_K_a_into_b = element_topological_derivative(c, mat, r.w1, r.w2, Insertion::a_into_b);
    in.DT_K_b_into_a = element_topological_derivative(c, mat, r.w1, r.w2, Insertion::b_into_a);
    const auto chi_n = nodal_characteristic(f.phi, 0.2);
    const Vector chi = Eigen::Map<const Vector>(chi_n.data(), static_cast<Eigen::Index>(chi_n.size()));
    const Vector Jp = combined_sensitivity(c, in, mat.chi, chi, 1.0, periodic_weights(c)).J_prime;
    std::map<std::pair<long, long>, int> index;
    for (int i = 0; i < c.num_nodes(); ++i) {
        const Point2& p = c.nodes[static_cast<std::size_t>(i)];
        index[{std::lround(p.x * n), std::lround(p.y * n)}] = i;
    }
    const double scale = Jp.cwiseAbs().maxCoeff();
    for (int i = 0; i < c.num_nodes(); ++i) {
        const Point2& p = c.nodes[static_cast<std::size_t>(i)];
        const int j = index.at({std::lround(p.y * n), n - std::lround(p.x * n)});
        EXPECT_NEAR(Jp[i], Jp[j], 1e-8 * scale);
    }
}
