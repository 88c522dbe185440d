#pragma once

// Homogenized macroscale conduction: state, adjoints and reference fields.

#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "hmcloak/fem.hpp"
#include "hmcloak/geometry.hpp"
#include "hmcloak/objectives.hpp"

namespace hmcloak {

/// Conductivity by region: one tensor per design sector, isotropic exterior and core.
struct MacroMaterialMap {
    std::vector<Tensor2> sector_tensors;
    double K_E = 67.0;
    double K_obstacle = 386.0;

    static MacroMaterialMap uniform(int n_sectors, double k_design, double K_E, double K_obstacle) {
        return {std::vector<Tensor2>(static_cast<std::size_t>(n_sectors), Tensor2::isotropic(k_design)), K_E, K_obstacle};
    }

    [[nodiscard]] std::vector<Tensor2> element_tensors(const TriMesh& mesh) const {
        std::vector<Tensor2> K(static_cast<std::size_t>(mesh.num_elements()));
        for (int e = 0; e < mesh.num_elements(); ++e) {
            const RegionTag& r = mesh.element_region[static_cast<std::size_t>(e)];
            switch (r.zone) {
                case Zone::exterior: K[static_cast<std::size_t>(e)] = Tensor2::isotropic(K_E); break;
                case Zone::core: K[static_cast<std::size_t>(e)] = Tensor2::isotropic(K_obstacle); break;
                case Zone::design:
                    if (r.sector < 0 || r.sector >= static_cast<int>(sector_tensors.size()))
                        throw std::invalid_argument("material map: no tensor for design sector " + std::to_string(r.sector + 1));
                    K[static_cast<std::size_t>(e)] = sector_tensors[static_cast<std::size_t>(r.sector)];
                    break;
                case Zone::cell: throw std::invalid_argument("material map: cell element in a macro mesh");
            }
        }
        return K;
    }
};

struct BoundaryData {
    double T_low = 0.0;   ///< on gamma_a
    double T_high = 1.0;  ///< on gamma_b
};

/// Factored macro operator with the state solution. Adjoint solves reuse the
/// factorisation (same operator, homogeneous Dirichlet data on gamma_a/gamma_b).
class MacroState {
  public:
    MacroState(const TriMesh& mesh, std::span<const Tensor2> element_tensors, const BoundaryData& bc)
        : factor_(std::make_shared<FactoredSystem>(constrained(mesh, element_tensors, bc))) {
        T_ = factor_->solve();
    }

    [[nodiscard]] const ScalarField& temperature() const { return T_; }

    /// Adjoint field for a node-space load dJ/dT.
    [[nodiscard]] ScalarField adjoint(const Vector& node_load) const { return factor_->solve_homogeneous(node_load); }

    /// Net heat flow into the domain through the Dirichlet nodes of `tag`.
    [[nodiscard]] double boundary_heat_flow(const TriMesh& mesh, BoundaryTag tag) const {
        const Vector r = factor_->system().full_matrix * T_.values;
        double q = 0.0;
        for (int i : mesh.nodes_on(tag)) q += r[i];
        return q;
    }

    [[nodiscard]] const FactoredSystem& factorization() const { return *factor_; }

  private:
    static SparseSystem constrained(const TriMesh& mesh, std::span<const Tensor2> K, const BoundaryData& bc) {
        SparseSystem sys = assemble_diffusion(mesh, K);
        const auto a = mesh.nodes_on(BoundaryTag::gamma_a);
        const auto b = mesh.nodes_on(BoundaryTag::gamma_b);
        if (a.empty() || b.empty()) throw std::invalid_argument("macro solve: mesh lacks gamma_a/gamma_b boundaries");
        const double lo[] = {bc.T_low};
        const double hi[] = {bc.T_high};
        sys = apply_dirichlet(std::move(sys), a, lo);
        return apply_dirichlet(std::move(sys), b, hi);
    }

    std::shared_ptr<FactoredSystem> factor_;
    ScalarField T_;
};

inline ScalarField solve_state(const TriMesh& mesh, const MacroMaterialMap& matmap, const BoundaryData& bc) {
    const auto K = matmap.element_tensors(mesh);
    return MacroState(mesh, K, bc).temperature();
}

/// Temperature with every region set to K_E (the undisturbed reference).
inline ScalarField reference_steel(const TriMesh& mesh, double K_E, const BoundaryData& bc, int n_sectors) {
    return solve_state(mesh, MacroMaterialMap::uniform(n_sectors, K_E, K_E, K_E), bc);
}

/// Temperature with Omega_D filled by an isotropic material k_design.
inline ScalarField reference_filled(const TriMesh& mesh, double k_design, double K_E, double K_obstacle,
                                    const BoundaryData& bc, int n_sectors) {
    return solve_state(mesh, MacroMaterialMap::uniform(n_sectors, k_design, K_E, K_obstacle), bc);
}

/// Adjoint v^k of  -div(K grad v) = dj_k/dT  with v = 0 on gamma_a, gamma_b.
/// J1 loads 2 (T - T_ref) on Omega_E; J2 loads the weak form 2 int_{Omega_C} grad T . grad v.
inline ScalarField solve_adjoint(const TriMesh& mesh, const MacroMaterialMap& matmap, const BoundaryData& bc,
                                 ObjectiveKind objective, const ScalarField& T, const ScalarField& T_ref) {
    const auto K = matmap.element_tensors(mesh);
    const MacroState state(mesh, K, bc);
    const ObjectiveEvaluator ev(mesh);
    switch (objective) {
        case ObjectiveKind::J1: return state.adjoint(ev.J1_gradient(T.values, T_ref.values));
        case ObjectiveKind::J2: return state.adjoint(ev.J2_gradient(T.values));
        default: throw std::invalid_argument("solve_adjoint: objective must be J1 or J2");
    }
}

}  // namespace hmcloak
