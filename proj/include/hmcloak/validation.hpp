#pragma once

// Finite-size check of a design: the sectors are tiled with real cells of
// size epsilon0 and the raw conduction problem is solved without
// homogenization. Also the rotated-obstacle robustness sweep.

#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hmcloak/fem.hpp"
#include "hmcloak/geometry.hpp"
#include "hmcloak/homogenization.hpp"
#include "hmcloak/levelset.hpp"
#include "hmcloak/macro_solver.hpp"
#include "hmcloak/objectives.hpp"
#include "hmcloak/optimizer.hpp"
#include "hmcloak/parallel.hpp"

namespace hmcloak {

struct TilingSpec {
    double epsilon0 = 1.0 / 9.0;
    std::vector<LevelSetField> phis;  ///< one per sector, sector l uses phis[l-1]
    double d = 0.01;                  ///< transition width used for chi
    MacroGeometry geometry;
    Materials materials;
    BoundaryData bc;
    TriMesh cell_mesh;

    void validate() const {
        if (!(epsilon0 > 0.0)) throw std::invalid_argument("tiling: epsilon0 must be positive");
        if (!(d > 0.0 && d < 1.0)) throw std::invalid_argument("tiling: d must lie in (0,1)");
        geometry.validate();
        if (static_cast<int>(phis.size()) != geometry.n_sectors)
            throw std::invalid_argument("tiling: one level-set field per sector required");
        for (const auto& f : phis)
            if (f.phi.size() != cell_mesh.num_nodes()) throw std::invalid_argument("tiling: level set does not match the cell mesh");
    }
};

/// PDMS obstacle inside Omega_C. The half disk has its flat side through the
/// origin and its bulge along (cos psi, sin psi).
struct ObstacleSpec {
    enum class Shape { half_disk, disk };
    Shape shape = Shape::half_disk;
    double radius_factor = 0.3;  ///< radius as a fraction of R_c
    double psi_deg = 0.0;
    double k_obstacle = 0.15;

    [[nodiscard]] bool contains(Point2 p, double R_c) const {
        const double r = radius_factor * R_c;
        if (std::hypot(p.x, p.y) >= r) return false;
        if (shape == Shape::disk) return true;
        const double psi = psi_deg * std::numbers::pi / 180.0;
        return p.x * std::cos(psi) + p.y * std::sin(psi) >= 0.0;
    }

    void validate() const {
        if (!(radius_factor > 0.0 && radius_factor <= 1.0))
            throw std::invalid_argument("obstacle: radius_factor must lie in (0,1] so the shape stays inside Omega_C");
        if (!(k_obstacle > 0.0)) throw std::invalid_argument("obstacle: conductivity must be positive");
    }
};

/// Fine macro mesh with at least `per_cell` elements across each tile side in Omega_D.
inline TriMesh tiled_mesh(const MacroGeometry& g, double epsilon0, int per_cell = 8) {
    if (per_cell < 8) throw std::invalid_argument("tiled mesh: at least 8 elements per cell side required");
    return build_macro_mesh(g, MacroMeshResolution::for_element_size(g, epsilon0 / per_cell));
}

/// Largest sqrt(2 A_e) over the design elements.
inline double design_element_size(const TriMesh& mesh) {
    double h = 0.0;
    for (int e = 0; e < mesh.num_elements(); ++e)
        if (mesh.element_region[static_cast<std::size_t>(e)].zone == Zone::design)
            h = std::max(h, std::sqrt(2.0 * mesh.signed_area(e)));
    return h;
}

/// chi of cell field `phi` at macro point x, with y = frac(x / epsilon0).
inline double sample_characteristic(const TriMesh& cell, const Vector& phi, Point2 x, double epsilon0, double d) {
    const Point2 y{x.x / epsilon0, x.y / epsilon0};
    const CellLocation loc = locate_in_cell(cell, y);
    const auto& t = cell.elements[static_cast<std::size_t>(loc.element)];
    const double p = loc.bary[0] * phi[t[0]] + loc.bary[1] * phi[t[1]] + loc.bary[2] * phi[t[2]];
    return characteristic(p, d);
}

/// Element-wise scalar conductivity of the tiled design.
inline std::vector<double> tile_conductivity(const TilingSpec& spec, const TriMesh& fine_mesh,
                                             const ObstacleSpec* obstacle = nullptr) {
    spec.validate();
    if (obstacle) obstacle->validate();
    const double h = design_element_size(fine_mesh);
    if (h > spec.epsilon0 / 8.0 * (1.0 + 1e-9))
        throw std::invalid_argument("tiling: mesh under-resolves the cells (element size " + std::to_string(h) +
                                    " > epsilon0/8 = " + std::to_string(spec.epsilon0 / 8.0) + ")");
    const Materials& m = spec.materials;
    std::vector<double> k(static_cast<std::size_t>(fine_mesh.num_elements()));
    for (int e = 0; e < fine_mesh.num_elements(); ++e) {
        const RegionTag& r = fine_mesh.element_region[static_cast<std::size_t>(e)];
        const Point2 c = fine_mesh.centroid(e);
        double& ke = k[static_cast<std::size_t>(e)];
        switch (r.zone) {
            case Zone::exterior: ke = m.K_E; break;
            case Zone::core:
                ke = obstacle && obstacle->contains(c, spec.geometry.R_c) ? obstacle->k_obstacle : m.K_obstacle;
                break;
            case Zone::design: {
                const double chi = sample_characteristic(spec.cell_mesh, spec.phis[static_cast<std::size_t>(r.sector)].phi, c,
                                                         spec.epsilon0, spec.d);
                ke = element_conductivity(chi, m.k_cell_a, m.k_cell_b);
                break;
            }
            case Zone::cell: throw std::invalid_argument("tiling: cell element in a macro mesh");
        }
    }
    return k;
}

struct TiledResult {
    double J1 = 0.0;
    double J2 = 0.0;
    ScalarField T;
    std::vector<double> conductivity;
};

/// Fine mesh with its cached steel reference and objective operators.
class TiledEvaluator {
  public:
    TiledEvaluator(TriMesh fine_mesh, double K_E, const BoundaryData& bc, int n_sectors)
        : mesh_(std::move(fine_mesh)), bc_(bc), objectives_(mesh_) {
        T_steel_ = reference_steel(mesh_, K_E, bc, n_sectors);
    }

    [[nodiscard]] const TriMesh& mesh() const { return mesh_; }
    [[nodiscard]] const ScalarField& T_steel() const { return T_steel_; }

    [[nodiscard]] TiledResult evaluate(const TilingSpec& spec, const ObstacleSpec* obstacle = nullptr) const {
        TiledResult out;
        out.conductivity = tile_conductivity(spec, mesh_, obstacle);
        return solve_with(std::move(out));
    }

    /// Homogenized model on the same mesh: sector tensors instead of tiles.
    [[nodiscard]] TiledResult evaluate_homogenized(const MacroMaterialMap& matmap) const {
        const auto K = matmap.element_tensors(mesh_);
        TiledResult out;
        out.T = MacroState(mesh_, K, bc_).temperature();
        out.J1 = objectives_.J1(out.T.values, T_steel_.values);
        out.J2 = objectives_.J2(out.T.values);
        return out;
    }

  private:
    TiledResult solve_with(TiledResult out) const {
        SparseSystem sys = assemble_diffusion(mesh_, std::span<const double>(out.conductivity));
        const auto a = mesh_.nodes_on(BoundaryTag::gamma_a);
        const auto b = mesh_.nodes_on(BoundaryTag::gamma_b);
        const double lo[] = {bc_.T_low};
        const double hi[] = {bc_.T_high};
        sys = apply_dirichlet(std::move(sys), a, lo);
        sys = apply_dirichlet(std::move(sys), b, hi);
        out.T = solve(sys);
        out.J1 = objectives_.J1(out.T.values, T_steel_.values);
        out.J2 = objectives_.J2(out.T.values);
        return out;
    }

    TriMesh mesh_;
    BoundaryData bc_;
    ObjectiveEvaluator objectives_;
    ScalarField T_steel_;
};

inline TiledResult evaluate_tiled(const TilingSpec& spec, const TriMesh& fine_mesh, const ObstacleSpec* obstacle = nullptr) {
    const TiledEvaluator ev(fine_mesh, spec.materials.K_E, spec.bc, spec.geometry.n_sectors);
    return ev.evaluate(spec, obstacle);
}

struct NamedDesign {
    std::string name;
    TilingSpec spec;
    double J1_init = 0.0;  ///< normalizer for the ratio column
};

struct SweepRow {
    std::string design;
    double psi_deg = 0.0;
    double J1 = 0.0;
    double J1_ratio = 0.0;
};

/// J1 under the rotated obstacle for every (design, psi) pair.
inline std::vector<SweepRow> robustness_sweep(const TiledEvaluator& ev, const std::vector<NamedDesign>& designs,
                                              const std::vector<double>& psi_values, ObstacleSpec base = {},
                                              int threads = 1) {
    std::vector<SweepRow> rows(designs.size() * psi_values.size());
    parallel_for(static_cast<int>(rows.size()), threads, [&](int i) {
        const auto& des = designs[static_cast<std::size_t>(i) / psi_values.size()];
        ObstacleSpec ob = base;
        ob.psi_deg = psi_values[static_cast<std::size_t>(i) % psi_values.size()];
        const TiledResult r = ev.evaluate(des.spec, &ob);
        SweepRow& row = rows[static_cast<std::size_t>(i)];
        row.design = des.name;
        row.psi_deg = ob.psi_deg;
        row.J1 = r.J1;
        row.J1_ratio = des.J1_init > 0.0 ? r.J1 / des.J1_init : 0.0;
    });
    return rows;
}

struct ConvergenceRow {
    double epsilon0 = 0.0;
    int elements = 0;
    double J1_tiled = 0.0;
    double J1_homogenized = 0.0;
    [[nodiscard]] double relative_gap() const { return std::abs(J1_tiled - J1_homogenized) / J1_homogenized; }
};

/// Tiled versus homogenized J1 for a sequence of cell sizes; both models are
/// solved on the same fine mesh so that only the finite cell size differs.
inline std::vector<ConvergenceRow> epsilon_convergence(TilingSpec spec, const std::vector<double>& epsilons, int per_cell = 8) {
    spec.validate();
    MacroMaterialMap matmap;
    matmap.K_E = spec.materials.K_E;
    matmap.K_obstacle = spec.materials.K_obstacle;
    for (const auto& f : spec.phis) {
        const CellMaterialField mat{element_characteristic(spec.cell_mesh, f.phi, spec.d), spec.materials.k_cell_a,
                                    spec.materials.k_cell_b};
        matmap.sector_tensors.push_back(homogenize(spec.cell_mesh, mat).K.tensor());
    }
    std::vector<ConvergenceRow> rows;
    for (double eps : epsilons) {
        spec.epsilon0 = eps;
        const TiledEvaluator ev(tiled_mesh(spec.geometry, eps, per_cell), spec.materials.K_E, spec.bc, spec.geometry.n_sectors);
        ConvergenceRow row;
        row.epsilon0 = eps;
        row.elements = ev.mesh().num_elements();
        row.J1_tiled = ev.evaluate(spec).J1;
        row.J1_homogenized = ev.evaluate_homogenized(matmap).J1;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace hmcloak
