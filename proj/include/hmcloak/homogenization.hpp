#pragma once

// Periodic unit-cell correctors and the homogenized conductivity tensor.

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "hmcloak/fem.hpp"
#include "hmcloak/geometry.hpp"

namespace hmcloak {

/// Element-wise two-phase layout: chi = 1 selects k_a, chi = 0 selects k_b.
struct CellMaterialField {
    std::vector<double> chi;
    double k_a = 386.0;
    double k_b = 0.15;

    void validate(const TriMesh& mesh) const {
        if (static_cast<int>(chi.size()) != mesh.num_elements())
            throw std::invalid_argument("cell material: one chi value per element required");
        if (!(k_a > 0.0 && k_b > 0.0)) throw std::invalid_argument("cell material: conductivities must be positive");
        for (double c : chi)
            if (!(c >= 0.0 && c <= 1.0)) throw std::invalid_argument("cell material: chi outside [0,1]");
    }
};

/// Linear interpolation between the two phases.
constexpr double element_conductivity(double chi, double k_a, double k_b) { return k_b + (k_a - k_b) * chi; }

inline std::vector<double> element_conductivities(const CellMaterialField& mat) {
    std::vector<double> k(mat.chi.size());
    for (std::size_t e = 0; e < k.size(); ++e) k[e] = element_conductivity(mat.chi[e], mat.k_a, mat.k_b);
    return k;
}

struct Diagonalization {
    double Kbar1 = 0.0;
    double Kbar2 = 0.0;
    double theta = 0.0;  ///< degrees, in (-45, 45]
};

/// Principal conductivities with R(theta) K R(theta)^T = diag(Kbar1, Kbar2),
/// R = [[c, s], [-s, c]]. Kbar1 belongs to the eigenvector (cos theta, sin theta),
/// the one closest to e_1.
inline Diagonalization diagonalize(const Tensor2& K) {
    double th = 0.5 * std::atan2(2.0 * K.xy, K.xx - K.yy);
    constexpr double quarter = 0.25 * std::numbers::pi;
    if (th > quarter + 1e-15) th -= 0.5 * std::numbers::pi;
    else if (th <= -quarter + 1e-15) th += 0.5 * std::numbers::pi;
    const double c = std::cos(th), s = std::sin(th);
    Diagonalization d;
    d.Kbar1 = c * c * K.xx + 2.0 * c * s * K.xy + s * s * K.yy;
    d.Kbar2 = s * s * K.xx - 2.0 * c * s * K.xy + c * c * K.yy;
    d.theta = th * 180.0 / std::numbers::pi;
    return d;
}

/// R(theta)^T diag(Kbar1, Kbar2) R(theta).
inline Tensor2 reconstruct(const Diagonalization& d) {
    const double th = d.theta * std::numbers::pi / 180.0;
    const double c = std::cos(th), s = std::sin(th);
    return {c * c * d.Kbar1 + s * s * d.Kbar2, c * s * (d.Kbar1 - d.Kbar2), s * s * d.Kbar1 + c * c * d.Kbar2};
}

struct EffectiveTensor {
    double K11 = 0.0;
    double K12 = 0.0;
    double K22 = 0.0;
    double Kbar1 = 0.0;
    double Kbar2 = 0.0;
    double theta = 0.0;

    [[nodiscard]] Tensor2 tensor() const { return {K11, K12, K22}; }

    static EffectiveTensor from(const Tensor2& K) {
        const Diagonalization d = diagonalize(K);
        return {K.xx, K.xy, K.yy, d.Kbar1, d.Kbar2, d.theta};
    }
};

/// Cell stiffness with periodic folding and node 0 pinned.
inline SparseSystem cell_system(const TriMesh& mesh, const CellMaterialField& mat) {
    mat.validate(mesh);
    if (mesh.periodic_pairs.empty()) throw std::invalid_argument("cell problem: mesh has no periodic pairs");
    const std::vector<double> k = element_conductivities(mat);
    SparseSystem sys = assemble_diffusion(mesh, std::span<const double>(k));
    return apply_periodic(std::move(sys), mesh.periodic_pairs, 0);
}

/// Node-space load  -int_Y K e_i . grad v  for direction i (0 or 1).
inline Vector corrector_load(const TriMesh& mesh, const CellMaterialField& mat, int direction) {
    Vector f = Vector::Zero(mesh.num_nodes());
    for (int e = 0; e < mesh.num_elements(); ++e) {
        const double k = element_conductivity(mat.chi[static_cast<std::size_t>(e)], mat.k_a, mat.k_b);
        const ElementGradients g = element_gradients(mesh, e);
        const auto& t = mesh.elements[static_cast<std::size_t>(e)];
        for (int a = 0; a < 3; ++a)
            f[t[static_cast<std::size_t>(a)]] -= g.area * k * g.grad[static_cast<std::size_t>(a)][static_cast<std::size_t>(direction)];
    }
    return f;
}

/// Y-periodic corrector w_i of  -div(K (e_i + grad w_i)) = 0; direction is 1 or 2.
inline ScalarField solve_cell_problem(const TriMesh& mesh, const CellMaterialField& mat, int direction) {
    if (direction != 1 && direction != 2) throw std::invalid_argument("cell problem: direction must be 1 or 2");
    FactoredSystem fs(cell_system(mesh, mat));
    return fs.solve_homogeneous(corrector_load(mesh, mat, direction - 1));
}

/// Element values of e_i + grad w_i for both directions.
struct CellGradients {
    std::vector<std::array<double, 2>> g1;
    std::vector<std::array<double, 2>> g2;
};

inline CellGradients corrected_gradients(const TriMesh& mesh, const Vector& w1, const Vector& w2) {
    CellGradients cg;
    cg.g1.resize(static_cast<std::size_t>(mesh.num_elements()));
    cg.g2.resize(static_cast<std::size_t>(mesh.num_elements()));
    for (int e = 0; e < mesh.num_elements(); ++e) {
        const ElementGradients g = element_gradients(mesh, e);
        auto a = field_gradient(mesh, g, e, w1);
        auto b = field_gradient(mesh, g, e, w2);
        a[0] += 1.0;
        b[1] += 1.0;
        cg.g1[static_cast<std::size_t>(e)] = a;
        cg.g2[static_cast<std::size_t>(e)] = b;
    }
    return cg;
}

/// K*_ij = (1/|Y|) int_Y K (e_i + grad w_i) . (e_j + grad w_j).
inline EffectiveTensor effective_tensor(const TriMesh& mesh, const CellMaterialField& mat, const ScalarField& w1,
                                        const ScalarField& w2) {
    const CellGradients cg = corrected_gradients(mesh, w1.values, w2.values);
    double K11 = 0.0, K12 = 0.0, K22 = 0.0, area = 0.0;
    for (int e = 0; e < mesh.num_elements(); ++e) {
        const double k = element_conductivity(mat.chi[static_cast<std::size_t>(e)], mat.k_a, mat.k_b);
        const double A = mesh.signed_area(e);
        const auto& a = cg.g1[static_cast<std::size_t>(e)];
        const auto& b = cg.g2[static_cast<std::size_t>(e)];
        K11 += A * k * (a[0] * a[0] + a[1] * a[1]);
        K12 += A * k * (a[0] * b[0] + a[1] * b[1]);
        K22 += A * k * (b[0] * b[0] + b[1] * b[1]);
        area += A;
    }
    return EffectiveTensor::from({K11 / area, K12 / area, K22 / area});
}

/// Both correctors (one factorisation) and the effective tensor.
struct CellResponse {
    ScalarField w1;
    ScalarField w2;
    EffectiveTensor K;
};

inline CellResponse homogenize(const TriMesh& mesh, const CellMaterialField& mat) {
    FactoredSystem fs(cell_system(mesh, mat));
    CellResponse r;
    r.w1 = fs.solve_homogeneous(corrector_load(mesh, mat, 0));
    r.w2 = fs.solve_homogeneous(corrector_load(mesh, mat, 1));
    r.K = effective_tensor(mesh, mat, r.w1, r.w2);
    return r;
}

/// Arithmetic (Voigt) and harmonic (Reuss) means of the two phases at volume
/// fraction f of phase a.
struct CompositeBounds {
    double lower = 0.0;
    double upper = 0.0;
};

inline CompositeBounds voigt_reuss(double f, double k_a, double k_b) {
    return {1.0 / (f / k_a + (1.0 - f) / k_b), f * k_a + (1.0 - f) * k_b};
}

inline double volume_fraction(const TriMesh& mesh, const CellMaterialField& mat) {
    double f = 0.0, area = 0.0;
    for (int e = 0; e < mesh.num_elements(); ++e) {
        f += mesh.signed_area(e) * mat.chi[static_cast<std::size_t>(e)];
        area += mesh.signed_area(e);
    }
    return f / area;
}

}  // namespace hmcloak
