#pragma once

// Design sensitivities: macro gradient dJ/dK* per sector, topological
// derivative of K* on the cell, their contraction, and the normalized
// level-set driving term J'.

#include <array>
#include <cmath>
#include <iostream>
#include <vector>

#include "hmcloak/fem.hpp"
#include "hmcloak/geometry.hpp"
#include "hmcloak/homogenization.hpp"
#include "hmcloak/levelset.hpp"

namespace hmcloak {

/// Symmetric 2x2 array of dJ/dK*_ij for one sector.
struct TensorSensitivity {
    double s11 = 0.0;
    double s12 = 0.0;
    double s22 = 0.0;

    /// First-order change of J for a symmetric perturbation dK.
    [[nodiscard]] double contract(const Tensor2& dK) const { return s11 * dK.xx + 2.0 * s12 * dK.xy + s22 * dK.yy; }
};

/// dJ/dK*_ij = -int_{D_l} dT/dx_i dv/dx_j, symmetrized. `sector` is 0-based.
inline TensorSensitivity tensor_sensitivity(const ScalarField& T, const ScalarField& v, const TriMesh& mesh, int sector) {
    double s11 = 0.0, s12 = 0.0, s21 = 0.0, s22 = 0.0;
    for (int e = 0; e < mesh.num_elements(); ++e) {
        const RegionTag& r = mesh.element_region[static_cast<std::size_t>(e)];
        if (r.zone != Zone::design || r.sector != sector) continue;
        const ElementGradients g = element_gradients(mesh, e);
        const auto gT = field_gradient(mesh, g, e, T.values);
        const auto gv = field_gradient(mesh, g, e, v.values);
        s11 -= g.area * gT[0] * gv[0];
        s12 -= g.area * gT[0] * gv[1];
        s21 -= g.area * gT[1] * gv[0];
        s22 -= g.area * gT[1] * gv[1];
    }
    return {s11, 0.5 * (s12 + s21), s22};
}

/// Inclusion of phase b into a host of phase a.
enum class Insertion { b_into_a, a_into_b };

/// 2 k_host (k_incl - k_host) / (k_incl + k_host).
constexpr double topological_prefactor(double k_host, double k_inclusion) {
    return 2.0 * k_host * (k_inclusion - k_host) / (k_inclusion + k_host);
}

/// Area-weighted element-to-node transfer; periodic pairs are merged so that
/// both nodes of a pair carry the same value.
template <class T>
std::vector<T> nodal_average(const TriMesh& mesh, const std::vector<T>& element_values) {
    std::vector<T> acc(static_cast<std::size_t>(mesh.num_nodes()), T{});
    std::vector<double> wsum(static_cast<std::size_t>(mesh.num_nodes()), 0.0);
    for (int e = 0; e < mesh.num_elements(); ++e) {
        const double A = mesh.signed_area(e);
        for (int v : mesh.elements[static_cast<std::size_t>(e)]) {
            acc[static_cast<std::size_t>(v)] = acc[static_cast<std::size_t>(v)] + A * element_values[static_cast<std::size_t>(e)];
            wsum[static_cast<std::size_t>(v)] += A;
        }
    }
    for (const auto& [m, s] : mesh.periodic_pairs) {
        acc[static_cast<std::size_t>(m)] = acc[static_cast<std::size_t>(m)] + acc[static_cast<std::size_t>(s)];
        wsum[static_cast<std::size_t>(m)] += wsum[static_cast<std::size_t>(s)];
    }
    for (std::size_t i = 0; i < acc.size(); ++i)
        if (wsum[i] > 0.0) acc[i] = (1.0 / wsum[i]) * acc[i];
    for (const auto& [m, s] : mesh.periodic_pairs) acc[static_cast<std::size_t>(s)] = acc[static_cast<std::size_t>(m)];
    return acc;
}

/// Element-to-node transfer weighted by A_e * host_e, where host_e is the
/// element's fraction of the host phase; nodes with no host material fall
/// back to plain area weighting.
template <class T>
std::vector<T> host_weighted_nodal_average(const TriMesh& mesh, const std::vector<T>& element_values,
                                           const std::vector<double>& host_fraction) {
    const std::size_t nn = static_cast<std::size_t>(mesh.num_nodes());
    std::vector<T> acc(nn, T{}), plain(nn, T{});
    std::vector<double> wsum(nn, 0.0), asum(nn, 0.0);
    for (int e = 0; e < mesh.num_elements(); ++e) {
        const double A = mesh.signed_area(e);
        const double h = host_fraction[static_cast<std::size_t>(e)];
        for (int v : mesh.elements[static_cast<std::size_t>(e)]) {
            const auto sv = static_cast<std::size_t>(v);
            acc[sv] = acc[sv] + (A * h) * element_values[static_cast<std::size_t>(e)];
            plain[sv] = plain[sv] + A * element_values[static_cast<std::size_t>(e)];
            wsum[sv] += A * h;
            asum[sv] += A;
        }
    }
    for (const auto& [m, s] : mesh.periodic_pairs) {
        const auto sm = static_cast<std::size_t>(m), ss = static_cast<std::size_t>(s);
        acc[sm] = acc[sm] + acc[ss];
        plain[sm] = plain[sm] + plain[ss];
        wsum[sm] += wsum[ss];
        asum[sm] += asum[ss];
    }
    for (std::size_t i = 0; i < nn; ++i) {
        if (wsum[i] > 1e-12 * asum[i]) acc[i] = (1.0 / wsum[i]) * acc[i];
        else if (asum[i] > 0.0) acc[i] = (1.0 / asum[i]) * plain[i];
    }
    for (const auto& [m, s] : mesh.periodic_pairs) acc[static_cast<std::size_t>(s)] = acc[static_cast<std::size_t>(m)];
    return acc;
}

/// Element-constant (e_i + grad w_i).(e_j + grad w_j).
inline std::vector<Tensor2> element_gradient_products(const TriMesh& mesh, const ScalarField& w1, const ScalarField& w2) {
    const CellGradients cg = corrected_gradients(mesh, w1.values, w2.values);
    std::vector<Tensor2> G(static_cast<std::size_t>(mesh.num_elements()));
    for (std::size_t e = 0; e < G.size(); ++e) {
        const auto& a = cg.g1[e];
        const auto& b = cg.g2[e];
        G[e] = {a[0] * a[0] + a[1] * a[1], a[0] * b[0] + a[1] * b[1], b[0] * b[0] + b[1] * b[1]};
    }
    return G;
}

inline double insertion_prefactor(const CellMaterialField& mat, Insertion direction) {
    return direction == Insertion::b_into_a ? topological_prefactor(mat.k_a, mat.k_b) : topological_prefactor(mat.k_b, mat.k_a);
}

/// Element-constant D_T K*_ij for the given insertion direction.
inline std::vector<Tensor2> element_topological_derivative(const TriMesh& mesh, const CellMaterialField& mat,
                                                           const ScalarField& w1, const ScalarField& w2,
                                                           Insertion direction) {
    const double pref = insertion_prefactor(mat, direction);
    std::vector<Tensor2> G = element_gradient_products(mesh, w1, w2);
    for (auto& t : G) t = pref * t;
    return G;
}

/// Nodal D_T K*_ij for the given insertion direction.
inline std::vector<Tensor2> topological_derivative_tensor(const TriMesh& mesh, const CellMaterialField& mat,
                                                          const ScalarField& w1, const ScalarField& w2,
                                                          Insertion direction) {
    return nodal_average(mesh, element_topological_derivative(mesh, mat, w1, w2, direction));
}

/// D_T J = sum_ij dJ/dK*_ij D_T K*_ij, pointwise.
inline Vector contract_field(const TensorSensitivity& dJ, const std::vector<Tensor2>& DT_K) {
    Vector out(static_cast<Eigen::Index>(DT_K.size()));
    for (std::size_t i = 0; i < DT_K.size(); ++i) out[static_cast<Eigen::Index>(i)] = dJ.contract(DT_K[i]);
    return out;
}

struct CombinedSensitivity {
    Vector J_prime;
    double C1 = 0.0;
    double C2 = 0.0;
    bool term1_dropped = false;
    bool term2_dropped = false;
};

/// Inputs for one cell: macro gradients for both objectives and the cell's
/// element-constant D_T K fields in both insertion directions.
struct CellSensitivityInputs {
    TensorSensitivity dJ1;
    TensorSensitivity dJ2;
    std::vector<Tensor2> DT_K_a_into_b;  ///< phase a inserted into a phase-b host
    std::vector<Tensor2> DT_K_b_into_a;  ///< phase b inserted into a phase-a host
};

/// Phase-selected D_T J^{a->b}(1 - chi) - D_T J^{b->a} chi at the nodes. Each
/// insertion field is moved to the nodes weighted by the host fraction of the
/// surrounding elements, so a node on an interface sees the inclusion response
/// of the host it would actually be inserted into.
inline Vector phase_selected_sensitivity(const TriMesh& mesh, const TensorSensitivity& dJ, const CellSensitivityInputs& in,
                                         const std::vector<double>& chi_element, const Vector& chi_nodal) {
    std::vector<double> a_host(chi_element.size()), b_host(chi_element.size());
    for (std::size_t e = 0; e < chi_element.size(); ++e) {
        a_host[e] = chi_element[e];
        b_host[e] = 1.0 - chi_element[e];
    }
    const Vector into_b = contract_field(dJ, host_weighted_nodal_average(mesh, in.DT_K_a_into_b, b_host));
    const Vector into_a = contract_field(dJ, host_weighted_nodal_average(mesh, in.DT_K_b_into_a, a_host));
    return into_b.cwiseProduct((1.0 - chi_nodal.array()).matrix()) - into_a.cwiseProduct(chi_nodal);
}

/// J' = C1 (D_T J1^{a->b}(1 - chi) - D_T J1^{b->a} chi) + C2 (same for J2),
/// with C1 = w / int|J1 part|, C2 = (1 - w) / int|J2 part| (unique periodic
/// nodal weights). A term with weight zero or L1 norm below 1e-300 is dropped.
inline CombinedSensitivity combined_sensitivity(const TriMesh& mesh, const CellSensitivityInputs& in,
                                                const std::vector<double>& chi_element, const Vector& chi_nodal, double w,
                                                const Vector& weights) {
    if (static_cast<int>(chi_element.size()) != mesh.num_elements() ||
        static_cast<int>(in.DT_K_a_into_b.size()) != mesh.num_elements() ||
        static_cast<int>(in.DT_K_b_into_a.size()) != mesh.num_elements() || chi_nodal.size() != mesh.num_nodes())
        throw std::invalid_argument("combined_sensitivity: element fields do not match the cell mesh");
    const Eigen::Index n = weights.size();
    CombinedSensitivity out;
    out.J_prime = Vector::Zero(n);
    if (w > 0.0) {
        const Vector p1 = phase_selected_sensitivity(mesh, in.dJ1, in, chi_element, chi_nodal);
        const double l1 = weights.dot(p1.cwiseAbs());
        if (l1 > 1e-300) {
            out.C1 = w / l1;
            out.J_prime += out.C1 * p1;
        } else {
            out.term1_dropped = true;
            std::cerr << "warning: J1 sensitivity vanishes on this cell; term dropped\n";
        }
    }
    if (w < 1.0) {
        const Vector p2 = phase_selected_sensitivity(mesh, in.dJ2, in, chi_element, chi_nodal);
        const double l1 = weights.dot(p2.cwiseAbs());
        if (l1 > 1e-300) {
            out.C2 = (1.0 - w) / l1;
            out.J_prime += out.C2 * p2;
        } else {
            out.term2_dropped = true;
            std::cerr << "warning: J2 sensitivity vanishes on this cell; term dropped\n";
        }
    }
    return out;
}

}  // namespace hmcloak
