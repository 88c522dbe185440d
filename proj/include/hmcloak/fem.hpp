#pragma once

// P1 finite elements for scalar diffusion with element-wise 2x2 conductivity
// tensors, constraint elimination (Dirichlet, periodic master/slave) and a
// direct sparse solve.

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "hmcloak/geometry.hpp"

namespace hmcloak {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Vector = Eigen::VectorXd;

class SolverError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Symmetric 2x2 tensor.
struct Tensor2 {
    double xx = 0.0;
    double xy = 0.0;
    double yy = 0.0;

    static Tensor2 isotropic(double k) { return {k, 0.0, k}; }

    [[nodiscard]] bool is_spd() const { return xx > 0.0 && yy > 0.0 && xx * yy - xy * xy > 0.0; }
    [[nodiscard]] std::array<double, 2> apply(std::array<double, 2> v) const {
        return {xx * v[0] + xy * v[1], xy * v[0] + yy * v[1]};
    }
    [[nodiscard]] double norm() const { return std::sqrt(xx * xx + 2.0 * xy * xy + yy * yy); }

    friend Tensor2 operator+(Tensor2 a, Tensor2 b) { return {a.xx + b.xx, a.xy + b.xy, a.yy + b.yy}; }
    friend Tensor2 operator*(double s, Tensor2 a) { return {s * a.xx, s * a.xy, s * a.yy}; }
};

/// Constant P1 shape-function gradients and area of one triangle.
struct ElementGradients {
    double area = 0.0;
    std::array<std::array<double, 2>, 3> grad{};
};

inline ElementGradients element_gradients(const TriMesh& mesh, int e) {
    const auto& t = mesh.elements[static_cast<std::size_t>(e)];
    const Point2& p0 = mesh.nodes[static_cast<std::size_t>(t[0])];
    const Point2& p1 = mesh.nodes[static_cast<std::size_t>(t[1])];
    const Point2& p2 = mesh.nodes[static_cast<std::size_t>(t[2])];
    const double det = (p1.x - p0.x) * (p2.y - p0.y) - (p2.x - p0.x) * (p1.y - p0.y);
    ElementGradients g;
    g.area = 0.5 * det;
    g.grad[0] = {(p1.y - p2.y) / det, (p2.x - p1.x) / det};
    g.grad[1] = {(p2.y - p0.y) / det, (p0.x - p2.x) / det};
    g.grad[2] = {(p0.y - p1.y) / det, (p1.x - p0.x) / det};
    return g;
}

inline std::vector<ElementGradients> all_element_gradients(const TriMesh& mesh) {
    std::vector<ElementGradients> out(static_cast<std::size_t>(mesh.num_elements()));
    for (int e = 0; e < mesh.num_elements(); ++e) out[static_cast<std::size_t>(e)] = element_gradients(mesh, e);
    return out;
}

/// Gradient of a P1 field on element e.
inline std::array<double, 2> field_gradient(const TriMesh& mesh, const ElementGradients& g, int e, const Vector& u) {
    const auto& t = mesh.elements[static_cast<std::size_t>(e)];
    std::array<double, 2> out{0.0, 0.0};
    for (int a = 0; a < 3; ++a) {
        const double ua = u[t[static_cast<std::size_t>(a)]];
        out[0] += ua * g.grad[static_cast<std::size_t>(a)][0];
        out[1] += ua * g.grad[static_cast<std::size_t>(a)][1];
    }
    return out;
}

struct BoundaryRecord {
    std::vector<int> dirichlet_nodes;
    bool periodic = false;
    std::optional<int> gauge;
};

/// Nodal scalar field (temperature, corrector, adjoint) with its constraints.
struct ScalarField {
    Vector values;
    BoundaryRecord bc;
};

/// Linear system over mesh nodes plus the constraints that eliminate DOFs.
///
/// `full_matrix`/`full_rhs` live in node space. `matrix`/`rhs` are the reduced
/// system over free DOFs and `dof_map[node]` is the reduced index of the node's
/// master, or -1 when that master is fixed.
struct SparseSystem {
    SparseMatrix full_matrix;
    Vector full_rhs;
    std::vector<int> master;
    std::vector<std::optional<double>> fixed;

    SparseMatrix matrix;
    Vector rhs;
    std::vector<int> dof_map;
    BoundaryRecord bc;

    [[nodiscard]] int num_nodes() const { return static_cast<int>(full_rhs.size()); }
    [[nodiscard]] int num_dofs() const { return static_cast<int>(rhs.size()); }

    /// Full node-space vector of prescribed values (zero on free nodes).
    [[nodiscard]] Vector lifting() const {
        Vector g = Vector::Zero(num_nodes());
        for (int i = 0; i < num_nodes(); ++i) {
            const auto& f = fixed[static_cast<std::size_t>(master[static_cast<std::size_t>(i)])];
            if (f) g[i] = *f;
        }
        return g;
    }

    /// Rebuilds the reduced system from the node-space operator and constraints.
    void reduce() {
        const int n = num_nodes();
        dof_map.assign(static_cast<std::size_t>(n), -1);
        std::vector<int> master_dof(static_cast<std::size_t>(n), -1);
        int ndof = 0;
        for (int i = 0; i < n; ++i) {
            if (master[static_cast<std::size_t>(i)] == i && !fixed[static_cast<std::size_t>(i)])
                master_dof[static_cast<std::size_t>(i)] = ndof++;
        }
        for (int i = 0; i < n; ++i) dof_map[static_cast<std::size_t>(i)] = master_dof[static_cast<std::size_t>(master[static_cast<std::size_t>(i)])];
        const Vector g = lifting();
        rhs = Vector::Zero(ndof);
        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve(static_cast<std::size_t>(full_matrix.nonZeros()));
        for (int col = 0; col < full_matrix.outerSize(); ++col) {
            const int dc = dof_map[static_cast<std::size_t>(col)];
            for (SparseMatrix::InnerIterator it(full_matrix, col); it; ++it) {
                const int row = static_cast<int>(it.row());
                const int dr = dof_map[static_cast<std::size_t>(row)];
                if (dr < 0) continue;
                if (dc >= 0) trips.emplace_back(dr, dc, it.value());
                else rhs[dr] -= it.value() * g[col];
            }
        }
        for (int i = 0; i < n; ++i) {
            const int d = dof_map[static_cast<std::size_t>(i)];
            if (d >= 0) rhs[d] += full_rhs[i];
        }
        matrix.resize(ndof, ndof);
        matrix.setFromTriplets(trips.begin(), trips.end());
    }

    /// Full node vector from a reduced solution.
    [[nodiscard]] Vector expand(const Vector& x) const {
        Vector u = lifting();
        for (int i = 0; i < num_nodes(); ++i) {
            const int d = dof_map[static_cast<std::size_t>(i)];
            if (d >= 0) u[i] = x[d];
        }
        return u;
    }

    /// Reduced load for a node-space load with homogeneous constraint data.
    [[nodiscard]] Vector reduce_load(const Vector& node_load) const {
        Vector b = Vector::Zero(num_dofs());
        for (int i = 0; i < num_nodes(); ++i) {
            const int d = dof_map[static_cast<std::size_t>(i)];
            if (d >= 0) b[d] += node_load[i];
        }
        return b;
    }
};

namespace detail {

inline SparseSystem make_system(SparseMatrix full, Vector rhs) {
    SparseSystem s;
    const int n = static_cast<int>(rhs.size());
    s.full_matrix = std::move(full);
    s.full_rhs = std::move(rhs);
    s.master.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) s.master[static_cast<std::size_t>(i)] = i;
    s.fixed.assign(static_cast<std::size_t>(n), std::nullopt);
    s.reduce();
    return s;
}

}  // namespace detail

/// Stiffness matrix K_ab = sum_e |e| grad N_a . (K_e grad N_b) with zero load.
inline SparseSystem assemble_diffusion(const TriMesh& mesh, std::span<const Tensor2> tensor_of_element) {
    if (static_cast<int>(tensor_of_element.size()) != mesh.num_elements())
        throw std::invalid_argument("assemble_diffusion: one tensor per element required");
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(9 * mesh.num_elements()));
    for (int e = 0; e < mesh.num_elements(); ++e) {
        const Tensor2& K = tensor_of_element[static_cast<std::size_t>(e)];
        if (!K.is_spd())
            throw std::invalid_argument("assemble_diffusion: element " + std::to_string(e) + " tensor is not SPD");
        const ElementGradients g = element_gradients(mesh, e);
        const auto& t = mesh.elements[static_cast<std::size_t>(e)];
        for (int a = 0; a < 3; ++a) {
            const auto Kg = K.apply(g.grad[static_cast<std::size_t>(a)]);
            for (int b = 0; b < 3; ++b) {
                const auto& gb = g.grad[static_cast<std::size_t>(b)];
                trips.emplace_back(t[static_cast<std::size_t>(b)], t[static_cast<std::size_t>(a)],
                                   g.area * (Kg[0] * gb[0] + Kg[1] * gb[1]));
            }
        }
    }
    SparseMatrix A(mesh.num_nodes(), mesh.num_nodes());
    A.setFromTriplets(trips.begin(), trips.end());
    return detail::make_system(std::move(A), Vector::Zero(mesh.num_nodes()));
}

inline SparseSystem assemble_diffusion(const TriMesh& mesh, std::span<const double> k_of_element) {
    std::vector<Tensor2> K(k_of_element.size());
    for (std::size_t e = 0; e < K.size(); ++e) K[e] = Tensor2::isotropic(k_of_element[e]);
    return assemble_diffusion(mesh, std::span<const Tensor2>(K));
}

/// Consistent P1 mass matrix, optionally restricted to elements with mask[e].
inline SparseMatrix assemble_mass(const TriMesh& mesh, const std::vector<char>* mask = nullptr) {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(9 * mesh.num_elements()));
    for (int e = 0; e < mesh.num_elements(); ++e) {
        if (mask && !(*mask)[static_cast<std::size_t>(e)]) continue;
        const double A = mesh.signed_area(e);
        const auto& t = mesh.elements[static_cast<std::size_t>(e)];
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                trips.emplace_back(t[static_cast<std::size_t>(a)], t[static_cast<std::size_t>(b)], A * (a == b ? 2.0 : 1.0) / 12.0);
    }
    SparseMatrix M(mesh.num_nodes(), mesh.num_nodes());
    M.setFromTriplets(trips.begin(), trips.end());
    return M;
}

/// Isotropic unit-conductivity stiffness restricted to elements with mask[e].
inline SparseMatrix assemble_laplacian(const TriMesh& mesh, const std::vector<char>* mask = nullptr) {
    std::vector<Eigen::Triplet<double>> trips;
    for (int e = 0; e < mesh.num_elements(); ++e) {
        if (mask && !(*mask)[static_cast<std::size_t>(e)]) continue;
        const ElementGradients g = element_gradients(mesh, e);
        const auto& t = mesh.elements[static_cast<std::size_t>(e)];
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) {
                const auto& ga = g.grad[static_cast<std::size_t>(a)];
                const auto& gb = g.grad[static_cast<std::size_t>(b)];
                trips.emplace_back(t[static_cast<std::size_t>(a)], t[static_cast<std::size_t>(b)],
                                   g.area * (ga[0] * gb[0] + ga[1] * gb[1]));
            }
    }
    SparseMatrix A(mesh.num_nodes(), mesh.num_nodes());
    A.setFromTriplets(trips.begin(), trips.end());
    return A;
}

/// Prescribes values on `nodes` and eliminates them symmetrically.
inline SparseSystem apply_dirichlet(SparseSystem system, std::span<const int> nodes, std::span<const double> values) {
    if (values.size() != nodes.size() && values.size() != 1)
        throw std::invalid_argument("apply_dirichlet: need one value per node (or a single shared value)");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const int node = nodes[i];
        if (node < 0 || node >= system.num_nodes())
            throw std::invalid_argument("apply_dirichlet: node " + std::to_string(node) + " not in mesh");
        const double v = values.size() == 1 ? values[0] : values[i];
        system.fixed[static_cast<std::size_t>(system.master[static_cast<std::size_t>(node)])] = v;
        system.bc.dirichlet_nodes.push_back(node);
    }
    std::sort(system.bc.dirichlet_nodes.begin(), system.bc.dirichlet_nodes.end());
    system.bc.dirichlet_nodes.erase(std::unique(system.bc.dirichlet_nodes.begin(), system.bc.dirichlet_nodes.end()),
                                    system.bc.dirichlet_nodes.end());
    system.reduce();
    return system;
}

/// Folds each slave onto its master and optionally pins `gauge` to zero.
inline SparseSystem apply_periodic(SparseSystem system, std::span<const std::pair<int, int>> pairs,
                                   std::optional<int> gauge) {
    const int n = system.num_nodes();
    std::vector<int> master(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) master[static_cast<std::size_t>(i)] = i;
    std::vector<char> is_slave(static_cast<std::size_t>(n), 0);
    for (const auto& [m, s] : pairs) {
        if (m < 0 || s < 0 || m >= n || s >= n)
            throw std::invalid_argument("apply_periodic: pair references a node outside the mesh");
        if (m == s) throw std::invalid_argument("apply_periodic: node paired with itself");
        if (is_slave[static_cast<std::size_t>(s)])
            throw std::invalid_argument("apply_periodic: slave " + std::to_string(s) + " has two masters");
        is_slave[static_cast<std::size_t>(s)] = 1;
        master[static_cast<std::size_t>(s)] = m;
    }
    for (const auto& [m, s] : pairs) {
        if (is_slave[static_cast<std::size_t>(m)])
            throw std::invalid_argument("apply_periodic: master " + std::to_string(m) + " is itself a slave");
    }
    system.master = std::move(master);
    // Constraint data set on a slave before folding moves to its master.
    for (int i = 0; i < n; ++i) {
        const int m = system.master[static_cast<std::size_t>(i)];
        if (m != i && system.fixed[static_cast<std::size_t>(i)]) {
            system.fixed[static_cast<std::size_t>(m)] = system.fixed[static_cast<std::size_t>(i)];
            system.fixed[static_cast<std::size_t>(i)].reset();
        }
    }
    system.bc.periodic = true;
    if (gauge) {
        if (*gauge < 0 || *gauge >= n) throw std::invalid_argument("apply_periodic: gauge node not in mesh");
        system.fixed[static_cast<std::size_t>(system.master[static_cast<std::size_t>(*gauge)])] = 0.0;
        system.bc.gauge = gauge;
    }
    system.reduce();
    return system;
}

/// Cholesky factorisation of a reduced system, reusable for several loads that
/// share the same constraints.
class FactoredSystem {
  public:
    explicit FactoredSystem(SparseSystem system) : system_(std::move(system)) {
        if (system_.num_dofs() == 0) return;
        solver_ = std::make_unique<Eigen::SimplicialLDLT<SparseMatrix>>();
        solver_->compute(system_.matrix);
        if (solver_->info() != Eigen::Success)
            throw SolverError("sparse factorisation failed: the system is singular or indefinite; "
                              "a Dirichlet or gauge constraint is likely missing");
        const Vector& D = solver_->vectorD();
        const double dmax = D.cwiseAbs().maxCoeff();
        if (!(D.minCoeff() > dmax * 1e-10))
            throw SolverError("sparse factorisation produced a non-positive pivot: the system is singular; "
                              "a Dirichlet or gauge constraint is likely missing");
    }

    [[nodiscard]] const SparseSystem& system() const { return system_; }

    /// Solves the assembled problem (with its Dirichlet data).
    [[nodiscard]] ScalarField solve() const { return {system_.expand(solve_reduced(system_.rhs)), system_.bc}; }

    /// Solves with a node-space load and homogeneous constraint values.
    [[nodiscard]] ScalarField solve_homogeneous(const Vector& node_load) const {
        const Vector x = solve_reduced(system_.reduce_load(node_load));
        Vector u = Vector::Zero(system_.num_nodes());
        for (int i = 0; i < system_.num_nodes(); ++i) {
            const int d = system_.dof_map[static_cast<std::size_t>(i)];
            if (d >= 0) u[i] = x[d];
        }
        return {std::move(u), system_.bc};
    }

    static constexpr double tolerance = 1e-10;

  private:
    [[nodiscard]] Vector solve_reduced(const Vector& b) const {
        if (b.size() == 0) return b;
        const double bn = b.norm();
        if (bn == 0.0) return Vector::Zero(b.size());
        Vector x = solver_->solve(b);
        Vector r = b - system_.matrix * x;
        for (int refine = 0; refine < 3 && r.norm() > tolerance * bn; ++refine) {
            x += solver_->solve(r);
            r = b - system_.matrix * x;
        }
        if (!(r.norm() <= tolerance * bn))
            throw SolverError("linear solve did not reach relative residual 1e-10 (got " +
                              std::to_string(r.norm() / bn) + ")");
        return x;
    }

    SparseSystem system_;
    std::unique_ptr<Eigen::SimplicialLDLT<SparseMatrix>> solver_;
};

/// One-shot solve of an assembled and constrained system.
inline ScalarField solve(const SparseSystem& system) { return FactoredSystem(system).solve(); }

/// Relative residual of the reduced equations for a full node-space solution.
inline double relative_residual(const SparseSystem& system, const Vector& u) {
    Vector x = Vector::Zero(system.num_dofs());
    for (int i = 0; i < system.num_nodes(); ++i) {
        const int d = system.dof_map[static_cast<std::size_t>(i)];
        if (d >= 0) x[d] = u[i];
    }
    const double bn = system.rhs.norm();
    const Vector r = system.matrix * x - system.rhs;
    return bn > 0.0 ? r.norm() / bn : r.norm();
}

}  // namespace hmcloak
