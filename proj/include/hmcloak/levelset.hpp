#pragma once

// Level-set description of a two-phase unit cell and its reaction-diffusion
// evolution  d(phi)/dt = -K_phi (J' - tau lap(phi)).

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "hmcloak/fem.hpp"
#include "hmcloak/geometry.hpp"

namespace hmcloak {

/// Quintic smoothed Heaviside on [-d, d]; C2 at both ends.
constexpr double characteristic(double phi, double d) {
    if (phi <= -d) return 0.0;
    if (phi >= d) return 1.0;
    const double s = phi / d;
    const double s2 = s * s;
    const double h = 0.5 + s * (15.0 / 16.0 - s2 * (5.0 / 8.0 - 3.0 / 16.0 * s2));
    return h < 0.0 ? 0.0 : (h > 1.0 ? 1.0 : h);  // rounding near |s| = 1
}

/// Nodal level set on a unit-cell mesh; phi > 0 is phase a, phi < 0 phase b.
struct LevelSetField {
    Vector phi;
    int cell_index = 1;  ///< 1-based sector number l
    double d = 0.2;
};

inline std::vector<double> nodal_characteristic(const Vector& phi, double d) {
    std::vector<double> chi(static_cast<std::size_t>(phi.size()));
    for (Eigen::Index i = 0; i < phi.size(); ++i) chi[static_cast<std::size_t>(i)] = characteristic(phi[i], d);
    return chi;
}

/// chi per element, evaluated at the centroid value of phi.
inline std::vector<double> element_characteristic(const TriMesh& mesh, const Vector& phi, double d) {
    std::vector<double> chi(static_cast<std::size_t>(mesh.num_elements()));
    for (int e = 0; e < mesh.num_elements(); ++e) {
        const auto& t = mesh.elements[static_cast<std::size_t>(e)];
        const double pc = (phi[t[0]] + phi[t[1]] + phi[t[2]]) / 3.0;
        chi[static_cast<std::size_t>(e)] = characteristic(pc, d);
    }
    return chi;
}

/// Row-summed (lumped) P1 mass; with a periodic mesh the weights of paired
/// nodes are merged onto the master and mirrored to the slave.
inline Vector lumped_mass(const TriMesh& mesh, bool fold_periodic) {
    Vector m = Vector::Zero(mesh.num_nodes());
    for (int e = 0; e < mesh.num_elements(); ++e) {
        const double a = mesh.signed_area(e) / 3.0;
        for (int v : mesh.elements[static_cast<std::size_t>(e)]) m[v] += a;
    }
    if (fold_periodic) {
        for (const auto& [ma, sl] : mesh.periodic_pairs) {
            m[ma] += m[sl];
            m[sl] = 0.0;
        }
        for (const auto& [ma, sl] : mesh.periodic_pairs) m[sl] = m[ma];
    }
    return m;
}

/// Unique-DOF integration weights: each periodic class counted once.
inline Vector periodic_weights(const TriMesh& mesh) {
    Vector m = Vector::Zero(mesh.num_nodes());
    for (int e = 0; e < mesh.num_elements(); ++e) {
        const double a = mesh.signed_area(e) / 3.0;
        for (int v : mesh.elements[static_cast<std::size_t>(e)]) m[v] += a;
    }
    for (const auto& [ma, sl] : mesh.periodic_pairs) {
        m[ma] += m[sl];
        m[sl] = 0.0;
    }
    return m;
}

/// Semi-implicit step  (M + dt K_phi tau A) phi+ = M (phi - dt K_phi J'),
/// periodic, followed by a nodal clamp to [-1, 1]. M is the consistent mass.
/// The operator is factored once and reused.
class LevelSetUpdater {
  public:
    LevelSetUpdater(const TriMesh& mesh, double K_phi, double tau, double dt)
        : mesh_(&mesh), K_phi_(K_phi), tau_(tau), dt_(dt) {
        if (!(K_phi > 0.0)) throw std::invalid_argument("level set: K_phi must be positive");
        if (!(tau >= 0.0)) throw std::invalid_argument("level set: tau must be non-negative");
        if (!(dt > 0.0)) throw std::invalid_argument("level set: dt must be positive");
        M_ = assemble_mass(mesh);
        SparseMatrix S = assemble_laplacian(mesh) * (dt * K_phi * tau) + M_;
        SparseSystem sys = detail::make_system(std::move(S), Vector::Zero(mesh.num_nodes()));
        if (!mesh.periodic_pairs.empty()) sys = apply_periodic(std::move(sys), mesh.periodic_pairs, std::nullopt);
        factor_ = std::make_unique<FactoredSystem>(std::move(sys));
    }

    [[nodiscard]] LevelSetField update(const LevelSetField& field, const Vector& J_prime) const {
        if (J_prime.size() != field.phi.size()) throw std::invalid_argument("level set update: size mismatch");
        if (!J_prime.allFinite()) throw std::runtime_error("level set update: non-finite sensitivity");
        const Vector load = M_ * (field.phi - dt_ * K_phi_ * J_prime);
        LevelSetField out = field;
        out.phi = factor_->solve_homogeneous(load).values.cwiseMax(-1.0).cwiseMin(1.0);
        if (!out.phi.allFinite()) throw std::runtime_error("level set update: non-finite level set");
        return out;
    }

  private:
    const TriMesh* mesh_;
    double K_phi_, tau_, dt_;
    SparseMatrix M_;
    std::unique_ptr<FactoredSystem> factor_;
};

/// Initial layouts.
struct PdmsDisk {
    double radius = 0.25;
    double width = 0.1;  ///< distance over which |phi| ramps to 1
};
struct UniformPhase {
    int sign = 1;
};
struct CustomFile {
    std::string path;
};
using InitPattern = std::variant<PdmsDisk, UniformPhase, CustomFile>;

inline LevelSetField read_level_set_csv(const std::filesystem::path& path, const TriMesh& mesh, int cell_index, double d);

/// Disk of phase b (negative phi) centred in the cell:
/// phi = clamp((|y - c| - r) / width, -1, 1).
inline LevelSetField initialize(const InitPattern& pattern, const TriMesh& mesh, int cell_index = 1, double d = 0.2) {
    LevelSetField f;
    f.cell_index = cell_index;
    f.d = d;
    f.phi = Vector::Zero(mesh.num_nodes());
    if (const auto* disk = std::get_if<PdmsDisk>(&pattern)) {
        if (!(disk->radius >= 0.0 && disk->width > 0.0)) throw std::invalid_argument("pdms_disk: invalid radius/width");
        for (int i = 0; i < mesh.num_nodes(); ++i) {
            const Point2& p = mesh.nodes[static_cast<std::size_t>(i)];
            const double r = std::hypot(p.x - 0.5, p.y - 0.5);
            f.phi[i] = std::clamp((r - disk->radius) / disk->width, -1.0, 1.0);
        }
    } else if (const auto* uni = std::get_if<UniformPhase>(&pattern)) {
        if (uni->sign == 0) throw std::invalid_argument("uniform: sign must be +1 or -1");
        f.phi.setConstant(uni->sign > 0 ? 1.0 : -1.0);
    } else {
        return read_level_set_csv(std::get<CustomFile>(pattern).path, mesh, cell_index, d);
    }
    return f;
}

/// CSV with header `node_index,y1,y2,phi`; values carry 17 significant digits.
inline void write_level_set_csv(const std::filesystem::path& path, const TriMesh& mesh, const LevelSetField& f) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "node_index,y1,y2,phi\n" << std::setprecision(17);
    for (int i = 0; i < mesh.num_nodes(); ++i) {
        const Point2& p = mesh.nodes[static_cast<std::size_t>(i)];
        out << i << ',' << p.x << ',' << p.y << ',' << f.phi[i] << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

/// Number of squares per side implied by a level-set CSV's node count.
inline int cell_divisions_of_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    long rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    const long n1 = std::lround(std::sqrt(static_cast<double>(rows)));
    if (n1 * n1 != rows || n1 < 2) throw std::runtime_error(path.string() + ": node count is not a square grid");
    return static_cast<int>(n1 - 1);
}

inline LevelSetField read_level_set_csv(const std::filesystem::path& path, const TriMesh& mesh, int cell_index, double d) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind("node_index,y1,y2,phi", 0) != 0)
        throw std::runtime_error(path.string() + ": missing header node_index,y1,y2,phi");
    LevelSetField f;
    f.cell_index = cell_index;
    f.d = d;
    f.phi = Vector::Constant(mesh.num_nodes(), std::nan(""));
    int count = 0;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string a, b, c, v;
        if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c, ',') || !std::getline(ss, v))
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected 4 columns");
        int idx = 0;
        double y1 = 0, y2 = 0, phi = 0;
        try {
            idx = std::stoi(a);
            y1 = std::stod(b);
            y2 = std::stod(c);
            phi = std::stod(v);
        } catch (const std::exception&) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": malformed number");
        }
        if (idx < 0 || idx >= mesh.num_nodes())
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": node index out of range");
        const Point2& p = mesh.nodes[static_cast<std::size_t>(idx)];
        if (std::abs(p.x - y1) > 1e-9 || std::abs(p.y - y2) > 1e-9)
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": coordinates do not match the cell mesh");
        if (!(phi >= -1.0 && phi <= 1.0))
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": phi outside [-1,1]");
        f.phi[idx] = phi;
        ++count;
    }
    if (count != mesh.num_nodes())
        throw std::runtime_error(path.string() + ": expected " + std::to_string(mesh.num_nodes()) + " nodes, got " +
                                 std::to_string(count));
    return f;
}

}  // namespace hmcloak
