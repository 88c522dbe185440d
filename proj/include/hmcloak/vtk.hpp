#pragma once

// Legacy-VTK (ASCII, UNSTRUCTURED_GRID) export of triangle meshes with
// point and cell data.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hmcloak/fem.hpp"
#include "hmcloak/geometry.hpp"

namespace hmcloak {

struct VtkVectorField {
    std::string name;
    std::vector<std::array<double, 2>> values;
};

struct VtkData {
    std::vector<std::pair<std::string, const Vector*>> point_scalars;
    std::vector<std::pair<std::string, std::vector<double>>> cell_scalars;
    std::vector<VtkVectorField> cell_vectors;
};

inline void write_vtk(const std::filesystem::path& path, const TriMesh& mesh, const VtkData& data,
                      const std::string& title = "hmcloak") {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << std::setprecision(12);
    out << "# vtk DataFile Version 3.0\n" << title << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
    out << "POINTS " << mesh.num_nodes() << " double\n";
    for (const auto& p : mesh.nodes) out << p.x << ' ' << p.y << " 0\n";
    out << "CELLS " << mesh.num_elements() << ' ' << 4 * mesh.num_elements() << '\n';
    for (const auto& t : mesh.elements) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
    out << "CELL_TYPES " << mesh.num_elements() << '\n';
    for (int e = 0; e < mesh.num_elements(); ++e) out << "5\n";

    if (!data.point_scalars.empty()) {
        out << "POINT_DATA " << mesh.num_nodes() << '\n';
        for (const auto& [name, v] : data.point_scalars) {
            if (v->size() != mesh.num_nodes()) throw std::invalid_argument("vtk: point field " + name + " has wrong size");
            out << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
            for (Eigen::Index i = 0; i < v->size(); ++i) out << (*v)[i] << '\n';
        }
    }
    out << "CELL_DATA " << mesh.num_elements() << '\n';
    out << "SCALARS zone int 1\nLOOKUP_TABLE default\n";
    for (const auto& r : mesh.element_region) out << static_cast<int>(r.zone) << '\n';
    out << "SCALARS sector int 1\nLOOKUP_TABLE default\n";
    for (const auto& r : mesh.element_region) out << r.sector + 1 << '\n';
    for (const auto& [name, v] : data.cell_scalars) {
        if (static_cast<int>(v.size()) != mesh.num_elements()) throw std::invalid_argument("vtk: cell field " + name + " has wrong size");
        out << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
        for (double x : v) out << x << '\n';
    }
    for (const auto& f : data.cell_vectors) {
        if (static_cast<int>(f.values.size()) != mesh.num_elements())
            throw std::invalid_argument("vtk: cell vector " + f.name + " has wrong size");
        out << "VECTORS " << f.name << " double\n";
        for (const auto& q : f.values) out << q[0] << ' ' << q[1] << " 0\n";
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

/// Element heat flux -K grad T.
inline std::vector<std::array<double, 2>> heat_flux(const TriMesh& mesh, std::span<const Tensor2> K, const Vector& T) {
    std::vector<std::array<double, 2>> q(static_cast<std::size_t>(mesh.num_elements()));
    for (int e = 0; e < mesh.num_elements(); ++e) {
        const auto g = field_gradient(mesh, element_gradients(mesh, e), e, T);
        const auto kg = K[static_cast<std::size_t>(e)].apply(g);
        q[static_cast<std::size_t>(e)] = {-kg[0], -kg[1]};
    }
    return q;
}

/// Macro fields: T, T_sub = T - T_steel, flux and conductivity.
inline void write_macro_vtk(const std::filesystem::path& path, const TriMesh& mesh, std::span<const Tensor2> K,
                            const Vector& T, const Vector& T_steel) {
    const Vector T_sub = T - T_steel;
    VtkData data;
    data.point_scalars = {{"T", &T}, {"T_sub", &T_sub}};
    data.cell_vectors.push_back({"flux", heat_flux(mesh, K, T)});
    std::vector<double> k11, k12, k22;
    for (const auto& k : K) {
        k11.push_back(k.xx);
        k12.push_back(k.xy);
        k22.push_back(k.yy);
    }
    data.cell_scalars = {{"K11", std::move(k11)}, {"K12", std::move(k12)}, {"K22", std::move(k22)}};
    write_vtk(path, mesh, data);
}

}  // namespace hmcloak
