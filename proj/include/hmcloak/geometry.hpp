#pragma once

// Macroscale cloak domain, unit-cell square, and their triangular meshes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hmcloak {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

enum class Zone : std::uint8_t { exterior, design, core, cell };

/// Element region. `sector` is the 0-based design-sector index (D_{sector+1})
/// when zone == design, -1 otherwise.
struct RegionTag {
    Zone zone = Zone::cell;
    int sector = -1;

    friend bool operator==(const RegionTag&, const RegionTag&) = default;
};

enum class BoundaryTag : std::uint8_t {
    gamma_a,    // x1 = -Lx/2, T_low
    gamma_b,    // x1 = +Lx/2, T_high
    gamma_n,    // top edge, adiabatic
    gamma_sym,  // x2 = 0, mirror plane (adiabatic)
    left,
    right,
    bottom,
    top
};

inline const char* to_string(BoundaryTag t) {
    switch (t) {
        case BoundaryTag::gamma_a: return "gamma_a";
        case BoundaryTag::gamma_b: return "gamma_b";
        case BoundaryTag::gamma_n: return "gamma_n";
        case BoundaryTag::gamma_sym: return "gamma_sym";
        case BoundaryTag::left: return "left";
        case BoundaryTag::right: return "right";
        case BoundaryTag::bottom: return "bottom";
        case BoundaryTag::top: return "top";
    }
    return "unknown";
}

struct BoundaryEdge {
    std::array<int, 2> nodes{};
    int element = -1;
    BoundaryTag tag = BoundaryTag::left;
};

/// Linear triangle mesh. Immutable once built; share by const reference.
struct TriMesh {
    std::vector<Point2> nodes;
    std::vector<std::array<int, 3>> elements;
    std::vector<RegionTag> element_region;
    std::vector<BoundaryEdge> boundary_edges;
    /// (master, slave) node pairs; only populated for unit-cell meshes.
    std::vector<std::pair<int, int>> periodic_pairs;
    /// Squares per side for structured unit-cell meshes, 0 otherwise.
    int cell_divisions = 0;

    [[nodiscard]] int num_nodes() const { return static_cast<int>(nodes.size()); }
    [[nodiscard]] int num_elements() const { return static_cast<int>(elements.size()); }

    [[nodiscard]] double signed_area(int e) const {
        const auto& t = elements[static_cast<std::size_t>(e)];
        const Point2& a = nodes[static_cast<std::size_t>(t[0])];
        const Point2& b = nodes[static_cast<std::size_t>(t[1])];
        const Point2& c = nodes[static_cast<std::size_t>(t[2])];
        return 0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
    }

    [[nodiscard]] Point2 centroid(int e) const {
        const auto& t = elements[static_cast<std::size_t>(e)];
        Point2 c;
        for (int v : t) {
            c.x += nodes[static_cast<std::size_t>(v)].x / 3.0;
            c.y += nodes[static_cast<std::size_t>(v)].y / 3.0;
        }
        return c;
    }

    /// Sorted, de-duplicated node indices on edges carrying `tag`.
    [[nodiscard]] std::vector<int> nodes_on(BoundaryTag tag) const {
        std::vector<char> mark(nodes.size(), 0);
        for (const auto& be : boundary_edges) {
            if (be.tag != tag) continue;
            mark[static_cast<std::size_t>(be.nodes[0])] = 1;
            mark[static_cast<std::size_t>(be.nodes[1])] = 1;
        }
        std::vector<int> out;
        for (std::size_t i = 0; i < mark.size(); ++i)
            if (mark[i]) out.push_back(static_cast<int>(i));
        return out;
    }

    [[nodiscard]] double region_area(Zone zone, int sector = -1) const {
        double a = 0.0;
        for (int e = 0; e < num_elements(); ++e) {
            const auto& r = element_region[static_cast<std::size_t>(e)];
            if (r.zone == zone && (sector < 0 || r.sector == sector)) a += signed_area(e);
        }
        return a;
    }
};

/// Macroscale geometry. Origin at the cloak centre; only x2 >= 0 is meshed.
struct MacroGeometry {
    double Lx = 5.0;
    double Ly = 8.0;
    double R_D = 1.35;
    double R_c = 0.4;
    int n_sectors = 8;

    void validate() const {
        if (!(Lx > 0.0 && Ly > 0.0))
            throw std::invalid_argument("geometry: Lx and Ly must be positive");
        if (!(R_c >= 0.0 && R_c < R_D))
            throw std::invalid_argument("geometry: require 0 <= R_c < R_D");
        if (!(R_D < 0.5 * Lx && R_D < 0.5 * Ly))
            throw std::invalid_argument("geometry: design ring must fit inside the domain (R_D < Lx/2, R_D < Ly/2)");
        if (n_sectors < 1) throw std::invalid_argument("geometry: n_sectors must be >= 1");
    }

    /// Angular width of one design sector in the computational (upper) half.
    [[nodiscard]] double sector_angle() const { return std::numbers::pi / n_sectors; }

    /// Zone of a point; sectors are numbered counter-clockwise from the +x1 axis.
    [[nodiscard]] RegionTag classify(Point2 p) const {
        const double r = std::hypot(p.x, p.y);
        if (r < R_c) return {Zone::core, -1};
        if (r >= R_D) return {Zone::exterior, -1};
        double ang = std::atan2(p.y, p.x);
        if (ang < 0.0) ang = 0.0;
        int s = static_cast<int>(std::floor(ang / sector_angle()));
        if (s >= n_sectors) s = n_sectors - 1;
        return {Zone::design, s};
    }
};

/// Knobs for the macro mesh. Zero means "choose automatically".
struct MacroMeshResolution {
    int sector_divisions = 4;  ///< angular intervals per design sector
    int ring_layers = 0;       ///< radial layers across R_c < r < R_D
    int core_layers = 0;       ///< radial layers across r < R_c
    int outer_layers = 0;      ///< layers from r = R_D to the rectangle

    /// Resolution whose element size at r = R_D is at most `h`.
    static MacroMeshResolution for_element_size(const MacroGeometry& g, double h) {
        MacroMeshResolution res;
        const double arc = g.R_D * g.sector_angle();
        res.sector_divisions = std::max(1, static_cast<int>(std::ceil(arc / h)));
        res.ring_layers = std::max(2, static_cast<int>(std::ceil((g.R_D - g.R_c) / h)));
        return res;
    }
};

struct UnitCellGeometry {
    double side_length = 1.0;
    int mesh_resolution = 64;
};

namespace detail {

// Geometric stretching s_0 = 0 < ... < s_n = 1 with first step ~ h0/L and last ~ h1/L.
inline std::vector<double> graded_steps(double L, double h0, double h1, int forced_n) {
    double g = 1.0;
    int n = 0;
    if (h1 > h0 && h1 < L && h0 < L) {
        g = std::min(1.25, (L - h0) / (L - h1));
    }
    if (g <= 1.0 + 1e-9) {
        g = 1.0;
        n = std::max(2, static_cast<int>(std::ceil(L / h0)));
    } else {
        n = std::max(2, static_cast<int>(std::ceil(std::log(1.0 + L * (g - 1.0) / h0) / std::log(g))));
    }
    if (forced_n > 0) n = forced_n;
    std::vector<double> s(static_cast<std::size_t>(n) + 1);
    for (int j = 0; j <= n; ++j) {
        s[static_cast<std::size_t>(j)] =
            (g == 1.0) ? static_cast<double>(j) / n : (std::pow(g, j) - 1.0) / (std::pow(g, n) - 1.0);
    }
    s.back() = 1.0;
    return s;
}

}  // namespace detail

/// Polar-structured mesh of the upper half rectangle [-Lx/2, Lx/2] x [0, Ly/2].
///
/// Rings of nodes at constant radius resolve r = R_c and r = R_D exactly (up to
/// the chordal approximation) and every design-sector boundary is a mesh ray,
/// so region tags are element-wise. Outside R_D the rays are stretched onto the
/// rectangle; the two top corners are always mesh nodes.
inline TriMesh build_macro_mesh(const MacroGeometry& g, const MacroMeshResolution& res) {
    g.validate();
    if (res.sector_divisions < 1)
        throw std::invalid_argument("macro mesh: sector_divisions must be >= 1");
    if (res.ring_layers == 1)
        throw std::invalid_argument("macro mesh: fewer than 2 elements across the design annulus");

    const double pi = std::numbers::pi;
    const int n_theta = g.n_sectors * res.sector_divisions;
    const double dtheta = pi / n_theta;
    const double H = 0.5 * g.Ly;
    const double X = 0.5 * g.Lx;

    // Radial stations inside the disk r <= R_D.
    const double r_mid = 0.5 * (g.R_c + g.R_D);
    int ring_layers = res.ring_layers;
    if (ring_layers <= 0) {
        ring_layers = std::max(2, static_cast<int>(std::ceil((g.R_D - g.R_c) / (r_mid * dtheta))));
    }
    const double dr_ring = (g.R_D - g.R_c) / ring_layers;
    if ((g.R_D - g.R_c) / ring_layers > 0.5 * (g.R_D - g.R_c))
        throw std::invalid_argument("macro mesh: fewer than 2 elements across the design annulus");

    std::vector<double> radii{0.0};
    int core_layers = 0;
    if (g.R_c > 0.0) {
        core_layers = res.core_layers > 0 ? res.core_layers
                                          : std::max(1, static_cast<int>(std::ceil(g.R_c / dr_ring)));
        for (int j = 1; j <= core_layers; ++j) radii.push_back(g.R_c * j / core_layers);
    }
    for (int j = 1; j <= ring_layers; ++j) radii.push_back(g.R_c + dr_ring * j);
    radii.back() = g.R_D;
    const int disk_layers = static_cast<int>(radii.size()) - 1;

    // Boundary parametrisation: ray index k maps onto the half-rectangle outline.
    const double alpha1 = std::atan2(H, X);
    const int k1 = std::max(1, static_cast<int>(std::lround(alpha1 / dtheta)));
    const int k2 = n_theta - k1;
    if (k2 <= k1) throw std::invalid_argument("macro mesh: too few angular divisions for the domain aspect ratio");
    auto outline = [&](int k) -> Point2 {
        if (k <= k1) {
            const double a = alpha1 * k / k1;
            return {X, X * std::tan(a)};
        }
        if (k < k2) {
            const double a = alpha1 + (pi - 2.0 * alpha1) * (k - k1) / (k2 - k1);
            return {H / std::tan(a), H};
        }
        const double a = (pi - alpha1) + alpha1 * (k - k2) / (n_theta - k2);
        if (k == n_theta) return {-X, 0.0};
        return {-X, -X * std::tan(a)};
    };

    // Outer stretching.
    double L_mean = 0.0;
    for (int k = 0; k <= n_theta; ++k) {
        const Point2 b = outline(k);
        L_mean += std::hypot(b.x, b.y) - g.R_D;
    }
    L_mean /= (n_theta + 1);
    const double h_out = (g.Lx + 2.0 * H) / n_theta;
    const std::vector<double> s = detail::graded_steps(L_mean, g.R_D * dtheta, h_out, res.outer_layers);
    const int outer_layers = static_cast<int>(s.size()) - 1;

    TriMesh m;
    // index(j, k): j = 0 is the centre, 1..disk_layers disk rings, then outer layers.
    const int total_rings = disk_layers + outer_layers;
    m.nodes.reserve(static_cast<std::size_t>(1 + total_rings * (n_theta + 1)));
    m.nodes.push_back({0.0, 0.0});
    for (int j = 1; j <= disk_layers; ++j) {
        for (int k = 0; k <= n_theta; ++k) {
            const double th = k * dtheta;
            const double r = radii[static_cast<std::size_t>(j)];
            Point2 p{r * std::cos(th), r * std::sin(th)};
            if (k == 0 || k == n_theta) p.y = 0.0;
            m.nodes.push_back(p);
        }
    }
    for (int j = 1; j <= outer_layers; ++j) {
        const double sj = s[static_cast<std::size_t>(j)];
        for (int k = 0; k <= n_theta; ++k) {
            const double th = k * dtheta;
            const Point2 a{g.R_D * std::cos(th), g.R_D * std::sin(th)};
            const Point2 b = outline(k);
            Point2 p{a.x + sj * (b.x - a.x), (k == 0 || k == n_theta) ? 0.0 : a.y + sj * (b.y - a.y)};
            if (j == outer_layers) p = b;
            m.nodes.push_back(p);
        }
    }
    auto idx = [&](int j, int k) { return j == 0 ? 0 : 1 + (j - 1) * (n_theta + 1) + k; };

    auto region_of_layer = [&](int j_outer, int k) -> RegionTag {
        // j_outer is the outer ring index of the layer (1-based).
        if (j_outer <= core_layers) return {Zone::core, -1};
        if (j_outer <= disk_layers) return {Zone::design, std::min(k / res.sector_divisions, g.n_sectors - 1)};
        return {Zone::exterior, -1};
    };

    auto push_tri = [&](int a, int b, int c, RegionTag tag) {
        std::array<int, 3> t{a, b, c};
        m.elements.push_back(t);
        m.element_region.push_back(tag);
        if (m.signed_area(m.num_elements() - 1) < 0.0) std::swap(m.elements.back()[1], m.elements.back()[2]);
    };

    for (int k = 0; k < n_theta; ++k) push_tri(0, idx(1, k), idx(1, k + 1), region_of_layer(1, k));
    for (int j = 1; j < total_rings; ++j) {
        for (int k = 0; k < n_theta; ++k) {
            const int a = idx(j, k), b = idx(j + 1, k), c = idx(j + 1, k + 1), d = idx(j, k + 1);
            const RegionTag tag = region_of_layer(j + 1, k);
            const auto& pa = m.nodes[static_cast<std::size_t>(a)];
            const auto& pb = m.nodes[static_cast<std::size_t>(b)];
            const auto& pc = m.nodes[static_cast<std::size_t>(c)];
            const auto& pd = m.nodes[static_cast<std::size_t>(d)];
            const double ac = std::hypot(pa.x - pc.x, pa.y - pc.y);
            const double bd = std::hypot(pb.x - pd.x, pb.y - pd.y);
            if (ac <= bd) {
                push_tri(a, b, c, tag);
                push_tri(a, c, d, tag);
            } else {
                push_tri(a, b, d, tag);
                push_tri(b, c, d, tag);
            }
        }
    }

    // Boundary edges and their owning elements.
    std::vector<std::vector<int>> node_elems(m.nodes.size());
    for (int e = 0; e < m.num_elements(); ++e)
        for (int q : m.elements[static_cast<std::size_t>(e)]) node_elems[static_cast<std::size_t>(q)].push_back(e);
    auto owner_fast = [&](int u, int v) {
        for (int e : node_elems[static_cast<std::size_t>(u)]) {
            const auto& t = m.elements[static_cast<std::size_t>(e)];
            if (t[0] == v || t[1] == v || t[2] == v) return e;
        }
        throw std::logic_error("macro mesh: boundary edge without element");
    };
    auto add_edge = [&](int u, int v, BoundaryTag tag) { m.boundary_edges.push_back({{u, v}, owner_fast(u, v), tag}); };

    for (int j = 0; j < total_rings; ++j) {
        add_edge(idx(j, 0), idx(j + 1, 0), BoundaryTag::gamma_sym);
        add_edge(idx(j, n_theta), idx(j + 1, n_theta), BoundaryTag::gamma_sym);
    }
    for (int k = 0; k < n_theta; ++k) {
        const BoundaryTag tag = k < k1 ? BoundaryTag::gamma_b : (k < k2 ? BoundaryTag::gamma_n : BoundaryTag::gamma_a);
        add_edge(idx(total_rings, k), idx(total_rings, k + 1), tag);
    }
    return m;
}

/// Structured (0,1)^2 triangulation with alternating diagonals ("union jack"),
/// which is invariant under 90-degree rotations when the division count is even.
/// Elements of square (i, j) are 2*(j*n + i) and 2*(j*n + i) + 1.
inline TriMesh build_cell_mesh(const UnitCellGeometry& cell) {
    const int n = cell.mesh_resolution;
    if (n < 16) throw std::invalid_argument("cell mesh: resolution must be >= 16 elements per side");
    const double L = cell.side_length;
    TriMesh m;
    m.cell_divisions = n;
    m.nodes.reserve(static_cast<std::size_t>((n + 1) * (n + 1)));
    for (int j = 0; j <= n; ++j)
        for (int i = 0; i <= n; ++i) m.nodes.push_back({L * i / n, L * j / n});
    auto id = [n](int i, int j) { return j * (n + 1) + i; };
    m.elements.reserve(static_cast<std::size_t>(2 * n * n));
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            const int a = id(i, j), b = id(i + 1, j), c = id(i + 1, j + 1), d = id(i, j + 1);
            if ((i + j) % 2 == 0) {
                m.elements.push_back({a, b, c});
                m.elements.push_back({a, c, d});
            } else {
                m.elements.push_back({a, b, d});
                m.elements.push_back({b, c, d});
            }
        }
    }
    m.element_region.assign(m.elements.size(), RegionTag{Zone::cell, -1});
    for (int i = 0; i < n; ++i) {
        const int eb = 2 * i;  // bottom row squares: edge (i,0)-(i+1,0) lies in the first triangle
        m.boundary_edges.push_back({{id(i, 0), id(i + 1, 0)}, eb, BoundaryTag::bottom});
        const int et = 2 * ((n - 1) * n + i) + 1;
        m.boundary_edges.push_back({{id(i + 1, n), id(i, n)}, et, BoundaryTag::top});
    }
    for (int j = 0; j < n; ++j) {
        const int el = 2 * (j * n) + ((j % 2 == 0) ? 1 : 0);
        m.boundary_edges.push_back({{id(0, j + 1), id(0, j)}, el, BoundaryTag::left});
        const int sq = j * n + (n - 1);
        const int er = 2 * sq + (((n - 1 + j) % 2 == 0) ? 0 : 1);
        m.boundary_edges.push_back({{id(n, j), id(n, j + 1)}, er, BoundaryTag::right});
    }
    // Periodic pairs: right -> left, top -> bottom, all corners -> (0,0).
    for (int j = 1; j < n; ++j) m.periodic_pairs.emplace_back(id(0, j), id(n, j));
    for (int i = 1; i < n; ++i) m.periodic_pairs.emplace_back(id(i, 0), id(i, n));
    m.periodic_pairs.emplace_back(id(0, 0), id(n, 0));
    m.periodic_pairs.emplace_back(id(0, 0), id(0, n));
    m.periodic_pairs.emplace_back(id(0, 0), id(n, n));
    return m;
}

/// Element of a structured cell mesh containing y (wrapped into [0,1)^2) and
/// its barycentric coordinates.
struct CellLocation {
    int element = -1;
    std::array<double, 3> bary{};
};

inline CellLocation locate_in_cell(const TriMesh& cell, Point2 y) {
    const int n = cell.cell_divisions;
    if (n <= 0) throw std::invalid_argument("locate_in_cell: not a structured cell mesh");
    const double L = cell.nodes.back().x;
    double u = y.x / L - std::floor(y.x / L);
    double v = y.y / L - std::floor(y.y / L);
    int i = std::min(n - 1, static_cast<int>(u * n));
    int j = std::min(n - 1, static_cast<int>(v * n));
    const int sq = j * n + i;
    for (int t = 0; t < 2; ++t) {
        const int e = 2 * sq + t;
        const auto& tri = cell.elements[static_cast<std::size_t>(e)];
        const Point2& a = cell.nodes[static_cast<std::size_t>(tri[0])];
        const Point2& b = cell.nodes[static_cast<std::size_t>(tri[1])];
        const Point2& c = cell.nodes[static_cast<std::size_t>(tri[2])];
        const double px = u * L, py = v * L;
        const double det = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
        const double l1 = ((px - a.x) * (c.y - a.y) - (c.x - a.x) * (py - a.y)) / det;
        const double l2 = ((b.x - a.x) * (py - a.y) - (px - a.x) * (b.y - a.y)) / det;
        const double l0 = 1.0 - l1 - l2;
        if ((l0 >= -1e-12 && l1 >= -1e-12 && l2 >= -1e-12) || t == 1) return {e, {l0, l1, l2}};
    }
    return {};
}

}  // namespace hmcloak
