#pragma once

// Cloaking objectives on the macro mesh:
//   J1 = int_{Omega_E} (T - T_ref)^2,   J2 = int_{Omega_C} |grad T|^2,
//   J  = w J1 + (1 - w) J2,
// and the normalized exterior mismatch used by the copper/steel benchmark.

#include <stdexcept>
#include <vector>

#include "hmcloak/fem.hpp"
#include "hmcloak/geometry.hpp"

namespace hmcloak {

enum class ObjectiveKind { J1, J2, combined, normalizedB };
enum class MeasureRegion { exterior, core };
enum class ReferenceField { steel, pdms, none };

struct ObjectiveSpec {
    ObjectiveKind kind = ObjectiveKind::J1;
    MeasureRegion measure_region = MeasureRegion::exterior;
    ReferenceField reference = ReferenceField::steel;
    double w = 1.0;

    static ObjectiveSpec j1() { return {ObjectiveKind::J1, MeasureRegion::exterior, ReferenceField::steel, 1.0}; }
    static ObjectiveSpec j2() { return {ObjectiveKind::J2, MeasureRegion::core, ReferenceField::none, 0.0}; }

    void validate() const {
        if (kind == ObjectiveKind::J1 && (measure_region != MeasureRegion::exterior || reference != ReferenceField::steel))
            throw std::invalid_argument("objective: J1 is measured on Omega_E against T_steel");
        if (kind == ObjectiveKind::J2 && (measure_region != MeasureRegion::core || reference != ReferenceField::none))
            throw std::invalid_argument("objective: J2 is measured on Omega_C without a reference");
        if (!(w >= 0.0 && w <= 1.0)) throw std::invalid_argument("objective: w must lie in [0,1]");
    }
};

/// J = w J1 + (1 - w) J2. Units are mixed (K^2 m^2 and K^2), as in the model.
inline double compose(double J1, double J2, double w) {
    if (!(w >= 0.0 && w <= 1.0)) throw std::invalid_argument("compose: w must lie in [0,1]");
    return w * J1 + (1.0 - w) * J2;
}

inline std::vector<char> zone_mask(const TriMesh& mesh, Zone zone) {
    std::vector<char> m(static_cast<std::size_t>(mesh.num_elements()), 0);
    for (int e = 0; e < mesh.num_elements(); ++e)
        m[static_cast<std::size_t>(e)] = mesh.element_region[static_cast<std::size_t>(e)].zone == zone;
    return m;
}

/// Precomputed quadrature operators for J1 (exterior mass) and J2 (core
/// Laplacian). The P1 mass matrix integrates the squared nodal interpolant
/// exactly, which equals the 3-point edge-midpoint rule.
class ObjectiveEvaluator {
  public:
    explicit ObjectiveEvaluator(const TriMesh& mesh) {
        const auto ext = zone_mask(mesh, Zone::exterior);
        const auto core = zone_mask(mesh, Zone::core);
        mass_exterior_ = assemble_mass(mesh, &ext);
        laplace_core_ = assemble_laplacian(mesh, &core);
    }

    [[nodiscard]] double J1(const Vector& T, const Vector& T_ref) const {
        const Vector d = T - T_ref;
        return d.dot(mass_exterior_ * d);
    }
    [[nodiscard]] double J2(const Vector& T) const { return T.dot(laplace_core_ * T); }

    /// Node-space derivative dJ1/dT (the J1 adjoint load).
    [[nodiscard]] Vector J1_gradient(const Vector& T, const Vector& T_ref) const {
        return 2.0 * (mass_exterior_ * (T - T_ref));
    }
    /// Node-space derivative dJ2/dT, i.e. the weak load 2 int_{Omega_C} grad T . grad v.
    [[nodiscard]] Vector J2_gradient(const Vector& T) const { return 2.0 * (laplace_core_ * T); }

    /// int (T - T_steel)^2 / int (T_pdms - T_steel)^2 over Omega_E.
    [[nodiscard]] double normalizedB(const Vector& T, const Vector& T_steel, const Vector& T_pdms) const {
        const double den = J1(T_pdms, T_steel);
        if (!(den > 0.0)) throw std::invalid_argument("normalizedB: T_PDMS equals T_steel on Omega_E");
        return J1(T, T_steel) / den;
    }

  private:
    SparseMatrix mass_exterior_;
    SparseMatrix laplace_core_;
};

struct ObjectiveValues {
    double J1 = 0.0;
    double J2 = 0.0;
};

inline ObjectiveValues evaluate_objectives(const ScalarField& T, const ScalarField& T_steel, const TriMesh& mesh) {
    const ObjectiveEvaluator ev(mesh);
    return {ev.J1(T.values, T_steel.values), ev.J2(T.values)};
}

inline double normalizedB(const TriMesh& mesh, const ScalarField& T, const ScalarField& T_steel,
                          const ScalarField& T_pdms) {
    return ObjectiveEvaluator(mesh).normalizedB(T.values, T_steel.values, T_pdms.values);
}

}  // namespace hmcloak
