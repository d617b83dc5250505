#pragma once

#include "sbn/fem.hpp"
#include "sbn/model.hpp"

namespace sbn {

enum class Pairing : std::uint8_t { p2_p1, p1_p1 };

// One dof map per unknown field. v/p_f live on the fluid region, the other
// four on the porous region; q shares U's element kind.
struct FieldDofs {
    DofMap v, pf, U, xi, q, eta;

    static FieldDofs build(const TriangleMesh& mesh, Pairing pairing) {
        const ElementKind vec = pairing == Pairing::p2_p1 ? ElementKind::p2_vector2
                                                          : ElementKind::p1_vector2;
        FieldDofs d;
        d.v = build_dof_map(mesh, vec, Region::fluid);
        d.pf = build_dof_map(mesh, ElementKind::p1_scalar, Region::fluid);
        d.U = build_dof_map(mesh, vec, Region::porous);
        d.xi = build_dof_map(mesh, ElementKind::p1_scalar, Region::porous);
        d.q = build_dof_map(mesh, vec, Region::porous);
        d.eta = build_dof_map(mesh, ElementKind::p1_scalar, Region::porous);
        return d;
    }
};

// One time level of the six discrete fields, plus the backward difference of
// the displacement and the cached porous pressure p_p = k1*xi + k2*eta.
struct SolutionState {
    int n = 0;
    double t = 0.0;
    std::vector<double> v, pf, U, xi, q, eta;
    std::vector<double> dtU;  // (U^n - U^{n-1})/dt, zero at n = 0
    std::vector<double> pp;

    static SolutionState zero(const FieldDofs& dofs) {
        SolutionState s;
        s.v.assign(dofs.v.n_dofs, 0.0);
        s.pf.assign(dofs.pf.n_dofs, 0.0);
        s.U.assign(dofs.U.n_dofs, 0.0);
        s.xi.assign(dofs.xi.n_dofs, 0.0);
        s.q.assign(dofs.q.n_dofs, 0.0);
        s.eta.assign(dofs.eta.n_dofs, 0.0);
        s.dtU.assign(dofs.U.n_dofs, 0.0);
        s.pp.assign(dofs.xi.n_dofs, 0.0);
        return s;
    }

    void refresh_pressure_cache(const PseudoPressureCoefficients& c) {
        pp = reconstruct_pressure(xi, eta, c);
    }

    bool finite() const {
        return all_finite(v) && all_finite(pf) && all_finite(U) && all_finite(xi) &&
               all_finite(q) && all_finite(eta) && all_finite(dtU) && all_finite(pp);
    }
};

}  // namespace sbn
