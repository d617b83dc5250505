#pragma once

#include <functional>
#include <map>

#include "sbn/mesh.hpp"

namespace sbn {

// ---------------------------------------------------------------------------
// Physical constants of the coupled model. The hydraulic conductivity is a
// symmetric positive definite 2x2 tensor; the scalar shorthand fills the
// diagonal.
// ---------------------------------------------------------------------------

struct PhysicalParameters {
    double mu_f = 1.0;      // fluid viscosity
    double mu_p = 1.0;      // shear Lame coefficient of the skeleton
    double lambda_p = 0.0;  // volumetric Lame coefficient
    double s0 = 1e-3;       // mass storage coefficient
    double alpha = 1.0;     // Biot-Willis constant
    Mat2 conductivity = Mat2::identity();
    double beta = 0.0;      // BJS tangential resistance

    void validate() const {
        if (!(mu_f > 0.0)) throw ParameterError("mu_f must be > 0");
        if (!(mu_p > 0.0)) throw ParameterError("mu_p must be > 0");
        if (!(lambda_p >= 0.0)) throw ParameterError("lambda_p must be >= 0");
        if (!(s0 > 0.0)) throw ParameterError("s0 must be > 0");
        if (!(alpha > 0.0)) throw ParameterError("alpha must be > 0");
        if (!(beta >= 0.0)) throw ParameterError("beta must be >= 0");
        if (!conductivity.symmetric_positive_definite(1e-12))
            throw ParameterError("conductivity must be symmetric positive definite");
    }

    static Mat2 scalar_conductivity(double k) { return {k, 0.0, 0.0, k}; }
};

// Coefficients of the change of variables that splits the poroelastic part
// into a deformation and a diffusion process:
//   xi  = alpha*p_p - lambda_p*div U,   eta = s0*p_p + alpha*div U,
//   p_p = k1*xi + k2*eta,               div U = k1*eta - k3*xi.
struct PseudoPressureCoefficients {
    double k1 = 0.0;
    double k2 = 0.0;
    double k3 = 0.0;
};

inline PseudoPressureCoefficients pseudo_coefficients(const PhysicalParameters& p) {
    const double denom = p.alpha * p.alpha + p.lambda_p * p.s0;
    if (!(denom > 0.0))
        throw ParameterError("pseudo_coefficients: alpha^2 + lambda_p*s0 must be > 0");
    return {p.alpha / denom, p.lambda_p / denom, p.s0 / denom};
}

inline std::vector<double> reconstruct_pressure(const std::vector<double>& xi,
                                                const std::vector<double>& eta,
                                                const PseudoPressureCoefficients& c) {
    if (xi.size() != eta.size())
        throw UsageError("reconstruct_pressure: xi and eta must share a dof map");
    std::vector<double> p(xi.size());
    for (size_t i = 0; i < p.size(); ++i) p[i] = c.k1 * xi[i] + c.k2 * eta[i];
    return p;
}

inline std::vector<double> divergence_from_pseudo(const std::vector<double>& xi,
                                                  const std::vector<double>& eta,
                                                  const PseudoPressureCoefficients& c) {
    if (xi.size() != eta.size())
        throw UsageError("divergence_from_pseudo: xi and eta must share a dof map");
    std::vector<double> phi(xi.size());
    for (size_t i = 0; i < phi.size(); ++i) phi[i] = c.k1 * eta[i] - c.k3 * xi[i];
    return phi;
}

// beta = alpha * mu_f * sqrt(3) / sqrt(tr K) with permeability K = k * mu_f.
inline double bjs_beta(const PhysicalParameters& p) {
    const Mat2 permeability{p.conductivity.a * p.mu_f, p.conductivity.b * p.mu_f,
                            p.conductivity.c * p.mu_f, p.conductivity.d * p.mu_f};
    const double tr = permeability.trace();
    if (!(tr > 0.0)) throw ParameterError("bjs_beta: permeability trace must be > 0");
    return p.alpha * p.mu_f * std::sqrt(3.0) / std::sqrt(tr);
}

// ---------------------------------------------------------------------------
// Interface treatment parameters.
//   gamma_f    : Nitsche penalty weight (per-edge weight gamma_f*mu_f/h_e)
//   varsigma   : adjoint-consistency sign, in {-1, 0, 1}
//   gamma_stab : interface pressure stabilization weight (s_fp)
//   gamma_stab_prime : normal-trace stabilization weight (s_fv, s_fq)
//   gamma_q    : pseudo-pressure gradient stabilization weight (s_q)
//   use_bjs    : tangential slip handled by the BJS resistance beta instead
//                of the mesh-scaled penalty
// gamma_f == 0 together with varsigma == -1 is the dedicated "coupling
// disabled" configuration: every interface term (including s_fp/s_fv/s_fq)
// is skipped and the systems block-decouple.
// ---------------------------------------------------------------------------

struct NitscheParameters {
    double gamma_f = 1500.0;
    int varsigma = 1;
    double gamma_stab = 1.0;
    double gamma_stab_prime = 0.0;
    double gamma_q = 1e-3;
    bool use_bjs = false;

    bool coupling_disabled() const { return gamma_f == 0.0 && varsigma == -1; }

    void validate() const {
        if (varsigma != -1 && varsigma != 0 && varsigma != 1)
            throw ParameterError("varsigma must be -1, 0 or 1");
        if (!(gamma_f > 0.0) && !coupling_disabled())
            throw ParameterError("gamma_f must be > 0 (or exactly 0 with varsigma=-1 "
                                 "to disable interface coupling)");
        if (gamma_stab < 0.0 || gamma_stab_prime < 0.0 || gamma_q < 0.0)
            throw ParameterError("stabilization weights must be >= 0");
    }
};

// ---------------------------------------------------------------------------
// Boundary conditions: per edge tag, which fields are strongly pinned to
// zero. Everything not pinned is handled naturally (tractions, the inflow
// pressure functional, and the Nitsche terms on the interface).
// ---------------------------------------------------------------------------

struct FieldConstraints {
    bool v = false;
    bool pf = false;
    bool U = false;
    bool q = false;
    bool xi = false;
    bool eta = false;
};

struct BoundaryConditionSet {
    std::map<EdgeTag, FieldConstraints> strong_zero;
    // inflow pressure on fluid_in, enters as <-p_in(t) n, phi_f>
    std::function<double(double)> p_in = [](double) { return 0.0; };

    FieldConstraints at(EdgeTag t) const {
        auto it = strong_zero.find(t);
        return it == strong_zero.end() ? FieldConstraints{} : it->second;
    }
};

// The verification scenario's conditions: all porous fields pinned on the
// porous boundary, no-slip on the fluid inflow/outflow, pressure pinned on
// the outflow. The exterior fluid wall defaults to no-slip and may be left
// traction-free instead.
inline BoundaryConditionSet boundary_set_test1(bool fluid_ext_noslip = true) {
    BoundaryConditionSet b;
    FieldConstraints porous;
    porous.U = porous.q = porous.xi = porous.eta = true;
    b.strong_zero[EdgeTag::porous_in] = porous;
    b.strong_zero[EdgeTag::porous_out] = porous;
    b.strong_zero[EdgeTag::porous_ext] = porous;
    FieldConstraints fin;
    fin.v = true;
    b.strong_zero[EdgeTag::fluid_in] = fin;
    FieldConstraints fout;
    fout.v = true;
    fout.pf = true;
    b.strong_zero[EdgeTag::fluid_out] = fout;
    if (fluid_ext_noslip) {
        FieldConstraints fext;
        fext.v = true;
        b.strong_zero[EdgeTag::fluid_ext] = fext;
    }
    return b;
}

// ---------------------------------------------------------------------------
// Volume sources: f, g act on the fluid, h, s on the porous matrix.
// ---------------------------------------------------------------------------

struct Sources {
    std::function<Vec2(Vec2, double)> f = [](Vec2, double) { return Vec2{}; };
    std::function<double(Vec2, double)> g = [](Vec2, double) { return 0.0; };
    std::function<Vec2(Vec2, double)> h = [](Vec2, double) { return Vec2{}; };
    std::function<double(Vec2, double)> s = [](Vec2, double) { return 0.0; };
};

struct SourceSample {
    Vec2 f;
    double g = 0.0;
    Vec2 h;
    double s = 0.0;
};

// Closed-form manufactured sources of the channel verification problem.
inline SourceSample test1_sources(double x, double y, double t,
                                  const PhysicalParameters& p) {
    const double et = std::exp(t);
    const double cpy = std::cos(pi * y / 2.0), spy = std::sin(pi * y / 2.0);
    const double cpx = std::cos(pi * x), spx = std::sin(pi * x);
    const double cpt = std::cos(pi * t), spt = std::sin(pi * t);
    SourceSample out;
    out.f = {pi * et * cpy * cpx + pi * p.mu_f * std::cos(y) * cpt,
             -0.5 * pi * et * spx * spy};
    out.g = -2.0 * pi * cpt;
    out.h = {p.alpha * pi * et * cpy * cpx + p.mu_p * std::cos(y) * spt,
             -0.5 * pi * p.alpha * et * spx * spy};
    out.s = (p.s0 - 0.75 * pi * pi) * et * spx * cpy - 2.0 * p.alpha * pi * cpt;
    return out;
}

inline Sources make_test1_sources(const PhysicalParameters& p) {
    Sources s;
    s.f = [p](Vec2 x, double t) { return test1_sources(x.x, x.y, t, p).f; };
    s.g = [p](Vec2 x, double t) { return test1_sources(x.x, x.y, t, p).g; };
    s.h = [p](Vec2 x, double t) { return test1_sources(x.x, x.y, t, p).h; };
    s.s = [p](Vec2 x, double t) { return test1_sources(x.x, x.y, t, p).s; };
    return s;
}

}  // namespace sbn
