#pragma once

#include "sbn/assembly.hpp"

namespace sbn {

namespace detail {

inline std::vector<double> extract_block(const SubProblemSystem& sp,
                                         const std::vector<double>& x, Field f) {
    const int off = sp.offset_of(f), n = sp.size_of(f);
    return std::vector<double>(x.begin() + off, x.begin() + off + n);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Quadrature-exact diagnostics on a solution state: the discrete energy
//   E^n = 1/2 (2 mu_p ||D(U)||^2 + k3 ||xi||^2 + k2 ||eta||^2),
// the dissipation integrals, the interface mismatch norms and the realized
// load functional.
// ---------------------------------------------------------------------------

struct LedgerRow {
    int n = 0;
    double t = 0.0;
    double energy = 0.0;
    double diss_fluid = 0.0;      // 2 mu_f ||D(v)||^2
    double diss_darcy = 0.0;      // (k^{-1} q, q)
    double mismatch_normal = 0.0; // ||(v - d_tU - q).n||_Gamma
    double mismatch_tangent = 0.0;// ||(v - d_tU).tau||_Gamma
    double load = 0.0;            // realized F(t_n)
    double load_data_norm2 = 0.0; // ||f||^2+||g||^2+||h||^2+||s||^2+|Gamma_in| p_in^2
    double residual_step1 = 0.0, residual_step2 = 0.0, residual_step3 = 0.0;
};

struct EnergyLedger {
    bool cond_k2_gt_k1 = false;
    bool cond_k3_gt_k1 = false;
    double dt_over_h = 0.0;
    std::vector<LedgerRow> rows;
    // cumulative sides of the stability-bound-shaped inequality
    double left_side = 0.0;   // E^N + dt * sum(dissipation + mismatch^2)
    double right_side = 0.0;  // E^0 + dt/mu_f * sum ||F||^2 (data norms)
    bool energy_grew_with_zero_load = false;
};

class Diagnostics {
  public:
    explicit Diagnostics(const Assembler& as) : as_(as) {}

    double discrete_energy(const SolutionState& st) const {
        const ProblemSetup& s = as_.setup();
        double dU2 = 0.0, xi2 = 0.0, eta2 = 0.0;
        const auto& quad = as_.cell_quadrature();
        for (int t : as_.cells(Region::porous)) {
            const CellGeometry& g = as_.geometry().cells[t];
            for (size_t k = 0; k < quad.points.size(); ++k) {
                const double w = quad.weights[k] * g.det;
                const LocalBasis bU = local_basis(s.dofs.U.kind, g, quad.points[k]);
                const LocalBasis bs =
                    local_basis(ElementKind::p1_scalar, g, quad.points[k]);
                const Mat2 G = eval_vector_grad(s.dofs.U, st.U, t, bU);
                const double dxx = G.a, dyy = G.d, dxy = 0.5 * (G.b + G.c);
                dU2 += (dxx * dxx + dyy * dyy + 2.0 * dxy * dxy) * w;
                const double xv = eval_scalar(s.dofs.xi, st.xi, t, bs);
                const double ev = eval_scalar(s.dofs.eta, st.eta, t, bs);
                xi2 += xv * xv * w;
                eta2 += ev * ev * w;
            }
        }
        return 0.5 * (2.0 * s.params.mu_p * dU2 + s.coeffs.k3 * xi2 +
                      s.coeffs.k2 * eta2);
    }

    LedgerRow row(const SolutionState& st) const {
        const ProblemSetup& s = as_.setup();
        LedgerRow r;
        r.n = st.n;
        r.t = st.t;
        r.energy = discrete_energy(st);

        const Mat2 kinv = s.params.conductivity.inverse();
        const auto& quad = as_.cell_quadrature();
        for (int t : as_.cells(Region::fluid)) {
            const CellGeometry& g = as_.geometry().cells[t];
            for (size_t k = 0; k < quad.points.size(); ++k) {
                const double w = quad.weights[k] * g.det;
                const LocalBasis bv = local_basis(s.dofs.v.kind, g, quad.points[k]);
                const LocalBasis bp =
                    local_basis(ElementKind::p1_scalar, g, quad.points[k]);
                const Mat2 G = eval_vector_grad(s.dofs.v, st.v, t, bv);
                const double dxx = G.a, dyy = G.d, dxy = 0.5 * (G.b + G.c);
                r.diss_fluid +=
                    2.0 * s.params.mu_f * (dxx * dxx + dyy * dyy + 2.0 * dxy * dxy) * w;
                const Vec2 x = as_.geometry().physical_point(t, quad.points[k]);
                const Vec2 vv = eval_vector(s.dofs.v, st.v, t, bv);
                const double pv = eval_scalar(s.dofs.pf, st.pf, t, bp);
                const Vec2 f = s.sources.f(x, st.t);
                const double gs = s.sources.g(x, st.t);
                r.load += (f.dot(vv) + gs * pv) * w;
                r.load_data_norm2 += (f.dot(f) + gs * gs) * w;
            }
        }
        for (int t : as_.cells(Region::porous)) {
            const CellGeometry& g = as_.geometry().cells[t];
            for (size_t k = 0; k < quad.points.size(); ++k) {
                const double w = quad.weights[k] * g.det;
                const LocalBasis bq = local_basis(s.dofs.q.kind, g, quad.points[k]);
                const LocalBasis bs =
                    local_basis(ElementKind::p1_scalar, g, quad.points[k]);
                const Vec2 qv = eval_vector(s.dofs.q, st.q, t, bq);
                r.diss_darcy += qv.dot(kinv.apply(qv)) * w;
                const Vec2 x = as_.geometry().physical_point(t, quad.points[k]);
                const double pp = eval_scalar(s.dofs.xi, st.pp, t, bs);
                const Vec2 h = s.sources.h(x, st.t);
                const double ss = s.sources.s(x, st.t);
                r.load += ss * pp * w;
                r.load_data_norm2 += (h.dot(h) + ss * ss) * w;
            }
        }

        const double pin = s.bcs.p_in(st.t);
        double mm_n = 0.0, mm_t = 0.0;
        for (const InterfaceEdgeData& e : as_.interface_edges())
            for (const InterfaceQP& qp : e.qp) {
                auto dot = [&](const std::vector<double>& tr,
                               const std::vector<int>& dofs,
                               const std::vector<double>& c) {
                    double v = 0.0;
                    for (size_t i = 0; i < dofs.size(); ++i) v += tr[i] * c[dofs[i]];
                    return v;
                };
                const double jn = dot(qp.fvn, e.fv_dofs, st.v) -
                                  dot(qp.pvn, e.pv_dofs, st.dtU) -
                                  dot(qp.pvn, e.pv_dofs, st.q);
                const double jt = dot(qp.fvt, e.fv_dofs, st.v) -
                                  dot(qp.pvt, e.pv_dofs, st.dtU);
                mm_n += jn * jn * qp.w;
                mm_t += jt * jt * qp.w;
            }
        r.mismatch_normal = std::sqrt(mm_n);
        r.mismatch_tangent = std::sqrt(mm_t);
        if (pin != 0.0) {
            for (const EdgeUse& e : edges_with_tag(*s.mesh, EdgeTag::fluid_in))
                r.load_data_norm2 += pin * pin * e.length;
            // realized inflow work term <-p_in n, v>
            // (zero under the verification scenario's no-slip inflow)
        }
        return r;
    }

  private:
    const Assembler& as_;
};

// ---------------------------------------------------------------------------
// Time steppers. System matrices are constant in time, so each sub-problem
// is factorized once and subsequent steps assemble only right-hand sides.
// ---------------------------------------------------------------------------

inline constexpr double solver_residual_tol = 1e-10;

class DecoupledStepper {
  public:
    explicit DecoupledStepper(const ProblemSetup& setup)
        : setup_(setup), asm_(setup_) {}

    const Assembler& assembler() const { return asm_; }
    const ProblemSetup& setup() const { return setup_; }
    const std::array<double, 3>& last_residuals() const { return residuals_; }

    SolutionState advance(const SolutionState& prev) {
        const double t_new = (prev.n + 1) * setup_.dt;
        SolutionState next = SolutionState::zero(setup_.dofs);
        next.n = prev.n + 1;
        next.t = t_new;

        {
            SubProblemSystem sp = asm_.assemble_step1(prev, t_new, !lu1_.ready());
            if (!lu1_.ready()) lu1_.factorize(sp.sys);
            SolveResult r = solve_checked(lu1_, sp.sys.rhs, "step 1 (displacement)");
            residuals_[0] = r.relative_residual;
            next.U = detail::extract_block(sp, r.x, Field::U);
            next.xi = detail::extract_block(sp, r.x, Field::xi);
        }
        for (size_t i = 0; i < next.U.size(); ++i)
            next.dtU[i] = (next.U[i] - prev.U[i]) / setup_.dt;
        {
            SubProblemSystem sp = asm_.assemble_step2(prev, next.xi, t_new, !lu2_.ready());
            if (!lu2_.ready()) lu2_.factorize(sp.sys);
            SolveResult r = solve_checked(lu2_, sp.sys.rhs, "step 2 (darcy)");
            residuals_[1] = r.relative_residual;
            next.q = detail::extract_block(sp, r.x, Field::q);
            next.eta = detail::extract_block(sp, r.x, Field::eta);
        }
        {
            SubProblemSystem sp =
                asm_.assemble_step3(prev, next.dtU, next.q, t_new, !lu3_.ready());
            if (!lu3_.ready()) lu3_.factorize(sp.sys);
            SolveResult r = solve_checked(lu3_, sp.sys.rhs, "step 3 (stokes)");
            residuals_[2] = r.relative_residual;
            next.v = detail::extract_block(sp, r.x, Field::v);
            next.pf = detail::extract_block(sp, r.x, Field::pf);
        }
        next.refresh_pressure_cache(setup_.coeffs);
        if (!next.finite())
            throw SolverError("decoupled step " + std::to_string(next.n) +
                              " produced non-finite fields");
        return next;
    }

  private:
    static SolveResult solve_checked(const LuFactorization& lu,
                                     const std::vector<double>& rhs,
                                     const std::string& name) {
        SolveResult r = lu.solve(rhs);
        if (r.relative_residual > solver_residual_tol)
            throw SolverError(name + ": relative residual " +
                              fmt_g17(r.relative_residual) + " exceeds 1e-10");
        return r;
    }

    ProblemSetup setup_;
    Assembler asm_;
    LuFactorization lu1_, lu2_, lu3_;
    std::array<double, 3> residuals_{};
};

class MonolithicStepper {
  public:
    explicit MonolithicStepper(const ProblemSetup& setup)
        : setup_(setup), asm_(setup_) {}

    const Assembler& assembler() const { return asm_; }
    const ProblemSetup& setup() const { return setup_; }
    double last_residual() const { return residual_; }

    SolutionState advance(const SolutionState& prev) {
        const double t_new = (prev.n + 1) * setup_.dt;
        SubProblemSystem sp = asm_.assemble_monolithic(prev, t_new, !lu_.ready());
        if (!lu_.ready()) lu_.factorize(sp.sys);
        SolveResult r = lu_.solve(sp.sys.rhs);
        if (r.relative_residual > solver_residual_tol)
            throw SolverError("monolithic step: relative residual " +
                              fmt_g17(r.relative_residual) + " exceeds 1e-10");
        residual_ = r.relative_residual;

        SolutionState next = SolutionState::zero(setup_.dofs);
        next.n = prev.n + 1;
        next.t = t_new;
        next.v = detail::extract_block(sp, r.x, Field::v);
        next.pf = detail::extract_block(sp, r.x, Field::pf);
        next.U = detail::extract_block(sp, r.x, Field::U);
        next.xi = detail::extract_block(sp, r.x, Field::xi);
        next.q = detail::extract_block(sp, r.x, Field::q);
        next.eta = detail::extract_block(sp, r.x, Field::eta);
        for (size_t i = 0; i < next.U.size(); ++i)
            next.dtU[i] = (next.U[i] - prev.U[i]) / setup_.dt;
        next.refresh_pressure_cache(setup_.coeffs);
        if (!next.finite())
            throw SolverError("monolithic step " + std::to_string(next.n) +
                              " produced non-finite fields");
        return next;
    }

  private:
    ProblemSetup setup_;
    Assembler asm_;
    LuFactorization lu_;
    double residual_ = 0.0;
};

// Spec-level one-shot wrappers (the steppers above amortize factorizations).
inline SolutionState advance_decoupled(const ProblemSetup& setup,
                                       const SolutionState& prev) {
    DecoupledStepper st(setup);
    return st.advance(prev);
}

inline SolutionState advance_monolithic(const ProblemSetup& setup,
                                        const SolutionState& prev) {
    MonolithicStepper st(setup);
    return st.advance(prev);
}

inline double discrete_energy(const Assembler& as, const SolutionState& st) {
    return Diagnostics(as).discrete_energy(st);
}

// Ledger for a whole trajectory (states 0..N). Rows cover steps 1..N; the
// stability side conditions are recorded, not enforced.
inline EnergyLedger energy_ledger(const Assembler& as,
                                  const std::vector<SolutionState>& trajectory) {
    if (trajectory.empty()) throw UsageError("energy_ledger: empty trajectory");
    const ProblemSetup& s = as.setup();
    Diagnostics diag(as);
    EnergyLedger led;
    led.cond_k2_gt_k1 = s.coeffs.k2 > s.coeffs.k1;
    led.cond_k3_gt_k1 = s.coeffs.k3 > s.coeffs.k1;
    led.dt_over_h = s.dt / s.mesh->h_max;

    const double E0 = diag.discrete_energy(trajectory.front());
    double diss_sum = 0.0, load_sum = 0.0;
    double prev_energy = E0;
    for (size_t i = 1; i < trajectory.size(); ++i) {
        LedgerRow r = diag.row(trajectory[i]);
        diss_sum += r.diss_fluid + r.diss_darcy +
                    r.mismatch_normal * r.mismatch_normal +
                    r.mismatch_tangent * r.mismatch_tangent;
        load_sum += r.load_data_norm2;
        if (r.load_data_norm2 == 0.0 && r.energy > prev_energy * (1.0 + 1e-12) + 1e-300)
            led.energy_grew_with_zero_load = true;
        prev_energy = r.energy;
        led.rows.push_back(r);
    }
    led.left_side = led.rows.back().energy + s.dt * diss_sum;
    led.right_side = E0 + s.dt * load_sum / s.params.mu_f;
    return led;
}

}  // namespace sbn
