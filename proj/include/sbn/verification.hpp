#pragma once

#include "sbn/timestepping.hpp"

namespace sbn {

// ---------------------------------------------------------------------------
// Point location and field evaluation on a (coarse) mesh. Structured channel
// meshes locate by grid arithmetic; anything else falls back to a cached
// linear walk over triangles.
// ---------------------------------------------------------------------------

class PointLocator {
  public:
    PointLocator(const TriangleMesh& mesh, const GeometryCache& geom)
        : mesh_(mesh), geom_(geom) {}

    struct Hit {
        int tri = -1;
        std::array<double, 3> bary{};
    };

    Hit locate(Vec2 x, Region region) const {
        if (mesh_.grid) return locate_structured(x, region);
        return locate_walk(x, region);
    }

  private:
    Hit locate_structured(Vec2 x, Region region) const {
        const StructuredChannelInfo& gi = *mesh_.grid;
        const double dx = (gi.x1 - gi.x0) / gi.nx;
        const int i = std::clamp(static_cast<int>((x.x - gi.x0) / dx), 0, gi.nx - 1);
        int j;
        if (region == Region::fluid) {
            const double dy = (gi.y_hi - gi.y_split) / gi.ny_half;
            j = gi.ny_half +
                std::clamp(static_cast<int>((x.y - gi.y_split) / dy), 0, gi.ny_half - 1);
        } else {
            const double dy = (gi.y_split - gi.y_lo) / gi.ny_half;
            j = std::clamp(static_cast<int>((x.y - gi.y_lo) / dy), 0, gi.ny_half - 1);
        }
        // cell (i,j) -> triangles 2*(j*nx+i) (below diagonal) and +1 (above)
        const int base = 2 * (j * gi.nx + i);
        Hit h;
        h.tri = base;
        h.bary = detail::barycentric_of(geom_.cells[base], x);
        // the (+,+) diagonal of the cell runs between the two triangles;
        // negative third coordinate means the point is above it
        if (h.bary[0] < 0.0 || h.bary[1] < 0.0 || h.bary[2] < 0.0) {
            h.tri = base + 1;
            h.bary = detail::barycentric_of(geom_.cells[base + 1], x);
        }
        return h;
    }

    Hit locate_walk(Vec2 x, Region region) const {
        const int nt = static_cast<int>(mesh_.triangles.size());
        const int start = last_hit_ >= 0 && last_hit_ < nt ? last_hit_ : 0;
        for (int off = 0; off < nt; ++off) {
            const int t = (start + off) % nt;
            if (mesh_.triangles[t].region != region) continue;
            const auto bary = detail::barycentric_of(geom_.cells[t], x);
            if (bary[0] >= -1e-10 && bary[1] >= -1e-10 && bary[2] >= -1e-10) {
                last_hit_ = t;
                return {t, bary};
            }
        }
        throw UsageError("point location failed at (" + fmt_g17(x.x) + "," +
                         fmt_g17(x.y) + ")");
    }

    const TriangleMesh& mesh_;
    const GeometryCache& geom_;
    mutable int last_hit_ = -1;
};

// ---------------------------------------------------------------------------
// Error indicators against a reference trajectory:
//   eps_f  = ||v - v_h||_{L2(0,T;H1(fluid))}
//   eps_p  = ||U - U_h||_{Linf(0,T;H1(porous))}
//   eps_fp = ||p_f - p_fh||_{L2(0,T;L2(fluid))}
//   eps_pp = ||p_p - p_ph||_{L2(0,T;L2(porous))}
// Time integrals use the right-endpoint rectangle rule on the scheme's grid;
// space integrals use the reference mesh's quadrature, with the coarse
// fields evaluated at the reference quadrature points.
// ---------------------------------------------------------------------------

struct ErrorIndicators {
    double eps_f = 0.0;
    double eps_p = 0.0;
    double eps_fp = 0.0;
    double eps_pp = 0.0;
};

struct ConvergenceReport {
    std::vector<double> h;
    std::vector<ErrorIndicators> errors;
    // rates[i] is defined for i >= 1 as log2(e_{i-1}/e_i)
    std::vector<ErrorIndicators> rates;
};

inline std::vector<double> convergence_rate(const std::vector<double>& errors) {
    for (double e : errors)
        if (!(e > 0.0)) throw UsageError("convergence_rate: errors must be > 0");
    std::vector<double> rates;
    for (size_t i = 1; i < errors.size(); ++i)
        rates.push_back(std::log2(errors[i - 1] / errors[i]));
    return rates;
}

namespace detail {

struct TrajectoryView {
    const std::vector<SolutionState>* states;  // levels 0..N
    const Assembler* assembler;
};

}  // namespace detail

inline ErrorIndicators error_norms(const std::vector<SolutionState>& coarse,
                                   const Assembler& coarse_asm,
                                   const std::vector<SolutionState>& reference,
                                   const Assembler& ref_asm) {
    if (coarse.size() != reference.size())
        throw UsageError("error_norms: trajectories have different lengths");
    for (size_t i = 0; i < coarse.size(); ++i)
        if (std::abs(coarse[i].t - reference[i].t) > 1e-12 * (1.0 + reference[i].t))
            throw UsageError("error_norms: trajectories use different time grids");
    if (coarse.size() < 2) throw UsageError("error_norms: need at least one step");

    const ProblemSetup& rs = ref_asm.setup();
    const ProblemSetup& cs = coarse_asm.setup();
    const double dt = rs.dt;
    PointLocator locator(*cs.mesh, coarse_asm.geometry());
    const auto& quad = ref_asm.cell_quadrature();

    double f2_sum = 0.0, fp2_sum = 0.0, pp2_sum = 0.0, p_max = 0.0;
    for (size_t n = 1; n < reference.size(); ++n) {
        const SolutionState& rst = reference[n];
        const SolutionState& cst = coarse[n];
        double f2 = 0.0, fp2 = 0.0, pp2 = 0.0, u2 = 0.0;
        for (int t : ref_asm.cells(Region::fluid)) {
            const CellGeometry& g = ref_asm.geometry().cells[t];
            for (size_t k = 0; k < quad.points.size(); ++k) {
                const double w = quad.weights[k] * g.det;
                const Vec2 x = ref_asm.geometry().physical_point(t, quad.points[k]);
                const LocalBasis bv = local_basis(rs.dofs.v.kind, g, quad.points[k]);
                const LocalBasis bp =
                    local_basis(ElementKind::p1_scalar, g, quad.points[k]);
                const auto hit = locator.locate(x, Region::fluid);
                const LocalBasis cbv = local_basis(
                    cs.dofs.v.kind, coarse_asm.geometry().cells[hit.tri], hit.bary);
                const LocalBasis cbp =
                    local_basis(ElementKind::p1_scalar,
                                coarse_asm.geometry().cells[hit.tri], hit.bary);
                const Vec2 dv = eval_vector(rs.dofs.v, rst.v, t, bv) -
                                eval_vector(cs.dofs.v, cst.v, hit.tri, cbv);
                const Mat2 dg = [&] {
                    Mat2 a = eval_vector_grad(rs.dofs.v, rst.v, t, bv);
                    Mat2 b = eval_vector_grad(cs.dofs.v, cst.v, hit.tri, cbv);
                    return Mat2{a.a - b.a, a.b - b.b, a.c - b.c, a.d - b.d};
                }();
                f2 += (dv.dot(dv) + dg.a * dg.a + dg.b * dg.b + dg.c * dg.c +
                       dg.d * dg.d) *
                      w;
                const double dp = eval_scalar(rs.dofs.pf, rst.pf, t, bp) -
                                  eval_scalar(cs.dofs.pf, cst.pf, hit.tri, cbp);
                fp2 += dp * dp * w;
            }
        }
        for (int t : ref_asm.cells(Region::porous)) {
            const CellGeometry& g = ref_asm.geometry().cells[t];
            for (size_t k = 0; k < quad.points.size(); ++k) {
                const double w = quad.weights[k] * g.det;
                const Vec2 x = ref_asm.geometry().physical_point(t, quad.points[k]);
                const LocalBasis bU = local_basis(rs.dofs.U.kind, g, quad.points[k]);
                const LocalBasis bs =
                    local_basis(ElementKind::p1_scalar, g, quad.points[k]);
                const auto hit = locator.locate(x, Region::porous);
                const LocalBasis cbU = local_basis(
                    cs.dofs.U.kind, coarse_asm.geometry().cells[hit.tri], hit.bary);
                const LocalBasis cbs =
                    local_basis(ElementKind::p1_scalar,
                                coarse_asm.geometry().cells[hit.tri], hit.bary);
                const Vec2 du = eval_vector(rs.dofs.U, rst.U, t, bU) -
                                eval_vector(cs.dofs.U, cst.U, hit.tri, cbU);
                const Mat2 dg = [&] {
                    Mat2 a = eval_vector_grad(rs.dofs.U, rst.U, t, bU);
                    Mat2 b = eval_vector_grad(cs.dofs.U, cst.U, hit.tri, cbU);
                    return Mat2{a.a - b.a, a.b - b.b, a.c - b.c, a.d - b.d};
                }();
                u2 += (du.dot(du) + dg.a * dg.a + dg.b * dg.b + dg.c * dg.c +
                       dg.d * dg.d) *
                      w;
                const double dpp = eval_scalar(rs.dofs.xi, rst.pp, t, bs) -
                                   eval_scalar(cs.dofs.xi, cst.pp, hit.tri, cbs);
                pp2 += dpp * dpp * w;
            }
        }
        f2_sum += f2;
        fp2_sum += fp2;
        pp2_sum += pp2;
        p_max = std::max(p_max, u2);
    }
    ErrorIndicators e;
    e.eps_f = std::sqrt(dt * f2_sum);
    e.eps_fp = std::sqrt(dt * fp2_sum);
    e.eps_pp = std::sqrt(dt * pp2_sum);
    e.eps_p = std::sqrt(p_max);
    return e;
}

// ---------------------------------------------------------------------------
// Convergence study driver (the Table-1 protocol by default): run the
// decoupled integrator on a sequence of halving meshes plus a fine reference,
// then report the four indicators and their observed rates.
// ---------------------------------------------------------------------------

struct StudyProtocol {
    std::vector<int> level_nx = {5, 10, 20, 40};  // ny_half = nx
    int reference_nx = 100;
    ChannelSpec channel;  // defaults to [0,1] x [-1,1], split at 0
    double dt = 1e-4;
    double T = 1e-3;
};

struct StudyPhysics {
    PhysicalParameters params;
    NitscheParameters nitsche;
    BoundaryConditionSet bcs;
    Sources sources;
    Pairing pairing = Pairing::p2_p1;
};

inline std::vector<SolutionState> run_trajectory(DecoupledStepper& stepper,
                                                 int steps) {
    std::vector<SolutionState> traj;
    traj.push_back(SolutionState::zero(stepper.setup().dofs));
    for (int n = 0; n < steps; ++n) traj.push_back(stepper.advance(traj.back()));
    return traj;
}

inline ConvergenceReport run_convergence_study(
    const StudyProtocol& proto, const StudyPhysics& phys,
    const std::function<void(const std::string&)>& log = {}) {
    for (int nx : proto.level_nx) {
        ChannelSpec ref = proto.channel;
        ref.nx = ref.ny_half = proto.reference_nx;
        ChannelSpec lvl = proto.channel;
        lvl.nx = lvl.ny_half = nx;
        if (build_channel_mesh(ref).h_max >= build_channel_mesh(lvl).h_max)
            throw UsageError("reference mesh must be finer than every level");
    }
    const int steps = static_cast<int>(std::llround(proto.T / proto.dt));
    if (steps < 1 || std::abs(steps * proto.dt - proto.T) > 1e-9 * proto.T)
        throw UsageError("T must be an integer multiple of dt");

    auto run_level = [&](int nx) {
        ChannelSpec spec = proto.channel;
        spec.nx = spec.ny_half = nx;
        auto mesh = std::make_unique<TriangleMesh>(build_channel_mesh(spec));
        auto setup = ProblemSetup::make(*mesh, phys.pairing, phys.params, phys.nitsche,
                                        phys.bcs, phys.sources, proto.dt);
        auto stepper = std::make_unique<DecoupledStepper>(setup);
        auto traj = run_trajectory(*stepper, steps);
        struct LevelRun {
            std::unique_ptr<TriangleMesh> mesh;
            std::unique_ptr<DecoupledStepper> stepper;
            std::vector<SolutionState> traj;
        };
        return LevelRun{std::move(mesh), std::move(stepper), std::move(traj)};
    };

    if (log) log("running reference mesh nx=" + std::to_string(proto.reference_nx));
    auto ref = run_level(proto.reference_nx);

    ConvergenceReport report;
    for (int nx : proto.level_nx) {
        if (log) log("running level nx=" + std::to_string(nx));
        auto lvl = run_level(nx);
        report.h.push_back(lvl.mesh->h_max);
        report.errors.push_back(error_norms(lvl.traj, lvl.stepper->assembler(),
                                            ref.traj, ref.stepper->assembler()));
    }
    for (size_t i = 1; i < report.errors.size(); ++i) {
        ErrorIndicators r;
        auto rate = [](double a, double b) { return std::log2(a / b); };
        r.eps_f = rate(report.errors[i - 1].eps_f, report.errors[i].eps_f);
        r.eps_p = rate(report.errors[i - 1].eps_p, report.errors[i].eps_p);
        r.eps_fp = rate(report.errors[i - 1].eps_fp, report.errors[i].eps_fp);
        r.eps_pp = rate(report.errors[i - 1].eps_pp, report.errors[i].eps_pp);
        report.rates.push_back(r);
    }
    return report;
}

// ---------------------------------------------------------------------------
// Decoupled-vs-monolithic comparison: run both integrators to the same final
// time for each time step in the sweep and report the worst relative L2
// field discrepancy, plus the least-squares order of the sweep.
// ---------------------------------------------------------------------------

struct OracleReport {
    std::vector<double> dt;
    std::vector<double> discrepancy;
    std::optional<double> fitted_order;
};

inline double relative_l2_discrepancy(const Assembler& as, const SolutionState& a,
                                      const SolutionState& b) {
    const ProblemSetup& s = as.setup();
    const auto& quad = as.cell_quadrature();
    struct Acc {
        double diff = 0.0, ref = 0.0;
    };
    std::array<Acc, 6> acc;  // v, pf, U, xi, q, eta
    for (Region region : {Region::fluid, Region::porous})
        for (int t : as.cells(region)) {
            const CellGeometry& g = as.geometry().cells[t];
            for (size_t k = 0; k < quad.points.size(); ++k) {
                const double w = quad.weights[k] * g.det;
                if (region == Region::fluid) {
                    const LocalBasis bv = local_basis(s.dofs.v.kind, g, quad.points[k]);
                    const LocalBasis bp =
                        local_basis(ElementKind::p1_scalar, g, quad.points[k]);
                    const Vec2 va = eval_vector(s.dofs.v, a.v, t, bv);
                    const Vec2 vb = eval_vector(s.dofs.v, b.v, t, bv);
                    acc[0].diff += (va - vb).dot(va - vb) * w;
                    acc[0].ref += vb.dot(vb) * w;
                    const double pa = eval_scalar(s.dofs.pf, a.pf, t, bp);
                    const double pb = eval_scalar(s.dofs.pf, b.pf, t, bp);
                    acc[1].diff += (pa - pb) * (pa - pb) * w;
                    acc[1].ref += pb * pb * w;
                } else {
                    const LocalBasis bU = local_basis(s.dofs.U.kind, g, quad.points[k]);
                    const LocalBasis bs =
                        local_basis(ElementKind::p1_scalar, g, quad.points[k]);
                    const Vec2 ua = eval_vector(s.dofs.U, a.U, t, bU);
                    const Vec2 ub = eval_vector(s.dofs.U, b.U, t, bU);
                    acc[2].diff += (ua - ub).dot(ua - ub) * w;
                    acc[2].ref += ub.dot(ub) * w;
                    const double xa = eval_scalar(s.dofs.xi, a.xi, t, bs);
                    const double xb = eval_scalar(s.dofs.xi, b.xi, t, bs);
                    acc[3].diff += (xa - xb) * (xa - xb) * w;
                    acc[3].ref += xb * xb * w;
                    const Vec2 qa = eval_vector(s.dofs.q, a.q, t, bU);
                    const Vec2 qb = eval_vector(s.dofs.q, b.q, t, bU);
                    acc[4].diff += (qa - qb).dot(qa - qb) * w;
                    acc[4].ref += qb.dot(qb) * w;
                    const double ea = eval_scalar(s.dofs.eta, a.eta, t, bs);
                    const double eb = eval_scalar(s.dofs.eta, b.eta, t, bs);
                    acc[5].diff += (ea - eb) * (ea - eb) * w;
                    acc[5].ref += eb * eb * w;
                }
            }
        }
    double worst = 0.0;
    for (const Acc& x : acc) {
        const double den = std::sqrt(x.ref);
        const double num = std::sqrt(x.diff);
        worst = std::max(worst, den > 1e-300 ? num / den : num);
    }
    return worst;
}

inline OracleReport oracle_compare(const TriangleMesh& mesh, Pairing pairing,
                                   const PhysicalParameters& params,
                                   const NitscheParameters& nitsche,
                                   const BoundaryConditionSet& bcs,
                                   const Sources& sources, double T,
                                   const std::vector<double>& dt_sweep) {
    for (size_t i = 1; i < dt_sweep.size(); ++i)
        if (!(dt_sweep[i] < dt_sweep[i - 1]))
            throw UsageError("oracle_compare: dt sweep must be strictly decreasing");
    OracleReport rep;
    for (double dt : dt_sweep) {
        const int steps = static_cast<int>(std::llround(T / dt));
        if (steps < 1 || std::abs(steps * dt - T) > 1e-9 * T)
            throw UsageError("oracle_compare: T must be a multiple of every dt");
        auto setup =
            ProblemSetup::make(mesh, pairing, params, nitsche, bcs, sources, dt);
        DecoupledStepper dec(setup);
        MonolithicStepper mono(setup);
        SolutionState sd = SolutionState::zero(setup.dofs);
        SolutionState sm = sd;
        for (int n = 0; n < steps; ++n) {
            sd = dec.advance(sd);
            sm = mono.advance(sm);
        }
        rep.dt.push_back(dt);
        rep.discrepancy.push_back(relative_l2_discrepancy(dec.assembler(), sd, sm));
    }
    if (rep.dt.size() >= 2) {
        // least-squares slope of log(disc) vs log(dt)
        double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
        int m = 0;
        for (size_t i = 0; i < rep.dt.size(); ++i) {
            if (!(rep.discrepancy[i] > 0.0)) continue;
            const double lx = std::log(rep.dt[i]), ly = std::log(rep.discrepancy[i]);
            sx += lx;
            sy += ly;
            sxx += lx * lx;
            sxy += lx * ly;
            ++m;
        }
        if (m >= 2) rep.fitted_order = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    }
    return rep;
}

// Measured constant of the trace-inverse inequality
//   sum_e h_e ||D(u)n||^2_e <= C ||D(u)||^2_Omega_f
// for one discrete velocity field; reported as a diagnostic.
inline double inverse_inequality_ratio(const Assembler& as,
                                       const std::vector<double>& v) {
    const ProblemSetup& s = as.setup();
    double edge = 0.0, bulk = 0.0;
    for (const InterfaceEdgeData& e : as.interface_edges())
        for (const InterfaceQP& qp : e.qp) {
            double dn = 0.0, dt = 0.0;
            for (size_t i = 0; i < e.fv_dofs.size(); ++i) {
                dn += qp.fdnn[i] * v[e.fv_dofs[i]];
                dt += qp.fdtn[i] * v[e.fv_dofs[i]];
            }
            edge += e.h_edge * (dn * dn + dt * dt) * qp.w;
        }
    const auto& quad = as.cell_quadrature();
    for (int t : as.cells(Region::fluid)) {
        const CellGeometry& g = as.geometry().cells[t];
        for (size_t k = 0; k < quad.points.size(); ++k) {
            const double w = quad.weights[k] * g.det;
            const LocalBasis bv = local_basis(s.dofs.v.kind, g, quad.points[k]);
            const Mat2 G = eval_vector_grad(s.dofs.v, v, t, bv);
            const double dxy = 0.5 * (G.b + G.c);
            bulk += (G.a * G.a + G.d * G.d + 2.0 * dxy * dxy) * w;
        }
    }
    return bulk > 0.0 ? edge / bulk : 0.0;
}

}  // namespace sbn
