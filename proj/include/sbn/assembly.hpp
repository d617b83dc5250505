#pragma once

#include <atomic>
#include <cstdlib>
#include <thread>

#include "sbn/sparse.hpp"
#include "sbn/state.hpp"

namespace sbn {

enum class Field : int { v = 0, pf = 1, U = 2, xi = 3, q = 4, eta = 5 };

enum class Which : std::uint8_t { step1, step2, step3, monolithic };

struct Block {
    Field field;
    int offset = 0;
    int size = 0;
};

struct SubProblemSystem {
    Which which = Which::monolithic;
    SparseSystem sys;
    std::vector<Block> blocks;

    int offset_of(Field f) const {
        for (const Block& b : blocks)
            if (b.field == f) return b.offset;
        throw UsageError("field not present in this sub-problem");
    }
    int size_of(Field f) const {
        for (const Block& b : blocks)
            if (b.field == f) return b.size;
        throw UsageError("field not present in this sub-problem");
    }
};

// Everything that stays fixed over a run: mesh, spaces, physics, interface
// treatment, boundary conditions, sources and the time step.
struct ProblemSetup {
    const TriangleMesh* mesh = nullptr;
    FieldDofs dofs;
    PhysicalParameters params;
    PseudoPressureCoefficients coeffs;
    NitscheParameters nitsche;
    BoundaryConditionSet bcs;
    Sources sources;
    double dt = 1e-4;

    static ProblemSetup make(const TriangleMesh& mesh, Pairing pairing,
                             const PhysicalParameters& params,
                             const NitscheParameters& nitsche,
                             const BoundaryConditionSet& bcs, const Sources& sources,
                             double dt) {
        params.validate();
        nitsche.validate();
        if (!(dt > 0.0)) throw ParameterError("dt must be > 0");
        ProblemSetup s;
        s.mesh = &mesh;
        s.dofs = FieldDofs::build(mesh, pairing);
        s.params = params;
        s.coeffs = pseudo_coefficients(params);
        s.nitsche = nitsche;
        s.bcs = bcs;
        s.sources = sources;
        s.dt = dt;
        return s;
    }
};

namespace detail {

inline int env_thread_count() {
    if (const char* e = std::getenv("SBN_THREADS")) {
        const int n = std::atoi(e);
        return n > 0 ? n : 1;
    }
    return 1;
}

// Per-triangle contribution: a dense block over the listed global dofs plus
// a local right-hand side. Computed in parallel, merged serially in triangle
// order so assembly is bit-identical for any thread count.
struct LocalBlock {
    std::vector<int> dof;
    std::vector<double> mat;  // dof.size()^2 row-major; empty in rhs-only mode
    std::vector<double> rhs;

    void init(std::vector<int> dofs, bool with_matrix) {
        dof = std::move(dofs);
        rhs.assign(dof.size(), 0.0);
        if (with_matrix) mat.assign(dof.size() * dof.size(), 0.0);
    }
    void add(size_t i, size_t j, double v) { mat[i * dof.size() + j] += v; }
};

template <typename Fn>
std::vector<LocalBlock> parallel_blocks(int count, Fn&& fn) {
    std::vector<LocalBlock> out(count);
    const int threads = std::min(env_thread_count(), std::max(count, 1));
    if (threads <= 1) {
        for (int i = 0; i < count; ++i) out[i] = fn(i);
        return out;
    }
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1))
                out[i] = fn(i);
        });
    for (auto& th : pool) th.join();
    return out;
}

inline std::array<double, 3> barycentric_of(const CellGeometry& g, Vec2 x) {
    const Mat2 inv_j = g.inv_jac_t.transpose();
    const Vec2 local = inv_j.apply(x - g.origin);
    return {1.0 - local.x - local.y, local.x, local.y};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Precomputed interface-edge data: quadrature points with trace arrays of
// every basis function that can appear in an interface integral. Reused
// across sub-problems and time steps.
//
// Per quadrature point (vector dof i pairs scalar basis i/2 with component
// i%2):
//   fvn/fvt : fluid velocity traces  phi_i.n, phi_i.tau
//   fdnn/fdtn : n.D(phi_i)n and tau.D(phi_i)n from the fluid side
//   fp : fluid pressure values
//   pvn/pvt : porous vector traces (serve both U and q)
// ---------------------------------------------------------------------------

struct InterfaceQP {
    double w = 0.0;  // quadrature weight * edge length
    Vec2 x;
    std::vector<double> fvn, fvt, fdnn, fdtn, fp, pvn, pvt;
};

struct InterfaceEdgeData {
    int tri_f = -1, tri_p = -1;
    Vec2 normal, tangent;
    double h_edge = 0.0, length = 0.0;
    std::vector<int> fv_dofs;  // field-local vector dofs of v (fluid side)
    std::vector<int> fp_dofs;  // field-local scalar dofs of p_f
    std::vector<int> pv_dofs;  // field-local vector dofs of U and q
    std::vector<InterfaceQP> qp;
};

struct BoundaryEdgeData {  // for the inflow pressure functional
    Vec2 normal;
    std::vector<int> fv_dofs;
    struct QP {
        double w = 0.0;
        Vec2 x;
        std::vector<double> value;  // per vector dof: scalar basis value
    };
    std::vector<QP> qp;
};

class Assembler {
  public:
    explicit Assembler(const ProblemSetup& setup)
        : s_(setup),
          geom_(*setup.mesh),
          tri_quad_(triangle_quadrature(4)),
          edge_quad_(edge_quadrature(5)) {
        if (s_.dofs.U.kind != s_.dofs.q.kind)
            throw UsageError("U and q must share an element kind");
        for (int t = 0; t < static_cast<int>(s_.mesh->triangles.size()); ++t)
            (s_.mesh->triangles[t].region == Region::fluid ? fluid_cells_
                                                           : porous_cells_)
                .push_back(t);
        build_interface_data();
        build_inflow_data();
    }

    const ProblemSetup& setup() const { return s_; }
    const GeometryCache& geometry() const { return geom_; }
    const TriangleQuadrature& cell_quadrature() const { return tri_quad_; }
    const std::vector<InterfaceEdgeData>& interface_edges() const { return iface_; }
    const std::vector<int>& cells(Region r) const {
        return r == Region::fluid ? fluid_cells_ : porous_cells_;
    }

    // ---- sub-problem assembly -------------------------------------------

    // Step 1 unknowns (U, xi); state_prev supplies v^{n-1}, p_f^{n-1},
    // q^{n-1}, eta^{n-1}, U^{n-1}.
    SubProblemSystem assemble_step1(const SolutionState& prev, double t_new,
                                    bool with_matrix = true,
                                    bool apply_dirichlet = true) const {
        Layout lay = layout({Field::U, Field::xi});
        SystemBuilder b(lay.total);
        domain_displacement(b, lay, prev, t_new, with_matrix);
        if (!s_.nitsche.coupling_disabled()) interface_step1(b, lay, prev, with_matrix);
        return finish(b, lay, Which::step1, apply_dirichlet);
    }

    // Step 2 unknowns (q, eta); needs xi^n from step 1 and the lagged
    // interface data v^{n-1}, d_tU^{n-1}, sigma_f^{n-1}.
    SubProblemSystem assemble_step2(const SolutionState& prev,
                                    const std::vector<double>& xi_new, double t_new,
                                    bool with_matrix = true,
                                    bool apply_dirichlet = true) const {
        if (static_cast<int>(xi_new.size()) != s_.dofs.xi.n_dofs)
            throw UsageError("assemble_step2: xi^n missing (run step 1 first)");
        Layout lay = layout({Field::q, Field::eta});
        SystemBuilder b(lay.total);
        domain_darcy(b, lay, prev, &xi_new, t_new, with_matrix);
        if (!s_.nitsche.coupling_disabled()) interface_step2(b, lay, prev, with_matrix);
        return finish(b, lay, Which::step2, apply_dirichlet);
    }

    // Step 3 unknowns (v, p_f); needs d_tU^n and q^n from steps 1-2.
    SubProblemSystem assemble_step3(const SolutionState& prev,
                                    const std::vector<double>& dtU_new,
                                    const std::vector<double>& q_new, double t_new,
                                    bool with_matrix = true,
                                    bool apply_dirichlet = true) const {
        if (static_cast<int>(dtU_new.size()) != s_.dofs.U.n_dofs ||
            static_cast<int>(q_new.size()) != s_.dofs.q.n_dofs)
            throw UsageError("assemble_step3: U^n/q^n missing (run steps 1-2 first)");
        Layout lay = layout({Field::v, Field::pf});
        SystemBuilder b(lay.total);
        domain_stokes(b, lay, t_new, with_matrix);
        if (!s_.nitsche.coupling_disabled())
            interface_step3(b, lay, prev, dtU_new, q_new, with_matrix);
        return finish(b, lay, Which::step3, apply_dirichlet);
    }

    // Fully implicit coupled system in (v, p_f, U, xi, q, eta). Contains no
    // lagged interface data and none of the splitting stabilizations.
    SubProblemSystem assemble_monolithic(const SolutionState& prev, double t_new,
                                         bool with_matrix = true,
                                         bool apply_dirichlet = true) const {
        Layout lay = layout(
            {Field::v, Field::pf, Field::U, Field::xi, Field::q, Field::eta});
        SystemBuilder b(lay.total);
        domain_stokes(b, lay, t_new, with_matrix);
        domain_displacement(b, lay, prev, t_new, with_matrix);
        domain_darcy(b, lay, prev, nullptr, t_new, with_matrix);
        if (!s_.nitsche.coupling_disabled())
            interface_monolithic(b, lay, prev, with_matrix);
        return finish(b, lay, Which::monolithic, apply_dirichlet);
    }

    // Dirichlet dofs (sub-problem numbering) for a block layout; every
    // prescribed value is zero.
    std::vector<int> dirichlet_dofs(const std::vector<Block>& blocks) const {
        std::vector<int> out;
        bool pf_pinned_by_bc = false;
        for (const Block& blk : blocks) {
            const DofMap& dm = dof_map(blk.field);
            for (const auto& [tag, fc] : s_.bcs.strong_zero) {
                if (!constrained(fc, blk.field)) continue;
                const auto dofs = scalar_dofs_on_tag(*s_.mesh, dm, tag);
                if (blk.field == Field::pf && !dofs.empty()) pf_pinned_by_bc = true;
                for (int sd : dofs) {
                    if (is_vector_kind(dm.kind)) {
                        out.push_back(blk.offset + 2 * sd);
                        out.push_back(blk.offset + 2 * sd + 1);
                    } else {
                        out.push_back(blk.offset + sd);
                    }
                }
            }
        }
        // gauge fix: without pressure Dirichlet data, pin the first p_f dof
        for (const Block& blk : blocks)
            if (blk.field == Field::pf && !pf_pinned_by_bc && blk.size > 0)
                out.push_back(blk.offset);
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

    const DofMap& dof_map(Field f) const {
        switch (f) {
            case Field::v: return s_.dofs.v;
            case Field::pf: return s_.dofs.pf;
            case Field::U: return s_.dofs.U;
            case Field::xi: return s_.dofs.xi;
            case Field::q: return s_.dofs.q;
            case Field::eta: return s_.dofs.eta;
        }
        throw UsageError("bad field");
    }

  private:
    struct Layout {
        std::array<int, 6> offset{-1, -1, -1, -1, -1, -1};
        std::vector<Block> blocks;
        int total = 0;
        int of(Field f) const { return offset[static_cast<int>(f)]; }
    };

    Layout layout(std::initializer_list<Field> fields) const {
        Layout lay;
        for (Field f : fields) {
            const int n = dof_map(f).n_dofs;
            lay.offset[static_cast<int>(f)] = lay.total;
            lay.blocks.push_back({f, lay.total, n});
            lay.total += n;
        }
        return lay;
    }

    static bool constrained(const FieldConstraints& fc, Field f) {
        switch (f) {
            case Field::v: return fc.v;
            case Field::pf: return fc.pf;
            case Field::U: return fc.U;
            case Field::xi: return fc.xi;
            case Field::q: return fc.q;
            case Field::eta: return fc.eta;
        }
        return false;
    }

    SubProblemSystem finish(SystemBuilder& b, const Layout& lay, Which which,
                            bool apply_dirichlet) const {
        if (apply_dirichlet)
            for (int d : dirichlet_dofs(lay.blocks)) b.constrain(d, 0.0);
        SubProblemSystem sp;
        sp.which = which;
        sp.blocks = lay.blocks;
        sp.sys = b.build();
        return sp;
    }

    // ---- precomputation ---------------------------------------------------

    void build_interface_data() {
        const ElementKind vk_f = s_.dofs.v.kind;
        const ElementKind vk_p = s_.dofs.U.kind;
        for (const EdgeUse& e : edges_with_tag(*s_.mesh, EdgeTag::interface)) {
            InterfaceEdgeData d;
            d.tri_f = e.tri_owner;
            d.tri_p = e.tri_other;
            d.normal = e.normal;
            d.tangent = e.tangent;
            d.length = e.length;
            d.h_edge = e.length;

            auto vec_dofs = [&](const DofMap& dm, int tri) {
                std::vector<int> dofs;
                for (int i = 0; i < scalar_basis_count(dm.kind); ++i)
                    for (int c = 0; c < 2; ++c)
                        dofs.push_back(2 * dm.cell_scalar[tri][i] + c);
                return dofs;
            };
            d.fv_dofs = vec_dofs(s_.dofs.v, d.tri_f);
            d.pv_dofs = vec_dofs(s_.dofs.U, d.tri_p);
            for (int i = 0; i < 3; ++i)
                d.fp_dofs.push_back(s_.dofs.pf.cell_scalar[d.tri_f][i]);

            const Vec2 pa = s_.mesh->nodes[e.a], pb = s_.mesh->nodes[e.b];
            for (size_t k = 0; k < edge_quad_.points.size(); ++k) {
                InterfaceQP qp;
                qp.w = edge_quad_.weights[k] * e.length;
                qp.x = pa + (pb - pa) * edge_quad_.points[k];

                const auto bary_f = detail::barycentric_of(geom_.cells[d.tri_f], qp.x);
                const auto bary_p = detail::barycentric_of(geom_.cells[d.tri_p], qp.x);
                const LocalBasis bf = local_basis(vk_f, geom_.cells[d.tri_f], bary_f);
                const LocalBasis bp = local_basis(vk_p, geom_.cells[d.tri_p], bary_p);
                const LocalBasis bpf =
                    local_basis(ElementKind::p1_scalar, geom_.cells[d.tri_f], bary_f);

                const Vec2 n = d.normal, tau = d.tangent;
                for (int i = 0; i < bf.count; ++i)
                    for (int c = 0; c < 2; ++c) {
                        const double gn = bf.grad[i].dot(n), gt = bf.grad[i].dot(tau);
                        qp.fvn.push_back(bf.value[i] * n[c]);
                        qp.fvt.push_back(bf.value[i] * tau[c]);
                        qp.fdnn.push_back(n[c] * gn);
                        qp.fdtn.push_back(0.5 * (tau[c] * gn + n[c] * gt));
                    }
                for (int i = 0; i < bp.count; ++i)
                    for (int c = 0; c < 2; ++c) {
                        qp.pvn.push_back(bp.value[i] * n[c]);
                        qp.pvt.push_back(bp.value[i] * tau[c]);
                    }
                for (int i = 0; i < 3; ++i) qp.fp.push_back(bpf.value[i]);
                d.qp.push_back(std::move(qp));
            }
            iface_.push_back(std::move(d));
        }
    }

    void build_inflow_data() {
        for (const EdgeUse& e : edges_with_tag(*s_.mesh, EdgeTag::fluid_in)) {
            BoundaryEdgeData d;
            d.normal = e.normal;
            for (int i = 0; i < scalar_basis_count(s_.dofs.v.kind); ++i)
                for (int c = 0; c < 2; ++c)
                    d.fv_dofs.push_back(2 * s_.dofs.v.cell_scalar[e.tri_owner][i] + c);
            const Vec2 pa = s_.mesh->nodes[e.a], pb = s_.mesh->nodes[e.b];
            for (size_t k = 0; k < edge_quad_.points.size(); ++k) {
                BoundaryEdgeData::QP qp;
                qp.w = edge_quad_.weights[k] * e.length;
                qp.x = pa + (pb - pa) * edge_quad_.points[k];
                const auto bary = detail::barycentric_of(geom_.cells[e.tri_owner], qp.x);
                const LocalBasis bf =
                    local_basis(s_.dofs.v.kind, geom_.cells[e.tri_owner], bary);
                for (int i = 0; i < bf.count; ++i)
                    for (int c = 0; c < 2; ++c) qp.value.push_back(bf.value[i]);
                d.qp.push_back(std::move(qp));
            }
            inflow_.push_back(std::move(d));
        }
    }

    // ---- shared helpers -----------------------------------------------------

    static double dot_dofs(const std::vector<double>& traces,
                           const std::vector<int>& dofs,
                           const std::vector<double>& coeff) {
        double v = 0.0;
        for (size_t i = 0; i < dofs.size(); ++i) v += traces[i] * coeff[dofs[i]];
        return v;
    }

    // sigma_f(v,p) n from the fluid side at one interface quadrature point
    struct Traction {
        double tn = 0.0, tt = 0.0;
    };
    Traction traction(const InterfaceQP& qp, const InterfaceEdgeData& e,
                      const std::vector<double>& v,
                      const std::vector<double>& pf) const {
        Traction t;
        const double mu2 = 2.0 * s_.params.mu_f;
        t.tn = mu2 * dot_dofs(qp.fdnn, e.fv_dofs, v) - dot_dofs(qp.fp, e.fp_dofs, pf);
        t.tt = mu2 * dot_dofs(qp.fdtn, e.fv_dofs, v);
        return t;
    }

    void merge(SystemBuilder& b, const std::vector<detail::LocalBlock>& blocks) const {
        for (const auto& lb : blocks) {
            const size_t m = lb.dof.size();
            if (!lb.mat.empty())
                for (size_t i = 0; i < m; ++i)
                    for (size_t j = 0; j < m; ++j)
                        if (const double v = lb.mat[i * m + j]; v != 0.0)
                            b.add(lb.dof[i], lb.dof[j], v);
            for (size_t i = 0; i < m; ++i)
                if (lb.rhs[i] != 0.0) b.add_rhs(lb.dof[i], lb.rhs[i]);
        }
    }

    // 2*mu*(D(u),D(phi)) entry for trial (jsc,cb), test (isc,ca):
    //   mu * (delta_{ab} grad_j.grad_i + dN_j/dx_a * dN_i/dx_b)
    static double epsilon_entry(double mu, const LocalBasis& bs, int isc, int ca,
                                int jsc, int cb) {
        double v = bs.grad[jsc][ca] * bs.grad[isc][cb];
        if (ca == cb) v += bs.grad[jsc].dot(bs.grad[isc]);
        return mu * v;
    }

    // ---- domain terms -------------------------------------------------------

    // Stokes block: 2mu_f(D(v),D(phi)) - (p_f,div phi) + (div v,psi) with the
    // body force f, mass source g and the inflow pressure functional.
    void domain_stokes(SystemBuilder& b, const Layout& lay, double t_new,
                       bool with_matrix) const {
        const int ov = lay.of(Field::v), op = lay.of(Field::pf);
        const DofMap& dv = s_.dofs.v;
        const DofMap& dp = s_.dofs.pf;
        const int cnt = scalar_basis_count(dv.kind);
        const int nv = 2 * cnt;
        auto blocks = detail::parallel_blocks(
            static_cast<int>(fluid_cells_.size()), [&](int k) {
                const int t = fluid_cells_[k];
                const CellGeometry& g = geom_.cells[t];
                detail::LocalBlock lb;
                std::vector<int> dofs(nv + 3);
                for (int i = 0; i < cnt; ++i)
                    for (int c = 0; c < 2; ++c)
                        dofs[2 * i + c] = ov + 2 * dv.cell_scalar[t][i] + c;
                for (int kk = 0; kk < 3; ++kk) dofs[nv + kk] = op + dp.cell_scalar[t][kk];
                lb.init(std::move(dofs), with_matrix);
                for (size_t qk = 0; qk < tri_quad_.points.size(); ++qk) {
                    const double w = tri_quad_.weights[qk] * g.det;
                    const LocalBasis bv = local_basis(dv.kind, g, tri_quad_.points[qk]);
                    const LocalBasis bp =
                        local_basis(ElementKind::p1_scalar, g, tri_quad_.points[qk]);
                    const Vec2 x = geom_.physical_point(t, tri_quad_.points[qk]);
                    const Vec2 f = s_.sources.f(x, t_new);
                    const double gsrc = s_.sources.g(x, t_new);
                    for (int i = 0; i < cnt; ++i)
                        for (int ca = 0; ca < 2; ++ca)
                            lb.rhs[2 * i + ca] += f[ca] * bv.value[i] * w;
                    for (int kk = 0; kk < 3; ++kk) lb.rhs[nv + kk] += gsrc * bp.value[kk] * w;
                    if (!with_matrix) continue;
                    for (int i = 0; i < cnt; ++i)
                        for (int ca = 0; ca < 2; ++ca) {
                            for (int j = 0; j < cnt; ++j)
                                for (int cb = 0; cb < 2; ++cb)
                                    lb.add(2 * i + ca, 2 * j + cb,
                                           epsilon_entry(s_.params.mu_f, bv, i, ca, j, cb) * w);
                            for (int kk = 0; kk < 3; ++kk) {
                                lb.add(2 * i + ca, nv + kk,
                                       -bp.value[kk] * bv.grad[i][ca] * w);
                                lb.add(nv + kk, 2 * i + ca,
                                       bp.value[kk] * bv.grad[i][ca] * w);
                            }
                        }
                }
                return lb;
            });
        merge(b, blocks);

        const double pin = s_.bcs.p_in(t_new);
        if (pin != 0.0)
            for (const BoundaryEdgeData& e : inflow_)
                for (const auto& qp : e.qp)
                    for (size_t i = 0; i < e.fv_dofs.size(); ++i) {
                        const int c = static_cast<int>(i % 2);
                        b.add_rhs(ov + e.fv_dofs[i],
                                  -pin * e.normal[c] * qp.value[i] * qp.w);
                    }
    }

    // Displacement block: 2mu_p(D(U),D(phi)) - (xi,div phi) + (div U,w)
    // + k3(xi,w) + s_q(xi), body force h. The eta coupling k1(eta,w) is
    // implicit in the monolithic layout and lagged (eta^{n-1}) otherwise.
    void domain_displacement(SystemBuilder& b, const Layout& lay,
                             const SolutionState& prev, double t_new,
                             bool with_matrix) const {
        const int oU = lay.of(Field::U), ox = lay.of(Field::xi);
        const int oe = lay.of(Field::eta);
        const DofMap& dU = s_.dofs.U;
        const DofMap& dx = s_.dofs.xi;
        const DofMap& de = s_.dofs.eta;
        const int cnt = scalar_basis_count(dU.kind);
        const int nu = 2 * cnt;
        const double sq_xi =
            s_.nitsche.gamma_q * s_.mesh->h_max * s_.mesh->h_max * s_.coeffs.k1;
        const bool mono = oe >= 0;
        auto blocks = detail::parallel_blocks(
            static_cast<int>(porous_cells_.size()), [&](int k) {
                const int t = porous_cells_[k];
                const CellGeometry& g = geom_.cells[t];
                detail::LocalBlock lb;
                std::vector<int> dofs(nu + 3 + (mono ? 3 : 0));
                for (int i = 0; i < cnt; ++i)
                    for (int c = 0; c < 2; ++c)
                        dofs[2 * i + c] = oU + 2 * dU.cell_scalar[t][i] + c;
                for (int kk = 0; kk < 3; ++kk) dofs[nu + kk] = ox + dx.cell_scalar[t][kk];
                if (mono)
                    for (int kk = 0; kk < 3; ++kk)
                        dofs[nu + 3 + kk] = oe + de.cell_scalar[t][kk];
                lb.init(std::move(dofs), with_matrix);
                for (size_t qk = 0; qk < tri_quad_.points.size(); ++qk) {
                    const double w = tri_quad_.weights[qk] * g.det;
                    const LocalBasis bU = local_basis(dU.kind, g, tri_quad_.points[qk]);
                    const LocalBasis bs =
                        local_basis(ElementKind::p1_scalar, g, tri_quad_.points[qk]);
                    const Vec2 x = geom_.physical_point(t, tri_quad_.points[qk]);
                    const Vec2 hsrc = s_.sources.h(x, t_new);
                    for (int i = 0; i < cnt; ++i)
                        for (int ca = 0; ca < 2; ++ca)
                            lb.rhs[2 * i + ca] += hsrc[ca] * bU.value[i] * w;
                    if (!mono) {
                        const double eta_prev = eval_scalar(de, prev.eta, t, bs);
                        for (int kk = 0; kk < 3; ++kk)
                            lb.rhs[nu + kk] += s_.coeffs.k1 * eta_prev * bs.value[kk] * w;
                    }
                    if (!with_matrix) continue;
                    for (int i = 0; i < cnt; ++i)
                        for (int ca = 0; ca < 2; ++ca) {
                            for (int j = 0; j < cnt; ++j)
                                for (int cb = 0; cb < 2; ++cb)
                                    lb.add(2 * i + ca, 2 * j + cb,
                                           epsilon_entry(s_.params.mu_p, bU, i, ca, j, cb) * w);
                            for (int kk = 0; kk < 3; ++kk) {
                                lb.add(2 * i + ca, nu + kk,
                                       -bs.value[kk] * bU.grad[i][ca] * w);
                                lb.add(nu + kk, 2 * i + ca,
                                       bs.value[kk] * bU.grad[i][ca] * w);
                            }
                        }
                    for (int kk = 0; kk < 3; ++kk)
                        for (int ll = 0; ll < 3; ++ll) {
                            lb.add(nu + kk, nu + ll,
                                   (s_.coeffs.k3 * bs.value[kk] * bs.value[ll] +
                                    sq_xi * bs.grad[kk].dot(bs.grad[ll])) *
                                       w);
                            if (mono)
                                lb.add(nu + kk, nu + 3 + ll,
                                       -s_.coeffs.k1 * bs.value[kk] * bs.value[ll] * w);
                        }
                }
                return lb;
            });
        merge(b, blocks);
    }

    // Mixed diffusion block: k^{-1}(q,r) - (k1 xi + k2 eta, div r)
    // + (d_t eta, z) + (div q, z) + s_q(eta), source s. In step 2 the xi slot
    // is the known xi^n (xi_known); in the monolithic layout it is implicit.
    void domain_darcy(SystemBuilder& b, const Layout& lay, const SolutionState& prev,
                      const std::vector<double>* xi_known, double t_new,
                      bool with_matrix) const {
        const int oq = lay.of(Field::q), oe = lay.of(Field::eta);
        const int ox = lay.of(Field::xi);
        const DofMap& dq = s_.dofs.q;
        const DofMap& de = s_.dofs.eta;
        const Mat2 kinv = s_.params.conductivity.inverse();
        const std::array<std::array<double, 2>, 2> ki{
            {{kinv.a, kinv.b}, {kinv.c, kinv.d}}};
        const double sq_eta =
            s_.nitsche.gamma_q * s_.mesh->h_max * s_.mesh->h_max * s_.coeffs.k2;
        const double idt = 1.0 / s_.dt;
        const bool mono = ox >= 0;
        auto blocks = detail::parallel_blocks(
            static_cast<int>(porous_cells_.size()), [&](int k) {
                const int t = porous_cells_[k];
                const CellGeometry& g = geom_.cells[t];
                detail::LocalBlock lb;
                const int cnt = scalar_basis_count(dq.kind);
                const int nq = 2 * cnt;
                std::vector<int> dofs(nq + 3 + (mono ? 3 : 0));
                for (int i = 0; i < cnt; ++i)
                    for (int c = 0; c < 2; ++c)
                        dofs[2 * i + c] = oq + 2 * dq.cell_scalar[t][i] + c;
                for (int kk = 0; kk < 3; ++kk) dofs[nq + kk] = oe + de.cell_scalar[t][kk];
                if (mono)
                    for (int kk = 0; kk < 3; ++kk)
                        dofs[nq + 3 + kk] = ox + s_.dofs.xi.cell_scalar[t][kk];
                lb.init(std::move(dofs), with_matrix);
                for (size_t qk = 0; qk < tri_quad_.points.size(); ++qk) {
                    const double w = tri_quad_.weights[qk] * g.det;
                    const LocalBasis bq = local_basis(dq.kind, g, tri_quad_.points[qk]);
                    const LocalBasis bs =
                        local_basis(ElementKind::p1_scalar, g, tri_quad_.points[qk]);
                    const Vec2 x = geom_.physical_point(t, tri_quad_.points[qk]);
                    const double ssrc = s_.sources.s(x, t_new);
                    const double eta_prev = eval_scalar(de, prev.eta, t, bs);
                    for (int kk = 0; kk < 3; ++kk)
                        lb.rhs[nq + kk] += (ssrc + idt * eta_prev) * bs.value[kk] * w;
                    if (!mono) {
                        const double xi_val = eval_scalar(s_.dofs.xi, *xi_known, t, bs);
                        for (int i = 0; i < cnt; ++i)
                            for (int ca = 0; ca < 2; ++ca)
                                lb.rhs[2 * i + ca] +=
                                    s_.coeffs.k1 * xi_val * bq.grad[i][ca] * w;
                    }
                    if (!with_matrix) continue;
                    for (int i = 0; i < cnt; ++i)
                        for (int ca = 0; ca < 2; ++ca) {
                            for (int j = 0; j < cnt; ++j)
                                for (int cb = 0; cb < 2; ++cb)
                                    lb.add(2 * i + ca, 2 * j + cb,
                                           ki[ca][cb] * bq.value[i] * bq.value[j] * w);
                            for (int kk = 0; kk < 3; ++kk) {
                                lb.add(2 * i + ca, nq + kk,
                                       -s_.coeffs.k2 * bs.value[kk] * bq.grad[i][ca] * w);
                                lb.add(nq + kk, 2 * i + ca,
                                       bs.value[kk] * bq.grad[i][ca] * w);
                                if (mono)
                                    lb.add(2 * i + ca, nq + 3 + kk,
                                           -s_.coeffs.k1 * bs.value[kk] * bq.grad[i][ca] * w);
                            }
                        }
                    for (int kk = 0; kk < 3; ++kk)
                        for (int ll = 0; ll < 3; ++ll)
                            lb.add(nq + kk, nq + ll,
                                   (idt * bs.value[kk] * bs.value[ll] +
                                    sq_eta * bs.grad[kk].dot(bs.grad[ll])) *
                                       w);
                }
                return lb;
            });
        merge(b, blocks);
    }

    // ---- interface terms ----------------------------------------------------
    //
    // Signs: each term is written on the left-hand side of the scheme; known
    // (lagged or already-solved) trial slots move to the right side with a
    // flipped sign. P = gamma_f*mu_f/h_e; BJS mode uses beta as tangential
    // penalty weight and drops tangential traction/adjoint terms.

    double penalty_weight(const InterfaceEdgeData& e) const {
        return s_.nitsche.gamma_f * s_.params.mu_f / e.h_edge;
    }
    double tangential_weight(const InterfaceEdgeData& e) const {
        return s_.nitsche.use_bjs ? s_.params.beta : penalty_weight(e);
    }

    void interface_step1(SystemBuilder& b, const Layout& lay,
                         const SolutionState& prev, bool with_matrix) const {
        const int oU = lay.of(Field::U);
        const double idt = 1.0 / s_.dt;
        for (const InterfaceEdgeData& e : iface_) {
            const double P = penalty_weight(e);
            const double Wt = tangential_weight(e);
            for (const InterfaceQP& qp : e.qp) {
                const double vn = dot_dofs(qp.fvn, e.fv_dofs, prev.v);
                const double vt = dot_dofs(qp.fvt, e.fv_dofs, prev.v);
                const double qn = dot_dofs(qp.pvn, e.pv_dofs, prev.q);
                const double Un = dot_dofs(qp.pvn, e.pv_dofs, prev.U);
                const double Ut = dot_dofs(qp.pvt, e.pv_dofs, prev.U);
                const Traction tr = traction(qp, e, prev.v, prev.pf);
                for (size_t i = 0; i < e.pv_dofs.size(); ++i) {
                    const int gi = oU + e.pv_dofs[i];
                    double r = Wt * (vt + idt * Ut) * qp.pvt[i];
                    r += P * (vn - qn + idt * Un) * qp.pvn[i];
                    r -= tr.tn * qp.pvn[i];
                    if (!s_.nitsche.use_bjs) r -= tr.tt * qp.pvt[i];
                    b.add_rhs(gi, r * qp.w);
                    if (!with_matrix) continue;
                    for (size_t j = 0; j < e.pv_dofs.size(); ++j)
                        b.add(gi, oU + e.pv_dofs[j],
                              idt *
                                  (Wt * qp.pvt[j] * qp.pvt[i] +
                                   P * qp.pvn[j] * qp.pvn[i]) *
                                  qp.w);
                }
            }
        }
    }

    void interface_step2(SystemBuilder& b, const Layout& lay,
                         const SolutionState& prev, bool with_matrix) const {
        const int oq = lay.of(Field::q);
        const double sfq =
            s_.nitsche.gamma_stab_prime * s_.nitsche.gamma_f * s_.params.mu_f;
        for (const InterfaceEdgeData& e : iface_) {
            const double P = penalty_weight(e);
            for (const InterfaceQP& qp : e.qp) {
                const double vn = dot_dofs(qp.fvn, e.fv_dofs, prev.v);
                const double dtUn = dot_dofs(qp.pvn, e.pv_dofs, prev.dtU);
                const double qn_prev = dot_dofs(qp.pvn, e.pv_dofs, prev.q);
                const Traction tr = traction(qp, e, prev.v, prev.pf);
                for (size_t i = 0; i < e.pv_dofs.size(); ++i) {
                    const int gi = oq + e.pv_dofs[i];
                    double r = P * (vn - dtUn) * qp.pvn[i];
                    r -= tr.tn * qp.pvn[i];
                    r += (sfq / e.h_edge) * qn_prev * qp.pvn[i];
                    b.add_rhs(gi, r * qp.w);
                    if (!with_matrix) continue;
                    for (size_t j = 0; j < e.pv_dofs.size(); ++j)
                        b.add(gi, oq + e.pv_dofs[j],
                              (P + sfq / e.h_edge) * qp.pvn[j] * qp.pvn[i] * qp.w);
                }
            }
        }
    }

    void interface_step3(SystemBuilder& b, const Layout& lay,
                         const SolutionState& prev, const std::vector<double>& dtU_new,
                         const std::vector<double>& q_new, bool with_matrix) const {
        const int ov = lay.of(Field::v), op = lay.of(Field::pf);
        const double mu2s = 2.0 * s_.nitsche.varsigma * s_.params.mu_f;
        const double sfv =
            s_.nitsche.gamma_stab_prime * s_.nitsche.gamma_f * s_.params.mu_f;
        const bool bjs = s_.nitsche.use_bjs;
        for (const InterfaceEdgeData& e : iface_) {
            const double P = penalty_weight(e);
            const double Wt = tangential_weight(e);
            const double sfp = s_.nitsche.gamma_stab * e.h_edge /
                               (s_.nitsche.gamma_f * s_.params.mu_f);
            for (const InterfaceQP& qp : e.qp) {
                const double dtUn = dot_dofs(qp.pvn, e.pv_dofs, dtU_new);
                const double dtUt = dot_dofs(qp.pvt, e.pv_dofs, dtU_new);
                const double qn = dot_dofs(qp.pvn, e.pv_dofs, q_new);
                const double vn_prev = dot_dofs(qp.fvn, e.fv_dofs, prev.v);
                const double pf_prev = dot_dofs(qp.fp, e.fp_dofs, prev.pf);
                const Traction tr = traction(qp, e, prev.v, prev.pf);

                for (size_t i = 0; i < e.fv_dofs.size(); ++i) {
                    const int gi = ov + e.fv_dofs[i];
                    const double tstar_n = mu2s * qp.fdnn[i];
                    const double tstar_t = bjs ? 0.0 : mu2s * qp.fdtn[i];
                    double r = P * (dtUn + qn) * qp.fvn[i] + Wt * dtUt * qp.fvt[i];
                    r += tr.tn * qp.fvn[i];
                    if (!bjs) r += tr.tt * qp.fvt[i];
                    r -= tstar_n * (dtUn + qn) + tstar_t * dtUt;
                    r += (sfv / e.h_edge) * vn_prev * qp.fvn[i];
                    b.add_rhs(gi, r * qp.w);
                    if (!with_matrix) continue;
                    for (size_t j = 0; j < e.fv_dofs.size(); ++j) {
                        double m = P * qp.fvn[j] * qp.fvn[i] + Wt * qp.fvt[j] * qp.fvt[i];
                        m -= tstar_n * qp.fvn[j] + tstar_t * qp.fvt[j];
                        m += (sfv / e.h_edge) * qp.fvn[j] * qp.fvn[i];
                        b.add(gi, ov + e.fv_dofs[j], m * qp.w);
                    }
                }
                for (size_t kk = 0; kk < e.fp_dofs.size(); ++kk) {
                    const int gk = op + e.fp_dofs[kk];
                    double r = -qp.fp[kk] * (dtUn + qn);
                    r += sfp * pf_prev * qp.fp[kk];
                    b.add_rhs(gk, r * qp.w);
                    if (!with_matrix) continue;
                    for (size_t j = 0; j < e.fv_dofs.size(); ++j)
                        b.add(gk, ov + e.fv_dofs[j], -qp.fp[kk] * qp.fvn[j] * qp.w);
                    for (size_t l = 0; l < e.fp_dofs.size(); ++l)
                        b.add(gk, op + e.fp_dofs[l], sfp * qp.fp[l] * qp.fp[kk] * qp.w);
                }
            }
        }
    }

    void interface_monolithic(SystemBuilder& b, const Layout& lay,
                              const SolutionState& prev, bool with_matrix) const {
        const int ov = lay.of(Field::v), op = lay.of(Field::pf);
        const int oU = lay.of(Field::U), oq = lay.of(Field::q);
        const double idt = 1.0 / s_.dt;
        const double mu2 = 2.0 * s_.params.mu_f;
        const double mu2s = s_.nitsche.varsigma * mu2;
        const bool bjs = s_.nitsche.use_bjs;
        struct Slot {
            int global;
            double trace;
        };
        for (const InterfaceEdgeData& e : iface_) {
            const double P = penalty_weight(e);
            const double Wt = tangential_weight(e);
            const int nf = static_cast<int>(e.fv_dofs.size());
            const int np = static_cast<int>(e.pv_dofs.size());
            for (const InterfaceQP& qp : e.qp) {
                const double Un_prev = dot_dofs(qp.pvn, e.pv_dofs, prev.U);
                const double Ut_prev = dot_dofs(qp.pvt, e.pv_dofs, prev.U);

                // trial slots of (v - d_tU - q).n and (v - d_tU).tau; the
                // U^{n-1}/dt part of d_tU is known and lands on the rhs
                std::vector<Slot> jn, jt, bn, bt;
                for (int i = 0; i < nf; ++i) jn.push_back({ov + e.fv_dofs[i], qp.fvn[i]});
                for (int i = 0; i < np; ++i)
                    jn.push_back({oU + e.pv_dofs[i], -idt * qp.pvn[i]});
                for (int i = 0; i < np; ++i) jn.push_back({oq + e.pv_dofs[i], -qp.pvn[i]});
                for (int i = 0; i < nf; ++i) jt.push_back({ov + e.fv_dofs[i], qp.fvt[i]});
                for (int i = 0; i < np; ++i)
                    jt.push_back({oU + e.pv_dofs[i], -idt * qp.pvt[i]});
                const double jn_known = idt * Un_prev;
                const double jt_known = idt * Ut_prev;

                // test slots of (phi_f - phi_p - r).n and (phi_f - phi_p).tau
                bn = jn;
                bt = jt;
                for (int i = 0; i < np; ++i) bn[nf + i].trace = -qp.pvn[i];
                for (int i = 0; i < np; ++i) bt[nf + i].trace = -qp.pvt[i];

                for (const Slot& ti : bn) {
                    b.add_rhs(ti.global, -P * jn_known * ti.trace * qp.w);
                    if (!with_matrix) continue;
                    for (const Slot& tj : jn)
                        b.add(ti.global, tj.global, P * tj.trace * ti.trace * qp.w);
                }
                for (const Slot& ti : bt) {
                    b.add_rhs(ti.global, -Wt * jt_known * ti.trace * qp.w);
                    if (!with_matrix) continue;
                    for (const Slot& tj : jt)
                        b.add(ti.global, tj.global, Wt * tj.trace * ti.trace * qp.w);
                }

                if (with_matrix) {
                    // consistency -(t_n BN + t_tau BT); trial slots (v, p_f)
                    for (const Slot& ti : bn) {
                        for (int j = 0; j < nf; ++j)
                            b.add(ti.global, ov + e.fv_dofs[j],
                                  -mu2 * qp.fdnn[j] * ti.trace * qp.w);
                        for (size_t l = 0; l < e.fp_dofs.size(); ++l)
                            b.add(ti.global, op + e.fp_dofs[l],
                                  qp.fp[l] * ti.trace * qp.w);
                    }
                    if (!bjs)
                        for (const Slot& ti : bt)
                            for (int j = 0; j < nf; ++j)
                                b.add(ti.global, ov + e.fv_dofs[j],
                                      -mu2 * qp.fdtn[j] * ti.trace * qp.w);
                }

                // adjoint -(t*_n JN + t*_tau JT); test slots (phi_f, psi_f)
                for (int i = 0; i < nf; ++i) {
                    const int gi = ov + e.fv_dofs[i];
                    const double tn = mu2s * qp.fdnn[i];
                    const double tt = bjs ? 0.0 : mu2s * qp.fdtn[i];
                    b.add_rhs(gi, (tn * jn_known + tt * jt_known) * qp.w);
                    if (!with_matrix) continue;
                    for (const Slot& tj : jn) b.add(gi, tj.global, -tn * tj.trace * qp.w);
                    for (const Slot& tj : jt) b.add(gi, tj.global, -tt * tj.trace * qp.w);
                }
                for (size_t kk = 0; kk < e.fp_dofs.size(); ++kk) {
                    const int gk = op + e.fp_dofs[kk];
                    b.add_rhs(gk, qp.fp[kk] * jn_known * qp.w);
                    if (!with_matrix) continue;
                    for (const Slot& tj : jn)
                        b.add(gk, tj.global, -qp.fp[kk] * tj.trace * qp.w);
                }
            }
        }
    }

    const ProblemSetup& s_;
    GeometryCache geom_;
    TriangleQuadrature tri_quad_;
    EdgeQuadrature edge_quad_;
    std::vector<int> fluid_cells_, porous_cells_;
    std::vector<InterfaceEdgeData> iface_;
    std::vector<BoundaryEdgeData> inflow_;
};

// ---------------------------------------------------------------------------
// Local interface matrices of one edge, split into the scheme's building
// blocks. Slot order for both rows (tests phi_f, psi_f, phi_p, r) and
// columns (trials v, p_f, U, q): [v(nf) | pf(3) | U(np) | q(np)].
//   consistency        : -(sigma_f(v,p_f)n).B          (trial v and p_f)
//   adjoint_consistency: -2*varsigma*mu_f (D(phi_f)n).J (the varsigma-scaled part)
//   pressure_adjoint   : -psi_f (J.n)                   (fixed sign)
//   penalty            : P (JN)(BN) + W_t (JT)(BT)
// J carries d_tU, so U columns are weighted by -1/dt; B weights U rows by -1.
// In BJS mode tangential consistency/adjoint parts vanish and W_t = beta.
// ---------------------------------------------------------------------------

struct InterfaceLocalMatrices {
    int nf = 0, np = 0, n = 0;
    std::vector<double> consistency, adjoint_consistency, pressure_adjoint, penalty;

    int col_v(int i) const { return i; }
    int col_pf(int k) const { return nf + k; }
    int col_U(int i) const { return nf + 3 + i; }
    int col_q(int i) const { return nf + 3 + np + i; }
    double& at(std::vector<double>& m, int r, int c) const { return m[r * n + c]; }
};

inline InterfaceLocalMatrices interface_terms(const Assembler& as, int edge_index,
                                              double dt) {
    const auto& edges = as.interface_edges();
    if (edge_index < 0 || edge_index >= static_cast<int>(edges.size()))
        throw UsageError("interface_terms: not an interface edge");
    const InterfaceEdgeData& e = edges[edge_index];
    const ProblemSetup& s = as.setup();
    InterfaceLocalMatrices m;
    m.nf = static_cast<int>(e.fv_dofs.size());
    m.np = static_cast<int>(e.pv_dofs.size());
    m.n = m.nf + 3 + 2 * m.np;
    m.consistency.assign(m.n * m.n, 0.0);
    m.adjoint_consistency.assign(m.n * m.n, 0.0);
    m.pressure_adjoint.assign(m.n * m.n, 0.0);
    m.penalty.assign(m.n * m.n, 0.0);

    const double P = s.nitsche.gamma_f * s.params.mu_f / e.h_edge;
    const double Wt = s.nitsche.use_bjs ? s.params.beta : P;
    const double mu2 = 2.0 * s.params.mu_f;
    const double mu2s = s.nitsche.varsigma * mu2;
    const double idt = 1.0 / dt;
    const bool bjs = s.nitsche.use_bjs;

    for (const InterfaceQP& qp : e.qp) {
        // trace of slot c in the jump expressions; jn/jt trial, bn/bt test
        auto slot = [&](int c, bool test) {
            struct Tr {
                double nrm = 0.0, tan = 0.0;
            } tr;
            if (c < m.nf) {
                tr.nrm = qp.fvn[c];
                tr.tan = qp.fvt[c];
            } else if (c >= m.nf + 3 && c < m.nf + 3 + m.np) {
                const int i = c - m.nf - 3;
                const double w = test ? -1.0 : -idt;
                tr.nrm = w * qp.pvn[i];
                tr.tan = w * qp.pvt[i];
            } else if (c >= m.nf + 3 + m.np) {
                const int i = c - m.nf - 3 - m.np;
                tr.nrm = -qp.pvn[i];
                tr.tan = 0.0;  // q and r only enter the normal jump
            }
            return tr;
        };
        for (int r = 0; r < m.n; ++r) {
            const auto br = slot(r, true);
            for (int c = 0; c < m.n; ++c) {
                const auto jc = slot(c, false);
                m.at(m.penalty, r, c) +=
                    (P * jc.nrm * br.nrm + Wt * jc.tan * br.tan) * qp.w;
                // consistency: trial traction against the test jump
                if (c < m.nf) {
                    double v = -mu2 * qp.fdnn[c] * br.nrm;
                    if (!bjs) v -= mu2 * qp.fdtn[c] * br.tan;
                    m.at(m.consistency, r, c) += v * qp.w;
                } else if (c < m.nf + 3) {
                    m.at(m.consistency, r, c) += qp.fp[c - m.nf] * br.nrm * qp.w;
                }
                // adjoint parts: test traction against the trial jump
                if (r < m.nf) {
                    double v = -mu2s * qp.fdnn[r] * jc.nrm;
                    if (!bjs) v -= mu2s * qp.fdtn[r] * jc.tan;
                    m.at(m.adjoint_consistency, r, c) += v * qp.w;
                } else if (r < m.nf + 3) {
                    m.at(m.pressure_adjoint, r, c) +=
                        -qp.fp[r - m.nf] * jc.nrm * qp.w;
                }
            }
        }
    }
    return m;
}

// Spec-level one-shot wrappers.
inline SubProblemSystem assemble_step1(const ProblemSetup& setup,
                                       const SolutionState& prev, double t_new) {
    return Assembler(setup).assemble_step1(prev, t_new);
}

inline SubProblemSystem assemble_step2(const ProblemSetup& setup,
                                       const SolutionState& prev,
                                       const std::vector<double>& xi_new,
                                       double t_new) {
    return Assembler(setup).assemble_step2(prev, xi_new, t_new);
}

inline SubProblemSystem assemble_step3(const ProblemSetup& setup,
                                       const SolutionState& prev,
                                       const std::vector<double>& dtU_new,
                                       const std::vector<double>& q_new, double t_new) {
    return Assembler(setup).assemble_step3(prev, dtU_new, q_new, t_new);
}

inline SubProblemSystem assemble_monolithic(const ProblemSetup& setup,
                                            const SolutionState& prev, double t_new) {
    return Assembler(setup).assemble_monolithic(prev, t_new);
}

}  // namespace sbn
