#pragma once

#include <filesystem>
#include <fstream>

#include "sbn/timestepping.hpp"
#include "sbn/verification.hpp"

namespace sbn {

// ---------------------------------------------------------------------------
// CSV writers. All floating point goes through fmt_g17 so files are
// locale-independent and reparse to the same doubles.
// ---------------------------------------------------------------------------

class LedgerWriter {
  public:
    LedgerWriter(const std::string& path, const EnergyLedger& header_info)
        : f_(path) {
        if (!f_) throw UsageError("cannot open " + path);
        f_ << "# conditions: k2>k1=" << (header_info.cond_k2_gt_k1 ? "yes" : "no")
           << " k3>k1=" << (header_info.cond_k3_gt_k1 ? "yes" : "no")
           << " dt/h=" << fmt_g17(header_info.dt_over_h) << "\n";
        f_ << "step,t,energy,diss_fluid,diss_darcy,mismatch_normal,mismatch_tangent,"
              "load,residual_step1,residual_step2,residual_step3\n";
        f_.flush();
    }

    void write_row(const LedgerRow& r) {
        f_ << r.n << "," << fmt_g17(r.t) << "," << fmt_g17(r.energy) << ","
           << fmt_g17(r.diss_fluid) << "," << fmt_g17(r.diss_darcy) << ","
           << fmt_g17(r.mismatch_normal) << "," << fmt_g17(r.mismatch_tangent) << ","
           << fmt_g17(r.load) << "," << fmt_g17(r.residual_step1) << ","
           << fmt_g17(r.residual_step2) << "," << fmt_g17(r.residual_step3) << "\n";
        f_.flush();  // partial output survives a failed run
    }

    bool good() const { return static_cast<bool>(f_); }

  private:
    std::ofstream f_;
};

inline void write_convergence_csv(const ConvergenceReport& rep,
                                  const std::string& path) {
    std::ofstream f(path);
    if (!f) throw UsageError("cannot open " + path);
    f << "h,eps_f,rate_f,eps_p,rate_p,eps_fp,rate_fp,eps_pp,rate_pp\n";
    for (size_t i = 0; i < rep.h.size(); ++i) {
        const ErrorIndicators& e = rep.errors[i];
        auto rate = [&](double ErrorIndicators::*m) {
            return i == 0 ? std::string() : fmt_g17(rep.rates[i - 1].*m);
        };
        f << fmt_g17(rep.h[i]) << "," << fmt_g17(e.eps_f) << ","
          << rate(&ErrorIndicators::eps_f) << "," << fmt_g17(e.eps_p) << ","
          << rate(&ErrorIndicators::eps_p) << "," << fmt_g17(e.eps_fp) << ","
          << rate(&ErrorIndicators::eps_fp) << "," << fmt_g17(e.eps_pp) << ","
          << rate(&ErrorIndicators::eps_pp) << "\n";
    }
    if (!f) throw UsageError("write failed for " + path);
}

inline void write_oracle_csv(const OracleReport& rep, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw UsageError("cannot open " + path);
    f << "dt,discrepancy,fitted_order\n";
    for (size_t i = 0; i < rep.dt.size(); ++i) {
        f << fmt_g17(rep.dt[i]) << "," << fmt_g17(rep.discrepancy[i]) << ",";
        if (rep.fitted_order) f << fmt_g17(*rep.fitted_order);
        f << "\n";
    }
    if (!f) throw UsageError("write failed for " + path);
}

// ---------------------------------------------------------------------------
// Legacy-VTK snapshot of one time level: point data at mesh vertices only
// (quadratic midpoint dofs are not exported). Fields outside their region
// are written as zero.
// ---------------------------------------------------------------------------

inline void write_vtk_snapshot(const TriangleMesh& mesh, const FieldDofs& dofs,
                               const SolutionState& st, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw UsageError("cannot open " + path);
    f << "# vtk DataFile Version 3.0\n";
    f << "fields at t=" << fmt_g17(st.t) << "\n";
    f << "ASCII\nDATASET UNSTRUCTURED_GRID\n";
    f << "POINTS " << mesh.nodes.size() << " double\n";
    for (const Vec2& p : mesh.nodes)
        f << fmt_g17(p.x) << " " << fmt_g17(p.y) << " 0\n";
    f << "CELLS " << mesh.triangles.size() << " " << 4 * mesh.triangles.size() << "\n";
    for (const Triangle& t : mesh.triangles)
        f << "3 " << t.v[0] << " " << t.v[1] << " " << t.v[2] << "\n";
    f << "CELL_TYPES " << mesh.triangles.size() << "\n";
    for (size_t i = 0; i < mesh.triangles.size(); ++i) f << "5\n";

    f << "POINT_DATA " << mesh.nodes.size() << "\n";
    auto write_vector = [&](const char* name, const DofMap& dm,
                            const std::vector<double>& coeff) {
        f << "VECTORS " << name << " double\n";
        for (size_t v = 0; v < mesh.nodes.size(); ++v) {
            const int sd = dm.vertex_scalar[v];
            if (sd < 0) f << "0 0 0\n";
            else
                f << fmt_g17(coeff[2 * sd]) << " " << fmt_g17(coeff[2 * sd + 1])
                  << " 0\n";
        }
    };
    auto write_scalar = [&](const char* name, const DofMap& dm,
                            const std::vector<double>& coeff) {
        f << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
        for (size_t v = 0; v < mesh.nodes.size(); ++v) {
            const int sd = dm.vertex_scalar[v];
            f << (sd < 0 ? std::string("0") : fmt_g17(coeff[sd])) << "\n";
        }
    };
    write_vector("v", dofs.v, st.v);
    write_vector("U", dofs.U, st.U);
    write_vector("q", dofs.q, st.q);
    write_scalar("p_f", dofs.pf, st.pf);
    write_scalar("p_p", dofs.xi, st.pp);
    write_scalar("xi", dofs.xi, st.xi);
    write_scalar("eta", dofs.eta, st.eta);
    if (!f) throw UsageError("write failed for " + path);
}

inline void dump_dof_csv(const SolutionState& st, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw UsageError("cannot open " + path);
    auto dump = [&](const char* name, const std::vector<double>& v) {
        f << name;
        for (double x : v) f << "," << fmt_g17(x);
        f << "\n";
    };
    dump("v", st.v);
    dump("pf", st.pf);
    dump("U", st.U);
    dump("xi", st.xi);
    dump("q", st.q);
    dump("eta", st.eta);
    dump("pp", st.pp);
    if (!f) throw UsageError("write failed for " + path);
}

}  // namespace sbn
