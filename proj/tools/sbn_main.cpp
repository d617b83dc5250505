// Command-line front end: run a simulation, run the convergence study,
// compare the decoupled integrator against the monolithic one, or emit the
// built-in channel mesh.

#include <iostream>

#include <CLI11.hpp>

#include "sbn/io.hpp"
#include "sbn/scenarios.hpp"

namespace {

int cmd_run(const std::string& config_path, const std::string& out_override,
            int steps_override) {
    sbn::RunConfig cfg = sbn::parse_config(config_path);
    if (!out_override.empty()) cfg.out_dir = out_override;
    std::filesystem::create_directories(cfg.out_dir);

    sbn::ScenarioData sd = sbn::make_scenario(cfg);
    auto setup = sbn::ProblemSetup::make(sd.mesh, cfg.pairing, cfg.physics, sd.nitsche,
                                         sd.bcs, sd.sources, cfg.dt);
    sbn::DecoupledStepper stepper(setup);
    sbn::Diagnostics diag(stepper.assembler());

    int steps = static_cast<int>(std::llround(cfg.T / cfg.dt));
    if (steps_override > 0) steps = steps_override;

    sbn::EnergyLedger header;
    header.cond_k2_gt_k1 = setup.coeffs.k2 > setup.coeffs.k1;
    header.cond_k3_gt_k1 = setup.coeffs.k3 > setup.coeffs.k1;
    header.dt_over_h = cfg.dt / sd.mesh.h_max;
    sbn::LedgerWriter ledger(cfg.out_dir + "/ledger.csv", header);

    sbn::SolutionState state = sbn::SolutionState::zero(setup.dofs);
    for (int n = 1; n <= steps; ++n) {
        state = stepper.advance(state);
        sbn::LedgerRow row = diag.row(state);
        row.residual_step1 = stepper.last_residuals()[0];
        row.residual_step2 = stepper.last_residuals()[1];
        row.residual_step3 = stepper.last_residuals()[2];
        ledger.write_row(row);
        if (n % cfg.stride == 0 || n == steps) {
            sbn::write_vtk_snapshot(sd.mesh, setup.dofs, state,
                                    cfg.out_dir + "/fields_" + std::to_string(n) +
                                        ".vtk");
            if (cfg.dump_dofs)
                sbn::dump_dof_csv(state, cfg.out_dir + "/dofs_" + std::to_string(n) +
                                             ".csv");
        }
    }
    if (!ledger.good()) throw sbn::UsageError("ledger write failed");
    std::cout << "completed " << steps << " steps; outputs in " << cfg.out_dir << "\n";
    return 0;
}

int cmd_converge(const std::string& config_path, int levels, double ref_h,
                 const std::string& out_override) {
    sbn::RunConfig cfg = sbn::parse_config(config_path);
    if (!out_override.empty()) cfg.out_dir = out_override;
    std::filesystem::create_directories(cfg.out_dir);
    if (cfg.scenario != sbn::Scenario::test1)
        throw sbn::UsageError("converge expects the test1 scenario");

    sbn::StudyProtocol proto;
    proto.channel = cfg.channel;
    proto.dt = cfg.dt;
    proto.T = cfg.T;
    if (levels > 0) {
        proto.level_nx.clear();
        for (int l = 0; l < levels; ++l) proto.level_nx.push_back(5 << l);
    }
    if (ref_h > 0.0) {
        const double width = cfg.channel.x1 - cfg.channel.x0;
        proto.reference_nx = std::max(
            1, static_cast<int>(std::lround(width * std::sqrt(2.0) / ref_h)));
    }

    sbn::StudyPhysics phys;
    phys.params = cfg.physics;
    phys.nitsche = cfg.nitsche;
    phys.bcs = sbn::boundary_set_test1(cfg.fluid_ext_bc == sbn::FluidExtBc::noslip);
    phys.sources = sbn::make_test1_sources(cfg.physics);
    phys.pairing = cfg.pairing;

    auto report = sbn::run_convergence_study(
        proto, phys, [](const std::string& m) { std::cout << m << "\n"; });
    sbn::write_convergence_csv(report, cfg.out_dir + "/table1.csv");

    std::cout << "h,eps_f,eps_p,eps_fp,eps_pp\n";
    for (size_t i = 0; i < report.h.size(); ++i)
        std::cout << sbn::fmt_g17(report.h[i]) << "," << report.errors[i].eps_f << ","
                  << report.errors[i].eps_p << "," << report.errors[i].eps_fp << ","
                  << report.errors[i].eps_pp << "\n";
    std::cout << "table written to " << cfg.out_dir << "/table1.csv\n";
    return 0;
}

int cmd_compare(const std::string& config_path, const std::string& sweep,
                const std::string& out_override) {
    sbn::RunConfig cfg = sbn::parse_config(config_path);
    if (!out_override.empty()) cfg.out_dir = out_override;
    std::filesystem::create_directories(cfg.out_dir);

    std::vector<double> dts;
    std::stringstream ss(sweep);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        bool ok = false;
        const double d = sbn::parse_double(tok, ok);
        if (!ok || d <= 0.0) throw sbn::UsageError("bad dt in sweep: " + tok);
        dts.push_back(d);
    }
    if (dts.empty()) throw sbn::UsageError("empty dt sweep");

    sbn::ScenarioData sd = sbn::make_scenario(cfg);
    auto report = sbn::oracle_compare(sd.mesh, cfg.pairing, cfg.physics, sd.nitsche,
                                      sd.bcs, sd.sources, cfg.T, dts);
    sbn::write_oracle_csv(report, cfg.out_dir + "/oracle.csv");
    for (size_t i = 0; i < report.dt.size(); ++i)
        std::cout << "dt=" << sbn::fmt_g17(report.dt[i])
                  << " discrepancy=" << sbn::fmt_g17(report.discrepancy[i]) << "\n";
    if (report.fitted_order)
        std::cout << "fitted order: " << sbn::fmt_g17(*report.fitted_order) << "\n";
    std::cout << "report written to " << cfg.out_dir << "/oracle.csv\n";
    return 0;
}

int cmd_mesh(int nx, int ny, const std::string& out) {
    sbn::ChannelSpec spec;
    spec.nx = nx;
    spec.ny_half = ny;
    sbn::write_mesh(sbn::build_channel_mesh(spec), out);
    std::cout << "mesh written to " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stokes-poroelasticity channel simulator"};
    app.require_subcommand(1);

    std::string config, out_dir, sweep, mesh_out = "channel.mesh";
    int steps = 0, levels = 0, nx = 8, ny = 8;
    double ref_h = 0.0;

    auto* run = app.add_subcommand("run", "run the decoupled integrator");
    run->add_option("config", config, "INI configuration file")->required();
    run->add_option("--out", out_dir, "output directory override");
    run->add_option("--steps", steps, "cap the number of time steps");

    auto* conv = app.add_subcommand("converge", "run the convergence study");
    conv->add_option("config", config, "INI configuration file")->required();
    conv->add_option("--levels", levels, "number of halving mesh levels");
    conv->add_option("--ref-h", ref_h, "reference mesh size");
    conv->add_option("--out", out_dir, "output directory override");

    auto* cmp = app.add_subcommand("compare", "decoupled vs monolithic sweep");
    cmp->add_option("config", config, "INI configuration file")->required();
    cmp->add_option("--dt-sweep", sweep, "comma-separated decreasing dt list")
        ->required();
    cmp->add_option("--out", out_dir, "output directory override");

    auto* mesh = app.add_subcommand("mesh", "emit the built-in channel mesh");
    mesh->add_option("--nx", nx, "cells along the channel");
    mesh->add_option("--ny", ny, "cells per half across the channel");
    mesh->add_option("--out", mesh_out, "output path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(config, out_dir, steps);
        if (conv->parsed()) return cmd_converge(config, levels, ref_h, out_dir);
        if (cmp->parsed()) return cmd_compare(config, sweep, out_dir);
        if (mesh->parsed()) return cmd_mesh(nx, ny, mesh_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
