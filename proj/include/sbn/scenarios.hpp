#pragma once

#include "sbn/config.hpp"
#include "sbn/verification.hpp"

namespace sbn {

// Reference-to-physical mapping of the fractured-reservoir scenario: x is
// kept, y is a slowly waving vertical shear of the [-100,100]^2 square.
inline Vec2 test2_mapping(Vec2 p) {
    const double c1 = std::cos((p.x + p.y) / 100.0);
    const double c2 = std::cos((pi * p.x + p.y) / 100.0);
    return {p.x, 5.0 * c1 * c2 * c2 + p.y / 5.0 - p.x / 10.0};
}

// Test-2 style boundary set for the smoke scenario: porous exterior fully
// pinned, fluid exterior no-slip; the flow is driven by the injection source.
inline BoundaryConditionSet boundary_set_test2_smoke() {
    BoundaryConditionSet b = boundary_set_test1(true);
    return b;
}

struct ScenarioData {
    TriangleMesh mesh;
    Sources sources;
    BoundaryConditionSet bcs;
    NitscheParameters nitsche;
};

inline TriangleMesh build_config_mesh(const RunConfig& cfg) {
    TriangleMesh mesh = cfg.mesh_source == "file" ? read_mesh(cfg.mesh_path)
                                                  : build_channel_mesh(cfg.channel);
    if (cfg.mesh_map == "test2") mesh = apply_mapping(mesh, test2_mapping);
    return mesh;
}

inline double region_area(const TriangleMesh& mesh, Region r) {
    double a = 0.0;
    for (int t = 0; t < static_cast<int>(mesh.triangles.size()); ++t)
        if (mesh.triangles[t].region == r) a += mesh.signed_area(t);
    return a;
}

inline ScenarioData make_scenario(const RunConfig& cfg) {
    ScenarioData sd{build_config_mesh(cfg), {}, {}, cfg.nitsche};
    const auto pin = std::make_shared<Expression>(Expression::parse(cfg.p_in_expr));
    switch (cfg.scenario) {
        case Scenario::test1:
            sd.sources = make_test1_sources(cfg.physics);
            sd.bcs = boundary_set_test1(cfg.fluid_ext_bc == FluidExtBc::noslip);
            break;
        case Scenario::test2_external_mesh: {
            // injection at a fixed total rate, distributed over the fluid region
            const double rate = cfg.injection_rate != 0.0 ? cfg.injection_rate : 25.0;
            const double g = rate / region_area(sd.mesh, Region::fluid);
            sd.sources.g = [g](Vec2, double) { return g; };
            sd.bcs = boundary_set_test2_smoke();
            break;
        }
        case Scenario::custom: {
            if (cfg.injection_rate != 0.0) {
                const double g = cfg.injection_rate / region_area(sd.mesh, Region::fluid);
                sd.sources.g = [g](Vec2, double) { return g; };
            }
            sd.bcs = boundary_set_test1(cfg.fluid_ext_bc == FluidExtBc::noslip);
            break;
        }
    }
    sd.bcs.p_in = [pin](double t) { return (*pin)(t); };
    return sd;
}

}  // namespace sbn
