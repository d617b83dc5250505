#pragma once

#include <random>
#include <vector>

#include "sbn/assembly.hpp"

namespace sbn::test {

// dense copy of a rectangular block of a sparse system
inline std::vector<double> dense_block(const SparseSystem& s, int r0, int nr, int c0,
                                       int nc) {
    std::vector<double> out(static_cast<size_t>(nr) * nc, 0.0);
    for (int i = 0; i < nr; ++i)
        for (int k = s.row_ptr[r0 + i]; k < s.row_ptr[r0 + i + 1]; ++k) {
            const int j = s.col_idx[k] - c0;
            if (j >= 0 && j < nc) out[static_cast<size_t>(i) * nc + j] = s.values[k];
        }
    return out;
}

inline double quadratic_form(const SparseSystem& s, const std::vector<double>& x) {
    double acc = 0.0;
    const std::vector<double> ax = s.multiply(x);
    for (int i = 0; i < s.n; ++i) acc += x[i] * ax[i];
    return acc;
}

inline PhysicalParameters table2_params() {
    PhysicalParameters p;
    p.mu_f = 0.01;
    p.mu_p = 1e8;
    p.lambda_p = 4.28e6;
    p.s0 = 5e-6;
    p.alpha = 1.0;
    p.conductivity = PhysicalParameters::scalar_conductivity(1.0);
    return p;
}

inline PhysicalParameters table3_params() {
    PhysicalParameters p;
    p.mu_f = 1e-3;
    p.mu_p = 2.92e8;
    p.lambda_p = 1.94e10;
    p.s0 = 6.9e-5;
    p.alpha = 1.0;
    p.conductivity = PhysicalParameters::scalar_conductivity(1e-8);
    p.beta = 3.47e3;
    return p;
}

inline ChannelSpec unit_channel(int nx, int ny_half) {
    ChannelSpec s;
    s.nx = nx;
    s.ny_half = ny_half;
    return s;
}

// a single porous triangle carrying no interface edges
inline TriangleMesh porous_triangle() {
    TriangleMesh m;
    m.nodes = {{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}};
    m.triangles = {{{0, 1, 2}, Region::porous}};
    m.edges = {{0, 1, EdgeTag::porous_ext},
               {1, 2, EdgeTag::porous_ext},
               {0, 2, EdgeTag::porous_ext}};
    m.h_max = std::sqrt(2.0);
    validate_mesh(m);
    return m;
}

// constant vector field as coefficients of a vector dof map
inline std::vector<double> constant_vector_field(const DofMap& d, Vec2 value) {
    std::vector<double> c(d.n_dofs, 0.0);
    for (int s = 0; s < d.n_scalar; ++s) {
        c[2 * s] = value.x;
        c[2 * s + 1] = value.y;
    }
    return c;
}

inline NitscheParameters plain_nitsche(double gamma_f = 1500.0, int varsigma = 1) {
    NitscheParameters n;
    n.gamma_f = gamma_f;
    n.varsigma = varsigma;
    n.gamma_stab = 0.0;
    n.gamma_stab_prime = 0.0;
    n.gamma_q = 0.0;
    return n;
}

}  // namespace sbn::test
