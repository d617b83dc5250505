#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "sbn/fem.hpp"
#include "sbn/sparse.hpp"

using namespace sbn;

namespace {

// exact integral of x^a y^b over the reference triangle: a! b! / (a+b+2)!
double monomial_integral(int a, int b) {
    auto fact = [](int n) {
        double f = 1.0;
        for (int i = 2; i <= n; ++i) f *= i;
        return f;
    };
    return fact(a) * fact(b) / fact(a + b + 2);
}

TriangleMesh one_triangle(Region region = Region::porous) {
    TriangleMesh m;
    m.nodes = {{0, 0}, {1, 0}, {0, 1}};
    m.triangles = {{{0, 1, 2}, region}};
    const EdgeTag t = region == Region::porous ? EdgeTag::porous_ext : EdgeTag::fluid_ext;
    m.edges = {{0, 1, t}, {1, 2, t}, {0, 2, t}};
    m.h_max = std::sqrt(2.0);
    validate_mesh(m);
    return m;
}

}  // namespace

TEST_CASE("triangle quadrature exactness", "[fem]") {
    for (int deg = 1; deg <= 6; ++deg) {
        const TriangleQuadrature q = triangle_quadrature(deg);
        double wsum = 0.0;
        for (double w : q.weights) {
            CHECK(w > 0.0);
            wsum += w;
        }
        CHECK(wsum == Catch::Approx(0.5).epsilon(1e-14));
        for (int a = 0; a + 0 <= deg; ++a)
            for (int b = 0; a + b <= deg; ++b) {
                double acc = 0.0;
                for (size_t k = 0; k < q.points.size(); ++k)
                    acc += q.weights[k] * std::pow(q.points[k][1], a) *
                           std::pow(q.points[k][2], b);
                CHECK_THAT(acc, Catch::Matchers::WithinAbs(monomial_integral(a, b), 1e-13));
            }
    }
    CHECK_THROWS_AS(triangle_quadrature(0), ParameterError);
    CHECK_THROWS_AS(triangle_quadrature(7), ParameterError);

    // the spec'd spot values
    const TriangleQuadrature q4 = triangle_quadrature(4);
    double one = 0.0, x = 0.0, x2y2 = 0.0;
    for (size_t k = 0; k < q4.points.size(); ++k) {
        one += q4.weights[k];
        x += q4.weights[k] * q4.points[k][1];
        x2y2 += q4.weights[k] * std::pow(q4.points[k][1] * q4.points[k][2], 2);
    }
    CHECK(one == Catch::Approx(0.5).epsilon(1e-14));
    CHECK(x == Catch::Approx(1.0 / 6.0).epsilon(1e-13));
    CHECK(x2y2 == Catch::Approx(1.0 / 180.0).epsilon(1e-12));
}

TEST_CASE("edge quadrature exactness", "[fem]") {
    for (int deg = 1; deg <= 6; ++deg) {
        const EdgeQuadrature q = edge_quadrature(deg);
        for (int p = 0; p <= deg; ++p) {
            double acc = 0.0;
            for (size_t k = 0; k < q.points.size(); ++k)
                acc += q.weights[k] * std::pow(q.points[k], p);
            CHECK_THAT(acc, Catch::Matchers::WithinAbs(1.0 / (p + 1), 1e-13));
        }
    }
    // a 3-point rule integrates s^4 exactly
    const EdgeQuadrature q3 = edge_quadrature(4);
    CHECK(q3.points.size() == 3);
    double s4 = 0.0;
    for (size_t k = 0; k < q3.points.size(); ++k)
        s4 += q3.weights[k] * std::pow(q3.points[k], 4);
    CHECK(s4 == Catch::Approx(0.2).epsilon(1e-14));
    CHECK_THROWS_AS(edge_quadrature(0), ParameterError);
}

TEST_CASE("shape functions are nodal", "[fem]") {
    // P1 at vertices
    const std::array<std::array<double, 3>, 3> verts = {
        {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
    for (int i = 0; i < 3; ++i) {
        const ShapeEval s = shape_functions(ElementKind::p1_scalar, verts[i]);
        for (int j = 0; j < 3; ++j)
            CHECK(s.value[j] == Catch::Approx(i == j ? 1.0 : 0.0).margin(1e-15));
    }
    // P2 at the midpoint of edge (0,1): vertex values 0, that bubble 1
    const ShapeEval s = shape_functions(ElementKind::p2_scalar, {0.5, 0.5, 0.0});
    for (int j = 0; j < 3; ++j) CHECK(s.value[j] == Catch::Approx(0.0).margin(1e-15));
    CHECK(s.value[3] == Catch::Approx(1.0).epsilon(1e-15));
    CHECK(s.value[4] == Catch::Approx(0.0).margin(1e-15));
    CHECK(s.value[5] == Catch::Approx(0.0).margin(1e-15));
    // P2 vertex basis at the barycenter
    const ShapeEval c =
        shape_functions(ElementKind::p2_scalar, {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0});
    for (int j = 0; j < 3; ++j)
        CHECK(c.value[j] == Catch::Approx(-1.0 / 9.0).epsilon(1e-14));
}

TEST_CASE("partition of unity and gradient sum", "[fem]") {
    std::mt19937 rng(42);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        double a = unif(rng), b = unif(rng) * (1.0 - a);
        const std::array<double, 3> l = {1.0 - a - b, a, b};
        for (ElementKind k : {ElementKind::p1_scalar, ElementKind::p2_scalar}) {
            const ShapeEval s = shape_functions(k, l);
            double vsum = 0.0;
            Vec2 gsum;
            for (int i = 0; i < s.count; ++i) {
                vsum += s.value[i];
                gsum += s.ref_grad[i];
            }
            CHECK_THAT(vsum, Catch::Matchers::WithinAbs(1.0, 1e-13));
            CHECK_THAT(gsum.x, Catch::Matchers::WithinAbs(0.0, 1e-13));
            CHECK_THAT(gsum.y, Catch::Matchers::WithinAbs(0.0, 1e-13));
        }
    }
}

TEST_CASE("dof counts", "[fem]") {
    ChannelSpec spec;
    spec.nx = 1;
    spec.ny_half = 1;
    const TriangleMesh m = build_channel_mesh(spec);
    CHECK(build_dof_map(m, ElementKind::p1_scalar).n_dofs == 6);
    // 6 vertices + 9 unique edges
    CHECK(build_dof_map(m, ElementKind::p2_scalar).n_dofs == 15);
    CHECK(build_dof_map(m, ElementKind::p2_vector2).n_dofs == 30);

    const DofMap fluid_v = build_dof_map(m, ElementKind::p2_vector2, Region::fluid);
    for (const Vec2& p : fluid_v.scalar_position) CHECK(p.y >= 0.0);
    const DofMap porous_p1 = build_dof_map(m, ElementKind::p1_scalar, Region::porous);
    for (const Vec2& p : porous_p1.scalar_position) CHECK(p.y <= 0.0);
}

TEST_CASE("dof continuity across triangles", "[fem]") {
    ChannelSpec spec;
    spec.nx = 2;
    spec.ny_half = 2;
    const TriangleMesh m = build_channel_mesh(spec);
    const DofMap d = build_dof_map(m, ElementKind::p2_scalar);
    // shared edge between adjacent triangles maps to one midpoint dof
    std::map<int, int> seen;  // dof -> count
    for (size_t t = 0; t < m.triangles.size(); ++t)
        for (int i = 0; i < 6; ++i) seen[d.cell_scalar[t][i]]++;
    for (const auto& [dof, count] : seen) CHECK(dof >= 0);
    CHECK(d.n_scalar == static_cast<int>(seen.size()));
}

TEST_CASE("P1 mass matrix oracle", "[fem]") {
    // assembled with quadrature; oracle is area/12 * [[2,1,1],[1,2,1],[1,1,2]]
    const TriangleMesh m = one_triangle();
    const GeometryCache geom(m);
    const TriangleQuadrature q = triangle_quadrature(4);
    std::array<std::array<double, 3>, 3> mass{};
    for (size_t k = 0; k < q.points.size(); ++k) {
        const LocalBasis b = local_basis(ElementKind::p1_scalar, geom.cells[0], q.points[k]);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                mass[i][j] += q.weights[k] * geom.cells[0].det * b.value[i] * b.value[j];
    }
    const double area = 0.5;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            CHECK_THAT(mass[i][j],
                       Catch::Matchers::WithinAbs(area / 12.0 * (i == j ? 2.0 : 1.0),
                                                  1e-14));
}

TEST_CASE("solver solves small systems", "[fem]") {
    // identity
    {
        SystemBuilder b(3);
        for (int i = 0; i < 3; ++i) b.add(i, i, 1.0);
        b.rhs() = {3.0, -1.0, 0.5};
        const SolveResult r = solve_sparse(b.build());
        CHECK(r.x[0] == Catch::Approx(3.0));
        CHECK(r.x[1] == Catch::Approx(-1.0));
        CHECK(r.x[2] == Catch::Approx(0.5));
    }
    // [[2,1],[1,3]] x = [3,4] -> [1,1]
    {
        SystemBuilder b(2);
        b.add(0, 0, 2.0);
        b.add(0, 1, 1.0);
        b.add(1, 0, 1.0);
        b.add(1, 1, 3.0);
        b.rhs() = {3.0, 4.0};
        const SolveResult r = solve_sparse(b.build());
        CHECK(r.x[0] == Catch::Approx(1.0).epsilon(1e-12));
        CHECK(r.x[1] == Catch::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("solver matches dense elimination on 1D Poisson", "[fem]") {
    const int n = 5;
    SystemBuilder b(n);
    std::vector<std::vector<double>> dense(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i) {
        b.add(i, i, 2.0);
        dense[i][i] = 2.0;
        if (i > 0) {
            b.add(i, i - 1, -1.0);
            dense[i][i - 1] = -1.0;
        }
        if (i < n - 1) {
            b.add(i, i + 1, -1.0);
            dense[i][i + 1] = -1.0;
        }
        b.rhs()[i] = 1.0;
    }
    std::vector<double> rhs(n, 1.0);
    // dense Gaussian elimination with partial pivoting (oracle)
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(dense[r][col]) > std::abs(dense[piv][col])) piv = r;
        std::swap(dense[piv], dense[col]);
        std::swap(rhs[piv], rhs[col]);
        for (int r = col + 1; r < n; ++r) {
            const double f = dense[r][col] / dense[col][col];
            for (int c = col; c < n; ++c) dense[r][c] -= f * dense[col][c];
            rhs[r] -= f * rhs[col];
        }
    }
    std::vector<double> expected(n);
    for (int r = n - 1; r >= 0; --r) {
        double s = rhs[r];
        for (int c = r + 1; c < n; ++c) s -= dense[r][c] * expected[c];
        expected[r] = s / dense[r][r];
    }
    const SolveResult got = solve_sparse(b.build());
    for (int i = 0; i < n; ++i)
        CHECK(got.x[i] == Catch::Approx(expected[i]).epsilon(1e-12));
}

TEST_CASE("solver residual property on random systems", "[fem]") {
    std::mt19937 rng(2024);
    std::uniform_int_distribution<int> size(2, 200);
    std::uniform_real_distribution<double> val(-1.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = size(rng);
        SystemBuilder b(n);
        std::uniform_int_distribution<int> col(0, n - 1);
        for (int i = 0; i < n; ++i) {
            b.add(i, i, 4.0 + std::abs(val(rng)));  // diagonally dominant
            for (int k = 0; k < 3; ++k) {
                const int j = col(rng);
                if (j != i) b.add(i, j, 0.3 * val(rng));
            }
            b.rhs()[i] = val(rng);
        }
        const SparseSystem sys = b.build();
        const SolveResult r = solve_sparse(sys);
        CHECK(r.relative_residual <= 1e-10);
    }
}

TEST_CASE("solver reports singular matrices", "[fem]") {
    SystemBuilder b(3);
    b.add(0, 0, 1.0);
    b.add(1, 1, 1.0);
    // row 2 left structurally empty except an off-diagonal dependency
    b.add(2, 0, 1.0);
    b.rhs() = {1.0, 1.0, 1.0};
    CHECK_THROWS_AS(solve_sparse(b.build()), SolverError);
}

TEST_CASE("builder merges duplicate entries and applies constraints", "[fem]") {
    SystemBuilder b(3);
    b.add(0, 0, 1.0);
    b.add(0, 0, 1.0);
    b.add(0, 1, 2.0);
    b.add(1, 0, 2.0);
    b.add(1, 1, 5.0);
    b.add(2, 2, 1.0);
    b.rhs() = {1.0, 2.0, 3.0};
    b.constrain(0, 0.0);
    const SparseSystem s = b.build();
    CHECK(s.coeff(0, 0) == 1.0);  // unit row
    CHECK(s.coeff(0, 1) == 0.0);
    CHECK(s.coeff(1, 0) == 0.0);  // column eliminated
    CHECK(s.rhs[0] == 0.0);
    CHECK(s.rhs[1] == 2.0);
    // sorted unique columns per row
    for (int i = 0; i < s.n; ++i)
        for (int k = s.row_ptr[i] + 1; k < s.row_ptr[i + 1]; ++k)
            CHECK(s.col_idx[k] > s.col_idx[k - 1]);
}
