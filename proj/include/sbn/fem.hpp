#pragma once

#include <map>
#include <optional>

#include "sbn/mesh.hpp"

namespace sbn {

// ---------------------------------------------------------------------------
// Reference elements on the unit triangle (0,0)-(1,0)-(0,1), barycentric
// coordinates (l0,l1,l2) = (1-x-y, x, y). P2 local ordering: three vertex
// functions then the midpoint bubbles of edges (0,1), (1,2), (0,2).
// ---------------------------------------------------------------------------

enum class ElementKind : std::uint8_t { p1_scalar, p2_scalar, p1_vector2, p2_vector2 };

inline bool is_vector_kind(ElementKind k) {
    return k == ElementKind::p1_vector2 || k == ElementKind::p2_vector2;
}

inline bool is_p2_kind(ElementKind k) {
    return k == ElementKind::p2_scalar || k == ElementKind::p2_vector2;
}

inline int scalar_basis_count(ElementKind k) { return is_p2_kind(k) ? 6 : 3; }

inline int local_dof_count(ElementKind k) {
    return scalar_basis_count(k) * (is_vector_kind(k) ? 2 : 1);
}

struct ShapeEval {
    int count = 0;
    std::array<double, 6> value{};
    std::array<Vec2, 6> ref_grad{};  // w.r.t. reference (x,y)
};

inline ShapeEval shape_functions(ElementKind kind, const std::array<double, 3>& l) {
    ShapeEval s;
    const double l0 = l[0], l1 = l[1], l2 = l[2];
    // reference gradients of the barycentric coordinates
    static constexpr Vec2 g[3] = {{-1.0, -1.0}, {1.0, 0.0}, {0.0, 1.0}};
    if (!is_p2_kind(kind)) {
        s.count = 3;
        s.value = {l0, l1, l2};
        s.ref_grad = {g[0], g[1], g[2]};
        return s;
    }
    s.count = 6;
    s.value = {l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
               4 * l0 * l1, 4 * l1 * l2, 4 * l0 * l2};
    s.ref_grad = {g[0] * (4 * l0 - 1), g[1] * (4 * l1 - 1), g[2] * (4 * l2 - 1),
                  g[0] * (4 * l1) + g[1] * (4 * l0),
                  g[1] * (4 * l2) + g[2] * (4 * l1),
                  g[0] * (4 * l2) + g[2] * (4 * l0)};
    return s;
}

// ---------------------------------------------------------------------------
// Quadrature. Triangle rules are symmetric Gauss rules with weights summing
// to the reference area 1/2; edge rules are Gauss-Legendre on [0,1].
// ---------------------------------------------------------------------------

struct TriangleQuadrature {
    std::vector<std::array<double, 3>> points;  // barycentric
    std::vector<double> weights;                // sum = 1/2
    int exact_degree = 0;
};

struct EdgeQuadrature {
    std::vector<double> points;   // in [0,1]
    std::vector<double> weights;  // sum = 1
    int exact_degree = 0;
};

inline TriangleQuadrature triangle_quadrature(int min_exact_degree) {
    if (min_exact_degree < 1 || min_exact_degree > 6)
        throw ParameterError("triangle_quadrature: degree must be in [1,6]");
    TriangleQuadrature q;
    auto orbit3 = [&](double a, double w) {
        const double b = (1.0 - a) / 2.0;
        q.points.push_back({a, b, b});
        q.points.push_back({b, a, b});
        q.points.push_back({b, b, a});
        q.weights.insert(q.weights.end(), 3, 0.5 * w);
    };
    auto orbit6 = [&](double a, double b, double w) {
        const double c = 1.0 - a - b;
        for (auto p : {std::array{a, b, c}, std::array{a, c, b}, std::array{b, a, c},
                       std::array{b, c, a}, std::array{c, a, b}, std::array{c, b, a}})
            q.points.push_back(p);
        q.weights.insert(q.weights.end(), 6, 0.5 * w);
    };
    if (min_exact_degree <= 1) {
        q.points.push_back({1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0});
        q.weights.push_back(0.5);
        q.exact_degree = 1;
    } else if (min_exact_degree == 2) {
        orbit3(2.0 / 3.0, 1.0 / 3.0);
        q.exact_degree = 2;
    } else if (min_exact_degree <= 4) {
        orbit3(0.108103018168070, 0.223381589678011);
        orbit3(0.816847572980459, 0.109951743655322);
        q.exact_degree = 4;
    } else if (min_exact_degree == 5) {
        q.points.push_back({1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0});
        q.weights.push_back(0.5 * 0.225);
        orbit3(0.059715871789770, 0.132394152788506);
        orbit3(0.797426985353087, 0.125939180544827);
        q.exact_degree = 5;
    } else {
        orbit3(0.501426509658179, 0.116786275726379);
        orbit3(0.873821971016996, 0.050844906370207);
        orbit6(0.053145049844816, 0.310352451033785, 0.082851075618374);
        q.exact_degree = 6;
    }
    return q;
}

inline EdgeQuadrature edge_quadrature(int min_exact_degree) {
    if (min_exact_degree < 1 || min_exact_degree > 6)
        throw ParameterError("edge_quadrature: degree must be in [1,6]");
    EdgeQuadrature q;
    auto sym = [&](double x, double w) {  // x, w on [-1,1]
        q.points.push_back(0.5 * (1.0 - x));
        q.points.push_back(0.5 * (1.0 + x));
        q.weights.insert(q.weights.end(), 2, 0.5 * w);
    };
    if (min_exact_degree <= 1) {
        q.points = {0.5};
        q.weights = {1.0};
        q.exact_degree = 1;
    } else if (min_exact_degree <= 3) {
        sym(1.0 / std::sqrt(3.0), 1.0);
        q.exact_degree = 3;
    } else if (min_exact_degree <= 5) {
        q.points = {0.5};
        q.weights = {8.0 / 18.0};
        sym(std::sqrt(3.0 / 5.0), 5.0 / 9.0);
        q.exact_degree = 5;
    } else {
        sym(0.3399810435848563, 0.6521451548625461);
        sym(0.8611363115940526, 0.3478548451374538);
        q.exact_degree = 7;
    }
    return q;
}

// ---------------------------------------------------------------------------
// Degree-of-freedom maps. Scalar dofs are numbered region vertices first
// (ascending node index) then region edges (ascending (min,max) key); C0
// continuity across triangles comes from the shared numbering. Vector fields
// interleave components: dof = 2*scalar + component.
// ---------------------------------------------------------------------------

struct DofMap {
    ElementKind kind = ElementKind::p1_scalar;
    std::optional<Region> region;  // nullopt = whole mesh
    int n_scalar = 0;
    int n_dofs = 0;
    // per triangle: global scalar dofs in local order, -1 row if outside region
    std::vector<std::array<int, 6>> cell_scalar;
    std::vector<int> vertex_scalar;             // node -> scalar dof or -1
    std::map<std::pair<int, int>, int> edge_scalar;  // P2 midpoints
    std::vector<Vec2> scalar_position;          // vertex coord or edge midpoint

    bool in_region(const Triangle& t) const {
        return !region || t.region == *region;
    }
    int vector_dof(int scalar, int comp) const { return 2 * scalar + comp; }
};

inline DofMap build_dof_map(const TriangleMesh& mesh, ElementKind kind,
                            std::optional<Region> region = std::nullopt) {
    DofMap d;
    d.kind = kind;
    d.region = region;
    d.vertex_scalar.assign(mesh.nodes.size(), -1);
    d.cell_scalar.assign(mesh.triangles.size(), {-1, -1, -1, -1, -1, -1});

    for (const Triangle& t : mesh.triangles)
        if (d.in_region(t))
            for (int v : t.v) d.vertex_scalar[v] = 0;
    int next = 0;
    for (size_t v = 0; v < d.vertex_scalar.size(); ++v)
        if (d.vertex_scalar[v] == 0) {
            d.vertex_scalar[v] = next++;
            d.scalar_position.push_back(mesh.nodes[v]);
        } else {
            d.vertex_scalar[v] = -1;
        }

    if (is_p2_kind(kind)) {
        for (const Triangle& t : mesh.triangles)
            if (d.in_region(t))
                for (int e = 0; e < 3; ++e)
                    d.edge_scalar[detail::edge_key(t.v[e], t.v[(e + 1) % 3])] = 0;
        for (auto& [key, dof] : d.edge_scalar) {  // std::map: ascending key order
            dof = next++;
            d.scalar_position.push_back(
                (mesh.nodes[key.first] + mesh.nodes[key.second]) * 0.5);
        }
    }
    d.n_scalar = next;
    d.n_dofs = d.n_scalar * (is_vector_kind(kind) ? 2 : 1);

    for (size_t ti = 0; ti < mesh.triangles.size(); ++ti) {
        const Triangle& t = mesh.triangles[ti];
        if (!d.in_region(t)) continue;
        auto& row = d.cell_scalar[ti];
        for (int v = 0; v < 3; ++v) row[v] = d.vertex_scalar[t.v[v]];
        if (is_p2_kind(kind))
            for (int e = 0; e < 3; ++e)
                row[3 + e] = d.edge_scalar.at(detail::edge_key(t.v[e], t.v[(e + 1) % 3]));
    }
    return d;
}

// Scalar dofs lying on edges with the given tag (endpoints, plus the midpoint
// for P2 maps). Used for strong boundary conditions.
inline std::vector<int> scalar_dofs_on_tag(const TriangleMesh& mesh, const DofMap& d,
                                           EdgeTag tag) {
    std::vector<int> out;
    for (const TaggedEdge& e : mesh.edges) {
        if (e.tag != tag) continue;
        for (int v : {e.a, e.b})
            if (d.vertex_scalar[v] >= 0) out.push_back(d.vertex_scalar[v]);
        if (is_p2_kind(d.kind)) {
            auto it = d.edge_scalar.find(detail::edge_key(e.a, e.b));
            if (it != d.edge_scalar.end()) out.push_back(it->second);
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

// ---------------------------------------------------------------------------
// Per-triangle affine geometry, cached once per mesh.
// ---------------------------------------------------------------------------

struct CellGeometry {
    Mat2 jacobian;      // [p1-p0 | p2-p0]
    Mat2 inv_jac_t;     // J^{-T}, maps reference gradients to physical
    double det = 0.0;   // = 2*area, positive by mesh validation
    Vec2 origin;        // p0
};

struct GeometryCache {
    std::vector<CellGeometry> cells;

    explicit GeometryCache(const TriangleMesh& m) {
        cells.reserve(m.triangles.size());
        for (size_t t = 0; t < m.triangles.size(); ++t) {
            const auto& v = m.triangles[t].v;
            const Vec2 p0 = m.nodes[v[0]], p1 = m.nodes[v[1]], p2 = m.nodes[v[2]];
            CellGeometry g;
            g.jacobian = {p1.x - p0.x, p2.x - p0.x, p1.y - p0.y, p2.y - p0.y};
            g.det = g.jacobian.det();
            g.inv_jac_t = g.jacobian.inverse().transpose();
            g.origin = p0;
            cells.push_back(g);
        }
    }

    Vec2 physical_point(int t, const std::array<double, 3>& bary) const {
        const CellGeometry& g = cells[t];
        return g.origin + g.jacobian.apply({bary[1], bary[2]});
    }
};

// Shape values and physical gradients of one element at one barycentric point.
struct LocalBasis {
    int count = 0;
    std::array<double, 6> value{};
    std::array<Vec2, 6> grad{};  // physical
};

inline LocalBasis local_basis(ElementKind kind, const CellGeometry& g,
                              const std::array<double, 3>& bary) {
    const ShapeEval s = shape_functions(kind, bary);
    LocalBasis b;
    b.count = s.count;
    b.value = s.value;
    for (int i = 0; i < s.count; ++i) b.grad[i] = g.inv_jac_t.apply(s.ref_grad[i]);
    return b;
}

// Evaluate a scalar FE coefficient vector on triangle t at a barycentric point.
inline double eval_scalar(const DofMap& d, const std::vector<double>& coeff,
                          int t, const LocalBasis& b) {
    double v = 0.0;
    for (int i = 0; i < b.count; ++i) v += coeff[d.cell_scalar[t][i]] * b.value[i];
    return v;
}

inline Vec2 eval_scalar_grad(const DofMap& d, const std::vector<double>& coeff,
                             int t, const LocalBasis& b) {
    Vec2 g;
    for (int i = 0; i < b.count; ++i) g += b.grad[i] * coeff[d.cell_scalar[t][i]];
    return g;
}

inline Vec2 eval_vector(const DofMap& d, const std::vector<double>& coeff,
                        int t, const LocalBasis& b) {
    Vec2 v;
    for (int i = 0; i < b.count; ++i) {
        const int s = d.cell_scalar[t][i];
        v.x += coeff[2 * s] * b.value[i];
        v.y += coeff[2 * s + 1] * b.value[i];
    }
    return v;
}

inline Mat2 eval_vector_grad(const DofMap& d, const std::vector<double>& coeff,
                             int t, const LocalBasis& b) {
    Mat2 g;  // g = [du_x/dx du_x/dy; du_y/dx du_y/dy]
    for (int i = 0; i < b.count; ++i) {
        const int s = d.cell_scalar[t][i];
        g.a += coeff[2 * s] * b.grad[i].x;
        g.b += coeff[2 * s] * b.grad[i].y;
        g.c += coeff[2 * s + 1] * b.grad[i].x;
        g.d += coeff[2 * s + 1] * b.grad[i].y;
    }
    return g;
}

}  // namespace sbn
