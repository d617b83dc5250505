#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>

#include "sbn/core.hpp"

namespace sbn {

enum class Region : std::uint8_t { fluid, porous };

enum class EdgeTag : std::uint8_t {
    interface,
    fluid_in,
    fluid_out,
    fluid_ext,
    porous_in,
    porous_out,
    porous_ext,
};

inline const char* to_string(EdgeTag t) {
    switch (t) {
        case EdgeTag::interface: return "interface";
        case EdgeTag::fluid_in: return "fluid_in";
        case EdgeTag::fluid_out: return "fluid_out";
        case EdgeTag::fluid_ext: return "fluid_ext";
        case EdgeTag::porous_in: return "porous_in";
        case EdgeTag::porous_out: return "porous_out";
        case EdgeTag::porous_ext: return "porous_ext";
    }
    return "?";
}

inline std::optional<EdgeTag> edge_tag_from_string(std::string_view s) {
    for (EdgeTag t : {EdgeTag::interface, EdgeTag::fluid_in, EdgeTag::fluid_out,
                      EdgeTag::fluid_ext, EdgeTag::porous_in, EdgeTag::porous_out,
                      EdgeTag::porous_ext})
        if (s == to_string(t)) return t;
    return std::nullopt;
}

inline bool is_boundary_tag(EdgeTag t) { return t != EdgeTag::interface; }

struct Triangle {
    std::array<int, 3> v{};
    Region region = Region::fluid;
};

struct TaggedEdge {
    int a = 0;
    int b = 0;
    EdgeTag tag = EdgeTag::interface;
};

// Present on meshes produced by build_channel_mesh; enables O(1) point
// location for the coarse-to-fine error transfer. Cleared by apply_mapping
// and absent on meshes read from file.
struct StructuredChannelInfo {
    int nx = 0;
    int ny_half = 0;
    double x0 = 0.0, x1 = 1.0;
    double y_lo = -1.0, y_split = 0.0, y_hi = 1.0;
};

struct ChannelSpec {
    int nx = 1;
    int ny_half = 1;
    double x0 = 0.0, x1 = 1.0;
    double y_lo = -1.0, y_split = 0.0, y_hi = 1.0;
};

struct TriangleMesh {
    std::vector<Vec2> nodes;
    std::vector<Triangle> triangles;
    std::vector<TaggedEdge> edges;  // boundary + interface edges, all tagged
    double h_max = 0.0;
    std::optional<StructuredChannelInfo> grid;

    double signed_area(int t) const {
        const Triangle& tr = triangles[t];
        const Vec2 p0 = nodes[tr.v[0]], p1 = nodes[tr.v[1]], p2 = nodes[tr.v[2]];
        return 0.5 * ((p1.x - p0.x) * (p2.y - p0.y) - (p2.x - p0.x) * (p1.y - p0.y));
    }
};

// One tagged edge with its adjacency and interface-consistent frame.
// For interface edges the normal points out of the fluid region and
// tri_other is the porous triangle; for boundary edges the normal points
// out of the domain and tri_other is -1.
struct EdgeUse {
    int a = 0, b = 0;
    EdgeTag tag = EdgeTag::interface;
    int tri_owner = -1;  // fluid side for interface edges
    int tri_other = -1;
    Vec2 normal;
    Vec2 tangent;
    double length = 0.0;
};

namespace detail {

inline std::pair<int, int> edge_key(int a, int b) {
    return {std::min(a, b), std::max(a, b)};
}

// (triangle, local edge slot) pairs per undirected edge.
inline std::map<std::pair<int, int>, std::vector<int>>
edge_to_triangles(const TriangleMesh& m) {
    std::map<std::pair<int, int>, std::vector<int>> adj;
    for (int t = 0; t < static_cast<int>(m.triangles.size()); ++t) {
        const auto& v = m.triangles[t].v;
        for (int e = 0; e < 3; ++e)
            adj[edge_key(v[e], v[(e + 1) % 3])].push_back(t);
    }
    return adj;
}

inline double max_edge_length(const TriangleMesh& m) {
    double h = 0.0;
    for (const Triangle& t : m.triangles)
        for (int e = 0; e < 3; ++e) {
            const Vec2 d = m.nodes[t.v[(e + 1) % 3]] - m.nodes[t.v[e]];
            h = std::max(h, std::sqrt(d.x * d.x + d.y * d.y));
        }
    return h;
}

}  // namespace detail

// Structural validation shared by the builder, the reader and apply_mapping.
// Checks orientation, index ranges, interface conformity and boundary tagging.
inline void validate_mesh(const TriangleMesh& m) {
    const int nn = static_cast<int>(m.nodes.size());
    for (int t = 0; t < static_cast<int>(m.triangles.size()); ++t) {
        for (int v : m.triangles[t].v)
            if (v < 0 || v >= nn)
                throw GeometryError("triangle " + std::to_string(t) +
                                    ": node index out of range");
        if (m.signed_area(t) <= 0.0)
            throw GeometryError("triangle " + std::to_string(t) +
                                " has non-positive area (inverted or degenerate)");
    }
    for (const TaggedEdge& e : m.edges)
        if (e.a < 0 || e.a >= nn || e.b < 0 || e.b >= nn)
            throw GeometryError("tagged edge node index out of range");

    auto adj = detail::edge_to_triangles(m);
    std::map<std::pair<int, int>, EdgeTag> tagged;
    for (const TaggedEdge& e : m.edges) {
        auto key = detail::edge_key(e.a, e.b);
        if (!adj.count(key))
            throw GeometryError("tagged edge (" + std::to_string(e.a) + "," +
                                std::to_string(e.b) + ") is not a mesh edge");
        tagged[key] = e.tag;
    }
    for (const auto& [key, tris] : adj) {
        auto it = tagged.find(key);
        if (tris.size() == 1) {
            if (it == tagged.end())
                throw GeometryError("untagged boundary edge (" +
                                    std::to_string(key.first) + "," +
                                    std::to_string(key.second) + ")");
            if (!is_boundary_tag(it->second))
                throw GeometryError("boundary edge tagged as interface");
        } else if (tris.size() == 2) {
            if (it != tagged.end()) {
                if (it->second != EdgeTag::interface)
                    throw GeometryError("internal edge carries a boundary tag");
                const Region r0 = m.triangles[tris[0]].region;
                const Region r1 = m.triangles[tris[1]].region;
                if (r0 == r1)
                    throw GeometryError("interface edge not between fluid and porous");
            } else {
                if (m.triangles[tris[0]].region != m.triangles[tris[1]].region)
                    throw GeometryError("fluid/porous edge not tagged as interface");
            }
        } else {
            throw GeometryError("edge shared by more than two triangles");
        }
    }
}

// Structured two-region channel triangulation. Each grid cell is split along
// its (+,+) diagonal, so refining nx,ny by 2 produces a nested mesh and
// h_max halves exactly.
inline TriangleMesh build_channel_mesh(const ChannelSpec& spec) {
    if (spec.nx < 1 || spec.ny_half < 1)
        throw ParameterError("build_channel_mesh: nx and ny_half must be >= 1");
    if (!(spec.y_lo < spec.y_split && spec.y_split < spec.y_hi))
        throw ParameterError("build_channel_mesh: need y_lo < y_split < y_hi");
    if (!(spec.x0 < spec.x1))
        throw ParameterError("build_channel_mesh: need x0 < x1");

    const int nx = spec.nx, nyh = spec.ny_half, ny = 2 * nyh;
    const double dx = (spec.x1 - spec.x0) / nx;
    const double dy_p = (spec.y_split - spec.y_lo) / nyh;
    const double dy_f = (spec.y_hi - spec.y_split) / nyh;

    TriangleMesh m;
    m.nodes.reserve(static_cast<size_t>(nx + 1) * (ny + 1));
    for (int j = 0; j <= ny; ++j) {
        const double y = j <= nyh ? spec.y_lo + j * dy_p
                                  : spec.y_split + (j - nyh) * dy_f;
        for (int i = 0; i <= nx; ++i)
            m.nodes.push_back({spec.x0 + i * dx, j == nyh ? spec.y_split : y});
    }
    auto node = [&](int i, int j) { return j * (nx + 1) + i; };

    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const Region r = j < nyh ? Region::porous : Region::fluid;
            const int a = node(i, j), b = node(i + 1, j);
            const int c = node(i + 1, j + 1), d = node(i, j + 1);
            m.triangles.push_back({{a, b, c}, r});
            m.triangles.push_back({{a, c, d}, r});
        }

    for (int j = 0; j < ny; ++j) {
        const EdgeTag left = j < nyh ? EdgeTag::porous_in : EdgeTag::fluid_in;
        const EdgeTag right = j < nyh ? EdgeTag::porous_out : EdgeTag::fluid_out;
        m.edges.push_back({node(0, j), node(0, j + 1), left});
        m.edges.push_back({node(nx, j), node(nx, j + 1), right});
    }
    for (int i = 0; i < nx; ++i) {
        m.edges.push_back({node(i, 0), node(i + 1, 0), EdgeTag::porous_ext});
        m.edges.push_back({node(i, ny), node(i + 1, ny), EdgeTag::fluid_ext});
        m.edges.push_back({node(i, nyh), node(i + 1, nyh), EdgeTag::interface});
    }

    // Closed form keeps the exact-halving refinement property; the node
    // coordinates themselves may carry rounding from x0 + i*dx.
    const double diag_p = std::sqrt(dx * dx + dy_p * dy_p);
    const double diag_f = std::sqrt(dx * dx + dy_f * dy_f);
    m.h_max = std::max({dx, dy_p, dy_f, diag_p, diag_f});
    m.grid = StructuredChannelInfo{nx, nyh, spec.x0, spec.x1,
                                   spec.y_lo, spec.y_split, spec.y_hi};
    validate_mesh(m);
    return m;
}

// Node-wise coordinate transform. Connectivity and tags are preserved;
// orientation is re-validated and an inverted triangle is reported by index.
inline TriangleMesh apply_mapping(const TriangleMesh& mesh,
                                  const std::function<Vec2(Vec2)>& map) {
    TriangleMesh out = mesh;
    out.grid.reset();
    for (Vec2& p : out.nodes) p = map(p);
    for (int t = 0; t < static_cast<int>(out.triangles.size()); ++t)
        if (out.signed_area(t) <= 0.0)
            throw GeometryError("apply_mapping: triangle " + std::to_string(t) +
                                " inverted by the mapping");
    out.h_max = detail::max_edge_length(out);
    validate_mesh(out);
    return out;
}

inline std::vector<EdgeUse> edges_with_tag(const TriangleMesh& m, EdgeTag tag) {
    auto adj = detail::edge_to_triangles(m);
    std::vector<EdgeUse> out;
    for (const TaggedEdge& e : m.edges) {
        if (e.tag != tag) continue;
        EdgeUse u;
        u.a = e.a;
        u.b = e.b;
        u.tag = e.tag;
        const auto& tris = adj.at(detail::edge_key(e.a, e.b));
        if (e.tag == EdgeTag::interface) {
            for (int t : tris)
                (m.triangles[t].region == Region::fluid ? u.tri_owner : u.tri_other) = t;
        } else {
            u.tri_owner = tris[0];
        }
        const Vec2 pa = m.nodes[u.a], pb = m.nodes[u.b];
        const Vec2 d = pb - pa;
        u.length = d.norm();
        Vec2 n{d.y / u.length, -d.x / u.length};
        // orient away from the owning triangle's interior
        const Triangle& tri = m.triangles[u.tri_owner];
        Vec2 centroid{0.0, 0.0};
        for (int v : tri.v) centroid += m.nodes[v] * (1.0 / 3.0);
        if (n.dot(centroid - pa) > 0.0) n = {-n.x, -n.y};
        u.normal = n;
        u.tangent = n.rot90();
        out.push_back(u);
    }
    return out;
}

// ---------------------------------------------------------------------------
// MESH v1 ASCII format.
//   MESH v1
//   nodes <N>      followed by N lines "x y"
//   triangles <T>  followed by T lines "i j k fluid|porous"
//   edges <E>      followed by E lines "i j tag"
// '#' starts a comment line; indices are 0-based.
// ---------------------------------------------------------------------------

inline void write_mesh(const TriangleMesh& m, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw UsageError("write_mesh: cannot open " + path);
    f << "MESH v1\n";
    f << "nodes " << m.nodes.size() << "\n";
    for (const Vec2& p : m.nodes) f << fmt_g17(p.x) << " " << fmt_g17(p.y) << "\n";
    f << "triangles " << m.triangles.size() << "\n";
    for (const Triangle& t : m.triangles)
        f << t.v[0] << " " << t.v[1] << " " << t.v[2] << " "
          << (t.region == Region::fluid ? "fluid" : "porous") << "\n";
    f << "edges " << m.edges.size() << "\n";
    for (const TaggedEdge& e : m.edges)
        f << e.a << " " << e.b << " " << to_string(e.tag) << "\n";
    if (!f) throw UsageError("write_mesh: write failed for " + path);
}

namespace detail {

class LineReader {
  public:
    explicit LineReader(std::istream& in, std::string name)
        : in_(in), name_(std::move(name)) {}

    // next non-empty, non-comment line split into tokens
    bool next(std::vector<std::string>& tokens) {
        std::string line;
        while (std::getline(in_, line)) {
            ++lineno_;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            tokens.clear();
            std::istringstream ss(line);
            std::string tok;
            while (ss >> tok) tokens.push_back(tok);
            if (!tokens.empty()) return true;
        }
        return false;
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw ParseError(name_ + ":" + std::to_string(lineno_) + ": " + what);
    }

    int lineno() const { return lineno_; }

  private:
    std::istream& in_;
    std::string name_;
    int lineno_ = 0;
};

inline long parse_index(LineReader& r, const std::string& tok, long lo, long hi) {
    long v = 0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
        r.fail("expected integer, got '" + tok + "'");
    if (v < lo || v > hi)
        r.fail("index " + tok + " out of range [" + std::to_string(lo) + "," +
               std::to_string(hi) + "]");
    return v;
}

inline double parse_num(LineReader& r, const std::string& tok) {
    bool ok = false;
    const double v = parse_double(tok, ok);
    if (!ok) r.fail("expected number, got '" + tok + "'");
    return v;
}

}  // namespace detail

inline TriangleMesh read_mesh_stream(std::istream& in, const std::string& name) {
    detail::LineReader r(in, name);
    std::vector<std::string> tok;
    if (!r.next(tok) || tok.size() != 2 || tok[0] != "MESH" || tok[1] != "v1")
        r.fail("expected header 'MESH v1'");

    TriangleMesh m;
    if (!r.next(tok) || tok.size() != 2 || tok[0] != "nodes")
        r.fail("expected 'nodes <N>'");
    const long nn = detail::parse_index(r, tok[1], 0, 1L << 40);
    m.nodes.reserve(nn);
    for (long i = 0; i < nn; ++i) {
        if (!r.next(tok)) r.fail("unexpected end of file in node section");
        if (tok.size() != 2) r.fail("expected 'x y'");
        m.nodes.push_back({detail::parse_num(r, tok[0]), detail::parse_num(r, tok[1])});
    }

    if (!r.next(tok) || tok.size() != 2 || tok[0] != "triangles")
        r.fail("expected 'triangles <T>'");
    const long nt = detail::parse_index(r, tok[1], 0, 1L << 40);
    for (long i = 0; i < nt; ++i) {
        if (!r.next(tok)) r.fail("unexpected end of file in triangle section");
        if (tok.size() != 4) r.fail("expected 'i j k fluid|porous'");
        Triangle t;
        for (int k = 0; k < 3; ++k)
            t.v[k] = static_cast<int>(detail::parse_index(r, tok[k], 0, nn - 1));
        if (tok[3] == "fluid") t.region = Region::fluid;
        else if (tok[3] == "porous") t.region = Region::porous;
        else r.fail("unknown region '" + tok[3] + "'");
        m.triangles.push_back(t);
    }

    if (!r.next(tok) || tok.size() != 2 || tok[0] != "edges")
        r.fail("expected 'edges <E>'");
    const long ne = detail::parse_index(r, tok[1], 0, 1L << 40);
    for (long i = 0; i < ne; ++i) {
        if (!r.next(tok)) r.fail("unexpected end of file in edge section");
        if (tok.size() != 3) r.fail("expected 'i j tag'");
        TaggedEdge e;
        e.a = static_cast<int>(detail::parse_index(r, tok[0], 0, nn - 1));
        e.b = static_cast<int>(detail::parse_index(r, tok[1], 0, nn - 1));
        const auto tag = edge_tag_from_string(tok[2]);
        if (!tag) r.fail("unknown edge tag '" + tok[2] + "'");
        e.tag = *tag;
        m.edges.push_back(e);
    }
    if (r.next(tok)) r.fail("trailing content after edge section");

    m.h_max = detail::max_edge_length(m);
    try {
        validate_mesh(m);
    } catch (const GeometryError& err) {
        throw ParseError(name + ": " + err.what());
    }
    return m;
}

inline TriangleMesh read_mesh(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw UsageError("read_mesh: cannot open " + path);
    return read_mesh_stream(f, path);
}

}  // namespace sbn
