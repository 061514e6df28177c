#pragma once

#include "sand/common.hpp"

#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace sand {

using Triangle = std::array<int, 3>;

struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<Triangle> triangles;
    std::vector<Vec3> vertex_normals;  // optional, empty when absent
    std::size_t dropped_degenerate = 0;

    bool empty() const { return triangles.empty(); }

    Vec3 face_normal(std::size_t t) const {
        const auto& f = triangles[t];
        Vec3 n = (vertices[f[1]] - vertices[f[0]]).cross(vertices[f[2]] - vertices[f[0]]);
        double len = n.norm();
        return len > 0.0 ? Vec3(n / len) : Vec3::Zero();
    }

    double face_area(std::size_t t) const {
        const auto& f = triangles[t];
        return 0.5 * (vertices[f[1]] - vertices[f[0]]).cross(vertices[f[2]] - vertices[f[0]]).norm();
    }

    double total_area() const {
        double a = 0.0;
        for (std::size_t t = 0; t < triangles.size(); ++t) a += face_area(t);
        return a;
    }

    std::pair<Vec3, Vec3> bounds() const {
        Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
        Vec3 hi = -lo;
        for (const auto& v : vertices) {
            lo = lo.cwiseMin(v);
            hi = hi.cwiseMax(v);
        }
        return {lo, hi};
    }

    /// Every index in range.
    bool indices_valid() const {
        const int n = static_cast<int>(vertices.size());
        for (const auto& f : triangles)
            for (int i : f)
                if (i < 0 || i >= n) return false;
        return true;
    }

    /// Every edge shared by exactly two triangles traversing it in opposite directions.
    bool is_watertight() const {
        if (triangles.empty()) return false;
        std::map<std::pair<int, int>, int> directed;
        for (const auto& f : triangles)
            for (int e = 0; e < 3; ++e) ++directed[{f[e], f[(e + 1) % 3]}];
        for (const auto& [edge, count] : directed) {
            if (count != 1) return false;
            auto it = directed.find({edge.second, edge.first});
            if (it == directed.end() || it->second != 1) return false;
        }
        return true;
    }
};

namespace detail {

inline bool degenerate(const Vec3& a, const Vec3& b, const Vec3& c) {
    const double longest = std::max({(b - a).squaredNorm(), (c - b).squaredNorm(), (a - c).squaredNorm()});
    const double twice_area = (b - a).cross(c - a).norm();
    return !(twice_area > 1e-14 * longest) || longest == 0.0;
}

inline int resolve_obj_index(long idx, std::size_t count, std::size_t line_no) {
    if (idx == 0)
        throw FormatError("OBJ line " + std::to_string(line_no) + ": index 0 is invalid (indices are 1-based)");
    long resolved = idx > 0 ? idx - 1 : static_cast<long>(count) + idx;
    if (resolved < 0 || resolved >= static_cast<long>(count))
        throw FormatError("OBJ line " + std::to_string(line_no) + ": index " + std::to_string(idx) +
                          " out of range");
    return static_cast<int>(resolved);
}

}  // namespace detail

/// Parses ASCII OBJ text. Polygons are fan-triangulated; zero-area triangles are
/// dropped and counted in `dropped_degenerate`.
inline TriangleMesh parse_obj(std::istream& in) {
    TriangleMesh mesh;
    std::vector<Vec3> normals;
    std::vector<std::vector<int>> face_normal_refs;
    std::string line;
    std::size_t line_no = 0;
    bool any_vn_ref = false;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag) || tag[0] == '#') continue;
        if (tag == "v" || tag == "vn") {
            Vec3 p;
            if (!(ls >> p.x() >> p.y() >> p.z()))
                throw FormatError("OBJ line " + std::to_string(line_no) + ": expected three coordinates");
            (tag == "v" ? mesh.vertices : normals).push_back(p);
        } else if (tag == "f") {
            std::vector<int> poly, poly_n;
            std::string tok;
            while (ls >> tok) {
                std::size_t s1 = tok.find('/');
                long vi = 0;
                try {
                    std::size_t used = 0;
                    vi = std::stol(tok.substr(0, s1), &used);
                    if (used != (s1 == std::string::npos ? tok.size() : s1)) throw std::invalid_argument(tok);
                } catch (const std::logic_error&) {
                    throw FormatError("OBJ line " + std::to_string(line_no) + ": bad face token '" + tok + "'");
                }
                poly.push_back(detail::resolve_obj_index(vi, mesh.vertices.size(), line_no));
                int ni = -1;
                if (s1 != std::string::npos) {
                    std::size_t s2 = tok.find('/', s1 + 1);
                    if (s2 != std::string::npos && s2 + 1 < tok.size()) {
                        ni = detail::resolve_obj_index(std::stol(tok.substr(s2 + 1)), normals.size(), line_no);
                        any_vn_ref = true;
                    }
                }
                poly_n.push_back(ni);
            }
            if (poly.size() < 3)
                throw FormatError("OBJ line " + std::to_string(line_no) + ": face with fewer than 3 vertices");
            for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
                Triangle t{poly[0], poly[k], poly[k + 1]};
                if (detail::degenerate(mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]])) {
                    ++mesh.dropped_degenerate;
                    continue;
                }
                mesh.triangles.push_back(t);
                face_normal_refs.push_back({poly_n[0], poly_n[k], poly_n[k + 1]});
            }
        }
    }
    if (any_vn_ref) {
        mesh.vertex_normals.assign(mesh.vertices.size(), Vec3::Zero());
        for (std::size_t t = 0; t < mesh.triangles.size(); ++t)
            for (int c = 0; c < 3; ++c)
                if (face_normal_refs[t][c] >= 0)
                    mesh.vertex_normals[mesh.triangles[t][c]] = normals[face_normal_refs[t][c]].normalized();
    }
    return mesh;
}

inline TriangleMesh load_mesh(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open mesh file: " + path);
    return parse_obj(in);
}

inline void write_obj(std::ostream& out, const TriangleMesh& mesh) {
    out << std::setprecision(17);
    for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
    const bool with_normals = mesh.vertex_normals.size() == mesh.vertices.size() && !mesh.vertices.empty();
    if (with_normals)
        for (const auto& n : mesh.vertex_normals) out << "vn " << n.x() << ' ' << n.y() << ' ' << n.z() << '\n';
    for (const auto& f : mesh.triangles) {
        out << 'f';
        for (int i : f) {
            out << ' ' << i + 1;
            if (with_normals) out << "//" << i + 1;
        }
        out << '\n';
    }
}

inline void save_mesh(const std::string& path, const TriangleMesh& mesh) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write mesh file: " + path);
    write_obj(out, mesh);
}

/// normalized = (p + offset) * scale; inverse maps normalized coordinates back.
struct NormalizeTransform {
    double scale = 1.0;
    Vec3 offset = Vec3::Zero();

    Vec3 apply(const Vec3& p) const { return (p + offset) * scale; }
    Vec3 inverse(const Vec3& q) const { return q / scale - offset; }
};

inline constexpr double kNormalizedHalfExtent = 0.95;

/// Centers the bounding box at the origin and scales the longest side to 1.9.
inline std::pair<TriangleMesh, NormalizeTransform> normalize(const TriangleMesh& mesh) {
    if (mesh.vertices.empty()) throw Error("normalize: mesh has no vertices");
    auto [lo, hi] = mesh.bounds();
    const double extent = (hi - lo).maxCoeff();
    if (!(extent > 0.0)) throw Error("normalize: mesh has zero extent");
    NormalizeTransform xf;
    xf.offset = -0.5 * (lo + hi);
    xf.scale = 2.0 * kNormalizedHalfExtent / extent;
    TriangleMesh out = mesh;
    for (auto& v : out.vertices) v = xf.apply(v);
    return {std::move(out), xf};
}

struct SurfaceSample {
    Vec3 position;
    Vec3 normal;
    int triangle = -1;
};

/// Area-weighted uniform samples; triangle picked by area, barycentric uniform.
inline std::vector<SurfaceSample> sample_surface(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed) {
    std::vector<SurfaceSample> out;
    if (n == 0) return out;
    std::vector<double> cdf(mesh.triangles.size());
    double acc = 0.0;
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        acc += mesh.face_area(t);
        cdf[t] = acc;
    }
    if (!(acc > 0.0)) throw Error("sample_surface: mesh has no area");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double pick = uni(rng) * acc;
        auto it = std::upper_bound(cdf.begin(), cdf.end(), pick);
        std::size_t t = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
        double u = uni(rng), v = uni(rng);
        if (u + v > 1.0) {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        const auto& f = mesh.triangles[t];
        const Vec3& a = mesh.vertices[f[0]];
        SurfaceSample s;
        s.position = a + u * (mesh.vertices[f[1]] - a) + v * (mesh.vertices[f[2]] - a);
        s.normal = mesh.face_normal(t);
        s.triangle = static_cast<int>(t);
        out.push_back(s);
    }
    return out;
}

/// Icosahedron refined `subdivisions` times and projected to a sphere. Outward winding.
inline TriangleMesh make_icosphere(int subdivisions, double radius, const Vec3& center = Vec3::Zero()) {
    const double p = (1.0 + std::sqrt(5.0)) / 2.0;
    TriangleMesh m;
    m.vertices = {{-1, p, 0}, {1, p, 0}, {-1, -p, 0}, {1, -p, 0}, {0, -1, p}, {0, 1, p},
                  {0, -1, -p}, {0, 1, -p}, {p, 0, -1}, {p, 0, 1}, {-p, 0, -1}, {-p, 0, 1}};
    m.triangles = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                   {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                   {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
    for (auto& v : m.vertices) v.normalize();
    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            auto key = std::minmax(a, b);
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            m.vertices.push_back((m.vertices[a] + m.vertices[b]).normalized());
            int idx = static_cast<int>(m.vertices.size()) - 1;
            midpoint.emplace(key, idx);
            return idx;
        };
        std::vector<Triangle> next;
        next.reserve(m.triangles.size() * 4);
        for (const auto& f : m.triangles) {
            int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
            next.push_back({f[0], ab, ca});
            next.push_back({f[1], bc, ab});
            next.push_back({f[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        m.triangles = std::move(next);
    }
    for (auto& v : m.vertices) v = center + radius * v;
    return m;
}

/// Torus around the z axis with `major` ring radius and `minor` tube radius.
inline TriangleMesh make_torus(double major, double minor, int ring_segments, int tube_segments) {
    TriangleMesh m;
    const double two_pi = 2.0 * std::numbers::pi;
    for (int i = 0; i < ring_segments; ++i) {
        const double u = two_pi * i / ring_segments;
        for (int j = 0; j < tube_segments; ++j) {
            const double v = two_pi * j / tube_segments;
            const double rr = major + minor * std::cos(v);
            m.vertices.emplace_back(rr * std::cos(u), rr * std::sin(u), minor * std::sin(v));
        }
    }
    auto id = [&](int i, int j) { return (i % ring_segments) * tube_segments + (j % tube_segments); };
    for (int i = 0; i < ring_segments; ++i)
        for (int j = 0; j < tube_segments; ++j) {
            int a = id(i, j), b = id(i + 1, j), c = id(i + 1, j + 1), d = id(i, j + 1);
            m.triangles.push_back({a, b, c});
            m.triangles.push_back({a, c, d});
        }
    return m;
}

}  // namespace sand
