#pragma once

// Uniform-grid evaluation over [-1,1]^3 and marching cubes.

#include "sand/adaptive_query.hpp"
#include "sand/detail/binary_io.hpp"
#include "sand/detail/mc_tables.hpp"
#include "sand/mesh.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <unordered_map>

namespace sand {

struct ScalarGrid {
    int resolution = 0;
    std::vector<double> values;  // x fastest, then y, then z

    std::size_t index(int i, int j, int k) const {
        const auto R = static_cast<std::size_t>(resolution);
        return static_cast<std::size_t>(i) + R * (static_cast<std::size_t>(j) + R * static_cast<std::size_t>(k));
    }
    double at(int i, int j, int k) const { return values[index(i, j, k)]; }
    double coord(int i) const { return lattice_coord(i, resolution); }
    Vec3 point(int i, int j, int k) const { return {coord(i), coord(j), coord(k)}; }
    double spacing() const { return 2.0 / (resolution - 1); }

    static double lattice_coord(int i, int R) { return i == R - 1 ? 1.0 : -1.0 + 2.0 * i / (R - 1); }
};

/// Maps a batch of points to scalar values.
using QueryEngine = std::function<std::vector<double>(std::span<const Vec3>)>;

inline constexpr int kGridSlabPlanes = 8;

/// Evaluates `engine` on the R^3 lattice, kGridSlabPlanes z-planes per call.
inline ScalarGrid evaluate_grid(const QueryEngine& engine, int R) {
    if (R < 2) throw Error("evaluate_grid: resolution must be >= 2");
    ScalarGrid g;
    g.resolution = R;
    const std::size_t plane = static_cast<std::size_t>(R) * R;
    g.values.resize(plane * R);
    std::vector<Vec3> pts;
    for (int k0 = 0; k0 < R; k0 += kGridSlabPlanes) {
        const int k1 = std::min(R, k0 + kGridSlabPlanes);
        pts.clear();
        for (int k = k0; k < k1; ++k)
            for (int j = 0; j < R; ++j)
                for (int i = 0; i < R; ++i) pts.emplace_back(g.coord(i), g.coord(j), g.coord(k));
        const auto v = engine(pts);
        if (v.size() != pts.size()) throw Error("evaluate_grid: engine returned the wrong number of values");
        for (double x : v)
            if (!std::isfinite(x)) throw Error("evaluate_grid: engine returned a non-finite value");
        std::copy(v.begin(), v.end(), g.values.begin() + static_cast<std::ptrdiff_t>(plane * k0));
    }
    return g;
}

/// All lattice points in evaluation order.
inline std::vector<Vec3> grid_points(int R) {
    std::vector<Vec3> pts;
    pts.reserve(static_cast<std::size_t>(R) * R * R);
    for (int k = 0; k < R; ++k)
        for (int j = 0; j < R; ++j)
            for (int i = 0; i < R; ++i)
                pts.emplace_back(ScalarGrid::lattice_coord(i, R), ScalarGrid::lattice_coord(j, R),
                                 ScalarGrid::lattice_coord(k, R));
    return pts;
}

struct MarchingCubesOptions {
    double iso = 0.0;
    bool weld = false;  // merge vertices closer than weld_tolerance
    double weld_tolerance = 1e-7;
};

/// Lookup-table marching cubes. Vertices on a shared lattice edge are shared;
/// triangles come out in cell order (x fastest) with outward normals for an
/// SDF that is negative inside.
inline TriangleMesh marching_cubes(const ScalarGrid& grid, const MarchingCubesOptions& opts = {}) {
    const int R = grid.resolution;
    if (R < 2 || grid.values.size() != static_cast<std::size_t>(R) * R * R)
        throw Error("marching_cubes: malformed grid");
    TriangleMesh mesh;
    std::unordered_map<std::uint64_t, int> edge_vertex;
    const double iso = opts.iso;

    for (int k = 0; k + 1 < R; ++k)
        for (int j = 0; j + 1 < R; ++j)
            for (int i = 0; i + 1 < R; ++i) {
                double v[8];
                int cube = 0;
                for (int c = 0; c < 8; ++c) {
                    const auto& o = detail::kMcCornerOffsets[c];
                    v[c] = grid.at(i + o[0], j + o[1], k + o[2]);
                    if (v[c] < iso) cube |= 1 << c;
                }
                const std::uint16_t edges = detail::kMcEdgeTable[cube];
                if (edges == 0) continue;
                int vert[12];
                for (int e = 0; e < 12; ++e) {
                    if (!(edges & (1u << e))) continue;
                    int ca = detail::kMcEdgeCorners[e][0], cb = detail::kMcEdgeCorners[e][1];
                    const auto* oa = detail::kMcCornerOffsets[ca].data();
                    const auto* ob = detail::kMcCornerOffsets[cb].data();
                    // orient every edge from its lower lattice endpoint so the key and the
                    // interpolation are the same for all four cells sharing it
                    int axis = 0;
                    for (int a = 0; a < 3; ++a)
                        if (oa[a] != ob[a]) axis = a;
                    if (oa[axis] > ob[axis]) {
                        std::swap(ca, cb);
                        std::swap(oa, ob);
                    }
                    const int pi = i + oa[0], pj = j + oa[1], pk = k + oa[2];
                    const std::uint64_t key = 3 * static_cast<std::uint64_t>(grid.index(pi, pj, pk)) + axis;
                    auto [it, inserted] = edge_vertex.try_emplace(key, static_cast<int>(mesh.vertices.size()));
                    if (inserted) {
                        const Vec3 pa = grid.point(pi, pj, pk);
                        const Vec3 pb = grid.point(i + ob[0], j + ob[1], k + ob[2]);
                        const double t = (iso - v[ca]) / (v[cb] - v[ca]);
                        mesh.vertices.push_back(pa + t * (pb - pa));
                    }
                    vert[e] = it->second;
                }
                const auto& tri = detail::kMcTriTable[cube];
                for (int t = 0; tri[t] != -1; t += 3)
                    mesh.triangles.push_back({vert[tri[t]], vert[tri[t + 2]], vert[tri[t + 1]]});
            }

    if (opts.weld && !mesh.vertices.empty()) {
        // snap to a tolerance lattice; first occurrence wins
        const double inv = 1.0 / opts.weld_tolerance;
        std::map<std::array<std::int64_t, 3>, int> seen;
        std::vector<int> remap(mesh.vertices.size());
        std::vector<Vec3> kept;
        for (std::size_t n = 0; n < mesh.vertices.size(); ++n) {
            const Vec3& p = mesh.vertices[n];
            const std::array<std::int64_t, 3> key = {std::llround(p.x() * inv), std::llround(p.y() * inv),
                                                     std::llround(p.z() * inv)};
            auto [it, inserted] = seen.try_emplace(key, static_cast<int>(kept.size()));
            if (inserted) kept.push_back(p);
            remap[n] = it->second;
        }
        std::vector<Triangle> tris;
        for (auto t : mesh.triangles) {
            for (int& x : t) x = remap[x];
            if (t[0] != t[1] && t[1] != t[2] && t[0] != t[2]) tris.push_back(t);
        }
        mesh.vertices = std::move(kept);
        mesh.triangles = std::move(tris);
    }
    return mesh;
}

// Grid dump: "SGRD", u32 R, f64 iso (16 bytes), then R^3 little-endian f32.
inline void save_grid(std::ostream& out, const ScalarGrid& g, double iso = 0.0) {
    detail::write_magic(out, "SGRD");
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(g.resolution));
    detail::write_le<double>(out, iso);
    for (double v : g.values) detail::write_le<float>(out, static_cast<float>(v));
}

inline ScalarGrid load_grid(std::istream& in, double* iso = nullptr) {
    detail::expect_magic(in, "SGRD", "grid");
    ScalarGrid g;
    const auto R = detail::read_le<std::uint32_t>(in, "resolution");
    if (R < 2 || R > 4096) throw FormatError("grid resolution out of range");
    g.resolution = static_cast<int>(R);
    const double v = detail::read_le<double>(in, "iso");
    if (iso) *iso = v;
    g.values.resize(static_cast<std::size_t>(R) * R * R);
    for (double& x : g.values) x = detail::read_le<float>(in, "grid values");
    return g;
}

inline void save_grid(const std::string& path, const ScalarGrid& g, double iso = 0.0) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    save_grid(out, g, iso);
}

/// Engine wrapper around query_adaptive that accumulates stats across slabs.
inline QueryEngine adaptive_engine(const TMlpParams& params, const DepthOctree& tree, QueryOptions opts,
                                   QueryStats* stats) {
    return [&params, &tree, opts, stats](std::span<const Vec3> xs) {
        auto r = query_adaptive(params, tree, xs, opts);
        if (stats) stats->merge(r.stats);
        return std::move(r.values);
    };
}

struct LodResult {
    int cap = 0;
    TriangleMesh mesh;
    QueryStats stats;
};

inline constexpr int kDefaultLodCaps[] = {2, 4, 6, 8};

/// One adaptive extraction per depth cap; caps must be ascending and <= L.
inline std::vector<LodResult> extract_lod(const TMlpParams& params, const DepthOctree& tree,
                                          std::span<const int> caps, int R,
                                          const MarchingCubesOptions& mc = {}) {
    for (std::size_t k = 0; k < caps.size(); ++k) {
        if (caps[k] < 1) throw Error("extract_lod: caps must be >= 1");
        if (caps[k] > params.layers())
            throw Error("extract_lod: cap " + std::to_string(caps[k]) + " exceeds network depth " +
                        std::to_string(params.layers()));
        if (k > 0 && caps[k] <= caps[k - 1]) throw Error("extract_lod: caps must be strictly ascending");
    }
    std::vector<LodResult> out;
    for (int cap : caps) {
        LodResult r;
        r.cap = cap;
        QueryOptions opts;
        opts.lod_cap = cap;
        r.mesh = marching_cubes(evaluate_grid(adaptive_engine(params, tree, opts, &r.stats), R), mc);
        out.push_back(std::move(r));
    }
    return out;
}

/// "<stem>_lod<k>.obj" for the k-th cap, k from 1.
inline std::string lod_file_name(const std::string& stem, std::size_t k) {
    return stem + "_lod" + std::to_string(k + 1) + ".obj";
}

}  // namespace sand
