#pragma once

#include "sand/mesh.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace sand::test {

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("sand_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline Vec3 random_point(std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    const double a = u(rng), b = u(rng), c = u(rng);
    return {a, b, c};
}

/// Axis-aligned closed box, outward winding.
inline TriangleMesh make_box(const Vec3& lo, const Vec3& hi) {
    TriangleMesh m;
    for (int k = 0; k < 8; ++k)
        m.vertices.emplace_back(k & 1 ? hi.x() : lo.x(), k & 2 ? hi.y() : lo.y(), k & 4 ? hi.z() : lo.z());
    m.triangles = {{0, 2, 3}, {0, 3, 1}, {4, 5, 7}, {4, 7, 6}, {0, 1, 5}, {0, 5, 4},
                   {2, 6, 7}, {2, 7, 3}, {0, 4, 6}, {0, 6, 2}, {1, 3, 7}, {1, 7, 5}};
    return m;
}

/// Square [x0,x1]x[y0,y1] at height z, two triangles facing +z.
inline TriangleMesh make_square(double x0, double x1, double y0, double y1, double z) {
    TriangleMesh m;
    m.vertices = {{x0, y0, z}, {x1, y0, z}, {x1, y1, z}, {x0, y1, z}};
    m.triangles = {{0, 1, 2}, {0, 2, 3}};
    return m;
}

inline TriangleMesh merge(const TriangleMesh& a, const TriangleMesh& b) {
    TriangleMesh m = a;
    const int off = static_cast<int>(a.vertices.size());
    m.vertices.insert(m.vertices.end(), b.vertices.begin(), b.vertices.end());
    for (auto t : b.triangles) m.triangles.push_back({t[0] + off, t[1] + off, t[2] + off});
    return m;
}

}  // namespace sand::test
