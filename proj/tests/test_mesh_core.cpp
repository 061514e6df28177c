#include "sand/mesh.hpp"
#include "sand/sdf_oracle.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace sand;

namespace {

TriangleMesh parse(const std::string& text) {
    std::istringstream in(text);
    return parse_obj(in);
}

double signed_volume(const TriangleMesh& m) {
    double v = 0.0;
    for (const auto& t : m.triangles)
        v += m.vertices[t[0]].dot(m.vertices[t[1]].cross(m.vertices[t[2]])) / 6.0;
    return v;
}

}  // namespace

TEST(LoadMesh, SingleTriangle) {
    const auto m = parse("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
    EXPECT_EQ(m.vertices.size(), 3u);
    ASSERT_EQ(m.triangles.size(), 1u);
    EXPECT_EQ(m.triangles[0], (Triangle{0, 1, 2}));
}

TEST(LoadMesh, QuadCubeFanTriangulated) {
    const auto m = parse(
        "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv 0 0 1\nv 1 0 1\nv 1 1 1\nv 0 1 1\n"
        "f 1 4 3 2\nf 5 6 7 8\nf 1 2 6 5\nf 2 3 7 6\nf 3 4 8 7\nf 4 1 5 8\n");
    EXPECT_EQ(m.vertices.size(), 8u);
    EXPECT_EQ(m.triangles.size(), 12u);
    EXPECT_TRUE(m.is_watertight());
    EXPECT_NEAR(signed_volume(m), 1.0, 1e-12);
}

TEST(LoadMesh, IndexZeroIsRejectedWithLine) {
    try {
        parse("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n");
        FAIL() << "expected a parse error";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
    }
}

TEST(LoadMesh, SlashFormsAndNegativeIndices) {
    const auto m = parse("v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf -3/1/1 -2//1 -1/2\n");
    ASSERT_EQ(m.triangles.size(), 1u);
    EXPECT_EQ(m.triangles[0], (Triangle{0, 1, 2}));
}

TEST(LoadMesh, DegenerateDroppedAndCounted) {
    const auto m = parse("v 0 0 0\nv 1 0 0\nv 2 0 0\nv 0 1 0\nf 1 2 3\nf 1 2 4\n");
    EXPECT_EQ(m.triangles.size(), 1u);
    EXPECT_EQ(m.dropped_degenerate, 1u);
}

TEST(LoadMesh, OpenMeshLoadsButIsNotWatertight) {
    const auto m = parse("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
    EXPECT_FALSE(m.is_watertight());
}

TEST(LoadMesh, ObjRoundTrip) {
    const auto m = make_icosphere(1, 0.5);
    std::stringstream s;
    write_obj(s, m);
    const auto back = parse_obj(s);
    ASSERT_EQ(back.vertices.size(), m.vertices.size());
    EXPECT_EQ(back.triangles, m.triangles);
    for (std::size_t i = 0; i < m.vertices.size(); ++i) EXPECT_EQ(back.vertices[i], m.vertices[i]);
}

TEST(Normalize, UnitCube) {
    const auto [m, xf] = normalize(test::make_box(Vec3::Zero(), Vec3::Ones()));
    EXPECT_DOUBLE_EQ(xf.scale, 1.9);
    EXPECT_TRUE(xf.offset.isApprox(Vec3::Constant(-0.5)));
    const auto [lo, hi] = m.bounds();
    EXPECT_TRUE(lo.isApprox(Vec3::Constant(-0.95), 1e-15));
    EXPECT_TRUE(hi.isApprox(Vec3::Constant(0.95), 1e-15));
}

TEST(Normalize, AspectPreserved) {
    const auto [m, xf] = normalize(test::make_box(Vec3::Zero(), Vec3(2, 1, 1)));
    const auto [lo, hi] = m.bounds();
    const Vec3 size = hi - lo;
    EXPECT_NEAR(size.x(), 1.9, 1e-14);
    EXPECT_NEAR(size.y(), 0.95, 1e-14);
    EXPECT_NEAR(size.z(), 0.95, 1e-14);
    EXPECT_NEAR(0.5 * (lo + hi).norm(), 0.0, 1e-15);
    const Vec3 p(0.3, -0.2, 0.7);
    EXPECT_TRUE(xf.inverse(xf.apply(p)).isApprox(p, 1e-15));
}

TEST(Normalize, Idempotent) {
    const auto [once, xf1] = normalize(make_torus(2.0, 0.5, 24, 12));
    const auto [twice, xf2] = normalize(once);
    EXPECT_NEAR(xf2.scale, 1.0, 1e-14);
    EXPECT_LT(xf2.offset.norm(), 1e-14);
}

TEST(Normalize, ZeroExtentThrows) {
    TriangleMesh m;
    m.vertices = {Vec3::Ones(), Vec3::Ones(), Vec3::Ones()};
    m.triangles = {{0, 1, 2}};
    EXPECT_THROW(normalize(m), Error);
}

TEST(SampleSurface, SingleTriangleSupport) {
    TriangleMesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    m.triangles = {{0, 1, 2}};
    const auto s = sample_surface(m, 1000, 3);
    ASSERT_EQ(s.size(), 1000u);
    for (const auto& p : s) {
        EXPECT_GE(p.position.x(), 0.0);
        EXPECT_GE(p.position.y(), 0.0);
        EXPECT_LE(p.position.x() + p.position.y(), 1.0 + 1e-12);
        EXPECT_EQ(p.position.z(), 0.0);
        EXPECT_NEAR(p.normal.norm(), 1.0, 1e-6);
    }
}

TEST(SampleSurface, AreaProportionalSplitAndChiSquare) {
    // areas 1 and 3
    TriangleMesh m;
    m.vertices = {{0, 0, 0}, {2, 0, 0}, {0, 1, 0}, {0, 0, 5}, {6, 0, 5}, {0, 1, 5}};
    m.triangles = {{0, 1, 2}, {3, 4, 5}};
    const std::size_t n = 100000;
    const auto s = sample_surface(m, n, 11);
    std::size_t first = 0;
    for (const auto& p : s) first += p.triangle == 0;
    const double f = static_cast<double>(first) / n;
    EXPECT_NEAR(f, 0.25, 0.01);
    // one degree of freedom; 10.83 is the 0.1% critical value
    const double e0 = 0.25 * n, e1 = 0.75 * n;
    const double chi2 = (first - e0) * (first - e0) / e0 + ((n - first) - e1) * ((n - first) - e1) / e1;
    EXPECT_LT(chi2, 10.83);
}

TEST(SampleSurface, DeterministicAndEmpty) {
    const auto m = make_icosphere(2, 0.5);
    const auto a = sample_surface(m, 500, 42), b = sample_surface(m, 500, 42);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].position, b[i].position);
    EXPECT_TRUE(sample_surface(m, 0, 1).empty());
}

TEST(SampleSurface, PointsLieOnTheirTriangle) {
    const auto m = make_icosphere(2, 0.5);
    for (const auto& s : sample_surface(m, 2000, 5)) {
        const auto& t = m.triangles[s.triangle];
        const auto c = closest_on_triangle(s.position, m.vertices[t[0]], m.vertices[t[1]], m.vertices[t[2]]);
        EXPECT_LT(std::sqrt(c.distance_sq), 1e-9);
    }
}

TEST(SdfOracle, SphereCenterNearMinusHalf) {
    const SdfOracle o(make_icosphere(4, 0.5));
    ASSERT_TRUE(o.watertight());
    // inscribed face distance of subdivision 4 is within 1e-3 of the radius
    EXPECT_NEAR(o.signed_distance(Vec3::Zero()), -0.5, 1e-3);
}

TEST(SdfOracle, ZeroOnVertices) {
    const auto m = make_icosphere(3, 0.5);
    const SdfOracle o(m);
    for (std::size_t i = 0; i < m.vertices.size(); i += 17) EXPECT_NEAR(o.signed_distance(m.vertices[i]), 0.0, 1e-9);
}

TEST(SdfOracle, FarPointMatchesBruteForce) {
    const auto m = make_icosphere(3, 0.5);
    const SdfOracle o(m);
    const Vec3 p(10, 0, 0);
    const double d = o.signed_distance(p);
    EXPECT_GT(d, 0.0);
    EXPECT_NEAR(d, std::sqrt(brute_force_closest(m, p).distance_sq), 1e-12);
}

TEST(SdfOracle, BvhEqualsBruteForce) {
    const auto m = normalize(make_torus(1.0, 0.35, 40, 20)).first;
    const SdfOracle o(m);
    std::mt19937_64 rng(9);
    for (int k = 0; k < 1000; ++k) {
        const Vec3 p = test::random_point(rng, -1.2, 1.2);
        const double bf = std::sqrt(brute_force_closest(m, p).distance_sq);
        EXPECT_NEAR(o.unsigned_distance(p), bf, 1e-9);
        EXPECT_DOUBLE_EQ(o.unsigned_distance(p), std::abs(o.signed_distance(p)));
    }
}

TEST(SdfOracle, SignFlipsAcrossSurface) {
    for (const auto& mesh : {make_icosphere(3, 0.5), normalize(make_torus(1.0, 0.35, 40, 20)).first,
                             test::make_box(Vec3::Constant(-0.5), Vec3::Constant(0.4))}) {
        const SdfOracle o(mesh);
        ASSERT_TRUE(o.watertight());
        for (const auto& s : sample_surface(mesh, 1000, 21)) {
            EXPECT_GT(o.signed_distance(s.position + 1e-4 * s.normal), 0.0);
            EXPECT_LT(o.signed_distance(s.position - 1e-4 * s.normal), 0.0);
        }
    }
}

TEST(SdfOracle, SignAtVertexAndEdgeFeatures) {
    // closest features on a box are vertices and edges from outside the corners
    const SdfOracle o(test::make_box(Vec3::Zero(), Vec3::Ones()));
    EXPECT_NEAR(o.signed_distance(Vec3(1.1, 1.1, 1.1)), std::sqrt(3 * 0.01), 1e-12);
    EXPECT_NEAR(o.signed_distance(Vec3(1.1, 1.1, 0.5)), std::sqrt(2 * 0.01), 1e-12);
    EXPECT_NEAR(o.signed_distance(Vec3(0.9, 0.95, 0.5)), -0.05, 1e-12);
    EXPECT_NEAR(o.signed_distance(Vec3(0.5, 0.5, 0.5)), -0.5, 1e-12);
}

TEST(Primitives, WatertightAndOutward) {
    EXPECT_TRUE(make_icosphere(2, 0.5).is_watertight());
    EXPECT_GT(signed_volume(make_icosphere(2, 0.5)), 0.0);
    EXPECT_TRUE(make_torus(1.0, 0.3, 16, 8).is_watertight());
    EXPECT_GT(signed_volume(make_torus(1.0, 0.3, 16, 8)), 0.0);
    EXPECT_TRUE(test::make_box(Vec3::Zero(), Vec3::Ones()).is_watertight());
    EXPECT_NEAR(signed_volume(test::make_box(Vec3::Zero(), Vec3::Ones())), 1.0, 1e-12);
}
