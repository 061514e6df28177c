#include "sand/metrics.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace sand;

namespace {

MetricSettings settings(std::size_t n, double tau = 0.003) { return {n, 7, tau}; }

}  // namespace

TEST(KdTree, EqualsBruteForce) {
    std::mt19937_64 rng(1);
    std::vector<Vec3> pts;
    for (int k = 0; k < 5000; ++k) pts.push_back(test::random_point(rng));
    const PointKdTree tree(pts);
    for (int q = 0; q < 100; ++q) {
        const Vec3 x = test::random_point(rng, -1.2, 1.2);
        double best = std::numeric_limits<double>::infinity();
        for (const auto& p : pts) best = std::min(best, (p - x).squaredNorm());
        EXPECT_NEAR(tree.nearest(x).distance_sq, best, 1e-9);
        EXPECT_EQ((tree.point(tree.nearest(x).index) - x).squaredNorm(), best);
    }
    EXPECT_EQ(PointKdTree({}).nearest(Vec3::Zero()).distance_sq, std::numeric_limits<double>::infinity());
}

TEST(Metrics, SelfComparison) {
    const auto m = make_icosphere(3, 0.5);
    const auto c = compare_meshes(m, m, settings(20000));
    EXPECT_EQ(c.cd, 0.0);
    EXPECT_EQ(c.fscore, 100.0);
    EXPECT_NEAR(c.nc, 100.0, 1e-12);
    EXPECT_EQ(chamfer(m, m, 5000, 3), 0.0);
    EXPECT_EQ(fscore(m, m, 0.003, 5000, 3), 100.0);
    EXPECT_NEAR(normal_consistency(m, m, 5000, 3), 100.0, 1e-12);
}

TEST(Metrics, ParallelSquaresChamferIsOffset) {
    const double delta = 0.1;
    const auto a = test::make_square(0, 1, 0, 1, 0), b = test::make_square(0, 1, 0, 1, delta);
    const double cd = chamfer(a, b, 50000, 2);
    EXPECT_NEAR(cd, delta * 1e3, 0.01 * delta * 1e3);
}

TEST(Metrics, SurfaceChamferHasNoSamplingFloor) {
    const auto m = make_icosphere(3, 0.5);
    EXPECT_LT(surface_chamfer(m, m, 5000, 1), 1e-9);
    // same plane, different triangulations: sample-to-sample CD stays well above zero
    const auto a = test::make_square(0, 1, 0, 1, 0);
    const auto b = test::merge(test::make_square(0, 0.5, 0, 1, 0), test::make_square(0.5, 1, 0, 1, 0));
    EXPECT_LT(surface_chamfer(a, b, 5000, 1), 1e-9);
    EXPECT_GT(chamfer(a, b, 5000, 1), 1.0);
    const auto c = test::make_square(0, 1, 0, 1, 0.02);
    EXPECT_NEAR(surface_chamfer(a, c, 5000, 1), 20.0, 1e-9);
}

TEST(Metrics, ChamferSymmetric) {
    const auto a = make_icosphere(2, 0.5), b = make_icosphere(3, 0.45);
    EXPECT_DOUBLE_EQ(chamfer(a, b, 10000, 1), chamfer(b, a, 10000, 1));
}

TEST(Metrics, DisjointMeshesScoreZero) {
    const auto a = test::make_square(0, 1, 0, 1, 0), b = test::make_square(0, 1, 0, 1, 0.5);
    EXPECT_EQ(fscore(a, b, 0.003, 5000, 1), 0.0);
}

TEST(Metrics, HalfRecallGivesTwoThirds) {
    // b covers a and an equally large far-away square: P = 1, R = 0.5
    const auto a = test::make_square(0, 0.1, 0, 0.1, 0);
    const auto b = test::merge(a, test::make_square(0.5, 0.6, 0, 0.1, 0));
    const auto c = compare_meshes(a, b, settings(50000));
    EXPECT_NEAR(c.precision, 1.0, 1e-3);
    EXPECT_NEAR(c.recall, 0.5, 0.01);
    EXPECT_NEAR(c.fscore, 200.0 / 3.0, 1.0);  // dF/dR = 2P^2/(P+R)^2 = 0.89, times the recall tolerance
}

TEST(Metrics, NormalConsistencyIgnoresOrientation) {
    const auto a = test::make_square(0, 1, 0, 1, 0);
    auto flipped = a;
    for (auto& t : flipped.triangles) std::swap(t[1], t[2]);
    EXPECT_NEAR(normal_consistency(a, flipped, 5000, 1), 100.0, 1e-12);
}

TEST(Metrics, SixtyDegreePlanes) {
    const auto a = test::make_square(0, 0.2, 0, 0.2, 0);
    TriangleMesh b = a;
    const Eigen::AngleAxisd rot(std::numbers::pi / 3, Vec3::UnitX());
    for (auto& v : b.vertices) v = rot * v;
    EXPECT_NEAR(normal_consistency(a, b, 5000, 1), 50.0, 1e-9);
}

TEST(Metrics, FscoreMonotoneInTau) {
    const auto a = make_icosphere(2, 0.5), b = make_icosphere(2, 0.49);
    double prev = 101.0;
    for (double tau : {0.05, 0.02, 0.01, 0.005, 0.001}) {
        const double f = fscore(a, b, tau, 5000, 1);
        EXPECT_LE(f, prev);
        prev = f;
    }
}

TEST(Metrics, EmptyMeshThrows) {
    EXPECT_THROW(chamfer(TriangleMesh{}, make_icosphere(1, 0.5), 100), Error);
}

TEST(Report, SelfRowAndStorageAccounting) {
    const auto m = make_icosphere(2, 0.5);
    QueryStats st;
    st.octree_time = 0.01;
    st.network_time = 0.2;
    st.total_time = 0.21;
    const auto r = assemble_report(compare_meshes(m, m, settings(2000)), 1234, 567, st);
    EXPECT_EQ(r.storage_bytes(), 1234u + 567u);
    EXPECT_FALSE(r.has_nan());
    std::ostringstream table, csv;
    render_report_table(table, r);
    write_report_csv(csv, r);
    EXPECT_NE(table.str().find("0.000"), std::string::npos);
    EXPECT_NE(table.str().find("100.000"), std::string::npos);
    EXPECT_NE(csv.str().find("result,0,100,100,1234,567,1801,0.01,0.2,0.21"), std::string::npos) << csv.str();
    auto bad = r;
    bad.metrics.nc = std::numeric_limits<double>::quiet_NaN();
    EXPECT_TRUE(bad.has_nan());
}
