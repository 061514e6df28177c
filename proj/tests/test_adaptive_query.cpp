#include "sand/adaptive_query.hpp"
#include "sand/sdf_oracle.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace sand;

namespace {

TMlpParams net(int L, int width, std::uint64_t seed) {
    TMlpConfig c;
    c.hidden_layers = L;
    c.hidden_width = width;
    c.seed = seed;
    auto p = init_params(c);
    std::mt19937_64 rng(seed + 1);
    std::uniform_real_distribution<double> u(-0.2, 0.2);
    for (int i = 1; i <= L; ++i)
        for (int b = 0; b < (i == 1 ? 1 : 2); ++b) p.tail_bias(i, b)[0] = u(rng);
    return p;
}

struct Fixture {
    TMlpParams params = net(5, 16, 7);
    DepthOctree tree;
    Fixture() {
        const SdfOracle o(make_icosphere(3, 0.5));
        tree = DepthOctree::build_shell([&](const Vec3& p) { return o.unsigned_distance(p); }, 5);
        populate_far(tree, [&](const Vec3& p) { return o.signed_distance(p); });
        populate_depths(tree, params, {0.002, 5});
    }
};

const Fixture& fx() {
    static const Fixture f;
    return f;
}

std::vector<Vec3> random_points(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<Vec3> p;
    for (std::size_t i = 0; i < n; ++i) p.push_back(test::random_point(rng));
    return p;
}

}  // namespace

TEST(QueryAdaptive, FarPointsUseCacheWithoutNetwork) {
    const auto& f = fx();
    std::vector<Vec3> pts;
    for (const auto& c : f.tree.leaves(NodeKind::Far)) pts.push_back(c.center());
    const auto r = query_adaptive(f.params, f.tree, pts);
    EXPECT_EQ(r.stats.layer_passes_adaptive, 0u);
    EXPECT_EQ(r.stats.n_far, pts.size());
    for (std::size_t j = 0; j < pts.size(); ++j) EXPECT_EQ(r.values[j], std::get<FarLeaf>(f.tree.lookup(pts[j])).sdf);
}

TEST(QueryAdaptive, NearValuesEqualForwardAtLeafDepth) {
    const auto& f = fx();
    const auto pts = random_points(5000, 3);
    const auto r = query_adaptive(f.params, f.tree, pts);
    std::size_t near = 0;
    for (std::size_t j = 0; j < pts.size(); ++j) {
        const auto payload = f.tree.lookup(pts[j]);
        if (const auto* n = std::get_if<NearLeaf>(&payload)) {
            ++near;
            EXPECT_EQ(r.depths[j], n->depth);
            EXPECT_EQ(r.values[j], forward(f.params, pts[j], n->depth).y);
        } else {
            EXPECT_EQ(r.depths[j], 0);
        }
    }
    EXPECT_GT(near, 0u);
    EXPECT_EQ(r.stats.n_far + r.stats.n_near(), pts.size());
    EXPECT_EQ(r.stats.layer_passes_full, 5u * pts.size());
    EXPECT_LE(r.stats.layer_passes_adaptive, r.stats.layer_passes_full);
}

TEST(QueryAdaptive, CapAtDepthIsInactiveAndCapsNest) {
    const auto& f = fx();
    const auto pts = random_points(4000, 4);
    const auto plain = query_adaptive(f.params, f.tree, pts);
    QueryOptions full_cap;
    full_cap.lod_cap = 5;
    const auto capped = query_adaptive(f.params, f.tree, pts, full_cap);
    EXPECT_EQ(plain.values, capped.values);
    std::vector<int> prev(pts.size(), 0);
    for (int cap = 1; cap <= 5; ++cap) {
        QueryOptions o;
        o.lod_cap = cap;
        const auto r = query_adaptive(f.params, f.tree, pts, o);
        for (std::size_t j = 0; j < pts.size(); ++j) {
            EXPECT_LE(r.depths[j], cap);
            EXPECT_GE(r.depths[j], prev[j]);
        }
        prev = r.depths;
    }
    QueryOptions bad;
    bad.lod_cap = 0;
    EXPECT_THROW(query_adaptive(f.params, f.tree, pts, bad), Error);
}

TEST(QueryAdaptive, VerifyCountsViolationsAgainstFullDepth) {
    const auto& f = fx();
    const auto pts = random_points(10000, 5);
    QueryOptions o;
    o.verify = true;
    o.r = 0.002;
    const auto r = query_adaptive(f.params, f.tree, pts, o);
    const auto full = query_full(f.params, pts);
    std::size_t mag = 0, sgn = 0;
    for (std::size_t j = 0; j < pts.size(); ++j) {
        if (r.depths[j] == 0) continue;
        mag += !(std::abs(r.values[j] - full[j]) < 0.002);
        sgn += sign_of(r.values[j]) != sign_of(full[j]);
    }
    EXPECT_TRUE(r.stats.verified);
    EXPECT_EQ(r.stats.magnitude_violations, mag);
    EXPECT_EQ(r.stats.sign_violations, sgn);
}

TEST(QueryAdaptive, GatedMatchesFullOnNearPoints) {
    const auto& f = fx();
    const auto pts = random_points(3000, 6);
    const auto g = query_gated(f.params, f.tree, pts);
    const auto full = query_full(f.params, pts);
    for (std::size_t j = 0; j < pts.size(); ++j)
        if (g.depths[j] > 0) EXPECT_EQ(g.values[j], full[j]);
}

TEST(QueryAdaptive, IndependentOfPartitioning) {
    const auto& f = fx();
    const auto pts = random_points(3001, 8);
    const auto whole = query_adaptive(f.params, f.tree, pts);
    std::vector<double> pieces;
    for (std::size_t b = 0; b < pts.size(); b += 337) {
        const auto part = query_adaptive(f.params, f.tree, std::span<const Vec3>(pts).subspan(b, std::min<std::size_t>(337, pts.size() - b)));
        pieces.insert(pieces.end(), part.values.begin(), part.values.end());
    }
    EXPECT_EQ(whole.values, pieces);
}

TEST(QueryFull, EqualsForward) {
    const auto& f = fx();
    const auto pts = random_points(500, 9);
    const auto v = query_full(f.params, pts);
    for (std::size_t j = 0; j < pts.size(); ++j) EXPECT_EQ(v[j], forward(f.params, pts[j], 5).y);
    const auto s = query_full_with_stats(f.params, pts);
    EXPECT_EQ(s.values, v);
    EXPECT_EQ(s.stats.layer_passes_adaptive, s.stats.layer_passes_full);
}

TEST(QueryFull, TimeScalesLinearlyWithDepth) {
    const auto pts = random_points(20000, 10);
    auto time_at = [&](int L) {
        const auto p = net(L, 64, 1);
        return median_timed([&] { return query_full_with_stats(p, pts); }, 5).stats.total_time;
    };
    const double t4 = time_at(4), t8 = time_at(8);
    EXPECT_NEAR(t8 / t4, 2.0, 0.4) << "t4=" << t4 << " t8=" << t8;
}

TEST(QueryDynamic, ImmediateExit) {
    auto p = net(4, 8, 2);
    p.tail_weight(1, 0).setZero();
    p.tail_bias(1, 0)[0] = 0.0;
    const auto pts = random_points(100, 1);
    const auto r = query_dynamic(p, pts, {0.00015, 4});
    for (std::size_t j = 0; j < pts.size(); ++j) {
        EXPECT_EQ(r.depths[j], 1);
        EXPECT_EQ(r.values[j], 0.0);
    }
    EXPECT_EQ(r.stats.layer_passes_adaptive, pts.size());
}

TEST(QueryDynamic, FallThroughAndDefinition) {
    const auto p = net(5, 16, 3);
    const auto pts = random_points(2000, 2);
    const auto none = query_dynamic(p, pts, {1e-300, 5});
    EXPECT_EQ(none.values, query_full(p, pts));
    const double r = 0.003;
    const auto dyn = query_dynamic(p, pts, {r, 5});
    for (std::size_t j = 0; j < pts.size(); ++j) {
        const auto tr = forward(p, pts[j], 5).trace;
        int d = 5;
        for (int i = 1; i <= 5; ++i)
            if (std::abs(tr.tails[i - 1]) < r) {
                d = i;
                break;
            }
        EXPECT_EQ(dyn.depths[j], d);
        EXPECT_EQ(dyn.values[j], tr.outputs[d - 1]);
    }
}

TEST(DepthHistogram, TrivialCases) {
    QueryStats s;
    s.per_depth_counts = {10, 0, 0};
    EXPECT_EQ(depth_histogram(s), (std::vector<double>{1.0, 0.0, 0.0}));
    s.per_depth_counts = {50, 50};
    s.n_far = 123;
    EXPECT_EQ(depth_histogram(s), (std::vector<double>{0.5, 0.5}));
    std::ostringstream csv, chart;
    write_depth_histogram_csv(csv, s);
    EXPECT_EQ(csv.str(), "depth,count,fraction\n1,50,0.5\n2,50,0.5\n");
    print_depth_histogram(chart, s, 10);
    EXPECT_NE(chart.str().find("|#####     | 50.00%"), std::string::npos) << chart.str();
}

TEST(TailResiduals, ZeroParamsAndSinglePoint) {
    TMlpConfig c;
    c.hidden_layers = 3;
    c.hidden_width = 4;
    const auto zero = tail_residual_stats(TMlpParams(c), random_points(10, 1));
    for (const auto& row : zero.per_depth) EXPECT_EQ(row.max + row.mean + row.median, 0.0);
    const auto p = net(3, 4, 4);
    const Vec3 x(0.1, -0.3, 0.2);
    const auto one = tail_residual_stats(p, std::span<const Vec3>(&x, 1));
    const auto tr = forward(p, x, 3).trace;
    for (int i = 0; i < 3; ++i) {
        EXPECT_EQ(one.per_depth[i].max, std::abs(tr.tails[i]));
        EXPECT_EQ(one.per_depth[i].mean, std::abs(tr.tails[i]));
        EXPECT_EQ(one.per_depth[i].median, std::abs(tr.tails[i]));
    }
}

TEST(TailResiduals, MatchesSortedStatistics) {
    const auto p = net(3, 8, 5);
    const auto pts = random_points(100, 3);
    const auto s = tail_residual_stats(p, pts);
    for (int i = 0; i < 3; ++i) {
        std::vector<double> v;
        for (const auto& x : pts) v.push_back(std::abs(forward(p, x, 3).trace.tails[i]));
        std::sort(v.begin(), v.end());
        EXPECT_EQ(s.per_depth[i].max, v.back());
        EXPECT_DOUBLE_EQ(s.per_depth[i].median, 0.5 * (v[49] + v[50]));
        EXPECT_GE(s.per_depth[i].max, s.per_depth[i].mean);
    }
}
