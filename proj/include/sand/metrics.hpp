#pragma once

// Point-sample mesh comparison (CD, F-Score, NC) and the evaluation report.

#include "sand/adaptive_query.hpp"
#include "sand/mesh.hpp"
#include "sand/sdf_oracle.hpp"

#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>

namespace sand {

/// Static 3-d tree over a point set for exact nearest-neighbour queries.
class PointKdTree {
public:
    explicit PointKdTree(std::vector<Vec3> pts) : pts_(std::move(pts)), idx_(pts_.size()) {
        std::iota(idx_.begin(), idx_.end(), 0u);
        if (!pts_.empty()) build(0, idx_.size(), 0);
    }

    std::size_t size() const { return pts_.size(); }
    const Vec3& point(std::size_t i) const { return pts_[i]; }

    struct Hit {
        std::size_t index = 0;
        double distance_sq = std::numeric_limits<double>::infinity();
    };

    Hit nearest(const Vec3& q) const {
        Hit best;
        if (!pts_.empty()) search(0, idx_.size(), 0, q, best);
        return best;
    }

private:
    static constexpr std::size_t kLeaf = 8;

    // Node for [b, e): the median sits at m = (b + e) / 2 and splits on `axis`.
    void build(std::size_t b, std::size_t e, int axis) {
        if (e - b <= kLeaf) return;
        const std::size_t m = (b + e) / 2;
        std::nth_element(idx_.begin() + b, idx_.begin() + m, idx_.begin() + e, [&](unsigned x, unsigned y) {
            return pts_[x][axis] < pts_[y][axis] || (pts_[x][axis] == pts_[y][axis] && x < y);
        });
        build(b, m, (axis + 1) % 3);
        build(m + 1, e, (axis + 1) % 3);
    }

    void consider(unsigned i, const Vec3& q, Hit& best) const {
        const double d = (pts_[i] - q).squaredNorm();
        if (d < best.distance_sq || (d == best.distance_sq && i < best.index)) best = {i, d};
    }

    void search(std::size_t b, std::size_t e, int axis, const Vec3& q, Hit& best) const {
        if (e - b <= kLeaf) {
            for (std::size_t k = b; k < e; ++k) consider(idx_[k], q, best);
            return;
        }
        const std::size_t m = (b + e) / 2;
        consider(idx_[m], q, best);
        const double diff = q[axis] - pts_[idx_[m]][axis];
        const int next = (axis + 1) % 3;
        if (diff < 0) {
            search(b, m, next, q, best);
            if (diff * diff <= best.distance_sq) search(m + 1, e, next, q, best);
        } else {
            search(m + 1, e, next, q, best);
            if (diff * diff <= best.distance_sq) search(b, m, next, q, best);
        }
    }

    std::vector<Vec3> pts_;
    std::vector<unsigned> idx_;
};

struct MeshPointSamples {
    std::vector<Vec3> points;
    std::vector<Vec3> normals;  // face normal of the containing triangle
};

inline MeshPointSamples sample_for_metrics(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed) {
    if (mesh.triangles.empty() || !(mesh.total_area() > 0.0)) throw Error("metrics: mesh is empty");
    if (n == 0) throw Error("metrics: sample count must be > 0");
    MeshPointSamples s;
    for (const auto& p : sample_surface(mesh, n, seed)) {
        s.points.push_back(p.position);
        s.normals.push_back(mesh.face_normal(p.triangle));
    }
    return s;
}

struct DirectionalMatch {
    std::vector<double> distance;  // to nearest sample of the other set
    std::vector<double> abs_cos;   // |n_a . n_b| at that pair
};

inline DirectionalMatch match_samples(const MeshPointSamples& from, const MeshPointSamples& to,
                                      const PointKdTree& to_tree) {
    DirectionalMatch m;
    m.distance.resize(from.points.size());
    m.abs_cos.resize(from.points.size());
    parallel_chunks(from.points.size(), 2048, [&](std::size_t b, std::size_t e) {
        for (std::size_t k = b; k < e; ++k) {
            const auto hit = to_tree.nearest(from.points[k]);
            m.distance[k] = std::sqrt(hit.distance_sq);
            m.abs_cos[k] = std::min(1.0, std::abs(from.normals[k].dot(to.normals[hit.index])));
        }
    });
    return m;
}

struct MetricSettings {
    std::size_t samples = 50000;  // 500000 for parity runs
    std::uint64_t seed = 0;
    double fscore_tau = 0.003;
};

struct MeshComparison {
    double cd = 0.0;      // x 1e3, mean of both directions
    double fscore = 0.0;  // percent
    double nc = 0.0;      // percent
    double precision = 0.0, recall = 0.0;
};

namespace detail {

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline double fraction_within(const std::vector<double>& d, double tau) {
    std::size_t c = 0;
    for (double x : d) c += x <= tau;
    return d.empty() ? 0.0 : static_cast<double>(c) / static_cast<double>(d.size());
}

inline double f_from(double p, double r) { return p + r > 0.0 ? 200.0 * p * r / (p + r) : 0.0; }

}  // namespace detail

/// Both meshes are sampled with the same seed.
inline MeshComparison compare_meshes(const TriangleMesh& a, const TriangleMesh& b, const MetricSettings& s = {}) {
    const auto sa = sample_for_metrics(a, s.samples, s.seed);
    const auto sb = sample_for_metrics(b, s.samples, s.seed);
    const PointKdTree ta(sa.points), tb(sb.points);
    const auto ab = match_samples(sa, sb, tb);
    const auto ba = match_samples(sb, sa, ta);
    MeshComparison c;
    c.cd = 0.5 * (detail::mean_of(ab.distance) + detail::mean_of(ba.distance)) * 1e3;
    c.precision = detail::fraction_within(ab.distance, s.fscore_tau);
    c.recall = detail::fraction_within(ba.distance, s.fscore_tau);
    c.fscore = detail::f_from(c.precision, c.recall);
    c.nc = 0.5 * (detail::mean_of(ab.abs_cos) + detail::mean_of(ba.abs_cos)) * 100.0;
    return c;
}

inline double chamfer(const TriangleMesh& a, const TriangleMesh& b, std::size_t n = 500000, std::uint64_t seed = 0) {
    return compare_meshes(a, b, {n, seed, 0.003}).cd;
}

inline double fscore(const TriangleMesh& a, const TriangleMesh& b, double tau = 0.003, std::size_t n = 500000,
                     std::uint64_t seed = 0) {
    return compare_meshes(a, b, {n, seed, tau}).fscore;
}

inline double normal_consistency(const TriangleMesh& a, const TriangleMesh& b, std::size_t n = 500000,
                                 std::uint64_t seed = 0) {
    return compare_meshes(a, b, {n, seed, 0.003}).nc;
}

/// Chamfer variant measuring sample-to-surface distance (exact closest point
/// on the other mesh) instead of sample-to-sample. It has no sampling floor,
/// so it resolves differences far below the sample spacing. x 1e3.
inline double surface_chamfer(const TriangleMesh& a, const TriangleMesh& b, std::size_t n = 100000,
                              std::uint64_t seed = 0) {
    auto one_way = [&](const TriangleMesh& from, const TriangleMesh& to) {
        const auto s = sample_for_metrics(from, n, seed);
        const SdfOracle oracle(to);
        std::vector<double> d(s.points.size());
        parallel_chunks(d.size(), 2048, [&](std::size_t b0, std::size_t e) {
            for (std::size_t k = b0; k < e; ++k) d[k] = oracle.unsigned_distance(s.points[k]);
        });
        return detail::mean_of(d);
    };
    return 0.5 * (one_way(a, b) + one_way(b, a)) * 1e3;
}

struct LodRow {
    int cap = 0;
    MeshComparison metrics;
};

struct EvalReport {
    MeshComparison metrics;
    std::uint64_t model_bytes = 0;
    std::uint64_t octree_bytes = 0;
    std::optional<QueryStats> stats;
    std::vector<LodRow> lod_rows;

    std::uint64_t storage_bytes() const { return model_bytes + octree_bytes; }

    bool has_nan() const {
        auto bad = [](const MeshComparison& m) {
            return std::isnan(m.cd) || std::isnan(m.fscore) || std::isnan(m.nc);
        };
        if (bad(metrics)) return true;
        for (const auto& r : lod_rows)
            if (bad(r.metrics)) return true;
        return false;
    }
};

inline EvalReport assemble_report(const MeshComparison& metrics, std::uint64_t model_bytes,
                                  std::uint64_t octree_bytes, std::optional<QueryStats> stats = std::nullopt,
                                  std::vector<LodRow> lod_rows = {}) {
    EvalReport r;
    r.metrics = metrics;
    r.model_bytes = model_bytes;
    r.octree_bytes = octree_bytes;
    r.stats = std::move(stats);
    r.lod_rows = std::move(lod_rows);
    return r;
}

inline void render_report_table(std::ostream& out, const EvalReport& r) {
    auto mb = [](std::uint64_t b) { return static_cast<double>(b) / (1024.0 * 1024.0); };
    out << std::fixed;
    out << std::left << std::setw(10) << "row" << std::right << std::setw(10) << "CD" << std::setw(10) << "F-Score"
        << std::setw(10) << "NC" << std::setw(12) << "Storage" << std::setw(10) << "Octree" << std::setw(10)
        << "Network" << std::setw(10) << "Total" << '\n';
    out << std::left << std::setw(10) << "result" << std::right << std::setprecision(3) << std::setw(10)
        << r.metrics.cd << std::setw(10) << r.metrics.fscore << std::setw(10) << r.metrics.nc << std::setw(9)
        << mb(r.storage_bytes()) << " MB";
    if (r.stats)
        out << std::setprecision(4) << std::setw(10) << r.stats->octree_time << std::setw(10)
            << r.stats->network_time << std::setw(10) << r.stats->total_time;
    else
        out << std::setw(10) << "-" << std::setw(10) << "-" << std::setw(10) << "-";
    out << '\n';
    for (const auto& l : r.lod_rows)
        out << std::left << std::setw(10) << ("cap " + std::to_string(l.cap)) << std::right << std::setprecision(3)
            << std::setw(10) << l.metrics.cd << std::setw(10) << l.metrics.fscore << std::setw(10) << l.metrics.nc
            << '\n';
    out.unsetf(std::ios::fixed);
    out << std::setprecision(6);
}

inline void write_report_csv(std::ostream& out, const EvalReport& r) {
    out << "row,cd_x1e3,fscore,nc,model_bytes,octree_bytes,storage_bytes,octree_time_s,network_time_s,total_time_s,"
           "layer_passes_adaptive,layer_passes_full\n";
    out << std::setprecision(10);
    out << "result," << r.metrics.cd << ',' << r.metrics.fscore << ',' << r.metrics.nc << ',' << r.model_bytes << ','
        << r.octree_bytes << ',' << r.storage_bytes() << ',';
    if (r.stats)
        out << r.stats->octree_time << ',' << r.stats->network_time << ',' << r.stats->total_time << ','
            << r.stats->layer_passes_adaptive << ',' << r.stats->layer_passes_full << '\n';
    else
        out << ",,,,\n";
    for (const auto& l : r.lod_rows)
        out << "cap" << l.cap << ',' << l.metrics.cd << ',' << l.metrics.fscore << ',' << l.metrics.nc
            << ",,,,,,,,\n";
}

}  // namespace sand
