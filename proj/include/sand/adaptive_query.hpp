#pragma once

// Spatially adaptive early-exit inference.
//
// Points are looked up in the depth octree. Far points return the cached SDF.
// Near points are counting-sorted by target depth and evaluated in blocks of
// kEvalBlock columns; after layer i the columns whose target is i sit at the
// front of the block and are dropped from further layers.

#include "sand/depth_octree.hpp"
#include "sand/tmlp.hpp"

#include <chrono>
#include <iomanip>
#include <optional>
#include <ostream>

namespace sand {

struct QueryStats {
    std::size_t n_queries = 0;
    std::size_t n_far = 0;
    std::vector<std::size_t> per_depth_counts;  // index i-1 holds depth i
    std::uint64_t layer_passes_adaptive = 0;
    std::uint64_t layer_passes_full = 0;
    double octree_time = 0.0;
    double network_time = 0.0;
    double total_time = 0.0;
    // filled only when QueryOptions::verify is set
    bool verified = false;
    std::size_t magnitude_violations = 0;
    std::size_t sign_violations = 0;

    std::size_t n_near() const {
        std::size_t s = 0;
        for (auto c : per_depth_counts) s += c;
        return s;
    }

    double pass_ratio() const {
        return layer_passes_full ? static_cast<double>(layer_passes_adaptive) / layer_passes_full : 0.0;
    }

    /// Sums counts and times of another run over a disjoint point set.
    void merge(const QueryStats& o) {
        if (per_depth_counts.size() < o.per_depth_counts.size()) per_depth_counts.resize(o.per_depth_counts.size(), 0);
        for (std::size_t i = 0; i < o.per_depth_counts.size(); ++i) per_depth_counts[i] += o.per_depth_counts[i];
        n_queries += o.n_queries;
        n_far += o.n_far;
        layer_passes_adaptive += o.layer_passes_adaptive;
        layer_passes_full += o.layer_passes_full;
        octree_time += o.octree_time;
        network_time += o.network_time;
        total_time += o.total_time;
        verified = verified || o.verified;
        magnitude_violations += o.magnitude_violations;
        sign_violations += o.sign_violations;
    }
};

struct QueryResult {
    std::vector<double> values;
    std::vector<int> depths;  // evaluation depth per point, 0 for Far
    QueryStats stats;
};

struct QueryOptions {
    std::optional<int> lod_cap;
    bool near_full_depth = false;  // evaluate Near points to L (octree-gated full network)
    bool verify = false;           // compare Near values with y_L
    double r = 0.00015;            // threshold used by verify
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// Evaluates xs[idx[k]] to depth target[idx[k]]; idx must be sorted by ascending target.
inline void evaluate_sorted(const TMlpParams& params, std::span<const Vec3> xs, std::span<const std::uint32_t> idx,
                            std::span<const int> target, std::span<double> out) {
    parallel_chunks(idx.size(), kEvalBlock, [&](std::size_t b, std::size_t e) {
        std::vector<Vec3> block(e - b);
        for (std::size_t k = b; k < e; ++k) block[k - b] = xs[idx[k]];
        BatchEvaluator ev(params);
        ev.load(block);
        std::size_t first = 0;
        const std::size_t n = e - b;
        while (first < n) {
            ev.step(first);
            const int i = ev.layer();
            while (first < n && target[idx[b + first]] == i) {
                out[idx[b + first]] = ev.y(first);
                ++first;
            }
        }
    });
}

inline void count_violations(const TMlpParams& params, std::span<const Vec3> xs, const QueryResult& res,
                             double r, QueryStats& stats) {
    std::vector<Vec3> pts;
    std::vector<std::size_t> where;
    for (std::size_t j = 0; j < xs.size(); ++j)
        if (res.depths[j] > 0) {
            pts.push_back(xs[j]);
            where.push_back(j);
        }
    const auto full = forward_batch(params, pts, params.layers());
    stats.verified = true;
    for (std::size_t k = 0; k < pts.size(); ++k) {
        const double v = res.values[where[k]];
        if (!(std::abs(v - full[k]) < r)) ++stats.magnitude_violations;
        if (sign_of(v) != sign_of(full[k])) ++stats.sign_violations;
    }
}

}  // namespace detail

inline QueryResult query_adaptive(const TMlpParams& params, const DepthOctree& tree, std::span<const Vec3> xs,
                                  const QueryOptions& opts = {}) {
    const int L = params.layers();
    if (opts.lod_cap && *opts.lod_cap < 1) throw Error("query_adaptive: lod_cap must be >= 1");
    const int cap = opts.lod_cap ? std::min(*opts.lod_cap, L) : L;

    const auto t_start = detail::Clock::now();
    QueryResult res;
    res.values.assign(xs.size(), 0.0);
    res.depths.assign(xs.size(), 0);
    QueryStats& st = res.stats;
    st.n_queries = xs.size();
    st.per_depth_counts.assign(L, 0);
    st.layer_passes_full = static_cast<std::uint64_t>(xs.size()) * static_cast<std::uint64_t>(L);

    const auto t_lookup = detail::Clock::now();
    parallel_chunks(xs.size(), 4096, [&](std::size_t b, std::size_t e) {
        for (std::size_t j = b; j < e; ++j) {
            const auto& node = tree.nodes()[tree.locate(xs[j]).node];
            if (node.kind == NodeKind::Far) {
                res.values[j] = node.sdf;
            } else {
                const int d = opts.near_full_depth ? L : std::max<int>(node.near_depth, 1);
                if (d > L) throw Error("query_adaptive: octree depth exceeds network depth");
                res.depths[j] = std::min(d, cap);
            }
        }
    });
    st.octree_time = detail::seconds_since(t_lookup);

    // counting sort of Near points by depth
    std::vector<std::size_t> offset(L + 2, 0);
    for (int d : res.depths) ++offset[d + 1];
    st.n_far = offset[1];
    for (int i = 1; i <= L; ++i) st.per_depth_counts[i - 1] = offset[i + 1];
    for (int i = 1; i <= L + 1; ++i) offset[i] += offset[i - 1];
    std::vector<std::uint32_t> sorted(xs.size() - st.n_far);
    for (std::size_t j = 0; j < xs.size(); ++j)
        if (res.depths[j] > 0) sorted[offset[res.depths[j]]++ - st.n_far] = static_cast<std::uint32_t>(j);
    for (int i = 1; i <= L; ++i) st.layer_passes_adaptive += static_cast<std::uint64_t>(i) * st.per_depth_counts[i - 1];

    const auto t_net = detail::Clock::now();
    detail::evaluate_sorted(params, xs, sorted, res.depths, res.values);
    st.network_time = detail::seconds_since(t_net);
    st.total_time = detail::seconds_since(t_start);

    if (opts.verify) detail::count_violations(params, xs, res, opts.r, st);
    return res;
}

/// Near points at full depth, Far points from the cache.
inline QueryResult query_gated(const TMlpParams& params, const DepthOctree& tree, std::span<const Vec3> xs,
                               QueryOptions opts = {}) {
    opts.near_full_depth = true;
    opts.lod_cap.reset();
    return query_adaptive(params, tree, xs, opts);
}

/// y_L at every point; the uniform-depth baseline.
inline QueryResult query_full_with_stats(const TMlpParams& params, std::span<const Vec3> xs) {
    const int L = params.layers();
    QueryResult res;
    const auto t0 = detail::Clock::now();
    res.values = forward_batch(params, xs, L);
    res.depths.assign(xs.size(), L);
    auto& st = res.stats;
    st.network_time = st.total_time = detail::seconds_since(t0);
    st.n_queries = xs.size();
    st.per_depth_counts.assign(L, 0);
    st.per_depth_counts[L - 1] = xs.size();
    st.layer_passes_adaptive = st.layer_passes_full = static_cast<std::uint64_t>(xs.size()) * L;
    return res;
}

inline std::vector<double> query_full(const TMlpParams& params, std::span<const Vec3> xs) {
    return forward_batch(params, xs, params.layers());
}

/// Octree-free early exit: stop after layer i once |t_i(x)| < r.
inline QueryResult query_dynamic(const TMlpParams& params, std::span<const Vec3> xs, const DepthRule& rule) {
    rule.validate();
    const int L = params.layers();
    QueryResult res;
    res.values.assign(xs.size(), 0.0);
    res.depths.assign(xs.size(), 0);
    const auto t0 = detail::Clock::now();
    parallel_chunks(xs.size(), kEvalBlock, [&](std::size_t b, std::size_t e) {
        const std::size_t n = e - b;
        BatchEvaluator ev(params);
        ev.load(xs.subspan(b, n));
        std::vector<std::size_t> owner(n);
        std::iota(owner.begin(), owner.end(), b);
        std::size_t first = 0;
        while (first < n) {
            ev.step(first);
            const int i = ev.layer();
            for (std::size_t j = first; j < n; ++j) {
                if (i == L || std::abs(ev.tail(j)) < rule.r) {
                    ev.swap_columns(first, j);
                    std::swap(owner[first], owner[j]);
                    res.values[owner[first]] = ev.y(first);
                    res.depths[owner[first]] = i;
                    ++first;
                }
            }
        }
    });
    auto& st = res.stats;
    st.network_time = st.total_time = detail::seconds_since(t0);
    st.n_queries = xs.size();
    st.per_depth_counts.assign(L, 0);
    for (int d : res.depths) {
        ++st.per_depth_counts[d - 1];
        st.layer_passes_adaptive += static_cast<std::uint64_t>(d);
    }
    st.layer_passes_full = static_cast<std::uint64_t>(xs.size()) * L;
    return res;
}

/// Runs `query` `runs` times and keeps the result with the median total time.
template <typename Query>
QueryResult median_timed(Query&& query, int runs = 3) {
    std::vector<QueryResult> all;
    for (int k = 0; k < std::max(runs, 1); ++k) all.push_back(query());
    std::vector<std::size_t> idx(all.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return all[a].stats.total_time < all[b].stats.total_time; });
    return std::move(all[idx[idx.size() / 2]]);
}

/// Fraction of Near queries evaluated at each depth 1..L.
inline std::vector<double> depth_histogram(const QueryStats& stats) {
    std::vector<double> h(stats.per_depth_counts.size(), 0.0);
    const std::size_t near = stats.n_near();
    if (near == 0) return h;
    for (std::size_t i = 0; i < h.size(); ++i) h[i] = static_cast<double>(stats.per_depth_counts[i]) / near;
    return h;
}

inline void write_depth_histogram_csv(std::ostream& out, const QueryStats& stats) {
    const auto h = depth_histogram(stats);
    out << "depth,count,fraction\n";
    for (std::size_t i = 0; i < h.size(); ++i)
        out << i + 1 << ',' << stats.per_depth_counts[i] << ',' << std::setprecision(8) << h[i] << '\n';
}

inline void print_depth_histogram(std::ostream& out, const QueryStats& stats, int bar_width = 50) {
    const auto h = depth_histogram(stats);
    for (std::size_t i = 0; i < h.size(); ++i) {
        const int len = static_cast<int>(std::lround(h[i] * bar_width));
        out << "depth " << std::setw(2) << i + 1 << " |" << std::string(len, '#')
            << std::string(bar_width - len, ' ') << "| " << std::fixed << std::setprecision(2) << 100.0 * h[i]
            << "%\n";
        out.unsetf(std::ios::fixed);
    }
}

inline void write_query_stats_csv(std::ostream& out, const QueryStats& s) {
    out << "n_queries,n_far,n_near,layer_passes_adaptive,layer_passes_full,pass_ratio,octree_time_s,"
           "network_time_s,total_time_s,magnitude_violations,sign_violations\n";
    out << s.n_queries << ',' << s.n_far << ',' << s.n_near() << ',' << s.layer_passes_adaptive << ','
        << s.layer_passes_full << ',' << std::setprecision(6) << s.pass_ratio() << ',' << std::fixed
        << std::setprecision(6) << s.octree_time << ',' << s.network_time << ',' << s.total_time << ',';
    out.unsetf(std::ios::fixed);
    if (s.verified)
        out << s.magnitude_violations << ',' << s.sign_violations << '\n';
    else
        out << ",\n";
}

struct TailResidualStats {
    struct Row {
        double max = 0.0, mean = 0.0, median = 0.0;
    };
    std::vector<Row> per_depth;  // index i-1 holds tail i
};

inline TailResidualStats tail_residual_stats(const TMlpParams& params, std::span<const Vec3> xs) {
    const int L = params.layers();
    std::vector<std::vector<double>> abs_t(L, std::vector<double>(xs.size()));
    parallel_chunks(xs.size(), kEvalBlock, [&](std::size_t b, std::size_t e) {
        BatchEvaluator ev(params);
        ev.load(xs.subspan(b, e - b));
        for (int i = 0; i < L; ++i) {
            ev.step();
            for (std::size_t j = b; j < e; ++j) abs_t[i][j] = std::abs(ev.tail(j - b));
        }
    });
    TailResidualStats out;
    out.per_depth.resize(L);
    if (xs.empty()) return out;
    for (int i = 0; i < L; ++i) {
        auto& v = abs_t[i];
        auto& row = out.per_depth[i];
        double sum = 0.0;
        for (double a : v) {
            sum += a;
            row.max = std::max(row.max, a);
        }
        row.mean = sum / static_cast<double>(v.size());
        const std::size_t mid = v.size() / 2;
        std::nth_element(v.begin(), v.begin() + mid, v.end());
        if (v.size() % 2) {
            row.median = v[mid];
        } else {
            const double hi = v[mid];
            const double lo = *std::max_element(v.begin(), v.begin() + mid);
            row.median = 0.5 * (lo + hi);
        }
    }
    return out;
}

inline void write_tail_residuals_csv(std::ostream& out, const TailResidualStats& s) {
    out << "tail,max,mean,median\n";
    out << std::setprecision(10);
    for (std::size_t i = 0; i < s.per_depth.size(); ++i)
        out << i + 1 << ',' << s.per_depth[i].max << ',' << s.per_depth[i].mean << ',' << s.per_depth[i].median
            << '\n';
}

}  // namespace sand
