#pragma once

// Volumetric network-depth map.
//
// An octree over [-1,1]^3. A cell is refined while it intersects the surface
// (unsigned distance of its center <= half its diagonal) and is shallower than
// max_depth. Intersecting cells at max_depth become Near leaves and store the
// network depth needed there; all other leaves are Far and store the SDF at
// their center. Cell membership is half-open [lo, hi) per axis with the global
// upper face closed.

#include "sand/common.hpp"
#include "sand/detail/binary_io.hpp"
#include "sand/tmlp.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <span>
#include <variant>
#include <vector>

namespace sand {

enum class NodeKind : std::uint8_t { Internal = 0, Far = 1, Near = 2 };

struct FarLeaf {
    float sdf = 0.0f;
    bool operator==(const FarLeaf&) const = default;
};

struct NearLeaf {
    int depth = 0;  // 0 until populated
    bool operator==(const NearLeaf&) const = default;
};

using LeafPayload = std::variant<FarLeaf, NearLeaf>;

/// Axis-aligned cell of a node, with integer coordinates at its own level.
struct CellInfo {
    std::uint32_t node = 0;
    int level = 0;
    std::array<std::uint32_t, 3> coord{};

    double side() const { return 2.0 / static_cast<double>(1u << level); }
    Vec3 lo() const {
        const double s = side();
        return {-1.0 + coord[0] * s, -1.0 + coord[1] * s, -1.0 + coord[2] * s};
    }
    Vec3 center() const { return lo() + Vec3::Constant(0.5 * side()); }
    /// Half-open containment with the global upper face closed.
    bool contains(const Vec3& p) const {
        const double s = side();
        for (int a = 0; a < 3; ++a) {
            const double lo_a = -1.0 + coord[a] * s, hi_a = lo_a + s;
            const double x = std::clamp(p[a], -1.0, 1.0);
            if (x < lo_a) return false;
            if (x >= hi_a && !(hi_a == 1.0 && x == 1.0)) return false;
        }
        return true;
    }
};

/// First: smallest i meeting the accuracy test. Stable: smallest i such that
/// every j >= i meets it, so max-pooling over a sample set stays sound there.
enum class DepthCriterion { Stable, First };

struct DepthRule {
    double r = 0.00015;
    int layers = 0;  // network depth L
    DepthCriterion criterion = DepthCriterion::Stable;

    void validate() const {
        if (!(r > 0.0)) throw Error("DepthRule: r must be > 0");
    }
};

class DepthOctree {
public:
    static constexpr int kDefaultMaxDepth = 9;

    struct Node {
        NodeKind kind = NodeKind::Far;
        std::uint8_t near_depth = 0;
        float sdf = 0.0f;
        std::uint32_t first_child = 0;  // internal nodes: children at [first_child, first_child + 8)
    };

    DepthOctree() = default;

    int max_depth() const { return max_depth_; }
    const std::vector<Node>& nodes() const { return nodes_; }
    std::size_t node_count() const { return nodes_.size(); }

    /// Builds the labelled shell from an unsigned-distance function.
    template <typename UnsignedDistance>
    static DepthOctree build_shell(UnsignedDistance&& distance, int max_depth = kDefaultMaxDepth) {
        if (max_depth < 0 || max_depth > 20) throw Error("build_shell: max_depth must be in [0, 20]");
        DepthOctree t;
        t.max_depth_ = max_depth;
        t.nodes_.push_back({});
        // breadth-first so the eight children of a node are contiguous
        std::vector<CellInfo> frontier{CellInfo{0, 0, {0, 0, 0}}};
        const double half_diag = std::sqrt(3.0) / 2.0;
        while (!frontier.empty()) {
            std::vector<CellInfo> next;
            for (const CellInfo& c : frontier) {
                const bool hit = distance(c.center()) <= half_diag * c.side();
                Node& n = t.nodes_[c.node];
                if (!hit) {
                    n.kind = NodeKind::Far;
                } else if (c.level == max_depth) {
                    n.kind = NodeKind::Near;
                } else {
                    n.kind = NodeKind::Internal;
                    n.first_child = static_cast<std::uint32_t>(t.nodes_.size());
                    t.nodes_.resize(t.nodes_.size() + 8);
                    for (std::uint32_t k = 0; k < 8; ++k) {
                        CellInfo child;
                        child.node = t.nodes_[c.node].first_child + k;
                        child.level = c.level + 1;
                        for (int a = 0; a < 3; ++a) child.coord[a] = 2 * c.coord[a] + ((k >> a) & 1u);
                        next.push_back(child);
                    }
                }
            }
            frontier = std::move(next);
        }
        return t;
    }

    /// Leaf containing p (clamped into the root cell).
    CellInfo locate(const Vec3& p) const {
        Vec3 x = p.cwiseMax(-1.0).cwiseMin(1.0);
        CellInfo c{0, 0, {0, 0, 0}};
        double half = 1.0;
        Vec3 mid = Vec3::Zero();
        while (nodes_[c.node].kind == NodeKind::Internal) {
            std::uint32_t k = 0;
            half *= 0.5;
            for (int a = 0; a < 3; ++a) {
                const std::uint32_t upper = x[a] >= mid[a] ? 1u : 0u;
                k |= upper << a;
                c.coord[a] = 2 * c.coord[a] + upper;
                mid[a] += upper ? half : -half;
            }
            c.node = nodes_[c.node].first_child + k;
            ++c.level;
        }
        return c;
    }

    LeafPayload lookup(const Vec3& p) const { return payload(locate(p).node); }

    LeafPayload payload(std::uint32_t node) const {
        const Node& n = nodes_.at(node);
        if (n.kind == NodeKind::Internal) throw Error("payload: node is not a leaf");
        if (n.kind == NodeKind::Far) return FarLeaf{n.sdf};
        return NearLeaf{n.near_depth};
    }

    /// Visits every leaf in preorder.
    template <typename Fn>
    void for_each_leaf(Fn&& fn) const {
        if (nodes_.empty()) return;
        std::vector<CellInfo> stack{CellInfo{0, 0, {0, 0, 0}}};
        while (!stack.empty()) {
            CellInfo c = stack.back();
            stack.pop_back();
            const Node& n = nodes_[c.node];
            if (n.kind != NodeKind::Internal) {
                fn(c);
                continue;
            }
            for (int k = 7; k >= 0; --k) {
                CellInfo child;
                child.node = n.first_child + static_cast<std::uint32_t>(k);
                child.level = c.level + 1;
                for (int a = 0; a < 3; ++a) child.coord[a] = 2 * c.coord[a] + ((static_cast<std::uint32_t>(k) >> a) & 1u);
                stack.push_back(child);
            }
        }
    }

    std::vector<CellInfo> leaves(NodeKind kind) const {
        std::vector<CellInfo> out;
        for_each_leaf([&](const CellInfo& c) {
            if (nodes_[c.node].kind == kind) out.push_back(c);
        });
        return out;
    }

    void set_far_sdf(std::uint32_t node, float v) { mutable_leaf(node, NodeKind::Far).sdf = v; }
    void set_near_depth(std::uint32_t node, int d) {
        if (d < 0 || d > 255) throw Error("near depth out of range");
        mutable_leaf(node, NodeKind::Near).near_depth = static_cast<std::uint8_t>(d);
    }

    /// Mean stored depth over Near leaves.
    double mean_near_depth() const {
        double sum = 0.0;
        std::size_t count = 0;
        for (const Node& n : nodes_)
            if (n.kind == NodeKind::Near) {
                sum += n.near_depth;
                ++count;
            }
        return count ? sum / static_cast<double>(count) : 0.0;
    }

    // Structural: node numbering may differ (a loaded tree is numbered in preorder).
    bool operator==(const DepthOctree& o) const {
        if (max_depth_ != o.max_depth_ || nodes_.size() != o.nodes_.size()) return false;
        std::vector<std::pair<std::uint32_t, std::uint32_t>> stack{{0, 0}};
        while (!stack.empty()) {
            const auto [ia, ib] = stack.back();
            stack.pop_back();
            const Node &a = nodes_[ia], &b = o.nodes_[ib];
            if (a.kind != b.kind) return false;
            if (a.kind == NodeKind::Far && std::bit_cast<std::uint32_t>(a.sdf) != std::bit_cast<std::uint32_t>(b.sdf))
                return false;
            if (a.kind == NodeKind::Near && a.near_depth != b.near_depth) return false;
            if (a.kind == NodeKind::Internal)
                for (std::uint32_t k = 0; k < 8; ++k) stack.emplace_back(a.first_child + k, b.first_child + k);
        }
        return true;
    }

    // File: "SOCT", u32 version, u8 max_depth, u64 node count, then a preorder
    // node stream: u8 tag (0 internal, 1 far, 2 near); far adds f32 sdf, near adds u8 depth.
    static constexpr std::uint32_t kVersion = 1;

    void save(std::ostream& out) const {
        detail::write_magic(out, "SOCT");
        detail::write_le<std::uint32_t>(out, kVersion);
        detail::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(max_depth_));
        detail::write_le<std::uint64_t>(out, nodes_.size());
        std::vector<std::uint32_t> stack{0};
        while (!stack.empty()) {
            const Node& n = nodes_[stack.back()];
            stack.pop_back();
            detail::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(n.kind));
            if (n.kind == NodeKind::Far) detail::write_le<float>(out, n.sdf);
            if (n.kind == NodeKind::Near) detail::write_le<std::uint8_t>(out, n.near_depth);
            if (n.kind == NodeKind::Internal)
                for (int k = 7; k >= 0; --k) stack.push_back(n.first_child + static_cast<std::uint32_t>(k));
        }
    }

    static DepthOctree load(std::istream& in) {
        detail::expect_magic(in, "SOCT", "octree");
        if (auto v = detail::read_le<std::uint32_t>(in, "version"); v != kVersion)
            throw FormatError("unsupported octree version " + std::to_string(v));
        DepthOctree t;
        t.max_depth_ = detail::read_le<std::uint8_t>(in, "max_depth");
        const auto count = detail::read_le<std::uint64_t>(in, "node count");
        if (count == 0 || count > (1ull << 32)) throw FormatError("octree node count out of range");
        // Children of a node are allocated contiguously when the node is read,
        // so reading in preorder fills them in order.
        t.nodes_.reserve(count);
        t.nodes_.push_back({});
        struct Pending {
            std::uint32_t node;
            int level;
        };
        std::vector<Pending> stack{{0, 0}};
        while (!stack.empty()) {
            const Pending p = stack.back();
            stack.pop_back();
            const auto tag = detail::read_le<std::uint8_t>(in, "node tag");
            if (tag > 2) throw FormatError("octree: bad node tag");
            Node& n = t.nodes_[p.node];
            n.kind = static_cast<NodeKind>(tag);
            if (n.kind == NodeKind::Far) {
                n.sdf = detail::read_le<float>(in, "far payload");
            } else if (n.kind == NodeKind::Near) {
                n.near_depth = detail::read_le<std::uint8_t>(in, "near payload");
                if (p.level != t.max_depth_) throw FormatError("octree: near leaf above max_depth");
            } else {
                if (p.level >= t.max_depth_) throw FormatError("octree: internal node at max_depth");
                if (t.nodes_.size() + 8 > count) throw FormatError("octree: more nodes than declared");
                n.first_child = static_cast<std::uint32_t>(t.nodes_.size());
                const std::uint32_t first = n.first_child;
                t.nodes_.resize(t.nodes_.size() + 8);
                for (int k = 7; k >= 0; --k) stack.push_back({first + static_cast<std::uint32_t>(k), p.level + 1});
            }
        }
        if (t.nodes_.size() != count) throw FormatError("octree: node count mismatch");
        return t;
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Error("cannot write octree: " + path);
        save(out);
    }

    static DepthOctree load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error("cannot open octree: " + path);
        return load(in);
    }

    std::size_t serialized_bytes() const {
        std::size_t bytes = 4 + 4 + 1 + 8;
        for (const Node& n : nodes_) bytes += 1 + (n.kind == NodeKind::Far ? 4 : n.kind == NodeKind::Near ? 1 : 0);
        return bytes;
    }

private:
    Node& mutable_leaf(std::uint32_t node, NodeKind kind) {
        Node& n = nodes_.at(node);
        if (n.kind != kind) throw Error("octree node has the wrong kind");
        return n;
    }

    int max_depth_ = kDefaultMaxDepth;
    std::vector<Node> nodes_;
};

/// Required depth from y_1..y_L. The accuracy test at depth i is
/// |y_L - y_i| < r and sign(y_i) = sign(y_L); L always passes.
inline int required_depth_from_outputs(std::span<const double> outputs, double r,
                                       DepthCriterion criterion = DepthCriterion::Stable) {
    const int L = static_cast<int>(outputs.size());
    const double yL = outputs[L - 1];
    auto ok = [&](int i) {
        const double yi = outputs[i - 1];
        return std::abs(yL - yi) < r && sign_of(yi) == sign_of(yL);
    };
    if (criterion == DepthCriterion::First) {
        for (int i = 1; i < L; ++i)
            if (ok(i)) return i;
        return L;
    }
    int d = L;
    while (d > 1 && ok(d - 1)) --d;
    return d;
}

inline int required_depth(const TMlpParams& params, const Vec3& x, const DepthRule& rule) {
    rule.validate();
    const auto ys = forward_all_depths(params, x);
    return required_depth_from_outputs(ys, rule.r, rule.criterion);
}

struct LeafSamplerConfig {
    int interior_points = 16;
    std::uint64_t seed = 0;
};

/// Points used to pool the depth of one Near leaf: 8 corners, the center, then
/// `interior_points` uniform points seeded by (seed, node index).
inline std::vector<Vec3> leaf_sample_points(const CellInfo& cell, const LeafSamplerConfig& cfg) {
    std::vector<Vec3> pts;
    pts.reserve(9 + static_cast<std::size_t>(std::max(cfg.interior_points, 0)));
    const Vec3 lo = cell.lo();
    const double s = cell.side();
    for (int k = 0; k < 8; ++k) pts.push_back(lo + s * Vec3(k & 1, (k >> 1) & 1, (k >> 2) & 1));
    pts.push_back(cell.center());
    std::mt19937_64 rng(cfg.seed * 0x9E3779B97F4A7C15ull + cell.node);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < cfg.interior_points; ++k) {
        const double a = u(rng), b = u(rng), c = u(rng);
        pts.push_back(lo + s * Vec3(a, b, c));
    }
    return pts;
}

/// Max-pooled required depth of every Near leaf, for several thresholds at once.
/// Result [rule][k] belongs to near_leaves[k].
inline std::vector<std::vector<int>> pooled_leaf_depths(const TMlpParams& params,
                                                        const std::vector<CellInfo>& near_leaves,
                                                        std::span<const double> thresholds,
                                                        const LeafSamplerConfig& sampler,
                                                        DepthCriterion criterion = DepthCriterion::Stable) {
    for (double r : thresholds)
        if (!(r > 0.0)) throw Error("depth threshold must be > 0");
    const int L = params.layers();
    std::vector<std::vector<int>> out(thresholds.size(), std::vector<int>(near_leaves.size(), 1));
    // ~kEvalBlock points per work item
    const std::size_t per_leaf = 9 + static_cast<std::size_t>(std::max(sampler.interior_points, 0));
    const std::size_t leaves_per_chunk = std::max<std::size_t>(1, 512 / per_leaf);
    parallel_chunks(near_leaves.size(), leaves_per_chunk, [&](std::size_t b, std::size_t e) {
        std::vector<Vec3> pts;
        for (std::size_t k = b; k < e; ++k) {
            auto lp = leaf_sample_points(near_leaves[k], sampler);
            pts.insert(pts.end(), lp.begin(), lp.end());
        }
        BatchEvaluator ev(params);
        ev.load(pts);
        std::vector<double> ys(pts.size() * L);
        for (int i = 0; i < L; ++i) {
            ev.step();
            for (std::size_t j = 0; j < pts.size(); ++j) ys[j * L + i] = ev.y(j);
        }
        for (std::size_t k = b; k < e; ++k)
            for (std::size_t t = 0; t < thresholds.size(); ++t) {
                int d = 1;
                for (std::size_t j = (k - b) * per_leaf; j < (k - b + 1) * per_leaf; ++j)
                    d = std::max(d, required_depth_from_outputs(std::span<const double>(ys).subspan(j * L, L),
                                                                thresholds[t], criterion));
                out[t][k] = d;
            }
    });
    return out;
}

/// Stores the max-pooled required depth in every Near leaf.
inline void populate_depths(DepthOctree& tree, const TMlpParams& params, const DepthRule& rule,
                            const LeafSamplerConfig& sampler = {}) {
    rule.validate();
    const auto near = tree.leaves(NodeKind::Near);
    const double r[1] = {rule.r};
    const auto depths = pooled_leaf_depths(params, near, r, sampler, rule.criterion);
    for (std::size_t k = 0; k < near.size(); ++k) tree.set_near_depth(near[k].node, depths[0][k]);
}

/// Caches sdf(center) in every Far leaf. `sdf` is the ground-truth oracle or the network.
template <typename SignedDistance>
void populate_far(DepthOctree& tree, SignedDistance&& sdf) {
    const auto far = tree.leaves(NodeKind::Far);
    for (const CellInfo& c : far) {
        const double v = sdf(c.center());
        if (!std::isfinite(v) || std::abs(v) < 1e-12)
            throw Error("populate_far: far cell at level " + std::to_string(c.level) +
                        " has a near-zero or non-finite center value");
        const float f = static_cast<float>(v);
        if (f == 0.0f) throw Error("populate_far: cached value underflows float");
        tree.set_far_sdf(c.node, f);
    }
}

/// Network fallback for populate_far when no ground truth is available.
inline void populate_far_from_network(DepthOctree& tree, const TMlpParams& params) {
    const auto far = tree.leaves(NodeKind::Far);
    std::vector<Vec3> centers;
    centers.reserve(far.size());
    for (const auto& c : far) centers.push_back(c.center());
    const auto ys = forward_batch(params, centers, params.layers());
    for (std::size_t k = 0; k < far.size(); ++k) {
        if (!std::isfinite(ys[k]) || std::abs(ys[k]) < 1e-12)
            throw Error("populate_far: network value near zero in a far cell");
        tree.set_far_sdf(far[k].node, static_cast<float>(ys[k]));
    }
}

struct DepthViolationReport {
    std::size_t tested = 0;
    std::size_t magnitude_violations = 0;  // |y_d(N) - y_L| >= r
    std::size_t sign_violations = 0;       // sign(y_d(N)) != sign(y_L)

    double magnitude_rate() const { return tested ? static_cast<double>(magnitude_violations) / tested : 0.0; }
    double sign_rate() const { return tested ? static_cast<double>(sign_violations) / tested : 0.0; }
};

/// Checks the stored leaf depths at fresh random points (not the pooling set).
inline DepthViolationReport measure_depth_violations(const DepthOctree& tree, const TMlpParams& params,
                                                     const DepthRule& rule, int points_per_leaf = 10,
                                                     std::uint64_t seed = 12345) {
    const auto near = tree.leaves(NodeKind::Near);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Vec3> pts;
    std::vector<int> target;
    for (const auto& c : near)
        for (int k = 0; k < points_per_leaf; ++k) {
            const double a = u(rng), b = u(rng), cc = u(rng);
            pts.push_back(c.lo() + c.side() * Vec3(a, b, cc));
            target.push_back(tree.nodes()[c.node].near_depth);
        }
    DepthViolationReport rep;
    rep.tested = pts.size();
    const int L = params.layers();
    std::vector<double> at_depth(pts.size()), full(pts.size());
    parallel_chunks(pts.size(), kEvalBlock, [&](std::size_t b, std::size_t e) {
        BatchEvaluator ev(params);
        ev.load(std::span<const Vec3>(pts).subspan(b, e - b));
        for (int i = 1; i <= L; ++i) {
            ev.step();
            for (std::size_t j = b; j < e; ++j)
                if (target[j] == i) at_depth[j] = ev.y(j - b);
        }
        for (std::size_t j = b; j < e; ++j) full[j] = ev.y(j - b);
    });
    for (std::size_t j = 0; j < pts.size(); ++j) {
        if (!(std::abs(at_depth[j] - full[j]) < rule.r)) ++rep.magnitude_violations;
        if (sign_of(at_depth[j]) != sign_of(full[j])) ++rep.sign_violations;
    }
    return rep;
}

}  // namespace sand
