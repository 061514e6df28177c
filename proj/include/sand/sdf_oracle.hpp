#pragma once

#include "sand/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <vector>

namespace sand {

/// Which part of a triangle a closest point landed on.
enum class Feature : std::uint8_t { Face, Edge, Vertex };

struct ClosestPoint {
    Vec3 point = Vec3::Zero();
    double distance_sq = std::numeric_limits<double>::infinity();
    int triangle = -1;
    Feature feature = Feature::Face;
    int index = 0;  // local vertex index (Vertex) or edge index e = (v_e, v_{e+1}) (Edge)
};

/// Closest point on triangle abc to p (Ericson, Real-Time Collision Detection 5.1.5),
/// also reporting the feature that contains it.
inline ClosestPoint closest_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    ClosestPoint r;
    auto finish = [&](const Vec3& q, Feature f, int idx) {
        r.point = q;
        r.distance_sq = (p - q).squaredNorm();
        r.feature = f;
        r.index = idx;
        return r;
    };
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) return finish(a, Feature::Vertex, 0);
    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) return finish(b, Feature::Vertex, 1);
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return finish(a + (d1 / (d1 - d3)) * ab, Feature::Edge, 0);
    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) return finish(c, Feature::Vertex, 2);
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return finish(a + (d2 / (d2 - d6)) * ac, Feature::Edge, 2);
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0)
        return finish(b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b), Feature::Edge, 1);
    const double denom = 1.0 / (va + vb + vc);
    return finish(a + ab * (vb * denom) + ac * (vc * denom), Feature::Face, 0);
}

/// Exact signed distance to a watertight, consistently oriented triangle mesh.
/// Immutable after construction; concurrent queries are safe.
class SdfOracle {
public:
    explicit SdfOracle(TriangleMesh mesh) : mesh_(std::move(mesh)) {
        if (mesh_.empty()) throw Error("SdfOracle: mesh has no triangles");
        if (!mesh_.indices_valid()) throw Error("SdfOracle: triangle index out of range");
        watertight_ = mesh_.is_watertight();
        build_pseudonormals();
        build_bvh();
    }

    const TriangleMesh& mesh() const { return mesh_; }
    bool watertight() const { return watertight_; }

    ClosestPoint closest(const Vec3& p) const {
        ClosestPoint best;
        int stack[64];
        int top = 0;
        stack[top++] = 0;
        while (top > 0) {
            const Node& node = nodes_[stack[--top]];
            if (box_distance_sq(node, p) >= best.distance_sq) continue;
            if (node.count > 0) {
                for (int k = node.first; k < node.first + node.count; ++k) {
                    const int t = order_[k];
                    const auto& f = mesh_.triangles[t];
                    ClosestPoint c = closest_on_triangle(p, mesh_.vertices[f[0]], mesh_.vertices[f[1]],
                                                         mesh_.vertices[f[2]]);
                    if (c.distance_sq < best.distance_sq) {
                        c.triangle = t;
                        best = c;
                    }
                }
            } else {
                const Node& l = nodes_[node.left];
                const Node& r = nodes_[node.left + 1];
                const double dl = box_distance_sq(l, p), dr = box_distance_sq(r, p);
                // push the farther child first so the nearer is visited next
                if (dl < dr) {
                    stack[top++] = node.left + 1;
                    stack[top++] = node.left;
                } else {
                    stack[top++] = node.left;
                    stack[top++] = node.left + 1;
                }
            }
        }
        return best;
    }

    double unsigned_distance(const Vec3& p) const { return std::sqrt(closest(p).distance_sq); }

    /// Negative inside. Sign from the angle-weighted pseudonormal at the closest feature.
    double signed_distance(const Vec3& p) const {
        const ClosestPoint c = closest(p);
        const double d = std::sqrt(c.distance_sq);
        if (d == 0.0) return 0.0;
        const Vec3& n = pseudonormal(c);
        return (p - c.point).dot(n) >= 0.0 ? d : -d;
    }

    const Vec3& pseudonormal(const ClosestPoint& c) const {
        switch (c.feature) {
            case Feature::Vertex: return vertex_normals_[mesh_.triangles[c.triangle][c.index]];
            case Feature::Edge: return edge_normals_[3 * c.triangle + c.index];
            default: return face_normals_[c.triangle];
        }
    }

private:
    struct Node {
        Eigen::Vector3d lo, hi;
        int left = -1;  // children at left, left + 1
        int first = 0;
        int count = 0;  // > 0 for leaves
    };

    static double box_distance_sq(const Node& n, const Vec3& p) {
        const Vec3 d = (n.lo - p).cwiseMax(p - n.hi).cwiseMax(0.0);
        return d.squaredNorm();
    }

    void build_pseudonormals() {
        const std::size_t nt = mesh_.triangles.size();
        face_normals_.resize(nt);
        vertex_normals_.assign(mesh_.vertices.size(), Vec3::Zero());
        std::map<std::pair<int, int>, Vec3> edge_acc;
        for (std::size_t t = 0; t < nt; ++t) {
            const auto& f = mesh_.triangles[t];
            const Vec3 n = mesh_.face_normal(t);
            face_normals_[t] = n;
            for (int k = 0; k < 3; ++k) {
                const Vec3& v = mesh_.vertices[f[k]];
                const Vec3 e1 = (mesh_.vertices[f[(k + 1) % 3]] - v).normalized();
                const Vec3 e2 = (mesh_.vertices[f[(k + 2) % 3]] - v).normalized();
                const double angle = std::acos(std::clamp(e1.dot(e2), -1.0, 1.0));
                vertex_normals_[f[k]] += angle * n;
                edge_acc[std::minmax(f[k], f[(k + 1) % 3])] += n;
            }
        }
        for (auto& n : vertex_normals_) {
            const double len = n.norm();
            if (len > 0.0) n /= len;
        }
        edge_normals_.resize(3 * nt);
        for (std::size_t t = 0; t < nt; ++t) {
            const auto& f = mesh_.triangles[t];
            for (int k = 0; k < 3; ++k) {
                Vec3 n = edge_acc[std::minmax(f[k], f[(k + 1) % 3])];
                const double len = n.norm();
                edge_normals_[3 * t + k] = len > 0.0 ? Vec3(n / len) : face_normals_[t];
            }
        }
    }

    void build_bvh() {
        const std::size_t nt = mesh_.triangles.size();
        order_.resize(nt);
        std::iota(order_.begin(), order_.end(), 0);
        centroids_.resize(nt);
        for (std::size_t t = 0; t < nt; ++t) {
            const auto& f = mesh_.triangles[t];
            centroids_[t] = (mesh_.vertices[f[0]] + mesh_.vertices[f[1]] + mesh_.vertices[f[2]]) / 3.0;
        }
        nodes_.reserve(2 * nt);
        nodes_.emplace_back();
        build_node(0, 0, static_cast<int>(nt));
        centroids_.clear();
        centroids_.shrink_to_fit();
    }

    void build_node(int idx, int first, int count) {
        Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
        for (int k = first; k < first + count; ++k)
            for (int v : mesh_.triangles[order_[k]]) {
                lo = lo.cwiseMin(mesh_.vertices[v]);
                hi = hi.cwiseMax(mesh_.vertices[v]);
            }
        nodes_[idx].lo = lo;
        nodes_[idx].hi = hi;
        if (count <= 4) {
            nodes_[idx].first = first;
            nodes_[idx].count = count;
            return;
        }
        int axis;
        (hi - lo).maxCoeff(&axis);
        const int mid = first + count / 2;
        std::nth_element(order_.begin() + first, order_.begin() + mid, order_.begin() + first + count,
                         [&](int a, int b) { return centroids_[a][axis] < centroids_[b][axis]; });
        const int left = static_cast<int>(nodes_.size());
        nodes_.emplace_back();
        nodes_.emplace_back();
        nodes_[idx].left = left;
        build_node(left, first, mid - first);
        build_node(left + 1, mid, first + count - mid);
    }

    TriangleMesh mesh_;
    bool watertight_ = false;
    std::vector<Vec3> face_normals_, vertex_normals_, edge_normals_;
    std::vector<Node> nodes_;
    std::vector<int> order_;
    std::vector<Vec3> centroids_;
};

/// Exhaustive closest point over every triangle. Test oracle for the BVH.
inline ClosestPoint brute_force_closest(const TriangleMesh& mesh, const Vec3& p) {
    ClosestPoint best;
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto& f = mesh.triangles[t];
        ClosestPoint c = closest_on_triangle(p, mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]);
        if (c.distance_sq < best.distance_sq) {
            c.triangle = static_cast<int>(t);
            best = c;
        }
    }
    return best;
}

}  // namespace sand
