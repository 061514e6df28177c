#pragma once

// Ground-truth sampling and the minibatch training loop.

#include "sand/depth_octree.hpp"
#include "sand/mesh.hpp"
#include "sand/sdf_oracle.hpp"
#include "sand/tmlp.hpp"

#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>

namespace sand {

enum class Provenance : std::uint8_t { Surface, Perturbed };

struct SampleSet {
    std::vector<Vec3> points;
    std::vector<double> gt_sdf;
    std::vector<Provenance> provenance;

    std::size_t size() const { return points.size(); }
};

struct TrainConfig {
    std::size_t n_points = 100000;
    double surface_fraction = 0.6;
    double noise_sigma = 0.01;
    int iterations = 100000;
    std::size_t batch_size = 4096;
    double lr = 1e-4;
    int checkpoint_every = 1000;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(surface_fraction >= 0.0 && surface_fraction <= 1.0)) throw Error("surface_fraction must be in [0, 1]");
        if (!(noise_sigma >= 0.0)) throw Error("noise_sigma must be >= 0");
        if (iterations < 0) throw Error("iterations must be >= 0");
        if (batch_size == 0) throw Error("batch_size must be > 0");
        if (!(lr > 0.0)) throw Error("lr must be > 0");
        if (checkpoint_every <= 0) throw Error("checkpoint_every must be > 0");
    }
};

inline constexpr int kMaxResampleAttempts = 100;

/// Surface samples (gt 0) followed by perturbed samples (gt from the oracle).
/// Perturbed sample k starts from surface point k of the same draw; a rejected
/// point (outside [-1,1]^3 or inside a Far leaf of `occupancy`) is replaced by
/// a fresh surface point plus fresh noise.
inline SampleSet build_sample_set(const TriangleMesh& mesh, const SdfOracle& oracle, const TrainConfig& cfg,
                                  const DepthOctree& occupancy) {
    cfg.validate();
    const std::size_t n_surface =
        static_cast<std::size_t>(std::llround(cfg.surface_fraction * static_cast<double>(cfg.n_points)));
    const std::size_t n_perturbed = cfg.n_points - n_surface;
    const auto base = sample_surface(mesh, std::max(n_surface, n_perturbed), cfg.seed);

    SampleSet s;
    s.points.reserve(cfg.n_points);
    for (std::size_t k = 0; k < n_surface; ++k) {
        s.points.push_back(base[k].position);
        s.gt_sdf.push_back(0.0);
        s.provenance.push_back(Provenance::Surface);
    }

    std::mt19937_64 rng(cfg.seed ^ 0xA5A5A5A5DEADBEEFull);
    std::normal_distribution<double> noise(0.0, 1.0);
    auto accept = [&](const Vec3& p) {
        if ((p.array().abs() > 1.0).any()) return false;
        return occupancy.nodes()[occupancy.locate(p).node].kind != NodeKind::Far;
    };
    auto jitter = [&](const Vec3& p) {
        const double a = noise(rng), b = noise(rng), c = noise(rng);
        return Vec3(p + cfg.noise_sigma * Vec3(a, b, c));
    };
    std::uint64_t refill = 0;
    for (std::size_t k = 0; k < n_perturbed; ++k) {
        Vec3 p = jitter(base[k].position);
        int failures = 0;
        while (!accept(p)) {
            if (++failures >= kMaxResampleAttempts)
                throw Error("build_sample_set: " + std::to_string(kMaxResampleAttempts) +
                            " consecutive perturbed samples rejected");
            const auto fresh = sample_surface(mesh, 1, cfg.seed + 0x9E3779B97F4A7C15ull * ++refill);
            p = jitter(fresh[0].position);
        }
        s.points.push_back(p);
        s.provenance.push_back(Provenance::Perturbed);
    }
    s.gt_sdf.resize(s.points.size());
    parallel_chunks(n_perturbed, 1024, [&](std::size_t b, std::size_t e) {
        for (std::size_t k = b; k < e; ++k) s.gt_sdf[n_surface + k] = oracle.signed_distance(s.points[n_surface + k]);
    });
    return s;
}

struct LossRecord {
    int iteration = 0;
    double loss = 0.0;
    std::vector<double> per_depth;
};

struct TrainResult {
    std::vector<LossRecord> curve;
};

inline void write_loss_curve_csv(std::ostream& out, const std::vector<LossRecord>& curve) {
    out << "iteration,l_sdf";
    const std::size_t depths = curve.empty() ? 0 : curve.front().per_depth.size();
    for (std::size_t i = 1; i <= depths; ++i) out << ",l1_depth" << i;
    out << '\n';
    out.precision(10);
    for (const auto& r : curve) {
        out << r.iteration << ',' << r.loss;
        for (double v : r.per_depth) out << ',' << v;
        out << '\n';
    }
}

inline void write_loss_curve_csv(const std::string& path, const std::vector<LossRecord>& curve) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    write_loss_curve_csv(out, curve);
}

using CheckpointCallback = std::function<void(int iteration, const TMlpParams&)>;

/// Minibatch Adam on L_sdf over a fixed sample set, reshuffled every epoch.
/// Row 0 of the curve is the loss of the first batch before any update; each
/// later row is the mean over the preceding checkpoint interval.
inline TrainResult train(TMlpParams& params, AdamState& state, const SampleSet& samples, const TrainConfig& cfg,
                         const CheckpointCallback& on_checkpoint = {}) {
    cfg.validate();
    if (samples.size() == 0) throw Error("train: empty sample set");
    state.lr = cfg.lr;
    const std::size_t n = samples.size();
    const std::size_t batch = std::min(cfg.batch_size, n);
    const int L = params.layers();

    std::mt19937_64 rng(cfg.seed + 17);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t cursor = 0;

    std::vector<Vec3> xs(batch);
    std::vector<double> gts(batch);
    std::vector<std::size_t> picked(batch);
    auto next_batch = [&] {
        for (std::size_t k = 0; k < batch; ++k) {
            if (cursor == n) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            picked[k] = order[cursor++];
            xs[k] = samples.points[picked[k]];
            gts[k] = samples.gt_sdf[picked[k]];
        }
    };

    TrainResult result;
    LossRecord acc;
    acc.per_depth.assign(L, 0.0);
    int in_interval = 0;
    for (int it = 1; it <= cfg.iterations; ++it) {
        next_batch();
        LossAndGrad lg = loss_and_grad(params, xs, gts);
        if (!std::isfinite(lg.loss)) {
            std::ostringstream msg;
            msg << "train: non-finite loss at iteration " << it << ", batch indices";
            for (std::size_t k = 0; k < std::min<std::size_t>(batch, 8); ++k) msg << ' ' << picked[k];
            if (batch > 8) msg << " ...";
            throw Error(msg.str());
        }
        if (it == 1) result.curve.push_back({0, lg.loss, lg.per_depth});
        adam_step(state, params, lg.grad);
        acc.loss += lg.loss;
        for (int i = 0; i < L; ++i) acc.per_depth[i] += lg.per_depth[i];
        ++in_interval;
        if (it % cfg.checkpoint_every == 0 || it == cfg.iterations) {
            LossRecord r{it, acc.loss / in_interval, acc.per_depth};
            for (double& v : r.per_depth) v /= in_interval;
            result.curve.push_back(std::move(r));
            acc.loss = 0.0;
            std::fill(acc.per_depth.begin(), acc.per_depth.end(), 0.0);
            in_interval = 0;
            if (on_checkpoint) on_checkpoint(it, params);
        }
    }
    return result;
}

}  // namespace sand
