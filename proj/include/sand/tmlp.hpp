#pragma once

// Tailed multi-layer perceptron (T-MLP).
//
//   h_0 = x
//   h_i = sin(omega_i * (W_i h_{i-1} + b_i))              i = 1..L
//   t_1 = A_1 h_1 + c_1
//   t_i = (A_i0 h_i + c_i0) * (A_i1 h_i + c_i1)          i = 2..L
//   y_i = y_{i-1} + t_i,  y_0 = 0
//
// Every y_i is a usable prediction, so evaluation can stop at any depth.
// Inference goes through BatchEvaluator, whose per-point arithmetic does not
// depend on batch size or position; training uses Eigen GEMMs.

#include "sand/common.hpp"
#include "sand/detail/binary_io.hpp"
#include "sand/detail/sincos.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <span>
#include <vector>

namespace sand {

enum class Activation : std::uint32_t { Sine = 0 };

struct TMlpConfig {
    int hidden_layers = 8;
    int hidden_width = 256;
    int input_dim = 3;
    int output_dim = 1;
    double omega_first = 30.0;
    double omega_hidden = 30.0;
    std::uint64_t seed = 0;
    Activation activation = Activation::Sine;

    void validate() const {
        if (hidden_layers < 1) throw Error("TMlpConfig: hidden_layers must be >= 1");
        if (hidden_width < 1 || input_dim < 1 || output_dim < 1) throw Error("TMlpConfig: widths must be >= 1");
        if (!(omega_first > 0.0) || !(omega_hidden > 0.0)) throw Error("TMlpConfig: omegas must be > 0");
    }

    double omega(int layer) const { return layer == 1 ? omega_first : omega_hidden; }

    bool operator==(const TMlpConfig&) const = default;
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using VectorMap = Eigen::Map<Eigen::VectorXd>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;

/// All weights of a T-MLP in one flat buffer. Layout, also the checkpoint order:
///   for i = 1..L:  W_i (width x in_i), b_i (width)
///   A_1 (D x width), c_1 (D)
///   for i = 2..L:  A_i0, c_i0, A_i1, c_i1
/// Matrices are row-major. Gradients use the same type.
class TMlpParams {
public:
    TMlpParams() = default;

    explicit TMlpParams(const TMlpConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        const int L = cfg_.hidden_layers, w = cfg_.hidden_width, D = cfg_.output_dim;
        std::size_t at = 0;
        layer_w_.resize(L + 1);
        layer_b_.resize(L + 1);
        tail_w_.resize(L + 1);
        tail_b_.resize(L + 1);
        for (int i = 1; i <= L; ++i) {
            layer_w_[i] = at;
            at += static_cast<std::size_t>(w) * (i == 1 ? cfg_.input_dim : w);
            layer_b_[i] = at;
            at += w;
        }
        for (int i = 1; i <= L; ++i)
            for (int branch = 0; branch < (i == 1 ? 1 : 2); ++branch) {
                tail_w_[i][branch] = at;
                at += static_cast<std::size_t>(D) * w;
                tail_b_[i][branch] = at;
                at += D;
            }
        data_.assign(at, 0.0);
    }

    const TMlpConfig& config() const { return cfg_; }
    int layers() const { return cfg_.hidden_layers; }
    int width() const { return cfg_.hidden_width; }
    int in_dim(int layer) const { return layer == 1 ? cfg_.input_dim : cfg_.hidden_width; }

    std::size_t size() const { return data_.size(); }
    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    MatrixMap weight(int i) { return {data_.data() + layer_w_.at(i), width(), in_dim(i)}; }
    ConstMatrixMap weight(int i) const { return {data_.data() + layer_w_.at(i), width(), in_dim(i)}; }
    VectorMap bias(int i) { return {data_.data() + layer_b_.at(i), width()}; }
    ConstVectorMap bias(int i) const { return {data_.data() + layer_b_.at(i), width()}; }

    /// Tail i output weights; branch 0 only for i = 1, branches 0 and 1 for i >= 2.
    MatrixMap tail_weight(int i, int branch) {
        check_tail(i, branch);
        return {data_.data() + tail_w_[i][branch], cfg_.output_dim, width()};
    }
    ConstMatrixMap tail_weight(int i, int branch) const {
        check_tail(i, branch);
        return {data_.data() + tail_w_[i][branch], cfg_.output_dim, width()};
    }
    VectorMap tail_bias(int i, int branch) {
        check_tail(i, branch);
        return {data_.data() + tail_b_[i][branch], cfg_.output_dim};
    }
    ConstVectorMap tail_bias(int i, int branch) const {
        check_tail(i, branch);
        return {data_.data() + tail_b_[i][branch], cfg_.output_dim};
    }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool operator==(const TMlpParams& o) const { return cfg_ == o.cfg_ && data_ == o.data_; }

private:
    void check_tail(int i, int branch) const {
        if (i < 1 || i > layers() || branch < 0 || branch > (i == 1 ? 0 : 1))
            throw Error("tail index out of range");
    }

    TMlpConfig cfg_;
    std::vector<double> data_;
    std::vector<std::size_t> layer_w_, layer_b_;
    std::vector<std::array<std::size_t, 2>> tail_w_, tail_b_;
};

/// SIREN initialization. First layer U(-1/in, 1/in); hidden layers and tails
/// U(-sqrt(6/fan_in)/omega, +sqrt(6/fan_in)/omega); backbone biases
/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)); tail biases zero.
inline TMlpParams init_params(const TMlpConfig& cfg) {
    TMlpParams p(cfg);
    std::mt19937_64 rng(cfg.seed);
    auto fill = [&](auto&& block, double bound) {
        std::uniform_real_distribution<double> u(-bound, bound);
        for (Eigen::Index r = 0; r < block.rows(); ++r)
            for (Eigen::Index c = 0; c < block.cols(); ++c) block(r, c) = u(rng);
    };
    const double hidden_bound = std::sqrt(6.0 / cfg.hidden_width) / cfg.omega_hidden;
    for (int i = 1; i <= cfg.hidden_layers; ++i) {
        const int fan_in = p.in_dim(i);
        auto W = p.weight(i);
        fill(W, i == 1 ? 1.0 / fan_in : std::sqrt(6.0 / fan_in) / cfg.omega_hidden);
        auto b = p.bias(i);
        fill(b, 1.0 / std::sqrt(static_cast<double>(fan_in)));
    }
    for (int i = 1; i <= cfg.hidden_layers; ++i)
        for (int branch = 0; branch < (i == 1 ? 1 : 2); ++branch) {
            auto A = p.tail_weight(i, branch);
            fill(A, hidden_bound);
        }
    return p;
}

namespace detail {
inline void require_scalar_sdf(const TMlpParams& p) {
    if (p.config().output_dim != 1 || p.config().input_dim != 3)
        throw Error("T-MLP evaluation requires input_dim 3 and output_dim 1");
}

template <std::size_t RB, std::size_t CV>
inline void affine_block(const double* W, const double* bias, std::size_t o, std::size_t in, const double* src,
                         std::size_t n, std::size_t j, double* dst) {
    Lane4 acc[RB][CV];
    for (std::size_t r = 0; r < RB; ++r)
        for (std::size_t c = 0; c < CV; ++c) acc[r][c] = Lane4{} + bias[o + r];
    for (std::size_t k = 0; k < in; ++k) {
        const double* s = src + k * n + j;
        Lane4 sv[CV];
        for (std::size_t c = 0; c < CV; ++c) sv[c] = load4(s + 4 * c);
        for (std::size_t r = 0; r < RB; ++r) {
            const Lane4 wk = Lane4{} + W[(o + r) * in + k];
            for (std::size_t c = 0; c < CV; ++c) acc[r][c] = acc[r][c] + wk * sv[c];
        }
    }
    for (std::size_t r = 0; r < RB; ++r)
        for (std::size_t c = 0; c < CV; ++c) store4(dst + (o + r) * n + j + 4 * c, acc[r][c]);
}

/// dst[o][j] = bias[o] + sum_k W[o][k] * src[k][j] for j in [first, n), rows
/// strided by n. Every element accumulates bias first, then k ascending, with
/// separate multiply and add, in both the blocked and the remainder paths.
inline void affine_rows(const double* W, const double* bias, std::size_t rows, std::size_t in,
                        const double* src, std::size_t n, std::size_t first, double* dst) {
    constexpr std::size_t CV = 2, CB = 4 * CV;
    std::size_t j = first;
    for (; j + CB <= n; j += CB) {
        std::size_t o = 0;
        for (; o + 4 <= rows; o += 4) affine_block<4, CV>(W, bias, o, in, src, n, j, dst);
        for (; o < rows; ++o) affine_block<1, CV>(W, bias, o, in, src, n, j, dst);
    }
    for (; j < n; ++j)
        for (std::size_t o = 0; o < rows; ++o) {
            double acc = bias[o];
            for (std::size_t k = 0; k < in; ++k) acc = acc + W[o * in + k] * src[k * n + j];
            dst[o * n + j] = acc;
        }
}
}  // namespace detail

/// Evaluates a T-MLP layer by layer on a block of points held column-wise.
/// step(first) advances columns [first, n) by one layer, so callers can drop
/// finished points from the front of the block. Each column's arithmetic is
/// a fixed sequence independent of the block size and column position.
class BatchEvaluator {
public:
    explicit BatchEvaluator(const TMlpParams& params) : p_(params) { detail::require_scalar_sdf(params); }

    void load(std::span<const Vec3> pts) {
        n_ = pts.size();
        layer_ = 0;
        x_.resize(3 * n_);
        for (std::size_t j = 0; j < n_; ++j)
            for (int k = 0; k < 3; ++k) x_[k * n_ + j] = pts[j][k];
        const std::size_t w = static_cast<std::size_t>(p_.width());
        h_.assign(w * n_, 0.0);
        z_.assign(w * n_, 0.0);
        y_.assign(n_, 0.0);
        t_.assign(n_, 0.0);
        t0_.assign(n_, 0.0);
        t1_.assign(n_, 0.0);
    }

    std::size_t size() const { return n_; }
    int layer() const { return layer_; }

    void step(std::size_t first = 0) {
        if (layer_ >= p_.layers()) throw Error("BatchEvaluator: already at full depth");
        const int i = ++layer_;
        const std::size_t n = n_, w = static_cast<std::size_t>(p_.width());
        const std::size_t in = static_cast<std::size_t>(p_.in_dim(i));
        const double* src = i == 1 ? x_.data() : h_.data();
        const auto W = p_.weight(i);
        const auto b = p_.bias(i);
        detail::affine_rows(W.data(), b.data(), w, in, src, n, first, z_.data());
        const double omega = p_.config().omega(i);
        for (std::size_t o = 0; o < w; ++o)
            detail::sincos_scaled(z_.data() + o * n + first, omega, h_.data() + o * n + first, nullptr, n - first);

        tail_dot(i, 0, first, t0_.data());
        if (i == 1) {
            for (std::size_t j = first; j < n; ++j) t_[j] = t0_[j];
        } else {
            tail_dot(i, 1, first, t1_.data());
            for (std::size_t j = first; j < n; ++j) t_[j] = t0_[j] * t1_[j];
        }
        for (std::size_t j = first; j < n; ++j) y_[j] += t_[j];
    }

    double y(std::size_t j) const { return y_[j]; }
    double tail(std::size_t j) const { return t_[j]; }
    double tail_factor(std::size_t j, int branch) const { return branch == 0 ? t0_[j] : t1_[j]; }
    double hidden(std::size_t unit, std::size_t j) const { return h_[unit * n_ + j]; }
    double preactivation(std::size_t unit, std::size_t j) const { return z_[unit * n_ + j]; }

    /// Swaps the complete state of two columns.
    void swap_columns(std::size_t a, std::size_t b) {
        if (a == b) return;
        const std::size_t w = static_cast<std::size_t>(p_.width());
        for (int k = 0; k < 3; ++k) std::swap(x_[k * n_ + a], x_[k * n_ + b]);
        for (std::size_t o = 0; o < w; ++o) {
            std::swap(h_[o * n_ + a], h_[o * n_ + b]);
            std::swap(z_[o * n_ + a], z_[o * n_ + b]);
        }
        std::swap(y_[a], y_[b]);
        std::swap(t_[a], t_[b]);
        std::swap(t0_[a], t0_[b]);
        std::swap(t1_[a], t1_[b]);
    }

private:
    void tail_dot(int i, int branch, std::size_t first, double* out) const {
        detail::affine_rows(p_.tail_weight(i, branch).data(), p_.tail_bias(i, branch).data(), 1,
                            static_cast<std::size_t>(p_.width()), h_.data(), n_, first, out);
    }

    const TMlpParams& p_;
    std::size_t n_ = 0;
    int layer_ = 0;
    std::vector<double> x_, h_, z_, y_, t_, t0_, t1_;
};

/// Per-layer record of a single-point forward pass; index 0 is layer 1.
struct ForwardTrace {
    std::vector<Eigen::VectorXd> preactivations;
    std::vector<Eigen::VectorXd> hidden;
    std::vector<double> tails;
    std::vector<std::array<double, 2>> tail_factors;  // (t_i0, t_i1); t_10 = t_1, t_11 unused
    std::vector<double> outputs;                      // y_1..y_depth
};

struct ForwardResult {
    double y = 0.0;
    ForwardTrace trace;
};

inline ForwardResult forward(const TMlpParams& params, const Vec3& x, int depth) {
    if (depth < 1 || depth > params.layers())
        throw Error("forward: depth " + std::to_string(depth) + " outside [1, " + std::to_string(params.layers()) + "]");
    BatchEvaluator ev(params);
    const Vec3 pts[1] = {x};
    ev.load(pts);
    ForwardResult r;
    const int w = params.width();
    for (int i = 1; i <= depth; ++i) {
        ev.step();
        Eigen::VectorXd z(w), h(w);
        for (int o = 0; o < w; ++o) {
            z[o] = ev.preactivation(o, 0);
            h[o] = ev.hidden(o, 0);
        }
        r.trace.preactivations.push_back(std::move(z));
        r.trace.hidden.push_back(std::move(h));
        r.trace.tails.push_back(ev.tail(0));
        r.trace.tail_factors.push_back({ev.tail_factor(0, 0), i == 1 ? 0.0 : ev.tail_factor(0, 1)});
        r.trace.outputs.push_back(ev.y(0));
    }
    r.y = ev.y(0);
    return r;
}

/// Cumulative outputs y_1..y_L at one point.
inline std::vector<double> forward_all_depths(const TMlpParams& params, const Vec3& x) {
    return forward(params, x, params.layers()).trace.outputs;
}

inline constexpr std::size_t kEvalBlock = 128;

inline std::vector<double> forward_batch(const TMlpParams& params, std::span<const Vec3> xs, int depth) {
    if (depth < 1 || depth > params.layers()) throw Error("forward_batch: depth out of range");
    detail::require_scalar_sdf(params);
    std::vector<double> out(xs.size());
    parallel_chunks(xs.size(), kEvalBlock, [&](std::size_t b, std::size_t e) {
        BatchEvaluator ev(params);
        ev.load(xs.subspan(b, e - b));
        for (int i = 0; i < depth; ++i) ev.step();
        for (std::size_t j = b; j < e; ++j) out[j] = ev.y(j - b);
    });
    return out;
}

struct LossAndGrad {
    double loss = 0.0;
    std::vector<double> per_depth;  // mean |y_i - gt| for i = 1..L
    TMlpParams grad;
};

namespace detail {

inline void check_training_inputs(std::span<const Vec3> xs, std::span<const double> gts) {
    if (xs.empty() || xs.size() != gts.size()) throw Error("loss: need equal, non-zero numbers of points and targets");
    for (std::size_t j = 0; j < xs.size(); ++j)
        if (!xs[j].allFinite() || !std::isfinite(gts[j])) throw Error("loss: non-finite input at index " + std::to_string(j));
}

}  // namespace detail

/// L_sdf = sum_i mean_x |y_i(x) - gt(x)| and its exact gradient (sign(0) := 0).
inline LossAndGrad loss_and_grad(const TMlpParams& params, std::span<const Vec3> xs, std::span<const double> gts,
                                 bool with_grad = true) {
    detail::check_training_inputs(xs, gts);
    detail::require_scalar_sdf(params);
    const int L = params.layers(), w = params.width();
    const Eigen::Index B = static_cast<Eigen::Index>(xs.size());
    const double inv_b = 1.0 / static_cast<double>(B);

    // Forward pass with the inference kernels so outputs match forward() bit for bit.
    RowMatrix X(3, B);
    Eigen::RowVectorXd gt(B);
    for (Eigen::Index j = 0; j < B; ++j) {
        X.col(j) = xs[j];
        gt[j] = gts[j];
    }
    const std::size_t n = static_cast<std::size_t>(B);
    std::vector<RowMatrix> H(L + 1), C(L + 1);
    std::vector<Eigen::RowVectorXd> T0(L + 1), T1(L + 1);
    Eigen::RowVectorXd y = Eigen::RowVectorXd::Zero(B);
    std::vector<Eigen::RowVectorXd> g(L + 1);
    RowMatrix Z(w, B);

    LossAndGrad out;
    out.per_depth.assign(L, 0.0);
    for (int i = 1; i <= L; ++i) {
        const RowMatrix& prev = i == 1 ? X : H[i - 1];
        detail::affine_rows(params.weight(i).data(), params.bias(i).data(), static_cast<std::size_t>(w),
                            static_cast<std::size_t>(params.in_dim(i)), prev.data(), n, 0, Z.data());
        H[i].resize(w, B);
        C[i].resize(w, B);
        detail::sincos_scaled(Z.data(), params.config().omega(i), H[i].data(), C[i].data(), Z.size());
        auto tail = [&](int branch, Eigen::RowVectorXd& t) {
            t.resize(B);
            detail::affine_rows(params.tail_weight(i, branch).data(), params.tail_bias(i, branch).data(), 1,
                                static_cast<std::size_t>(w), H[i].data(), n, 0, t.data());
        };
        tail(0, T0[i]);
        if (i == 1) {
            y += T0[i];
        } else {
            tail(1, T1[i]);
            y += T0[i].cwiseProduct(T1[i]);
        }
        const Eigen::RowVectorXd r = y - gt;
        out.per_depth[i - 1] = r.cwiseAbs().sum() * inv_b;
        out.loss += out.per_depth[i - 1];
        g[i] = r.unaryExpr([&](double v) { return static_cast<double>(sign_of(v)) * inv_b; });
    }
    if (!with_grad) return out;

    out.grad = TMlpParams(params.config());
    TMlpParams& G = out.grad;
    // dL/dt_i = sum_{k >= i} dL/dy_k
    Eigen::RowVectorXd dt = Eigen::RowVectorXd::Zero(B);
    RowMatrix dH_next;  // W_{i+1}^T dZ_{i+1}
    for (int i = L; i >= 1; --i) {
        dt += g[i];
        RowMatrix dH;
        if (i == 1) {
            G.tail_weight(1, 0) = dt * H[1].transpose();
            G.tail_bias(1, 0)[0] = dt.sum();
            dH = params.tail_weight(1, 0).transpose() * dt;
        } else {
            const Eigen::RowVectorXd d0 = dt.cwiseProduct(T1[i]);
            const Eigen::RowVectorXd d1 = dt.cwiseProduct(T0[i]);
            G.tail_weight(i, 0) = d0 * H[i].transpose();
            G.tail_bias(i, 0)[0] = d0.sum();
            G.tail_weight(i, 1) = d1 * H[i].transpose();
            G.tail_bias(i, 1)[0] = d1.sum();
            dH = params.tail_weight(i, 0).transpose() * d0;
            dH.noalias() += params.tail_weight(i, 1).transpose() * d1;
        }
        if (i < L) dH += dH_next;
        const RowMatrix dZ = dH.cwiseProduct(C[i]) * params.config().omega(i);
        const RowMatrix& prev = i == 1 ? X : H[i - 1];
        G.weight(i) = dZ * prev.transpose();
        G.bias(i) = dZ.rowwise().sum();
        if (i > 1) dH_next = params.weight(i).transpose() * dZ;
    }
    return out;
}

inline double loss_value(const TMlpParams& params, std::span<const Vec3> xs, std::span<const double> gts) {
    return loss_and_grad(params, xs, gts, false).loss;
}

struct AdamState {
    std::vector<double> m, v;
    std::uint64_t step = 0;
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    AdamState() = default;
    explicit AdamState(const TMlpParams& p, double learning_rate = 1e-4)
        : m(p.size(), 0.0), v(p.size(), 0.0), lr(learning_rate) {}
};

/// One bias-corrected Adam update in place.
inline void adam_step(AdamState& s, TMlpParams& params, const TMlpParams& grad) {
    if (s.m.size() != params.size() || s.v.size() != params.size() || grad.size() != params.size())
        throw Error("adam_step: shape mismatch");
    ++s.step;
    const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
    const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
    auto p = params.data();
    auto g = grad.data();
    for (std::size_t k = 0; k < p.size(); ++k) {
        s.m[k] = s.beta1 * s.m[k] + (1.0 - s.beta1) * g[k];
        s.v[k] = s.beta2 * s.v[k] + (1.0 - s.beta2) * g[k] * g[k];
        const double mhat = s.m[k] / c1;
        const double vhat = s.v[k] / c2;
        p[k] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
    }
}

/// Coefficients of the tail written as t_i(h) = h^T Q h + u^T h + s.
struct TailQuadraticForm {
    Eigen::MatrixXd Q;
    Eigen::VectorXd u;
    double s = 0.0;

    double evaluate(const Eigen::VectorXd& h) const { return h.dot(Q * h) + u.dot(h) + s; }
};

/// Multiplicative tail i >= 2 as a rank-1 quadratic form:
/// Q = a b^T, u = d a + c b, s = c d with a = A_i0^T, b = A_i1^T, c = c_i0, d = c_i1.
inline TailQuadraticForm quadratic_form_of_tail(const TMlpParams& params, int i) {
    if (params.config().output_dim != 1)
        throw Error("quadratic_form_of_tail: only scalar tails (output_dim 1) are supported");
    if (i < 2 || i > params.layers()) throw Error("quadratic_form_of_tail: tail index must be in [2, L]");
    const Eigen::VectorXd a = params.tail_weight(i, 0).row(0).transpose();
    const Eigen::VectorXd b = params.tail_weight(i, 1).row(0).transpose();
    const double c = params.tail_bias(i, 0)[0], d = params.tail_bias(i, 1)[0];
    return {a * b.transpose(), d * a + c * b, c * d};
}

// Checkpoint: "SAND", u32 version, config block, u64 value count, f64 values
// in TMlpParams layout order. All little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(std::ostream& out, const TMlpParams& p) {
    const auto& c = p.config();
    detail::write_magic(out, "SAND");
    detail::write_le<std::uint32_t>(out, kCheckpointVersion);
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.hidden_layers));
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.hidden_width));
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.input_dim));
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.output_dim));
    detail::write_le<double>(out, c.omega_first);
    detail::write_le<double>(out, c.omega_hidden);
    detail::write_le<std::uint64_t>(out, c.seed);
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.activation));
    detail::write_le<std::uint64_t>(out, p.size());
    for (double v : p.data()) detail::write_le<double>(out, v);
}

inline TMlpParams load_checkpoint(std::istream& in) {
    detail::expect_magic(in, "SAND", "checkpoint");
    if (auto v = detail::read_le<std::uint32_t>(in, "version"); v != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(v));
    TMlpConfig c;
    c.hidden_layers = static_cast<int>(detail::read_le<std::uint32_t>(in, "config"));
    c.hidden_width = static_cast<int>(detail::read_le<std::uint32_t>(in, "config"));
    c.input_dim = static_cast<int>(detail::read_le<std::uint32_t>(in, "config"));
    c.output_dim = static_cast<int>(detail::read_le<std::uint32_t>(in, "config"));
    c.omega_first = detail::read_le<double>(in, "config");
    c.omega_hidden = detail::read_le<double>(in, "config");
    c.seed = detail::read_le<std::uint64_t>(in, "config");
    const auto act = detail::read_le<std::uint32_t>(in, "config");
    if (act != static_cast<std::uint32_t>(Activation::Sine)) throw FormatError("unknown activation id");
    c.activation = Activation::Sine;
    try {
        c.validate();
    } catch (const Error& e) {
        throw FormatError(std::string("invalid checkpoint config: ") + e.what());
    }
    TMlpParams p(c);
    const auto count = detail::read_le<std::uint64_t>(in, "tensor size");
    if (count != p.size()) throw FormatError("checkpoint tensor size does not match its config");
    for (double& v : p.data()) v = detail::read_le<double>(in, "tensors");
    return p;
}

inline void save_checkpoint(const std::string& path, const TMlpParams& p) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint: " + path);
    save_checkpoint(out, p);
}

inline TMlpParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint: " + path);
    return load_checkpoint(in);
}

}  // namespace sand
