#pragma once

// Sinusoidal fully-connected value network V(t, x) with nested
// differentiation. Three evaluation modes:
//
//   * value-only forward,
//   * extended forward producing the input gradient (dV/dt, grad_x V) by
//     propagating an augmented [value | input-Jacobian] block through the
//     layers,
//   * reverse pass over that extended computation, yielding the parameter
//     gradient of any scalar  w_V * V + w_t * dV/dt_s + sum_i w_i * dV/dx_s_i
//     -- i.e. losses that contain input derivatives remain exactly
//     differentiable with respect to the weights.
//
// The sine frequency scaling lives entirely in the initializer; forward is a
// plain composition of affine layers and sin, with a linear head.

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hjreach/common.hpp"
#include "hjreach/problem.hpp"

namespace hjreach {

struct NetworkArch {
    int in_dim = 4;  // (t, x) with t first
    std::vector<int> hidden = {512, 512, 512};
    double omega0_first = 30.0;
    double omega0_hidden = 1.0;
    int out_dim = 1;

    int layer_count() const { return static_cast<int>(hidden.size()) + 1; }

    int layer_rows(int l) const {
        return l < static_cast<int>(hidden.size()) ? hidden[l] : out_dim;
    }

    int layer_cols(int l) const { return l == 0 ? in_dim : hidden[l - 1]; }

    std::size_t param_count() const {
        std::size_t p = 0;
        for (int l = 0; l < layer_count(); ++l)
            p += static_cast<std::size_t>(layer_rows(l)) * (layer_cols(l) + 1);
        return p;
    }

    void validate() const {
        if (in_dim < 2) throw std::invalid_argument("arch: in_dim must be >= 2");
        if (out_dim != 1) throw std::invalid_argument("arch: out_dim must be 1");
        if (hidden.empty()) throw std::invalid_argument("arch: need at least one hidden layer");
        for (int w : hidden)
            if (w < 1) throw std::invalid_argument("arch: hidden widths must be >= 1");
        if (!(omega0_first > 0.0) || !(omega0_hidden > 0.0))
            throw std::invalid_argument("arch: omega0 factors must be > 0");
    }
};

/// Flat parameter vector. Per-layer layout: weight matrix row-major
/// (rows x cols), then bias column (rows).
using NetworkParams = std::vector<double>;
using ParamGrad = std::vector<double>;

struct LayerLayout {
    std::size_t w_off, b_off;
    int rows, cols;
};

inline std::vector<LayerLayout> layer_layouts(const NetworkArch& arch) {
    std::vector<LayerLayout> out;
    std::size_t off = 0;
    for (int l = 0; l < arch.layer_count(); ++l) {
        LayerLayout ll;
        ll.rows = arch.layer_rows(l);
        ll.cols = arch.layer_cols(l);
        ll.w_off = off;
        ll.b_off = off + static_cast<std::size_t>(ll.rows) * ll.cols;
        off = ll.b_off + ll.rows;
        out.push_back(ll);
    }
    return out;
}

namespace detail {
// Canonical uniform in [0,1) from raw 64-bit draws; keeps initialization
// bit-reproducible across standard library implementations.
inline double u01(std::mt19937_64& rng) { return (rng() >> 11) * 0x1.0p-53; }

inline double usym(std::mt19937_64& rng, double half_width) {
    return (2.0 * u01(rng) - 1.0) * half_width;
}
}  // namespace detail

/// SIREN-style initialization: first layer uniform in
/// [-omega0_first/in_dim, +omega0_first/in_dim], later layers uniform in
/// [-sqrt(6/fan_in)/omega0_hidden, +sqrt(6/fan_in)/omega0_hidden], zero biases.
inline NetworkParams init_params(const NetworkArch& arch, std::uint64_t seed) {
    arch.validate();
    NetworkParams params(arch.param_count(), 0.0);
    std::mt19937_64 rng(mix64(seed, 0x51101a11ULL));
    const auto layouts = layer_layouts(arch);
    for (int l = 0; l < arch.layer_count(); ++l) {
        const auto& ll = layouts[l];
        const double half = l == 0 ? arch.omega0_first / arch.in_dim
                                   : std::sqrt(6.0 / ll.cols) / arch.omega0_hidden;
        for (int j = 0; j < ll.rows * ll.cols; ++j)
            params[ll.w_off + j] = detail::usym(rng, half);
        // biases stay zero
    }
    return params;
}

/// Per-sample network outputs in physical units.
struct EvalBundle {
    double value = 0.0;
    double dt = 0.0;
    std::vector<double> dx;
};

/// Workspace-carrying evaluator. One instance per thread; the tape written by
/// extended_forward_scaled is consumed by backward_params.
class SirenEvaluator {
public:
    explicit SirenEvaluator(NetworkArch arch)
        : arch_(std::move(arch)), layouts_(layer_layouts(arch_)), d_(arch_.in_dim) {
        arch_.validate();
        const int L = arch_.layer_count();
        aug_in_.resize(L);
        aug_z_.resize(L);
        cos_z_.resize(L);
        adj_hi_.resize(0);
        for (int l = 0; l < L; ++l) {
            aug_in_[l].assign(static_cast<std::size_t>(layouts_[l].cols) * (1 + d_), 0.0);
            aug_z_[l].assign(static_cast<std::size_t>(layouts_[l].rows) * (1 + d_), 0.0);
            cos_z_[l].assign(layouts_[l].rows, 0.0);
        }
        act_.assign(max_width(), 0.0);
        act_next_.assign(max_width(), 0.0);
        adj_lo_.assign(static_cast<std::size_t>(max_width()) * (1 + d_), 0.0);
        adj_hi_.assign(static_cast<std::size_t>(max_width()) * (1 + d_), 0.0);
    }

    const NetworkArch& arch() const { return arch_; }

    /// Value-only forward on scaled inputs q = (t_s, x_s...).
    double forward_scaled(std::span<const double> params, std::span<const double> q) {
        check_shapes(params, q);
        const int L = arch_.layer_count();
        double* a = act_.data();
        double* b = act_next_.data();
        for (int k = 0; k < d_; ++k) a[k] = q[k];
        for (int l = 0; l < L; ++l) {
            const auto& ll = layouts_[l];
            const double* W = params.data() + ll.w_off;
            const double* bias = params.data() + ll.b_off;
            for (int j = 0; j < ll.rows; ++j) {
                double z = bias[j];
                const double* wr = W + static_cast<std::size_t>(j) * ll.cols;
                for (int i = 0; i < ll.cols; ++i) z += wr[i] * a[i];
                b[j] = l + 1 < L ? std::sin(z) : z;
            }
            std::swap(a, b);
        }
        return a[0];
    }

    /// Extended forward: writes the scaled-input gradient (length in_dim,
    /// time slot first) and records the tape for backward_params.
    double extended_forward_scaled(std::span<const double> params, std::span<const double> q,
                                   std::span<double> grad_q) {
        check_shapes(params, q);
        if (grad_q.size() != static_cast<std::size_t>(d_))
            throw std::invalid_argument("siren: input-gradient span size mismatch");
        const int L = arch_.layer_count();
        const int C = 1 + d_;
        // aug row layout per unit: [value, d/dq_0, ..., d/dq_{d-1}]
        {
            double* in0 = aug_in_[0].data();
            for (int i = 0; i < d_; ++i) {
                double* row = in0 + static_cast<std::size_t>(i) * C;
                row[0] = q[i];
                for (int k = 0; k < d_; ++k) row[1 + k] = (k == i) ? 1.0 : 0.0;
            }
        }
        for (int l = 0; l < L; ++l) {
            const auto& ll = layouts_[l];
            const double* W = params.data() + ll.w_off;
            const double* bias = params.data() + ll.b_off;
            const double* in = aug_in_[l].data();
            double* zrow = aug_z_[l].data();
            for (int j = 0; j < ll.rows; ++j) {
                double acc[1 + kMaxDim] = {bias[j]};
                for (int c = 1; c < C; ++c) acc[c] = 0.0;
                const double* wr = W + static_cast<std::size_t>(j) * ll.cols;
                for (int i = 0; i < ll.cols; ++i) {
                    const double w = wr[i];
                    const double* arow = in + static_cast<std::size_t>(i) * C;
                    for (int c = 0; c < C; ++c) acc[c] += w * arow[c];
                }
                double* zr = zrow + static_cast<std::size_t>(j) * C;
                for (int c = 0; c < C; ++c) zr[c] = acc[c];
            }
            if (l + 1 < L) {
                double* out = aug_in_[l + 1].data();
                double* cz = cos_z_[l].data();
                for (int j = 0; j < ll.rows; ++j) {
                    const double* zr = zrow + static_cast<std::size_t>(j) * C;
                    double* ar = out + static_cast<std::size_t>(j) * C;
                    const double s = std::sin(zr[0]);
                    const double c = std::cos(zr[0]);
                    cz[j] = c;
                    ar[0] = s;
                    for (int k = 1; k < C; ++k) ar[k] = c * zr[k];
                }
            }
        }
        const double* out = aug_z_[L - 1].data();
        for (int k = 0; k < d_; ++k) grad_q[k] = out[1 + k];
        tape_valid_ = true;
        return out[0];
    }

    /// Reverse pass over the tape left by the last extended_forward_scaled.
    /// Accumulates d(w_value * V + sum_k w_grad_q[k] * dV/dq_k)/d(params) into
    /// grad_accum (same layout and length as params).
    void backward_params(std::span<const double> params, double w_value,
                         std::span<const double> w_grad_q, std::span<double> grad_accum) {
        if (!tape_valid_) throw std::logic_error("siren: backward_params without a forward tape");
        if (grad_accum.size() != params.size())
            throw std::invalid_argument("siren: gradient span size mismatch");
        if (w_grad_q.size() != static_cast<std::size_t>(d_))
            throw std::invalid_argument("siren: seed span size mismatch");
        const int L = arch_.layer_count();
        const int C = 1 + d_;

        // adj_z: adjoint of the augmented pre-activation block of layer l.
        double* adj_z = adj_hi_.data();
        double* adj_in = adj_lo_.data();
        {
            // output layer is affine: adjoint of its aug row is the seed
            adj_z[0] = w_value;
            for (int k = 0; k < d_; ++k) adj_z[1 + k] = w_grad_q[k];
        }
        for (int l = L - 1; l >= 0; --l) {
            const auto& ll = layouts_[l];
            const double* W = params.data() + ll.w_off;
            const double* in = aug_in_[l].data();
            double* gW = grad_accum.data() + ll.w_off;
            double* gb = grad_accum.data() + ll.b_off;

            // parameter adjoints: gW[j,i] += <adj_z row j, aug_in row i>
            for (int j = 0; j < ll.rows; ++j) {
                const double* az = adj_z + static_cast<std::size_t>(j) * C;
                double* gwr = gW + static_cast<std::size_t>(j) * ll.cols;
                for (int i = 0; i < ll.cols; ++i) {
                    const double* arow = in + static_cast<std::size_t>(i) * C;
                    double acc = 0.0;
                    for (int c = 0; c < C; ++c) acc += az[c] * arow[c];
                    gwr[i] += acc;
                }
                gb[j] += az[0];
            }
            if (l == 0) break;

            // adjoint of aug_in[l] rows: adj_in[i,:] = sum_j W[j,i] adj_z[j,:]
            std::fill(adj_in, adj_in + static_cast<std::size_t>(ll.cols) * C, 0.0);
            for (int j = 0; j < ll.rows; ++j) {
                const double* az = adj_z + static_cast<std::size_t>(j) * C;
                const double* wr = W + static_cast<std::size_t>(j) * ll.cols;
                for (int i = 0; i < ll.cols; ++i) {
                    double* ai = adj_in + static_cast<std::size_t>(i) * C;
                    const double w = wr[i];
                    for (int c = 0; c < C; ++c) ai[c] += w * az[c];
                }
            }

            // activation of layer l-1: a = sin(z), G = cos(z) * Gz
            const auto& pl = layouts_[l - 1];
            const double* zlow = aug_z_[l - 1].data();
            const double* cz = cos_z_[l - 1].data();
            for (int j = 0; j < pl.rows; ++j) {
                const double* zr = zlow + static_cast<std::size_t>(j) * C;
                const double* ain = aug_in_[l].data() + static_cast<std::size_t>(j) * C;
                double* az = adj_z + static_cast<std::size_t>(j) * C;
                const double* adj_a = adj_in + static_cast<std::size_t>(j) * C;
                const double sin_z = ain[0];
                const double cos_z = cz[j];
                double zbar = cos_z * adj_a[0];
                for (int k = 1; k < C; ++k) zbar -= sin_z * adj_a[k] * zr[k];
                az[0] = zbar;
                for (int k = 1; k < C; ++k) az[k] = cos_z * adj_a[k];
            }
        }
    }

private:
    static constexpr int kMaxDim = 15;

    int max_width() const {
        int m = arch_.in_dim;
        for (int l = 0; l < arch_.layer_count(); ++l) m = std::max(m, arch_.layer_rows(l));
        return m;
    }

    void check_shapes(std::span<const double> params, std::span<const double> q) const {
        if (params.size() != arch_.param_count())
            throw std::invalid_argument("siren: parameter count " + std::to_string(params.size()) +
                                        " does not match arch P=" +
                                        std::to_string(arch_.param_count()));
        if (q.size() != static_cast<std::size_t>(d_))
            throw std::invalid_argument("siren: input size mismatch");
        if (d_ > kMaxDim + 0) throw std::invalid_argument("siren: in_dim exceeds supported max");
    }

    NetworkArch arch_;
    std::vector<LayerLayout> layouts_;
    int d_;
    std::vector<std::vector<double>> aug_in_, aug_z_;
    std::vector<std::vector<double>> cos_z_;
    std::vector<double> act_, act_next_;
    std::vector<double> adj_lo_, adj_hi_;
    bool tape_valid_ = false;
};

/// Plain forward on scaled inputs (t_s first, then x_s).
inline double forward(std::span<const double> params, const NetworkArch& arch, double t_scaled,
                      std::span<const double> x_scaled) {
    SirenEvaluator ev(arch);
    std::vector<double> q(arch.in_dim);
    q[0] = t_scaled;
    if (x_scaled.size() + 1 != static_cast<std::size_t>(arch.in_dim))
        throw std::invalid_argument("forward: state size does not match arch in_dim");
    std::copy(x_scaled.begin(), x_scaled.end(), q.begin() + 1);
    return ev.forward_scaled(params, q);
}

/// Physical-coordinate evaluation: scales (t, x), runs the extended forward
/// and converts the input gradient to physical units via the scaling Jacobian.
inline EvalBundle forward_with_input_grads(std::span<const double> params, const NetworkArch& arch,
                                           const ProblemSpec& spec, double t_phys,
                                           std::span<const double> x_phys) {
    if (arch.in_dim != spec.n_state + 1)
        throw std::invalid_argument("forward_with_input_grads: arch in_dim != n_state + 1");
    SirenEvaluator ev(arch);
    std::vector<double> q(arch.in_dim), gq(arch.in_dim);
    q[0] = scale_time(spec, t_phys);
    scale_state(spec, x_phys, std::span<double>(q).subspan(1));
    EvalBundle out;
    out.value = ev.extended_forward_scaled(params, q, gq);
    out.dt = gq[0] * time_scale_factor(spec);
    out.dx.resize(spec.n_state);
    for (int i = 0; i < spec.n_state; ++i) out.dx[i] = gq[1 + i] * state_scale_factor(spec, i);
    return out;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<double> m, v;
    std::int64_t step = 0;

    void reset(std::size_t n) {
        m.assign(n, 0.0);
        v.assign(n, 0.0);
        step = 0;
    }
};

/// Standard bias-corrected Adam update; `state.step` is incremented here.
inline void adam_step(NetworkParams& params, std::span<const double> grad, AdamState& state,
                      const AdamConfig& cfg) {
    if (grad.size() != params.size())
        throw std::invalid_argument("adam_step: gradient/parameter size mismatch");
    if (state.m.size() != params.size()) state.reset(params.size());
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grad[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

}  // namespace hjreach
