#pragma once

// Closed-loop pursuit-evasion rollout: value-gradient saddle policies from a
// trained checkpoint or an oracle field stack, fourth-order Runge-Kutta
// integration with zero-order-hold inputs, and empirical verification of the
// BRT membership semantics (safe states stay safe under optimal evasion,
// unsafe states get captured).

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "hjreach/analysis.hpp"
#include "hjreach/checkpoint.hpp"
#include "hjreach/grid_oracle.hpp"
#include "hjreach/problem.hpp"

namespace hjreach {

/// Anything that can report the value and costate at (t, x).
class ValueSource {
public:
    virtual ~ValueSource() = default;
    virtual double value(double t, std::span<const double> x) const = 0;
    virtual Costate costate(double t, std::span<const double> x) const = 0;
};

/// Network-backed source: exact analytic input gradients.
class NetworkValueSource final : public ValueSource {
public:
    explicit NetworkValueSource(Checkpoint ckpt) : ckpt_(std::move(ckpt)) {}

    double value(double t, std::span<const double> x) const override {
        return forward_with_input_grads(ckpt_.params, ckpt_.arch, ckpt_.problem, t, x).value;
    }

    Costate costate(double t, std::span<const double> x) const override {
        return forward_with_input_grads(ckpt_.params, ckpt_.arch, ckpt_.problem, t, x).dx;
    }

    const Checkpoint& checkpoint() const { return ckpt_; }

private:
    Checkpoint ckpt_;
};

/// Oracle-backed source: per-slice node gradients by central differences
/// (periodic wrap, one-sided at non-periodic faces), multilinear interpolation
/// in space and linear interpolation between the two bracketing time slices.
class OracleValueSource final : public ValueSource {
public:
    OracleValueSource(GridSpec grid, std::vector<GridField> fields)
        : grid_(std::move(grid)), fields_(std::move(fields)) {
        if (fields_.empty()) throw std::invalid_argument("oracle source: no fields");
        for (std::size_t k = 1; k < fields_.size(); ++k)
            if (!(fields_[k].time < fields_[k - 1].time))
                throw std::invalid_argument("oracle source: fields must be in decreasing time order");
        grads_.resize(fields_.size());
        for (std::size_t k = 0; k < fields_.size(); ++k) grads_[k] = node_gradients(fields_[k]);
    }

    double value(double t, std::span<const double> x) const override {
        const auto [k_hi, k_lo, w] = bracket(t);
        const double v_hi = interpolate(grid_, fields_[k_hi], x);
        if (k_hi == k_lo) return v_hi;
        return (1.0 - w) * v_hi + w * interpolate(grid_, fields_[k_lo], x);
    }

    Costate costate(double t, std::span<const double> x) const override {
        const auto [k_hi, k_lo, w] = bracket(t);
        Costate p(grid_.dims());
        for (int d = 0; d < grid_.dims(); ++d) {
            const double g_hi = interpolate(grid_, grads_[k_hi][d], x);
            p[d] = k_hi == k_lo ? g_hi
                                : (1.0 - w) * g_hi + w * interpolate(grid_, grads_[k_lo][d], x);
        }
        return p;
    }

    const GridSpec& grid() const { return grid_; }
    const GridField& field_at(std::size_t k) const { return fields_[k]; }
    std::size_t slice_count() const { return fields_.size(); }

private:
    // (higher-time slice index, lower-time slice index, weight of the lower slice)
    std::tuple<std::size_t, std::size_t, double> bracket(double t) const {
        if (t >= fields_.front().time) return {0, 0, 0.0};
        if (t <= fields_.back().time)
            return {fields_.size() - 1, fields_.size() - 1, 0.0};
        std::size_t k = 1;
        while (k < fields_.size() && fields_[k].time > t) ++k;
        const double t_hi = fields_[k - 1].time, t_lo = fields_[k].time;
        const double w = (t_hi - t) / (t_hi - t_lo);
        return {k - 1, k, w};
    }

    std::vector<GridField> node_gradients(const GridField& f) const {
        std::vector<GridField> g(grid_.dims());
        std::vector<int> multi(grid_.dims());
        for (int d = 0; d < grid_.dims(); ++d) {
            g[d].time = f.time;
            g[d].values.resize(grid_.total());
        }
        for (std::size_t idx = 0; idx < grid_.total(); ++idx) {
            grid_.multi_index(idx, multi);
            for (int d = 0; d < grid_.dims(); ++d) {
                const std::size_t s = grid_.stride(d);
                const int nd = grid_.n[d];
                const double dx = grid_.spacing(d);
                double val;
                if (grid_.periodic[d]) {
                    const std::size_t up =
                        multi[d] + 1 < nd ? idx + s : idx - static_cast<std::size_t>(nd - 1) * s;
                    const std::size_t dn =
                        multi[d] > 0 ? idx - s : idx + static_cast<std::size_t>(nd - 1) * s;
                    val = (f.values[up] - f.values[dn]) / (2.0 * dx);
                } else if (multi[d] == 0) {
                    val = (f.values[idx + s] - f.values[idx]) / dx;
                } else if (multi[d] == nd - 1) {
                    val = (f.values[idx] - f.values[idx - s]) / dx;
                } else {
                    val = (f.values[idx + s] - f.values[idx - s]) / (2.0 * dx);
                }
                g[d].values[idx] = val;
            }
        }
        return g;
    }

    GridSpec grid_;
    std::vector<GridField> fields_;
    std::vector<std::vector<GridField>> grads_;  // [slice][dim]
};

using PolicyFn = std::function<OptimalInputs(double t, std::span<const double> x)>;

/// Saddle policy from a value source: costate at (t, x), then the
/// Hamiltonian-attaining inputs (ties resolved by the sign(0) = +1 rule).
inline PolicyFn policy_from_value(const ValueSource& source, const ProblemSpec& spec) {
    return [&source, &spec](double t, std::span<const double> x) {
        const Costate p = source.costate(t, x);
        return optimal_inputs(spec, x, p);
    };
}

struct Trajectory {
    std::vector<double> times;
    std::vector<StateVec> states;
    std::vector<double> u, d;  // one entry per step (one shorter than states)
    double min_margin = 0.0;
    bool truncated = false;  // left the box through a non-periodic face
};

namespace detail {
inline void rk4_step(const ProblemSpec& spec, std::span<const double> x, double u, double d,
                     double dt, std::span<double> out) {
    const int n = spec.n_state;
    std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
    dynamics(spec, x, u, d, k1);
    for (int i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * dt * k1[i];
    dynamics(spec, tmp, u, d, k2);
    for (int i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * dt * k2[i];
    dynamics(spec, tmp, u, d, k3);
    for (int i = 0; i < n; ++i) tmp[i] = x[i] + dt * k3[i];
    dynamics(spec, tmp, u, d, k4);
    for (int i = 0; i < n; ++i)
        out[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    for (int i = 0; i < n; ++i)
        if (spec.periodic[i]) out[i] = wrap_angle(out[i]);
}
}  // namespace detail

/// RK4 with zero-order-hold inputs refreshed each step: u from the evader
/// policy, d from the pursuer policy, both queried at the step start. Runs
/// from t0 to the horizon; leaves early (flagged) when the state exits the box
/// through a non-periodic face.
inline Trajectory integrate(const ProblemSpec& spec, std::span<const double> x0, double t0,
                            const PolicyFn& evader, const PolicyFn& pursuer, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("integrate: dt must be > 0");
    if (t0 < 0.0 || t0 >= spec.horizon_T)
        throw std::invalid_argument("integrate: t0 must lie in [0, T)");

    Trajectory traj;
    StateVec x(x0.begin(), x0.end());
    for (int i = 0; i < spec.n_state; ++i)
        if (spec.periodic[i]) x[i] = wrap_angle(x[i]);
    double t = t0;
    traj.times.push_back(t);
    traj.states.push_back(x);
    traj.min_margin = target_margin(spec, x);

    const double t_end = spec.horizon_T;
    while (t < t_end - 1e-12) {
        bool inside = true;
        for (int i = 0; i < spec.n_state; ++i)
            if (!spec.periodic[i] && (x[i] < spec.state_lo[i] || x[i] > spec.state_hi[i]))
                inside = false;
        if (!inside) {
            traj.truncated = true;
            break;
        }
        const double u = evader(t, x).u;
        const double d = pursuer(t, x).d;
        const double step = std::min(dt, t_end - t);
        StateVec next(spec.n_state);
        detail::rk4_step(spec, x, u, d, step, next);
        t += step;
        x = next;
        traj.u.push_back(u);
        traj.d.push_back(d);
        traj.times.push_back(t);
        traj.states.push_back(x);
        traj.min_margin = std::min(traj.min_margin, target_margin(spec, x));
    }
    return traj;
}

struct BrtSemanticsOptions {
    int n_outside = 50;
    int n_inside = 50;
    double margin = 0.05;
    double dt = 0.01;
    double capture_tolerance = 0.02;
    std::uint64_t seed = 0;
    int max_attempts_factor = 400;
};

struct BrtSemanticsReport {
    int outside_total = 0;
    int outside_safe = 0;  // min_margin > 0 throughout
    int inside_total = 0;
    int inside_captured = 0;  // min_margin <= capture_tolerance
    bool outside_vacuous = false;
    bool inside_vacuous = false;
    double outside_pass_rate = 1.0;
    double inside_capture_rate = 1.0;
};

/// Sample states classified by the oracle at t = 0: V > margin (claimed safe)
/// and V < -margin (claimed unsafe); roll out the saddle policies from both
/// sides and count outcomes.
inline BrtSemanticsReport verify_brt_semantics(const ProblemSpec& spec,
                                               const OracleValueSource& oracle,
                                               const BrtSemanticsOptions& opts = {}) {
    const GridField* t0_field = nullptr;
    for (std::size_t k = 0; k < oracle.slice_count(); ++k)
        if (std::abs(oracle.field_at(k).time) <= 1e-9) t0_field = &oracle.field_at(k);
    if (t0_field == nullptr)
        throw std::invalid_argument("verify_brt_semantics: oracle not solved at t = 0");

    std::mt19937_64 rng(mix64(opts.seed, 0xB127));
    auto draw_state = [&] {
        StateVec x(spec.n_state);
        for (int i = 0; i < spec.n_state; ++i)
            x[i] = spec.state_lo[i] + (spec.state_hi[i] - spec.state_lo[i]) * detail::u01(rng);
        return x;
    };

    std::vector<StateVec> outside, inside;
    const int attempts = opts.max_attempts_factor * (opts.n_outside + opts.n_inside);
    for (int k = 0; k < attempts; ++k) {
        if (static_cast<int>(outside.size()) >= opts.n_outside &&
            static_cast<int>(inside.size()) >= opts.n_inside)
            break;
        auto x = draw_state();
        const double v = interpolate(oracle.grid(), *t0_field, x);
        if (v > opts.margin && static_cast<int>(outside.size()) < opts.n_outside)
            outside.push_back(std::move(x));
        else if (v < -opts.margin && static_cast<int>(inside.size()) < opts.n_inside)
            inside.push_back(std::move(x));
    }

    BrtSemanticsReport report;
    report.outside_vacuous = outside.empty();
    report.inside_vacuous = inside.empty();

    const auto policy = policy_from_value(oracle, spec);
    for (const auto& x0 : outside) {
        auto traj = integrate(spec, x0, 0.0, policy, policy, opts.dt);
        report.outside_total += 1;
        if (traj.min_margin > 0.0) report.outside_safe += 1;
    }
    for (const auto& x0 : inside) {
        auto traj = integrate(spec, x0, 0.0, policy, policy, opts.dt);
        report.inside_total += 1;
        if (traj.min_margin <= opts.capture_tolerance) report.inside_captured += 1;
    }
    if (report.outside_total > 0)
        report.outside_pass_rate =
            static_cast<double>(report.outside_safe) / report.outside_total;
    if (report.inside_total > 0)
        report.inside_capture_rate =
            static_cast<double>(report.inside_captured) / report.inside_total;
    return report;
}

}  // namespace hjreach
