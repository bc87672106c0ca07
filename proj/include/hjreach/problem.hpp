#pragma once

// Reachability problem definitions: relative two-vehicle dynamics, input
// bounds, target margin, Hamiltonians (closed form and brute-force sup-inf),
// optimal inputs, and the affine state/time scaling used by the network.
//
// All operations are pure functions of their inputs.

#include <algorithm>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hjreach/common.hpp"

namespace hjreach {

enum class DynamicsId { Air3d, Zero, CustomAffine };

inline std::string to_string(DynamicsId id) {
    switch (id) {
        case DynamicsId::Air3d: return "air3d";
        case DynamicsId::Zero: return "zero";
        case DynamicsId::CustomAffine: return "custom-affine";
    }
    return "?";
}

inline DynamicsId dynamics_id_from_string(const std::string& s) {
    if (s == "air3d") return DynamicsId::Air3d;
    if (s == "zero") return DynamicsId::Zero;
    if (s == "custom-affine") return DynamicsId::CustomAffine;
    throw SchemaError("problem.dynamics: unknown value '" + s + "'");
}

/// Physical state in problem coordinates. For air3d: (x1, x2) relative
/// positions, x3 relative heading in [-pi, pi).
using StateVec = std::vector<double>;

/// Spatial value gradient (costate). For air3d: (p1, p2, p3).
using Costate = std::vector<double>;

struct OptimalInputs {
    double u;  // evader angular rate (maximizer)
    double d;  // pursuer angular rate (minimizer / disturbance)
};

/// Problem description: dynamics family, physical parameters, state box,
/// horizon, periodicity. Acts as the single source of truth for scaling.
struct ProblemSpec {
    DynamicsId dynamics = DynamicsId::Air3d;
    double v_e = 0.75;        // evader speed
    double v_p = 0.75;        // pursuer speed
    double omega_max = 3.0;   // angular-rate bound for both players
    double beta = 0.25;       // collision radius
    std::vector<double> state_lo = {-1.0, -1.0, -kPi};
    std::vector<double> state_hi = {1.0, 1.0, kPi};
    std::vector<char> periodic = {0, 0, 1};
    double horizon_T = 1.0;
    int n_state = 3;

    void validate() const {
        if (n_state < 1) throw std::invalid_argument("problem: n_state must be >= 1");
        if (state_lo.size() != static_cast<size_t>(n_state) ||
            state_hi.size() != static_cast<size_t>(n_state) ||
            periodic.size() != static_cast<size_t>(n_state))
            throw std::invalid_argument("problem: state box arrays must have n_state entries");
        for (int i = 0; i < n_state; ++i) {
            if (!(state_lo[i] < state_hi[i]))
                throw std::invalid_argument("problem: state_lo[" + std::to_string(i) +
                                            "] must be < state_hi[" + std::to_string(i) + "]");
        }
        if (!(omega_max >= 0.0)) throw std::invalid_argument("problem: omega_max must be >= 0");
        if (!(beta > 0.0)) throw std::invalid_argument("problem: beta must be > 0");
        if (!(horizon_T > 0.0)) throw std::invalid_argument("problem: horizon_T must be > 0");
        if (dynamics == DynamicsId::Air3d) {
            if (n_state != 3) throw std::invalid_argument("problem: air3d requires n_state = 3");
            if (periodic[0] || periodic[1] || !periodic[2])
                throw std::invalid_argument("problem: air3d requires periodic = [false,false,true]");
            const double tol = 1e-12;
            if (std::abs(state_lo[2] + kPi) > tol || std::abs(state_hi[2] - kPi) > tol)
                throw std::invalid_argument("problem: air3d heading dimension must span [-pi, pi]");
        }
        if (dynamics == DynamicsId::CustomAffine)
            throw std::invalid_argument(
                "problem: custom-affine dynamics are declared but not provided in this build");
    }

    static ProblemSpec air3d_defaults() { return ProblemSpec{}; }

    static ProblemSpec zero_defaults() {
        ProblemSpec s;
        s.dynamics = DynamicsId::Zero;
        s.periodic = {0, 0, 0};
        return s;
    }
};

namespace detail {
inline void require_finite(std::span<const double> v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + ": non-finite entry");
}
}  // namespace detail

/// Signed distance-like margin l(x) = ||(x1,x2)||_2 - beta. Negative iff x is
/// inside the target set. Heading is not part of the collision distance.
inline double target_margin(const ProblemSpec& spec, std::span<const double> x) {
    detail::require_finite(x, "target_margin");
    if (x.size() < 2) throw std::invalid_argument("target_margin: state needs >= 2 coordinates");
    (void)spec;
    return std::sqrt(sq(x[0]) + sq(x[1])) - spec.beta;
}

/// Relative dynamics f(x, u, d). For air3d, u is the evader rate and d the
/// pursuer rate, both bounded by omega_max.
inline void dynamics(const ProblemSpec& spec, std::span<const double> x, double u, double d,
                     std::span<double> out) {
    detail::require_finite(x, "dynamics");
    if (!std::isfinite(u) || !std::isfinite(d))
        throw std::invalid_argument("dynamics: non-finite input");
    const double bound = spec.omega_max * (1.0 + 1e-12) + 1e-15;
    if (std::abs(u) > bound || std::abs(d) > bound)
        throw std::invalid_argument("dynamics: input exceeds omega_max bound");
    if (out.size() != static_cast<size_t>(spec.n_state))
        throw std::invalid_argument("dynamics: output span size mismatch");
    switch (spec.dynamics) {
        case DynamicsId::Air3d:
            out[0] = -spec.v_e + spec.v_p * std::cos(x[2]) + u * x[1];
            out[1] = spec.v_p * std::sin(x[2]) - u * x[0];
            out[2] = d - u;
            return;
        case DynamicsId::Zero:
            std::fill(out.begin(), out.end(), 0.0);
            return;
        case DynamicsId::CustomAffine:
            throw std::invalid_argument("dynamics: custom-affine not available");
    }
}

inline StateVec dynamics(const ProblemSpec& spec, std::span<const double> x, double u, double d) {
    StateVec out(spec.n_state);
    dynamics(spec, x, u, d, out);
    return out;
}

/// Analytic sup_u inf_d <p, f(x,u,d)>. For air3d:
///   H = p1 (-v_e + v_p cos x3) + p2 v_p sin x3
///       + omega_max |p1 x2 - p2 x1 - p3| - omega_max |p3|.
/// The inner product is affine in each input, so the sup and inf are attained
/// at the rate bounds and this form is exact.
inline double hamiltonian_closed_form(const ProblemSpec& spec, std::span<const double> x,
                                      std::span<const double> p) {
    switch (spec.dynamics) {
        case DynamicsId::Zero:
            return 0.0;
        case DynamicsId::Air3d: {
            const double drift1 = -spec.v_e + spec.v_p * std::cos(x[2]);
            const double drift2 = spec.v_p * std::sin(x[2]);
            const double rot = p[0] * x[1] - p[1] * x[0] - p[2];
            return p[0] * drift1 + p[1] * drift2 +
                   spec.omega_max * std::abs(rot) - spec.omega_max * std::abs(p[2]);
        }
        case DynamicsId::CustomAffine:
            throw std::invalid_argument("hamiltonian_closed_form: custom-affine not available");
    }
    return 0.0;
}

/// Independent oracle: max over n_u evenly spaced u of min over n_d evenly
/// spaced d of <p, f(x,u,d)>. Grids include the interval endpoints.
inline double hamiltonian_bruteforce(const ProblemSpec& spec, std::span<const double> x,
                                     std::span<const double> p, int n_u = 201, int n_d = 201) {
    if (n_u < 2 || n_d < 2)
        throw std::invalid_argument("hamiltonian_bruteforce: need n_u, n_d >= 2");
    const double w = spec.omega_max;
    std::vector<double> fx(spec.n_state);
    double best_u = -std::numeric_limits<double>::infinity();
    for (int iu = 0; iu < n_u; ++iu) {
        const double u = -w + 2.0 * w * iu / (n_u - 1);
        double worst_d = std::numeric_limits<double>::infinity();
        for (int id = 0; id < n_d; ++id) {
            const double d = -w + 2.0 * w * id / (n_d - 1);
            dynamics(spec, x, u, d, fx);
            double ip = 0.0;
            for (int k = 0; k < spec.n_state; ++k) ip += p[k] * fx[k];
            worst_d = std::min(worst_d, ip);
        }
        best_u = std::max(best_u, worst_d);
    }
    return best_u;
}

/// Saddle inputs attaining the closed-form Hamiltonian:
///   u* = omega_max sign(p1 x2 - p2 x1 - p3), d* = -omega_max sign(p3),
/// with sign(0) = +1.
inline OptimalInputs optimal_inputs(const ProblemSpec& spec, std::span<const double> x,
                                    std::span<const double> p) {
    if (spec.dynamics == DynamicsId::Zero) return {spec.omega_max, -spec.omega_max};
    const double rot = p[0] * x[1] - p[1] * x[0] - p[2];
    return {spec.omega_max * sgn_pos(rot), -spec.omega_max * sgn_pos(p[2])};
}

// ---------------------------------------------------------------------------
// State and time scaling. Network inputs live in [0,1] x [-1,1]^n; all
// physical quantities pass through these maps.
// ---------------------------------------------------------------------------

/// d(scaled)/d(physical) for spatial dimension i.
inline double state_scale_factor(const ProblemSpec& spec, int i) {
    return 2.0 / (spec.state_hi[i] - spec.state_lo[i]);
}

/// d(scaled)/d(physical) for time.
inline double time_scale_factor(const ProblemSpec& spec) { return 1.0 / spec.horizon_T; }

inline double scale_time(const ProblemSpec& spec, double t) { return t / spec.horizon_T; }
inline double unscale_time(const ProblemSpec& spec, double ts) { return ts * spec.horizon_T; }

/// Affine map of a physical state into [-1,1]^n. Periodic coordinates are
/// wrapped into their canonical range first; non-periodic coordinates outside
/// the box raise a range error.
inline void scale_state(const ProblemSpec& spec, std::span<const double> x, std::span<double> out) {
    const double tol = 1e-9;
    for (int i = 0; i < spec.n_state; ++i) {
        double xi = x[i];
        if (spec.periodic[i]) {
            xi = wrap_angle(xi);
        } else if (xi < spec.state_lo[i] - tol || xi > spec.state_hi[i] + tol) {
            throw std::out_of_range("scale_state: coordinate " + std::to_string(i) +
                                    " outside the state box");
        }
        const double mid = 0.5 * (spec.state_lo[i] + spec.state_hi[i]);
        out[i] = (xi - mid) * state_scale_factor(spec, i);
    }
}

inline StateVec scale_state(const ProblemSpec& spec, std::span<const double> x) {
    StateVec out(spec.n_state);
    scale_state(spec, x, out);
    return out;
}

inline void unscale_state(const ProblemSpec& spec, std::span<const double> xs,
                          std::span<double> out) {
    for (int i = 0; i < spec.n_state; ++i) {
        const double mid = 0.5 * (spec.state_lo[i] + spec.state_hi[i]);
        out[i] = mid + xs[i] / state_scale_factor(spec, i);
    }
}

inline StateVec unscale_state(const ProblemSpec& spec, std::span<const double> xs) {
    StateVec out(spec.n_state);
    unscale_state(spec, xs, out);
    return out;
}

}  // namespace hjreach
