#pragma once

// Dense-grid Lax-Friedrichs solver for the HJI variational inequality
//   min{ dV/dt + H(x, grad V), l(x) - V } = 0,  V(T, x) = l(x),
// integrated backward in time with first-order upwinded dissipation and
// explicit Euler steps under a CFL bound. Produces oracle value fields,
// multilinear off-grid interpolation, and BRT sublevel masks.

#include <cstdint>
#include <span>
#include <vector>

#include "hjreach/common.hpp"
#include "hjreach/parallel.hpp"
#include "hjreach/problem.hpp"

namespace hjreach {

struct GridSpec {
    std::vector<double> lo, hi;
    std::vector<int> n;           // nodes per dimension
    std::vector<char> periodic;   // periodic dims exclude the duplicate endpoint

    int dims() const { return static_cast<int>(n.size()); }

    std::size_t total() const {
        std::size_t t = 1;
        for (int c : n) t *= static_cast<std::size_t>(c);
        return t;
    }

    double spacing(int d) const {
        return (hi[d] - lo[d]) / (periodic[d] ? n[d] : n[d] - 1);
    }

    double node_coord(int d, int j) const { return lo[d] + spacing(d) * j; }

    void node_state(std::span<const int> multi, std::span<double> x) const {
        for (int d = 0; d < dims(); ++d) x[d] = node_coord(d, multi[d]);
    }

    /// Row-major flat index, dimension 0 slowest.
    std::size_t flat_index(std::span<const int> multi) const {
        std::size_t idx = 0;
        for (int d = 0; d < dims(); ++d) idx = idx * n[d] + multi[d];
        return idx;
    }

    void multi_index(std::size_t flat, std::span<int> multi) const {
        for (int d = dims() - 1; d >= 0; --d) {
            multi[d] = static_cast<int>(flat % n[d]);
            flat /= n[d];
        }
    }

    std::size_t stride(int d) const {
        std::size_t s = 1;
        for (int k = d + 1; k < dims(); ++k) s *= static_cast<std::size_t>(n[k]);
        return s;
    }

    void validate() const {
        const std::size_t dims_ = n.size();
        if (dims_ == 0) throw std::invalid_argument("grid: empty");
        if (lo.size() != dims_ || hi.size() != dims_ || periodic.size() != dims_)
            throw std::invalid_argument("grid: array length mismatch");
        for (std::size_t d = 0; d < dims_; ++d) {
            if (n[d] < 3) throw std::invalid_argument("grid: need >= 3 nodes per dimension");
            if (!(lo[d] < hi[d])) throw std::invalid_argument("grid: lo must be < hi");
        }
    }

    /// Grid over the problem's state box with the problem's periodicity.
    static GridSpec over_problem(const ProblemSpec& spec, std::span<const int> counts) {
        GridSpec g;
        g.lo = spec.state_lo;
        g.hi = spec.state_hi;
        g.n.assign(counts.begin(), counts.end());
        g.periodic = spec.periodic;
        g.validate();
        if (g.dims() != spec.n_state)
            throw std::invalid_argument("grid: dimension count does not match problem");
        return g;
    }
};

/// Dense value slice at one time.
struct GridField {
    double time = 0.0;
    std::vector<double> values;
};

/// BRT sublevel mask: inside iff V <= 0.
struct BrtMask {
    double time = 0.0;
    std::vector<char> mask;
};

/// V(T, x) = l(x) at every node, exactly.
inline GridField terminal_field(const ProblemSpec& spec, const GridSpec& grid) {
    grid.validate();
    GridField f;
    f.time = spec.horizon_T;
    f.values.resize(grid.total());
    std::vector<int> multi(grid.dims(), 0);
    std::vector<double> x(grid.dims());
    for (std::size_t idx = 0; idx < f.values.size(); ++idx) {
        grid.multi_index(idx, multi);
        grid.node_state(multi, x);
        f.values[idx] = target_margin(spec, x);
    }
    return f;
}

/// Global Lax-Friedrichs dissipation bounds alpha_i >= sup |dH/dp_i| over the
/// grid box. For air3d:
///   alpha_1 = max|{-v_e + v_p cos x3}| + omega_max max|x2|
///   alpha_2 = v_p + omega_max max|x1|
///   alpha_3 = 2 omega_max
inline std::vector<double> dissipation_bounds(const ProblemSpec& spec, const GridSpec& grid) {
    std::vector<double> alpha(grid.dims(), 0.0);
    if (spec.dynamics == DynamicsId::Zero) return alpha;
    if (spec.dynamics != DynamicsId::Air3d)
        throw std::invalid_argument("dissipation_bounds: unsupported dynamics");
    const double max_x1 = std::max(std::abs(grid.lo[0]), std::abs(grid.hi[0]));
    const double max_x2 = std::max(std::abs(grid.lo[1]), std::abs(grid.hi[1]));
    const double max_drift1 = std::max(std::abs(-spec.v_e + spec.v_p), std::abs(-spec.v_e - spec.v_p));
    alpha[0] = max_drift1 + spec.omega_max * max_x2;
    alpha[1] = spec.v_p + spec.omega_max * max_x1;
    alpha[2] = 2.0 * spec.omega_max;
    return alpha;
}

/// Pointwise dissipation bounds at one state: alpha_i(x) >= sup_p |dH/dp_i|
/// with x fixed. Tighter than the box-global bounds away from the corners,
/// which keeps the scheme monotone while smearing the front far less.
inline void local_dissipation(const ProblemSpec& spec, std::span<const double> x,
                              std::span<double> alpha) {
    switch (spec.dynamics) {
        case DynamicsId::Zero:
            std::fill(alpha.begin(), alpha.end(), 0.0);
            return;
        case DynamicsId::Air3d:
            alpha[0] = std::abs(-spec.v_e + spec.v_p * std::cos(x[2])) +
                       spec.omega_max * std::abs(x[1]);
            alpha[1] = spec.v_p * std::abs(std::sin(x[2])) + spec.omega_max * std::abs(x[0]);
            alpha[2] = 2.0 * spec.omega_max;
            return;
        case DynamicsId::CustomAffine:
            throw std::invalid_argument("local_dissipation: custom-affine not available");
    }
}

namespace detail {

/// One backward Euler step of the upwinded scheme with pointwise-local
/// dissipation, reusing the precomputed global bounds (CFL) and the obstacle
/// (terminal margin) array.
inline void lf_step(const ProblemSpec& spec, const GridSpec& grid,
                    std::span<const double> alpha, std::span<const double> obstacle,
                    std::span<const double> in, std::span<double> out, double dt, int threads) {
    const int dims = grid.dims();
    double cfl_sum = 0.0;
    for (int d = 0; d < dims; ++d) cfl_sum += alpha[d] / grid.spacing(d);
    if (dt * cfl_sum > 1.0 + 1e-9)
        throw std::invalid_argument("step_backward: dt violates the CFL bound");

    parallel_chunks(grid.total(), threads, [&](std::size_t lo_i, std::size_t hi_i, int) {
        std::vector<int> multi(dims);
        std::vector<double> x(dims), p(dims), jump(dims), alpha_loc(dims);
        for (std::size_t idx = lo_i; idx < hi_i; ++idx) {
            grid.multi_index(idx, multi);
            grid.node_state(multi, x);
            const double v = in[idx];
            for (int d = 0; d < dims; ++d) {
                const std::size_t s = grid.stride(d);
                const int nd = grid.n[d];
                const double dx = grid.spacing(d);
                double fwd, bwd;
                if (grid.periodic[d]) {
                    const std::size_t up =
                        multi[d] + 1 < nd ? idx + s : idx - static_cast<std::size_t>(nd - 1) * s;
                    const std::size_t dn =
                        multi[d] > 0 ? idx - s : idx + static_cast<std::size_t>(nd - 1) * s;
                    fwd = (in[up] - v) / dx;
                    bwd = (v - in[dn]) / dx;
                } else if (multi[d] == 0) {
                    fwd = (in[idx + s] - v) / dx;
                    bwd = fwd;  // one-sided at the low face
                } else if (multi[d] == nd - 1) {
                    bwd = (v - in[idx - s]) / dx;
                    fwd = bwd;  // one-sided at the high face
                } else {
                    fwd = (in[idx + s] - v) / dx;
                    bwd = (v - in[idx - s]) / dx;
                }
                p[d] = 0.5 * (fwd + bwd);
                jump[d] = fwd - bwd;
            }
            // Backward march: with s = T - t the PDE reads W_s - H = 0, so the
            // Lax-Friedrichs viscosity enters with a positive sign here; the
            // subtracted-jump form that fits a forward march is anti-diffusive
            // in this direction and blows up.
            local_dissipation(spec, x, alpha_loc);
            double h = hamiltonian_closed_form(spec, x, p);
            for (int d = 0; d < dims; ++d) h += 0.5 * alpha_loc[d] * jump[d];
            const double cand = v + dt * h;
            // tube accumulation: the exact solution is non-increasing backward
            // in time, so the step also takes min with the previous slice
            out[idx] = std::min(std::min(cand, obstacle[idx]), v);
        }
    });
}

}  // namespace detail

/// Single explicit step from t to t - dt. Central costate from one-sided
/// differences, Lax-Friedrichs dissipation, then the obstacle min with l.
inline GridField step_backward(const GridField& field, const ProblemSpec& spec,
                               const GridSpec& grid, double dt, int threads = 1) {
    const auto alpha = dissipation_bounds(spec, grid);
    const auto obstacle = terminal_field(spec, grid);
    GridField out;
    out.time = field.time - dt;
    out.values.resize(field.values.size());
    detail::lf_step(spec, grid, alpha, obstacle.values, field.values, out.values, dt, threads);
    return out;
}

/// Integrate backward from V(T) = l, returning one field per requested time.
/// t_samples must start at T and be strictly decreasing within [0, T].
inline std::vector<GridField> solve_hji(const ProblemSpec& spec, const GridSpec& grid,
                                        std::span<const double> t_samples, double cfl = 0.5,
                                        int threads = 1) {
    spec.validate();
    grid.validate();
    if (!(cfl > 0.0 && cfl < 1.0))
        throw std::invalid_argument("solve_hji: cfl must lie in (0, 1)");
    if (t_samples.empty()) throw std::invalid_argument("solve_hji: no sample times");
    if (std::abs(t_samples[0] - spec.horizon_T) > 1e-12)
        throw std::invalid_argument("solve_hji: t_samples must start at the horizon T");
    for (std::size_t k = 0; k + 1 < t_samples.size(); ++k)
        if (!(t_samples[k] > t_samples[k + 1]))
            throw std::invalid_argument("solve_hji: t_samples must be strictly decreasing");
    if (t_samples.back() < -1e-12)
        throw std::invalid_argument("solve_hji: t_samples must lie in [0, T]");

    const auto alpha = dissipation_bounds(spec, grid);
    const auto obstacle = terminal_field(spec, grid);
    double denom = 0.0;
    for (int d = 0; d < grid.dims(); ++d) denom += alpha[d] / grid.spacing(d);
    const double dt_max = denom > 0.0 ? cfl / denom : std::numeric_limits<double>::infinity();

    std::vector<GridField> out;
    GridField cur = obstacle;
    cur.time = spec.horizon_T;
    out.push_back(cur);

    std::vector<double> next(cur.values.size());
    for (std::size_t k = 1; k < t_samples.size(); ++k) {
        const double target = t_samples[k];
        while (cur.time > target + 1e-14) {
            const double dt = std::min(dt_max, cur.time - target);
            detail::lf_step(spec, grid, alpha, obstacle.values, cur.values, next, dt, threads);
            cur.values.swap(next);
            cur.time -= dt;
        }
        cur.time = target;
        out.push_back(cur);
    }
    return out;
}

/// Multilinear interpolation; exact at nodes, periodic dimensions wrap.
inline double interpolate(const GridSpec& grid, const GridField& field,
                          std::span<const double> x) {
    const int dims = grid.dims();
    int base[8];
    double frac[8];
    if (dims > 8) throw std::invalid_argument("interpolate: too many dimensions");
    for (int d = 0; d < dims; ++d) {
        const double dx = grid.spacing(d);
        if (grid.periodic[d]) {
            const double period = grid.hi[d] - grid.lo[d];
            double u = std::fmod(x[d] - grid.lo[d], period);
            if (u < 0.0) u += period;
            double cell = u / dx;
            if (cell >= grid.n[d]) cell -= grid.n[d];
            base[d] = static_cast<int>(cell);
            frac[d] = cell - base[d];
        } else {
            const double tol = 1e-9 * std::max(1.0, std::abs(grid.hi[d] - grid.lo[d]));
            if (x[d] < grid.lo[d] - tol || x[d] > grid.hi[d] + tol)
                throw std::out_of_range("interpolate: coordinate " + std::to_string(d) +
                                        " outside the grid box");
            double cell = (x[d] - grid.lo[d]) / dx;
            cell = std::min(std::max(cell, 0.0), static_cast<double>(grid.n[d] - 1));
            base[d] = std::min(static_cast<int>(cell), grid.n[d] - 2);
            frac[d] = cell - base[d];
        }
    }
    double acc = 0.0;
    std::vector<int> corner(dims);
    for (int mask = 0; mask < (1 << dims); ++mask) {
        double w = 1.0;
        for (int d = 0; d < dims; ++d) {
            const bool hi_side = mask & (1 << d);
            w *= hi_side ? frac[d] : 1.0 - frac[d];
            int j = base[d] + (hi_side ? 1 : 0);
            if (j >= grid.n[d]) j = grid.periodic[d] ? 0 : grid.n[d] - 1;
            corner[d] = j;
        }
        if (w != 0.0) acc += w * field.values[grid.flat_index(corner)];
    }
    return acc;
}

/// Sublevel mask {V <= 0}; the boundary value 0 counts as inside.
inline BrtMask extract_brt(const GridField& field) {
    BrtMask m;
    m.time = field.time;
    m.mask.resize(field.values.size());
    for (std::size_t i = 0; i < field.values.size(); ++i)
        m.mask[i] = field.values[i] <= 0.0 ? 1 : 0;
    return m;
}

inline std::size_t mask_cardinality(const BrtMask& m) {
    std::size_t c = 0;
    for (char b : m.mask) c += b ? 1 : 0;
    return c;
}

}  // namespace hjreach
