#pragma once

// Metrics and property checks against the grid oracle: sup/mean error fields,
// perturbed-equation residuals, BRT set comparison, the dynamics-bound
// Lipschitz estimate for the Hamiltonian, properness monotonicity of the
// reformulated operator, and the loss-vs-error convergence series.

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "hjreach/checkpoint.hpp"
#include "hjreach/grid_oracle.hpp"
#include "hjreach/problem.hpp"
#include "hjreach/training.hpp"

namespace hjreach {

inline bool same_problem(const ProblemSpec& a, const ProblemSpec& b) {
    return detail::problem_to_json(a) == detail::problem_to_json(b);
}

/// Network values on every grid node of one time slice.
inline GridField network_field(const Checkpoint& ckpt, const GridSpec& grid, double time,
                               int threads = 1) {
    GridField f;
    f.time = time;
    f.values.resize(grid.total());
    parallel_chunks(grid.total(), threads, [&](std::size_t lo, std::size_t hi, int) {
        SirenEvaluator ev(ckpt.arch);
        std::vector<int> multi(grid.dims());
        std::vector<double> x(grid.dims()), q(ckpt.arch.in_dim);
        for (std::size_t i = lo; i < hi; ++i) {
            grid.multi_index(i, multi);
            grid.node_state(multi, x);
            q[0] = scale_time(ckpt.problem, time);
            scale_state(ckpt.problem, x, std::span<double>(q).subspan(1));
            f.values[i] = ev.forward_scaled(ckpt.params, q);
        }
    });
    return f;
}

struct BrtCompareResult {
    double iou = 1.0;
    double false_safe_rate = 0.0;    // oracle-inside, network-outside / oracle-inside
    double false_unsafe_rate = 0.0;  // network-inside, oracle-outside / network-inside
    bool oracle_empty = false;
    bool network_empty = false;
};

/// Set comparison of a network mask A against an oracle mask B.
inline BrtCompareResult brt_compare(const BrtMask& network, const BrtMask& oracle) {
    if (network.mask.size() != oracle.mask.size())
        throw std::invalid_argument("brt_compare: grid size mismatch");
    std::size_t nA = 0, nB = 0, nI = 0, nU = 0;
    for (std::size_t i = 0; i < network.mask.size(); ++i) {
        const bool a = network.mask[i], b = oracle.mask[i];
        nA += a;
        nB += b;
        nI += a && b;
        nU += a || b;
    }
    BrtCompareResult r;
    r.network_empty = nA == 0;
    r.oracle_empty = nB == 0;
    r.iou = nU == 0 ? 1.0 : static_cast<double>(nI) / static_cast<double>(nU);
    r.false_safe_rate = nB == 0 ? 0.0 : static_cast<double>(nB - nI) / static_cast<double>(nB);
    r.false_unsafe_rate = nA == 0 ? 0.0 : static_cast<double>(nA - nI) / static_cast<double>(nA);
    return r;
}

struct ComparisonSlice {
    double time = 0.0;
    double sup_abs_err = 0.0;
    double mean_abs_err = 0.0;
    BrtCompareResult brt;
};

struct ComparisonReport {
    std::vector<ComparisonSlice> slices;
    double sup_abs_err = 0.0;
    double mean_abs_err = 0.0;
    double argmax_time = 0.0;
    StateVec argmax_state;
};

/// |V_net - V_oracle| statistics over every node of every provided slice,
/// plus per-slice BRT agreement. The checkpoint problem must match the
/// problem the oracle was solved for.
inline ComparisonReport sup_error(const Checkpoint& ckpt, const ProblemSpec& oracle_problem,
                                  const GridSpec& grid, std::span<const GridField> oracle_fields,
                                  int threads = 1) {
    if (!same_problem(ckpt.problem, oracle_problem))
        throw std::invalid_argument("sup_error: checkpoint and oracle problem specs differ");
    if (oracle_fields.empty()) throw std::invalid_argument("sup_error: no oracle fields");

    ComparisonReport report;
    double sum_all = 0.0;
    std::size_t count_all = 0;
    std::size_t argmax_node = 0;
    std::size_t argmax_slice = 0;

    for (std::size_t k = 0; k < oracle_fields.size(); ++k) {
        const auto& of = oracle_fields[k];
        if (of.values.size() != grid.total())
            throw std::invalid_argument("sup_error: field size does not match grid");
        auto nf = network_field(ckpt, grid, of.time, threads);
        ComparisonSlice slice;
        slice.time = of.time;
        double sum = 0.0;
        std::size_t best = 0;
        double best_err = -1.0;
        for (std::size_t i = 0; i < of.values.size(); ++i) {
            const double e = std::abs(nf.values[i] - of.values[i]);
            sum += e;
            if (e > best_err) {
                best_err = e;
                best = i;
            }
        }
        slice.sup_abs_err = best_err;
        slice.mean_abs_err = sum / static_cast<double>(of.values.size());
        slice.brt = brt_compare(extract_brt(nf), extract_brt(of));
        if (best_err > report.sup_abs_err) {
            report.sup_abs_err = best_err;
            argmax_node = best;
            argmax_slice = k;
        }
        sum_all += sum;
        count_all += of.values.size();
        report.slices.push_back(slice);
    }
    report.mean_abs_err = sum_all / static_cast<double>(count_all);
    report.argmax_time = oracle_fields[argmax_slice].time;
    std::vector<int> multi(grid.dims());
    report.argmax_state.resize(grid.dims());
    grid.multi_index(argmax_node, multi);
    grid.node_state(multi, report.argmax_state);
    return report;
}

// ---------------------------------------------------------------------------
// Perturbed-equation residual fields
// ---------------------------------------------------------------------------

struct ResidualFields {
    std::vector<GridField> eps_fields;  // interior residual per requested time
    GridField delta_field;              // terminal mismatch V(T,.) - l
    double eps_sup = 0.0;
    double delta_sup = 0.0;
};

/// Signed residuals of the network on grid nodes:
///   eps(t, x) = min{ dV/dt + H_theta, l(x) - V },  delta(x) = V(T, x) - l(x).
/// Running compute_loss on exactly these nodes with max reduction reproduces
/// (delta_sup, eps_sup) as (h1, h2).
inline ResidualFields residual_fields(const Checkpoint& ckpt, const ProblemSpec& spec,
                                      const GridSpec& grid, std::span<const double> t_samples,
                                      int threads = 1) {
    if (!same_problem(ckpt.problem, spec))
        throw std::invalid_argument("residual_fields: checkpoint and problem specs differ");
    ResidualFields out;
    out.eps_fields.reserve(t_samples.size());

    for (double t : t_samples) {
        GridField eps;
        eps.time = t;
        eps.values.resize(grid.total());
        parallel_chunks(grid.total(), threads, [&](std::size_t lo, std::size_t hi, int) {
            SirenEvaluator ev(ckpt.arch);
            std::vector<int> multi(grid.dims());
            std::vector<double> x(grid.dims()), q(ckpt.arch.in_dim), gq(ckpt.arch.in_dim),
                dx(spec.n_state);
            for (std::size_t i = lo; i < hi; ++i) {
                grid.multi_index(i, multi);
                grid.node_state(multi, x);
                q[0] = scale_time(spec, t);
                scale_state(spec, x, std::span<double>(q).subspan(1));
                const double v = ev.extended_forward_scaled(ckpt.params, q, gq);
                const double dt = gq[0] * time_scale_factor(spec);
                for (int d = 0; d < spec.n_state; ++d)
                    dx[d] = gq[1 + d] * state_scale_factor(spec, d);
                const double h = hamiltonian_closed_form(spec, x, dx);
                eps.values[i] = std::min(dt + h, target_margin(spec, x) - v);
            }
        });
        for (double v : eps.values) out.eps_sup = std::max(out.eps_sup, std::abs(v));
        out.eps_fields.push_back(std::move(eps));
    }

    auto nf = network_field(ckpt, grid, spec.horizon_T, threads);
    auto term = terminal_field(spec, grid);
    out.delta_field.time = spec.horizon_T;
    out.delta_field.values.resize(grid.total());
    for (std::size_t i = 0; i < grid.total(); ++i) {
        out.delta_field.values[i] = nf.values[i] - term.values[i];
        out.delta_sup = std::max(out.delta_sup, std::abs(out.delta_field.values[i]));
    }
    return out;
}

/// Batch over exactly the grid nodes: terminal-designated samples on the
/// terminal slice plus interior samples at every requested time.
inline Batch grid_node_batch(const ProblemSpec& spec, const GridSpec& grid,
                             std::span<const double> t_samples, int stride = 1) {
    Batch b;
    b.n_state = spec.n_state;
    std::vector<int> multi(grid.dims());
    std::vector<double> x(grid.dims());
    auto push = [&](double t, bool terminal) {
        for (std::size_t i = 0; i < grid.total(); i += stride) {
            grid.multi_index(i, multi);
            grid.node_state(multi, x);
            b.t.push_back(t);
            b.x.insert(b.x.end(), x.begin(), x.end());
            b.terminal.push_back(terminal ? 1 : 0);
        }
    };
    push(spec.horizon_T, true);
    for (double t : t_samples) push(t, false);
    return b;
}

// ---------------------------------------------------------------------------
// Dynamics bound and theorem-level property checks
// ---------------------------------------------------------------------------

/// Max of ||f(x, u, d)||_2 over a dense state grid times the input-box
/// corners (the inner product is affine per input, so corners attain the max).
inline double estimate_Cf(const ProblemSpec& spec, int n_grid = 41) {
    if (n_grid < 2) throw std::invalid_argument("estimate_Cf: need n_grid >= 2");
    if (spec.dynamics == DynamicsId::Zero) return 0.0;
    const double w = spec.omega_max;
    const double corners[4][2] = {{-w, -w}, {-w, w}, {w, -w}, {w, w}};
    std::vector<double> x(spec.n_state), f(spec.n_state);
    std::vector<int> multi(spec.n_state, 0);
    double best = 0.0;
    const std::size_t total = [&] {
        std::size_t t = 1;
        for (int d = 0; d < spec.n_state; ++d) t *= n_grid;
        return t;
    }();
    for (std::size_t idx = 0; idx < total; ++idx) {
        std::size_t rem = idx;
        for (int d = spec.n_state - 1; d >= 0; --d) {
            multi[d] = static_cast<int>(rem % n_grid);
            rem /= n_grid;
        }
        for (int d = 0; d < spec.n_state; ++d)
            x[d] = spec.state_lo[d] +
                   (spec.state_hi[d] - spec.state_lo[d]) * multi[d] / (n_grid - 1);
        for (const auto& c : corners) {
            dynamics(spec, x, c[0], c[1], f);
            double norm2 = 0.0;
            for (double v : f) norm2 += v * v;
            best = std::max(best, norm2);
        }
    }
    return std::sqrt(best);
}

struct LipschitzReport {
    bool pass = true;
    std::size_t trials = 0;
    std::size_t violations = 0;
    double cf = 0.0;
    double max_ratio = 0.0;  // max |H(p+eps q) - H(p)| / (eps cf) over trials
};

/// |H(x, p + eps q) - H(x, p)| <= C_f eps for ||q|| <= 1: the Hamiltonian is
/// C_f-Lipschitz in the costate because it is a sup-inf of <p, f> with
/// ||f|| <= C_f.
inline LipschitzReport lipschitz_hamiltonian_check(const ProblemSpec& spec, int trials,
                                                   std::span<const double> eps_list,
                                                   std::uint64_t seed = 0, double slack = 1e-9) {
    LipschitzReport report;
    report.cf = estimate_Cf(spec);
    std::mt19937_64 rng(mix64(seed, 0x11950));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> x(spec.n_state), p(spec.n_state), q(spec.n_state);
    for (int trial = 0; trial < trials; ++trial) {
        for (int d = 0; d < spec.n_state; ++d)
            x[d] = spec.state_lo[d] + (spec.state_hi[d] - spec.state_lo[d]) * detail::u01(rng);
        for (int d = 0; d < spec.n_state; ++d) p[d] = 2.0 * gauss(rng);
        double norm2 = 0.0;
        for (int d = 0; d < spec.n_state; ++d) {
            q[d] = gauss(rng);
            norm2 += q[d] * q[d];
        }
        const double norm = std::sqrt(norm2);
        const double radius = std::pow(detail::u01(rng), 1.0 / spec.n_state);
        for (int d = 0; d < spec.n_state; ++d) q[d] *= norm > 0.0 ? radius / norm : 0.0;

        const double h0 = hamiltonian_closed_form(spec, x, p);
        for (double eps : eps_list) {
            std::vector<double> pp(p);
            for (int d = 0; d < spec.n_state; ++d) pp[d] += eps * q[d];
            const double diff = std::abs(hamiltonian_closed_form(spec, x, pp) - h0);
            report.trials += 1;
            if (eps > 0.0)
                report.max_ratio = std::max(report.max_ratio, diff / (eps * report.cf));
            if (diff > report.cf * eps + slack) report.violations += 1;
        }
    }
    report.pass = report.violations == 0;
    return report;
}

/// Operator of the max-reformulated variational inequality:
///   F(t, x, r, p) = max{ -p_t - H(x, p_x), r - l(x) }.
inline double proper_form_F(const ProblemSpec& spec, std::span<const double> x, double p_t,
                            std::span<const double> p_x, double r) {
    return std::max(-p_t - hamiltonian_closed_form(spec, x, p_x), r - target_margin(spec, x));
}

struct PropernessReport {
    bool pass = true;
    std::size_t trials = 0;
    std::size_t violations = 0;
    double max_violation = 0.0;
};

/// Monotonicity of F in the value argument: r <= s implies F(..r..) <= F(..s..).
inline PropernessReport properness_check(const ProblemSpec& spec, int trials,
                                         std::uint64_t seed = 0) {
    PropernessReport report;
    std::mt19937_64 rng(mix64(seed, 0xF00F));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> x(spec.n_state), px(spec.n_state);
    for (int trial = 0; trial < trials; ++trial) {
        for (int d = 0; d < spec.n_state; ++d)
            x[d] = spec.state_lo[d] + (spec.state_hi[d] - spec.state_lo[d]) * detail::u01(rng);
        for (int d = 0; d < spec.n_state; ++d) px[d] = 2.0 * gauss(rng);
        const double pt = 2.0 * gauss(rng);
        const double a = 4.0 * gauss(rng);
        const double b = 4.0 * gauss(rng);
        const double r = std::min(a, b), s = std::max(a, b);
        const double fr = proper_form_F(spec, x, pt, px, r);
        const double fs = proper_form_F(spec, x, pt, px, s);
        report.trials += 1;
        if (fr > fs) {
            report.violations += 1;
            report.max_violation = std::max(report.max_violation, fr - fs);
        }
    }
    report.pass = report.violations == 0;
    return report;
}

// ---------------------------------------------------------------------------
// Convergence series
// ---------------------------------------------------------------------------

struct ConvergencePoint {
    std::int64_t step = 0;
    double sampled_loss = 0.0;
    double sup_err = 0.0;
};

struct ConvergenceSeries {
    std::vector<ConvergencePoint> points;
    double kendall_tau = 1.0;
    bool degenerate = false;
};

struct KendallResult {
    double tau = 1.0;
    bool degenerate = false;
};

/// Kendall tau-b; a zero-variance input reports tau = 1 with the degenerate
/// flag set.
inline KendallResult kendall_tau(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw std::invalid_argument("kendall_tau: length mismatch");
    const std::size_t n = xs.size();
    std::int64_t concordant = 0, discordant = 0, ties_x = 0, ties_y = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dx = xs[i] - xs[j];
            const double dy = ys[i] - ys[j];
            if (dx == 0.0 && dy == 0.0) continue;
            if (dx == 0.0) {
                ++ties_x;
            } else if (dy == 0.0) {
                ++ties_y;
            } else if ((dx > 0.0) == (dy > 0.0)) {
                ++concordant;
            } else {
                ++discordant;
            }
        }
    }
    const double den_x = static_cast<double>(concordant + discordant + ties_x);
    const double den_y = static_cast<double>(concordant + discordant + ties_y);
    KendallResult r;
    if (den_x == 0.0 || den_y == 0.0) {
        r.degenerate = true;
        r.tau = 1.0;
        return r;
    }
    r.tau = static_cast<double>(concordant - discordant) / std::sqrt(den_x * den_y);
    return r;
}

/// Per checkpoint: max-reduction sampled loss on a fixed held-out node set and
/// sup error against the oracle; plus the rank correlation between the two.
inline ConvergenceSeries convergence_series(std::span<const Checkpoint> checkpoints,
                                            const ProblemSpec& oracle_problem,
                                            const GridSpec& grid,
                                            std::span<const GridField> oracle_fields,
                                            double lambda, int node_stride = 3, int threads = 1) {
    if (checkpoints.size() < 3)
        throw std::invalid_argument("convergence_series: need at least 3 checkpoints");
    for (std::size_t k = 1; k < checkpoints.size(); ++k)
        if (checkpoints[k].meta.step <= checkpoints[k - 1].meta.step)
            throw std::invalid_argument("convergence_series: checkpoint steps must increase");

    std::vector<double> t_samples;
    for (const auto& f : oracle_fields) t_samples.push_back(f.time);
    const Batch held_out =
        grid_node_batch(oracle_problem, grid, t_samples, std::max(1, node_stride));

    ConvergenceSeries series;
    for (const auto& ckpt : checkpoints) {
        ConvergencePoint pt;
        pt.step = ckpt.meta.step;
        pt.sampled_loss = compute_loss(ckpt.params, ckpt.arch, oracle_problem, held_out, lambda,
                                       Reduction::Max, 32, threads)
                              .loss;
        pt.sup_err = sup_error(ckpt, oracle_problem, grid, oracle_fields, threads).sup_abs_err;
        series.points.push_back(pt);
    }
    std::vector<double> losses, errs;
    for (const auto& p : series.points) {
        losses.push_back(p.sampled_loss);
        errs.push_back(p.sup_err);
    }
    const auto kt = kendall_tau(losses, errs);
    series.kendall_tau = kt.tau;
    series.degenerate = kt.degenerate;
    return series;
}

}  // namespace hjreach
