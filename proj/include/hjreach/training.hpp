#pragma once

// Training loop for the sup-norm-loss value network: terminal pre-training,
// time-curriculum interior sampling, configurable residual reduction
// (max / mean / top-k mean), and sup-norm fine-tuning of existing checkpoints.
//
// Per-sample residuals:
//   terminal:  e_i = |V(T, x_i) - l(x_i)|
//   interior:  r_i = |min{ dV/dt + H(x_i, grad_x V), l(x_i) - V }|
// with h1/h2 the configured reduction over e/r and loss = h1 + lambda * h2.

#include <chrono>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "hjreach/checkpoint.hpp"
#include "hjreach/common.hpp"
#include "hjreach/parallel.hpp"
#include "hjreach/problem.hpp"
#include "hjreach/siren.hpp"

namespace hjreach {

enum class Phase { Pretrain, Curriculum, Post, Finetune };

inline std::string to_string(Phase p) {
    switch (p) {
        case Phase::Pretrain: return "pretrain";
        case Phase::Curriculum: return "curriculum";
        case Phase::Post: return "post";
        case Phase::Finetune: return "finetune";
    }
    return "?";
}

enum class Reduction { Max, Mean, TopkMean };

inline std::string to_string(Reduction r) {
    switch (r) {
        case Reduction::Max: return "max";
        case Reduction::Mean: return "mean";
        case Reduction::TopkMean: return "topk_mean";
    }
    return "?";
}

inline Reduction reduction_from_string(const std::string& s) {
    if (s == "max") return Reduction::Max;
    if (s == "mean") return Reduction::Mean;
    if (s == "topk_mean") return Reduction::TopkMean;
    throw SchemaError("loss_reduction: unknown value '" + s + "'");
}

struct TrainConfig {
    int samples_per_step = 2048;  // K
    double lambda = 150.0;
    int pretrain_steps = 1000;
    int curriculum_steps = 3000;
    int post_steps = 1000;
    double lr = 1e-4;
    std::uint64_t seed = 0;
    Reduction reduction = Reduction::Max;
    int topk = 32;
    int checkpoint_every = 500;
    double terminal_fraction = 0.1;  // interior phases keep this share at t = T

    void validate() const {
        if (samples_per_step < 1) throw std::invalid_argument("train: samples_per_step must be >= 1");
        if (!(lambda >= 0.0)) throw std::invalid_argument("train: lambda must be >= 0");
        if (pretrain_steps < 0 || curriculum_steps < 0 || post_steps < 0)
            throw std::invalid_argument("train: step counts must be >= 0");
        if (!(lr > 0.0)) throw std::invalid_argument("train: lr must be > 0");
        if (checkpoint_every < 1) throw std::invalid_argument("train: checkpoint_every must be >= 1");
        if (reduction == Reduction::TopkMean && topk < 1)
            throw std::invalid_argument("train: topk must be >= 1");
        if (!(terminal_fraction >= 0.0 && terminal_fraction <= 1.0))
            throw std::invalid_argument("train: terminal_fraction must be in [0,1]");
    }
};

struct TrainLogRecord {
    std::int64_t step = 0;  // global, 1-based
    Phase phase = Phase::Pretrain;
    double t_min = 0.0;
    double h1 = 0.0;
    double h2 = 0.0;
    double loss = 0.0;
    std::int64_t wall_ms = 0;
};

/// Sampled collocation points, struct-of-arrays.
struct Batch {
    int n_state = 0;
    std::vector<double> t;
    std::vector<double> x;         // size() * n_state, row-major
    std::vector<char> terminal;    // 1 = terminal-designated

    std::size_t size() const { return t.size(); }
    std::span<const double> state(std::size_t i) const {
        return {x.data() + i * n_state, static_cast<std::size_t>(n_state)};
    }
};

/// Lower sampling bound of the curriculum window: T at step 0, linearly down
/// to 0 at the final curriculum step.
inline double curriculum_t_min(double horizon_T, int step_in_phase, int curriculum_steps) {
    if (curriculum_steps <= 1) return 0.0;
    const double frac = static_cast<double>(step_in_phase) / (curriculum_steps - 1);
    return horizon_T * (1.0 - std::min(1.0, std::max(0.0, frac)));
}

inline double phase_t_min(const ProblemSpec& spec, Phase phase, int step_in_phase,
                          const TrainConfig& cfg) {
    switch (phase) {
        case Phase::Pretrain: return spec.horizon_T;
        case Phase::Curriculum:
            return curriculum_t_min(spec.horizon_T, step_in_phase, cfg.curriculum_steps);
        case Phase::Post:
        case Phase::Finetune: return 0.0;
    }
    return 0.0;
}

/// Draw one batch. States are uniform over the box (equivalently the scaled
/// box); times follow the phase schedule. Terminal-designated samples sit at
/// t = T exactly. Deterministic given the engine state.
inline Batch sample_batch(std::mt19937_64& rng, const ProblemSpec& spec, Phase phase,
                          int step_in_phase, const TrainConfig& cfg) {
    const int K = cfg.samples_per_step;
    Batch b;
    b.n_state = spec.n_state;
    b.t.resize(K);
    b.x.resize(static_cast<std::size_t>(K) * spec.n_state);
    b.terminal.resize(K);

    const double t_lo = phase_t_min(spec, phase, step_in_phase, cfg);
    const double T = spec.horizon_T;
    int n_term = K;
    if (phase != Phase::Pretrain) {
        n_term = std::min<int>(K, std::max<int>(1, static_cast<int>(std::lround(
                                                        cfg.terminal_fraction * K))));
        if (cfg.terminal_fraction == 0.0) n_term = 0;
    }
    for (int i = 0; i < K; ++i) {
        const bool term = i < n_term;
        b.terminal[i] = term ? 1 : 0;
        b.t[i] = term ? T : t_lo + (T - t_lo) * detail::u01(rng);
        double* xi = b.x.data() + static_cast<std::size_t>(i) * spec.n_state;
        for (int k = 0; k < spec.n_state; ++k)
            xi[k] = spec.state_lo[k] + (spec.state_hi[k] - spec.state_lo[k]) * detail::u01(rng);
    }
    return b;
}

struct LossBreakdown {
    double h1 = 0.0;
    double h2 = 0.0;
    double loss = 0.0;
    std::ptrdiff_t argmax_terminal = -1;
    std::ptrdiff_t argmax_interior = -1;
    std::size_t n_terminal = 0;
    std::size_t n_interior = 0;
};

namespace detail {

// Per-sample record with everything the reverse pass needs to rebuild the
// subgradient seed without re-deriving branches.
struct SampleTerm {
    double value = 0.0;   // |e_i| or |r_i|
    double sign = 1.0;    // sign of the inner expression
    bool interior = false;
    bool branch_pde = false;  // interior: min picked dt + H
    double fstar[3] = {0, 0, 0};  // dH/dp at the costate (air3d: f(x,u*,d*))
};

inline void eval_sample_terms(std::span<const double> params, const NetworkArch& arch,
                              const ProblemSpec& spec, const Batch& batch, int threads,
                              std::vector<SampleTerm>& terms) {
    terms.resize(batch.size());
    std::vector<std::string> errors(chunk_count(batch.size(), threads));
    parallel_chunks(batch.size(), threads, [&](std::size_t lo, std::size_t hi, int chunk) {
        SirenEvaluator ev(arch);
        std::vector<double> q(arch.in_dim), gq(arch.in_dim);
        const double tsf = time_scale_factor(spec);
        std::vector<double> dx(spec.n_state);
        for (std::size_t i = lo; i < hi; ++i) {
            SampleTerm& st = terms[i];
            const auto x = batch.state(i);
            const double ell = target_margin(spec, x);
            q[0] = scale_time(spec, batch.t[i]);
            scale_state(spec, x, std::span<double>(q).subspan(1));
            if (batch.terminal[i]) {
                const double v = ev.forward_scaled(params, q);
                const double e = v - ell;
                st.value = std::abs(e);
                st.sign = sgn_pos(e);
                st.interior = false;
            } else {
                const double v = ev.extended_forward_scaled(params, q, gq);
                const double dt = gq[0] * tsf;
                for (int k = 0; k < spec.n_state; ++k)
                    dx[k] = gq[1 + k] * state_scale_factor(spec, k);
                const double H = hamiltonian_closed_form(spec, x, dx);
                const double pde = dt + H;
                const double freeze = ell - v;
                const double inner = std::min(pde, freeze);
                st.value = std::abs(inner);
                st.sign = sgn_pos(inner);
                st.interior = true;
                st.branch_pde = pde <= freeze;
                if (st.branch_pde && spec.dynamics == DynamicsId::Air3d) {
                    const auto oi = optimal_inputs(spec, x, dx);
                    double f[3];
                    dynamics(spec, x, oi.u, oi.d, f);
                    for (int k = 0; k < 3; ++k) st.fstar[k] = f[k];
                } else {
                    for (int k = 0; k < 3; ++k) st.fstar[k] = 0.0;
                }
            }
            if (!std::isfinite(st.value) && errors[chunk].empty())
                errors[chunk] = "sample " + std::to_string(i) + ": non-finite loss term";
        }
    });
    for (const auto& e : errors)
        if (!e.empty()) throw NumericError("compute_loss: " + e);
}

struct ReductionResult {
    double value = 0.0;
    std::ptrdiff_t argmax = -1;
    // indices of contributing samples with their weights (d reduction / d term_i)
    std::vector<std::pair<std::size_t, double>> weights;
};

inline ReductionResult reduce_terms(const std::vector<SampleTerm>& terms, bool interior,
                                    Reduction red, int topk, bool want_weights) {
    ReductionResult out;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < terms.size(); ++i)
        if (terms[i].interior == interior) idx.push_back(i);
    if (idx.empty()) return out;

    switch (red) {
        case Reduction::Max: {
            std::size_t best = idx[0];
            for (std::size_t i : idx)
                if (terms[i].value > terms[best].value) best = i;  // ties keep lowest index
            out.value = terms[best].value;
            out.argmax = static_cast<std::ptrdiff_t>(best);
            if (want_weights) out.weights.push_back({best, 1.0});
            return out;
        }
        case Reduction::Mean: {
            double sum = 0.0;
            std::size_t best = idx[0];
            for (std::size_t i : idx) {
                sum += terms[i].value;
                if (terms[i].value > terms[best].value) best = i;
            }
            out.value = sum / static_cast<double>(idx.size());
            out.argmax = static_cast<std::ptrdiff_t>(best);
            if (want_weights) {
                const double w = 1.0 / static_cast<double>(idx.size());
                for (std::size_t i : idx) out.weights.push_back({i, w});
            }
            return out;
        }
        case Reduction::TopkMean: {
            const std::size_t k = std::min<std::size_t>(topk, idx.size());
            std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
                if (terms[a].value != terms[b].value) return terms[a].value > terms[b].value;
                return a < b;
            });
            double sum = 0.0;
            for (std::size_t j = 0; j < k; ++j) sum += terms[idx[j]].value;
            out.value = sum / static_cast<double>(k);
            out.argmax = static_cast<std::ptrdiff_t>(idx[0]);
            if (want_weights) {
                const double w = 1.0 / static_cast<double>(k);
                for (std::size_t j = 0; j < k; ++j) out.weights.push_back({idx[j], w});
            }
            return out;
        }
    }
    return out;
}

}  // namespace detail

/// Evaluate (h1, h2, loss, argmax indices) for one batch.
inline LossBreakdown compute_loss(std::span<const double> params, const NetworkArch& arch,
                                  const ProblemSpec& spec, const Batch& batch, double lambda,
                                  Reduction reduction = Reduction::Max, int topk = 32,
                                  int threads = 1) {
    if (batch.size() == 0) throw std::invalid_argument("compute_loss: empty batch");
    std::vector<detail::SampleTerm> terms;
    detail::eval_sample_terms(params, arch, spec, batch, threads, terms);
    auto rt = detail::reduce_terms(terms, false, reduction, topk, false);
    auto ri = detail::reduce_terms(terms, true, reduction, topk, false);
    LossBreakdown out;
    out.h1 = rt.value;
    out.h2 = ri.value;
    out.loss = out.h1 + lambda * out.h2;
    out.argmax_terminal = rt.argmax;
    out.argmax_interior = ri.argmax;
    for (const auto& t : terms) (t.interior ? out.n_interior : out.n_terminal) += 1;
    return out;
}

/// Loss plus its parameter gradient. The gradient of a max reduction is the
/// gradient of the single argmax sample's term (lowest index on ties); mean
/// and top-k spread weights accordingly. Interior seeds follow the active
/// branch of min{dt V + H, l - V} with dH/dp = f(x, u*, d*).
inline std::pair<LossBreakdown, ParamGrad> loss_param_grad(
    std::span<const double> params, const NetworkArch& arch, const ProblemSpec& spec,
    const Batch& batch, double lambda, Reduction reduction = Reduction::Max, int topk = 32,
    int threads = 1) {
    if (batch.size() == 0) throw std::invalid_argument("loss_param_grad: empty batch");
    std::vector<detail::SampleTerm> terms;
    detail::eval_sample_terms(params, arch, spec, batch, threads, terms);
    auto rt = detail::reduce_terms(terms, false, reduction, topk, true);
    auto ri = detail::reduce_terms(terms, true, reduction, topk, lambda != 0.0);

    LossBreakdown bd;
    bd.h1 = rt.value;
    bd.h2 = ri.value;
    bd.loss = bd.h1 + lambda * bd.h2;
    bd.argmax_terminal = rt.argmax;
    bd.argmax_interior = ri.argmax;
    for (const auto& t : terms) (t.interior ? bd.n_interior : bd.n_terminal) += 1;

    // gather contributing samples: (index, seed scale)
    std::vector<std::pair<std::size_t, double>> contrib = rt.weights;
    if (lambda != 0.0)
        for (auto [i, w] : ri.weights) contrib.push_back({i, lambda * w});

    ParamGrad grad(params.size(), 0.0);
    const int nchunks = chunk_count(contrib.size(), threads);
    std::vector<ParamGrad> partial(std::max(0, nchunks - 1));
    for (auto& p : partial) p.assign(params.size(), 0.0);
    parallel_chunks(contrib.size(), threads, [&](std::size_t lo, std::size_t hi, int chunk) {
        SirenEvaluator ev(arch);
        std::vector<double> q(arch.in_dim), gq(arch.in_dim), seed(arch.in_dim);
        std::span<double> into = chunk == 0 ? std::span<double>(grad) : std::span<double>(partial[chunk - 1]);
        for (std::size_t c = lo; c < hi; ++c) {
            const auto [i, w] = contrib[c];
            const auto& st = terms[i];
            const auto x = batch.state(i);
            q[0] = scale_time(spec, batch.t[i]);
            scale_state(spec, x, std::span<double>(q).subspan(1));
            ev.extended_forward_scaled(params, q, gq);
            double w_value = 0.0;
            std::fill(seed.begin(), seed.end(), 0.0);
            if (!st.interior) {
                w_value = w * st.sign;  // d|V - l|/dV
            } else if (st.branch_pde) {
                seed[0] = w * st.sign * time_scale_factor(spec);
                for (int k = 0; k < spec.n_state; ++k)
                    seed[1 + k] = w * st.sign * st.fstar[k] * state_scale_factor(spec, k);
            } else {
                w_value = -w * st.sign;  // d|l - V|/dV
            }
            ev.backward_params(params, w_value, seed, into);
        }
    });
    for (const auto& p : partial)
        for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += p[j];
    return {bd, grad};
}

// ---------------------------------------------------------------------------
// Training driver
// ---------------------------------------------------------------------------

struct TrainHooks {
    std::function<void(const TrainLogRecord&)> on_log;
    /// Called with the initial parameters (step 0), every checkpoint_every
    /// steps, and once more for the final state.
    std::function<void(const Checkpoint&)> on_checkpoint;
};

struct TrainResult {
    Checkpoint final_checkpoint;
    std::vector<TrainLogRecord> log;
    bool aborted = false;
    std::int64_t steps_completed = 0;
};

namespace detail {

struct PhasePlan {
    Phase phase;
    int steps;
};

inline TrainResult run_phases(const ProblemSpec& spec, const NetworkArch& arch,
                              const TrainConfig& cfg, std::span<const PhasePlan> plan,
                              NetworkParams params, const TrainHooks& hooks, int threads,
                              bool measure_wall) {
    spec.validate();
    arch.validate();
    cfg.validate();
    if (arch.in_dim != spec.n_state + 1)
        throw std::invalid_argument("train: arch.in_dim must equal n_state + 1");

    AdamState opt;
    opt.reset(params.size());
    AdamConfig adam;
    adam.lr = cfg.lr;

    TrainResult result;
    std::int64_t total = 0;
    for (const auto& p : plan) total += p.steps;

    auto make_ckpt = [&](std::int64_t step, double loss) {
        Checkpoint c;
        c.arch = arch;
        c.problem = spec;
        c.params = params;
        c.optimizer = opt;
        c.meta = {step, cfg.seed, loss};
        return c;
    };

    if (hooks.on_checkpoint && total > 0) hooks.on_checkpoint(make_ckpt(0, 0.0));

    NetworkParams last_good = params;
    std::int64_t global_step = 0;
    double last_loss = 0.0;
    for (const auto& ph : plan) {
        const bool pretrain = ph.phase == Phase::Pretrain;
        const double lambda = pretrain ? 0.0 : cfg.lambda;
        const Reduction red = ph.phase == Phase::Finetune ? Reduction::Max : cfg.reduction;
        for (int s = 0; s < ph.steps; ++s) {
            global_step += 1;
            const auto t0 = std::chrono::steady_clock::now();
            std::mt19937_64 rng(mix64(cfg.seed, static_cast<std::uint64_t>(global_step)));
            Batch batch = sample_batch(rng, spec, ph.phase, s, cfg);

            LossBreakdown bd;
            ParamGrad grad;
            bool bad = false;
            try {
                auto lg = loss_param_grad(params, arch, spec, batch, lambda, red, cfg.topk, threads);
                bd = lg.first;
                grad = std::move(lg.second);
                if (!std::isfinite(bd.loss)) bad = true;
            } catch (const NumericError&) {
                bad = true;
            }
            if (bad) {
                result.aborted = true;
                params = last_good;
                break;
            }
            last_good = params;
            adam_step(params, grad, opt, adam);
            last_loss = bd.loss;

            TrainLogRecord rec;
            rec.step = global_step;
            rec.phase = ph.phase;
            rec.t_min = phase_t_min(spec, ph.phase, s, cfg);
            rec.h1 = bd.h1;
            rec.h2 = bd.h2;
            rec.loss = bd.loss;
            rec.wall_ms = measure_wall
                              ? std::chrono::duration_cast<std::chrono::milliseconds>(
                                    std::chrono::steady_clock::now() - t0)
                                    .count()
                              : 0;
            result.log.push_back(rec);
            if (hooks.on_log) hooks.on_log(rec);
            if (hooks.on_checkpoint && global_step % cfg.checkpoint_every == 0 &&
                global_step != total)
                hooks.on_checkpoint(make_ckpt(global_step, bd.loss));
        }
        if (result.aborted) break;
    }
    result.steps_completed = global_step - (result.aborted ? 1 : 0);
    result.final_checkpoint = make_ckpt(result.steps_completed, last_loss);
    if (hooks.on_checkpoint) hooks.on_checkpoint(result.final_checkpoint);
    return result;
}

}  // namespace detail

/// Full run: pretrain (lambda forced to 0, terminal-only batches), then
/// curriculum, then post. Deterministic given (seed, config) on the serial
/// path. Numeric divergence aborts and retains the last good parameters.
inline TrainResult train(const ProblemSpec& spec, const NetworkArch& arch, const TrainConfig& cfg,
                         const TrainHooks& hooks = {}, int threads = 1, bool measure_wall = false) {
    const detail::PhasePlan plan[] = {{Phase::Pretrain, cfg.pretrain_steps},
                                      {Phase::Curriculum, cfg.curriculum_steps},
                                      {Phase::Post, cfg.post_steps}};
    return detail::run_phases(spec, arch, cfg, plan, init_params(arch, cfg.seed), hooks, threads,
                              measure_wall);
}

/// Resume training from a checkpoint with the reduction forced to max. The
/// checkpoint's problem and arch blocks are carried over verbatim; the
/// optimizer restarts fresh for the new objective.
inline TrainResult fine_tune(const Checkpoint& start, const TrainConfig& cfg, int steps,
                             const TrainHooks& hooks = {}, int threads = 1,
                             bool measure_wall = false) {
    if (steps < 0) throw std::invalid_argument("fine_tune: steps must be >= 0");
    if (start.params.size() != start.arch.param_count())
        throw SchemaError("fine_tune: checkpoint parameter count does not match its arch");
    const detail::PhasePlan plan[] = {{Phase::Finetune, steps}};
    return detail::run_phases(start.problem, start.arch, cfg, plan, start.params, hooks, threads,
                              measure_wall);
}

}  // namespace hjreach
