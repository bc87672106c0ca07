#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "hjreach/training.hpp"

using namespace hjreach;

namespace {

NetworkArch tiny_arch(std::vector<int> hidden = {8, 8}) {
    NetworkArch a;
    a.in_dim = 4;
    a.hidden = std::move(hidden);
    return a;
}

// batch at explicit points; terminal flag per sample
Batch manual_batch(const ProblemSpec& spec, const std::vector<std::tuple<double, StateVec, bool>>& pts) {
    Batch b;
    b.n_state = spec.n_state;
    for (const auto& [t, x, term] : pts) {
        b.t.push_back(t);
        b.x.insert(b.x.end(), x.begin(), x.end());
        b.terminal.push_back(term ? 1 : 0);
    }
    return b;
}

}  // namespace

TEST_CASE("sample_batch follows the phase time schedule") {
    auto spec = ProblemSpec::air3d_defaults();
    TrainConfig cfg;
    cfg.samples_per_step = 512;
    cfg.curriculum_steps = 101;

    SECTION("pretrain: every sample at t = T, all terminal") {
        std::mt19937_64 rng(mix64(1, 1));
        auto b = sample_batch(rng, spec, Phase::Pretrain, 0, cfg);
        for (std::size_t i = 0; i < b.size(); ++i) {
            CHECK(b.t[i] == spec.horizon_T);
            CHECK(b.terminal[i] == 1);
        }
    }

    SECTION("curriculum endpoints") {
        CHECK(curriculum_t_min(1.0, 0, 101) == Catch::Approx(1.0));
        CHECK(curriculum_t_min(1.0, 100, 101) == Catch::Approx(0.0).margin(1e-15));
        std::mt19937_64 rng(mix64(1, 2));
        auto b0 = sample_batch(rng, spec, Phase::Curriculum, 0, cfg);
        for (std::size_t i = 0; i < b0.size(); ++i)
            CHECK(b0.t[i] == spec.horizon_T);  // window collapsed to {T}
    }

    SECTION("mid-curriculum empirical minimum near T/2") {
        TrainConfig big = cfg;
        big.samples_per_step = 100000;
        big.curriculum_steps = 3;
        std::mt19937_64 rng(mix64(1, 3));
        auto b = sample_batch(rng, spec, Phase::Curriculum, 1, big);  // t_min = T/2
        double tmin_seen = spec.horizon_T;
        for (std::size_t i = 0; i < b.size(); ++i)
            if (!b.terminal[i]) tmin_seen = std::min(tmin_seen, b.t[i]);
        CHECK(std::abs(tmin_seen - 0.5) <= 0.01);
    }

    SECTION("interior phases reserve the terminal fraction at t = T") {
        std::mt19937_64 rng(mix64(1, 4));
        auto b = sample_batch(rng, spec, Phase::Post, 0, cfg);
        std::size_t n_term = 0;
        for (std::size_t i = 0; i < b.size(); ++i)
            if (b.terminal[i]) {
                ++n_term;
                CHECK(b.t[i] == spec.horizon_T);
            }
        CHECK(n_term == static_cast<std::size_t>(std::lround(0.1 * 512)));
    }

    SECTION("deterministic given the engine state") {
        std::mt19937_64 ra(mix64(7, 9)), rb(mix64(7, 9));
        auto a = sample_batch(ra, spec, Phase::Post, 3, cfg);
        auto b = sample_batch(rb, spec, Phase::Post, 3, cfg);
        CHECK(a.t == b.t);
        CHECK(a.x == b.x);
    }
}

TEST_CASE("compute_loss on the zero network") {
    auto spec = ProblemSpec::air3d_defaults();
    auto arch = tiny_arch();
    NetworkParams zero(arch.param_count(), 0.0);

    SECTION("interior residual |min{0, l}|") {
        // l = -0.25 at the origin, +0.25 at radius 0.5
        auto b = manual_batch(spec, {{0.5, {0.0, 0.0, 0.3}, false},
                                     {0.5, {0.3, 0.4, -1.0}, false}});
        auto bd = compute_loss(zero, arch, spec, b, 150.0, Reduction::Max);
        CHECK(bd.h1 == 0.0);
        CHECK(bd.h2 == Catch::Approx(0.25).margin(1e-15));
        CHECK(bd.argmax_interior == 0);
        CHECK(bd.loss == Catch::Approx(150.0 * 0.25).margin(1e-12));
    }

    SECTION("terminal error |0 - l|") {
        auto b = manual_batch(spec, {{1.0, {0.0, 0.0, 0.0}, true}});
        auto bd = compute_loss(zero, arch, spec, b, 0.0, Reduction::Max);
        CHECK(bd.h1 == Catch::Approx(0.25).margin(1e-15));
        CHECK(bd.h2 == 0.0);
        CHECK(bd.loss == Catch::Approx(0.25).margin(1e-15));
    }
}

TEST_CASE("reduction arithmetic on fixed magnitudes") {
    std::vector<detail::SampleTerm> terms(3);
    terms[0].value = 1.0;
    terms[1].value = 2.0;
    terms[2].value = 0.5;
    for (auto& t : terms) t.interior = true;

    auto rmax = detail::reduce_terms(terms, true, Reduction::Max, 32, false);
    CHECK(rmax.value == 2.0);
    CHECK(rmax.argmax == 1);

    auto rmean = detail::reduce_terms(terms, true, Reduction::Mean, 32, false);
    CHECK(rmean.value == Catch::Approx(7.0 / 6.0).margin(1e-15));

    auto rtop = detail::reduce_terms(terms, true, Reduction::TopkMean, 2, true);
    CHECK(rtop.value == Catch::Approx(1.5).margin(1e-15));
    REQUIRE(rtop.weights.size() == 2);
    CHECK(rtop.weights[0].first == 1);
    CHECK(rtop.weights[1].first == 0);
}

TEST_CASE("max-reduction gradient equals the argmax sample's isolated gradient") {
    auto spec = ProblemSpec::air3d_defaults();
    auto arch = tiny_arch();
    auto params = init_params(arch, 21);

    std::vector<std::tuple<double, StateVec, bool>> pts;
    std::mt19937_64 rng(mix64(5, 5));
    for (int i = 0; i < 16; ++i) {
        StateVec x{2.0 * detail::u01(rng) - 1.0, 2.0 * detail::u01(rng) - 1.0,
                   kPi * (2.0 * detail::u01(rng) - 1.0)};
        pts.push_back({detail::u01(rng), x, false});
    }
    auto batch = manual_batch(spec, pts);

    auto [bd, grad] = loss_param_grad(params, arch, spec, batch, 1.0, Reduction::Max);
    REQUIRE(bd.argmax_interior >= 0);

    auto solo = manual_batch(spec, {pts[bd.argmax_interior]});
    auto [bd1, grad1] = loss_param_grad(params, arch, spec, solo, 1.0, Reduction::Max);
    CHECK(bd1.h2 == Catch::Approx(bd.h2).margin(1e-15));
    REQUIRE(grad.size() == grad1.size());
    for (std::size_t i = 0; i < grad.size(); ++i) REQUIRE(grad[i] == grad1[i]);
}

TEST_CASE("loss gradient agrees with finite differences through the full residual") {
    auto spec = ProblemSpec::air3d_defaults();
    auto arch = tiny_arch({8});
    auto params = init_params(arch, 33);

    std::vector<std::tuple<double, StateVec, bool>> pts;
    std::mt19937_64 rng(mix64(8, 2));
    for (int i = 0; i < 6; ++i) {
        StateVec x{1.6 * detail::u01(rng) - 0.8, 1.6 * detail::u01(rng) - 0.8,
                   2.8 * (2.0 * detail::u01(rng) - 1.0)};
        pts.push_back({0.2 + 0.6 * detail::u01(rng), x, i < 2});
    }
    auto batch = manual_batch(spec, pts);
    const double lambda = 2.5;

    auto [bd, grad] = loss_param_grad(params, arch, spec, batch, lambda, Reduction::Mean);
    (void)bd;

    const double h = 1e-6;
    for (std::size_t i = 0; i < params.size(); i += 5) {
        auto pp = params;
        auto pm = params;
        pp[i] += h;
        pm[i] -= h;
        const double lp = compute_loss(pp, arch, spec, batch, lambda, Reduction::Mean).loss;
        const double lm = compute_loss(pm, arch, spec, batch, lambda, Reduction::Mean).loss;
        const double fd = (lp - lm) / (2.0 * h);
        const double denom = std::max({std::abs(fd), std::abs(grad[i]), 1e-8});
        REQUIRE(std::abs(fd - grad[i]) / denom <= 1e-4);
    }
}

TEST_CASE("compute_loss reports non-finite samples with their index") {
    auto spec = ProblemSpec::air3d_defaults();
    auto arch = tiny_arch({8});
    NetworkParams nan_params(arch.param_count(), std::nan(""));
    auto b = manual_batch(spec, {{1.0, {0.1, 0.1, 0.1}, true}});
    CHECK_THROWS_AS(compute_loss(nan_params, arch, spec, b, 0.0), NumericError);
}

TEST_CASE("pretrain on zero dynamics fits the terminal condition") {
    auto spec = ProblemSpec::zero_defaults();
    NetworkArch arch;
    arch.in_dim = 4;
    arch.hidden = {32, 32};
    TrainConfig cfg;
    cfg.samples_per_step = 256;
    cfg.pretrain_steps = 500;
    cfg.curriculum_steps = 0;
    cfg.post_steps = 0;
    cfg.lr = 1e-3;
    cfg.reduction = Reduction::Mean;
    cfg.seed = 11;

    auto result = train(spec, arch, cfg);
    REQUIRE_FALSE(result.aborted);
    REQUIRE(result.log.size() == 500);
    const double first = result.log.front().h1;
    const double last = result.log.back().h1;
    INFO("h1 first=" << first << " last=" << last);
    CHECK(last <= first / 10.0);

    for (const auto& rec : result.log) {
        CHECK(rec.phase == Phase::Pretrain);
        CHECK(rec.h2 == 0.0);  // lambda = 0 path never evaluates interior residuals
        CHECK(std::abs(rec.loss - rec.h1) <= 1e-12);
    }
}

TEST_CASE("train edge cases and determinism") {
    auto spec = ProblemSpec::air3d_defaults();
    auto arch = tiny_arch();
    TrainConfig cfg;
    cfg.samples_per_step = 64;
    cfg.pretrain_steps = 0;
    cfg.curriculum_steps = 0;
    cfg.post_steps = 0;
    cfg.seed = 3;

    SECTION("zero steps returns the initial parameters and an empty log") {
        auto result = train(spec, arch, cfg);
        CHECK(result.log.empty());
        CHECK(result.final_checkpoint.params == init_params(arch, cfg.seed));
        CHECK(result.steps_completed == 0);
    }

    SECTION("same seed twice gives identical checkpoints; different seed differs") {
        TrainConfig run = cfg;
        run.pretrain_steps = 5;
        run.curriculum_steps = 10;
        run.post_steps = 5;
        auto a = train(spec, arch, run);
        auto b = train(spec, arch, run);
        CHECK(a.final_checkpoint.params == b.final_checkpoint.params);
        CHECK(checkpoint_to_string(a.final_checkpoint) ==
              checkpoint_to_string(b.final_checkpoint));
        run.seed = 4;
        auto c = train(spec, arch, run);
        CHECK(a.final_checkpoint.params != c.final_checkpoint.params);
    }

    SECTION("log invariants: loss identity and monotone curriculum t_min") {
        TrainConfig run = cfg;
        run.pretrain_steps = 3;
        run.curriculum_steps = 12;
        run.post_steps = 3;
        auto result = train(spec, arch, run);
        double prev_tmin = spec.horizon_T;
        for (const auto& rec : result.log) {
            const double lambda = rec.phase == Phase::Pretrain ? 0.0 : run.lambda;
            CHECK(std::abs(rec.loss - (rec.h1 + lambda * rec.h2)) <= 1e-12);
            if (rec.phase == Phase::Curriculum) {
                CHECK(rec.t_min <= prev_tmin + 1e-15);
                prev_tmin = rec.t_min;
            }
        }
        CHECK(result.log.back().phase == Phase::Post);
    }

    SECTION("checkpoint cadence includes step 0 and the final state") {
        TrainConfig run = cfg;
        run.pretrain_steps = 4;
        run.curriculum_steps = 4;
        run.post_steps = 2;
        run.checkpoint_every = 4;
        std::vector<std::int64_t> steps;
        TrainHooks hooks;
        hooks.on_checkpoint = [&](const Checkpoint& c) { steps.push_back(c.meta.step); };
        train(spec, arch, run, hooks);
        CHECK(steps == std::vector<std::int64_t>{0, 4, 8, 10});
    }

    SECTION("non-finite parameters abort with the last good state retained") {
        TrainConfig run = cfg;
        run.post_steps = 5;
        Checkpoint start;
        start.arch = arch;
        start.problem = spec;
        start.params.assign(arch.param_count(), std::nan(""));
        auto result = fine_tune(start, run, 5);
        CHECK(result.aborted);
        CHECK(result.steps_completed == 0);
        CHECK(result.log.empty());
    }
}

TEST_CASE("fine_tune behavior") {
    auto spec = ProblemSpec::air3d_defaults();
    auto arch = tiny_arch({16, 16});
    TrainConfig cfg;
    cfg.samples_per_step = 128;
    cfg.pretrain_steps = 40;
    cfg.curriculum_steps = 80;
    cfg.post_steps = 20;
    cfg.lr = 5e-4;
    cfg.reduction = Reduction::Mean;
    cfg.seed = 19;
    auto base = train(spec, arch, cfg);

    SECTION("zero steps is a no-op that preserves problem and scaling blocks") {
        auto ft = fine_tune(base.final_checkpoint, cfg, 0);
        CHECK(ft.final_checkpoint.params == base.final_checkpoint.params);
        CHECK(checkpoint_to_json(ft.final_checkpoint)["problem"] ==
              checkpoint_to_json(base.final_checkpoint)["problem"]);
        CHECK(checkpoint_to_json(ft.final_checkpoint)["scaling"] ==
              checkpoint_to_json(base.final_checkpoint)["scaling"]);
    }

    SECTION("logs carry the finetune phase and the reduction is forced to max") {
        TrainConfig ft_cfg = cfg;
        ft_cfg.seed = 23;
        auto ft = fine_tune(base.final_checkpoint, ft_cfg, 10);
        REQUIRE(ft.log.size() == 10);
        for (const auto& rec : ft.log) CHECK(rec.phase == Phase::Finetune);

        // forced max: the logged h2 must equal the max-reduction value of the
        // same batch, not the configured mean
        std::mt19937_64 rng(mix64(ft_cfg.seed, 1));
        auto batch = sample_batch(rng, spec, Phase::Finetune, 0, ft_cfg);
        auto bd = compute_loss(base.final_checkpoint.params, arch, spec, batch, ft_cfg.lambda,
                               Reduction::Max);
        CHECK(ft.log.front().h2 == Catch::Approx(bd.h2).margin(1e-12));
    }
}
