#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "hjreach/analysis.hpp"

using namespace hjreach;

namespace {

Checkpoint random_checkpoint(const ProblemSpec& spec, std::vector<int> hidden, std::uint64_t seed) {
    Checkpoint c;
    c.arch.in_dim = spec.n_state + 1;
    c.arch.hidden = std::move(hidden);
    c.problem = spec;
    c.params = init_params(c.arch, seed);
    c.meta = {0, seed, 0.0};
    return c;
}

GridSpec small_grid(const ProblemSpec& spec, int n) {
    const std::vector<int> counts(spec.n_state, n);
    return GridSpec::over_problem(spec, counts);
}

}  // namespace

TEST_CASE("sup_error: exact match and constant offset") {
    auto spec = ProblemSpec::air3d_defaults();
    auto grid = small_grid(spec, 7);
    auto ckpt = random_checkpoint(spec, {8, 8}, 42);

    // oracle slices fabricated from the network itself
    auto nf1 = network_field(ckpt, grid, 1.0);
    auto nf0 = network_field(ckpt, grid, 0.5);

    SECTION("network reproducing the oracle gives zero error") {
        std::vector<GridField> fields{nf1, nf0};
        auto report = sup_error(ckpt, spec, grid, fields);
        CHECK(report.sup_abs_err == 0.0);
        CHECK(report.mean_abs_err == 0.0);
        for (const auto& s : report.slices) {
            CHECK(s.sup_abs_err == 0.0);
            CHECK(s.brt.iou == 1.0);
        }
    }

    SECTION("constant 0.1 offset shows up as sup = mean = 0.1") {
        auto shifted = nf1;
        for (auto& v : shifted.values) v += 0.1;
        std::vector<GridField> fields{shifted};
        auto report = sup_error(ckpt, spec, grid, fields);
        CHECK(report.sup_abs_err == Catch::Approx(0.1).margin(1e-12));
        CHECK(report.mean_abs_err == Catch::Approx(0.1).margin(1e-12));
        CHECK(report.sup_abs_err >= report.mean_abs_err - 1e-15);
    }

    SECTION("problem mismatch is rejected") {
        auto other = spec;
        other.beta = 0.3;
        std::vector<GridField> fields{nf1};
        CHECK_THROWS_AS(sup_error(ckpt, other, grid, fields), std::invalid_argument);
    }
}

TEST_CASE("brt_compare set arithmetic") {
    auto mask_of = [](std::vector<char> bits) {
        BrtMask m;
        m.time = 0.0;
        m.mask = std::move(bits);
        return m;
    };

    SECTION("identical masks") {
        auto a = mask_of({1, 0, 1, 1, 0});
        auto r = brt_compare(a, a);
        CHECK(r.iou == 1.0);
        CHECK(r.false_safe_rate == 0.0);
        CHECK(r.false_unsafe_rate == 0.0);
    }

    SECTION("disjoint equal-size masks") {
        auto a = mask_of({1, 1, 0, 0});
        auto b = mask_of({0, 0, 1, 1});
        auto r = brt_compare(a, b);
        CHECK(r.iou == 0.0);
        CHECK(r.false_safe_rate == 1.0);
        CHECK(r.false_unsafe_rate == 1.0);
    }

    SECTION("one extra node over a 100-node oracle") {
        std::vector<char> b(200, 0);
        for (int i = 0; i < 100; ++i) b[i] = 1;
        auto a = b;
        a[150] = 1;
        auto r = brt_compare(mask_of(a), mask_of(b));
        CHECK(r.iou == Catch::Approx(100.0 / 101.0).margin(1e-15));
        CHECK(r.false_safe_rate == 0.0);
        CHECK(r.false_unsafe_rate == Catch::Approx(1.0 / 101.0).margin(1e-15));
    }

    SECTION("swap symmetry: iou invariant, rates exchange") {
        auto a = mask_of({1, 1, 0, 1, 0, 0});
        auto b = mask_of({1, 0, 1, 1, 1, 0});
        auto r1 = brt_compare(a, b);
        auto r2 = brt_compare(b, a);
        CHECK(r1.iou == r2.iou);
        CHECK(r1.false_safe_rate == r2.false_unsafe_rate);
        CHECK(r1.false_unsafe_rate == r2.false_safe_rate);
    }

    SECTION("empty masks") {
        auto e = mask_of({0, 0, 0});
        auto r = brt_compare(e, e);
        CHECK(r.iou == 1.0);
        CHECK(r.oracle_empty);
        CHECK(r.network_empty);
        CHECK(r.false_safe_rate == 0.0);
        CHECK_THROWS_AS(brt_compare(e, mask_of({0, 0})), std::invalid_argument);
    }
}

TEST_CASE("residual fields are consistent with compute_loss on grid nodes") {
    auto spec = ProblemSpec::air3d_defaults();
    auto grid = small_grid(spec, 5);
    auto ckpt = random_checkpoint(spec, {8}, 7);
    const std::vector<double> ts{1.0, 0.6, 0.2};

    auto rf = residual_fields(ckpt, spec, grid, ts);
    REQUIRE(rf.eps_fields.size() == 3);
    CHECK(rf.eps_sup > 0.0);

    auto batch = grid_node_batch(spec, grid, ts);
    auto bd = compute_loss(ckpt.params, ckpt.arch, spec, batch, 150.0, Reduction::Max);
    CHECK(bd.h1 == Catch::Approx(rf.delta_sup).margin(1e-12));
    CHECK(bd.h2 == Catch::Approx(rf.eps_sup).margin(1e-12));

    // sup fields really are the max abs of their arrays
    double eps_max = 0.0;
    for (const auto& f : rf.eps_fields)
        for (double v : f.values) eps_max = std::max(eps_max, std::abs(v));
    CHECK(rf.eps_sup == eps_max);
}

TEST_CASE("zero network: terminal mismatch equals the margin field") {
    auto spec = ProblemSpec::air3d_defaults();
    auto grid = small_grid(spec, 7);
    auto ckpt = random_checkpoint(spec, {8}, 1);
    std::fill(ckpt.params.begin(), ckpt.params.end(), 0.0);

    const std::vector<double> ts{1.0};
    auto rf = residual_fields(ckpt, spec, grid, ts);
    auto term = terminal_field(spec, grid);
    double max_abs_ell = 0.0;
    for (double v : term.values) max_abs_ell = std::max(max_abs_ell, std::abs(v));
    CHECK(rf.delta_sup == Catch::Approx(max_abs_ell).margin(1e-15));
}

TEST_CASE("estimate_Cf properties") {
    auto zspec = ProblemSpec::zero_defaults();
    CHECK(estimate_Cf(zspec) == 0.0);

    auto spec = ProblemSpec::air3d_defaults();
    const double cf = estimate_Cf(spec);
    // witness: f((1,1,pi), u=-3, d=3) = (-4.5, 3, 6)
    const double witness = std::sqrt(4.5 * 4.5 + 3.0 * 3.0 + 6.0 * 6.0);
    CHECK(cf >= witness - 1e-9);

    auto faster = spec;
    faster.omega_max = 4.0;
    CHECK(estimate_Cf(faster) > cf);
}

TEST_CASE("Hamiltonian Lipschitz bound in the costate") {
    auto spec = ProblemSpec::air3d_defaults();

    SECTION("zero perturbation changes nothing") {
        const double eps0[] = {0.0};
        auto report = lipschitz_hamiltonian_check(spec, 100, eps0, 3);
        CHECK(report.pass);
        CHECK(report.max_ratio == 0.0);
    }

    SECTION("random trials at the specified scales") {
        const double eps[] = {1e-3, 1e-1, 1.0};
        auto report = lipschitz_hamiltonian_check(spec, 10000, eps, 5);
        INFO("max ratio " << report.max_ratio << " cf " << report.cf);
        CHECK(report.pass);
        CHECK(report.violations == 0);
        CHECK(report.max_ratio <= 1.0 + 1e-9);
    }

    SECTION("adversarial direction approaches but does not exceed C_f") {
        // locate the norm-maximizing (x, input-corner) pair on the C_f grid
        const int n = 41;
        const double w = spec.omega_max;
        const double corners[4][2] = {{-w, -w}, {-w, w}, {w, -w}, {w, w}};
        StateVec best_x(3);
        double best_u = 0, best_d = 0, best_norm = -1.0;
        StateVec x(3), f(3);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k) {
                    x[0] = -1.0 + 2.0 * i / (n - 1);
                    x[1] = -1.0 + 2.0 * j / (n - 1);
                    x[2] = -kPi + 2.0 * kPi * k / (n - 1);
                    for (const auto& c : corners) {
                        dynamics(spec, x, c[0], c[1], f);
                        const double norm = std::sqrt(f[0] * f[0] + f[1] * f[1] + f[2] * f[2]);
                        if (norm > best_norm) {
                            best_norm = norm;
                            best_x = x;
                            best_u = c[0];
                            best_d = c[1];
                        }
                    }
                }

        // costate whose saddle inputs are exactly (best_u, best_d)
        const double M = 10.0;
        Costate p(3);
        p[2] = -sgn_pos(best_d);
        p[0] = sgn_pos(best_u) * best_x[1] * M;
        p[1] = -sgn_pos(best_u) * best_x[0] * M;
        auto oi = optimal_inputs(spec, best_x, p);
        REQUIRE(oi.u == best_u);
        REQUIRE(oi.d == best_d);

        dynamics(spec, best_x, best_u, best_d, f);
        Costate q(3);
        for (int d = 0; d < 3; ++d) q[d] = f[d] / best_norm;

        const double eps = 1e-6;
        Costate pp(p);
        for (int d = 0; d < 3; ++d) pp[d] += eps * q[d];
        const double diff =
            std::abs(hamiltonian_closed_form(spec, best_x, pp) - hamiltonian_closed_form(spec, best_x, p));
        const double cf = estimate_Cf(spec, n);
        const double ratio = diff / (eps * cf);
        INFO("ratio " << ratio);
        CHECK(ratio >= 0.999);
        CHECK(ratio <= 1.0 + 1e-6);
    }
}

TEST_CASE("properness of the reformulated operator") {
    auto spec = ProblemSpec::air3d_defaults();

    SECTION("equal value arguments give equal F") {
        StateVec x{0.3, -0.4, 1.2};
        Costate px{0.5, -1.0, 0.25};
        const double f1 = proper_form_F(spec, x, 0.7, px, 1.5);
        const double f2 = proper_form_F(spec, x, 0.7, px, 1.5);
        CHECK(f1 == f2);
    }

    SECTION("inactive value branch: F constant in r") {
        StateVec x{0.3, -0.4, 1.2};
        Costate px{0.5, -1.0, 0.25};
        const double f1 = proper_form_F(spec, x, -50.0, px, -100.0);
        const double f2 = proper_form_F(spec, x, -50.0, px, -90.0);
        CHECK(f1 == f2);  // -p_t - H dominates both
    }

    SECTION("random monotonicity trials") {
        auto report = properness_check(spec, 10000, 9);
        CHECK(report.pass);
        CHECK(report.violations == 0);
        CHECK(report.trials == 10000);
    }
}

TEST_CASE("kendall tau") {
    const double a[] = {3.0, 2.0, 1.0};
    const double b[] = {0.3, 0.2, 0.1};
    CHECK(kendall_tau(a, b).tau == Catch::Approx(1.0));

    const double c[] = {1.0, 2.0, 3.0};
    CHECK(kendall_tau(c, b).tau == Catch::Approx(-1.0));

    const double flat[] = {1.0, 1.0, 1.0};
    auto r = kendall_tau(flat, b);
    CHECK(r.degenerate);
    CHECK(r.tau == 1.0);
}

TEST_CASE("convergence series handles identical checkpoints and validates input") {
    auto spec = ProblemSpec::air3d_defaults();
    auto grid = small_grid(spec, 5);
    const std::vector<double> ts{1.0, 0.5};
    auto fields = solve_hji(spec, grid, ts);

    auto ckpt = random_checkpoint(spec, {8}, 3);
    std::vector<Checkpoint> same{ckpt, ckpt, ckpt};
    same[1].meta.step = 10;
    same[2].meta.step = 20;

    auto series = convergence_series(same, spec, grid, fields, 150.0);
    CHECK(series.degenerate);
    CHECK(series.kendall_tau == 1.0);
    REQUIRE(series.points.size() == 3);
    CHECK(series.points[0].sampled_loss == series.points[2].sampled_loss);

    std::vector<Checkpoint> two{ckpt, same[1]};
    CHECK_THROWS_AS(convergence_series(two, spec, grid, fields, 150.0), std::invalid_argument);

    auto unordered = same;
    unordered[2].meta.step = 5;
    CHECK_THROWS_AS(convergence_series(unordered, spec, grid, fields, 150.0),
                    std::invalid_argument);
}
