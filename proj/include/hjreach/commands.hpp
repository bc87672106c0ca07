#pragma once

// Command implementations behind the CLI front end. Each command writes its
// artifacts under <out>/<command>/ together with a manifest (resolved config
// plus sha-256 content hashes), so a run is reproducible from the manifest.
//
// Exit-code contract (mapped in the CLI main):
//   0 success, 1 property failure, 2 config error, 3 numeric abort.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hjreach/analysis.hpp"
#include "hjreach/checkpoint.hpp"
#include "hjreach/csv.hpp"
#include "hjreach/grid_oracle.hpp"
#include "hjreach/hash.hpp"
#include "hjreach/rollout.hpp"
#include "hjreach/run_config.hpp"

namespace hjreach {

/// Raised when a verification property fails; the CLI maps it to exit 1.
class PropertyFailure : public std::runtime_error {
public:
    explicit PropertyFailure(const std::string& msg) : std::runtime_error(msg) {}
};

struct CommandOptions {
    int threads = 1;
    bool quiet = false;
    std::string checkpoint_path;  // compare/finetune override
    std::string oracle_dir;       // compare override
};

namespace detail {

inline void write_manifest(const std::filesystem::path& dir, const std::string& command,
                           const RunConfig& cfg, int threads,
                           const std::vector<std::string>& outputs) {
    Json hashes = Json::object();
    for (const auto& rel : outputs) hashes[rel] = sha256_file((dir / rel).string());
    Json manifest{{"command", command},
                  {"config", run_config_to_json(cfg)},
                  {"threads", threads},
                  {"outputs", hashes}};
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    out << manifest.dump(2) << "\n";
}

inline std::string step_checkpoint_name(std::int64_t step) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "ckpt_step_%07lld.json", static_cast<long long>(step));
    return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// train / finetune
// ---------------------------------------------------------------------------

inline std::filesystem::path cmd_train(const RunConfig& cfg, const CommandOptions& opts = {}) {
    const std::filesystem::path dir = std::filesystem::path(cfg.output_dir) / "train";
    std::filesystem::create_directories(dir);

    std::vector<std::string> outputs;
    TrainHooks hooks;
    hooks.on_checkpoint = [&](const Checkpoint& ckpt) {
        const std::string name = detail::step_checkpoint_name(ckpt.meta.step);
        save_checkpoint((dir / name).string(), ckpt);
        outputs.push_back(name);
    };
    if (!opts.quiet) {
        hooks.on_log = [&](const TrainLogRecord& r) {
            if (r.step % 500 == 0)
                std::fprintf(stderr, "[train] step %lld (%s) h1=%.4g h2=%.4g loss=%.4g\n",
                             static_cast<long long>(r.step), to_string(r.phase).c_str(), r.h1,
                             r.h2, r.loss);
        };
    }

    auto result = train(cfg.problem, cfg.arch, cfg.train, hooks, opts.threads,
                        /*measure_wall=*/opts.threads > 1);
    save_checkpoint((dir / "checkpoint_final.json").string(), result.final_checkpoint);
    outputs.push_back("checkpoint_final.json");
    write_train_log_csv((dir / "train_log.csv").string(), result.log);
    outputs.push_back("train_log.csv");
    detail::write_manifest(dir, "train", cfg, opts.threads, outputs);
    if (result.aborted)
        throw NumericError("train: non-finite loss at step " +
                           std::to_string(result.steps_completed + 1) +
                           "; last good checkpoint retained");
    return dir;
}

inline std::filesystem::path cmd_finetune(const RunConfig& cfg, const CommandOptions& opts = {}) {
    const std::filesystem::path out_root(cfg.output_dir);
    const std::string ckpt_path = !opts.checkpoint_path.empty()
                                      ? opts.checkpoint_path
                                      : (out_root / "train" / "checkpoint_final.json").string();
    Checkpoint start = load_checkpoint(ckpt_path);
    if (start.arch.param_count() != cfg.arch.param_count() || start.arch.hidden != cfg.arch.hidden)
        throw SchemaError("finetune: checkpoint arch does not match the configured arch");
    if (!same_problem(start.problem, cfg.problem))
        throw SchemaError("finetune: checkpoint problem does not match the configured problem");

    const std::filesystem::path dir = out_root / "finetune";
    std::filesystem::create_directories(dir);
    std::vector<std::string> outputs;
    TrainHooks hooks;
    hooks.on_checkpoint = [&](const Checkpoint& ckpt) {
        const std::string name = detail::step_checkpoint_name(ckpt.meta.step);
        save_checkpoint((dir / name).string(), ckpt);
        outputs.push_back(name);
    };

    auto result = fine_tune(start, cfg.train, cfg.effective_finetune_steps(), hooks, opts.threads,
                            /*measure_wall=*/opts.threads > 1);
    save_checkpoint((dir / "checkpoint_final.json").string(), result.final_checkpoint);
    outputs.push_back("checkpoint_final.json");
    write_train_log_csv((dir / "train_log.csv").string(), result.log);
    outputs.push_back("train_log.csv");
    detail::write_manifest(dir, "finetune", cfg, opts.threads, outputs);
    if (result.aborted)
        throw NumericError("finetune: non-finite loss; last good checkpoint retained");
    return dir;
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

inline std::filesystem::path cmd_solve(const RunConfig& cfg, const CommandOptions& opts = {}) {
    const std::filesystem::path dir = std::filesystem::path(cfg.output_dir) / "solve";
    std::filesystem::create_directories(dir);
    const GridSpec grid = cfg.grid();
    auto fields = solve_hji(cfg.problem, grid, cfg.t_samples, cfg.cfl, opts.threads);

    std::vector<std::string> outputs;
    Json field_files = Json::array(), brt_files = Json::array();
    for (std::size_t k = 0; k < fields.size(); ++k) {
        char fname[32], bname[32];
        std::snprintf(fname, sizeof(fname), "field_%03zu.csv", k);
        std::snprintf(bname, sizeof(bname), "brt_%03zu.csv", k);
        const auto mask = extract_brt(fields[k]);
        write_field_csv((dir / fname).string(), grid, fields[k]);
        write_field_csv((dir / bname).string(), grid, fields[k], &mask);
        outputs.push_back(fname);
        outputs.push_back(bname);
        field_files.push_back(fname);
        brt_files.push_back(bname);
    }

    const auto problem_json = detail::problem_to_json(cfg.problem);
    Json meta{{"problem", problem_json},
              {"problem_sha256", sha256_hex(problem_json.dump())},
              {"grid", Json{{"lo", grid.lo},
                            {"hi", grid.hi},
                            {"n", grid.n},
                            {"periodic", std::vector<bool>(grid.periodic.begin(), grid.periodic.end())}}},
              {"cfl", cfg.cfl},
              {"t_samples", cfg.t_samples},
              {"fields", field_files},
              {"brt", brt_files}};
    std::ofstream(dir / "oracle_meta.json", std::ios::binary) << meta.dump(2) << "\n";
    outputs.push_back("oracle_meta.json");
    detail::write_manifest(dir, "solve", cfg, opts.threads, outputs);
    return dir;
}

struct OracleOnDisk {
    ProblemSpec problem;
    GridSpec grid;
    std::vector<GridField> fields;
};

inline OracleOnDisk load_oracle_dir(const std::string& oracle_dir) {
    const std::filesystem::path dir(oracle_dir);
    std::ifstream in(dir / "oracle_meta.json", std::ios::binary);
    if (!in) throw SchemaError("oracle: cannot open " + (dir / "oracle_meta.json").string());
    Json meta;
    try {
        meta = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw SchemaError(std::string("oracle_meta.json: ") + e.what());
    }
    JsonView v(meta, "oracle_meta");
    OracleOnDisk out;
    out.problem = detail::problem_from_json(v.require("problem"), "oracle_meta.problem");
    v.optional("problem_sha256");
    {
        JsonView gv(v.require("grid"), "oracle_meta.grid");
        out.grid.lo = gv.number_array("lo");
        out.grid.hi = gv.number_array("hi");
        out.grid.n = gv.int_array("n");
        const auto per = gv.bool_array("periodic");
        out.grid.periodic.assign(per.begin(), per.end());
        gv.finish();
        out.grid.validate();
    }
    v.optional("cfl");
    const auto t_samples = v.number_array("t_samples");
    const Json& files = v.require("fields");
    v.optional("brt");
    v.finish();
    if (!files.is_array() || files.size() != t_samples.size())
        throw SchemaError("oracle_meta.fields: expected one file per sample time");
    for (std::size_t k = 0; k < files.size(); ++k) {
        auto f = read_field_csv((dir / files[k].get<std::string>()).string(), out.grid);
        if (std::abs(f.time - t_samples[k]) > 1e-9)
            throw SchemaError("oracle: field time does not match oracle_meta t_samples");
        out.fields.push_back(std::move(f));
    }
    return out;
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

inline const double kDefaultSliceThetas[4] = {-kPi / 2.0, 0.0, kPi / 2.0, kPi};
inline constexpr double kDefaultSliceTime = 0.7;

inline std::filesystem::path cmd_compare(const RunConfig& cfg, const CommandOptions& opts = {}) {
    const std::filesystem::path out_root(cfg.output_dir);
    const std::string ckpt_path = !opts.checkpoint_path.empty()
                                      ? opts.checkpoint_path
                                      : (out_root / "train" / "checkpoint_final.json").string();
    const std::string oracle_dir =
        !opts.oracle_dir.empty() ? opts.oracle_dir : (out_root / "solve").string();

    Checkpoint ckpt = load_checkpoint(ckpt_path);
    OracleOnDisk oracle = load_oracle_dir(oracle_dir);

    const std::filesystem::path dir = out_root / "compare";
    std::filesystem::create_directories(dir);

    auto report = sup_error(ckpt, oracle.problem, oracle.grid, oracle.fields, opts.threads);
    std::vector<std::string> outputs;
    write_comparison_csv((dir / "report.csv").string(), report);
    outputs.push_back("report.csv");

    // slice export at the default heading set
    const GridField* slice_field = nullptr;
    for (const auto& f : oracle.fields)
        if (std::abs(f.time - kDefaultSliceTime) <= 1e-9) slice_field = &f;
    if (slice_field != nullptr) {
        write_slice_csv((dir / "slices.csv").string(), ckpt, oracle.grid, *slice_field,
                        kDefaultSliceTime, kDefaultSliceThetas);
        outputs.push_back("slices.csv");
    }

    Json slices = Json::array();
    for (const auto& s : report.slices)
        slices.push_back(Json{{"t", s.time},
                              {"sup_abs_err", s.sup_abs_err},
                              {"mean_abs_err", s.mean_abs_err},
                              {"iou", s.brt.iou},
                              {"false_safe_rate", s.brt.false_safe_rate},
                              {"false_unsafe_rate", s.brt.false_unsafe_rate}});
    Json summary{{"sup_abs_err", report.sup_abs_err},
                 {"mean_abs_err", report.mean_abs_err},
                 {"argmax", Json{{"t", report.argmax_time}, {"x", report.argmax_state}}},
                 {"slices", slices}};
    std::ofstream(dir / "summary.json", std::ios::binary) << summary.dump(2) << "\n";
    outputs.push_back("summary.json");
    detail::write_manifest(dir, "compare", cfg, opts.threads, outputs);
    return dir;
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

struct VerifyCheck {
    std::string name;
    bool pass = false;
    double max_slack = 0.0;  // worst margin by which the check still held
    std::string detail;
};

struct VerifyOutcome {
    std::vector<VerifyCheck> checks;
    bool all_pass = true;
};

namespace detail {

inline VerifyCheck check_hamiltonian_agreement(
    const ProblemSpec& spec,
    const std::function<double(const ProblemSpec&, std::span<const double>,
                               std::span<const double>)>& closed_form,
    int trials, std::uint64_t seed) {
    VerifyCheck check;
    check.name = "hamiltonian_oracle_agreement";
    std::mt19937_64 rng(mix64(seed, 0xA9E));
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int n_u = 201;
    const double du = 2.0 * spec.omega_max / (n_u - 1);
    double worst = -1.0;
    int violations = 0;
    std::vector<double> x(spec.n_state), p(spec.n_state);
    for (int t = 0; t < trials; ++t) {
        for (int d = 0; d < spec.n_state; ++d)
            x[d] = spec.state_lo[d] + (spec.state_hi[d] - spec.state_lo[d]) * detail::u01(rng);
        for (int d = 0; d < spec.n_state; ++d) p[d] = gauss(rng);
        const double bound = spec.omega_max * (std::abs(x[0]) + std::abs(x[1]) + 1.0) * du;
        const double diff =
            std::abs(closed_form(spec, x, p) - hamiltonian_bruteforce(spec, x, p, n_u, n_u));
        worst = std::max(worst, diff - bound);
        if (diff > bound + 1e-12) ++violations;
    }
    check.pass = violations == 0;
    check.max_slack = -worst;  // positive: how far inside the bound the worst case sat
    check.detail = std::to_string(trials) + " random draws vs 201x201 grid";
    return check;
}

inline VerifyCheck check_input_gradients(std::uint64_t seed) {
    VerifyCheck check;
    check.name = "input_gradient_fd";
    NetworkArch arch;
    arch.in_dim = 4;
    arch.hidden = {12, 12};
    SirenEvaluator ev(arch);
    std::mt19937_64 rng(mix64(seed, 0x16D));
    const double h = 1e-5;
    double worst = 0.0;
    int violations = 0;
    std::vector<double> q(4), gq(4), qp(4), qm(4);
    for (int c = 0; c < 100; ++c) {
        auto params = init_params(arch, mix64(seed, c));
        for (auto& v : q) v = 2.0 * detail::u01(rng) - 1.0;
        ev.extended_forward_scaled(params, q, gq);
        for (int k = 0; k < 4; ++k) {
            qp = q;
            qm = q;
            qp[k] += h;
            qm[k] -= h;
            const double fd =
                (ev.forward_scaled(params, qp) - ev.forward_scaled(params, qm)) / (2.0 * h);
            const double rel =
                std::abs(fd - gq[k]) / std::max({std::abs(fd), std::abs(gq[k]), 1e-8});
            if (std::abs(fd - gq[k]) > 1e-7 && rel > 1e-5) ++violations;
            worst = std::max(worst, rel);
        }
    }
    check.pass = violations == 0;
    check.max_slack = 1e-5 - worst;
    check.detail = "100 random networks, central differences, step 1e-5";
    return check;
}

inline VerifyCheck check_param_gradients(std::uint64_t seed) {
    VerifyCheck check;
    check.name = "parameter_gradient_fd";
    auto spec = ProblemSpec::air3d_defaults();
    NetworkArch arch;
    arch.in_dim = 4;
    arch.hidden = {8, 8};
    std::mt19937_64 rng(mix64(seed, 0x9AD));
    const double h = 1e-6;
    double worst = 0.0;
    int violations = 0;
    for (int c = 0; c < 20; ++c) {
        auto params = init_params(arch, mix64(seed, 100 + c));
        Batch batch;
        batch.n_state = 3;
        for (int i = 0; i < 4; ++i) {
            batch.t.push_back(detail::u01(rng));
            batch.x.push_back(1.6 * detail::u01(rng) - 0.8);
            batch.x.push_back(1.6 * detail::u01(rng) - 0.8);
            batch.x.push_back(2.0 * detail::u01(rng) - 1.0);
            batch.terminal.push_back(i < 1 ? 1 : 0);
        }
        auto [bd, grad] = loss_param_grad(params, arch, spec, batch, 2.0, Reduction::Mean);
        (void)bd;
        for (std::size_t i = 0; i < params.size(); i += 11) {
            auto pp = params;
            auto pm = params;
            pp[i] += h;
            pm[i] -= h;
            const double lp = compute_loss(pp, arch, spec, batch, 2.0, Reduction::Mean).loss;
            const double lm = compute_loss(pm, arch, spec, batch, 2.0, Reduction::Mean).loss;
            const double fd = (lp - lm) / (2.0 * h);
            const double rel =
                std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-8});
            if (std::abs(fd - grad[i]) > 1e-8 && rel > 1e-4) ++violations;
            worst = std::max(worst, rel);
        }
    }
    check.pass = violations == 0;
    check.max_slack = 1e-4 - worst;
    check.detail = "20 cases on a 2x8 network, residual-bearing loss";
    return check;
}

}  // namespace detail

inline VerifyOutcome run_verify_suite(const RunConfig& cfg, const CommandOptions& opts = {}) {
    VerifyOutcome outcome;
    const auto seed = cfg.train.seed;

    outcome.checks.push_back(detail::check_hamiltonian_agreement(
        cfg.problem,
        [](const ProblemSpec& s, std::span<const double> x, std::span<const double> p) {
            return hamiltonian_closed_form(s, x, p);
        },
        1000, seed));

    outcome.checks.push_back(detail::check_input_gradients(seed));
    outcome.checks.push_back(detail::check_param_gradients(seed));

    {
        const double eps_list[] = {1e-3, 1e-1, 1.0};
        auto rep = lipschitz_hamiltonian_check(cfg.problem, 10000, eps_list, seed);
        VerifyCheck check;
        check.name = "hamiltonian_lipschitz_bound";
        check.pass = rep.pass;
        check.max_slack = 1.0 - rep.max_ratio;
        check.detail = "10000 trials, eps in {1e-3, 1e-1, 1}, C_f = " + std::to_string(rep.cf);
        outcome.checks.push_back(check);
    }
    {
        auto rep = properness_check(cfg.problem, 10000, seed);
        VerifyCheck check;
        check.name = "properness_monotonicity";
        check.pass = rep.pass;
        check.max_slack = rep.pass ? 0.0 : -rep.max_violation;
        check.detail = "10000 random (r, s) monotonicity trials";
        outcome.checks.push_back(check);
    }
    {
        const GridSpec grid = cfg.grid();
        auto fields = solve_hji(cfg.problem, grid, cfg.t_samples, cfg.cfl, opts.threads);
        OracleValueSource source(grid, std::move(fields));
        BrtSemanticsOptions sem;
        sem.seed = seed;
        auto rep = verify_brt_semantics(cfg.problem, source, sem);
        VerifyCheck check;
        check.name = "brt_semantics_rollout";
        check.pass = !rep.outside_vacuous && !rep.inside_vacuous &&
                     rep.outside_pass_rate >= 1.0 && rep.inside_capture_rate >= 0.95;
        check.max_slack = rep.inside_capture_rate - 0.95;
        check.detail = "outside " + std::to_string(rep.outside_safe) + "/" +
                       std::to_string(rep.outside_total) + ", inside " +
                       std::to_string(rep.inside_captured) + "/" +
                       std::to_string(rep.inside_total);
        outcome.checks.push_back(check);
    }

    for (const auto& c : outcome.checks) outcome.all_pass = outcome.all_pass && c.pass;
    return outcome;
}

inline std::filesystem::path cmd_verify(const RunConfig& cfg, const CommandOptions& opts = {}) {
    const std::filesystem::path dir = std::filesystem::path(cfg.output_dir) / "verify";
    std::filesystem::create_directories(dir);
    auto outcome = run_verify_suite(cfg, opts);

    Json checks = Json::array();
    for (const auto& c : outcome.checks) {
        checks.push_back(Json{{"name", c.name},
                              {"pass", c.pass},
                              {"max_slack", c.max_slack},
                              {"detail", c.detail}});
        if (!opts.quiet)
            std::fprintf(stderr, "[verify] %-32s %s  (slack %.3g) %s\n", c.name.c_str(),
                         c.pass ? "PASS" : "FAIL", c.max_slack, c.detail.c_str());
    }
    Json report{{"all_pass", outcome.all_pass}, {"checks", checks}};
    std::ofstream(dir / "verify_report.json", std::ios::binary) << report.dump(2) << "\n";
    detail::write_manifest(dir, "verify", cfg, opts.threads, {"verify_report.json"});
    if (!outcome.all_pass) throw PropertyFailure("verify: one or more property checks failed");
    return dir;
}

}  // namespace hjreach
