#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sys/wait.h>

#include "hjreach/commands.hpp"

using namespace hjreach;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(HJREACH_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("hjreach_cli_" + std::to_string(::getpid()) + "_" +
                                            std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

fs::path write_config(const TempDir& tmp, const Json& extra, const std::string& name = "cfg.json") {
    Json j{{"profile", "ci"},
           {"output_dir", (tmp.path / "out").string()},
           {"arch", Json{{"hidden_widths", std::vector<int>{12, 12}}}},
           {"train", Json{{"samples_per_step", 96},
                          {"pretrain_steps", 20},
                          {"curriculum_steps", 30},
                          {"post_steps", 10},
                          {"checkpoint_every", 30},
                          {"finetune_steps", 5},
                          {"seed", 5}}},
           {"grid", Json{{"n", std::vector<int>{9, 9, 9}}}},
           {"t_samples", std::vector<double>{1.0, 0.7, 0.0}}};
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
    const auto p = tmp.path / name;
    std::ofstream(p) << j.dump(2);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("missing or invalid configs exit with code 2") {
    CHECK(run_cli("solve --config /nonexistent/cfg.json") == 2);
    TempDir tmp;
    auto bad = write_config(tmp, Json{{"grid", Json{{"n", std::vector<int>{9, 9, 9}}, {"cfl", 1.2}}}});
    CHECK(run_cli("solve --config " + bad.string()) == 2);
    auto unknown = write_config(tmp, Json{{"surprise", 1}});
    CHECK(run_cli("train --config " + unknown.string()) == 2);
}

TEST_CASE("zero-dynamics solve reproduces the terminal field at every time") {
    TempDir tmp;
    auto cfg = write_config(
        tmp, Json{{"problem", Json{{"dynamics", "zero"},
                                   {"periodic", std::vector<bool>{false, false, false}}}}});
    REQUIRE(run_cli("solve --config " + cfg.string()) == 0);

    auto oracle = load_oracle_dir((tmp.path / "out" / "solve").string());
    REQUIRE(oracle.fields.size() == 3);
    for (const auto& f : oracle.fields) REQUIRE(f.values == oracle.fields[0].values);
}

TEST_CASE("train/solve/compare round trip with artifact contracts") {
    TempDir tmp;
    auto cfg = write_config(tmp, Json::object());
    REQUIRE(run_cli("train --config " + cfg.string() + " --quiet") == 0);
    REQUIRE(run_cli("solve --config " + cfg.string()) == 0);
    REQUIRE(run_cli("compare --config " + cfg.string()) == 0);

    const auto out = tmp.path / "out";
    // training emitted at least one checkpoint plus the final one
    CHECK(fs::exists(out / "train" / "ckpt_step_0000000.json"));
    CHECK(fs::exists(out / "train" / "checkpoint_final.json"));

    // report has one row per sample time
    std::ifstream report(out / "compare" / "report.csv");
    std::string line;
    int rows = -1;  // header
    while (std::getline(report, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 3);

    // slice export: four theta blocks over the x1-x2 grid
    std::ifstream slices(out / "compare" / "slices.csv");
    std::set<std::string> thetas;
    int slice_rows = 0;
    std::getline(slices, line);  // header
    CHECK(line == "t,theta,x1,x2,v_nn,v_oracle,abs_err");
    while (std::getline(slices, line)) {
        if (line.empty()) continue;
        ++slice_rows;
        const auto c1 = line.find(','), c2 = line.find(',', line.find(',') + 1);
        thetas.insert(line.substr(c1 + 1, c2 - c1 - 1));
    }
    CHECK(thetas.size() == 4);
    CHECK(slice_rows == 4 * 9 * 9);

    // manifest hashes are reproducible for an identical rerun
    const auto manifest_before = slurp(out / "train" / "manifest.json");
    fs::remove_all(out / "train");
    REQUIRE(run_cli("train --config " + cfg.string() + " --quiet") == 0);
    CHECK(slurp(out / "train" / "manifest.json") == manifest_before);
}

TEST_CASE("compare rejects a problem-mismatched oracle") {
    TempDir tmp;
    auto cfg = write_config(tmp, Json::object());
    REQUIRE(run_cli("train --config " + cfg.string() + " --quiet") == 0);
    auto other = write_config(tmp, Json{{"problem", Json{{"beta", 0.35}}}}, "other.json");
    REQUIRE(run_cli("solve --config " + other.string()) == 0);
    CHECK(run_cli("compare --config " + cfg.string()) == 2);
}

TEST_CASE("finetune: zero steps is a no-op and logs carry the finetune phase") {
    TempDir tmp;
    auto cfg = write_config(tmp, Json::object());
    REQUIRE(run_cli("train --config " + cfg.string() + " --quiet") == 0);

    auto zero_cfg = write_config(tmp, Json{{"train", Json{{"samples_per_step", 96},
                                                          {"pretrain_steps", 20},
                                                          {"curriculum_steps", 30},
                                                          {"post_steps", 10},
                                                          {"checkpoint_every", 30},
                                                          {"finetune_steps", 0},
                                                          {"seed", 5}}}},
                                 "zero.json");
    REQUIRE(run_cli("finetune --config " + zero_cfg.string()) == 0);
    auto base = load_checkpoint((tmp.path / "out" / "train" / "checkpoint_final.json").string());
    auto ft = load_checkpoint((tmp.path / "out" / "finetune" / "checkpoint_final.json").string());
    CHECK(ft.params == base.params);
    CHECK(checkpoint_to_json(ft)["problem"] == checkpoint_to_json(base)["problem"]);

    REQUIRE(run_cli("finetune --config " + cfg.string()) == 0);
    std::ifstream log(tmp.path / "out" / "finetune" / "train_log.csv");
    std::string line;
    std::getline(log, line);
    int n = 0;
    while (std::getline(log, line)) {
        if (line.empty()) continue;
        ++n;
        CHECK(line.find(",finetune,") != std::string::npos);
    }
    CHECK(n == 5);
}

TEST_CASE("a sign-flipped Hamiltonian is caught by the oracle-agreement check") {
    auto spec = ProblemSpec::air3d_defaults();
    auto flipped = [](const ProblemSpec& s, std::span<const double> x, std::span<const double> p) {
        const double drift1 = -s.v_e + s.v_p * std::cos(x[2]);
        const double drift2 = s.v_p * std::sin(x[2]);
        const double rot = p[0] * x[1] - p[1] * x[0] - p[2];
        // wrong signs on the input terms
        return p[0] * drift1 + p[1] * drift2 - s.omega_max * std::abs(rot) +
               s.omega_max * std::abs(p[2]);
    };
    auto check = detail::check_hamiltonian_agreement(spec, flipped, 200, 1);
    CHECK_FALSE(check.pass);

    auto honest = detail::check_hamiltonian_agreement(
        spec,
        [](const ProblemSpec& s, std::span<const double> x, std::span<const double> p) {
            return hamiltonian_closed_form(s, x, p);
        },
        200, 1);
    CHECK(honest.pass);
}

TEST_CASE("--seed override changes outputs; same seed reproduces them") {
    TempDir tmp;
    auto cfg = write_config(tmp, Json::object());
    const auto out = tmp.path / "out";
    REQUIRE(run_cli("train --config " + cfg.string() + " --quiet --seed 11") == 0);
    const auto first = slurp(out / "train" / "checkpoint_final.json");
    fs::remove_all(out / "train");
    REQUIRE(run_cli("train --config " + cfg.string() + " --quiet --seed 11") == 0);
    CHECK(slurp(out / "train" / "checkpoint_final.json") == first);
    fs::remove_all(out / "train");
    REQUIRE(run_cli("train --config " + cfg.string() + " --quiet --seed 12") == 0);
    CHECK(slurp(out / "train" / "checkpoint_final.json") != first);
}
