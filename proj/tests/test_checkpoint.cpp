#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "hjreach/checkpoint.hpp"

using namespace hjreach;

namespace {

Checkpoint make_checkpoint(std::uint64_t seed = 5) {
    Checkpoint c;
    c.arch.in_dim = 4;
    c.arch.hidden = {8, 8};
    c.problem = ProblemSpec::air3d_defaults();
    c.params = init_params(c.arch, seed);
    c.meta = {1234, seed, 0.0625};
    AdamState st;
    st.reset(c.params.size());
    st.step = 17;
    st.m[3] = 0.5;
    c.optimizer = st;
    return c;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("hjreach_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

}  // namespace

TEST_CASE("checkpoint save/load/save is byte identical") {
    TempDir tmp;
    auto ckpt = make_checkpoint();
    const auto p1 = tmp.path / "a.json";
    const auto p2 = tmp.path / "b.json";
    save_checkpoint(p1.string(), ckpt);
    auto loaded = load_checkpoint(p1.string());
    save_checkpoint(p2.string(), loaded);
    CHECK(slurp(p1) == slurp(p2));
    CHECK(loaded.params == ckpt.params);
    REQUIRE(loaded.optimizer.has_value());
    CHECK(loaded.optimizer->m == ckpt.optimizer->m);
    CHECK(loaded.optimizer->step == 17);
    CHECK(loaded.meta.step == 1234);
    CHECK(loaded.meta.loss == 0.0625);
}

TEST_CASE("forward values survive the round trip to 0 ulp") {
    TempDir tmp;
    auto ckpt = make_checkpoint(9);
    const auto p = tmp.path / "c.json";
    save_checkpoint(p.string(), ckpt);
    auto loaded = load_checkpoint(p.string());
    SirenEvaluator ev(ckpt.arch);
    std::mt19937_64 rng(mix64(31));
    std::vector<double> q(4);
    for (int k = 0; k < 10; ++k) {
        for (auto& v : q) v = 2.0 * detail::u01(rng) - 1.0;
        const double before = ev.forward_scaled(ckpt.params, q);
        const double after = ev.forward_scaled(loaded.params, q);
        REQUIRE(before == after);
    }
}

TEST_CASE("load rejects mismatched parameter shapes") {
    TempDir tmp;
    auto ckpt = make_checkpoint();
    auto j = checkpoint_to_json(ckpt);
    j["params"][0]["w"].push_back(0.0);  // corrupt first layer length
    const auto p = tmp.path / "bad.json";
    std::ofstream(p) << j.dump(2);
    CHECK_THROWS_AS(load_checkpoint(p.string()), SchemaError);

    // arch/params layer count mismatch
    auto j2 = checkpoint_to_json(ckpt);
    j2["params"].erase(2);
    std::ofstream(tmp.path / "bad2.json") << j2.dump(2);
    CHECK_THROWS_AS(load_checkpoint((tmp.path / "bad2.json").string()), SchemaError);
}

TEST_CASE("load names missing and unknown fields") {
    TempDir tmp;
    auto ckpt = make_checkpoint();
    auto j = checkpoint_to_json(ckpt);
    j.erase("meta");
    std::ofstream(tmp.path / "missing.json") << j.dump(2);
    try {
        load_checkpoint((tmp.path / "missing.json").string());
        FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
        CHECK(std::string(e.what()).find("meta") != std::string::npos);
    }

    auto j2 = checkpoint_to_json(ckpt);
    j2["surprise"] = 1;
    std::ofstream(tmp.path / "unknown.json") << j2.dump(2);
    try {
        load_checkpoint((tmp.path / "unknown.json").string());
        FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
        CHECK(std::string(e.what()).find("surprise") != std::string::npos);
    }
}

TEST_CASE("save rejects non-finite parameters") {
    auto ckpt = make_checkpoint();
    ckpt.params[2] = std::nan("");
    CHECK_THROWS_AS(checkpoint_to_json(ckpt), std::invalid_argument);
}
