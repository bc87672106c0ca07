#pragma once

// Checkpoint persistence: a single JSON document holding the architecture,
// problem, scaling, per-layer parameter arrays, optional optimizer state and
// run metadata. Decimal serialization uses shortest-round-trip formatting, so
// save -> load -> save is byte-identical and parameters survive bitwise.

#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "hjreach/json_util.hpp"
#include "hjreach/problem.hpp"
#include "hjreach/siren.hpp"

namespace hjreach {

struct CheckpointMeta {
    std::int64_t step = 0;
    std::uint64_t seed = 0;
    double loss = 0.0;
};

struct Checkpoint {
    NetworkArch arch;
    ProblemSpec problem;
    NetworkParams params;
    std::optional<AdamState> optimizer;
    CheckpointMeta meta;
};

namespace detail {

inline Json arch_to_json(const NetworkArch& a) {
    return Json{{"in_dim", a.in_dim},
                {"hidden_widths", a.hidden},
                {"activation", "sine"},
                {"omega0_first", a.omega0_first},
                {"omega0_hidden", a.omega0_hidden},
                {"out_dim", a.out_dim}};
}

inline NetworkArch arch_from_json(const Json& j, const std::string& path) {
    JsonView v(j, path);
    NetworkArch a;
    a.in_dim = static_cast<int>(v.integer("in_dim"));
    a.hidden = v.int_array("hidden_widths");
    const std::string act = v.string("activation");
    if (act != "sine") throw SchemaError(path + ".activation: unsupported value '" + act + "'");
    a.omega0_first = v.number("omega0_first");
    a.omega0_hidden = v.number("omega0_hidden");
    a.out_dim = static_cast<int>(v.integer("out_dim"));
    v.finish();
    a.validate();
    return a;
}

inline Json problem_to_json(const ProblemSpec& s) {
    return Json{{"dynamics", to_string(s.dynamics)},
                {"v_e", s.v_e},
                {"v_p", s.v_p},
                {"omega_max", s.omega_max},
                {"beta", s.beta},
                {"state_lo", s.state_lo},
                {"state_hi", s.state_hi},
                {"periodic", [&] {
                     std::vector<bool> p(s.periodic.begin(), s.periodic.end());
                     return p;
                 }()},
                {"horizon_T", s.horizon_T},
                {"n_state", s.n_state}};
}

inline ProblemSpec problem_from_json(const Json& j, const std::string& path) {
    JsonView v(j, path);
    ProblemSpec s;
    s.dynamics = dynamics_id_from_string(v.string("dynamics"));
    s.v_e = v.number("v_e");
    s.v_p = v.number("v_p");
    s.omega_max = v.number("omega_max");
    s.beta = v.number("beta");
    s.state_lo = v.number_array("state_lo");
    s.state_hi = v.number_array("state_hi");
    const auto per = v.bool_array("periodic");
    s.periodic.assign(per.begin(), per.end());
    s.horizon_T = v.number("horizon_T");
    s.n_state = static_cast<int>(v.integer("n_state"));
    v.finish();
    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw SchemaError(path + ": " + e.what());
    }
    return s;
}

}  // namespace detail

inline Json checkpoint_to_json(const Checkpoint& ckpt) {
    ckpt.arch.validate();
    ckpt.problem.validate();
    if (ckpt.params.size() != ckpt.arch.param_count())
        throw std::invalid_argument("checkpoint: parameter count does not match arch");
    for (double p : ckpt.params)
        if (!std::isfinite(p)) throw std::invalid_argument("checkpoint: non-finite parameter");

    Json layers = Json::array();
    const auto layouts = layer_layouts(ckpt.arch);
    for (const auto& ll : layouts) {
        std::vector<double> w(ckpt.params.begin() + ll.w_off,
                              ckpt.params.begin() + ll.w_off + static_cast<std::size_t>(ll.rows) * ll.cols);
        std::vector<double> b(ckpt.params.begin() + ll.b_off,
                              ckpt.params.begin() + ll.b_off + ll.rows);
        layers.push_back(Json{{"rows", ll.rows}, {"cols", ll.cols}, {"w", w}, {"b", b}});
    }

    Json j{{"format_version", 1},
           {"arch", detail::arch_to_json(ckpt.arch)},
           {"problem", detail::problem_to_json(ckpt.problem)},
           {"scaling",
            Json{{"state_lo", ckpt.problem.state_lo},
                 {"state_hi", ckpt.problem.state_hi},
                 {"t_lo", 0.0},
                 {"t_hi", ckpt.problem.horizon_T}}},
           {"params", layers},
           {"meta", Json{{"step", ckpt.meta.step},
                         {"seed", ckpt.meta.seed},
                         {"loss", ckpt.meta.loss}}}};
    if (ckpt.optimizer) {
        j["optimizer_state"] =
            Json{{"step", ckpt.optimizer->step}, {"m", ckpt.optimizer->m}, {"v", ckpt.optimizer->v}};
    }
    return j;
}

inline Checkpoint checkpoint_from_json(const Json& j, const std::string& path = "checkpoint") {
    JsonView v(j, path);
    const auto version = v.integer("format_version");
    if (version != 1)
        throw SchemaError(path + ".format_version: unsupported version " + std::to_string(version));

    Checkpoint ckpt;
    ckpt.arch = detail::arch_from_json(v.require("arch"), path + ".arch");
    ckpt.problem = detail::problem_from_json(v.require("problem"), path + ".problem");
    if (ckpt.arch.in_dim != ckpt.problem.n_state + 1)
        throw SchemaError(path + ".arch.in_dim: must equal problem.n_state + 1");

    {
        JsonView sv(v.require("scaling"), path + ".scaling");
        const auto lo = sv.number_array("state_lo");
        const auto hi = sv.number_array("state_hi");
        const double t_lo = sv.number("t_lo");
        const double t_hi = sv.number("t_hi");
        sv.finish();
        auto near = [](double a, double b) { return std::abs(a - b) <= 1e-12; };
        bool ok = lo.size() == ckpt.problem.state_lo.size() &&
                  hi.size() == ckpt.problem.state_hi.size() && near(t_lo, 0.0) &&
                  near(t_hi, ckpt.problem.horizon_T);
        for (std::size_t i = 0; ok && i < lo.size(); ++i)
            ok = near(lo[i], ckpt.problem.state_lo[i]) && near(hi[i], ckpt.problem.state_hi[i]);
        if (!ok) throw SchemaError(path + ".scaling: inconsistent with problem block");
    }

    const Json& layers = v.require("params");
    if (!layers.is_array()) throw SchemaError(path + ".params: expected an array");
    const auto layouts = layer_layouts(ckpt.arch);
    if (layers.size() != layouts.size())
        throw SchemaError(path + ".params: layer count " + std::to_string(layers.size()) +
                          " does not match arch (" + std::to_string(layouts.size()) + ")");
    ckpt.params.assign(ckpt.arch.param_count(), 0.0);
    for (std::size_t l = 0; l < layouts.size(); ++l) {
        const std::string lpath = path + ".params[" + std::to_string(l) + "]";
        JsonView lv(layers[l], lpath);
        const auto rows = lv.integer("rows");
        const auto cols = lv.integer("cols");
        if (rows != layouts[l].rows || cols != layouts[l].cols)
            throw SchemaError(lpath + ": shape " + std::to_string(rows) + "x" +
                              std::to_string(cols) + " does not match arch layer " +
                              std::to_string(layouts[l].rows) + "x" +
                              std::to_string(layouts[l].cols));
        const auto w = lv.number_array("w");
        const auto b = lv.number_array("b");
        lv.finish();
        if (w.size() != static_cast<std::size_t>(rows) * cols)
            throw SchemaError(lpath + ".w: wrong length");
        if (b.size() != static_cast<std::size_t>(rows)) throw SchemaError(lpath + ".b: wrong length");
        std::copy(w.begin(), w.end(), ckpt.params.begin() + layouts[l].w_off);
        std::copy(b.begin(), b.end(), ckpt.params.begin() + layouts[l].b_off);
    }

    if (const Json* opt = v.optional("optimizer_state")) {
        JsonView ov(*opt, path + ".optimizer_state");
        AdamState st;
        st.step = ov.integer("step");
        st.m = ov.number_array("m");
        st.v = ov.number_array("v");
        ov.finish();
        if (st.m.size() != ckpt.params.size() || st.v.size() != ckpt.params.size())
            throw SchemaError(path + ".optimizer_state: moment length mismatch");
        ckpt.optimizer = std::move(st);
    }

    {
        JsonView mv(v.require("meta"), path + ".meta");
        ckpt.meta.step = mv.integer("step");
        ckpt.meta.seed = static_cast<std::uint64_t>(mv.integer("seed"));
        ckpt.meta.loss = mv.number("loss");
        mv.finish();
    }
    v.finish();
    return ckpt;
}

inline std::string checkpoint_to_string(const Checkpoint& ckpt) {
    return checkpoint_to_json(ckpt).dump(2) + "\n";
}

inline void save_checkpoint(const std::string& file_path, const Checkpoint& ckpt) {
    std::ofstream out(file_path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + file_path);
    out << checkpoint_to_string(ckpt);
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + file_path);
}

inline Checkpoint load_checkpoint(const std::string& file_path) {
    std::ifstream in(file_path, std::ios::binary);
    if (!in) throw SchemaError("load_checkpoint: cannot open " + file_path);
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw SchemaError("load_checkpoint: " + file_path + ": " + e.what());
    }
    return checkpoint_from_json(j);
}

}  // namespace hjreach
