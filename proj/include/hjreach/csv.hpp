#pragma once

// CSV writers/readers for the exported schemas. Numbers use %.17g so values
// round-trip exactly and identical runs produce byte-identical files.

#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "hjreach/analysis.hpp"
#include "hjreach/common.hpp"
#include "hjreach/grid_oracle.hpp"
#include "hjreach/rollout.hpp"
#include "hjreach/training.hpp"

namespace hjreach {

inline std::string csv_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace detail {
inline std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("csv: cannot open " + path + " for writing");
    return out;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}
}  // namespace detail

// --------------------------------------------------------------------------
// training log: step,phase,t_min,h1,h2,loss,wall_ms
// --------------------------------------------------------------------------

inline void write_train_log_csv(const std::string& path,
                                std::span<const TrainLogRecord> records) {
    auto out = detail::open_out(path);
    out << "step,phase,t_min,h1,h2,loss,wall_ms\n";
    for (const auto& r : records) {
        out << r.step << ',' << to_string(r.phase) << ',' << csv_num(r.t_min) << ','
            << csv_num(r.h1) << ',' << csv_num(r.h2) << ',' << csv_num(r.loss) << ',' << r.wall_ms
            << '\n';
    }
}

// --------------------------------------------------------------------------
// oracle fields: t,x1,x2,theta,v (one row per node, row-major node order);
// BRT masks use the same schema plus an inside 0/1 column
// --------------------------------------------------------------------------

inline void write_field_csv(const std::string& path, const GridSpec& grid, const GridField& field,
                            const BrtMask* mask = nullptr) {
    if (grid.dims() != 3)
        throw std::invalid_argument("write_field_csv: schema is defined for 3-state problems");
    auto out = detail::open_out(path);
    out << (mask ? "t,x1,x2,theta,v,inside\n" : "t,x1,x2,theta,v\n");
    std::vector<int> multi(3);
    std::vector<double> x(3);
    const std::string t_str = csv_num(field.time);
    for (std::size_t i = 0; i < field.values.size(); ++i) {
        grid.multi_index(i, multi);
        grid.node_state(multi, x);
        out << t_str << ',' << csv_num(x[0]) << ',' << csv_num(x[1]) << ',' << csv_num(x[2]) << ','
            << csv_num(field.values[i]);
        if (mask) out << ',' << (mask->mask[i] ? 1 : 0);
        out << '\n';
    }
}

inline GridField read_field_csv(const std::string& path, const GridSpec& grid) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SchemaError("read_field_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("read_field_csv: empty file " + path);
    const auto header = detail::split_csv_line(line);
    if (header.size() < 5 || header[0] != "t" || header[4] != "v")
        throw SchemaError("read_field_csv: unexpected header in " + path);
    GridField f;
    f.values.reserve(grid.total());
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cols = detail::split_csv_line(line);
        if (cols.size() != header.size())
            throw SchemaError("read_field_csv: ragged row in " + path);
        if (first) {
            f.time = std::strtod(cols[0].c_str(), nullptr);
            first = false;
        }
        f.values.push_back(std::strtod(cols[4].c_str(), nullptr));
    }
    if (f.values.size() != grid.total())
        throw SchemaError("read_field_csv: row count does not match the grid in " + path);
    return f;
}

// --------------------------------------------------------------------------
// comparison report: t,sup_abs_err,mean_abs_err,iou,false_safe_rate,false_unsafe_rate
// --------------------------------------------------------------------------

inline void write_comparison_csv(const std::string& path, const ComparisonReport& report) {
    auto out = detail::open_out(path);
    out << "t,sup_abs_err,mean_abs_err,iou,false_safe_rate,false_unsafe_rate\n";
    for (const auto& s : report.slices) {
        out << csv_num(s.time) << ',' << csv_num(s.sup_abs_err) << ',' << csv_num(s.mean_abs_err)
            << ',' << csv_num(s.brt.iou) << ',' << csv_num(s.brt.false_safe_rate) << ','
            << csv_num(s.brt.false_unsafe_rate) << '\n';
    }
}

// --------------------------------------------------------------------------
// value slices for the heading set: t,theta,x1,x2,v_nn,v_oracle,abs_err
// --------------------------------------------------------------------------

inline void write_slice_csv(const std::string& path, const Checkpoint& ckpt, const GridSpec& grid,
                            const GridField& oracle_at_t, double t,
                            std::span<const double> thetas) {
    if (grid.dims() != 3)
        throw std::invalid_argument("write_slice_csv: schema is defined for 3-state problems");
    auto out = detail::open_out(path);
    out << "t,theta,x1,x2,v_nn,v_oracle,abs_err\n";
    SirenEvaluator ev(ckpt.arch);
    std::vector<double> q(ckpt.arch.in_dim);
    const std::string t_str = csv_num(t);
    for (double theta : thetas) {
        for (int i = 0; i < grid.n[0]; ++i) {
            for (int j = 0; j < grid.n[1]; ++j) {
                const StateVec x{grid.node_coord(0, i), grid.node_coord(1, j), theta};
                q[0] = scale_time(ckpt.problem, t);
                scale_state(ckpt.problem, x, std::span<double>(q).subspan(1));
                const double v_nn = ev.forward_scaled(ckpt.params, q);
                const double v_or = interpolate(grid, oracle_at_t, x);
                out << t_str << ',' << csv_num(theta) << ',' << csv_num(x[0]) << ','
                    << csv_num(x[1]) << ',' << csv_num(v_nn) << ',' << csv_num(v_or) << ','
                    << csv_num(std::abs(v_nn - v_or)) << '\n';
            }
        }
    }
}

// --------------------------------------------------------------------------
// trajectories: k,t,x1,x2,theta,u,d,margin
// --------------------------------------------------------------------------

inline void write_trajectory_csv(const std::string& path, const ProblemSpec& spec,
                                 const Trajectory& traj) {
    auto out = detail::open_out(path);
    out << "k,t,x1,x2,theta,u,d,margin\n";
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
        const auto& x = traj.states[k];
        const bool has_input = k < traj.u.size();
        out << k << ',' << csv_num(traj.times[k]) << ',' << csv_num(x[0]) << ',' << csv_num(x[1])
            << ',' << csv_num(x[2]) << ',' << (has_input ? csv_num(traj.u[k]) : "")
            << ',' << (has_input ? csv_num(traj.d[k]) : "") << ','
            << csv_num(target_margin(spec, x)) << '\n';
    }
}

}  // namespace hjreach
