#pragma once

#include <Eigen/Dense>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctp/dataset.hpp"
#include "json.hpp"

namespace ctp {

/// Pooled root mean squared error over all m*L entries.
inline double rmse(const Matrix& y_true, const Matrix& y_pred) {
    if (y_true.rows() != y_pred.rows() || y_true.cols() != y_pred.cols())
        throw std::invalid_argument("rmse: shape mismatch");
    if (y_true.size() == 0) throw std::invalid_argument("rmse: empty input");
    return std::sqrt((y_true - y_pred).array().square().mean());
}

/// Pooled coefficient of determination: 1 - SS_res / SS_tot, with SS_tot taken
/// about the per-column means and summed across columns.
inline double r2(const Matrix& y_true, const Matrix& y_pred) {
    if (y_true.rows() != y_pred.rows() || y_true.cols() != y_pred.cols())
        throw std::invalid_argument("r2: shape mismatch");
    if (y_true.size() == 0) throw std::invalid_argument("r2: empty input");
    double ss_res = (y_true - y_pred).array().square().sum();
    Eigen::RowVectorXd col_means = y_true.colwise().mean();
    double ss_tot = (y_true.rowwise() - col_means).array().square().sum();
    if (ss_tot == 0.0) throw std::invalid_argument("r2: constant y_true");
    return 1.0 - ss_res / ss_tot;
}

enum class Direction { maximize, minimize };

inline std::string to_string(Direction d) {
    return d == Direction::maximize ? "maximize" : "minimize";
}

inline Direction direction_from_string(const std::string& s) {
    if (s == "maximize") return Direction::maximize;
    if (s == "minimize") return Direction::minimize;
    throw std::invalid_argument("unknown direction: " + s);
}

struct MetricColumn {
    std::string name;
    Direction direction = Direction::maximize;
    Vector values;
};

struct ExperimentMeta {
    std::string method;
    int cluster_size = 0;
};

/// Raw metric columns over the same set of experiments, with weights summing
/// to 1. Rows are experiments; experiment_meta carries method id + cluster size.
struct RuiTable {
    std::vector<MetricColumn> columns;
    Vector weights;
    std::vector<ExperimentMeta> experiment_meta;

    Index n_experiments() const {
        return columns.empty() ? 0 : columns.front().values.size();
    }

    void validate() const {
        if (columns.empty()) throw std::invalid_argument("RuiTable: no columns");
        Index m = columns.front().values.size();
        if (m < 1) throw std::invalid_argument("RuiTable: empty columns");
        for (const auto& c : columns) {
            if (c.values.size() != m)
                throw std::invalid_argument("RuiTable: column length mismatch in " + c.name);
            if (!c.values.allFinite())
                throw std::invalid_argument("RuiTable: non-finite value in " + c.name);
        }
        if (weights.size() != static_cast<Index>(columns.size()))
            throw std::invalid_argument("RuiTable: weight count != column count");
        if ((weights.array() < 0.0).any())
            throw std::invalid_argument("RuiTable: negative weight");
        if (std::abs(weights.sum() - 1.0) > 1e-12)
            throw std::invalid_argument("RuiTable: weights must sum to 1");
        if (!experiment_meta.empty() && static_cast<Index>(experiment_meta.size()) != m)
            throw std::invalid_argument("RuiTable: meta length mismatch");
    }
};

/// Min-max normalization to [0,1] with higher-is-better orientation.
/// A constant column maps to all 0.5.
inline Vector normalize_column(const MetricColumn& c) {
    if (!c.values.allFinite())
        throw std::invalid_argument("normalize_column: non-finite value");
    double lo = c.values.minCoeff();
    double hi = c.values.maxCoeff();
    if (lo == hi) return Vector::Constant(c.values.size(), 0.5);
    if (c.direction == Direction::maximize)
        return (c.values.array() - lo) / (hi - lo);
    return (hi - c.values.array()) / (hi - lo);
}

struct RuiResult {
    Vector scores;
    Index best_index = 0;
    ExperimentMeta best_meta;
};

namespace detail {

inline Index argmax_lowest(const Vector& v) {
    Index best = 0;
    for (Index i = 1; i < v.size(); ++i)
        if (v(i) > v(best)) best = i;
    return best;
}

}  // namespace detail

/// Weighted sum of direction-normalized metric columns; argmax selection with
/// lowest-index tie-break.
inline RuiResult rui(const RuiTable& t) {
    t.validate();
    RuiResult r;
    r.scores = Vector::Zero(t.n_experiments());
    for (std::size_t c = 0; c < t.columns.size(); ++c)
        r.scores += t.weights(static_cast<Index>(c)) * normalize_column(t.columns[c]);
    r.best_index = detail::argmax_lowest(r.scores);
    if (!t.experiment_meta.empty())
        r.best_meta = t.experiment_meta[static_cast<std::size_t>(r.best_index)];
    return r;
}

struct GroupRui {
    std::vector<Index> rows;   // original experiment rows, in group order
    Vector scores;             // aligned with rows
    Index best_row = 0;        // original row index of the group argmax
    double best_score = 0.0;
    ExperimentMeta best_meta;
};

/// Local RUI: normalization recomputed with each group's own min/max.
/// `groups` must partition [0, m).
inline std::vector<GroupRui> local_rui(const RuiTable& t,
                                       const std::vector<std::vector<Index>>& groups) {
    t.validate();
    const Index m = t.n_experiments();
    std::vector<char> seen(static_cast<std::size_t>(m), 0);
    Index covered = 0;
    for (const auto& g : groups) {
        if (g.empty()) throw std::invalid_argument("local_rui: empty group");
        for (Index r : g) {
            if (r < 0 || r >= m) throw std::invalid_argument("local_rui: row out of range");
            if (seen[static_cast<std::size_t>(r)]++)
                throw std::invalid_argument("local_rui: row in two groups");
            ++covered;
        }
    }
    if (covered != m) throw std::invalid_argument("local_rui: groups do not cover all rows");

    std::vector<GroupRui> out;
    out.reserve(groups.size());
    for (const auto& g : groups) {
        RuiTable sub;
        sub.weights = t.weights;
        for (const auto& c : t.columns) {
            MetricColumn cc;
            cc.name = c.name;
            cc.direction = c.direction;
            cc.values.resize(static_cast<Index>(g.size()));
            for (std::size_t i = 0; i < g.size(); ++i) cc.values(static_cast<Index>(i)) = c.values(g[i]);
            sub.columns.push_back(std::move(cc));
        }
        if (!t.experiment_meta.empty())
            for (Index r : g) sub.experiment_meta.push_back(t.experiment_meta[static_cast<std::size_t>(r)]);
        RuiResult rr = rui(sub);
        GroupRui gr;
        gr.rows = g;
        gr.scores = rr.scores;
        gr.best_row = g[static_cast<std::size_t>(rr.best_index)];
        gr.best_score = rr.scores(rr.best_index);
        gr.best_meta = rr.best_meta;
        out.push_back(std::move(gr));
    }
    return out;
}

/// CSV layout: method,cluster_size,<metric columns>. Directions and weights
/// travel in a JSON sidecar.
inline void save_rui_table(const RuiTable& t, const std::string& csv_path,
                           const std::string& sidecar_path) {
    t.validate();
    std::ofstream out(csv_path);
    if (!out) throw std::runtime_error("save_rui_table: cannot open " + csv_path);
    out << "method,cluster_size";
    for (const auto& c : t.columns) out << ',' << c.name;
    out << '\n';
    for (Index i = 0; i < t.n_experiments(); ++i) {
        const auto& meta = t.experiment_meta.empty() ? ExperimentMeta{}
                                                     : t.experiment_meta[static_cast<std::size_t>(i)];
        out << meta.method << ',' << meta.cluster_size;
        for (const auto& c : t.columns) out << ',' << format_double(c.values(i));
        out << '\n';
    }
    nlohmann::json side;
    side["weights"] = std::vector<double>(t.weights.begin(), t.weights.end());
    for (const auto& c : t.columns) side["directions"][c.name] = to_string(c.direction);
    std::ofstream sout(sidecar_path);
    if (!sout) throw std::runtime_error("save_rui_table: cannot open " + sidecar_path);
    sout << side.dump(2) << '\n';
}

inline RuiTable load_rui_table(const std::string& csv_path, const std::string& sidecar_path) {
    std::ifstream sin(sidecar_path);
    if (!sin) throw std::runtime_error("load_rui_table: cannot open " + sidecar_path);
    nlohmann::json side = nlohmann::json::parse(sin);

    std::ifstream in(csv_path);
    if (!in) throw std::runtime_error("load_rui_table: cannot open " + csv_path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_rui_table: missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = detail::split_fields(line);
    if (header.size() < 3 || header[0] != "method" || header[1] != "cluster_size")
        throw std::runtime_error("load_rui_table: expected method,cluster_size,<metrics> header");

    RuiTable t;
    for (std::size_t c = 2; c < header.size(); ++c) {
        MetricColumn col;
        col.name = std::string(header[c]);
        col.direction = direction_from_string(side.at("directions").at(col.name).get<std::string>());
        t.columns.push_back(std::move(col));
    }
    std::vector<std::vector<double>> cols(t.columns.size());
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = detail::split_fields(line);
        if (fields.size() != header.size())
            throw std::runtime_error("load_rui_table: field count mismatch at line " +
                                     std::to_string(line_no));
        ExperimentMeta meta;
        meta.method = std::string(fields[0]);
        meta.cluster_size = static_cast<int>(detail::parse_double(fields[1], line_no));
        t.experiment_meta.push_back(std::move(meta));
        for (std::size_t c = 2; c < fields.size(); ++c)
            cols[c - 2].push_back(detail::parse_double(fields[c], line_no));
    }
    for (std::size_t c = 0; c < cols.size(); ++c)
        t.columns[c].values =
            Eigen::Map<Vector>(cols[c].data(), static_cast<Index>(cols[c].size()));
    auto w = side.at("weights").get<std::vector<double>>();
    t.weights = Eigen::Map<Vector>(w.data(), static_cast<Index>(w.size()));
    t.validate();
    return t;
}

}  // namespace ctp
