#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "ctp/dataset.hpp"
#include "ctp/tree.hpp"
#include "json.hpp"

namespace ctp {

enum class RegressorKind { knn, gb, ols, lasso, linsvr };

inline std::string to_string(RegressorKind k) {
    switch (k) {
        case RegressorKind::knn: return "knn";
        case RegressorKind::gb: return "gb";
        case RegressorKind::ols: return "ols";
        case RegressorKind::lasso: return "lasso";
        case RegressorKind::linsvr: return "linsvr";
    }
    return "?";
}

inline RegressorKind regressor_kind_from_string(const std::string& s) {
    if (s == "knn") return RegressorKind::knn;
    if (s == "gb") return RegressorKind::gb;
    if (s == "ols") return RegressorKind::ols;
    if (s == "lasso") return RegressorKind::lasso;
    if (s == "linsvr") return RegressorKind::linsvr;
    throw std::invalid_argument("unknown regressor kind: " + s);
}

struct KnnConfig {
    Index n_neighbors = 5;
};

struct GbConfig {
    int n_estimators = 500;
    double learning_rate = 0.3;
    int max_depth = 7;
    Index min_samples_leaf = 1;

    void validate() const {
        if (n_estimators < 1) throw std::invalid_argument("GbConfig: n_estimators must be >= 1");
        if (!(learning_rate > 0.0)) throw std::invalid_argument("GbConfig: learning_rate must be > 0");
        if (max_depth < 1) throw std::invalid_argument("GbConfig: max_depth must be >= 1");
        if (min_samples_leaf < 1) throw std::invalid_argument("GbConfig: min_samples_leaf must be >= 1");
    }
};

inline void to_json(nlohmann::json& j, const KnnConfig& c) { j = {{"n_neighbors", c.n_neighbors}}; }
inline void from_json(const nlohmann::json& j, KnnConfig& c) {
    c.n_neighbors = j.value("n_neighbors", c.n_neighbors);
}
inline void to_json(nlohmann::json& j, const GbConfig& c) {
    j = {{"n_estimators", c.n_estimators},
         {"learning_rate", c.learning_rate},
         {"max_depth", c.max_depth},
         {"min_samples_leaf", c.min_samples_leaf}};
}
inline void from_json(const nlohmann::json& j, GbConfig& c) {
    c.n_estimators = j.value("n_estimators", c.n_estimators);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.max_depth = j.value("max_depth", c.max_depth);
    c.min_samples_leaf = j.value("min_samples_leaf", c.min_samples_leaf);
}

namespace models {

struct Knn {
    KnnConfig cfg;
    Matrix train_x;  // m x d
    Matrix train_y;  // m x w
};

struct Gb {
    GbConfig cfg;
    bool multi_output = false;
    Vector base;  // stage-0 column means (w)
    std::vector<RegressionTree> trees;
    std::vector<double> train_rmse_history;  // after each boosting round
};

struct Linear {
    Vector coef;  // d
    double intercept = 0.0;
    int iterations = 0;
    bool converged = true;
};

}  // namespace models

/// One trained regression model behind a uniform predict surface. Multi-output
/// GB has output_width == L; every other kind predicts a single load.
struct Regressor {
    RegressorKind kind = RegressorKind::knn;
    Index input_dim = 0;
    Index output_width = 1;
    std::variant<models::Knn, models::Gb, models::Linear> state;
};

// ---------------------------------------------------------------------------
// KNN

inline Regressor knn_fit(const Matrix& X, const Matrix& y, const KnnConfig& cfg) {
    if (X.rows() < 1) throw std::invalid_argument("knn_fit: empty training set");
    if (X.rows() != y.rows()) throw std::invalid_argument("knn_fit: row mismatch");
    if (cfg.n_neighbors < 1 || cfg.n_neighbors > X.rows())
        throw std::invalid_argument("knn_fit: need 1 <= n_neighbors <= training size");
    Regressor r;
    r.kind = RegressorKind::knn;
    r.input_dim = X.cols();
    r.output_width = y.cols();
    r.state = models::Knn{cfg, X, y};
    return r;
}

namespace detail {

// Neighbor order is (distance, index) lexicographic, so distance ties go to
// the lower training index.
inline void knn_predict_into(const models::Knn& m, const Eigen::Ref<const Eigen::RowVectorXd>& x,
                             std::vector<std::pair<double, Index>>& buf,
                             Eigen::Ref<Eigen::RowVectorXd> out) {
    const Index n = m.train_x.rows();
    buf.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i)
        buf[static_cast<std::size_t>(i)] = {(m.train_x.row(i) - x).squaredNorm(), i};
    const Index k = m.cfg.n_neighbors;
    std::partial_sort(buf.begin(), buf.begin() + k, buf.end());
    out.setZero();
    for (Index j = 0; j < k; ++j) out += m.train_y.row(buf[static_cast<std::size_t>(j)].second);
    out /= static_cast<double>(k);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Gradient boosting

/// Squared-loss boosting: stage 0 is the column-wise target mean, then each
/// round fits one tree to the residuals and adds learning_rate times its
/// output. With multi_output the trees carry vector leaves over all columns
/// of Y; otherwise Y must have exactly one column.
inline Regressor gb_fit(const Matrix& X, const Matrix& Y, const GbConfig& cfg,
                        bool multi_output) {
    cfg.validate();
    if (X.rows() < 1) throw std::invalid_argument("gb_fit: empty training set");
    if (X.rows() != Y.rows()) throw std::invalid_argument("gb_fit: row mismatch");
    if (!multi_output && Y.cols() != 1)
        throw std::invalid_argument("gb_fit: single-output mode requires one target column");
    if (!X.allFinite() || !Y.allFinite()) throw std::invalid_argument("gb_fit: non-finite input");

    const Index m = X.rows();
    const Index L = Y.cols();
    models::Gb model;
    model.cfg = cfg;
    model.multi_output = multi_output;
    model.base = Y.colwise().mean();

    Matrix fit_t(L, m);  // current fit, transposed
    for (Index i = 0; i < m; ++i) fit_t.col(i) = model.base;
    Matrix y_t = Y.transpose();
    Matrix resid_t(L, m);

    TreeBuilder builder(X, cfg.max_depth, cfg.min_samples_leaf);
    std::vector<std::int32_t> node_of;
    model.trees.reserve(static_cast<std::size_t>(cfg.n_estimators));
    model.train_rmse_history.reserve(static_cast<std::size_t>(cfg.n_estimators));
    for (int round = 0; round < cfg.n_estimators; ++round) {
        resid_t = y_t - fit_t;
        RegressionTree tree = builder.build(resid_t, node_of);
        for (Index i = 0; i < m; ++i)
            fit_t.col(i) += cfg.learning_rate * tree.leaf_value(node_of[static_cast<std::size_t>(i)]);
        model.trees.push_back(std::move(tree));
        model.train_rmse_history.push_back(std::sqrt((y_t - fit_t).array().square().mean()));
    }

    Regressor r;
    r.kind = RegressorKind::gb;
    r.input_dim = X.cols();
    r.output_width = L;
    r.state = std::move(model);
    return r;
}

// ---------------------------------------------------------------------------
// Linear family (single output)

namespace detail {

inline void check_single_output(const Matrix& X, const Matrix& y, const char* who) {
    if (X.rows() < 1) throw std::invalid_argument(std::string(who) + ": empty training set");
    if (y.cols() != 1) throw std::invalid_argument(std::string(who) + ": expected one target column");
    if (X.rows() != y.rows()) throw std::invalid_argument(std::string(who) + ": row mismatch");
    if (!X.allFinite() || !y.allFinite())
        throw std::invalid_argument(std::string(who) + ": non-finite input");
}

}  // namespace detail

/// Normal equations on centered data; a deterministic ridge jitter of
/// 1e-10 * trace(X^T X)/d is added if the system is singular.
inline Regressor ols_fit(const Matrix& X, const Matrix& y) {
    detail::check_single_output(X, y, "ols_fit");
    const Index d = X.cols();
    Eigen::RowVectorXd x_mean = X.colwise().mean();
    double y_mean = y.col(0).mean();
    Matrix xc = X.rowwise() - x_mean;
    Vector yc = y.col(0).array() - y_mean;
    Matrix gram = xc.transpose() * xc;
    Vector rhs = xc.transpose() * yc;

    Vector coef = gram.ldlt().solve(rhs);
    double resid = (gram * coef - rhs).norm();
    double scale = rhs.norm() + gram.norm() * coef.norm();
    if (!coef.allFinite() || (scale > 0 && resid > 1e-8 * scale)) {
        double jitter = 1e-10 * gram.trace() / static_cast<double>(d);
        Matrix reg = gram + jitter * Matrix::Identity(d, d);
        coef = reg.ldlt().solve(rhs);
        if (!coef.allFinite()) throw std::runtime_error("ols_fit: singular system");
    }
    models::Linear lin;
    lin.coef = coef;
    lin.intercept = y_mean - x_mean.dot(coef);
    Regressor r;
    r.kind = RegressorKind::ols;
    r.input_dim = d;
    r.state = std::move(lin);
    return r;
}

/// L1-penalized least squares, objective (1/2m)|y - b - Xw|^2 + lambda*|w|_1,
/// solved by cyclic coordinate descent to a 1e-8 coefficient-change tolerance.
/// The intercept is unpenalized (handled by centering).
inline Regressor lasso_fit(const Matrix& X, const Matrix& y, double lambda,
                           int max_sweeps = 100000) {
    detail::check_single_output(X, y, "lasso_fit");
    if (lambda < 0) throw std::invalid_argument("lasso_fit: lambda must be >= 0");
    const Index d = X.cols();
    const double m = static_cast<double>(X.rows());
    Eigen::RowVectorXd x_mean = X.colwise().mean();
    double y_mean = y.col(0).mean();
    Matrix xc = X.rowwise() - x_mean;
    Vector yc = y.col(0).array() - y_mean;
    Vector col_sq(d);
    for (Index j = 0; j < d; ++j) col_sq(j) = xc.col(j).squaredNorm() / m;

    Vector w = Vector::Zero(d);
    Vector r = yc;
    constexpr double tol = 1e-8;
    int sweep = 0;
    bool converged = false;
    for (; sweep < max_sweeps; ++sweep) {
        double max_change = 0.0;
        for (Index j = 0; j < d; ++j) {
            if (col_sq(j) == 0.0) continue;
            double rho = xc.col(j).dot(r) / m + col_sq(j) * w(j);
            double w_new = 0.0;
            if (rho > lambda)
                w_new = (rho - lambda) / col_sq(j);
            else if (rho < -lambda)
                w_new = (rho + lambda) / col_sq(j);
            if (w_new != w(j)) {
                r += xc.col(j) * (w(j) - w_new);
                max_change = std::max(max_change, std::abs(w_new - w(j)));
                w(j) = w_new;
            }
        }
        if (max_change < tol) {
            converged = true;
            break;
        }
    }
    models::Linear lin;
    lin.coef = w;
    lin.intercept = y_mean - x_mean.dot(w);
    lin.iterations = sweep;
    lin.converged = converged;
    Regressor reg;
    reg.kind = RegressorKind::lasso;
    reg.input_dim = d;
    reg.state = std::move(lin);
    return reg;
}

/// Epsilon-insensitive linear SVR, objective 0.5|w|^2 + C * sum of losses,
/// minimized by deterministic full-batch subgradient descent with a fixed
/// 1/(1+t/50) schedule. Returns the best iterate seen; non-convergence is not
/// fatal.
inline Regressor linsvr_fit(const Matrix& X, const Matrix& y, double c, double epsilon,
                            int max_iter = 2000) {
    detail::check_single_output(X, y, "linsvr_fit");
    if (!(c > 0)) throw std::invalid_argument("linsvr_fit: C must be > 0");
    if (epsilon < 0) throw std::invalid_argument("linsvr_fit: epsilon must be >= 0");
    const Index d = X.cols();
    const Index m = X.rows();

    auto objective = [&](const Vector& w, double b) {
        double obj = 0.5 * w.squaredNorm();
        for (Index i = 0; i < m; ++i) {
            double e = std::abs(y(i, 0) - X.row(i).dot(w) - b) - epsilon;
            if (e > 0) obj += c * e;
        }
        return obj;
    };

    Vector w = Vector::Zero(d);
    double b = y.col(0).mean();
    Vector best_w = w;
    double best_b = b;
    double best_obj = objective(w, b);
    Vector grad(d);
    const double step0 = 1.0 / (1.0 + c * static_cast<double>(m));
    for (int t = 0; t < max_iter; ++t) {
        grad = w;
        double gb = 0.0;
        for (Index i = 0; i < m; ++i) {
            double e = y(i, 0) - X.row(i).dot(w) - b;
            if (e > epsilon) {
                grad -= c * X.row(i).transpose();
                gb -= c;
            } else if (e < -epsilon) {
                grad += c * X.row(i).transpose();
                gb += c;
            }
        }
        double step = step0 / (1.0 + static_cast<double>(t) / 50.0);
        w -= step * grad;
        b -= step * gb;
        double obj = objective(w, b);
        if (obj < best_obj) {
            best_obj = obj;
            best_w = w;
            best_b = b;
        }
    }
    models::Linear lin;
    lin.coef = best_w;
    lin.intercept = best_b;
    lin.iterations = max_iter;
    Regressor reg;
    reg.kind = RegressorKind::linsvr;
    reg.input_dim = d;
    reg.state = std::move(lin);
    return reg;
}

// ---------------------------------------------------------------------------
// Uniform predict surface

inline Vector predict(const Regressor& r, const Eigen::Ref<const Eigen::RowVectorXd>& x) {
    if (x.size() != r.input_dim) throw std::invalid_argument("predict: dimension mismatch");
    Vector out(r.output_width);
    if (const auto* knn = std::get_if<models::Knn>(&r.state)) {
        std::vector<std::pair<double, Index>> buf;
        Eigen::RowVectorXd row(r.output_width);
        detail::knn_predict_into(*knn, x, buf, row);
        out = row.transpose();
    } else if (const auto* gb = std::get_if<models::Gb>(&r.state)) {
        out = gb->base;
        for (const auto& tree : gb->trees) out += gb->cfg.learning_rate * tree.predict(x);
    } else {
        const auto& lin = std::get<models::Linear>(r.state);
        out(0) = x.dot(lin.coef) + lin.intercept;
    }
    return out;
}

/// Row-wise batched prediction; results are identical to looping predict().
inline Matrix predict_matrix(const Regressor& r, const Matrix& X) {
    if (X.cols() != r.input_dim) throw std::invalid_argument("predict_matrix: dimension mismatch");
    Matrix out(X.rows(), r.output_width);
    if (const auto* knn = std::get_if<models::Knn>(&r.state)) {
        std::vector<std::pair<double, Index>> buf;
        Eigen::RowVectorXd row(r.output_width);
        for (Index i = 0; i < X.rows(); ++i) {
            detail::knn_predict_into(*knn, X.row(i), buf, row);
            out.row(i) = row;
        }
    } else {
        for (Index i = 0; i < X.rows(); ++i) out.row(i) = predict(r, X.row(i)).transpose();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Serialization (versioned)

inline void to_json(nlohmann::json& j, const Regressor& r) {
    j["format_version"] = 1;
    j["kind"] = to_string(r.kind);
    j["input_dim"] = r.input_dim;
    j["output_width"] = r.output_width;
    if (const auto* knn = std::get_if<models::Knn>(&r.state)) {
        j["config"] = knn->cfg;
        std::vector<std::vector<double>> x(static_cast<std::size_t>(knn->train_x.rows()));
        std::vector<std::vector<double>> y(static_cast<std::size_t>(knn->train_y.rows()));
        for (Index i = 0; i < knn->train_x.rows(); ++i) {
            x[static_cast<std::size_t>(i)] = {knn->train_x.row(i).begin(), knn->train_x.row(i).end()};
            y[static_cast<std::size_t>(i)] = {knn->train_y.row(i).begin(), knn->train_y.row(i).end()};
        }
        j["train_x"] = x;
        j["train_y"] = y;
    } else if (const auto* gb = std::get_if<models::Gb>(&r.state)) {
        j["config"] = gb->cfg;
        j["multi_output"] = gb->multi_output;
        j["base"] = std::vector<double>(gb->base.begin(), gb->base.end());
        auto& trees = j["trees"] = nlohmann::json::array();
        for (const auto& t : gb->trees) trees.push_back(t.nodes());
    } else {
        const auto& lin = std::get<models::Linear>(r.state);
        j["coef"] = std::vector<double>(lin.coef.begin(), lin.coef.end());
        j["intercept"] = lin.intercept;
    }
}

inline void from_json(const nlohmann::json& j, Regressor& r) {
    if (j.at("format_version").get<int>() != 1)
        throw std::runtime_error("Regressor: unsupported format version");
    r.kind = regressor_kind_from_string(j.at("kind").get<std::string>());
    r.input_dim = j.at("input_dim").get<Index>();
    r.output_width = j.at("output_width").get<Index>();
    auto to_matrix = [](const nlohmann::json& arr) {
        auto rows = arr.get<std::vector<std::vector<double>>>();
        Matrix m(static_cast<Index>(rows.size()),
                 rows.empty() ? 0 : static_cast<Index>(rows[0].size()));
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t c = 0; c < rows[i].size(); ++c)
                m(static_cast<Index>(i), static_cast<Index>(c)) = rows[i][c];
        return m;
    };
    switch (r.kind) {
        case RegressorKind::knn: {
            models::Knn knn;
            knn.cfg = j.at("config").get<KnnConfig>();
            knn.train_x = to_matrix(j.at("train_x"));
            knn.train_y = to_matrix(j.at("train_y"));
            r.state = std::move(knn);
            break;
        }
        case RegressorKind::gb: {
            models::Gb gb;
            gb.cfg = j.at("config").get<GbConfig>();
            gb.multi_output = j.at("multi_output").get<bool>();
            auto base = j.at("base").get<std::vector<double>>();
            gb.base = Eigen::Map<Vector>(base.data(), static_cast<Index>(base.size()));
            for (const auto& tj : j.at("trees"))
                gb.trees.push_back(RegressionTree::from_nodes(
                    tj.get<std::vector<RegressionTree::Node>>()));
            r.state = std::move(gb);
            break;
        }
        default: {
            models::Linear lin;
            auto coef = j.at("coef").get<std::vector<double>>();
            lin.coef = Eigen::Map<Vector>(coef.data(), static_cast<Index>(coef.size()));
            lin.intercept = j.at("intercept").get<double>();
            r.state = std::move(lin);
            break;
        }
    }
}

}  // namespace ctp
