#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctp/clustering.hpp"
#include "ctp/dataset.hpp"
#include "ctp/regressors.hpp"
#include "json.hpp"

namespace ctp {

/// Which clusterer to run, with per-method parameters.
struct ClustererSpec {
    ClusterMethod method = ClusterMethod::kmeans;
    KMeansConfig kmeans;
    OtKMeansConfig ot;
    double dbscan_eps = 0.5;
    int dbscan_min_samples = 5;
    double meanshift_bandwidth = 1.0;
};

/// Which regressor each cluster gets. GB with multi_output trains one
/// vector-output model per cluster; every other combination trains one
/// single-output model per load.
struct RegressorSpec {
    RegressorKind kind = RegressorKind::knn;
    KnnConfig knn;
    GbConfig gb;
    bool gb_multi_output = true;
    double lasso_lambda = 0.01;
    double svr_c = 1.0;
    double svr_epsilon = 0.1;

    bool per_load(Index /*L*/) const {
        return !(kind == RegressorKind::gb && gb_multi_output);
    }
    Index min_cluster_size() const {
        Index need = 2;
        if (kind == RegressorKind::knn) need = std::max<Index>(need, knn.n_neighbors);
        return need;
    }
};

inline void to_json(nlohmann::json& j, const ClustererSpec& s) {
    j = {{"method", to_string(s.method)},
         {"kmeans", s.kmeans},
         {"ot_kmeans", s.ot},
         {"dbscan", {{"eps", s.dbscan_eps}, {"min_samples", s.dbscan_min_samples}}},
         {"meanshift", {{"bandwidth", s.meanshift_bandwidth}}}};
}
inline void from_json(const nlohmann::json& j, ClustererSpec& s) {
    if (j.contains("method")) s.method = cluster_method_from_string(j["method"].get<std::string>());
    if (j.contains("kmeans")) s.kmeans = j["kmeans"].get<KMeansConfig>();
    if (j.contains("ot_kmeans")) s.ot = j["ot_kmeans"].get<OtKMeansConfig>();
    if (j.contains("dbscan")) {
        s.dbscan_eps = j["dbscan"].value("eps", s.dbscan_eps);
        s.dbscan_min_samples = j["dbscan"].value("min_samples", s.dbscan_min_samples);
    }
    if (j.contains("meanshift"))
        s.meanshift_bandwidth = j["meanshift"].value("bandwidth", s.meanshift_bandwidth);
}
inline void to_json(nlohmann::json& j, const RegressorSpec& s) {
    j = {{"kind", to_string(s.kind)},
         {"knn", s.knn},
         {"gb", s.gb},
         {"gb_multi_output", s.gb_multi_output},
         {"lasso_lambda", s.lasso_lambda},
         {"svr_c", s.svr_c},
         {"svr_epsilon", s.svr_epsilon}};
}
inline void from_json(const nlohmann::json& j, RegressorSpec& s) {
    if (j.contains("kind")) s.kind = regressor_kind_from_string(j["kind"].get<std::string>());
    if (j.contains("knn")) s.knn = j["knn"].get<KnnConfig>();
    if (j.contains("gb")) s.gb = j["gb"].get<GbConfig>();
    s.gb_multi_output = j.value("gb_multi_output", s.gb_multi_output);
    s.lasso_lambda = j.value("lasso_lambda", s.lasso_lambda);
    s.svr_c = j.value("svr_c", s.svr_c);
    s.svr_epsilon = j.value("svr_epsilon", s.svr_epsilon);
}

inline ClusterModel fit_clusterer(const Matrix& X, const ClustererSpec& spec) {
    switch (spec.method) {
        case ClusterMethod::kmeans: return kmeans_fit(X, spec.kmeans);
        case ClusterMethod::ot_kmeans: return ot_kmeans_fit(X, spec.ot);
        case ClusterMethod::dbscan: return dbscan_fit(X, spec.dbscan_eps, spec.dbscan_min_samples);
        case ClusterMethod::meanshift: return meanshift_fit(X, spec.meanshift_bandwidth);
    }
    throw std::invalid_argument("fit_clusterer: bad method");
}

/// The trained models of one cluster: L single-output regressors, or one
/// multi-output regressor.
struct RegressorBank {
    std::vector<Regressor> models;
    bool multi_output = false;
    Index train_count = 0;

    Vector predict_one(const Eigen::Ref<const Eigen::RowVectorXd>& x, Index L) const {
        if (multi_output) return predict(models.front(), x);
        Vector out(L);
        for (Index l = 0; l < L; ++l) out(l) = predict(models[static_cast<std::size_t>(l)], x)(0);
        return out;
    }
};

struct TrainedPipeline {
    ClusterModel cluster_model;
    std::vector<RegressorBank> banks;
    std::optional<StandardScaler> scaler;  // the scaler the features came through
    Index n_loads = 0;
    Index input_dim = 0;

    Index k() const { return cluster_model.k(); }
    std::vector<Index> cluster_counts() const {
        std::vector<Index> c;
        c.reserve(banks.size());
        for (const auto& b : banks) c.push_back(b.train_count);
        return c;
    }
};

struct PredictionVector {
    Vector values;
    Index assigned_cluster = 0;
};

/// Fit a regressor bank on one cluster's samples.
inline RegressorBank fit_bank(const Matrix& X, const Matrix& Y, const RegressorSpec& spec) {
    RegressorBank bank;
    bank.train_count = X.rows();
    bank.multi_output = !spec.per_load(Y.cols());
    if (bank.multi_output) {
        bank.models.push_back(gb_fit(X, Y, spec.gb, true));
        return bank;
    }
    for (Index l = 0; l < Y.cols(); ++l) {
        Matrix col = Y.col(l);
        switch (spec.kind) {
            case RegressorKind::knn: bank.models.push_back(knn_fit(X, col, spec.knn)); break;
            case RegressorKind::gb: bank.models.push_back(gb_fit(X, col, spec.gb, false)); break;
            case RegressorKind::ols: bank.models.push_back(ols_fit(X, col)); break;
            case RegressorKind::lasso:
                bank.models.push_back(lasso_fit(X, col, spec.lasso_lambda));
                break;
            case RegressorKind::linsvr:
                bank.models.push_back(linsvr_fit(X, col, spec.svr_c, spec.svr_epsilon));
                break;
        }
    }
    return bank;
}

/// Algorithm: divide the training set by clustering, then train one regressor
/// bank per cluster on that cluster's samples only.
inline TrainedPipeline train_divide_conquer(const Dataset& train, const ClustererSpec& clusterer,
                                            const RegressorSpec& regressor) {
    train.validate();
    TrainedPipeline p;
    p.cluster_model = fit_clusterer(train.features, clusterer);
    p.n_loads = train.loads();
    p.input_dim = train.dim();

    const Index k = p.cluster_model.k();
    std::vector<std::vector<Index>> members(static_cast<std::size_t>(k));
    for (Index i = 0; i < train.rows(); ++i)
        members[static_cast<std::size_t>(p.cluster_model.labels[static_cast<std::size_t>(i)])].push_back(i);

    const Index need = regressor.min_cluster_size();
    for (Index j = 0; j < k; ++j) {
        const auto& rows = members[static_cast<std::size_t>(j)];
        if (static_cast<Index>(rows.size()) < need)
            throw std::runtime_error("train_divide_conquer: cluster " + std::to_string(j) +
                                     " has " + std::to_string(rows.size()) +
                                     " samples, need at least " + std::to_string(need));
    }
    for (Index j = 0; j < k; ++j) {
        const auto& rows = members[static_cast<std::size_t>(j)];
        Matrix xj(static_cast<Index>(rows.size()), train.dim());
        Matrix yj(static_cast<Index>(rows.size()), train.loads());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            xj.row(static_cast<Index>(i)) = train.features.row(rows[i]);
            yj.row(static_cast<Index>(i)) = train.targets.row(rows[i]);
        }
        p.banks.push_back(fit_bank(xj, yj, regressor));
    }
    return p;
}

/// Nearest-centroid assignment (squared Euclidean, ties to the lowest index).
inline Index assign_to_cluster(const Eigen::Ref<const Eigen::RowVectorXd>& x,
                               const ClusterModel& c) {
    return nearest_centroid(x, c.centroids);
}

inline PredictionVector predict_sample(const TrainedPipeline& p,
                                       const Eigen::Ref<const Eigen::RowVectorXd>& x) {
    if (x.size() != p.input_dim) throw std::invalid_argument("predict_sample: dimension mismatch");
    PredictionVector out;
    out.assigned_cluster = assign_to_cluster(x, p.cluster_model);
    out.values = p.banks[static_cast<std::size_t>(out.assigned_cluster)].predict_one(x, p.n_loads);
    return out;
}

/// Vectorized assignment plus per-cluster grouped regression. The elapsed
/// wall-clock covers assignment and regression only; the input is assumed
/// already scaled. Results are identical to a predict_sample loop.
inline std::pair<Matrix, double> predict_batch(const TrainedPipeline& p, const Matrix& X_test) {
    if (X_test.cols() != p.input_dim && X_test.rows() > 0)
        throw std::invalid_argument("predict_batch: dimension mismatch");
    Matrix out(X_test.rows(), p.n_loads);
    auto t0 = std::chrono::steady_clock::now();
    std::vector<std::vector<Index>> groups(static_cast<std::size_t>(p.k()));
    for (Index i = 0; i < X_test.rows(); ++i)
        groups[static_cast<std::size_t>(assign_to_cluster(X_test.row(i), p.cluster_model))].push_back(i);
    for (Index j = 0; j < p.k(); ++j) {
        const auto& rows = groups[static_cast<std::size_t>(j)];
        if (rows.empty()) continue;
        const RegressorBank& bank = p.banks[static_cast<std::size_t>(j)];
        for (Index i : rows) out.row(i) = bank.predict_one(X_test.row(i), p.n_loads).transpose();
    }
    auto t1 = std::chrono::steady_clock::now();
    return {std::move(out), std::chrono::duration<double>(t1 - t0).count()};
}

// ---------------------------------------------------------------------------
// Directory serialization: cluster model + one file per bank + manifest.

inline void save_pipeline(const TrainedPipeline& p, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    {
        nlohmann::json j = p.cluster_model;
        std::ofstream out(fs::path(dir) / "cluster_model.json");
        out << j.dump() << '\n';
    }
    for (std::size_t b = 0; b < p.banks.size(); ++b) {
        nlohmann::json j;
        j["multi_output"] = p.banks[b].multi_output;
        j["train_count"] = p.banks[b].train_count;
        auto& arr = j["models"] = nlohmann::json::array();
        for (const auto& m : p.banks[b].models) arr.push_back(m);
        std::ofstream out(fs::path(dir) / ("bank_" + std::to_string(b) + ".json"));
        out << j.dump() << '\n';
    }
    nlohmann::json manifest;
    manifest["format_version"] = 1;
    manifest["n_loads"] = p.n_loads;
    manifest["input_dim"] = p.input_dim;
    manifest["n_banks"] = p.banks.size();
    manifest["cluster_counts"] = p.cluster_counts();
    if (p.scaler) manifest["scaler"] = *p.scaler;
    std::ofstream out(fs::path(dir) / "manifest.json");
    out << manifest.dump(2) << '\n';
}

inline TrainedPipeline load_pipeline(const std::string& dir) {
    namespace fs = std::filesystem;
    auto read = [](const fs::path& p) {
        std::ifstream in(p);
        if (!in) throw std::runtime_error("load_pipeline: cannot open " + p.string());
        return nlohmann::json::parse(in);
    };
    nlohmann::json manifest = read(fs::path(dir) / "manifest.json");
    if (manifest.at("format_version").get<int>() != 1)
        throw std::runtime_error("load_pipeline: unsupported format version");
    TrainedPipeline p;
    p.n_loads = manifest.at("n_loads").get<Index>();
    p.input_dim = manifest.at("input_dim").get<Index>();
    if (manifest.contains("scaler")) p.scaler = manifest["scaler"].get<StandardScaler>();
    p.cluster_model = read(fs::path(dir) / "cluster_model.json").get<ClusterModel>();
    const auto n_banks = manifest.at("n_banks").get<std::size_t>();
    for (std::size_t b = 0; b < n_banks; ++b) {
        nlohmann::json j = read(fs::path(dir) / ("bank_" + std::to_string(b) + ".json"));
        RegressorBank bank;
        bank.multi_output = j.at("multi_output").get<bool>();
        bank.train_count = j.at("train_count").get<Index>();
        for (const auto& mj : j.at("models")) bank.models.push_back(mj.get<Regressor>());
        p.banks.push_back(std::move(bank));
    }
    if (static_cast<Index>(p.banks.size()) != p.cluster_model.k())
        throw std::runtime_error("load_pipeline: bank count does not match cluster count");
    return p;
}

}  // namespace ctp
