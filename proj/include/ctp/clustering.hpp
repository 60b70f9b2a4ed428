#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <deque>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctp/dataset.hpp"
#include "ctp/rng.hpp"
#include "ctp/sinkhorn.hpp"
#include "json.hpp"

namespace ctp {

enum class ClusterMethod { kmeans, ot_kmeans, dbscan, meanshift };

inline std::string to_string(ClusterMethod m) {
    switch (m) {
        case ClusterMethod::kmeans: return "kmeans";
        case ClusterMethod::ot_kmeans: return "ot_kmeans";
        case ClusterMethod::dbscan: return "dbscan";
        case ClusterMethod::meanshift: return "meanshift";
    }
    return "?";
}

inline ClusterMethod cluster_method_from_string(const std::string& s) {
    if (s == "kmeans") return ClusterMethod::kmeans;
    if (s == "ot_kmeans") return ClusterMethod::ot_kmeans;
    if (s == "dbscan") return ClusterMethod::dbscan;
    if (s == "meanshift") return ClusterMethod::meanshift;
    throw std::invalid_argument("unknown cluster method: " + s);
}

/// Trained partition: centroids plus training-point labels. Every centroid
/// has at least one member, and centroids equal their members' means.
struct ClusterModel {
    Matrix centroids;            // k x d
    std::vector<Index> labels;   // m, values in [0, k)
    ClusterMethod method = ClusterMethod::kmeans;

    double inertia = 0.0;                 // final within-cluster SSE
    std::vector<double> sse_history;      // per-iteration SSE of the winning run
    std::vector<double> restart_sse;      // final SSE per restart (kmeans)
    nlohmann::json config_echo;

    Index k() const { return centroids.rows(); }
};

struct KMeansConfig {
    Index k = 0;
    int n_init = 10;
    int max_iter = 300;
    double tol = 1e-6;
    std::uint64_t seed = 0;
};

struct OtKMeansConfig {
    Index k = 0;
    double reg = 0.1;
    int sinkhorn_max_iter = 1000;
    double sinkhorn_tol = 1e-9;
    int outer_max_iter = 100;
    double tol = 1e-6;
    std::uint64_t seed = 0;
};

inline void to_json(nlohmann::json& j, const KMeansConfig& c) {
    j = {{"k", c.k}, {"n_init", c.n_init}, {"max_iter", c.max_iter},
         {"tol", c.tol}, {"seed", c.seed}};
}
inline void from_json(const nlohmann::json& j, KMeansConfig& c) {
    c.k = j.value("k", c.k);
    c.n_init = j.value("n_init", c.n_init);
    c.max_iter = j.value("max_iter", c.max_iter);
    c.tol = j.value("tol", c.tol);
    c.seed = j.value("seed", c.seed);
}
inline void to_json(nlohmann::json& j, const OtKMeansConfig& c) {
    j = {{"k", c.k},
         {"reg", c.reg},
         {"sinkhorn_max_iter", c.sinkhorn_max_iter},
         {"sinkhorn_tol", c.sinkhorn_tol},
         {"outer_max_iter", c.outer_max_iter},
         {"tol", c.tol},
         {"seed", c.seed}};
}
inline void from_json(const nlohmann::json& j, OtKMeansConfig& c) {
    c.k = j.value("k", c.k);
    c.reg = j.value("reg", c.reg);
    c.sinkhorn_max_iter = j.value("sinkhorn_max_iter", c.sinkhorn_max_iter);
    c.sinkhorn_tol = j.value("sinkhorn_tol", c.sinkhorn_tol);
    c.outer_max_iter = j.value("outer_max_iter", c.outer_max_iter);
    c.tol = j.value("tol", c.tol);
    c.seed = j.value("seed", c.seed);
}

/// Index of the centroid nearest to x (squared Euclidean, lowest index wins
/// ties). This is the assignment rule shared by training and inference.
inline Index nearest_centroid(const Eigen::Ref<const Eigen::RowVectorXd>& x,
                              const Matrix& centroids) {
    if (x.size() != centroids.cols())
        throw std::invalid_argument("nearest_centroid: dimension mismatch");
    Index best = 0;
    double best_d = (x - centroids.row(0)).squaredNorm();
    for (Index j = 1; j < centroids.rows(); ++j) {
        double d = (x - centroids.row(j)).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = j;
        }
    }
    return best;
}

namespace detail {

inline void check_fit_input(const Matrix& X, Index k) {
    if (X.rows() < 1) throw std::invalid_argument("clustering: empty input");
    if (!X.allFinite()) throw std::invalid_argument("clustering: non-finite input");
    if (k < 1) throw std::invalid_argument("clustering: k must be >= 1");
    if (k > X.rows()) throw std::invalid_argument("clustering: k > number of points");
}

inline Matrix kmeanspp_init(const Matrix& X, Index k, Rng& rng) {
    const Index m = X.rows();
    Matrix centroids(k, X.cols());
    centroids.row(0) = X.row(static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(m))));
    Vector dist2 = (X.rowwise() - centroids.row(0)).rowwise().squaredNorm();
    for (Index j = 1; j < k; ++j) {
        double total = dist2.sum();
        Index pick = -1;
        if (total > 0.0) {
            double r = rng.uniform() * total;
            double acc = 0.0;
            for (Index i = 0; i < m; ++i) {
                acc += dist2(i);
                if (acc > r) {
                    pick = i;
                    break;
                }
            }
            if (pick < 0) {  // fell off the end from rounding; take last positive
                for (Index i = m - 1; i >= 0; --i)
                    if (dist2(i) > 0.0) {
                        pick = i;
                        break;
                    }
            }
        }
        if (pick < 0) pick = static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(m)));
        centroids.row(j) = X.row(pick);
        dist2 = dist2.cwiseMin((X.rowwise() - centroids.row(j)).rowwise().squaredNorm());
    }
    return centroids;
}

inline double assign_labels(const Matrix& X, const Matrix& centroids, std::vector<Index>& labels,
                            Index* changed = nullptr) {
    const Index m = X.rows();
    labels.resize(static_cast<std::size_t>(m));
    double sse = 0.0;
    Index n_changed = 0;
    for (Index i = 0; i < m; ++i) {
        Index j = nearest_centroid(X.row(i), centroids);
        if (labels[static_cast<std::size_t>(i)] != j) ++n_changed;
        labels[static_cast<std::size_t>(i)] = j;
        sse += (X.row(i) - centroids.row(j)).squaredNorm();
    }
    if (changed) *changed = n_changed;
    return sse;
}

// Mean update; empty clusters are re-seeded on the member farthest from its
// current centroid (label moves with it, so no cluster stays empty).
inline Matrix update_centroids(const Matrix& X, std::vector<Index>& labels, Index k,
                               const Matrix& prev) {
    const Index m = X.rows();
    Matrix sums = Matrix::Zero(k, X.cols());
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < m; ++i) {
        sums.row(labels[static_cast<std::size_t>(i)]) += X.row(i);
        ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
    }
    Matrix out(k, X.cols());
    for (Index j = 0; j < k; ++j) {
        if (counts[static_cast<std::size_t>(j)] > 0)
            out.row(j) = sums.row(j) / static_cast<double>(counts[static_cast<std::size_t>(j)]);
        else
            out.row(j) = prev.row(j);
    }
    for (Index j = 0; j < k; ++j) {
        if (counts[static_cast<std::size_t>(j)] > 0) continue;
        Index far = -1;
        double far_d = -1.0;
        for (Index i = 0; i < m; ++i) {
            Index owner = labels[static_cast<std::size_t>(i)];
            if (counts[static_cast<std::size_t>(owner)] <= 1) continue;  // keep donors nonempty
            double d = (X.row(i) - out.row(owner)).squaredNorm();
            if (d > far_d) {
                far_d = d;
                far = i;
            }
        }
        if (far < 0) continue;  // all clusters singletons; nothing to donate
        Index owner = labels[static_cast<std::size_t>(far)];
        --counts[static_cast<std::size_t>(owner)];
        sums.row(owner) -= X.row(far);
        out.row(owner) = sums.row(owner) / static_cast<double>(counts[static_cast<std::size_t>(owner)]);
        labels[static_cast<std::size_t>(far)] = j;
        counts[static_cast<std::size_t>(j)] = 1;
        sums.row(j) = X.row(far);
        out.row(j) = X.row(far);
    }
    return out;
}

}  // namespace detail

/// Lloyd iterations with k-means++ seeding; of n_init runs, the model with the
/// lowest within-cluster SSE wins. Per-iteration SSE is recorded and is
/// non-increasing within a run.
inline ClusterModel kmeans_fit(const Matrix& X, const KMeansConfig& cfg) {
    detail::check_fit_input(X, cfg.k);
    if (cfg.n_init < 1) throw std::invalid_argument("kmeans: n_init must be >= 1");

    ClusterModel best;
    best.method = ClusterMethod::kmeans;
    best.inertia = std::numeric_limits<double>::infinity();
    for (int run = 0; run < cfg.n_init; ++run) {
        Rng rng(mix_seed(cfg.seed, seed_tag("kmeans"), static_cast<std::uint64_t>(run)));
        Matrix centroids = detail::kmeanspp_init(X, cfg.k, rng);
        std::vector<Index> labels(static_cast<std::size_t>(X.rows()), -1);
        std::vector<double> history;
        double sse = detail::assign_labels(X, centroids, labels);
        history.push_back(sse);
        for (int iter = 0; iter < cfg.max_iter; ++iter) {
            Matrix updated = detail::update_centroids(X, labels, cfg.k, centroids);
            double shift = (updated - centroids).rowwise().norm().maxCoeff();
            centroids = std::move(updated);
            Index changed = 0;
            sse = detail::assign_labels(X, centroids, labels, &changed);
            history.push_back(sse);
            if (changed == 0 || shift < cfg.tol) break;
        }
        // Re-anchor centroids on the final labels so centroid == member mean
        // holds exactly; labels are left alone.
        centroids = detail::update_centroids(X, labels, cfg.k, centroids);
        sse = 0.0;
        for (Index i = 0; i < X.rows(); ++i)
            sse += (X.row(i) - centroids.row(labels[static_cast<std::size_t>(i)])).squaredNorm();
        history.push_back(sse);
        best.restart_sse.push_back(sse);
        if (sse < best.inertia) {
            best.inertia = sse;
            best.centroids = centroids;
            best.labels = labels;
            best.sse_history = std::move(history);
        }
    }
    best.config_echo = cfg;
    return best;
}

/// K-means variant whose assignment step solves balanced entropic OT between
/// the points (uniform 1/m) and the clusters (uniform 1/k); hard labels are
/// the per-point argmax of the transport plan.
inline ClusterModel ot_kmeans_fit(const Matrix& X, const OtKMeansConfig& cfg) {
    detail::check_fit_input(X, cfg.k);
    if (!(cfg.reg > 0.0)) throw std::invalid_argument("ot_kmeans: reg must be positive");
    const Index m = X.rows();
    const Index k = cfg.k;

    Rng rng(mix_seed(cfg.seed, seed_tag("ot-kmeans")));
    Matrix centroids = detail::kmeanspp_init(X, k, rng);
    Vector mu = Vector::Constant(m, 1.0 / static_cast<double>(m));
    Vector nu = Vector::Constant(k, 1.0 / static_cast<double>(k));
    Vector u, v;  // warm-started across outer iterations
    std::vector<Index> labels(static_cast<std::size_t>(m), 0);

    Matrix cost(m, k);
    for (int outer = 0; outer < cfg.outer_max_iter; ++outer) {
        for (Index j = 0; j < k; ++j)
            cost.col(j) = (X.rowwise() - centroids.row(j)).rowwise().squaredNorm();
        sinkhorn_potentials(cost, mu, nu, cfg.reg, cfg.sinkhorn_max_iter, cfg.sinkhorn_tol, u, v);
        // Row argmax of the plan; u_i is constant within a row, so compare
        // v_j - cost_ij/reg.
        for (Index i = 0; i < m; ++i) {
            Index arg = 0;
            double bestv = v(0) - cost(i, 0) / cfg.reg;
            for (Index j = 1; j < k; ++j) {
                double val = v(j) - cost(i, j) / cfg.reg;
                if (val > bestv) {
                    bestv = val;
                    arg = j;
                }
            }
            labels[static_cast<std::size_t>(i)] = arg;
        }
        Matrix updated = detail::update_centroids(X, labels, k, centroids);
        double shift = (updated - centroids).rowwise().norm().maxCoeff();
        centroids = std::move(updated);
        if (shift < cfg.tol) break;
    }
    ClusterModel model;
    model.method = ClusterMethod::ot_kmeans;
    model.centroids = centroids;
    model.labels = labels;
    model.inertia = 0.0;
    for (Index i = 0; i < m; ++i)
        model.inertia += (X.row(i) - centroids.row(labels[static_cast<std::size_t>(i)])).squaredNorm();
    model.config_echo = cfg;
    return model;
}

/// Density clustering; min_samples counts the point itself. Noise points are
/// folded onto their nearest centroid so downstream per-cluster training sees
/// every sample. Throws if no cluster forms.
inline ClusterModel dbscan_fit(const Matrix& X, double eps, int min_samples) {
    if (X.rows() < 1) throw std::invalid_argument("dbscan: empty input");
    if (!X.allFinite()) throw std::invalid_argument("dbscan: non-finite input");
    if (!(eps > 0.0)) throw std::invalid_argument("dbscan: eps must be positive");
    if (min_samples < 1) throw std::invalid_argument("dbscan: min_samples must be >= 1");
    const Index m = X.rows();
    const double eps2 = eps * eps;

    std::vector<std::vector<Index>> neighbors(static_cast<std::size_t>(m));
    for (Index i = 0; i < m; ++i) {
        neighbors[static_cast<std::size_t>(i)].push_back(i);
        for (Index j = i + 1; j < m; ++j)
            if ((X.row(i) - X.row(j)).squaredNorm() <= eps2) {
                neighbors[static_cast<std::size_t>(i)].push_back(j);
                neighbors[static_cast<std::size_t>(j)].push_back(i);
            }
    }
    std::vector<char> core(static_cast<std::size_t>(m), 0);
    for (Index i = 0; i < m; ++i)
        core[static_cast<std::size_t>(i)] =
            static_cast<Index>(neighbors[static_cast<std::size_t>(i)].size()) >= min_samples;

    std::vector<Index> labels(static_cast<std::size_t>(m), -1);
    Index n_clusters = 0;
    std::deque<Index> queue;
    for (Index i = 0; i < m; ++i) {
        if (!core[static_cast<std::size_t>(i)] || labels[static_cast<std::size_t>(i)] != -1) continue;
        labels[static_cast<std::size_t>(i)] = n_clusters;
        queue.push_back(i);
        while (!queue.empty()) {
            Index p = queue.front();
            queue.pop_front();
            if (!core[static_cast<std::size_t>(p)]) continue;
            for (Index q : neighbors[static_cast<std::size_t>(p)]) {
                if (labels[static_cast<std::size_t>(q)] != -1) continue;
                labels[static_cast<std::size_t>(q)] = n_clusters;
                queue.push_back(q);
            }
        }
        ++n_clusters;
    }
    if (n_clusters == 0)
        throw std::runtime_error("dbscan: all points classified as noise; increase eps or lower min_samples");

    Matrix centroids = Matrix::Zero(n_clusters, X.cols());
    std::vector<Index> counts(static_cast<std::size_t>(n_clusters), 0);
    for (Index i = 0; i < m; ++i) {
        Index l = labels[static_cast<std::size_t>(i)];
        if (l < 0) continue;
        centroids.row(l) += X.row(i);
        ++counts[static_cast<std::size_t>(l)];
    }
    for (Index j = 0; j < n_clusters; ++j) centroids.row(j) /= static_cast<double>(counts[static_cast<std::size_t>(j)]);
    bool had_noise = false;
    for (Index i = 0; i < m; ++i)
        if (labels[static_cast<std::size_t>(i)] < 0) {
            labels[static_cast<std::size_t>(i)] = nearest_centroid(X.row(i), centroids);
            had_noise = true;
        }
    if (had_noise) {
        centroids.setZero();
        std::fill(counts.begin(), counts.end(), 0);
        for (Index i = 0; i < m; ++i) {
            centroids.row(labels[static_cast<std::size_t>(i)]) += X.row(i);
            ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
        }
        for (Index j = 0; j < n_clusters; ++j)
            centroids.row(j) /= static_cast<double>(counts[static_cast<std::size_t>(j)]);
    }
    ClusterModel model;
    model.method = ClusterMethod::dbscan;
    model.centroids = std::move(centroids);
    model.labels = std::move(labels);
    model.config_echo = {{"eps", eps}, {"min_samples", min_samples}};
    return model;
}

/// Flat-kernel mean shift: every point iterates to its window mean; modes
/// closer than bandwidth/2 merge; labels go to the nearest surviving mode.
inline ClusterModel meanshift_fit(const Matrix& X, double bandwidth) {
    if (X.rows() < 1) throw std::invalid_argument("meanshift: empty input");
    if (!X.allFinite()) throw std::invalid_argument("meanshift: non-finite input");
    if (!(bandwidth > 0.0)) throw std::invalid_argument("meanshift: bandwidth must be positive");
    const Index m = X.rows();
    const double bw2 = bandwidth * bandwidth;
    const double shift_tol = 1e-6 * bandwidth;
    const int max_iter = 500;

    Matrix modes(m, X.cols());
    Eigen::RowVectorXd x(X.cols()), mean(X.cols());
    for (Index i = 0; i < m; ++i) {
        x = X.row(i);
        for (int it = 0; it < max_iter; ++it) {
            mean.setZero();
            Index count = 0;
            for (Index j = 0; j < m; ++j)
                if ((X.row(j) - x).squaredNorm() <= bw2) {
                    mean += X.row(j);
                    ++count;
                }
            if (count == 0) break;
            mean /= static_cast<double>(count);
            double shift = (mean - x).norm();
            x = mean;
            if (shift < shift_tol) break;
        }
        modes.row(i) = x;
    }
    // Merge converged modes within bandwidth/2 (first-come ordering).
    std::vector<Index> mode_rows;
    for (Index i = 0; i < m; ++i) {
        bool found = false;
        for (Index r : mode_rows)
            if ((modes.row(i) - modes.row(r)).norm() < bandwidth / 2.0) {
                found = true;
                break;
            }
        if (!found) mode_rows.push_back(i);
    }
    Matrix centers(static_cast<Index>(mode_rows.size()), X.cols());
    for (std::size_t r = 0; r < mode_rows.size(); ++r) centers.row(static_cast<Index>(r)) = modes.row(mode_rows[r]);

    std::vector<Index> labels(static_cast<std::size_t>(m));
    std::vector<Index> counts(mode_rows.size(), 0);
    for (Index i = 0; i < m; ++i) {
        labels[static_cast<std::size_t>(i)] = nearest_centroid(X.row(i), centers);
        ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
    }
    // Compact away empty modes, then recompute centroids as member means.
    std::vector<Index> remap(mode_rows.size(), -1);
    Index kept = 0;
    for (std::size_t j = 0; j < mode_rows.size(); ++j)
        if (counts[j] > 0) remap[j] = kept++;
    Matrix centroids = Matrix::Zero(kept, X.cols());
    std::vector<Index> kept_counts(static_cast<std::size_t>(kept), 0);
    for (Index i = 0; i < m; ++i) {
        Index l = remap[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
        labels[static_cast<std::size_t>(i)] = l;
        centroids.row(l) += X.row(i);
        ++kept_counts[static_cast<std::size_t>(l)];
    }
    for (Index j = 0; j < kept; ++j) centroids.row(j) /= static_cast<double>(kept_counts[static_cast<std::size_t>(j)]);

    ClusterModel model;
    model.method = ClusterMethod::meanshift;
    model.centroids = std::move(centroids);
    model.labels = std::move(labels);
    model.config_echo = {{"bandwidth", bandwidth}};
    return model;
}

/// Mean silhouette coefficient with Euclidean distance; singleton clusters
/// contribute s_i = 0. Requires at least two distinct labels.
inline double silhouette(const Matrix& X, const std::vector<Index>& labels) {
    const Index m = X.rows();
    if (static_cast<Index>(labels.size()) != m)
        throw std::invalid_argument("silhouette: label count mismatch");
    Index k = 0;
    for (Index l : labels) {
        if (l < 0) throw std::invalid_argument("silhouette: negative label");
        k = std::max(k, l + 1);
    }
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (Index l : labels) ++counts[static_cast<std::size_t>(l)];
    Index nonempty = 0;
    for (Index c : counts) nonempty += c > 0;
    if (nonempty < 2) throw std::invalid_argument("silhouette: need at least 2 clusters");

    // Transposed copy: points as contiguous columns.
    Matrix xt = X.transpose();
    std::vector<double> sums(static_cast<std::size_t>(m) * static_cast<std::size_t>(k), 0.0);
    for (Index i = 0; i < m; ++i) {
        const auto xi = xt.col(i);
        for (Index j = i + 1; j < m; ++j) {
            double d = (xt.col(j) - xi).norm();
            sums[static_cast<std::size_t>(i) * k + static_cast<std::size_t>(labels[static_cast<std::size_t>(j)])] += d;
            sums[static_cast<std::size_t>(j) * k + static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])] += d;
        }
    }
    double total = 0.0;
    for (Index i = 0; i < m; ++i) {
        Index own = labels[static_cast<std::size_t>(i)];
        if (counts[static_cast<std::size_t>(own)] == 1) continue;  // s_i = 0
        double a = sums[static_cast<std::size_t>(i) * k + static_cast<std::size_t>(own)] /
                   static_cast<double>(counts[static_cast<std::size_t>(own)] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (Index c = 0; c < k; ++c) {
            if (c == own || counts[static_cast<std::size_t>(c)] == 0) continue;
            b = std::min(b, sums[static_cast<std::size_t>(i) * k + static_cast<std::size_t>(c)] /
                                static_cast<double>(counts[static_cast<std::size_t>(c)]));
        }
        double denom = std::max(a, b);
        if (denom > 0.0) total += (b - a) / denom;
    }
    return total / static_cast<double>(m);
}

inline void to_json(nlohmann::json& j, const ClusterModel& m) {
    std::vector<std::vector<double>> cents(static_cast<std::size_t>(m.centroids.rows()));
    for (Index r = 0; r < m.centroids.rows(); ++r)
        cents[static_cast<std::size_t>(r)] =
            std::vector<double>(m.centroids.row(r).begin(), m.centroids.row(r).end());
    j = {{"method", to_string(m.method)},
         {"centroids", cents},
         {"labels", m.labels},
         {"inertia", m.inertia},
         {"config", m.config_echo}};
}

inline void from_json(const nlohmann::json& j, ClusterModel& m) {
    m.method = cluster_method_from_string(j.at("method").get<std::string>());
    auto cents = j.at("centroids").get<std::vector<std::vector<double>>>();
    if (cents.empty()) throw std::invalid_argument("ClusterModel: no centroids");
    m.centroids.resize(static_cast<Index>(cents.size()), static_cast<Index>(cents[0].size()));
    for (std::size_t r = 0; r < cents.size(); ++r)
        for (std::size_t c = 0; c < cents[r].size(); ++c)
            m.centroids(static_cast<Index>(r), static_cast<Index>(c)) = cents[r][c];
    m.labels = j.at("labels").get<std::vector<Index>>();
    m.inertia = j.value("inertia", 0.0);
    if (j.contains("config")) m.config_echo = j["config"];
}

}  // namespace ctp
