// Minimal tour: generate a synthetic dataset, train a cluster-then-predict
// pipeline, and compare it with the bare regressor.

#include <cstdio>

#include "ctp/clustering.hpp"
#include "ctp/dataset.hpp"
#include "ctp/metrics.hpp"
#include "ctp/pipeline.hpp"

int main() {
    ctp::SyntheticConfig cfg;
    cfg.n_samples = 5000;
    cfg.seed = 42;
    auto ds = ctp::generate_synthetic(cfg);
    auto [train, test] = ctp::split(ds, {0.8, cfg.seed});
    auto scaler = ctp::fit_scaler(train);
    train = ctp::apply_scaler(scaler, train);
    test = ctp::apply_scaler(scaler, test);

    ctp::RegressorSpec reg;
    reg.kind = ctp::RegressorKind::knn;
    reg.knn.n_neighbors = 5;

    // Baseline: one bank trained on everything.
    auto baseline = ctp::fit_bank(train.features, train.targets, reg);
    ctp::Matrix base_pred(test.rows(), test.loads());
    for (ctp::Index i = 0; i < test.rows(); ++i)
        base_pred.row(i) = baseline.predict_one(test.features.row(i), test.loads()).transpose();

    // Cluster-then-predict with k-means, k = 8.
    ctp::ClustererSpec cl;
    cl.kmeans.k = 8;
    cl.kmeans.seed = cfg.seed;
    auto pipe = ctp::train_divide_conquer(train, cl, reg);
    auto [pred, secs] = ctp::predict_batch(pipe, test.features);

    std::printf("baseline KNN rmse: %.3f\n", ctp::rmse(test.targets, base_pred));
    std::printf("k-means(8) + KNN rmse: %.3f  (predict %.3fs)\n",
                ctp::rmse(test.targets, pred), secs);
    return 0;
}
