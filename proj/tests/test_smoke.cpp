#include <gtest/gtest.h>

#include "ctp/clustering.hpp"
#include "ctp/dataset.hpp"
#include "ctp/metrics.hpp"
#include "ctp/pipeline.hpp"
#include "ctp/regressors.hpp"
#include "ctp/sinkhorn.hpp"
#include "ctp/tree.hpp"

TEST(Smoke, EndToEnd) {
    ctp::SyntheticConfig cfg;
    cfg.n_samples = 200;
    cfg.seed = 1;
    auto ds = ctp::generate_synthetic(cfg);
    auto [train, test] = ctp::split(ds, {0.8, 1});
    auto scaler = ctp::fit_scaler(train);
    train = ctp::apply_scaler(scaler, train);
    test = ctp::apply_scaler(scaler, test);

    ctp::ClustererSpec cl;
    cl.kmeans.k = 2;
    cl.kmeans.n_init = 2;
    cl.kmeans.seed = 3;
    ctp::RegressorSpec rg;
    rg.kind = ctp::RegressorKind::knn;
    rg.knn.n_neighbors = 3;
    auto pipe = ctp::train_divide_conquer(train, cl, rg);
    auto [pred, secs] = ctp::predict_batch(pipe, test.features);
    EXPECT_EQ(pred.rows(), test.rows());
    EXPECT_GE(secs, 0.0);
    double e = ctp::rmse(test.targets, pred);
    EXPECT_GT(e, 0.0);
    EXPECT_LT(e, 1000.0);
}
