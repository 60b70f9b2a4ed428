#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ctp/clustering.hpp"
#include "ctp/dataset.hpp"
#include "ctp/regressors.hpp"

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(LoadCsv, ColumnSplit) {
    auto path = temp_path("ctp_basic.csv");
    {
        std::ofstream out(path);
        out << "f1,f2,y1\n1,2,3\n4,5,6\n7,8,9\n";
    }
    auto ds = ctp::load_csv(path, 1);
    EXPECT_EQ(ds.rows(), 3);
    EXPECT_EQ(ds.dim(), 2);
    EXPECT_EQ(ds.loads(), 1);
    EXPECT_DOUBLE_EQ(ds.features(1, 0), 4.0);
    EXPECT_DOUBLE_EQ(ds.targets(2, 0), 9.0);
    EXPECT_EQ(ds.feature_names[1], "f2");
    EXPECT_EQ(ds.target_names[0], "y1");
}

TEST(LoadCsv, RejectsNaNWithLineNumber) {
    auto path = temp_path("ctp_nan.csv");
    {
        std::ofstream out(path);
        out << "a,b\n1,2\nNaN,4\n";
    }
    try {
        ctp::load_csv(path, 1);
        FAIL() << "expected throw";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("3"), std::string::npos) << e.what();
    }
}

TEST(LoadCsv, RejectsMalformedRowWithLineNumber) {
    auto path = temp_path("ctp_bad.csv");
    {
        std::ofstream out(path);
        out << "a,b\n1,2\n3\n";
    }
    try {
        ctp::load_csv(path, 1);
        FAIL() << "expected throw";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    }
}

TEST(LoadCsv, RejectsTooManyTargets) {
    auto path = temp_path("ctp_tgt.csv");
    {
        std::ofstream out(path);
        out << "a,b\n1,2\n";
    }
    EXPECT_THROW(ctp::load_csv(path, 2), std::invalid_argument);
    EXPECT_THROW(ctp::load_csv(path, 0), std::invalid_argument);
}

TEST(LoadCsv, AcceptsScientificNotation) {
    auto path = temp_path("ctp_sci.csv");
    {
        std::ofstream out(path);
        out << "a,y\n1.5e-3,2E+4\n";
    }
    auto ds = ctp::load_csv(path, 1);
    EXPECT_DOUBLE_EQ(ds.features(0, 0), 1.5e-3);
    EXPECT_DOUBLE_EQ(ds.targets(0, 0), 2e4);
}

// Save -> load -> save must reproduce the first file byte for byte; 17
// significant digits round-trip doubles exactly.
TEST(SaveCsv, RoundTripBytesStable) {
    ctp::Rng rng(99);
    ctp::Dataset ds;
    ds.features.resize(20, 3);
    ds.targets.resize(20, 2);
    for (ctp::Index i = 0; i < 20; ++i) {
        for (ctp::Index j = 0; j < 3; ++j) ds.features(i, j) = rng.normal() * std::pow(10.0, rng.uniform(-8, 8));
        for (ctp::Index l = 0; l < 2; ++l) ds.targets(i, l) = rng.normal();
    }
    ds.feature_names = {"a", "b", "c"};
    ds.target_names = {"y1", "y2"};
    auto p1 = temp_path("ctp_rt1.csv");
    auto p2 = temp_path("ctp_rt2.csv");
    ctp::save_csv(ds, p1);
    auto loaded = ctp::load_csv(p1, 2);
    for (ctp::Index i = 0; i < 20; ++i)
        for (ctp::Index j = 0; j < 3; ++j)
            EXPECT_EQ(loaded.features(i, j), ds.features(i, j));  // bitwise
    ctp::save_csv(loaded, p2);
    EXPECT_EQ(slurp(p1), slurp(p2));
}

TEST(GenerateSynthetic, DeterministicGivenConfig) {
    ctp::SyntheticConfig cfg;
    cfg.n_samples = 500;
    cfg.seed = 7;
    auto a = ctp::generate_synthetic(cfg);
    auto b = ctp::generate_synthetic(cfg);
    EXPECT_TRUE(a.features == b.features);
    EXPECT_TRUE(a.targets == b.targets);
    cfg.seed = 8;
    auto c = ctp::generate_synthetic(cfg);
    EXPECT_FALSE(a.features == c.features);
}

// Noiseless single-component data is an exact function of the targets; a
// 1-NN regressor evaluated on its own training set reproduces them.
TEST(GenerateSynthetic, NoiselessSingleComponentIsFunctional) {
    ctp::SyntheticConfig cfg;
    cfg.n_samples = 300;
    cfg.n_components = 1;
    cfg.noise_std = 0.0;
    cfg.seed = 11;
    auto ds = ctp::generate_synthetic(cfg);
    auto r = ctp::knn_fit(ds.features, ds.targets, {1});
    ctp::Matrix pred = ctp::predict_matrix(r, ds.features);
    EXPECT_NEAR((pred - ds.targets).cwiseAbs().maxCoeff(), 0.0, 1e-12);
}

TEST(GenerateSynthetic, ComponentsSeparateUnderKMeans) {
    ctp::SyntheticConfig cfg;
    cfg.n_samples = 2000;
    cfg.seed = 5;
    auto ds = ctp::generate_synthetic(cfg);
    ctp::KMeansConfig km;
    km.k = 4;
    km.n_init = 4;
    km.seed = 1;
    auto model = ctp::kmeans_fit(ds.features, km);
    double sil = ctp::silhouette(ds.features, model.labels);
    EXPECT_GT(sil, 0.5);
}

TEST(GenerateSynthetic, ValidatesConfig) {
    ctp::SyntheticConfig cfg;
    cfg.n_samples = 2;
    cfg.n_components = 3;
    EXPECT_THROW(ctp::generate_synthetic(cfg), std::invalid_argument);
    cfg = {};
    cfg.n_samples = 10;
    cfg.load_low = 5;
    cfg.load_high = 5;
    EXPECT_THROW(ctp::generate_synthetic(cfg), std::invalid_argument);
}

TEST(Split, FloorSizes) {
    ctp::SyntheticConfig cfg;
    cfg.n_samples = 10;
    cfg.seed = 3;
    auto ds = ctp::generate_synthetic(cfg);
    auto [train, test] = ctp::split(ds, {0.8, 1});
    EXPECT_EQ(train.rows(), 8);
    EXPECT_EQ(test.rows(), 2);
}

TEST(Split, DeterministicAndExhaustive) {
    ctp::SyntheticConfig cfg;
    cfg.n_samples = 101;
    cfg.seed = 3;
    auto ds = ctp::generate_synthetic(cfg);
    auto [a_train, a_test] = ctp::split(ds, {0.7, 9});
    auto [b_train, b_test] = ctp::split(ds, {0.7, 9});
    EXPECT_TRUE(a_train.features == b_train.features);
    EXPECT_TRUE(a_test.targets == b_test.targets);

    // Multiset equality: sort all rows by a full-row key and compare.
    auto keys = [](const ctp::Matrix& f) {
        std::vector<double> v(f.data(), f.data() + f.size());
        return v;
    };
    ctp::Matrix combined(ds.rows(), ds.dim());
    combined << a_train.features, a_test.features;
    auto lhs = keys(combined);
    auto rhs = keys(ds.features);
    std::sort(lhs.begin(), lhs.end());
    std::sort(rhs.begin(), rhs.end());
    EXPECT_EQ(lhs, rhs);
}

TEST(Split, MillionRowSizes) {
    ctp::Dataset ds;
    ds.features = ctp::Matrix::Ones(1000000, 1);
    ds.targets = ctp::Matrix::Ones(1000000, 1);
    auto [train, test] = ctp::split(ds, {0.8, 0});
    EXPECT_EQ(train.rows(), 800000);
    EXPECT_EQ(test.rows(), 200000);
}

TEST(Split, EmptyPartitionRejected) {
    ctp::Dataset ds;
    ds.features = ctp::Matrix::Ones(3, 1);
    ds.targets = ctp::Matrix::Ones(3, 1);
    EXPECT_THROW(ctp::split(ds, {0.01, 0}), std::invalid_argument);
    EXPECT_THROW(ctp::split(ds, {0.999, 0}), std::invalid_argument);
}

TEST(Scaler, PopulationConvention) {
    ctp::Dataset ds;
    ds.features.resize(3, 1);
    ds.features << 1, 2, 3;
    ds.targets = ctp::Matrix::Zero(3, 1);
    auto sc = ctp::fit_scaler(ds);
    EXPECT_DOUBLE_EQ(sc.means(0), 2.0);
    EXPECT_DOUBLE_EQ(sc.stds(0), std::sqrt(2.0 / 3.0));
    auto scaled = ctp::apply_scaler(sc, ds);
    EXPECT_NEAR(scaled.features.col(0).mean(), 0.0, 1e-15);
    EXPECT_TRUE(scaled.targets == ds.targets);  // targets untouched
}

TEST(Scaler, TrainStatisticsContract) {
    ctp::SyntheticConfig cfg;
    cfg.n_samples = 400;
    cfg.seed = 21;
    auto ds = ctp::generate_synthetic(cfg);
    auto [train, test] = ctp::split(ds, {0.8, 2});
    auto sc = ctp::fit_scaler(train);
    auto strain = ctp::apply_scaler(sc, train);
    auto stest = ctp::apply_scaler(sc, test);
    for (ctp::Index j = 0; j < strain.dim(); ++j) {
        EXPECT_NEAR(strain.features.col(j).mean(), 0.0, 1e-9);
        EXPECT_NEAR(std::sqrt(strain.features.col(j).squaredNorm() / strain.rows()), 1.0, 1e-9);
    }
    // Test means are near, but not exactly, zero under train statistics.
    EXPECT_GT(stest.features.col(0).mean() * stest.features.col(0).mean(), 0.0);
}

TEST(Scaler, DoubleFitIsIdentity) {
    ctp::SyntheticConfig cfg;
    cfg.n_samples = 250;
    cfg.seed = 13;
    auto ds = ctp::generate_synthetic(cfg);
    auto once = ctp::apply_scaler(ctp::fit_scaler(ds), ds);
    auto sc2 = ctp::fit_scaler(once);
    EXPECT_LT(sc2.means.cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((sc2.stds.array() - 1.0).abs().maxCoeff(), 1e-9);
}

TEST(Scaler, InverseRecoversInput) {
    ctp::SyntheticConfig cfg;
    cfg.n_samples = 100;
    cfg.seed = 17;
    auto ds = ctp::generate_synthetic(cfg);
    auto sc = ctp::fit_scaler(ds);
    auto back = ctp::inverse_scaler(sc, ctp::apply_scaler(sc, ds));
    double rel = ((back.features - ds.features).cwiseAbs().array() /
                  (ds.features.cwiseAbs().array() + 1.0))
                     .maxCoeff();
    EXPECT_LT(rel, 1e-12);
}

TEST(Scaler, ConstantFeatureRejected) {
    ctp::Dataset ds;
    ds.features = ctp::Matrix::Ones(5, 2);
    ds.features.col(0) = ctp::Vector::LinSpaced(5, 0, 1);
    ds.targets = ctp::Matrix::Zero(5, 1);
    EXPECT_THROW(ctp::fit_scaler(ds), std::invalid_argument);
}

TEST(Scaler, DimensionMismatchRejected) {
    ctp::Dataset a;
    a.features = ctp::Matrix::Random(4, 2);
    a.targets = ctp::Matrix::Zero(4, 1);
    ctp::Dataset b;
    b.features = ctp::Matrix::Random(4, 3);
    b.targets = ctp::Matrix::Zero(4, 1);
    auto sc = ctp::fit_scaler(a);
    EXPECT_THROW(ctp::apply_scaler(sc, b), std::invalid_argument);
}

TEST(SyntheticConfig, JsonRoundTrip) {
    ctp::SyntheticConfig cfg;
    cfg.n_samples = 123;
    cfg.n_components = 5;
    cfg.d = 6;
    cfg.L = 2;
    cfg.noise_std = 0.5;
    cfg.load_low = -10;
    cfg.load_high = 10;
    cfg.seed = 99;
    nlohmann::json j = cfg;
    auto back = j.get<ctp::SyntheticConfig>();
    EXPECT_EQ(back.n_samples, cfg.n_samples);
    EXPECT_EQ(back.n_components, cfg.n_components);
    EXPECT_EQ(back.d, cfg.d);
    EXPECT_EQ(back.L, cfg.L);
    EXPECT_DOUBLE_EQ(back.noise_std, cfg.noise_std);
    EXPECT_DOUBLE_EQ(back.load_low, cfg.load_low);
    EXPECT_DOUBLE_EQ(back.load_high, cfg.load_high);
    EXPECT_EQ(back.seed, cfg.seed);
}
