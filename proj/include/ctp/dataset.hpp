#pragma once

#include <Eigen/Dense>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ctp/rng.hpp"
#include "json.hpp"

namespace ctp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Feature matrix (m x d) paired with a target matrix (m x L, ohms).
struct Dataset {
    Matrix features;
    Matrix targets;
    std::vector<std::string> feature_names;
    std::vector<std::string> target_names;

    Index rows() const { return features.rows(); }
    Index dim() const { return features.cols(); }
    Index loads() const { return targets.cols(); }

    void validate() const {
        if (features.rows() != targets.rows())
            throw std::invalid_argument("Dataset: feature/target row mismatch");
        if (features.rows() < 1) throw std::invalid_argument("Dataset: empty");
        if (features.cols() < 1 || targets.cols() < 1)
            throw std::invalid_argument("Dataset: need d >= 1 and L >= 1");
        if (!features.allFinite() || !targets.allFinite())
            throw std::invalid_argument("Dataset: non-finite value");
    }
};

struct SplitSpec {
    double train_fraction = 0.8;
    std::uint64_t seed = 0;
};

struct SyntheticConfig {
    Index n_samples = 0;
    Index n_components = 4;
    Index d = 4;
    Index L = 3;
    double noise_std = 0.02;
    double load_low = 0.0;
    double load_high = 1000.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_samples < 1) throw std::invalid_argument("SyntheticConfig: n_samples < 1");
        if (n_components < 1 || n_components > n_samples)
            throw std::invalid_argument("SyntheticConfig: need 1 <= n_components <= n_samples");
        if (d < 1 || L < 1) throw std::invalid_argument("SyntheticConfig: need d >= 1, L >= 1");
        if (noise_std < 0) throw std::invalid_argument("SyntheticConfig: noise_std < 0");
        if (!(load_low < load_high))
            throw std::invalid_argument("SyntheticConfig: load_low must be < load_high");
    }
};

inline void to_json(nlohmann::json& j, const SyntheticConfig& c) {
    j = {{"n_samples", c.n_samples}, {"n_components", c.n_components},
         {"d", c.d},                 {"L", c.L},
         {"noise_std", c.noise_std}, {"load_range", {c.load_low, c.load_high}},
         {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, SyntheticConfig& c) {
    c.n_samples = j.value("n_samples", c.n_samples);
    c.n_components = j.value("n_components", c.n_components);
    c.d = j.value("d", c.d);
    c.L = j.value("L", c.L);
    c.noise_std = j.value("noise_std", c.noise_std);
    if (j.contains("load_range")) {
        c.load_low = j["load_range"].at(0).get<double>();
        c.load_high = j["load_range"].at(1).get<double>();
    }
    c.seed = j.value("seed", c.seed);
}

/// Round-trip-safe float formatting (17 significant digits).
inline std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

namespace detail {

inline double parse_double(std::string_view tok, std::size_t line_no) {
    double v = 0.0;
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last)
        throw std::runtime_error("CSV: malformed numeric field '" + std::string(tok) +
                                 "' at line " + std::to_string(line_no));
    if (!std::isfinite(v))
        throw std::runtime_error("CSV: non-finite value at line " + std::to_string(line_no));
    return v;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

}  // namespace detail

/// Load a CSV with a header row; the trailing n_targets columns become targets.
inline Dataset load_csv(const std::string& path, Index n_targets) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_csv: missing header in " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = detail::split_fields(line);
    Index n_cols = static_cast<Index>(header.size());
    if (n_targets < 1 || n_targets >= n_cols)
        throw std::invalid_argument("load_csv: need 1 <= n_targets < column count");
    Index d = n_cols - n_targets;

    std::vector<double> values;
    std::size_t line_no = 1;
    Index m = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = detail::split_fields(line);
        if (static_cast<Index>(fields.size()) != n_cols)
            throw std::runtime_error("CSV: expected " + std::to_string(n_cols) + " fields, got " +
                                     std::to_string(fields.size()) + " at line " +
                                     std::to_string(line_no));
        for (auto f : fields) values.push_back(detail::parse_double(f, line_no));
        ++m;
    }
    if (m < 1) throw std::runtime_error("load_csv: no data rows in " + path);

    Dataset ds;
    ds.features.resize(m, d);
    ds.targets.resize(m, n_targets);
    for (Index i = 0; i < m; ++i) {
        for (Index j = 0; j < d; ++j) ds.features(i, j) = values[i * n_cols + j];
        for (Index l = 0; l < n_targets; ++l) ds.targets(i, l) = values[i * n_cols + d + l];
    }
    for (Index j = 0; j < d; ++j) ds.feature_names.emplace_back(header[j]);
    for (Index l = 0; l < n_targets; ++l) ds.target_names.emplace_back(header[d + l]);
    ds.validate();
    return ds;
}

inline void save_csv(const Dataset& ds, const std::string& path) {
    ds.validate();
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_csv: cannot open " + path);
    for (Index j = 0; j < ds.dim(); ++j) {
        if (j) out << ',';
        out << (j < static_cast<Index>(ds.feature_names.size()) ? ds.feature_names[j]
                                                                : "f" + std::to_string(j + 1));
    }
    for (Index l = 0; l < ds.loads(); ++l)
        out << ',' << (l < static_cast<Index>(ds.target_names.size()) ? ds.target_names[l]
                                                                      : "y" + std::to_string(l + 1));
    out << '\n';
    for (Index i = 0; i < ds.rows(); ++i) {
        for (Index j = 0; j < ds.dim(); ++j) {
            if (j) out << ',';
            out << format_double(ds.features(i, j));
        }
        for (Index l = 0; l < ds.loads(); ++l) out << ',' << format_double(ds.targets(i, l));
        out << '\n';
    }
    if (!out) throw std::runtime_error("save_csv: write failure on " + path);
}

namespace synth {

// Internal generator constants: per-coordinate monotone rational term plus
// sine harmonics, mixed by component-specific matrices. The monotone frame
// keeps the load vector recoverable from the features; the harmonics carry
// fine-grained structure.
inline constexpr double kMonoScale = 5.0;     // weight of the monotone rational terms
inline constexpr double kSineAmp = 0.35;      // weight range of the sine terms
inline constexpr double kOffsetRange = 6.0;   // component offset box half-width
inline constexpr double kFreqs[] = {2.0, 3.0, 5.0};

inline double mono_term(double t) { return t / (1.0 + 0.5 * t); }

struct ComponentParams {
    Matrix a_mono;   // d x L
    Matrix a_sine;   // d x (H*L)
    Matrix phases;   // H x L
    Vector offset;   // d
};

inline std::vector<ComponentParams> component_params(const SyntheticConfig& cfg) {
    const Index H = static_cast<Index>(std::size(kFreqs));
    Rng rng(mix_seed(cfg.seed, seed_tag("synthetic-params")));
    std::vector<ComponentParams> out;
    out.reserve(static_cast<std::size_t>(cfg.n_components));
    for (Index c = 0; c < cfg.n_components; ++c) {
        ComponentParams p;
        Matrix raw(cfg.d, cfg.L);
        for (Index l = 0; l < cfg.L; ++l)
            for (Index i = 0; i < cfg.d; ++i) raw(i, l) = rng.normal();
        // Gram-Schmidt; columns past the ambient dimension are just normalized.
        for (Index l = 0; l < cfg.L; ++l) {
            for (Index k = 0; k < std::min(l, cfg.d); ++k)
                raw.col(l) -= raw.col(k).dot(raw.col(l)) * raw.col(k);
            double n = raw.col(l).norm();
            if (n > 1e-12) raw.col(l) /= n;
        }
        p.a_mono = kMonoScale * raw;
        p.a_sine.resize(cfg.d, H * cfg.L);
        for (Index j = 0; j < H * cfg.L; ++j)
            for (Index i = 0; i < cfg.d; ++i) p.a_sine(i, j) = rng.uniform(-kSineAmp, kSineAmp);
        p.phases.resize(H, cfg.L);
        for (Index h = 0; h < H; ++h)
            for (Index l = 0; l < cfg.L; ++l)
                p.phases(h, l) = rng.uniform(0.0, 2.0 * std::numbers::pi);
        p.offset.resize(cfg.d);
        for (Index i = 0; i < cfg.d; ++i) p.offset(i) = rng.uniform(-kOffsetRange, kOffsetRange);
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace synth

/// Deterministic synthetic mixture: component index uniform, loads uniform in
/// the load range, features a component-specific nonlinear mix of the loads
/// plus Gaussian noise. Same config (incl. seed) gives a bit-identical result.
inline Dataset generate_synthetic(const SyntheticConfig& cfg) {
    cfg.validate();
    const Index H = static_cast<Index>(std::size(synth::kFreqs));
    auto params = synth::component_params(cfg);
    Rng rng(mix_seed(cfg.seed, seed_tag("synthetic-data")));

    Dataset ds;
    ds.features.resize(cfg.n_samples, cfg.d);
    ds.targets.resize(cfg.n_samples, cfg.L);
    Vector mono(cfg.L), sines(H * cfg.L), x(cfg.d);
    for (Index i = 0; i < cfg.n_samples; ++i) {
        const auto& p = params[rng.uniform_index(static_cast<std::uint64_t>(cfg.n_components))];
        for (Index l = 0; l < cfg.L; ++l) {
            double t = rng.uniform();
            ds.targets(i, l) = cfg.load_low + (cfg.load_high - cfg.load_low) * t;
            mono(l) = synth::mono_term(t);
            for (Index h = 0; h < H; ++h)
                sines(h * cfg.L + l) =
                    std::sin(2.0 * std::numbers::pi * synth::kFreqs[h] * t + p.phases(h, l));
        }
        x = p.a_mono * mono + p.a_sine * sines + p.offset;
        for (Index j = 0; j < cfg.d; ++j) ds.features(i, j) = x(j) + cfg.noise_std * rng.normal();
    }
    for (Index j = 0; j < cfg.d; ++j) ds.feature_names.push_back("f" + std::to_string(j + 1));
    for (Index l = 0; l < cfg.L; ++l) ds.target_names.push_back("y" + std::to_string(l + 1));
    return ds;
}

/// Shuffle by seed, then partition; train gets floor(m * train_fraction) rows.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, const SplitSpec& spec) {
    ds.validate();
    const Index m = ds.rows();
    if (m < 2) throw std::invalid_argument("split: need m >= 2");
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
        throw std::invalid_argument("split: train_fraction must be in (0,1)");
    const Index n_train = static_cast<Index>(
        std::floor(static_cast<double>(m) * spec.train_fraction));
    if (n_train < 1 || n_train >= m)
        throw std::invalid_argument("split: empty partition for m=" + std::to_string(m) +
                                    ", fraction=" + std::to_string(spec.train_fraction));
    std::vector<Index> order(static_cast<std::size_t>(m));
    for (Index i = 0; i < m; ++i) order[static_cast<std::size_t>(i)] = i;
    Rng rng(mix_seed(spec.seed, seed_tag("split")));
    rng.shuffle(order);

    auto take = [&](Index from, Index count) {
        Dataset part;
        part.features.resize(count, ds.dim());
        part.targets.resize(count, ds.loads());
        for (Index i = 0; i < count; ++i) {
            part.features.row(i) = ds.features.row(order[static_cast<std::size_t>(from + i)]);
            part.targets.row(i) = ds.targets.row(order[static_cast<std::size_t>(from + i)]);
        }
        part.feature_names = ds.feature_names;
        part.target_names = ds.target_names;
        return part;
    };
    return {take(0, n_train), take(n_train, m - n_train)};
}

/// Per-feature standardization statistics, fitted on the training split only.
/// Population convention (divide by m).
struct StandardScaler {
    Vector means;
    Vector stds;

    Index dim() const { return means.size(); }
};

inline StandardScaler fit_scaler(const Dataset& train) {
    train.validate();
    StandardScaler sc;
    const double m = static_cast<double>(train.rows());
    sc.means = train.features.colwise().mean();
    Matrix centered = train.features.rowwise() - sc.means.transpose();
    sc.stds = (centered.array().square().colwise().sum() / m).sqrt();
    for (Index j = 0; j < sc.stds.size(); ++j)
        if (!(sc.stds(j) > 0.0) || !std::isfinite(sc.stds(j)))
            throw std::invalid_argument("fit_scaler: zero-variance feature at column " +
                                        std::to_string(j));
    return sc;
}

inline Dataset apply_scaler(const StandardScaler& sc, const Dataset& ds) {
    if (sc.dim() != ds.dim())
        throw std::invalid_argument("apply_scaler: dimension mismatch");
    Dataset out = ds;
    out.features = (ds.features.rowwise() - sc.means.transpose()).array().rowwise() /
                   sc.stds.transpose().array();
    return out;
}

inline Matrix scale_features(const StandardScaler& sc, const Matrix& X) {
    if (sc.dim() != X.cols())
        throw std::invalid_argument("scale_features: dimension mismatch");
    return (X.rowwise() - sc.means.transpose()).array().rowwise() / sc.stds.transpose().array();
}

inline Dataset inverse_scaler(const StandardScaler& sc, const Dataset& ds) {
    if (sc.dim() != ds.dim())
        throw std::invalid_argument("inverse_scaler: dimension mismatch");
    Dataset out = ds;
    out.features = (ds.features.array().rowwise() * sc.stds.transpose().array()).matrix();
    out.features.rowwise() += sc.means.transpose();
    return out;
}

inline void to_json(nlohmann::json& j, const StandardScaler& sc) {
    j = {{"means", std::vector<double>(sc.means.begin(), sc.means.end())},
         {"stds", std::vector<double>(sc.stds.begin(), sc.stds.end())}};
}

inline void from_json(const nlohmann::json& j, StandardScaler& sc) {
    auto means = j.at("means").get<std::vector<double>>();
    auto stds = j.at("stds").get<std::vector<double>>();
    sc.means = Eigen::Map<Vector>(means.data(), static_cast<Index>(means.size()));
    sc.stds = Eigen::Map<Vector>(stds.data(), static_cast<Index>(stds.size()));
}

}  // namespace ctp
