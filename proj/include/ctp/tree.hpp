#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "ctp/dataset.hpp"
#include "json.hpp"

namespace ctp {

/// Axis-aligned regression tree with vector-valued leaves. Split search is
/// exact greedy over sorted unique feature values (midpoint thresholds),
/// maximizing variance reduction summed across outputs.
class RegressionTree {
public:
    struct Node {
        std::int32_t feature = -1;  // -1: leaf
        double threshold = 0.0;
        std::int32_t left = -1;
        std::int32_t right = -1;
        Vector value;  // leaf mean (L), empty for internal nodes
    };

    const std::vector<Node>& nodes() const { return nodes_; }

    static RegressionTree from_nodes(std::vector<Node> nodes) {
        if (nodes.empty()) throw std::invalid_argument("RegressionTree: no nodes");
        RegressionTree t;
        t.nodes_ = std::move(nodes);
        return t;
    }

    Vector predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
        std::int32_t id = 0;
        while (nodes_[static_cast<std::size_t>(id)].feature >= 0) {
            const Node& n = nodes_[static_cast<std::size_t>(id)];
            id = x(n.feature) <= n.threshold ? n.left : n.right;
        }
        return nodes_[static_cast<std::size_t>(id)].value;
    }

    /// Leaf reached by each row; used by the booster to update fits without
    /// re-walking (identical arithmetic to predict()).
    std::int32_t leaf_for(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
        std::int32_t id = 0;
        while (nodes_[static_cast<std::size_t>(id)].feature >= 0) {
            const Node& n = nodes_[static_cast<std::size_t>(id)];
            id = x(n.feature) <= n.threshold ? n.left : n.right;
        }
        return id;
    }

    const Vector& leaf_value(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)].value; }

    friend class TreeBuilder;

private:
    std::vector<Node> nodes_;
};

/// Shared per-dataset state for growing many trees on the same X: feature
/// columns are argsorted once and reused across boosting rounds.
class TreeBuilder {
public:
    TreeBuilder(const Matrix& X, int max_depth, Index min_samples_leaf)
        : X_(X), max_depth_(max_depth), msl_(min_samples_leaf) {
        const Index m = X.rows();
        const Index d = X.cols();
        if (m < 1) throw std::invalid_argument("TreeBuilder: empty training set");
        if (max_depth < 1) throw std::invalid_argument("TreeBuilder: max_depth must be >= 1");
        sorted_.resize(static_cast<std::size_t>(d));
        for (Index j = 0; j < d; ++j) {
            auto& idx = sorted_[static_cast<std::size_t>(j)];
            idx.resize(static_cast<std::size_t>(m));
            std::iota(idx.begin(), idx.end(), 0);
            const double* col = X.data() + static_cast<std::ptrdiff_t>(j) * m;
            std::sort(idx.begin(), idx.end(), [col](std::int32_t a, std::int32_t b) {
                return col[a] != col[b] ? col[a] < col[b] : a < b;
            });
        }
    }

    /// Grow one tree on residuals given transposed (L x m). node_of is
    /// resized to m and holds each row's leaf id on return.
    RegressionTree build(const Matrix& residuals_t, std::vector<std::int32_t>& node_of) {
        const Index m = X_.rows();
        const Index d = X_.cols();
        const Index L = residuals_t.rows();

        RegressionTree tree;
        auto& nodes = tree.nodes_;
        nodes.emplace_back();
        node_of.assign(static_cast<std::size_t>(m), 0);

        struct Active {
            std::int32_t node;
            Index count;
            // offsets into the flat sums arrays
        };
        std::vector<std::int32_t> slot_of_node{0};  // node id -> slot or -1
        std::vector<Active> active{Active{0, m}};
        Vector total_sums = residuals_t.rowwise().sum();
        Matrix totals(L, 1);
        totals.col(0) = total_sums;

        for (int depth = 0; depth < max_depth_ && !active.empty(); ++depth) {
            const Index n_act = static_cast<Index>(active.size());
            // Per-slot best split.
            std::vector<double> best_score(static_cast<std::size_t>(n_act),
                                           -std::numeric_limits<double>::infinity());
            std::vector<std::int32_t> best_feat(static_cast<std::size_t>(n_act), -1);
            std::vector<double> best_thresh(static_cast<std::size_t>(n_act), 0.0);
            std::vector<double> leaf_score(static_cast<std::size_t>(n_act));
            for (Index s = 0; s < n_act; ++s) {
                double sc = 0.0;
                for (Index l = 0; l < L; ++l) sc += totals(l, s) * totals(l, s);
                leaf_score[static_cast<std::size_t>(s)] = sc / static_cast<double>(active[static_cast<std::size_t>(s)].count);
            }

            Matrix left_sums(L, n_act);
            std::vector<Index> left_n(static_cast<std::size_t>(n_act));
            std::vector<double> prev_val(static_cast<std::size_t>(n_act));
            for (Index j = 0; j < d; ++j) {
                left_sums.setZero();
                std::fill(left_n.begin(), left_n.end(), Index{0});
                const double* col = X_.data() + static_cast<std::ptrdiff_t>(j) * m;
                for (std::int32_t idx : sorted_[static_cast<std::size_t>(j)]) {
                    std::int32_t slot = slot_of_node[static_cast<std::size_t>(node_of[static_cast<std::size_t>(idx)])];
                    if (slot < 0) continue;
                    const double v = col[idx];
                    const Index nl = left_n[static_cast<std::size_t>(slot)];
                    if (nl > 0 && v > prev_val[static_cast<std::size_t>(slot)]) {
                        const Index nr = active[static_cast<std::size_t>(slot)].count - nl;
                        if (nl >= msl_ && nr >= msl_) {
                            double sc = 0.0;
                            for (Index l = 0; l < L; ++l) {
                                const double sl = left_sums(l, slot);
                                const double sr = totals(l, slot) - sl;
                                sc += sl * sl / static_cast<double>(nl) +
                                      sr * sr / static_cast<double>(nr);
                            }
                            if (sc > best_score[static_cast<std::size_t>(slot)]) {
                                best_score[static_cast<std::size_t>(slot)] = sc;
                                best_feat[static_cast<std::size_t>(slot)] = static_cast<std::int32_t>(j);
                                double t = std::midpoint(prev_val[static_cast<std::size_t>(slot)], v);
                                if (t >= v) t = prev_val[static_cast<std::size_t>(slot)];
                                best_thresh[static_cast<std::size_t>(slot)] = t;
                            }
                        }
                    }
                    left_sums.col(slot) += residuals_t.col(idx);
                    ++left_n[static_cast<std::size_t>(slot)];
                    prev_val[static_cast<std::size_t>(slot)] = v;
                }
            }

            // Materialize splits; zero-gain nodes become leaves.
            std::vector<Active> next;
            std::vector<std::int32_t> child_slot(static_cast<std::size_t>(n_act), -1);
            for (Index s = 0; s < n_act; ++s) {
                Active& a = active[static_cast<std::size_t>(s)];
                RegressionTree::Node& nd = nodes[static_cast<std::size_t>(a.node)];
                if (best_feat[static_cast<std::size_t>(s)] >= 0 &&
                    best_score[static_cast<std::size_t>(s)] > leaf_score[static_cast<std::size_t>(s)]) {
                    nd.feature = best_feat[static_cast<std::size_t>(s)];
                    nd.threshold = best_thresh[static_cast<std::size_t>(s)];
                    nd.left = static_cast<std::int32_t>(nodes.size());
                    nd.right = nd.left + 1;
                    child_slot[static_cast<std::size_t>(s)] = static_cast<std::int32_t>(next.size());
                    nodes.emplace_back();
                    nodes.emplace_back();
                    next.push_back(Active{nd.left, 0});
                    next.push_back(Active{nd.right, 0});
                } else {
                    nd.value = totals.col(s) / static_cast<double>(a.count);
                }
            }
            if (next.empty()) break;

            Matrix next_totals = Matrix::Zero(L, static_cast<Index>(next.size()));
            for (Index i = 0; i < m; ++i) {
                std::int32_t nid = node_of[static_cast<std::size_t>(i)];
                std::int32_t slot = slot_of_node[static_cast<std::size_t>(nid)];
                if (slot < 0 || child_slot[static_cast<std::size_t>(slot)] < 0) continue;
                const RegressionTree::Node& nd = nodes[static_cast<std::size_t>(active[static_cast<std::size_t>(slot)].node)];
                const bool go_left = X_(i, nd.feature) <= nd.threshold;
                const std::int32_t cs = child_slot[static_cast<std::size_t>(slot)] + (go_left ? 0 : 1);
                node_of[static_cast<std::size_t>(i)] = next[static_cast<std::size_t>(cs)].node;
                next_totals.col(cs) += residuals_t.col(i);
                ++next[static_cast<std::size_t>(cs)].count;
            }

            slot_of_node.assign(nodes.size(), -1);
            for (std::size_t s = 0; s < next.size(); ++s)
                slot_of_node[static_cast<std::size_t>(next[s].node)] = static_cast<std::int32_t>(s);
            active = std::move(next);
            totals = std::move(next_totals);
        }
        // Depth cap reached: remaining active nodes become leaves.
        for (Index s = 0; s < static_cast<Index>(active.size()); ++s) {
            RegressionTree::Node& nd = nodes[static_cast<std::size_t>(active[static_cast<std::size_t>(s)].node)];
            nd.value = totals.col(s) / static_cast<double>(active[static_cast<std::size_t>(s)].count);
        }
        return tree;
    }

private:
    const Matrix& X_;
    int max_depth_;
    Index msl_;
    std::vector<std::vector<std::int32_t>> sorted_;
};

inline void to_json(nlohmann::json& j, const RegressionTree::Node& n) {
    j = {{"f", n.feature}, {"t", n.threshold}, {"l", n.left}, {"r", n.right}};
    if (n.feature < 0) j["v"] = std::vector<double>(n.value.begin(), n.value.end());
}

inline void from_json(const nlohmann::json& j, RegressionTree::Node& n) {
    n.feature = j.at("f").get<std::int32_t>();
    n.threshold = j.at("t").get<double>();
    n.left = j.at("l").get<std::int32_t>();
    n.right = j.at("r").get<std::int32_t>();
    if (n.feature < 0) {
        auto v = j.at("v").get<std::vector<double>>();
        n.value = Eigen::Map<Vector>(v.data(), static_cast<Index>(v.size()));
    }
}

}  // namespace ctp
