#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "ctp/dataset.hpp"

namespace ctp {

struct SinkhornStatus {
    int iterations = 0;
    double marginal_error = 0.0;
};

namespace detail {

// Log-sum-exp over a contiguous column of `scores` plus an additive offset
// vector. -inf entries (zero-mass marginals) drop out naturally.
inline double lse(const double* vals, Index n) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Index i = 0; i < n; ++i) mx = std::max(mx, vals[i]);
    if (!std::isfinite(mx)) return mx;
    double s = 0.0;
    for (Index i = 0; i < n; ++i) s += std::exp(vals[i] - mx);
    return mx + std::log(s);
}

}  // namespace detail

/// Log-domain Sinkhorn iterations on dual potentials u (size m) and v (size
/// k), both in units of the regularizer. Potentials may be warm-started; on
/// return the plan exp(u_i + v_j - cost_ij/reg) matches nu exactly and mu
/// within `tol` (max absolute deviation). Throws on non-convergence.
inline SinkhornStatus sinkhorn_potentials(const Matrix& cost, const Vector& mu, const Vector& nu,
                                          double reg, int max_iter, double tol, Vector& u,
                                          Vector& v) {
    const Index m = cost.rows();
    const Index k = cost.cols();
    if (mu.size() != m || nu.size() != k)
        throw std::invalid_argument("sinkhorn: marginal size mismatch");
    if (!(reg > 0.0)) throw std::invalid_argument("sinkhorn: reg must be positive");
    if (!cost.allFinite()) throw std::invalid_argument("sinkhorn: non-finite cost");
    if ((mu.array() < 0).any() || (nu.array() < 0).any())
        throw std::invalid_argument("sinkhorn: negative marginal");
    if (std::abs(mu.sum() - 1.0) > 1e-9 || std::abs(nu.sum() - 1.0) > 1e-9)
        throw std::invalid_argument("sinkhorn: marginals must sum to 1");
    if (u.size() != m) u = Vector::Zero(m);
    if (v.size() != k) v = Vector::Zero(k);

    // A = -cost/reg, stored twice (both majors) so each LSE pass is contiguous.
    Matrix a_cols = (-cost / reg);             // m x k, column-major: column pass
    Matrix a_rows = a_cols.transpose();        // k x m, column-major: row pass
    Vector log_mu(m), log_nu(k);
    for (Index i = 0; i < m; ++i) log_mu(i) = std::log(mu(i));  // log(0) = -inf is fine
    for (Index j = 0; j < k; ++j) log_nu(j) = std::log(nu(j));

    Vector row_lse(m), col_buf(std::max(m, k));
    SinkhornStatus st;
    for (int iter = 0; iter <= max_iter; ++iter) {
        // Row log-marginals under current (u, v).
        for (Index i = 0; i < m; ++i) {
            const double* col = a_rows.data() + static_cast<std::ptrdiff_t>(i) * k;
            for (Index j = 0; j < k; ++j) col_buf(j) = col[j] + v(j);
            row_lse(i) = detail::lse(col_buf.data(), k);
        }
        double err = 0.0;
        for (Index i = 0; i < m; ++i) {
            double marg = std::isfinite(row_lse(i)) ? std::exp(u(i) + row_lse(i)) : 0.0;
            err = std::max(err, std::abs(marg - mu(i)));
        }
        st.iterations = iter;
        st.marginal_error = err;
        if (err <= tol) return st;
        if (iter == max_iter) break;

        u = log_mu - row_lse;
        for (Index j = 0; j < k; ++j) {
            const double* col = a_cols.data() + static_cast<std::ptrdiff_t>(j) * m;
            for (Index i = 0; i < m; ++i) col_buf(i) = col[i] + u(i);
            v(j) = log_nu(j) - detail::lse(col_buf.data(), m);
        }
    }
    throw std::runtime_error("sinkhorn: no convergence after " + std::to_string(max_iter) +
                             " iterations (marginal residual " +
                             std::to_string(st.marginal_error) + "); increase reg or iterations");
}

/// Entropically regularized optimal transport plan between histograms mu and
/// nu under the given cost, solved to `tol` on the marginals.
inline Matrix sinkhorn(const Matrix& cost, const Vector& mu, const Vector& nu, double reg,
                       int max_iter = 1000, double tol = 1e-9) {
    Vector u, v;
    sinkhorn_potentials(cost, mu, nu, reg, max_iter, tol, u, v);
    Matrix plan(cost.rows(), cost.cols());
    for (Index j = 0; j < cost.cols(); ++j)
        for (Index i = 0; i < cost.rows(); ++i) {
            double e = u(i) + v(j) - cost(i, j) / reg;
            plan(i, j) = std::isfinite(e) ? std::exp(e) : 0.0;
        }
    return plan;
}

}  // namespace ctp
