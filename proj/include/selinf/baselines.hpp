#pragma once

// Hit-and-run sampling from an orthant-truncated Gaussian, used as the MCMC
// comparison point for the SOV estimators.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "selinf/errors.hpp"
#include "selinf/num_core.hpp"

namespace selinf {

/// Mode of N(mu, Sigma) restricted to the positive orthant: the solution of
/// min (1/2)(b-mu)' Sigma^-1 (b-mu) s.t. b >= 0, by projected gradient with
/// backtracking on the quadratic objective.
inline Vector find_mode(const Vector& mu, const Matrix& sigma, double kkt_tol = 1e-8,
                        int max_iter = 200000) {
    const int d = static_cast<int>(mu.size());
    Eigen::LLT<Matrix> llt(sigma);
    if (llt.info() != Eigen::Success) throw NotPositiveDefinite("find_mode: Sigma");
    const Matrix prec = llt.solve(Matrix::Identity(d, d));
    Eigen::SelfAdjointEigenSolver<Matrix> eig(prec);
    const double lip = eig.eigenvalues().maxCoeff();
    const double step = 1.0 / lip;

    Vector b = mu.cwiseMax(1e-8);
    for (int it = 0; it < max_iter; ++it) {
        const Vector grad = prec * (b - mu);
        // KKT: grad = 0 on strictly positive coordinates, grad >= 0 at bound
        double viol = 0.0;
        for (int j = 0; j < d; ++j) {
            if (b(j) > kkt_tol) viol = std::max(viol, std::abs(grad(j)));
            else viol = std::max(viol, std::max(0.0, -grad(j)));
        }
        if (viol < kkt_tol) return b;
        b = (b - step * grad).cwiseMax(0.0);
    }
    throw NoConvergence("find_mode: projected gradient did not meet KKT tolerance");
}

/// Leading principal-component directions of Sigma: the smallest set of top
/// eigenvectors whose cumulative eigenvalue share exceeds half the trace.
inline Matrix pc_directions(const Matrix& sigma) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sigma);
    if (eig.info() != Eigen::Success) throw NotPositiveDefinite("pc_directions: eig failed");
    const Vector vals = eig.eigenvalues(); // ascending
    const double total = vals.sum();
    const int d = static_cast<int>(vals.size());
    double cum = 0.0;
    int k = 0;
    for (int j = d - 1; j >= 0; --j) {
        cum += vals(j);
        ++k;
        if (cum > 0.5 * total) break;
    }
    Matrix dirs(d, k);
    for (int j = 0; j < k; ++j) dirs.col(j) = eig.eigenvectors().col(d - 1 - j);
    return dirs;
}

struct HitAndRunConfig {
    int burn_in = 20;
    std::uint64_t seed = 1;
};

/// Hit-and-run chain for N(mu, Sigma) on the positive orthant. Directions
/// are drawn uniformly from the d coordinate axes plus the leading principal
/// components; each line update is an exact truncated-normal inverse-CDF
/// draw along the chord that stays inside the orthant.
inline Matrix hit_and_run_sample(const Vector& mu, const Matrix& sigma, int n_samples,
                                 const HitAndRunConfig& cfg = {}) {
    const int d = static_cast<int>(mu.size());
    Eigen::LLT<Matrix> llt(sigma);
    if (llt.info() != Eigen::Success) throw NotPositiveDefinite("hit_and_run: Sigma");
    const Matrix prec = llt.solve(Matrix::Identity(d, d));
    const Matrix pcs = pc_directions(sigma);

    std::vector<Vector> dirs;
    for (int j = 0; j < d; ++j) dirs.push_back(Vector::Unit(d, j));
    for (int j = 0; j < pcs.cols(); ++j) dirs.push_back(pcs.col(j).normalized());

    std::mt19937_64 rng(cfg.seed);
    std::uniform_int_distribution<std::size_t> pick(0, dirs.size() - 1);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    Vector b = find_mode(mu, sigma);
    // stay strictly interior so every coordinate direction has a live chord
    b = b.cwiseMax(1e-10);

    Matrix out(n_samples, d);
    const int total = n_samples + cfg.burn_in;
    for (int step = 0; step < total; ++step) {
        const Vector& v = dirs[pick(rng)];
        // along b + t v the log-density is -(a/2) t^2 + c t with
        // a = v' prec v, c = -v' prec (b - mu): a 1-D N(c/a, 1/a)
        const double a = v.dot(prec * v);
        const double c = -v.dot(prec * (b - mu));
        const double m = c / a;
        const double s = 1.0 / std::sqrt(a);
        // chord: b_j + t v_j >= 0 for all j
        double lo = -std::numeric_limits<double>::infinity();
        double hi = std::numeric_limits<double>::infinity();
        for (int j = 0; j < d; ++j) {
            if (v(j) > 1e-14) lo = std::max(lo, -b(j) / v(j));
            else if (v(j) < -1e-14) hi = std::min(hi, -b(j) / v(j));
        }
        const double plo = std::isinf(lo) ? 0.0 : norm_cdf((lo - m) / s);
        const double phi = std::isinf(hi) ? 1.0 : norm_cdf((hi - m) / s);
        if (phi - plo > 1e-300) {
            const double u = plo + unif(rng) * (phi - plo);
            const double t = m + s * norm_inv_cdf(std::clamp(u, 1e-16, 1.0 - 1e-16));
            b += std::clamp(t, lo, hi) * v;
            b = b.cwiseMax(0.0);
        }
        if (step >= cfg.burn_in) out.row(step - cfg.burn_in) = b;
    }
    return out;
}

} // namespace selinf
