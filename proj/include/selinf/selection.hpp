#pragma once

// Randomized lasso solving and the bookkeeping that freezes a selection
// event: active set, signs, KKT residual/subgradient, and the randomization
// law implied by data carving.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include "selinf/errors.hpp"
#include "selinf/num_core.hpp"

namespace selinf {

struct Dataset {
    Matrix X;                       // n x p
    Vector Y;                       // n
    std::optional<double> sigma2;   // known noise variance, if any

    int n() const { return static_cast<int>(X.rows()); }
    int p() const { return static_cast<int>(X.cols()); }

    void validate() const {
        if (n() < 2 || p() < 1) throw std::invalid_argument("Dataset: need n >= 2, p >= 1");
        if (Y.size() != n()) throw ShapeMismatch("Dataset: response length != row count");
        if (!X.allFinite() || !Y.allFinite())
            throw std::invalid_argument("Dataset: non-finite entries");
    }
};

struct RandomizationSpec {
    enum class Kind { ExplicitCovariance, Carving };
    Kind kind = Kind::ExplicitCovariance;
    Matrix omega_cov;   // p x p, explicit case
    double kappa = 0.0; // Omega = kappa^{-1} sigma^2 X'X
    double rho = 0.0;   // carving fraction, kappa = rho / (1 - rho)

    static RandomizationSpec explicit_cov(Matrix cov) {
        RandomizationSpec s;
        s.kind = Kind::ExplicitCovariance;
        s.omega_cov = std::move(cov);
        return s;
    }
    static RandomizationSpec carving(double rho) {
        RandomizationSpec s;
        s.kind = Kind::Carving;
        s.rho = rho;
        s.kappa = rho / (1.0 - rho);
        return s;
    }
    bool is_scaled_gram() const { return kind == Kind::Carving; }
};

enum class TargetConvention { Submodel, FullModel };

/// Frozen output of a selection event. All downstream inference reads only
/// this record.
struct SelectionRecord {
    Matrix X;
    Vector Y;
    double sigma2 = 1.0;
    double lambda = 0.0;            // penalty on the solver's (unnormalized) scale
    std::vector<int> active;        // M, ascending
    Vector signs;                   // diag of D, +-1
    Vector magnitudes;              // b = |beta^lambda_M| > 0
    Vector beta_hat_M;              // A_M Y
    Vector r;                       // X'(X_M beta_hat_M - Y)
    Vector s;                       // lasso subgradient
    RandomizationSpec spec;
    std::vector<int> holdout;       // row indices held out by carving (may be empty)
    TargetConvention target = TargetConvention::Submodel;

    int d() const { return static_cast<int>(active.size()); }
    int n() const { return static_cast<int>(X.rows()); }
    int p() const { return static_cast<int>(X.cols()); }

    Matrix X_M() const {
        Matrix xm(X.rows(), d());
        for (int j = 0; j < d(); ++j) xm.col(j) = X.col(active[j]);
        return xm;
    }
    Vector t_M(const Vector& t) const {
        Vector out(d());
        for (int j = 0; j < d(); ++j) out(j) = t(active[j]);
        return out;
    }
    /// Covariance of the test statistic, sigma^2 A_M A_M'.
    Matrix Sigma() const {
        Matrix xm = X_M();
        Matrix gram = xm.transpose() * xm;
        return sigma2 * gram.llt().solve(Matrix::Identity(d(), d()));
    }
};

/// Cyclic coordinate descent for
///   min 1/2 ||Y - X beta||^2 + lambda ||beta||_1 - omega' beta.
inline Vector solve_randomized_lasso(const Dataset& data, double lambda, const Vector& omega,
                                     int max_sweeps = 100000, double tol = 1e-10) {
    if (!(lambda > 0.0)) throw std::invalid_argument("solve_randomized_lasso: lambda must be > 0");
    const int p = data.p();
    Vector beta = Vector::Zero(p);
    Vector resid = data.Y; // Y - X beta
    Vector col_sq(p);
    for (int j = 0; j < p; ++j) col_sq(j) = data.X.col(j).squaredNorm();

    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double max_delta = 0.0;
        for (int j = 0; j < p; ++j) {
            if (col_sq(j) == 0.0) continue;
            const double old = beta(j);
            const double rho_j = data.X.col(j).dot(resid) + col_sq(j) * old + omega(j);
            double bj = 0.0;
            if (rho_j > lambda) bj = (rho_j - lambda) / col_sq(j);
            else if (rho_j < -lambda) bj = (rho_j + lambda) / col_sq(j);
            if (bj != old) {
                resid -= data.X.col(j) * (bj - old);
                beta(j) = bj;
                max_delta = std::max(max_delta, std::abs(bj - old));
            }
        }
        if (max_delta < tol * std::max(1.0, beta.lpNorm<Eigen::Infinity>())) {
            // full KKT check: X'(X beta - Y) + s = omega for a valid subgradient
            const Vector grad = -data.X.transpose() * resid; // X'(X beta - Y)
            const double scale = 1.0 + (data.X.transpose() * data.Y).lpNorm<Eigen::Infinity>();
            bool ok = true;
            for (int j = 0; j < p; ++j) {
                const double g = grad(j) - omega(j); // must equal -s_j
                if (beta(j) != 0.0) {
                    if (std::abs(g + lambda * (beta(j) > 0 ? 1.0 : -1.0)) > 1e-8 * scale) ok = false;
                } else if (std::abs(g) > lambda + 1e-8 * scale) {
                    ok = false;
                }
            }
            if (ok) return beta;
        }
    }
    throw NoConvergence("solve_randomized_lasso: iteration cap reached");
}

namespace detail {

inline double support_threshold(const Vector& beta) {
    return 1e-9 * std::max(1.0, beta.lpNorm<Eigen::Infinity>());
}

} // namespace detail

/// Build a SelectionRecord from a solved randomized lasso. The subgradient is
/// recovered from the KKT system s = omega - X'(X beta - Y).
inline SelectionRecord extract_kkt(const Dataset& data, double lambda, const Vector& omega,
                                   const Vector& beta_hat, const RandomizationSpec& spec,
                                   TargetConvention target = TargetConvention::Submodel) {
    const int p = data.p();
    SelectionRecord rec;
    rec.X = data.X;
    rec.Y = data.Y;
    rec.sigma2 = data.sigma2.value_or(1.0);
    rec.lambda = lambda;
    rec.spec = spec;
    rec.target = target;

    const double thr = detail::support_threshold(beta_hat);
    for (int j = 0; j < p; ++j) {
        if (std::abs(beta_hat(j)) > thr) rec.active.push_back(j);
    }
    const int d = rec.d();
    if (d == 0) throw EmptyModel("extract_kkt: lasso selected no variables");

    rec.signs.resize(d);
    rec.magnitudes.resize(d);
    for (int j = 0; j < d; ++j) {
        rec.signs(j) = beta_hat(rec.active[j]) > 0 ? 1.0 : -1.0;
        rec.magnitudes(j) = std::abs(beta_hat(rec.active[j]));
    }

    Matrix xm = rec.X_M();
    Matrix gram = xm.transpose() * xm;
    Eigen::LLT<Matrix> llt(gram);
    if (llt.info() != Eigen::Success) throw RankDeficient("extract_kkt: rank(X_M) < |M|");

    if (target == TargetConvention::Submodel) {
        rec.beta_hat_M = llt.solve(xm.transpose() * data.Y);
    } else {
        Matrix full_gram = data.X.transpose() * data.X;
        Eigen::LLT<Matrix> fl(full_gram);
        if (fl.info() != Eigen::Success)
            throw RankDeficient("extract_kkt: full-model view needs rank(X) = p");
        const Vector beta_full = fl.solve(data.X.transpose() * data.Y);
        rec.beta_hat_M.resize(d);
        for (int j = 0; j < d; ++j) rec.beta_hat_M(j) = beta_full(rec.active[j]);
    }

    rec.r = data.X.transpose() * (xm * llt.solve(xm.transpose() * data.Y) - data.Y);
    // recover subgradient from the solved KKT system
    rec.s = omega - data.X.transpose() * (data.X * beta_hat - data.Y);
    // clip the inactive block into [-lambda, lambda] (CD tolerance slack)
    for (int j = 0; j < p; ++j) {
        if (std::abs(beta_hat(j)) <= thr)
            rec.s(j) = std::clamp(rec.s(j), -lambda, lambda);
        else
            rec.s(j) = lambda * (beta_hat(j) > 0 ? 1.0 : -1.0);
    }
    return rec;
}

struct CarveSplit {
    std::vector<int> selection_rows;
    std::vector<int> holdout_rows;
    RandomizationSpec spec;
};

/// Deterministic carving split: floor(rho * n) selection rows, rest held out.
inline CarveSplit carve_split(const Dataset& data, double rho, std::uint64_t seed) {
    if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("carve_split: rho in (0,1)");
    const int n = data.n();
    const int n1 = static_cast<int>(std::floor(rho * n));
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 gen(seed);
    std::shuffle(idx.begin(), idx.end(), gen);
    CarveSplit cs;
    cs.selection_rows.assign(idx.begin(), idx.begin() + n1);
    cs.holdout_rows.assign(idx.begin() + n1, idx.end());
    std::sort(cs.selection_rows.begin(), cs.selection_rows.end());
    std::sort(cs.holdout_rows.begin(), cs.holdout_rows.end());
    cs.spec = RandomizationSpec::carving(rho);
    return cs;
}

/// Solve the carving lasso in its Remark-1 scaled form
///   min (1/2rho) ||Y1 - X1 beta||^2 + lambda ||beta||_1
/// and freeze the selection on the full data, with the realized
/// omega = X'(X beta - Y) + s and Omega = ((1-rho)/rho) sigma^2 X'X.
inline SelectionRecord carve_select(const Dataset& data, double rho, double lambda,
                                    std::uint64_t seed,
                                    TargetConvention target = TargetConvention::Submodel) {
    const CarveSplit cs = carve_split(data, rho, seed);
    const int n1 = static_cast<int>(cs.selection_rows.size());
    Dataset sub;
    sub.X.resize(n1, data.p());
    sub.Y.resize(n1);
    const double scale = 1.0 / std::sqrt(rho);
    for (int i = 0; i < n1; ++i) {
        sub.X.row(i) = data.X.row(cs.selection_rows[i]) * scale;
        sub.Y(i) = data.Y(cs.selection_rows[i]) * scale;
    }
    sub.sigma2 = data.sigma2;
    const Vector beta_hat = solve_randomized_lasso(sub, lambda, Vector::Zero(data.p()));
    // realized randomization: omega = X'(X beta - Y) + s, with
    // s = -(1/rho) X1'(X1 beta - Y1) from the scaled problem's KKT system
    const Vector s = -sub.X.transpose() * (sub.X * beta_hat - sub.Y);
    const Vector omega = data.X.transpose() * (data.X * beta_hat - data.Y) + s;
    SelectionRecord rec = extract_kkt(data, lambda, omega, beta_hat, cs.spec, target);
    rec.holdout = cs.holdout_rows;
    return rec;
}

/// Residual variance from the saturated least-squares fit.
inline double estimate_sigma2(const Dataset& data) {
    const int n = data.n(), p = data.p();
    if (n <= p) throw RankDeficient("estimate_sigma2: need n > p");
    Eigen::LLT<Matrix> llt(data.X.transpose() * data.X);
    if (llt.info() != Eigen::Success) throw RankDeficient("estimate_sigma2: X'X singular");
    const Vector fitted = data.X * llt.solve(data.X.transpose() * data.Y);
    return (data.Y - fitted).squaredNorm() / (n - p);
}

/// Theory-recommended regularization on the normalized objective scale.
inline double lambda_theory(int p, int n1) { return std::sqrt(std::log(static_cast<double>(p)) / n1); }

/// 5-fold (by default) cross-validated lambda for the plain lasso on the
/// selection data, on the normalized objective scale. Grid: 50 log-spaced
/// values over [0.01, 1] * ||X'Y||_inf / n.
inline double lambda_cv(const Dataset& data, int folds = 5,
                        const std::vector<double>& grid_in = {}, std::uint64_t seed = 0) {
    if (folds < 2) throw std::invalid_argument("lambda_cv: folds >= 2");
    const int n = data.n();
    std::vector<double> grid = grid_in;
    if (grid.empty()) {
        const double lmax = (data.X.transpose() * data.Y).lpNorm<Eigen::Infinity>() / n;
        for (int i = 0; i < 50; ++i) {
            grid.push_back(lmax * std::pow(100.0, -static_cast<double>(49 - i) / 49.0));
        }
    }
    if (grid.size() == 1) return grid.front();

    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 gen(seed);
    std::shuffle(idx.begin(), idx.end(), gen);

    std::vector<double> cv_err(grid.size(), 0.0);
    for (int f = 0; f < folds; ++f) {
        std::vector<int> train, test;
        for (int i = 0; i < n; ++i) ((i % folds == f) ? test : train).push_back(idx[i]);
        Dataset tr;
        tr.X.resize(train.size(), data.p());
        tr.Y.resize(train.size());
        for (std::size_t i = 0; i < train.size(); ++i) {
            tr.X.row(i) = data.X.row(train[i]);
            tr.Y(i) = data.Y(train[i]);
        }
        const Vector zero = Vector::Zero(data.p());
        for (std::size_t g = 0; g < grid.size(); ++g) {
            // normalized-scale lambda => penalty grid[g] * n_train on the raw objective
            const Vector beta =
                solve_randomized_lasso(tr, grid[g] * static_cast<double>(train.size()), zero);
            double err = 0.0;
            for (int i : test) {
                const double pred = data.X.row(i).dot(beta);
                err += (data.Y(i) - pred) * (data.Y(i) - pred);
            }
            cv_err[g] += err;
        }
    }
    // ties (e.g. every lambda past the kill threshold on pure noise) break
    // toward the largest lambda
    const double best = *std::min_element(cv_err.begin(), cv_err.end());
    for (std::size_t g = grid.size(); g-- > 0;)
        if (cv_err[g] <= best * (1.0 + 1e-12) + 1e-12) return grid[g];
    return grid.back();
}

} // namespace selinf
