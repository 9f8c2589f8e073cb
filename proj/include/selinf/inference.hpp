#pragma once

// Conditional-law assembly and the three inference routes: CDF pivots with
// single-batch confidence intervals, the selective MLE with Wald intervals,
// and the sample-splitting baseline.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "selinf/errors.hpp"
#include "selinf/num_core.hpp"
#include "selinf/qmc.hpp"
#include "selinf/selection.hpp"
#include "selinf/sov.hpp"

namespace selinf {

namespace detail {

// Products against the randomization precision: H = Q2' Om^-1 Q2 and
// k-type vectors Q2' Om^-1 v. The scaled-Gram case short-circuits through
// the Corollary-1 identities; the generic case solves with Omega directly.
struct RandomizationOps {
    const SelectionRecord& rec;
    bool generic;
    Matrix omega_cov;      // generic path only
    Eigen::LLT<Matrix> omega_llt;
    Matrix Q2;             // p x d, generic path only

    RandomizationOps(const SelectionRecord& r, bool force_generic) : rec(r) {
        generic = force_generic || !r.spec.is_scaled_gram();
        if (generic) {
            if (r.spec.is_scaled_gram()) {
                omega_cov = (r.sigma2 / r.spec.kappa) * (r.X.transpose() * r.X);
            } else {
                omega_cov = r.spec.omega_cov;
            }
            omega_llt.compute(omega_cov);
            if (omega_llt.info() != Eigen::Success)
                throw NotPositiveDefinite("randomization covariance not PD");
            Matrix xm = rec.X_M();
            Q2 = (rec.X.transpose() * xm) * rec.signs.asDiagonal();
        }
    }

    Matrix H() const {
        if (!generic) {
            Matrix xm = rec.X_M();
            Matrix gram = xm.transpose() * xm;
            const double scale = rec.spec.kappa / rec.sigma2;
            return scale * (rec.signs.asDiagonal() * gram * rec.signs.asDiagonal());
        }
        return Q2.transpose() * omega_llt.solve(Q2);
    }

    Vector apply(const Vector& v_full) const {
        if (!generic) {
            const double scale = rec.spec.kappa / rec.sigma2;
            return scale * rec.signs.cwiseProduct(rec.t_M(v_full));
        }
        return Q2.transpose() * omega_llt.solve(v_full);
    }
};

} // namespace detail

/// All Proposition-1 quantities for one (eta, theta).
struct ConditionalLaw {
    Matrix H;
    Vector k;
    Vector c_tilde;
    double nu = 0.0;
    double sigma2_theta = 0.0; // conditional variance of theta-hat given b
    Matrix Sigma_b;
    Vector mu_b;
    Vector t;                  // r + s + Q1 beta_perp
    Vector tau;                // importance-weight direction, sigma_theta * H c~
    double delta = 0.0;        // importance-weight offset (depends on theta)
    double theta = 0.0;
    double theta_hat = 0.0;
    Vector eta;
    Matrix Sigma;
};

inline ConditionalLaw conditional_law(const SelectionRecord& rec, const Vector& eta,
                                      double theta, bool force_generic = false) {
    if (eta.isZero(0.0)) throw std::invalid_argument("conditional_law: eta must be nonzero");
    const int d = rec.d();
    ConditionalLaw law;
    law.eta = eta;
    law.theta = theta;
    law.Sigma = rec.Sigma();
    law.nu = eta.dot(law.Sigma * eta);
    const Vector c = (law.Sigma * eta) / law.nu;
    law.c_tilde = rec.signs.cwiseProduct(c);
    law.theta_hat = eta.dot(rec.beta_hat_M);

    // nuisance conditioning: t = r + s + Q1 beta_perp, Q1 = -X'X_M
    const Vector beta_perp = rec.beta_hat_M - c * law.theta_hat;
    Matrix xm = rec.X_M();
    law.t = rec.r + rec.s - (rec.X.transpose() * (xm * beta_perp));

    detail::RandomizationOps ops(rec, force_generic);
    law.H = ops.H();
    law.k = ops.apply(law.t);

    const double quad = law.c_tilde.dot(law.H * law.c_tilde);
    law.sigma2_theta = 1.0 / (1.0 / law.nu + quad);

    Eigen::LLT<Matrix> hllt(law.H);
    if (hllt.info() != Eigen::Success) throw SingularH("conditional_law: H not PD");
    law.Sigma_b = hllt.solve(Matrix::Identity(d, d)) +
                  law.nu * (law.c_tilde * law.c_tilde.transpose());
    law.Sigma_b = 0.5 * (law.Sigma_b + law.Sigma_b.transpose()).eval();

    const Vector Hc = law.H * law.c_tilde;
    const double sd_theta = std::sqrt(law.sigma2_theta);
    law.tau = sd_theta * Hc;
    law.delta = sd_theta * (theta / law.nu + law.c_tilde.dot(law.k) -
                            law.theta_hat / law.sigma2_theta);
    // Sigma_b (-k + sigma2 H c~ (theta/nu + c~'k)) == -H^-1 k + c~ theta
    law.mu_b = law.Sigma_b *
               (-law.k + law.sigma2_theta * Hc * (theta / law.nu + law.c_tilde.dot(law.k)));
    return law;
}

/// F-hat(theta-hat) under H0: eta' beta_M = theta, via the pre-integrated
/// SOV ratio in the Gibson-ordered frame. Returns the one-sided CDF value.
inline Estimate pvalue(const SelectionRecord& rec, const Vector& eta, double theta,
                       const ReplicateSet& reps, bool force_generic = false,
                       bool preintegrate = true) {
    ConditionalLaw law = conditional_law(rec, eta, theta, force_generic);
    const double sd = std::sqrt(law.sigma2_theta);
    LinearGaussianFunctional fnl;
    fnl.slope = -law.tau; // g1 = -sigma_theta H c~
    fnl.intercept = law.theta_hat / sd - sd * (theta / law.nu + law.c_tilde.dot(law.k));
    OrthantGaussian og = gibson_reorder(law.mu_b, law.Sigma_b);
    return cdf_estimate(og, fnl, reps, preintegrate, reps.count() >= 2);
}

inline double two_sided(double F) { return 2.0 * std::min(F, 1.0 - F); }

/// Reference sampling law of Eq-style single-batch inference: precision H,
/// independent of (eta, theta).
struct ReferenceLaw {
    Vector mu_bar;
    Matrix Sigma_bar;
};

inline ReferenceLaw reference_law(const SelectionRecord& rec, bool force_generic = false) {
    detail::RandomizationOps ops(rec, force_generic);
    const Matrix H = ops.H();
    Eigen::LLT<Matrix> hllt(H);
    if (hllt.info() != Eigen::Success) throw SingularH("reference_law: H not PD");
    Matrix xm = rec.X_M();
    const Vector rhs = -ops.apply(rec.r + rec.s - rec.X.transpose() * (xm * rec.beta_hat_M));
    ReferenceLaw ref;
    ref.mu_bar = hllt.solve(rhs);
    ref.Sigma_bar = hllt.solve(Matrix::Identity(rec.d(), rec.d()));
    ref.Sigma_bar = 0.5 * (ref.Sigma_bar + ref.Sigma_bar.transpose()).eval();
    return ref;
}

/// log of the Lemma-1 importance weight against the reference law.
inline double log_importance_weight(const Vector& b, const Vector& tau, double delta) {
    const double y = b.dot(tau);
    return 0.5 * y * y + delta * y;
}

inline double importance_weight(const Vector& b, const Vector& tau, double delta) {
    return std::exp(log_importance_weight(b, tau, delta));
}

struct ReportEntry {
    int index = -1;           // original design-column index
    double estimate = 0.0;
    double p_value = 1.0;     // two-sided at theta = 0
    double ci_lower = 0.0;
    double ci_upper = 0.0;
    double boundary_stderr = 0.0;
    bool ess_collapsed = false;
};

struct InferenceReport {
    std::string method;
    std::vector<ReportEntry> entries;
};

struct GridConfig {
    int points = 200;
    double width_mult = 10.0;      // half-width in units of the anchor stderr
    double refine_frac = 1e-3;     // bisection tolerance as fraction of s_j
    double ess_floor = 32.0;
};

namespace detail {

// Per-coordinate state reused across the theta grid: only b' tau and the
// SOV log-weight enter the Algorithm-1 ratio.
struct BatchProjection {
    std::vector<Vector> y;      // per replicate: b' tau
    std::vector<Vector> log_w;  // per replicate: SOV weights
};

inline double weighted_pvalue(const BatchProjection& proj, const ConditionalLaw& law,
                              double theta, double* stderr_out, double* ess_out) {
    const double sd = std::sqrt(law.sigma2_theta);
    const double g2 = law.theta_hat / sd - sd * (theta / law.nu + law.c_tilde.dot(law.k));
    const double delta = sd * (theta / law.nu + law.c_tilde.dot(law.k) -
                               law.theta_hat / law.sigma2_theta);
    std::vector<double> ratios;
    double pool_sum = 0.0, pool_sq = 0.0;
    double pool_shift = -std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < proj.y.size(); ++r) {
        for (int i = 0; i < proj.y[r].size(); ++i) {
            pool_shift = std::max(pool_shift,
                                  proj.log_w[r](i) + 0.5 * proj.y[r](i) * proj.y[r](i) +
                                      delta * proj.y[r](i));
        }
    }
    for (std::size_t r = 0; r < proj.y.size(); ++r) {
        double num = 0.0, den = 0.0;
        for (int i = 0; i < proj.y[r].size(); ++i) {
            const double yi = proj.y[r](i);
            const double lw = proj.log_w[r](i) + 0.5 * yi * yi + delta * yi - pool_shift;
            const double w = std::exp(lw);
            den += w;
            num += w * norm_cdf(g2 - yi); // (theta_hat - mu(b))/sd = g2 - b' tau
            pool_sum += w;
            pool_sq += w * w;
        }
        if (den <= 0.0) throw DegenerateDenominator("weighted pivot: weights underflow");
        ratios.push_back(std::clamp(num / den, 0.0, 1.0));
    }
    const Estimate e = combine_replicates(ratios, false);
    if (stderr_out) *stderr_out = e.stderr_;
    if (ess_out) *ess_out = pool_sum * pool_sum / std::max(pool_sq, 1e-300);
    return e.value;
}

struct Anchor {
    Vector center;  // d
    Vector scale;   // d
};

inline Anchor ci_anchor(const SelectionRecord& rec) {
    Anchor a;
    const int d = rec.d();
    if (!rec.holdout.empty() && static_cast<int>(rec.holdout.size()) > d) {
        Matrix x2(rec.holdout.size(), d);
        Vector y2(rec.holdout.size());
        Matrix xm = rec.X_M();
        for (std::size_t i = 0; i < rec.holdout.size(); ++i) {
            x2.row(i) = xm.row(rec.holdout[i]);
            y2(i) = rec.Y(rec.holdout[i]);
        }
        Eigen::LLT<Matrix> llt(x2.transpose() * x2);
        if (llt.info() == Eigen::Success) {
            a.center = llt.solve(x2.transpose() * y2);
            const Matrix inv = llt.solve(Matrix::Identity(d, d));
            a.scale = (rec.sigma2 * inv.diagonal()).cwiseSqrt();
            return a;
        }
    }
    a.center = rec.beta_hat_M;
    a.scale = rec.Sigma().diagonal().cwiseSqrt();
    return a;
}

} // namespace detail

namespace detail {

// Shared grid-inversion core: the caller supplies, per coordinate, the
// projection of a reference-law sample batch onto b' tau (with log-weights).
template <class ProjectionBuilder>
inline InferenceReport ci_core(const SelectionRecord& rec, double alpha,
                               const GridConfig& grid, const std::string& method,
                               ProjectionBuilder&& project) {
    const int d = rec.d();
    const detail::Anchor anchor = detail::ci_anchor(rec);

    InferenceReport report;
    report.method = method;
    for (int j = 0; j < d; ++j) {
        Vector eta = Vector::Zero(d);
        eta(j) = 1.0;
        ConditionalLaw law = conditional_law(rec, eta, 0.0);
        detail::BatchProjection proj = project(law);

        const double lo_grid = anchor.center(j) - grid.width_mult * anchor.scale(j);
        const double hi_grid = anchor.center(j) + grid.width_mult * anchor.scale(j);
        const double step = (hi_grid - lo_grid) / (grid.points - 1);

        auto accept_margin = [&](double theta, double* se) {
            double ess = 0.0;
            const double p = detail::weighted_pvalue(proj, law, theta, se, &ess);
            return std::make_pair(two_sided(p) - alpha, ess);
        };

        ReportEntry entry;
        entry.index = rec.active[j];
        entry.estimate = rec.beta_hat_M(j);
        {
            double se0 = 0.0, ess0 = 0.0;
            const double p0 = detail::weighted_pvalue(proj, law, 0.0, &se0, &ess0);
            entry.p_value = two_sided(p0);
        }

        int first = -1, last = -1;
        double min_ess = std::numeric_limits<double>::infinity();
        double best_margin = -std::numeric_limits<double>::infinity();
        double best_theta = anchor.center(j);
        std::vector<double> margins(grid.points);
        for (int g = 0; g < grid.points; ++g) {
            const double theta = lo_grid + g * step;
            auto [m, ess] = accept_margin(theta, nullptr);
            margins[g] = m;
            min_ess = std::min(min_ess, ess);
            if (m > best_margin) {
                best_margin = m;
                best_theta = theta;
            }
            if (m >= 0.0) {
                if (first < 0) first = g;
                last = g;
            }
        }
        entry.ess_collapsed = min_ess < grid.ess_floor;

        auto bisect_edge = [&](double inside, double outside) {
            const double tol = grid.refine_frac * anchor.scale(j);
            for (int it = 0; it < 60 && std::abs(outside - inside) > tol; ++it) {
                const double mid = 0.5 * (inside + outside);
                if (accept_margin(mid, nullptr).first >= 0.0) inside = mid;
                else outside = mid;
            }
            return inside;
        };

        if (first < 0) {
            entry.ci_lower = entry.ci_upper = best_theta; // degenerate interval
        } else {
            double lo = lo_grid + first * step;
            double hi = lo_grid + last * step;
            if (first > 0) lo = bisect_edge(lo, lo - step);
            if (last < grid.points - 1) hi = bisect_edge(hi, hi + step);
            entry.ci_lower = lo;
            entry.ci_upper = hi;
        }
        {
            double se_lo = 0.0, se_hi = 0.0;
            detail::weighted_pvalue(proj, law, entry.ci_lower, &se_lo, nullptr);
            detail::weighted_pvalue(proj, law, entry.ci_upper, &se_hi, nullptr);
            entry.boundary_stderr = std::max(se_lo, se_hi);
        }
        report.entries.push_back(entry);
    }
    return report;
}

} // namespace detail

/// Algorithm-1 confidence intervals: one reference-law sample batch reused
/// across every coordinate and grid point through Lemma-1 reweighting. The
/// CI inverts the two-sided rule 2 min(p, 1-p) >= alpha, with boundary
/// refinement by bisection between adjacent grid points.
inline InferenceReport confidence_intervals(const SelectionRecord& rec, double alpha,
                                            const ReplicateSet& reps,
                                            const GridConfig& grid = {}) {
    const ReferenceLaw ref = reference_law(rec);
    const OrthantGaussian og = gibson_reorder(ref.mu_bar, ref.Sigma_bar);

    std::vector<SovBatch> batches;
    batches.reserve(reps.count());
    for (const auto& pb : reps.batches) batches.push_back(sov_transform(og, pb));

    return detail::ci_core(rec, alpha, grid, "cdf-sov", [&](const ConditionalLaw& law) {
        detail::BatchProjection proj;
        for (const auto& sb : batches) {
            Vector y(sb.size);
            for (int i = 0; i < sb.size; ++i) y(i) = sb.b.row(i).dot(law.tau);
            proj.y.push_back(std::move(y));
            proj.log_w.push_back(sb.log_w);
        }
        return proj;
    });
}

struct MleOptions {
    double step = 0.01;
    int max_iterations = 5000;
    double grad_tol = 1e-6;
    double objective_tol = 1e-8;
    int points = 256;            // RQMC points per gradient evaluation
    int replicates = 1;
    int hessian_points = 4096;
    int hessian_replicates = 8;
    std::uint64_t seed = 1;
    double alpha = 0.05;
    bool center_at_unadjusted = false; // Wald centering variant
};

struct MleResult {
    Vector beta;
    Matrix info;                 // observed information
    std::vector<double> ci_lower, ci_upper;
    int iterations = 0;
    double grad_norm = 0.0;
    std::vector<double> trajectory; // per-iteration negative log-likelihood
};

/// Selective MLE by gradient descent on the estimated negative selective
/// log-likelihood, with common random numbers frozen across iterations and
/// an enlarged fresh sample for the observed information at the optimum.
inline MleResult selective_mle(const SelectionRecord& rec, const MleOptions& opt = {}) {
    const int d = rec.d();
    const Matrix Sigma = rec.Sigma();
    Eigen::LLT<Matrix> sig_llt(Sigma);
    if (sig_llt.info() != Eigen::Success) throw NotPositiveDefinite("selective_mle: Sigma");
    const Matrix Sigma_inv = sig_llt.solve(Matrix::Identity(d, d));

    detail::RandomizationOps ops(rec, false);
    const Matrix H = ops.H();
    Eigen::LLT<Matrix> hllt(H);
    if (hllt.info() != Eigen::Success) throw SingularH("selective_mle: H not PD");
    const Matrix Sigma_b = (hllt.solve(Matrix::Identity(d, d)) +
                            rec.signs.asDiagonal() * Sigma * rec.signs.asDiagonal())
                               .eval();
    Eigen::LLT<Matrix> sb_llt(Sigma_b);
    if (sb_llt.info() != Eigen::Success) throw NotPositiveDefinite("selective_mle: Sigma_b");
    const Matrix Sigma_b_inv = sb_llt.solve(Matrix::Identity(d, d));
    const Vector m0 = -hllt.solve(ops.apply(rec.r + rec.s)); // mu_b = D beta + m0

    // common random numbers: one frozen replicate set for the whole descent
    const ReplicateSet crn = replicate_set(d, opt.points, opt.replicates, opt.seed);

    auto mu_of = [&](const Vector& beta) -> Vector {
        return rec.signs.cwiseProduct(beta) + m0;
    };
    auto objective = [&](const Vector& beta) -> double {
        const Vector dev = rec.beta_hat_M - beta;
        const OrthantGaussian og = gibson_reorder(mu_of(beta), Sigma_b);
        const double h = orthant_prob(og, crn, false).value;
        return 0.5 * dev.dot(Sigma_inv * dev) + std::log(std::max(h, 1e-300));
    };
    auto gradient = [&](const Vector& beta) -> Vector {
        const Vector mu = mu_of(beta);
        const OrthantGaussian og = gibson_reorder(mu, Sigma_b);
        const TruncatedMoments tm = truncated_moments(og, crn);
        return -Sigma_inv * (rec.beta_hat_M - beta) +
               rec.signs.cwiseProduct(Sigma_b_inv * (tm.mean - mu));
    };

    MleResult res;
    Vector beta = rec.beta_hat_M;
    double obj = objective(beta);
    res.trajectory.push_back(obj);
    Vector grad = gradient(beta);
    bool converged = false;
    int it = 0;
    for (; it < opt.max_iterations; ++it) {
        if (grad.norm() < opt.grad_tol) {
            converged = true;
            break;
        }
        // fixed step with Armijo backtracking fallback under fixed seeds
        double step = opt.step;
        double new_obj = 0.0;
        Vector candidate;
        const double slope = grad.squaredNorm();
        for (int bt = 0; bt < 40; ++bt) {
            candidate = beta - step * grad;
            new_obj = objective(candidate);
            if (new_obj <= obj - 1e-4 * step * slope) break;
            step *= 0.5;
        }
        const double change = obj - new_obj;
        beta = candidate;
        obj = new_obj;
        res.trajectory.push_back(obj);
        grad = gradient(beta);
        if (std::abs(change) < opt.objective_tol * std::max(1.0, std::abs(obj))) {
            converged = true;
            break;
        }
    }
    if (!converged) throw NoConvergence("selective_mle: iteration cap reached");
    res.beta = beta;
    res.iterations = it;
    res.grad_norm = grad.norm();

    // observed information with an enlarged, re-randomized sample
    const ReplicateSet hess_reps =
        replicate_set(d, opt.hessian_points, opt.hessian_replicates, opt.seed ^ 0x5eed5eedULL);
    const Vector mu = mu_of(beta);
    const OrthantGaussian og = gibson_reorder(mu, Sigma_b);
    const TruncatedMoments tm = truncated_moments(og, hess_reps);
    Matrix info = Sigma_inv + rec.signs.asDiagonal() *
                                  (Sigma_b_inv * tm.cov * Sigma_b_inv - Sigma_b_inv) *
                                  rec.signs.asDiagonal();
    info = 0.5 * (info + info.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(info);
    if (eig.eigenvalues().minCoeff() <= 0.0)
        throw HessianNotPD("selective_mle: estimated observed information not PD");
    res.info = info;

    const Matrix info_inv = info.llt().solve(Matrix::Identity(d, d));
    const double q = norm_inv_cdf(1.0 - opt.alpha / 2.0);
    for (int j = 0; j < d; ++j) {
        const double center = opt.center_at_unadjusted ? rec.beta_hat_M(j) : beta(j);
        const double half = q * std::sqrt(info_inv(j, j));
        res.ci_lower.push_back(center - half);
        res.ci_upper.push_back(center + half);
    }
    return res;
}

/// Classical z-intervals for beta_M from the hold-out rows only.
inline InferenceReport splitting_baseline(const SelectionRecord& rec, double alpha) {
    const int d = rec.d();
    if (static_cast<int>(rec.holdout.size()) <= d)
        throw RankDeficient("splitting_baseline: need more hold-out rows than |M|");
    Matrix xm = rec.X_M();
    Matrix x2(rec.holdout.size(), d);
    Vector y2(rec.holdout.size());
    for (std::size_t i = 0; i < rec.holdout.size(); ++i) {
        x2.row(i) = xm.row(rec.holdout[i]);
        y2(i) = rec.Y(rec.holdout[i]);
    }
    Eigen::LLT<Matrix> llt(x2.transpose() * x2);
    if (llt.info() != Eigen::Success) throw RankDeficient("splitting_baseline: X2'X2 singular");
    const Vector beta2 = llt.solve(x2.transpose() * y2);
    const Matrix inv = llt.solve(Matrix::Identity(d, d));
    const double q = norm_inv_cdf(1.0 - alpha / 2.0);

    InferenceReport report;
    report.method = "splitting";
    for (int j = 0; j < d; ++j) {
        const double se = std::sqrt(rec.sigma2 * inv(j, j));
        ReportEntry e;
        e.index = rec.active[j];
        e.estimate = beta2(j);
        e.ci_lower = beta2(j) - q * se;
        e.ci_upper = beta2(j) + q * se;
        e.p_value = two_sided(norm_cdf(beta2(j) / se));
        report.entries.push_back(e);
    }
    return report;
}

} // namespace selinf
