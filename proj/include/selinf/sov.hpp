#pragma once

// Separation-of-variables machinery for orthant-truncated Gaussians:
// Gibson variable reordering, the cube-to-orthant transform with its
// sequential weight, orthant probabilities, pre-integrated CDF ratios, and
// truncated-moment estimation.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <vector>

#include "selinf/errors.hpp"
#include "selinf/num_core.hpp"
#include "selinf/qmc.hpp"

namespace selinf {

// Truncation bounds are clamped here before Phi so that weights never
// underflow to exactly zero inside a product.
inline constexpr double kBoundClamp = 37.0;

/// A Gaussian N(mu, Sigma) restricted to the positive orthant, together with
/// the variable ordering used by the sequential transform. `mu`/`sigma` are
/// in the original frame; `L` factors the permuted covariance.
struct OrthantGaussian {
    Vector mu;              // original order
    Matrix sigma;           // original order
    std::vector<int> perm;  // perm[k] = original index placed at position k
    Vector mu_p;            // permuted mean
    Matrix L;               // Cholesky factor of permuted sigma

    int dim() const { return static_cast<int>(mu.size()); }
};

/// Linear-Gaussian functional b -> Phi(slope' b + intercept), given in the
/// original variable frame.
struct LinearGaussianFunctional {
    Vector slope;
    double intercept = 0.0;
};

/// SOV transform of one point batch: per-sample standardized variables,
/// orthant samples, and the sequential weight w(u) = prod_k (1 - Phi(a_k)).
struct SovBatch {
    int dim = 0;
    int size = 0;
    Matrix z;            // size x dim, permuted frame
    Matrix b;            // size x dim, original variable order
    Vector log_w;        // full weight, log scale
    Vector log_w_head;   // weight excluding the last factor
    Vector a_last;       // realized truncation bound of the last position
};

namespace detail {

// Shared Cholesky scan. When `greedy` is set, variables are picked by the
// Gibson rule: at each step take the unplaced variable whose conditional
// exceedance probability (previous variables plugged in at their truncated
// means) is smallest, i.e. whose standardized bound is largest.
inline OrthantGaussian build_orthant(const Vector& mu, const Matrix& sigma, bool greedy) {
    const int d = static_cast<int>(mu.size());
    OrthantGaussian og;
    og.mu = mu;
    og.sigma = sigma;
    og.perm.resize(d);
    std::iota(og.perm.begin(), og.perm.end(), 0);

    Matrix S = sigma;
    Vector m = mu;
    Matrix L = Matrix::Zero(d, d);
    Vector y = Vector::Zero(d); // truncated means of placed z-variables
    const double tol = d * std::numeric_limits<double>::epsilon() *
                       std::max(sigma.diagonal().maxCoeff(), 0.0);

    for (int i = 0; i < d; ++i) {
        int best = i;
        if (greedy) {
            double best_a = -std::numeric_limits<double>::infinity();
            for (int j = i; j < d; ++j) {
                double cjj = S(j, j) - L.row(j).head(i).squaredNorm();
                if (cjj <= tol) continue;
                double num = -m(j) - L.row(j).head(i).dot(y.head(i));
                double a = num / std::sqrt(cjj);
                if (a > best_a) {
                    best_a = a;
                    best = j;
                }
            }
        }
        if (best != i) {
            S.row(i).swap(S.row(best));
            S.col(i).swap(S.col(best));
            std::swap(m(i), m(best));
            L.row(i).head(i).swap(L.row(best).head(i));
            std::swap(og.perm[i], og.perm[best]);
        }
        double pivot = S(i, i) - L.row(i).head(i).squaredNorm();
        if (pivot <= tol)
            throw NotPositiveDefinite("gibson_reorder: pivot " + std::to_string(pivot) +
                                      " at step " + std::to_string(i));
        L(i, i) = std::sqrt(pivot);
        for (int j = i + 1; j < d; ++j) {
            L(j, i) = (S(j, i) - L.row(j).head(i).dot(L.row(i).head(i))) / L(i, i);
        }
        double a_i = (-m(i) - L.row(i).head(i).dot(y.head(i))) / L(i, i);
        a_i = std::clamp(a_i, -kBoundClamp, kBoundClamp);
        y(i) = norm_pdf(a_i) / norm_sf(a_i); // E[z | z >= a_i]
    }
    og.mu_p = m;
    og.L = std::move(L);
    return og;
}

} // namespace detail

/// Gibson-ordered orthant Gaussian (greedy conditional-exceedance rule).
inline OrthantGaussian gibson_reorder(const Vector& mu, const Matrix& sigma) {
    return detail::build_orthant(mu, sigma, true);
}

/// Identity ordering; used for permutation-consistency checks.
inline OrthantGaussian natural_order(const Vector& mu, const Matrix& sigma) {
    return detail::build_orthant(mu, sigma, false);
}

/// Sequential cube-to-orthant transform of `batch` under `og`.
/// a_k = (-mu_k - sum_{j<k} L_kj z_j)/L_kk, z_k = Phi^{-1}(Phi(a_k) + u_k (1 - Phi(a_k))),
/// b = L z + mu back in the original order; weights accumulate in log space.
inline SovBatch sov_transform(const OrthantGaussian& og, const PointBatch& batch,
                              bool want_b = true) {
    const int d = og.dim();
    if (batch.dim < d - 1)
        throw std::invalid_argument("sov_transform: batch dimension too small");
    const bool has_last = batch.dim >= d;

    SovBatch out;
    out.dim = d;
    out.size = batch.size;
    out.z.resize(batch.size, d);
    if (want_b) out.b.resize(batch.size, d);
    out.log_w.resize(batch.size);
    out.log_w_head.resize(batch.size);
    out.a_last.resize(batch.size);

    constexpr double p_eps = 1e-16;
    Vector zrow(d); // per-sample buffer; out.z is column-major, row reads stride
    for (int i = 0; i < batch.size; ++i) {
        double logw = 0.0;
        for (int k = 0; k < d; ++k) {
            double num = -og.mu_p(k);
            for (int j = 0; j < k; ++j) num -= og.L(k, j) * zrow(j);
            double a = std::clamp(num / og.L(k, k), -kBoundClamp, kBoundClamp);
            // one erfc per coordinate: the smaller of Phi(a), 1-Phi(a) is
            // computed directly, the other by subtraction (its absolute
            // error is eps while its value is >= 1/2, so no precision loss)
            double tail, cdf;
            if (a >= 0.0) {
                tail = norm_sf(a);
                cdf = 1.0 - tail;
            } else {
                cdf = norm_sf(-a);
                tail = 1.0 - cdf;
            }
            if (k == d - 1) {
                out.log_w_head(i) = logw;
                out.a_last(i) = a;
            }
            logw += std::log(tail);
            const double u = (k == d - 1 && !has_last) ? 0.5 : batch.at(i, k);
            double p = cdf + u * tail;
            p = std::clamp(p, p_eps, 1.0 - p_eps);
            double zk = norm_inv_cdf(p);
            if (zk <= a) zk = a + 1e-300; // keep b strictly positive
            zrow(k) = zk;
            out.z(i, k) = zk;
        }
        out.log_w(i) = logw;
        if (!want_b) continue;
        // b_k = L_kk (z_k - a_k) in the permuted frame, positive by construction
        for (int k = 0; k < d; ++k) {
            double bk = og.mu_p(k);
            for (int j = 0; j <= k; ++j) bk += og.L(k, j) * zrow(j);
            out.b(i, og.perm[k]) = std::max(bk, std::numeric_limits<double>::min());
        }
    }
    return out;
}

struct Estimate {
    double value = 0.0;
    double stderr_ = 0.0;
};

namespace detail {

inline Estimate combine_replicates(const std::vector<double>& means, bool want_stderr) {
    const int R = static_cast<int>(means.size());
    Estimate e;
    e.value = std::accumulate(means.begin(), means.end(), 0.0) / R;
    if (R >= 2) {
        double ss = 0.0;
        for (double m : means) ss += (m - e.value) * (m - e.value);
        e.stderr_ = std::sqrt(ss / (R - 1) / R);
    } else if (want_stderr) {
        throw InsufficientReplicates("standard error requested with R < 2");
    }
    return e;
}

} // namespace detail

/// Orthant probability P(N(mu,Sigma) > 0) as mean of per-replicate averages
/// of the SOV weight, with the replicate-spread standard error.
inline Estimate orthant_prob(const OrthantGaussian& og, const ReplicateSet& reps,
                             bool want_stderr = true) {
    std::vector<double> means;
    means.reserve(reps.count());
    for (const auto& batch : reps.batches) {
        SovBatch sb = sov_transform(og, batch);
        double acc = 0.0;
        for (int i = 0; i < sb.size; ++i) acc += std::exp(sb.log_w(i));
        means.push_back(acc / sb.size);
    }
    return detail::combine_replicates(means, want_stderr);
}

/// Exact pre-integration of the last standardized coordinate:
/// int_{a}^inf Phi(g z + c) phi(z) dz, via the bivariate-normal identity
/// with corr(V, Z) = -g / sqrt(1 + g^2).
inline double preintegrate_last(double g_last, double partial_sum, double a_last) {
    const double s = std::sqrt(1.0 + g_last * g_last);
    const double c = partial_sum / s;
    if (a_last == -std::numeric_limits<double>::infinity()) return norm_cdf(c);
    const double rho = -g_last / s;
    // P(V <= c, Z >= a) = Phi(c) - P(V <= c, Z <= a)
    return std::max(0.0, norm_cdf(c) - bvn_prob(c, a_last, rho));
}

namespace detail {

/// P(V <= c, Z >= a) for standard bivariate normal (V, Z) with a correlation
/// fixed across many calls: Phi(c)(1 - Phi(a)) minus Plackett's single
/// integral over t in [0, rho], one 32-point Gauss-Legendre panel. A single
/// panel resolves the analytic integrand to near machine precision for
/// |rho| <= 0.9; beyond that the exact Owen's-T route is used instead.
class FixedSlopePreintegral {
public:
    explicit FixedSlopePreintegral(double g_last) : g_(g_last) {
        s_ = std::sqrt(1.0 + g_last * g_last);
        rho_ = -g_last / s_;
        fast_ = std::abs(rho_) <= 0.9;
        if (fast_) {
            const double* xs = gl32_nodes();
            const double* ws = gl32_weights();
            for (int i = 0; i < 32; ++i) {
                tn_[i] = rho_ * xs[i];
                tw_[i] = rho_ * ws[i];
            }
        }
    }

    double operator()(double partial_sum, double a) const {
        if (!fast_) return preintegrate_last(g_, partial_sum, a);
        const double c = partial_sum / s_;
        double integral = 0.0;
        for (int i = 0; i < 32; ++i) {
            const double t = tn_[i];
            const double q = 1.0 - t * t;
            integral += tw_[i] *
                        std::exp(-(c * c - 2.0 * t * c * a + a * a) / (2.0 * q)) /
                        std::sqrt(q);
        }
        const double phi_c = c >= 0.0 ? 1.0 - norm_sf(c) : norm_sf(-c);
        return std::clamp(phi_c * norm_sf(a) - integral / (2.0 * kPi), 0.0, 1.0);
    }

private:
    double g_ = 0.0, s_ = 1.0, rho_ = 0.0;
    bool fast_ = false;
    std::array<double, 32> tn_{}, tw_{};
};

} // namespace detail

/// Ratio estimator of E[Phi(g' b + c)] under N(mu,Sigma)|orthant, per
/// replicate, with the last coordinate integrated out analytically.
inline Estimate cdf_estimate(const OrthantGaussian& og, const LinearGaussianFunctional& fnl,
                             const ReplicateSet& reps, bool preintegrate = true,
                             bool want_stderr = true) {
    const int d = og.dim();
    // transform the functional into the permuted standardized frame
    Vector g1p(d);
    for (int k = 0; k < d; ++k) g1p(k) = fnl.slope(og.perm[k]);
    const Vector g_tilde = og.L.transpose() * g1p;
    const double g2_tilde = fnl.intercept + g1p.dot(og.mu_p);

    const detail::FixedSlopePreintegral pre(g_tilde(d - 1));
    std::vector<double> ratios;
    ratios.reserve(reps.count());
    for (const auto& batch : reps.batches) {
        SovBatch sb = sov_transform(og, batch, /*want_b=*/false);
        const double shift = sb.log_w.maxCoeff();
        if (shift < -690.0)
            throw DegenerateDenominator("cdf_estimate: all SOV weights underflow");
        double num = 0.0, den = 0.0;
        for (int i = 0; i < sb.size; ++i) {
            const double w = std::exp(sb.log_w(i) - shift);
            den += w;
            if (preintegrate) {
                double partial = g2_tilde;
                for (int k = 0; k < d - 1; ++k) partial += g_tilde(k) * sb.z(i, k);
                num += std::exp(sb.log_w_head(i) - shift) * pre(partial, sb.a_last(i));
            } else {
                double arg = g2_tilde;
                for (int k = 0; k < d; ++k) arg += g_tilde(k) * sb.z(i, k);
                num += w * norm_cdf(arg);
            }
        }
        ratios.push_back(std::clamp(num / den, 0.0, 1.0));
    }
    return detail::combine_replicates(ratios, want_stderr);
}

struct TruncatedMoments {
    Vector mean;
    Matrix cov;
};

/// Self-normalized estimates of the mean and covariance of
/// N(mu,Sigma)|orthant, averaged over replicates (original variable order).
inline TruncatedMoments truncated_moments(const OrthantGaussian& og, const ReplicateSet& reps) {
    const int d = og.dim();
    if (reps.dim() < d)
        throw std::invalid_argument("truncated_moments: need full d cube coordinates");
    Vector mean_acc = Vector::Zero(d);
    Matrix cov_acc = Matrix::Zero(d, d);
    for (const auto& batch : reps.batches) {
        SovBatch sb = sov_transform(og, batch);
        const double shift = sb.log_w.maxCoeff();
        if (shift < -690.0)
            throw DegenerateDenominator("truncated_moments: all SOV weights underflow");
        double wsum = 0.0;
        Vector m = Vector::Zero(d);
        for (int i = 0; i < sb.size; ++i) {
            const double w = std::exp(sb.log_w(i) - shift);
            wsum += w;
            m += w * sb.b.row(i).transpose();
        }
        m /= wsum;
        Matrix c = Matrix::Zero(d, d);
        for (int i = 0; i < sb.size; ++i) {
            const double w = std::exp(sb.log_w(i) - shift);
            const Vector dev = sb.b.row(i).transpose() - m;
            c.noalias() += w * dev * dev.transpose();
        }
        c /= wsum;
        mean_acc += m;
        cov_acc += c;
    }
    TruncatedMoments tm;
    tm.mean = mean_acc / reps.count();
    tm.cov = cov_acc / reps.count();
    tm.cov = 0.5 * (tm.cov + tm.cov.transpose()).eval();
    return tm;
}

} // namespace selinf
