#pragma once

// Scalar special functions and small dense linear algebra shared by the
// sampling and inference layers.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

#include "selinf/errors.hpp"

namespace selinf {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kSqrt2 = 1.41421356237309504880;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;

/// Standard normal density.
inline double norm_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

/// Standard normal CDF via erfc; accurate into the far left tail where
/// the naive 1 - Phi(-x) form would cancel.
inline double norm_cdf(double x) {
    if (std::isnan(x)) return std::numeric_limits<double>::quiet_NaN();
    return 0.5 * std::erfc(-x / kSqrt2);
}

/// Upper tail 1 - Phi(x), computed without cancellation.
inline double norm_sf(double x) { return 0.5 * std::erfc(x / kSqrt2); }

/// log(1 - Phi(x)); asymptotic branch past the erfc underflow point (~37.5).
inline double log_norm_sf(double x) {
    if (x < 36.0) {
        return std::log(norm_sf(x));
    }
    // Mills-ratio expansion: 1-Phi(x) ~ phi(x)/x * (1 - 1/x^2 + 3/x^4 - ...)
    const double x2 = x * x;
    return -0.5 * x2 - 0.5 * std::log(2.0 * kPi) - std::log(x)
           + std::log1p(-1.0 / x2 + 3.0 / (x2 * x2));
}

namespace detail {

// Wichura's AS 241 (PPND16) rational approximations.
inline double inv_cdf_core(double p) {
    const double q = p - 0.5;
    if (std::abs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q *
               (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                     6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
                   1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
                 1.3314166789178437745e+2) * r + 3.3871328727963666080e+0) /
               (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                     3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
                   5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
                 4.2313330701600911252e+1) * r + 1.0);
    }
    double r = (q < 0.0) ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                    2.41780725177450611770e-1) * r + 1.27045825245236838258e+0) * r +
                  3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
                4.63033784615654529590e+0) * r + 1.42343711074968357734e+0) /
              (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                    1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                  6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
                2.05319162663775882187e+0) * r + 1.0);
    } else {
        r -= 5.0;
        val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                    1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                  2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
                5.46378491116411436990e+0) * r + 6.65790464350110377720e+0) /
              (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                    1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                  1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
                5.99832206555887937690e-1) * r + 1.0);
    }
    return (q < 0.0) ? -val : val;
}

} // namespace detail

/// Inverse standard normal CDF. Domain error outside (0,1).
inline double norm_inv_cdf(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw std::domain_error("norm_inv_cdf: p must lie in (0,1)");
    }
    double x = detail::inv_cdf_core(p);
    // One Newton polish step tightens the AS241 result to ~1e-15.
    const double e = norm_cdf(x) - p;
    const double d = norm_pdf(x);
    if (d > 0.0) x -= e / d;
    return x;
}

namespace detail {

// 32-point Gauss-Legendre nodes/weights on [0,1].
inline const double* gl32_nodes() {
    static const double n[32] = {
        1.3680690752592151e-03, 7.1942442273658092e-03, 1.7618872206246805e-02, 3.2546962031130167e-02,
        5.1839422116973899e-02, 7.5316193133715015e-02, 1.0275810201602881e-01, 1.3390894062985514e-01,
        1.6847786653489238e-01, 2.0614212137961885e-01, 2.4655004553388532e-01, 2.8932436193468236e-01,
        3.3406569885893617e-01, 3.8035631887393145e-01, 4.2776401920860174e-01, 4.7584616715613082e-01,
        5.2415383284386918e-01, 5.7223598079139826e-01, 6.1964368112606849e-01, 6.6593430114106389e-01,
        7.1067563806531764e-01, 7.5344995446611462e-01, 7.9385787862038115e-01, 8.3152213346510762e-01,
        8.6609105937014486e-01, 8.9724189798397114e-01, 9.2468380686628504e-01, 9.4816057788302610e-01,
        9.6745303796886983e-01, 9.8238112779375319e-01, 9.9280575577263419e-01, 9.9863193092474078e-01};
    return n;
}

inline const double* gl32_weights() {
    static const double w[32] = {
        3.5093050047346492e-03, 8.1371973654529826e-03, 1.2696032654631213e-02, 1.7136931456510813e-02,
        2.1417949011113213e-02, 2.5499029631188122e-02, 2.9342046739267852e-02, 3.2911111388180876e-02,
        3.6172897054424225e-02, 3.9096947893535156e-02, 4.1655962113473423e-02, 4.3826046502201954e-02,
        4.5586939347881932e-02, 4.6922199540402283e-02, 4.7819360039637417e-02, 4.8270044257363906e-02,
        4.8270044257363906e-02, 4.7819360039637417e-02, 4.6922199540402283e-02, 4.5586939347881932e-02,
        4.3826046502201954e-02, 4.1655962113473423e-02, 3.9096947893535156e-02, 3.6172897054424225e-02,
        3.2911111388180876e-02, 2.9342046739267852e-02, 2.5499029631188122e-02, 2.1417949011113213e-02,
        1.7136931456510813e-02, 1.2696032654631213e-02, 8.1371973654529826e-03, 3.5093050047346492e-03};
    return w;
}

// Composite Gauss-Legendre quadrature of the defining Owen integrand over
// [0,a] with 0 <= a <= 1. Panels shrink when h is large so the Gaussian
// factor exp(-h^2 t^2 / 2) is resolved.
inline double owens_t_quad(double h, double a) {
    const double hh = 0.5 * h * h;
    const int panels = std::max(2, std::min(16, static_cast<int>(a * std::abs(h)) + 2));
    const double* xs = gl32_nodes();
    const double* ws = gl32_weights();
    double total = 0.0;
    const double step = a / panels;
    for (int p = 0; p < panels; ++p) {
        const double lo = p * step;
        double acc = 0.0;
        for (int i = 0; i < 32; ++i) {
            const double t = lo + step * xs[i];
            acc += ws[i] * std::exp(-hh * (1.0 + t * t)) / (1.0 + t * t);
        }
        total += acc * step;
    }
    return total / (2.0 * kPi);
}

} // namespace detail

/// Owen's T function T(h,a) = (1/2pi) int_0^a exp(-h^2(1+t^2)/2)/(1+t^2) dt.
/// Range is reduced to h >= 0, 0 <= a <= 1 via the standard identities, then
/// the defining integral is evaluated by composite Gauss-Legendre quadrature.
inline double owens_t(double h, double a) {
    if (a == 0.0 || std::isinf(h)) return 0.0;
    if (a < 0.0) return -owens_t(h, -a);
    h = std::abs(h); // T(-h,a) = T(h,a)
    if (std::isinf(a)) return 0.5 * norm_sf(h);
    if (h == 0.0) return std::atan(a) / (2.0 * kPi);
    if (a <= 1.0) return detail::owens_t_quad(h, a);
    // T(h,a) = 1/2 Phi(h) + 1/2 Phi(ah) - Phi(h) Phi(ah) - T(ah, 1/a), a > 0
    const double ah = a * h;
    const double ph = norm_cdf(h);
    const double pah = norm_cdf(ah);
    return 0.5 * (ph + pah) - ph * pah - detail::owens_t_quad(ah, 1.0 / a);
}

/// Standard bivariate normal CDF P(Z1 <= x, Z2 <= y) with correlation rho,
/// via Owen's T decomposition. |rho| within 1e-12 of 1 reduces to the
/// comonotone/antithetic univariate forms.
inline double bvn_prob(double x, double y, double rho) {
    if (std::abs(rho) > 1.0) {
        throw std::domain_error("bvn_prob: |rho| must be <= 1");
    }
    if (std::isinf(x) || std::isinf(y)) {
        if (x == -std::numeric_limits<double>::infinity() ||
            y == -std::numeric_limits<double>::infinity())
            return 0.0;
        if (std::isinf(x) && std::isinf(y)) return 1.0;
        return std::isinf(x) ? norm_cdf(y) : norm_cdf(x);
    }
    if (rho >= 1.0 - 1e-12) return norm_cdf(std::min(x, y));
    if (rho <= -1.0 + 1e-12) return std::max(0.0, norm_cdf(x) + norm_cdf(y) - 1.0);

    const double s = std::sqrt((1.0 - rho) * (1.0 + rho));
    double t1, t2;
    if (x == 0.0 && y == 0.0) {
        return 0.25 + std::asin(rho) / (2.0 * kPi);
    }
    if (x != 0.0) {
        t1 = owens_t(x, (y - rho * x) / (x * s));
    } else {
        // lim_{x->0} T(x, (y - rho x)/(x s)) = sign(y)/4 for y != 0
        t1 = (y > 0.0 ? 0.25 : -0.25);
    }
    if (y != 0.0) {
        t2 = owens_t(y, (x - rho * y) / (y * s));
    } else {
        t2 = (x > 0.0 ? 0.25 : -0.25);
    }
    double delta = 0.0;
    if (x * y < 0.0 || (x * y == 0.0 && x + y < 0.0)) delta = 0.5;
    double p = 0.5 * (norm_cdf(x) + norm_cdf(y)) - t1 - t2 - delta;
    return std::min(1.0, std::max(0.0, p));
}

struct CholeskyFactor {
    Matrix L;
    Eigen::Index dim() const { return L.rows(); }
};

/// Lower Cholesky factor of a symmetric matrix. Throws NotPositiveDefinite
/// when a pivot falls below d * eps * max-diagonal.
inline CholeskyFactor cholesky(const Matrix& S) {
    const Eigen::Index d = S.rows();
    if (S.cols() != d) throw std::invalid_argument("cholesky: matrix must be square");
    Matrix L = Matrix::Zero(d, d);
    const double tol = static_cast<double>(d) * std::numeric_limits<double>::epsilon() *
                       std::max(S.diagonal().maxCoeff(), 0.0);
    for (Eigen::Index j = 0; j < d; ++j) {
        double pivot = S(j, j);
        for (Eigen::Index k = 0; k < j; ++k) pivot -= L(j, k) * L(j, k);
        if (pivot <= tol) {
            throw NotPositiveDefinite("cholesky: pivot " + std::to_string(pivot) +
                                      " at index " + std::to_string(j));
        }
        L(j, j) = std::sqrt(pivot);
        for (Eigen::Index i = j + 1; i < d; ++i) {
            double v = 0.5 * (S(i, j) + S(j, i));
            for (Eigen::Index k = 0; k < j; ++k) v -= L(i, k) * L(j, k);
            L(i, j) = v / L(j, j);
        }
    }
    return CholeskyFactor{std::move(L)};
}

/// Mean and variance of N(mu, var) truncated to [lower, inf).
inline std::pair<double, double> trunc_norm_moments_1d(double mu, double var, double lower) {
    if (!(var > 0.0)) throw std::domain_error("trunc_norm_moments_1d: var must be > 0");
    if (lower == -std::numeric_limits<double>::infinity()) return {mu, var};
    const double sd = std::sqrt(var);
    const double alpha = (lower - mu) / sd;
    double lam; // Mills ratio inverse phi(alpha)/(1 - Phi(alpha))
    if (alpha < 30.0) {
        lam = norm_pdf(alpha) / norm_sf(alpha);
    } else {
        const double a2 = alpha * alpha;
        lam = alpha / (1.0 - 1.0 / a2 + 3.0 / (a2 * a2));
    }
    const double mean = mu + sd * lam;
    const double v = var * (1.0 + alpha * lam - lam * lam);
    return {mean, std::max(v, 0.0)};
}

} // namespace selinf
