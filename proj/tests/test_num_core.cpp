#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "selinf/num_core.hpp"

using namespace selinf;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

TEST_CASE("norm_cdf basic values") {
    CHECK(norm_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(norm_cdf(kInf) == 1.0);
    CHECK(norm_cdf(-kInf) == 0.0);
    // oracle: high-precision erf evaluation
    CHECK(std::abs(norm_cdf(1.96) - 0.9750021048517795) < 1e-14);
    for (double x : {-8.0, -3.1, -0.7, 0.2, 1.4, 5.5, 9.0})
        CHECK(std::abs(norm_cdf(-x) - (1.0 - norm_cdf(x))) < 1e-15);
    for (double x = -10.0; x < 10.0; x += 0.37) CHECK(norm_cdf(x) <= norm_cdf(x + 0.37));
}

TEST_CASE("norm_inv_cdf values and round trips") {
    CHECK(norm_inv_cdf(0.5) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(std::abs(norm_inv_cdf(norm_cdf(1.3)) - 1.3) < 1e-10);
    // oracle: bisection on norm_cdf
    CHECK(std::abs(norm_inv_cdf(0.975) - 1.959963984540054) < 1e-12);
    CHECK_THROWS_AS(norm_inv_cdf(0.0), std::domain_error);
    CHECK_THROWS_AS(norm_inv_cdf(1.0), std::domain_error);
    CHECK_THROWS_AS(norm_inv_cdf(-0.2), std::domain_error);
    for (double p : {1e-12, 1e-7, 0.01, 0.3, 0.77, 1.0 - 1e-7, 1.0 - 1e-12})
        CHECK(std::abs(norm_cdf(norm_inv_cdf(p)) - p) <= 1e-12 * std::max(1.0, 1.0 / p));
    // round-trip error bound over the working range
    for (double p = 1e-12; p < 1.0; p = p * 1.9 + 1e-4)
        CHECK(std::abs(norm_cdf(norm_inv_cdf(p)) - p) <= 1e-10);
}

TEST_CASE("owens_t identities and oracle values") {
    CHECK(owens_t(0.7, 0.0) == 0.0);
    for (double a : {0.2, 1.0, 4.0})
        CHECK(std::abs(owens_t(0.0, a) - std::atan(a) / (2.0 * M_PI)) < 1e-14);
    // oracle: 30-digit quadrature of the defining integrand
    CHECK(std::abs(owens_t(0.5, 1.0) - 0.10667106296144852) < 1e-12);
    CHECK(std::abs(owens_t(1.5, 0.7) - 0.027091480464145781) < 1e-12);
    CHECK(std::abs(owens_t(2.0, 0.3) - 0.0059286080308985149) < 1e-12);
    CHECK(std::abs(owens_t(0.3, 10.0) - 0.19102983907652997) < 1e-12);
    for (double h : {0.3, 1.1})
        for (double a : {0.5, 2.0, 7.0})
            CHECK(std::abs(owens_t(h, -a) + owens_t(h, a)) < 1e-15);
    // symmetry in h
    CHECK(std::abs(owens_t(-1.2, 0.8) - owens_t(1.2, 0.8)) < 1e-14);
}

TEST_CASE("bvn_prob closed forms and oracle values") {
    CHECK(bvn_prob(kInf, kInf, 0.3) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(std::abs(bvn_prob(0.0, 0.0, 0.0) - 0.25) < 1e-14);
    for (double rho : {-0.8, -0.3, 0.0, 0.5, 0.9}) {
        const double sheppard = 0.25 + std::asin(rho) / (2.0 * M_PI);
        CHECK(std::abs(bvn_prob(0.0, 0.0, rho) - sheppard) < 1e-10);
    }
    // oracle: scipy multivariate normal CDF
    CHECK(std::abs(bvn_prob(0.5, -0.3, 0.4) - 0.317126928286165) < 1e-8);
    CHECK(std::abs(bvn_prob(1.0, 0.5, -0.6) - 0.540022830315581) < 1e-8);
    CHECK(std::abs(bvn_prob(-1.2, 0.7, 0.85) - 0.115055200360721) < 1e-8);
    for (double x : {-2.0, -0.5, 0.0, 1.3, 3.0})
        for (double rho : {-0.7, 0.0, 0.6})
            CHECK(std::abs(bvn_prob(x, kInf, rho) - norm_cdf(x)) < 1e-12);
    // monotone in each argument
    double prev = 0.0;
    for (double x = -3.0; x <= 3.0; x += 0.25) {
        const double v = bvn_prob(x, 0.4, 0.5);
        CHECK(v >= prev);
        prev = v;
    }
    CHECK_THROWS_AS(bvn_prob(0.0, 0.0, 1.5), std::domain_error);
}

TEST_CASE("cholesky factorization") {
    Matrix eye = Matrix::Identity(3, 3);
    CHECK((cholesky(eye).L - eye).norm() < 1e-15);

    Matrix s(2, 2);
    s << 4.0, 2.0, 2.0, 3.0;
    const Matrix L = cholesky(s).L;
    CHECK(L(0, 0) == doctest::Approx(2.0));
    CHECK(L(1, 0) == doctest::Approx(1.0));
    CHECK(L(1, 1) == doctest::Approx(std::sqrt(2.0)));
    CHECK(L(0, 1) == 0.0);

    Matrix bad(2, 2);
    bad << 1.0, 2.0, 2.0, 1.0;
    CHECK_THROWS_AS(cholesky(bad), NotPositiveDefinite);

    std::mt19937_64 rng(11);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 20; ++trial) {
        const int d = 2 + static_cast<int>(rng() % 19);
        Matrix a(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) a(i, j) = g(rng);
        Matrix pd = a * a.transpose() + 0.1 * Matrix::Identity(d, d);
        const Matrix Lr = cholesky(pd).L;
        CHECK((Lr * Lr.transpose() - pd).norm() / pd.norm() <= 1e-10);
    }
}

TEST_CASE("trunc_norm_moments_1d") {
    auto [m_free, v_free] = trunc_norm_moments_1d(0.7, 2.3, -kInf);
    CHECK(m_free == doctest::Approx(0.7));
    CHECK(v_free == doctest::Approx(2.3));

    auto [m_half, v_half] = trunc_norm_moments_1d(0.0, 1.0, 0.0);
    CHECK(std::abs(m_half - std::sqrt(2.0 / M_PI)) < 1e-12);
    CHECK(std::abs(v_half - (1.0 - 2.0 / M_PI)) < 1e-12);

    // oracle: scipy truncnorm
    auto [m_g, v_g] = trunc_norm_moments_1d(1.0, 4.0, 2.0);
    CHECK(std::abs(m_g - 3.282155540736130) < 1e-10);
    CHECK(std::abs(v_g - 1.073921628623512) < 1e-10);

    // far-tail Mills branch stays finite and ordered
    auto [m_far, v_far] = trunc_norm_moments_1d(0.0, 1.0, 40.0);
    CHECK(std::isfinite(m_far));
    CHECK(std::isfinite(v_far));
    CHECK(m_far >= 40.0);
    CHECK(v_far <= 1.0);

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int t = 0; t < 50; ++t) {
        const double mu = u(rng), lo = u(rng), var = 0.2 + std::abs(u(rng));
        auto [m, v] = trunc_norm_moments_1d(mu, var, lo);
        CHECK(m >= std::max(mu, lo));
        CHECK(v <= var * (1.0 + 1e-12));
        CHECK(v > 0.0);
    }
}
