#pragma once

// Shared test utilities: small simulated carving instances.

#include <random>

#include "selinf/selection.hpp"

namespace testutil {

using selinf::Dataset;
using selinf::Matrix;
using selinf::SelectionRecord;
using selinf::Vector;

inline Dataset gaussian_dataset(int n, int p, const Vector& beta, std::uint64_t seed,
                                double noise = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    Dataset data;
    data.X.resize(n, p);
    data.Y.resize(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j) data.X(i, j) = g(rng);
    const Vector mean = data.X * beta;
    for (int i = 0; i < n; ++i) data.Y(i) = mean(i) + noise * g(rng);
    return data;
}

// Simulated carving record with estimated noise variance; retries seeds
// until the selected model is non-empty.
inline SelectionRecord carving_record(int n, int p, const Vector& beta, std::uint64_t seed,
                                      double rho = 0.8, double lambda_scale = 1.0) {
    for (std::uint64_t attempt = 0; attempt < 64; ++attempt) {
        Dataset data = gaussian_dataset(n, p, beta, seed + 7919 * attempt);
        data.sigma2 = selinf::estimate_sigma2(data);
        const int n1 = static_cast<int>(rho * n);
        const double lambda =
            lambda_scale * (n1 / rho) * selinf::lambda_theory(p, n1);
        try {
            return selinf::carve_select(data, rho, lambda, seed + 31 * attempt);
        } catch (const selinf::EmptyModel&) {
            continue;
        }
    }
    throw std::runtime_error("carving_record: no non-empty selection in 64 attempts");
}

} // namespace testutil
