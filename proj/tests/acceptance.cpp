// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure. Criteria cover end-to-end statistical behavior, estimator
// precision, and reproducibility.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <vector>

#include "helpers.hpp"
#include "selinf/baselines.hpp"
#include "selinf/inference.hpp"
#include "selinf/sim.hpp"

using namespace selinf;
using testutil::carving_record;

namespace {

int g_failures = 0;

void report(int id, const char* name, bool pass, const std::string& detail = "") {
    std::printf("%s criterion %d: %s%s%s\n", pass ? "PASS" : "FAIL", id, name,
                detail.empty() ? "" : " — ", detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ResultTable compare_with_retry(ExperimentConfig cfg) {
    for (int i = 0;; ++i) {
        try {
            return run_compare(cfg);
        } catch (const EmptyModel&) {
            if (i >= 32) throw;
            ++cfg.seed;
        }
    }
}

Vector unit(int d, int j) {
    Vector e = Vector::Zero(d);
    e(j) = 1.0;
    return e;
}

// ---------------------------------------------------------------- 1
void criterion_1() {
    bool pass = true;
    std::string detail;
    for (double rho : {-0.8, 0.0, 0.5, 0.9}) {
        Matrix s(2, 2);
        s << 1.0, rho, rho, 1.0;
        const Estimate e = orthant_prob(gibson_reorder(Vector::Zero(2), s),
                                        replicate_set(2, 1 << 12, 16, 7));
        const double truth = 0.25 + std::asin(rho) / (2.0 * M_PI);
        const double err = std::abs(e.value - truth);
        if (err > 1e-4) {
            pass = false;
            detail += "rho=" + std::to_string(rho) + " err=" + std::to_string(err) + " ";
        }
    }
    report(1, "bivariate orthant probability vs closed form (1e-4)", pass, detail);
}

// ---------------------------------------------------------------- 2
void criterion_2() {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentConfig cfg;
    cfg.n = 150;
    cfg.p = 30;
    cfg.c0 = 0.0;
    cfg.sparsity = 0;
    cfg.rho = 0.8;
    cfg.seed = 616;
    std::vector<double> pivots;
    int rep = 0;
    while (static_cast<int>(pivots.size()) < 200 && rep < 2000) {
        SimulatedInstance inst = simulate_data(cfg, rep++);
        inst.data.sigma2 = estimate_sigma2(inst.data);
        const int n1 = static_cast<int>(cfg.rho * cfg.n);
        const double lambda = (n1 / cfg.rho) * lambda_theory(cfg.p, n1);
        try {
            const SelectionRecord rec = carve_select(
                inst.data, cfg.rho, lambda,
                detail::stream_seed(cfg.seed, rep, detail::Stream::Split));
            // under the global null every coordinate's submodel target is 0
            const ReplicateSet reps = replicate_set(
                rec.d(), 256, 8, detail::stream_seed(cfg.seed, rep, detail::Stream::Sampler));
            pivots.push_back(pvalue(rec, unit(rec.d(), 0), 0.0, reps).value);
        } catch (const EmptyModel&) {
        } catch (const std::exception&) {
        }
    }
    bool pass = static_cast<int>(pivots.size()) >= 200;
    double ks = 0.0;
    if (pass) {
        std::sort(pivots.begin(), pivots.end());
        const int m = static_cast<int>(pivots.size());
        for (int i = 0; i < m; ++i) {
            ks = std::max(ks, std::abs(pivots[i] - (i + 1.0) / m));
            ks = std::max(ks, std::abs(pivots[i] - static_cast<double>(i) / m));
        }
        pass = ks < 1.63 / std::sqrt(static_cast<double>(m)); // KS 1% critical value
    }
    char buf[128];
    std::snprintf(buf, sizeof buf, "KS=%.4f over %zu null pivots, %.0fs", ks, pivots.size(),
                  elapsed_s(t0));
    report(2, "null-pivot uniformity (KS at level 0.01)", pass, buf);
}

// ---------------------------------------------------------------- 3
void criterion_3() {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentConfig cfg; // paper-scale defaults: n=300 p=100 ar c0=0.6 theory
    cfg.repetitions = 200;
    cfg.rqmc_n = 256;
    cfg.replicates = 8;
    cfg.seed = 31415;
    const ResultTable table = run_simulation(cfg);
    double cov_cdf = -1, cov_mle = -1, len_split = -1, len_cdf = -1, len_mle = -1;
    for (const auto& row : table.rows) {
        if (row.method == "cdf-sov") {
            cov_cdf = row.coverage;
            len_cdf = row.mean_length;
        } else if (row.method == "mle-sov") {
            cov_mle = row.coverage;
            len_mle = row.mean_length;
        } else if (row.method == "splitting") {
            len_split = row.mean_length;
        }
    }
    const bool pass = cov_cdf >= 0.92 && cov_cdf <= 0.98 && cov_mle >= 0.92 &&
                      len_split > len_cdf && len_cdf > len_mle;
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "coverage cdf=%.3f mle=%.3f; lengths split=%.3f > cdf=%.3f > mle=%.3f, %.0fs",
                  cov_cdf, cov_mle, len_split, len_cdf, len_mle, elapsed_s(t0));
    report(3, "paper-scale coverage and length ordering", pass, buf);
}

// ---------------------------------------------------------------- 4
void criterion_4() {
    auto rmse = [](GeneratorKind kind, int N, int R) {
        double ss = 0.0;
        for (int r = 0; r < R; ++r) {
            const PointBatch b = kind == GeneratorKind::SobolScrambled
                                     ? sobol_batch(5, N, 9000 + r)
                                     : pseudo_batch(5, N, 9000 + r);
            double acc = 0.0;
            for (int i = 0; i < N; ++i) {
                double f = 1.0;
                for (int k = 0; k < 5; ++k) f *= 1.0 + (b.at(i, k) - 0.5);
                acc += f;
            }
            const double err = acc / N - 1.0; // true integral is 1
            ss += err * err;
        }
        return std::sqrt(ss / R);
    };
    auto slope = [&](GeneratorKind kind) {
        std::vector<double> lx, ly;
        for (int e = 6; e <= 14; ++e) {
            lx.push_back(e * std::log(2.0));
            ly.push_back(std::log(rmse(kind, 1 << e, 32)));
        }
        const double n = lx.size();
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (std::size_t i = 0; i < lx.size(); ++i) {
            sx += lx[i];
            sy += ly[i];
            sxx += lx[i] * lx[i];
            sxy += lx[i] * ly[i];
        }
        return (n * sxy - sx * sy) / (n * sxx - sx * sx);
    };
    const double s_sobol = slope(GeneratorKind::SobolScrambled);
    const double s_pseudo = slope(GeneratorKind::PseudoRandom);
    const bool pass = s_sobol <= -0.9 && s_pseudo >= -0.6;
    char buf[96];
    std::snprintf(buf, sizeof buf, "slopes sobol=%.3f pseudo=%.3f", s_sobol, s_pseudo);
    report(4, "RQMC convergence-rate advantage on the smooth integrand", pass, buf);
}

// ---------------------------------------------------------------- 5
void criterion_5() {
    std::mt19937_64 rng(61);
    std::normal_distribution<double> g;
    int wins = 0;
    for (int trial = 0; trial < 50; ++trial) {
        Matrix a(5, 5);
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 5; ++j) a(i, j) = g(rng);
        const Matrix sigma = a * a.transpose() / 5 + 0.3 * Matrix::Identity(5, 5);
        Vector mu(5), slope(5);
        for (int i = 0; i < 5; ++i) {
            mu(i) = g(rng);
            slope(i) = 0.8 * g(rng);
        }
        const OrthantGaussian og = gibson_reorder(mu, sigma);
        LinearGaussianFunctional fnl;
        fnl.slope = slope;
        fnl.intercept = g(rng);
        const ReplicateSet reps = replicate_set(5, 1 << 10, 16, 700 + trial);
        const Estimate with = cdf_estimate(og, fnl, reps, true);
        const Estimate without = cdf_estimate(og, fnl, reps, false);
        if (with.stderr_ <= without.stderr_ + 1e-15) ++wins;
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%d of 50 instances", wins);
    report(5, "pre-integration reduces replicate variance (>= 45/50)", wins >= 45, buf);
}

// ---------------------------------------------------------------- 6
void criterion_6() {
    bool pass = true;
    std::string detail;
    for (int inst = 0; inst < 3 && pass; ++inst) {
        Vector beta = Vector::Zero(5);
        beta(0) = 2.5;
        beta(3) = -2.0;
        const SelectionRecord rec = carving_record(100, 5, beta, 4001 + 13 * inst);
        const int d = rec.d();
        const Matrix Sigma = rec.Sigma();
        const Matrix Sigma_inv = Sigma.llt().solve(Matrix::Identity(d, d));
        const ConditionalLaw law = conditional_law(rec, unit(d, 0), 0.0);
        const Matrix Sigma_b = law.H.llt().solve(Matrix::Identity(d, d)) +
                               rec.signs.asDiagonal() * Sigma * rec.signs.asDiagonal();
        const Matrix Sigma_b_inv = Sigma_b.llt().solve(Matrix::Identity(d, d));
        const Vector m0 = -law.H.llt().solve(
            (rec.spec.kappa / rec.sigma2) *
            rec.signs.cwiseProduct(rec.t_M(rec.r) + rec.t_M(rec.s)));
        const ReplicateSet crn = replicate_set(d, 1 << 12, 8, 555 + inst);

        for (double scale : {1.0, 0.9, 0.7}) {
            const Vector at = rec.beta_hat_M * scale;
            const Vector mu = rec.signs.cwiseProduct(at) + m0;
            // freeze the coordinate ordering at the evaluation point so the
            // common-random-numbers objective stays smooth under perturbation
            const OrthantGaussian base = gibson_reorder(mu, Sigma_b);
            auto at_mean = [&](const Vector& m) {
                OrthantGaussian og = base;
                og.mu = m;
                for (int k = 0; k < d; ++k) og.mu_p(k) = m(base.perm[k]);
                return og;
            };
            auto objective = [&](const Vector& bm) {
                const Vector dev = rec.beta_hat_M - bm;
                return 0.5 * dev.dot(Sigma_inv * dev) +
                       std::log(orthant_prob(at_mean(rec.signs.cwiseProduct(bm) + m0), crn,
                                             false)
                                    .value);
            };
            const TruncatedMoments tm = truncated_moments(base, crn);
            const Vector grad = -Sigma_inv * (rec.beta_hat_M - at) +
                                rec.signs.cwiseProduct(Sigma_b_inv * (tm.mean - mu));
            for (int j = 0; j < d; ++j) {
                Vector lo = at, hi = at;
                lo(j) -= 1e-4;
                hi(j) += 1e-4;
                const double fd = (objective(hi) - objective(lo)) / 2e-4;
                if (std::abs(fd - grad(j)) > 1e-3 * std::max(1.0, std::abs(grad(j)))) {
                    pass = false;
                    detail = "gradient mismatch at scale " + std::to_string(scale);
                }
            }
            // Hessian of -log l must be PD at the iterate
            Matrix info = Sigma_inv + rec.signs.asDiagonal() *
                                          (Sigma_b_inv * tm.cov * Sigma_b_inv - Sigma_b_inv) *
                                          rec.signs.asDiagonal();
            info = 0.5 * (info + info.transpose()).eval();
            Eigen::SelfAdjointEigenSolver<Matrix> eig(info);
            if (eig.eigenvalues().minCoeff() <= 0.0) {
                pass = false;
                detail = "Hessian not PD";
            }
        }
    }
    report(6, "likelihood gradient matches finite differences; Hessian PD", pass, detail);
}

// ---------------------------------------------------------------- 7
void criterion_7() {
    Vector beta = Vector::Zero(6);
    beta(0) = 2.5;
    beta(2) = -2.0;
    const SelectionRecord rec = carving_record(100, 6, beta, 1301);
    const int d = rec.d();
    const ReferenceLaw ref = reference_law(rec);
    const Matrix ref_prec = ref.Sigma_bar.llt().solve(Matrix::Identity(d, d));
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> u(0.05, 3.0);
    bool pass = true;
    for (int rep = 0; rep < 20 && pass; ++rep) {
        Vector eta(d);
        for (int i = 0; i < d; ++i) eta(i) = g(rng);
        if (eta.norm() < 1e-3) eta(0) += 1.0;
        const ConditionalLaw law = conditional_law(rec, eta, g(rng));
        const Matrix law_prec = law.Sigma_b.llt().solve(Matrix::Identity(d, d));
        double first = 0.0;
        for (int i = 0; i < 100; ++i) {
            Vector b(d);
            for (int k = 0; k < d; ++k) b(k) = u(rng);
            const double lw = log_importance_weight(b, law.tau, law.delta);
            const double lr = -0.5 * (b - law.mu_b).dot(law_prec * (b - law.mu_b)) +
                              0.5 * (b - ref.mu_bar).dot(ref_prec * (b - ref.mu_bar));
            const double c = lw - lr;
            if (i == 0) first = c;
            else if (std::abs(c - first) > 1e-8) pass = false;
        }
    }
    report(7, "importance weight equals the density ratio up to a constant (1e-8)", pass);
}

// ---------------------------------------------------------------- 8
void criterion_8() {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentConfig cfg;
    cfg.n = 150;
    cfg.p = 30;
    cfg.c0 = 1.2;
    cfg.sparsity = 5;
    cfg.rqmc_n = 1 << 12;
    cfg.compare_replicates = 50;
    cfg.seed = 2718;
    const ResultTable table = compare_with_retry(cfg);
    int coords = 0, good = 0;
    double sov_s = 0.0, hnr_s = 0.0;
    for (std::size_t i = 0; i + 1 < table.rows.size(); i += 2) {
        const ResultRow& sov = table.rows[i];
        const ResultRow& hnr = table.rows[i + 1];
        ++coords;
        if (sov.mean_p_stderr <= 0.2 * hnr.mean_p_stderr) ++good;
        sov_s = sov.seconds;
        hnr_s = hnr.seconds;
    }
    const bool pass = coords > 0 && good >= (9 * coords + 9) / 10 && sov_s < hnr_s;
    char buf[128];
    std::snprintf(buf, sizeof buf, "%d/%d coords at <=0.2x; wall sov=%.1fs hnr=%.1fs, %.0fs",
                  good, coords, sov_s, hnr_s, elapsed_s(t0));
    report(8, "SOV beats hit-and-run on pivot precision and wall clock", pass, buf);
}

// ---------------------------------------------------------------- 9
void criterion_9() {
    std::mt19937_64 rng(101);
    bool pass = true;
    for (int trial = 0; trial < 50 && pass; ++trial) {
        Vector beta = Vector::Zero(8);
        beta(0) = 2.5;
        beta(3) = -2.0;
        const SelectionRecord rec = carving_record(120, 8, beta, 5000 + trial);
        const int d = rec.d();
        const int j = static_cast<int>(rng() % d);
        const double theta = -0.5 + 0.01 * trial;
        const ConditionalLaw a = conditional_law(rec, unit(d, j), theta, false);
        const ConditionalLaw b = conditional_law(rec, unit(d, j), theta, true);
        auto rel = [](double x, double y) {
            return std::abs(x - y) / std::max({1.0, std::abs(x), std::abs(y)});
        };
        if ((a.H - b.H).norm() / b.H.norm() > 1e-8) pass = false;
        if ((a.k - b.k).norm() / std::max(1.0, b.k.norm()) > 1e-8) pass = false;
        if ((a.mu_b - b.mu_b).norm() / std::max(1.0, b.mu_b.norm()) > 1e-8) pass = false;
        if ((a.Sigma_b - b.Sigma_b).norm() / b.Sigma_b.norm() > 1e-8) pass = false;
        if (rel(a.sigma2_theta, b.sigma2_theta) > 1e-8) pass = false;
        if ((a.tau - b.tau).norm() / std::max(1.0, b.tau.norm()) > 1e-8) pass = false;
        if (rel(a.delta, b.delta) > 1e-8) pass = false;
    }
    report(9, "generic and scaled-Gram conditional laws agree (1e-8, 50 records)", pass);
}

// ---------------------------------------------------------------- 10
void criterion_10() {
    ExperimentConfig cfg;
    cfg.n = 60;
    cfg.p = 8;
    cfg.c0 = 1.2;
    cfg.sparsity = 2;
    cfg.repetitions = 3;
    cfg.rqmc_n = 64;
    cfg.replicates = 4;
    cfg.bootstrap = 100;
    cfg.seed = 777;
    // wall-clock columns legitimately differ between runs; blank them and
    // compare the numeric payload byte for byte
    auto numeric_csv = [](ResultTable t) {
        for (auto& row : t.rows) row.seconds = 0.0;
        return t.to_csv();
    };
    const std::string a = numeric_csv(run_simulation(cfg));
    const std::string b = numeric_csv(run_simulation(cfg));

    ExperimentConfig ccfg = cfg;
    ccfg.rqmc_n = 256;
    ccfg.compare_replicates = 5;
    const std::string ca = numeric_csv(compare_with_retry(ccfg));
    const std::string cb = numeric_csv(compare_with_retry(ccfg));
    const bool pass = a == b && ca == cb &&
                      manifest(cfg).dump() == manifest(cfg).dump();
    report(10, "byte-identical numeric output under a fixed manifest", pass);
}

} // namespace

int main() {
    criterion_1();
    criterion_2();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    criterion_9();
    criterion_10();
    criterion_8();
    criterion_3();
    std::printf("%s: %d criterion failure(s)\n", g_failures ? "FAILURE" : "SUCCESS", g_failures);
    return g_failures ? 1 : 0;
}
