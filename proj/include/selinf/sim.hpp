#pragma once

// Simulation-study harness: synthetic data generation, the coverage/length
// experiment, and the SOV vs hit-and-run precision comparison, plus the
// reproducibility manifest.

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "selinf/baselines.hpp"
#include "selinf/errors.hpp"
#include "selinf/inference.hpp"
#include "selinf/selection.hpp"

namespace selinf {

inline constexpr const char* kVersion = "0.1.0";

struct ExperimentConfig {
    std::string scenario = "simulate";
    int n = 300;
    int p = 100;
    std::string covariance = "ar"; // ar | equi
    double cov_param = 0.9;
    double c0 = 0.6;
    int sparsity = 10;
    double rho = 0.8;              // carving fraction
    std::string lambda_rule = "theory"; // theory | cv
    double alpha = 0.05;
    int repetitions = 200;
    int rqmc_n = 256;              // 4096 for comparisons
    int replicates = 8;            // RQMC replicates per estimate
    int compare_replicates = 50;   // independent randomizations for stderr
    int bootstrap = 1000;
    std::uint64_t seed = 20240001;
    std::vector<std::string> methods{"splitting", "cdf-sov", "mle-sov"};

    void validate() const {
        if (n <= 0 || p <= 0 || sparsity < 0 || repetitions < 0 || rqmc_n <= 0 ||
            replicates <= 0 || bootstrap <= 0)
            throw std::invalid_argument("ExperimentConfig: counts must be positive");
        if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("ExperimentConfig: rho in (0,1)");
        if (!(alpha > 0.0 && alpha < 1.0))
            throw std::invalid_argument("ExperimentConfig: alpha in (0,1)");
        if (covariance != "ar" && covariance != "equi")
            throw std::invalid_argument("ExperimentConfig: covariance must be ar or equi");
        if (lambda_rule != "theory" && lambda_rule != "cv")
            throw std::invalid_argument("ExperimentConfig: lambda rule must be theory or cv");
    }
};

struct ResultRow {
    std::string method;
    std::string label;
    double coverage = 0.0;
    double coverage_lo = 0.0;  // bootstrap band
    double coverage_hi = 0.0;
    double mean_length = 0.0;
    double mean_p_stderr = 0.0;
    double seconds = 0.0;
    int reps_used = 0;
    int reps_skipped = 0;
};

struct ResultTable {
    std::vector<ResultRow> rows;

    std::string to_csv() const {
        std::ostringstream out;
        out.precision(12);
        out << "method,label,coverage,coverage_lo,coverage_hi,mean_length,"
               "mean_p_stderr,seconds,reps_used,reps_skipped\n";
        for (const auto& r : rows)
            out << r.method << ',' << r.label << ',' << r.coverage << ',' << r.coverage_lo
                << ',' << r.coverage_hi << ',' << r.mean_length << ',' << r.mean_p_stderr
                << ',' << r.seconds << ',' << r.reps_used << ',' << r.reps_skipped << '\n';
        return out.str();
    }

    nlohmann::json to_json() const {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& r : rows)
            arr.push_back({{"method", r.method},
                           {"label", r.label},
                           {"coverage", r.coverage},
                           {"coverage_lo", r.coverage_lo},
                           {"coverage_hi", r.coverage_hi},
                           {"mean_length", r.mean_length},
                           {"mean_p_stderr", r.mean_p_stderr},
                           {"seconds", r.seconds},
                           {"reps_used", r.reps_used},
                           {"reps_skipped", r.reps_skipped}});
        return arr;
    }
};

namespace detail {

// Stream-splitting: every random ingredient of repetition `rep` draws from
// its own counter-derived stream, so repetitions are order-independent.
enum class Stream : std::uint64_t { Data = 1, Split = 2, Beta = 3, Sampler = 4, Chain = 5 };

inline std::uint64_t stream_seed(std::uint64_t master, std::uint64_t rep, Stream s) {
    std::uint64_t state = master ^ (0x9e3779b97f4a7c15ULL * (rep + 1)) ^
                          (0xbf58476d1ce4e5b9ULL * static_cast<std::uint64_t>(s));
    return splitmix64(state);
}

inline Matrix design_covariance(const ExperimentConfig& cfg) {
    Matrix sigma(cfg.p, cfg.p);
    if (cfg.covariance == "ar") {
        for (int i = 0; i < cfg.p; ++i)
            for (int j = 0; j < cfg.p; ++j) sigma(i, j) = std::pow(cfg.cov_param, std::abs(i - j));
    } else {
        sigma.setConstant(cfg.cov_param);
        sigma.diagonal().array() = 1.0;
    }
    return sigma;
}

} // namespace detail

struct SimulatedInstance {
    Dataset data;
    Vector beta_true;
};

/// Rows iid N(0, Sigma_X); sparse signal with magnitudes +-sqrt(2 c0 log p / n)
/// on a random support; unit-variance noise.
inline SimulatedInstance simulate_data(const ExperimentConfig& cfg, std::uint64_t rep) {
    const Matrix sigma_x = detail::design_covariance(cfg);
    const Matrix L = cholesky(sigma_x).L;

    std::mt19937_64 rng(detail::stream_seed(cfg.seed, rep, detail::Stream::Data));
    std::normal_distribution<double> gauss(0.0, 1.0);

    SimulatedInstance inst;
    inst.data.X.resize(cfg.n, cfg.p);
    for (int i = 0; i < cfg.n; ++i) {
        Vector z(cfg.p);
        for (int j = 0; j < cfg.p; ++j) z(j) = gauss(rng);
        inst.data.X.row(i) = (L * z).transpose();
    }

    std::mt19937_64 beta_rng(detail::stream_seed(cfg.seed, rep, detail::Stream::Beta));
    std::vector<int> idx(cfg.p);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), beta_rng);
    const double mag = std::sqrt(2.0 * cfg.c0 * std::log(static_cast<double>(cfg.p)) / cfg.n);
    inst.beta_true = Vector::Zero(cfg.p);
    std::bernoulli_distribution coin(0.5);
    for (int s = 0; s < std::min(cfg.sparsity, cfg.p); ++s)
        inst.beta_true(idx[s]) = coin(beta_rng) ? mag : -mag;

    inst.data.Y.resize(cfg.n);
    const Vector mean = inst.data.X * inst.beta_true;
    for (int i = 0; i < cfg.n; ++i) inst.data.Y(i) = mean(i) + gauss(rng);
    return inst;
}

namespace detail {

inline double effective_lambda(const ExperimentConfig& cfg, const Dataset& data) {
    const int n1 = static_cast<int>(std::floor(cfg.rho * cfg.n));
    // the solver works on the unnormalized scale of the (1/rho)-inflated
    // selection half, whose effective sample size is n1/rho
    const double scale = n1 / cfg.rho;
    if (cfg.lambda_rule == "cv") return scale * lambda_cv(data);
    return scale * lambda_theory(cfg.p, n1);
}

// (X_M' X_M)^-1 X_M' X beta: the submodel projection of the true signal.
inline Vector submodel_target(const SelectionRecord& rec, const Vector& beta_true) {
    Matrix xm = rec.X_M();
    return (xm.transpose() * xm).llt().solve(xm.transpose() * (rec.X * beta_true));
}

// Hit-and-run analogue of the single-batch CI: one chain from the reference
// law, reweighted across the theta grid with the same exponential weights
// (the chain carries no sampling weights of its own).
inline InferenceReport hnr_confidence_intervals(const SelectionRecord& rec, double alpha,
                                                int n_samples, int pseudo_replicates,
                                                std::uint64_t seed,
                                                const GridConfig& grid = {}) {
    const ReferenceLaw ref = reference_law(rec);
    HitAndRunConfig hcfg;
    hcfg.seed = seed;
    const Matrix chain = hit_and_run_sample(ref.mu_bar, ref.Sigma_bar, n_samples, hcfg);
    const int chunk = n_samples / pseudo_replicates;
    return ci_core(rec, alpha, grid, "hit-and-run", [&](const ConditionalLaw& law) {
        BatchProjection proj;
        for (int r = 0; r < pseudo_replicates; ++r) {
            Vector y(chunk);
            for (int i = 0; i < chunk; ++i) y(i) = chain.row(r * chunk + i).dot(law.tau);
            proj.y.push_back(std::move(y));
            proj.log_w.push_back(Vector::Zero(chunk));
        }
        return proj;
    });
}

struct MethodTally {
    std::vector<int> covered, total;   // per repetition
    std::vector<double> length_sum;
    std::vector<double> p_stderr_sum;
    std::vector<int> p_count;
    double seconds = 0.0;

    void add(const InferenceReport& rep_report, const Vector& target) {
        int cov = 0, tot = 0;
        double len = 0.0, pse = 0.0;
        int pc = 0;
        for (std::size_t j = 0; j < rep_report.entries.size(); ++j) {
            const auto& e = rep_report.entries[j];
            const double th = target(static_cast<int>(j));
            cov += (e.ci_lower <= th && th <= e.ci_upper) ? 1 : 0;
            ++tot;
            len += e.ci_upper - e.ci_lower;
            pse += e.boundary_stderr;
            ++pc;
        }
        covered.push_back(cov);
        total.push_back(tot);
        length_sum.push_back(len);
        p_stderr_sum.push_back(pse);
        p_count.push_back(pc);
    }

    ResultRow summarize(const std::string& method, const std::string& label, int skipped,
                        int bootstrap_draws, std::uint64_t boot_seed) const {
        ResultRow row;
        row.method = method;
        row.label = label;
        row.seconds = seconds;
        row.reps_used = static_cast<int>(covered.size());
        row.reps_skipped = skipped;
        const double tot = std::accumulate(total.begin(), total.end(), 0.0);
        if (tot <= 0.0) return row;
        row.coverage = std::accumulate(covered.begin(), covered.end(), 0.0) / tot;
        row.mean_length = std::accumulate(length_sum.begin(), length_sum.end(), 0.0) / tot;
        const double pcs = std::accumulate(p_count.begin(), p_count.end(), 0.0);
        if (pcs > 0.0)
            row.mean_p_stderr =
                std::accumulate(p_stderr_sum.begin(), p_stderr_sum.end(), 0.0) / pcs;

        // cluster bootstrap over repetitions for the coverage band
        std::mt19937_64 rng(boot_seed);
        std::uniform_int_distribution<std::size_t> pick(0, covered.size() - 1);
        std::vector<double> draws(bootstrap_draws);
        for (int b = 0; b < bootstrap_draws; ++b) {
            double c = 0.0, t = 0.0;
            for (std::size_t r = 0; r < covered.size(); ++r) {
                const std::size_t i = pick(rng);
                c += covered[i];
                t += total[i];
            }
            draws[b] = t > 0.0 ? c / t : 0.0;
        }
        std::sort(draws.begin(), draws.end());
        row.coverage_lo = draws[static_cast<std::size_t>(0.025 * (bootstrap_draws - 1))];
        row.coverage_hi = draws[static_cast<std::size_t>(0.975 * (bootstrap_draws - 1))];
        return row;
    }
};

} // namespace detail

/// Coverage/length study over repeated simulated datasets. Repetitions with
/// an empty selected model are counted and skipped; other failures are
/// logged to stderr and excluded.
inline ResultTable run_simulation(const ExperimentConfig& cfg) {
    cfg.validate();
    std::map<std::string, detail::MethodTally> tallies;
    for (const auto& m : cfg.methods) tallies[m];
    int skipped = 0;

    using clock = std::chrono::steady_clock;
    for (int rep = 0; rep < cfg.repetitions; ++rep) {
        try {
            SimulatedInstance inst = simulate_data(cfg, rep);
            inst.data.sigma2 = estimate_sigma2(inst.data);
            const double lambda = detail::effective_lambda(cfg, inst.data);
            const SelectionRecord rec = carve_select(
                inst.data, cfg.rho, lambda,
                detail::stream_seed(cfg.seed, rep, detail::Stream::Split));
            const Vector target = detail::submodel_target(rec, inst.beta_true);
            const std::uint64_t sseed =
                detail::stream_seed(cfg.seed, rep, detail::Stream::Sampler);

            for (const auto& method : cfg.methods) {
                const auto t0 = clock::now();
                InferenceReport report;
                if (method == "splitting") {
                    report = splitting_baseline(rec, cfg.alpha);
                } else if (method == "cdf-sov") {
                    const ReplicateSet reps =
                        replicate_set(rec.d(), cfg.rqmc_n, cfg.replicates, sseed);
                    report = confidence_intervals(rec, cfg.alpha, reps);
                } else if (method == "mle-sov") {
                    MleOptions opt;
                    opt.points = cfg.rqmc_n;
                    opt.seed = sseed;
                    opt.alpha = cfg.alpha;
                    const MleResult mle = selective_mle(rec, opt);
                    report.method = "mle-sov";
                    for (int j = 0; j < rec.d(); ++j) {
                        ReportEntry e;
                        e.index = rec.active[j];
                        e.estimate = mle.beta(j);
                        e.ci_lower = mle.ci_lower[j];
                        e.ci_upper = mle.ci_upper[j];
                        report.entries.push_back(e);
                    }
                } else if (method == "hit-and-run") {
                    report = detail::hnr_confidence_intervals(
                        rec, cfg.alpha, 5 * cfg.rqmc_n, std::min(cfg.replicates, 8),
                        detail::stream_seed(cfg.seed, rep, detail::Stream::Chain));
                } else {
                    throw std::invalid_argument("run_simulation: unknown method " + method);
                }
                tallies[method].seconds +=
                    std::chrono::duration<double>(clock::now() - t0).count();
                tallies[method].add(report, target);
            }
        } catch (const EmptyModel&) {
            ++skipped;
        } catch (const std::exception& ex) {
            std::cerr << "repetition " << rep << " excluded: " << ex.what() << "\n";
            ++skipped;
        }
    }

    ResultTable table;
    std::ostringstream label;
    label << "n=" << cfg.n << " p=" << cfg.p << " " << cfg.covariance << " c0=" << cfg.c0
          << " rho=" << cfg.rho << " lambda=" << cfg.lambda_rule;
    for (const auto& m : cfg.methods)
        table.rows.push_back(tallies[m].summarize(m, label.str(), skipped, cfg.bootstrap,
                                                  cfg.seed ^ 0xb0075ULL));
    return table;
}

namespace detail {

// Plain-average hit-and-run pivot: sample b from the theta-law directly and
// average Phi(g2 - b' tau).
inline double hnr_pvalue(const ConditionalLaw& law, int n_samples, std::uint64_t seed) {
    HitAndRunConfig hcfg;
    hcfg.seed = seed;
    const Matrix chain = hit_and_run_sample(law.mu_b, law.Sigma_b, n_samples, hcfg);
    const double sd = std::sqrt(law.sigma2_theta);
    const double g2 = law.theta_hat / sd -
                      sd * (law.theta / law.nu + law.c_tilde.dot(law.k));
    double acc = 0.0;
    for (int i = 0; i < chain.rows(); ++i) acc += norm_cdf(g2 - chain.row(i).dot(law.tau));
    return acc / chain.rows();
}

inline double sample_sd(const std::vector<double>& v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / (v.size() - 1));
}

} // namespace detail

/// Sampler precision comparison on one fixed carving instance: for each
/// selected coordinate, the spread of the pivot estimate over independent
/// sampler randomizations, SOV at N points vs hit-and-run at 5N + burn-in.
inline ResultTable run_compare(const ExperimentConfig& cfg) {
    cfg.validate();
    SimulatedInstance inst = simulate_data(cfg, 0);
    inst.data.sigma2 = estimate_sigma2(inst.data);
    const double lambda = detail::effective_lambda(cfg, inst.data);
    const SelectionRecord rec =
        carve_select(inst.data, cfg.rho, lambda,
                     detail::stream_seed(cfg.seed, 0, detail::Stream::Split));
    const int d = rec.d();
    const int R = cfg.compare_replicates;

    ResultTable table;
    using clock = std::chrono::steady_clock;
    double sov_seconds = 0.0, hnr_seconds = 0.0;
    for (int j = 0; j < d; ++j) {
        Vector eta = Vector::Zero(d);
        eta(j) = 1.0;
        const ConditionalLaw law = conditional_law(rec, eta, 0.0);
        std::vector<double> sov_vals, hnr_vals;
        for (int r = 0; r < R; ++r) {
            const std::uint64_t s =
                detail::stream_seed(cfg.seed, 1000 + r, detail::Stream::Sampler) ^
                static_cast<std::uint64_t>(j);
            {
                const auto t0 = clock::now();
                const ReplicateSet reps = replicate_set(d, cfg.rqmc_n, 1, s);
                sov_vals.push_back(pvalue(rec, eta, 0.0, reps).value);
                sov_seconds += std::chrono::duration<double>(clock::now() - t0).count();
            }
            {
                const auto t0 = clock::now();
                hnr_vals.push_back(detail::hnr_pvalue(law, 5 * cfg.rqmc_n, s));
                hnr_seconds += std::chrono::duration<double>(clock::now() - t0).count();
            }
        }
        ResultRow sov_row, hnr_row;
        sov_row.method = "cdf-sov";
        hnr_row.method = "hit-and-run";
        sov_row.label = hnr_row.label = "coord=" + std::to_string(rec.active[j]);
        sov_row.mean_p_stderr = detail::sample_sd(sov_vals);
        hnr_row.mean_p_stderr = detail::sample_sd(hnr_vals);
        sov_row.reps_used = hnr_row.reps_used = R;
        table.rows.push_back(sov_row);
        table.rows.push_back(hnr_row);
    }
    for (auto& row : table.rows)
        row.seconds = (row.method == "cdf-sov" ? sov_seconds : hnr_seconds);
    return table;
}

/// Everything needed to reproduce a run byte-for-byte.
inline nlohmann::json manifest(const ExperimentConfig& cfg) {
    return {{"version", kVersion},
            {"scenario", cfg.scenario},
            {"n", cfg.n},
            {"p", cfg.p},
            {"covariance", cfg.covariance},
            {"cov_param", cfg.cov_param},
            {"c0", cfg.c0},
            {"sparsity", cfg.sparsity},
            {"rho", cfg.rho},
            {"lambda", cfg.lambda_rule},
            {"alpha", cfg.alpha},
            {"repetitions", cfg.repetitions},
            {"rqmc_n", cfg.rqmc_n},
            {"replicates", cfg.replicates},
            {"compare_replicates", cfg.compare_replicates},
            {"bootstrap", cfg.bootstrap},
            {"seed", cfg.seed},
            {"methods", cfg.methods}};
}

} // namespace selinf
