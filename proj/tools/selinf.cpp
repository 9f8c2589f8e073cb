// Command-line front end: simulation studies, inference on CSV data,
// sampler comparison, and selective-MLE fitting.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "selinf/io.hpp"
#include "selinf/sim.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

struct CliOptions {
    std::string config_path;
    std::string design_path;
    std::string response_path;
    std::string out_path;
    std::string format = "csv";
    int min_feature_count = 0;
    bool header = false;
    selinf::ExperimentConfig cfg;
};

// flat key/value config file ("key = value" or "key value"), '#' comments
void apply_config_file(const std::string& path, selinf::ExperimentConfig& cfg) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        for (char& c : line)
            if (c == '=' || c == '\t') c = ' ';
        std::istringstream ss(line);
        std::string key;
        if (!(ss >> key)) continue;
        std::string value;
        if (!(ss >> value))
            throw std::invalid_argument("config: " + path + ":" + std::to_string(lineno) +
                                        ": missing value for '" + key + "'");
        try {
            if (key == "scenario") cfg.scenario = value;
            else if (key == "n") cfg.n = std::stoi(value);
            else if (key == "p") cfg.p = std::stoi(value);
            else if (key == "covariance") cfg.covariance = value;
            else if (key == "cov_param") cfg.cov_param = std::stod(value);
            else if (key == "c0") cfg.c0 = std::stod(value);
            else if (key == "sparsity") cfg.sparsity = std::stoi(value);
            else if (key == "rho") cfg.rho = std::stod(value);
            else if (key == "lambda") cfg.lambda_rule = value;
            else if (key == "alpha") cfg.alpha = std::stod(value);
            else if (key == "repetitions") cfg.repetitions = std::stoi(value);
            else if (key == "rqmc_n") cfg.rqmc_n = std::stoi(value);
            else if (key == "replicates") cfg.replicates = std::stoi(value);
            else if (key == "compare_replicates") cfg.compare_replicates = std::stoi(value);
            else if (key == "bootstrap") cfg.bootstrap = std::stoi(value);
            else if (key == "seed") cfg.seed = std::stoull(value);
            else if (key == "methods") {
                cfg.methods.clear();
                std::string m = value;
                do {
                    cfg.methods.push_back(m);
                } while (ss >> m);
            } else
                throw std::invalid_argument("config: unknown key '" + key + "'");
        } catch (const std::invalid_argument&) {
            throw;
        } catch (const std::exception&) {
            throw std::invalid_argument("config: bad value for '" + key + "': " + value);
        }
    }
}

selinf::Dataset load_dataset(const CliOptions& opt) {
    if (opt.design_path.empty() || opt.response_path.empty())
        throw std::invalid_argument("infer/mle need --design and --response");
    selinf::CsvOptions copt;
    copt.header = opt.header;
    selinf::CsvTable design = selinf::ingest_csv(opt.design_path, copt);
    selinf::CsvTable response = selinf::ingest_csv(opt.response_path, copt);
    if (response.values.cols() != 1)
        throw selinf::ShapeMismatch(opt.response_path + ": response must be one column");
    if (response.values.rows() != design.values.rows())
        throw selinf::ShapeMismatch("design and response row counts differ");

    selinf::Dataset data;
    data.X = design.values;
    data.Y = response.values.col(0);
    if (opt.min_feature_count > 0) {
        std::vector<int> keep;
        for (int j = 0; j < data.X.cols(); ++j) {
            int nz = 0;
            for (int i = 0; i < data.X.rows(); ++i)
                if (data.X(i, j) != 0.0) ++nz;
            if (nz >= opt.min_feature_count) keep.push_back(j);
        }
        if (keep.empty()) throw selinf::ShapeMismatch("min-feature-count removed all columns");
        selinf::Matrix pruned(data.X.rows(), static_cast<int>(keep.size()));
        for (std::size_t j = 0; j < keep.size(); ++j) pruned.col(static_cast<int>(j)) = data.X.col(keep[j]);
        data.X = pruned;
    }
    data.validate();
    return data;
}

void write_outputs(const CliOptions& opt, const std::string& csv, const nlohmann::json& json) {
    const std::string payload = opt.format == "json" ? json.dump(2) + "\n" : csv;
    if (opt.out_path.empty()) {
        std::cout << payload;
    } else {
        selinf::write_text(opt.out_path, payload);
    }
    const std::string manifest_path =
        (opt.out_path.empty() ? std::string("selinf") : opt.out_path) + ".manifest.json";
    selinf::write_text(manifest_path, selinf::manifest(opt.cfg).dump(2) + "\n");
}

selinf::SelectionRecord select_from_data(const CliOptions& opt, const selinf::Dataset& input) {
    selinf::Dataset data = input;
    data.sigma2 = selinf::estimate_sigma2(data);
    const int n1 = static_cast<int>(std::floor(opt.cfg.rho * data.n()));
    const double scale = n1 / opt.cfg.rho;
    const double lambda = opt.cfg.lambda_rule == "cv"
                              ? scale * selinf::lambda_cv(data)
                              : scale * selinf::lambda_theory(data.p(), n1);
    return selinf::carve_select(data, opt.cfg.rho, lambda,
                                selinf::detail::stream_seed(opt.cfg.seed, 0,
                                                            selinf::detail::Stream::Split));
}

int dispatch(const std::string& scenario, CliOptions& opt) {
    opt.cfg.scenario = scenario;
    if (scenario == "simulate") {
        opt.cfg.validate();
        const selinf::ResultTable table = selinf::run_simulation(opt.cfg);
        write_outputs(opt, table.to_csv(), table.to_json());
        return 0;
    }
    if (scenario == "compare-samplers") {
        opt.cfg.validate();
        const selinf::ResultTable table = selinf::run_compare(opt.cfg);
        write_outputs(opt, table.to_csv(), table.to_json());
        return 0;
    }
    const selinf::Dataset data = load_dataset(opt);
    const selinf::SelectionRecord rec = select_from_data(opt, data);
    if (scenario == "infer") {
        const selinf::ReplicateSet reps = selinf::replicate_set(
            rec.d(), opt.cfg.rqmc_n, opt.cfg.replicates,
            selinf::detail::stream_seed(opt.cfg.seed, 0, selinf::detail::Stream::Sampler));
        const selinf::InferenceReport report =
            selinf::confidence_intervals(rec, opt.cfg.alpha, reps);
        write_outputs(opt, selinf::report_to_csv(report), selinf::report_to_json(report));
        return 0;
    }
    // scenario == "mle"
    selinf::MleOptions mopt;
    mopt.points = opt.cfg.rqmc_n;
    mopt.alpha = opt.cfg.alpha;
    mopt.seed = selinf::detail::stream_seed(opt.cfg.seed, 0, selinf::detail::Stream::Sampler);
    const selinf::MleResult mle = selinf::selective_mle(rec, mopt);
    selinf::InferenceReport report;
    report.method = "mle-sov";
    for (int j = 0; j < rec.d(); ++j) {
        selinf::ReportEntry e;
        e.index = rec.active[j];
        e.estimate = mle.beta(j);
        e.ci_lower = mle.ci_lower[j];
        e.ci_upper = mle.ci_upper[j];
        report.entries.push_back(e);
    }
    write_outputs(opt, selinf::report_to_csv(report), selinf::report_to_json(report));
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"selective inference after randomized model selection"};
    app.require_subcommand(1);

    CliOptions opt;
    std::string scenario;
    for (const char* name : {"simulate", "infer", "compare-samplers", "mle"}) {
        CLI::App* sub = app.add_subcommand(name);
        sub->callback([&scenario, name]() { scenario = name; });
        sub->add_option("--config", opt.config_path, "flat key-value config file");
        sub->add_option("--seed", opt.cfg.seed, "master seed");
        sub->add_option("--design", opt.design_path, "design matrix CSV");
        sub->add_option("--response", opt.response_path, "response CSV (one column)");
        sub->add_option("--alpha", opt.cfg.alpha, "level for intervals");
        sub->add_option("--rqmc-n", opt.cfg.rqmc_n, "RQMC points per replicate");
        sub->add_option("--replicates", opt.cfg.replicates, "RQMC replicates");
        sub->add_option("--lambda", opt.cfg.lambda_rule, "penalty rule: theory or cv");
        sub->add_option("--rho", opt.cfg.rho, "carving fraction");
        sub->add_option("--out", opt.out_path, "output path (default stdout)");
        sub->add_option("--format", opt.format, "csv or json");
        sub->add_option("--min-feature-count", opt.min_feature_count,
                        "drop design columns with fewer nonzero entries");
        sub->add_flag("--header", opt.header, "CSVs carry a header row");
    }

    // two passes so the file is read first and flags override it
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }
    try {
        if (!opt.config_path.empty()) {
            selinf::ExperimentConfig base;
            apply_config_file(opt.config_path, base);
            // re-parse flags on top of the file-provided defaults
            opt.cfg = base;
            CLI::App* sub = app.get_subcommand(scenario);
            for (auto* o : sub->get_options()) o->clear();
            try {
                app.clear();
                app.parse(argc, argv);
            } catch (const CLI::ParseError&) {
                return kExitConfig;
            }
        }
        if (opt.format != "csv" && opt.format != "json")
            throw std::invalid_argument("--format must be csv or json");
        return dispatch(scenario, opt);
    } catch (const selinf::ParseError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const selinf::ShapeMismatch& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    }
}
