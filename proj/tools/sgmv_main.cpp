#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "sgmv/backtest.hpp"
#include "sgmv/covariance.hpp"
#include "sgmv/csv_io.hpp"
#include "sgmv/errors.hpp"
#include "sgmv/manifest.hpp"
#include "sgmv/market_data.hpp"
#include "sgmv/report.hpp"

namespace fs = std::filesystem;
using namespace sgmv;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitNumerical = 2;

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double parse_number(const std::string& s, const std::string& what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ValidationError("invalid " + what + " '" + s + "'");
    }
}

// "COUNT:STEP" expands to {0, STEP, ..., (COUNT-1) STEP}; otherwise a comma list.
std::vector<double> parse_lambda_grid(const std::string& s) {
    const auto colon = s.find(':');
    if (colon != std::string::npos) {
        const double count = parse_number(s.substr(0, colon), "lambda grid count");
        const double step = parse_number(s.substr(colon + 1), "lambda grid step");
        if (count < 1 || count != static_cast<int>(count)) throw ValidationError("lambda grid count must be a positive integer");
        return default_lambda_grid(static_cast<int>(count), step);
    }
    std::vector<double> grid;
    for (const auto& item : split(s, ',')) grid.push_back(parse_number(item, "lambda"));
    return grid;
}

double parse_k(const std::string& s) {
    if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
    return parse_number(s, "turnover cap k");
}

struct BacktestArgs {
    std::string panel;
    std::string config;
    std::string out;
    std::uint64_t seed = 0;
    std::string estimator;
    std::string models;
    std::optional<int> tau;
    std::string k;
    std::string lambda_grid;
    bool cv_fast = false;
    std::optional<int> threads;
};

BacktestConfig effective_config(const BacktestArgs& a) {
    BacktestConfig c = a.config.empty() ? BacktestConfig{} : read_config(a.config);
    if (!a.estimator.empty()) c.estimator.estimator = parse_estimator(a.estimator);
    if (!a.models.empty()) {
        c.models.clear();
        for (const auto& m : split(a.models, ',')) c.models.push_back(parse_model(m));
    }
    if (a.tau) c.tau = *a.tau;
    if (!a.k.empty()) c.k = parse_k(a.k);
    if (!a.lambda_grid.empty()) c.lambda_grid = parse_lambda_grid(a.lambda_grid);
    if (a.cv_fast) c.cv_fast = true;
    if (a.threads) c.threads = *a.threads;
    c.validate();
    return c;
}

int cmd_ingest(const std::string& prices, const std::string& out, const std::string& corr, int tau) {
    const PricePanel p = read_prices_csv(prices);
    const ReturnPanel r = prices_to_returns(p);
    write_returns_csv(out, r);
    if (!corr.empty()) {
        const Eigen::MatrixXd s = sample_cov(r).matrix();
        const Eigen::VectorXd sd = s.diagonal().cwiseSqrt();
        Eigen::MatrixXd c = s;
        for (Eigen::Index i = 0; i < c.rows(); ++i) {
            for (Eigen::Index j = 0; j < c.cols(); ++j) {
                c(i, j) = sd(i) > 0 && sd(j) > 0 ? s(i, j) / (sd(i) * sd(j)) : (i == j ? 1.0 : 0.0);
            }
        }
        write_matrix_csv(corr, r.asset_ids(), c);
    }
    std::cout << "n=" << r.assets() << " T=" << r.rows() << " tau=" << tau
              << " n/tau=" << static_cast<double>(r.assets()) / tau << '\n';
    return 0;
}

int cmd_synth(const SynthParams& params, const std::string& out) {
    const SyntheticPanel s = synth_factor_returns(params);
    write_returns_csv(out, s.panel);
    const fs::path out_path(out);
    const fs::path sigma_path = out_path.parent_path() / (out_path.stem().string() + "_sigma_true.csv");
    write_matrix_csv(sigma_path, s.panel.asset_ids(), s.sigma_true);
    std::cout << "wrote " << out << " (" << s.panel.rows() << " x " << s.panel.assets() << ") and "
              << sigma_path.string() << '\n';
    return 0;
}

int cmd_backtest(const BacktestArgs& a) {
    const BacktestConfig config = effective_config(a);
    RunManifest manifest;
    manifest.started_at = utc_timestamp();
    manifest.seed = a.seed;
    manifest.config_digest = sha256_hex(config_to_json(config).dump());
    manifest.input_digest = sha256_file(a.panel);

    const ReturnPanel panel = read_returns_csv(a.panel);
    spdlog::info("backtest: n={} T={} tau={} estimator={} days={}", panel.assets(), panel.rows(), config.tau,
                 estimator_name(config.estimator.estimator), panel.rows() - config.tau);
    const BacktestResult result = run_backtest(panel, config);
    write_backtest_results(a.out, result);
    write_report(a.out, result);

    manifest.finished_at = utc_timestamp();
    manifest.outputs = directory_digests(a.out);
    write_manifest(a.out, manifest);
    std::cout << build_report(result)["metrics"].dump(2) << '\n';
    return 0;
}

int cmd_report(const std::string& dir, const std::string& panel_path) {
    const ReturnPanel panel = read_returns_csv(panel_path);
    const BacktestResult result = load_backtest_results(dir, panel);
    write_report(dir, result);
    std::cout << build_report(result).dump(2) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    spdlog::set_default_logger(spdlog::stderr_color_st("sgmv"));

    CLI::App app{"Minimum-variance portfolios with l1 and turnover constraints"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error, off");

    auto* ingest = app.add_subcommand("ingest", "Convert a price CSV into a validated return CSV");
    std::string prices, ingest_out, corr;
    int ingest_tau = 504;
    ingest->add_option("prices", prices, "Price CSV (date column, one column per asset)")->required();
    ingest->add_option("--out", ingest_out, "Return CSV to write")->required();
    ingest->add_option("--corr", corr, "Optional sample correlation matrix CSV");
    ingest->add_option("--tau", ingest_tau, "Window length used for the reported n/tau")->check(CLI::PositiveNumber);

    auto* synth = app.add_subcommand("synth", "Generate a synthetic factor-model return panel");
    SynthParams sp;
    std::string synth_out;
    synth->add_option("--n", sp.n, "Assets")->required();
    synth->add_option("--T", sp.T, "Rows")->required();
    synth->add_option("--K", sp.K, "Factors")->required();
    synth->add_option("--seed", sp.seed, "RNG seed");
    synth->add_option("--factor-vol", sp.factor_vol, "Daily factor stddev");
    synth->add_option("--idio-vol", sp.idio_vol, "Mean daily idiosyncratic stddev");
    synth->add_option("--idio-vol-spread", sp.idio_vol_spread, "Relative spread of idiosyncratic vols");
    synth->add_option("--out", synth_out, "Return CSV to write; the true covariance goes next to it")->required();

    auto* backtest = app.add_subcommand("backtest", "Run the rolling-window study and write results");
    BacktestArgs ba;
    backtest->add_option("panel", ba.panel, "Return CSV")->required();
    backtest->add_option("--config", ba.config, "JSON config; flags below override it");
    backtest->add_option("--out", ba.out, "Result directory")->required();
    backtest->add_option("--seed", ba.seed, "Seed recorded in the manifest");
    backtest->add_option("--estimator", ba.estimator, "ml, lw-lin, lw-nl or poet");
    backtest->add_option("--models", ba.models, "Comma list of standard, lasso, lasso_turnover");
    backtest->add_option("--tau", ba.tau, "In-sample window length");
    backtest->add_option("--k", ba.k, "Turnover cap per asset, or inf");
    backtest->add_option("--lambda-grid", ba.lambda_grid, "Comma list of lambdas, or COUNT:STEP");
    backtest->add_flag("--cv-fast", ba.cv_fast, "Fit each lambda once per day in cross-validation");
    backtest->add_option("--threads", ba.threads, "Worker threads for the lambda grid");

    auto* report = app.add_subcommand("report", "Recompute report.json and figure series from a result directory");
    std::string report_dir, report_panel;
    report->add_option("--out", report_dir, "Result directory written by backtest")->required();
    report->add_option("--panel", report_panel, "Return CSV the backtest ran on")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }
    spdlog::set_level(spdlog::level::from_str(log_level));

    try {
        if (ingest->parsed()) return cmd_ingest(prices, ingest_out, corr, ingest_tau);
        if (synth->parsed()) return cmd_synth(sp, synth_out);
        if (backtest->parsed()) return cmd_backtest(ba);
        if (report->parsed()) return cmd_report(report_dir, report_panel);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    }
    return 0;
}
