#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "sgmv/covariance.hpp"
#include "sgmv/market_data.hpp"
#include "sgmv/portfolio.hpp"

namespace sgmv {

/// {0, step, 2 step, ..., (count - 1) step}.
std::vector<double> default_lambda_grid(int count = 20, double step = 1e-5);

struct BacktestConfig {
    int tau = 504;
    int cv_holdout = 20;
    std::vector<double> lambda_grid = default_lambda_grid();
    double k = 0.0005;
    EstimatorConfig estimator;
    std::vector<ModelKind> models{ModelKind::Standard, ModelKind::Lasso, ModelKind::LassoTurnover};
    /// Fit each lambda once on the first CV subwindow instead of refitting on
    /// every one-day shift.
    bool cv_fast = false;
    /// CV standard deviations within this relative distance of the minimum
    /// count as tied (the larger lambda wins).
    double cv_tie_tolerance = 1e-6;
    SolverSettings solver;
    int threads = 0;  // 0: runtime default

    void validate() const;
    bool has(ModelKind m) const;
};

nlohmann::json config_to_json(const BacktestConfig& config);
/// Keys mirror the field names; unknown keys are rejected. `k` accepts a
/// number or the string "inf".
BacktestConfig config_from_json(const nlohmann::json& j);
BacktestConfig read_config(const std::filesystem::path& path);

/// w+ = w .* (1 + r) / (1 + w'r). Throws NumericalError if the portfolio
/// return is <= -1.
Eigen::VectorXd drift_weights(const Eigen::VectorXd& w, const Eigen::VectorXd& r_next);

struct CvResult {
    double lambda = 0.0;
    std::vector<double> cv_stddev;  // one per grid point
    bool degenerate = false;
};

/// One-fold rolling validation of lambda inside a tau-row window: for every
/// grid point, fit on rows [s, s + tau - h) and record the portfolio return
/// on row s + tau - h, for s = 0..h-1. The grid point whose h returns have the
/// smallest sample standard deviation wins; ties go to the larger lambda.
/// For the turnover-constrained model, shift 0 is anchored at `w_prev` and
/// each later shift at the previous shift's fit drifted over its
/// validation day.
CvResult cross_validate_lambda(const ReturnPanel& window, const BacktestConfig& config,
                               ModelKind model,
                               const std::optional<Eigen::VectorXd>& w_prev = std::nullopt);

struct ModelPath {
    ModelKind model = ModelKind::Standard;
    std::vector<double> oos_returns;
    std::vector<PortfolioWeights> weights;
    std::vector<double> lambda_path;
    std::vector<double> delta_path;
};

struct BacktestResult {
    BacktestConfig config;
    std::vector<std::string> asset_ids;
    std::vector<std::string> rebalance_dates;  // last in-sample day
    std::vector<std::string> return_dates;     // day the out-of-sample return is realized
    std::vector<Eigen::VectorXd> next_returns; // asset returns on return_dates
    std::vector<ModelPath> paths;
    /// Book the turnover-constrained model starts from on its first day.
    std::optional<Eigen::VectorXd> turnover_initial_weights;
    std::vector<double> wall_seconds;          // per day, not serialized

    const ModelPath* path(ModelKind m) const;
};

/// Daily rolling study over rows [d, d + tau) for d = 0..T - tau - 1, with
/// out-of-sample returns on row d + tau. Deterministic in (panel, config).
BacktestResult run_backtest(const ReturnPanel& panel, const BacktestConfig& config);

/// Writes config.json, oos_returns_<model>.csv, weights_<model>.csv,
/// lambda_delta_<model>.csv and, for the turnover model, its starting book.
void write_backtest_results(const std::filesystem::path& dir, const BacktestResult& result);

}  // namespace sgmv
