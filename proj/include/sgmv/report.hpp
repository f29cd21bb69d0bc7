#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "sgmv/backtest.hpp"
#include "sgmv/market_data.hpp"

namespace sgmv {

inline constexpr int kDeltaSmaWindow = 30;

/// Trailing simple moving average. The first window - 1 entries average the
/// values seen so far.
std::vector<double> moving_average(std::span<const double> x, int window);

/// Per day SS_model / (SS_model + SS_standard), SS = count of negative
/// weights; 0.5 when neither book is short.
std::vector<double> short_share(const std::vector<Eigen::VectorXd>& model,
                                const std::vector<Eigen::VectorXd>& standard);

/// Metrics per estimator and model plus the HAC variance tests of each
/// penalized model against the standard one.
nlohmann::json build_report(const BacktestResult& result);

/// report.json, delta_<model>.csv (date, delta, sma30) and, when the standard
/// model is present, short_share_<model>.csv for the penalized models.
void write_report(const std::filesystem::path& dir, const BacktestResult& result);

/// Reads the files written by write_backtest_results. The panel supplies the
/// asset returns needed to drift weights between rebalances.
BacktestResult load_backtest_results(const std::filesystem::path& dir, const ReturnPanel& panel);

}  // namespace sgmv
