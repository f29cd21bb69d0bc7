#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "sgmv/portfolio.hpp"

namespace sgmv {

inline constexpr double kTradingDaysPerYear = 252.0;

struct OosVariance {
    double daily_variance = 0.0;  // mean squared deviation from the series mean
    double stddev_pa = 0.0;       // sqrt(252 * daily_variance)
};

OosVariance oos_variance(std::span<const double> returns);

/// Mean over consecutive rebalances of sum_j |w_{t+1,j} - drift(w_t, r_{t+1})_j|.
/// `next_returns[i]` is the asset return vector that carries `weights[i]`
/// to the next rebalance; only the first weights.size() - 1 entries are used.
double avg_turnover(const std::vector<Eigen::VectorXd>& weights,
                    const std::vector<Eigen::VectorXd>& next_returns);

/// Average count of non-zero weights per day.
double avg_assets(const std::vector<Eigen::VectorXd>& weights);
/// Average count of strictly negative weights per day.
double avg_short_sales(const std::vector<Eigen::VectorXd>& weights);

struct PerformanceReport {
    double daily_variance = 0.0;
    double stddev_pa = 0.0;
    double turnover_daily = 0.0;
    double avg_assets = 0.0;
    double avg_short_sales = 0.0;
    double pct_of_full_assets = 0.0;
    double pct_of_full_short = 0.0;
};

PerformanceReport performance_report(std::span<const double> oos_returns,
                                     const std::vector<Eigen::VectorXd>& weights,
                                     const std::vector<Eigen::VectorXd>& next_returns);

/// Parzen kernel: 1 - 6x^2 + 6|x|^3 on |x| <= 1/2, 2(1 - |x|)^3 on (1/2, 1], else 0.
double parzen_kernel(double x);

/// floor(4 (T / 100)^(2/9)), at least 1.
int default_hac_bandwidth(std::size_t length);

struct VarianceTestResult {
    double statistic = 0.0;
    double p_value = 1.0;
    int bandwidth = 1;
    bool degenerate = false;  // long-run variance <= 0
};

/// Two-sided test of equal variances on v_t = (a_t - mean a)^2 - (b_t - mean b)^2
/// with a Parzen-kernel HAC long-run variance.
VarianceTestResult hac_variance_test(std::span<const double> a, std::span<const double> b,
                                     std::optional<int> bandwidth = std::nullopt);

}  // namespace sgmv
