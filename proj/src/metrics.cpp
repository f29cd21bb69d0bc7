#include "sgmv/metrics.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include <spdlog/spdlog.h>

#include "sgmv/backtest.hpp"
#include "sgmv/errors.hpp"

namespace sgmv {

using Eigen::VectorXd;

namespace {

double mean(std::span<const double> x) {
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

}  // namespace

OosVariance oos_variance(std::span<const double> returns) {
    if (returns.size() < 2) throw ValidationError("out-of-sample variance needs at least 2 returns");
    const double mu = mean(returns);
    double ss = 0.0;
    for (double r : returns) ss += (r - mu) * (r - mu);
    OosVariance out;
    out.daily_variance = ss / static_cast<double>(returns.size());
    out.stddev_pa = std::sqrt(kTradingDaysPerYear * out.daily_variance);
    return out;
}

double avg_turnover(const std::vector<VectorXd>& weights, const std::vector<VectorXd>& next_returns) {
    if (weights.size() < 2) throw ValidationError("turnover needs at least two rebalances");
    if (next_returns.size() + 1 < weights.size()) {
        throw ValidationError("turnover needs a return vector for every rebalance but the last");
    }
    double total = 0.0;
    for (std::size_t t = 0; t + 1 < weights.size(); ++t) {
        if (weights[t + 1].size() != weights[t].size()) throw ValidationError("weight histories misaligned");
        total += (weights[t + 1] - drift_weights(weights[t], next_returns[t])).lpNorm<1>();
    }
    return total / static_cast<double>(weights.size() - 1);
}

double avg_assets(const std::vector<VectorXd>& weights) {
    if (weights.empty()) throw ValidationError("empty weight history");
    double total = 0.0;
    for (const auto& w : weights) total += static_cast<double>((w.array() != 0.0).count());
    return total / static_cast<double>(weights.size());
}

double avg_short_sales(const std::vector<VectorXd>& weights) {
    if (weights.empty()) throw ValidationError("empty weight history");
    double total = 0.0;
    for (const auto& w : weights) total += static_cast<double>((w.array() < 0.0).count());
    return total / static_cast<double>(weights.size());
}

PerformanceReport performance_report(std::span<const double> oos_returns,
                                     const std::vector<VectorXd>& weights,
                                     const std::vector<VectorXd>& next_returns) {
    if (weights.empty()) throw ValidationError("empty weight history");
    const auto var = oos_variance(oos_returns);
    PerformanceReport r;
    r.daily_variance = var.daily_variance;
    r.stddev_pa = var.stddev_pa;
    r.turnover_daily = weights.size() >= 2 ? avg_turnover(weights, next_returns) : 0.0;
    r.avg_assets = avg_assets(weights);
    r.avg_short_sales = avg_short_sales(weights);
    const double n = static_cast<double>(weights.front().size());
    r.pct_of_full_assets = r.avg_assets / n * 100.0;
    r.pct_of_full_short = r.avg_short_sales / n * 100.0;
    return r;
}

double parzen_kernel(double x) {
    const double ax = std::abs(x);
    if (ax <= 0.5) return 1.0 - 6.0 * ax * ax + 6.0 * ax * ax * ax;
    if (ax <= 1.0) return 2.0 * (1.0 - ax) * (1.0 - ax) * (1.0 - ax);
    return 0.0;
}

int default_hac_bandwidth(std::size_t length) {
    const double L = std::floor(4.0 * std::pow(static_cast<double>(length) / 100.0, 2.0 / 9.0));
    return std::max(1, static_cast<int>(L));
}

VarianceTestResult hac_variance_test(std::span<const double> a, std::span<const double> b,
                                     std::optional<int> bandwidth) {
    if (a.size() != b.size()) throw ValidationError("variance test series differ in length");
    if (a.size() < 30) throw ValidationError("variance test needs at least 30 observations");
    const std::size_t T = a.size();
    const int L = bandwidth.value_or(default_hac_bandwidth(T));
    if (L < 1) throw ValidationError("HAC bandwidth must be >= 1");

    const double ma = mean(a);
    const double mb = mean(b);
    std::vector<double> v(T);
    for (std::size_t t = 0; t < T; ++t) {
        const double da = a[t] - ma;
        const double db = b[t] - mb;
        v[t] = da * da - db * db;
    }
    const double vbar = mean(v);
    const double n = static_cast<double>(T);

    auto autocov = [&](std::size_t lag) {
        double s = 0.0;
        for (std::size_t t = lag; t < T; ++t) s += (v[t] - vbar) * (v[t - lag] - vbar);
        return s / n;
    };
    double lrv = autocov(0);
    for (int lag = 1; lag <= L && static_cast<std::size_t>(lag) < T; ++lag) {
        lrv += 2.0 * parzen_kernel(static_cast<double>(lag) / L) * autocov(static_cast<std::size_t>(lag));
    }

    VarianceTestResult out;
    out.bandwidth = L;
    if (!(lrv > 0.0)) {
        spdlog::warn("hac_variance_test: non-positive long-run variance, reporting p = 1");
        out.degenerate = true;
        out.statistic = 0.0;
        out.p_value = 1.0;
        return out;
    }
    out.statistic = vbar / std::sqrt(lrv / n);
    out.p_value = std::erfc(std::abs(out.statistic) / std::sqrt(2.0));
    return out;
}

}  // namespace sgmv
