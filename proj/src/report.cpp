#include "sgmv/report.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include "sgmv/csv_io.hpp"
#include "sgmv/errors.hpp"
#include "sgmv/metrics.hpp"

namespace sgmv {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

std::vector<VectorXd> weight_vectors(const ModelPath& p) {
    std::vector<VectorXd> out;
    out.reserve(p.weights.size());
    for (const auto& w : p.weights) out.push_back(w.w);
    return out;
}

int count_short(const VectorXd& w) { return static_cast<int>((w.array() < 0.0).count()); }

nlohmann::json test_json(const VarianceTestResult& t) {
    return {{"statistic", t.statistic},
            {"p_value", t.p_value},
            {"bandwidth", t.bandwidth},
            {"degenerate", t.degenerate}};
}

}  // namespace

std::vector<double> moving_average(std::span<const double> x, int window) {
    if (window < 1) throw ValidationError("moving average window must be >= 1");
    std::vector<double> out(x.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sum += x[i];
        if (i >= static_cast<std::size_t>(window)) sum -= x[i - static_cast<std::size_t>(window)];
        const std::size_t len = std::min(i + 1, static_cast<std::size_t>(window));
        out[i] = sum / static_cast<double>(len);
    }
    return out;
}

std::vector<double> short_share(const std::vector<VectorXd>& model, const std::vector<VectorXd>& standard) {
    if (model.size() != standard.size()) throw ValidationError("weight histories differ in length");
    std::vector<double> out(model.size());
    for (std::size_t t = 0; t < model.size(); ++t) {
        const int a = count_short(model[t]);
        const int b = count_short(standard[t]);
        out[t] = a + b == 0 ? 0.5 : static_cast<double>(a) / static_cast<double>(a + b);
    }
    return out;
}

nlohmann::json build_report(const BacktestResult& result) {
    const std::string est(estimator_name(result.config.estimator.estimator));
    nlohmann::json metrics = nlohmann::json::object();
    for (const auto& p : result.paths) {
        const PerformanceReport r = performance_report(p.oos_returns, weight_vectors(p), result.next_returns);
        metrics[std::string(model_name(p.model))] = {
            {"stddev_pa", r.stddev_pa},
            {"daily_variance", r.daily_variance},
            {"turnover_daily", r.turnover_daily},
            {"avg_assets", r.avg_assets},
            {"avg_short_sales", r.avg_short_sales},
            {"pct_of_full_assets", r.pct_of_full_assets},
            {"pct_of_full_short", r.pct_of_full_short},
            {"avg_delta", p.delta_path.empty() ? 0.0
                                               : std::accumulate(p.delta_path.begin(), p.delta_path.end(), 0.0) /
                                                     static_cast<double>(p.delta_path.size())}};
    }

    nlohmann::json tests = nlohmann::json::object();
    const ModelPath* standard = result.path(ModelKind::Standard);
    if (standard && standard->oos_returns.size() >= 30) {
        for (ModelKind m : {ModelKind::Lasso, ModelKind::LassoTurnover}) {
            const ModelPath* p = result.path(m);
            if (!p) continue;
            tests[std::string(model_name(m)) + "_vs_standard"] =
                test_json(hac_variance_test(p->oos_returns, standard->oos_returns));
        }
    }

    nlohmann::json report;
    report["n_assets"] = result.asset_ids.size();
    report["oos_days"] = result.rebalance_dates.size();
    report["first_return_date"] = result.return_dates.empty() ? "" : result.return_dates.front();
    report["last_return_date"] = result.return_dates.empty() ? "" : result.return_dates.back();
    report["trading_days_per_year"] = kTradingDaysPerYear;
    report["variance_test"] = {{"series", "squared deviation difference"},
                               {"kernel", "parzen"},
                               {"bandwidth_rule", "floor(4 (T/100)^(2/9))"}};
    report["metrics"] = {{est, metrics}};
    report["tests"] = {{est, tests}};
    return report;
}

void write_report(const std::filesystem::path& dir, const BacktestResult& result) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "report.json", std::ios::binary | std::ios::trunc);
        if (!out) throw ValidationError("cannot write report to '" + dir.string() + "'");
        out << build_report(result).dump(2) << '\n';
    }
    const ModelPath* standard = result.path(ModelKind::Standard);
    for (const auto& p : result.paths) {
        const std::string name(model_name(p.model));
        const auto days = static_cast<Index>(p.delta_path.size());
        const std::vector<double> sma = moving_average(p.delta_path, kDeltaSmaWindow);
        LabeledTable delta{"date", result.rebalance_dates, {"delta", "sma30"}, MatrixXd(days, 2)};
        for (Index t = 0; t < days; ++t) {
            delta.values(t, 0) = p.delta_path[static_cast<std::size_t>(t)];
            delta.values(t, 1) = sma[static_cast<std::size_t>(t)];
        }
        write_table_csv(dir / ("delta_" + name + ".csv"), delta);

        if (standard && p.model != ModelKind::Standard) {
            const std::vector<double> share = short_share(weight_vectors(p), weight_vectors(*standard));
            LabeledTable ss{"date", result.rebalance_dates, {"short_share"}, MatrixXd(days, 1)};
            for (Index t = 0; t < days; ++t) ss.values(t, 0) = share[static_cast<std::size_t>(t)];
            write_table_csv(dir / ("short_share_" + name + ".csv"), ss);
        }
    }
}

BacktestResult load_backtest_results(const std::filesystem::path& dir, const ReturnPanel& panel) {
    BacktestResult result;
    result.config = read_config(dir / "config.json");
    result.asset_ids = panel.asset_ids();

    std::unordered_map<std::string, Index> row_of;
    for (std::size_t i = 0; i < panel.dates().size(); ++i) row_of.emplace(panel.dates()[i], static_cast<Index>(i));

    bool first = true;
    for (ModelKind m : result.config.models) {
        const std::string name(model_name(m));
        const LabeledTable oos = read_table_csv(dir / ("oos_returns_" + name + ".csv"));
        const LabeledTable weights = read_table_csv(dir / ("weights_" + name + ".csv"));
        const LabeledTable ld = read_table_csv(dir / ("lambda_delta_" + name + ".csv"));
        if (weights.columns != panel.asset_ids()) {
            throw ValidationError("weights_" + name + ".csv assets do not match the panel");
        }
        if (oos.keys.size() != weights.keys.size() || ld.keys != weights.keys || oos.values.cols() != 1 ||
            ld.values.cols() != 2) {
            throw ValidationError("result files for '" + name + "' are misaligned");
        }
        if (first) {
            result.rebalance_dates = weights.keys;
            result.return_dates = oos.keys;
            for (const auto& d : result.return_dates) {
                auto it = row_of.find(d);
                if (it == row_of.end()) throw ValidationError("return date " + d + " is not in the panel");
                result.next_returns.push_back(panel.returns().row(it->second).transpose());
            }
            first = false;
        } else if (weights.keys != result.rebalance_dates || oos.keys != result.return_dates) {
            throw ValidationError("result files for '" + name + "' cover different dates");
        }

        ModelPath p;
        p.model = m;
        for (Index t = 0; t < weights.values.rows(); ++t) {
            PortfolioWeights w;
            w.w = weights.values.row(t).transpose();
            w.model = m;
            w.lambda = ld.values(t, 0);
            w.delta = ld.values(t, 1);
            w.date = weights.keys[static_cast<std::size_t>(t)];
            p.oos_returns.push_back(oos.values(t, 0));
            p.lambda_path.push_back(w.lambda);
            p.delta_path.push_back(w.delta);
            p.weights.push_back(std::move(w));
        }
        result.paths.push_back(std::move(p));
    }
    const auto init_path = dir / "initial_weights_lasso_turnover.csv";
    if (std::filesystem::exists(init_path)) {
        result.turnover_initial_weights = read_table_csv(init_path).values.row(0).transpose();
    }
    return result;
}

}  // namespace sgmv
