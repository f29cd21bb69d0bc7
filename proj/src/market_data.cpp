#include "sgmv/market_data.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <unordered_set>

#include "sgmv/errors.hpp"

namespace sgmv {

namespace {

void check_labels(const std::vector<std::string>& dates,
                  const std::vector<std::string>& asset_ids, Eigen::Index rows,
                  Eigen::Index cols) {
    if (static_cast<Eigen::Index>(dates.size()) != rows) {
        throw ValidationError("panel has " + std::to_string(rows) + " rows but " +
                              std::to_string(dates.size()) + " dates");
    }
    if (static_cast<Eigen::Index>(asset_ids.size()) != cols) {
        throw ValidationError("panel has " + std::to_string(cols) + " columns but " +
                              std::to_string(asset_ids.size()) + " asset ids");
    }
    for (std::size_t i = 1; i < dates.size(); ++i) {
        if (!(dates[i - 1] < dates[i])) {
            throw ValidationError("dates must be strictly increasing: '" + dates[i - 1] +
                                  "' then '" + dates[i] + "'");
        }
    }
    std::unordered_set<std::string> seen;
    for (const auto& id : asset_ids) {
        if (!seen.insert(id).second) {
            throw ValidationError("duplicate asset id '" + id + "'");
        }
    }
}

}  // namespace

PricePanel::PricePanel(std::vector<std::string> dates, std::vector<std::string> asset_ids,
                       Eigen::MatrixXd prices)
    : dates_(std::move(dates)), asset_ids_(std::move(asset_ids)), prices_(std::move(prices)) {
    check_labels(dates_, asset_ids_, prices_.rows(), prices_.cols());
    for (Eigen::Index t = 0; t < prices_.rows(); ++t) {
        for (Eigen::Index j = 0; j < prices_.cols(); ++j) {
            const double p = prices_(t, j);
            if (!std::isfinite(p) || p <= 0.0) {
                throw ValidationError("non-positive or non-finite price at date '" + dates_[t] +
                                      "', asset '" + asset_ids_[j] + "'");
            }
        }
    }
}

ReturnPanel::ReturnPanel(std::vector<std::string> dates, std::vector<std::string> asset_ids,
                         Eigen::MatrixXd returns)
    : dates_(std::move(dates)), asset_ids_(std::move(asset_ids)), returns_(std::move(returns)) {
    check_labels(dates_, asset_ids_, returns_.rows(), returns_.cols());
    for (Eigen::Index t = 0; t < returns_.rows(); ++t) {
        for (Eigen::Index j = 0; j < returns_.cols(); ++j) {
            const double r = returns_(t, j);
            if (!std::isfinite(r) || r <= -1.0) {
                throw ValidationError("return must be finite and > -1 at date '" + dates_[t] +
                                      "', asset '" + asset_ids_[j] + "'");
            }
        }
    }
}

bool ReturnPanel::operator==(const ReturnPanel& other) const {
    return dates_ == other.dates_ && asset_ids_ == other.asset_ids_ &&
           returns_.rows() == other.returns_.rows() &&
           returns_.cols() == other.returns_.cols() && returns_ == other.returns_;
}

ReturnPanel prices_to_returns(const PricePanel& panel) {
    const Eigen::Index T = panel.rows() - 1;
    if (T < 1) {
        throw ValidationError("need at least two price rows to form a return");
    }
    const Eigen::MatrixXd& p = panel.prices();
    Eigen::MatrixXd r = (p.bottomRows(T).array() - p.topRows(T).array()) / p.topRows(T).array();
    std::vector<std::string> dates(panel.dates().begin() + 1, panel.dates().end());
    return ReturnPanel(std::move(dates), panel.asset_ids(), std::move(r));
}

PricePanel compound_prices(const ReturnPanel& returns, const std::string& first_date,
                           const Eigen::RowVectorXd& first_prices) {
    if (first_prices.size() != returns.assets()) {
        throw ValidationError("first price row has wrong width");
    }
    Eigen::MatrixXd p(returns.rows() + 1, returns.assets());
    p.row(0) = first_prices;
    for (Eigen::Index t = 0; t < returns.rows(); ++t) {
        p.row(t + 1) = p.row(t).array() * (1.0 + returns.returns().row(t).array());
    }
    std::vector<std::string> dates;
    dates.reserve(returns.dates().size() + 1);
    dates.push_back(first_date);
    dates.insert(dates.end(), returns.dates().begin(), returns.dates().end());
    return PricePanel(std::move(dates), returns.asset_ids(), std::move(p));
}

ReturnPanel rolling_window(const ReturnPanel& panel, const WindowSpec& spec) {
    if (spec.length <= 0 || spec.start < 0 || spec.start + spec.length > panel.rows()) {
        throw ValidationError("window [" + std::to_string(spec.start) + ", " +
                              std::to_string(spec.start + spec.length) +
                              ") out of bounds for panel with " + std::to_string(panel.rows()) +
                              " rows");
    }
    if (spec.cv_holdout <= 0 || spec.cv_holdout >= spec.length) {
        throw ValidationError("cv_holdout must lie in [1, window length)");
    }
    const auto first = panel.dates().begin() + spec.start;
    std::vector<std::string> dates(first, first + spec.length);
    return ReturnPanel(std::move(dates), panel.asset_ids(),
                       panel.returns().middleRows(spec.start, spec.length));
}

std::vector<std::string> business_day_labels(std::size_t count) {
    using namespace std::chrono;
    std::vector<std::string> out;
    out.reserve(count);
    sys_days day = sys_days{year{2000} / January / 3};
    while (out.size() < count) {
        const weekday wd{day};
        if (wd != Saturday && wd != Sunday) {
            const year_month_day ymd{day};
            char buf[16];
            std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                          static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
            out.emplace_back(buf);
        }
        day += days{1};
    }
    return out;
}

SyntheticPanel synth_factor_returns(const SynthParams& params) {
    const int n = params.n;
    const int T = params.T;
    const int K = params.K;
    if (n < 2 || T < 2 || K < 1 || K >= n) {
        throw ValidationError("synthetic panel needs n >= 2, T >= 2, 1 <= K < n (got n=" +
                              std::to_string(n) + ", T=" + std::to_string(T) +
                              ", K=" + std::to_string(K) + ")");
    }
    if (!(params.factor_vol > 0.0) || !(params.idio_vol > 0.0) || params.idio_vol_spread < 0.0 ||
        params.idio_vol_spread >= 1.0) {
        throw ValidationError("synthetic volatilities must be positive, spread in [0, 1)");
    }

    std::mt19937_64 rng(params.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(1.0 - params.idio_vol_spread,
                                                1.0 + params.idio_vol_spread);

    Eigen::MatrixXd B(n, K);
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < K; ++k) B(i, k) = normal(rng);
    }
    Eigen::VectorXd idio(n);
    for (int i = 0; i < n; ++i) idio(i) = params.idio_vol * unif(rng);

    Eigen::MatrixXd R(T, n);
    Eigen::VectorXd f(K);
    for (int t = 0; t < T; ++t) {
        for (int k = 0; k < K; ++k) f(k) = params.factor_vol * normal(rng);
        Eigen::VectorXd r = B * f;
        for (int i = 0; i < n; ++i) r(i) += idio(i) * normal(rng);
        R.row(t) = r.transpose();
    }

    Eigen::MatrixXd sigma = params.factor_vol * params.factor_vol * (B * B.transpose());
    sigma.diagonal() += idio.array().square().matrix();

    std::vector<std::string> ids;
    ids.reserve(n);
    for (int i = 0; i < n; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "A%03d", i + 1);
        ids.emplace_back(buf);
    }
    return SyntheticPanel{ReturnPanel(business_day_labels(T), std::move(ids), std::move(R)),
                          std::move(B), std::move(idio), std::move(sigma)};
}

}  // namespace sgmv
