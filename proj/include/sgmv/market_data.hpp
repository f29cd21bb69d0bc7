#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace sgmv {

/// Daily close prices, one row per date and one column per asset.
/// Construction validates: strictly increasing dates, unique asset ids,
/// finite and strictly positive prices.
class PricePanel {
public:
    PricePanel(std::vector<std::string> dates, std::vector<std::string> asset_ids,
               Eigen::MatrixXd prices);

    const std::vector<std::string>& dates() const { return dates_; }
    const std::vector<std::string>& asset_ids() const { return asset_ids_; }
    const Eigen::MatrixXd& prices() const { return prices_; }
    Eigen::Index rows() const { return prices_.rows(); }
    Eigen::Index assets() const { return prices_.cols(); }

private:
    std::vector<std::string> dates_;
    std::vector<std::string> asset_ids_;
    Eigen::MatrixXd prices_;
};

/// Discrete returns, T rows by n assets. Every return must exceed -1.
class ReturnPanel {
public:
    ReturnPanel(std::vector<std::string> dates, std::vector<std::string> asset_ids,
                Eigen::MatrixXd returns);

    const std::vector<std::string>& dates() const { return dates_; }
    const std::vector<std::string>& asset_ids() const { return asset_ids_; }
    const Eigen::MatrixXd& returns() const { return returns_; }
    Eigen::Index rows() const { return returns_.rows(); }
    Eigen::Index assets() const { return returns_.cols(); }

    bool operator==(const ReturnPanel& other) const;

private:
    std::vector<std::string> dates_;
    std::vector<std::string> asset_ids_;
    Eigen::MatrixXd returns_;
};

/// Positional window: `length` rows starting at `start`. `cv_holdout` is the
/// number of trailing rows of the window used for tuning-parameter validation.
struct WindowSpec {
    Eigen::Index length = 504;
    Eigen::Index cv_holdout = 20;
    Eigen::Index start = 0;
};

/// r_t = (P_t - P_{t-1}) / P_{t-1}; the first price date is dropped.
ReturnPanel prices_to_returns(const PricePanel& panel);

/// Inverse of prices_to_returns given the first price row.
PricePanel compound_prices(const ReturnPanel& returns, const std::string& first_date,
                           const Eigen::RowVectorXd& first_prices);

/// Contiguous slice of `spec.length` rows beginning at `spec.start`.
ReturnPanel rolling_window(const ReturnPanel& panel, const WindowSpec& spec);

struct SynthParams {
    int n = 30;
    int T = 1000;
    int K = 3;
    std::uint64_t seed = 1;
    double factor_vol = 0.01;     // daily stddev of every factor
    double idio_vol = 0.015;      // mean daily stddev of the idiosyncratic noise
    double idio_vol_spread = 0.5; // idio vols drawn uniformly in idio_vol * [1 - s, 1 + s]
};

struct SyntheticPanel {
    ReturnPanel panel;
    Eigen::MatrixXd loadings;    // n x K
    Eigen::VectorXd idio_vols;   // n
    Eigen::MatrixXd sigma_true;  // B * factor_vol^2 * B' + diag(idio_vols^2)
};

/// Static-loadings Gaussian factor model r_t = B f_t + e_t. Loadings are drawn
/// once from N(0, 1); everything is a deterministic function of `params.seed`.
SyntheticPanel synth_factor_returns(const SynthParams& params);

/// Business-day (Mon-Fri) ISO-8601 labels starting at 2000-01-03.
std::vector<std::string> business_day_labels(std::size_t count);

}  // namespace sgmv
