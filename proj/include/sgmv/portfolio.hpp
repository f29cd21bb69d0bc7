#pragma once

#include <limits>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "sgmv/covariance.hpp"
#include "sgmv/qp.hpp"

namespace sgmv {

enum class ModelKind { Standard, Lasso, LassoTurnover };

/// `standard`, `lasso`, `lasso_turnover`.
std::string_view model_name(ModelKind m);
ModelKind parse_model(std::string_view name);

/// Weights with |w_j| < this are reported as exactly zero; this defines which
/// assets count as selected (and shorted) downstream.
inline constexpr double kZeroSnap = 1e-8;

struct PortfolioWeights {
    Eigen::VectorXd w;
    double delta = 1.0;  // ||w||_1
    ModelKind model = ModelKind::Standard;
    double lambda = 0.0;
    std::string date;
};

struct ModelSpec {
    ModelKind model = ModelKind::Standard;
    double lambda = 0.0;
    double k = std::numeric_limits<double>::infinity();
    std::optional<Eigen::VectorXd> w_prev;
};

struct SolverSettings {
    double tolerance = kDefaultQpTolerance;
    int max_iter = kDefaultQpMaxIter;
};

/// Fully invested minimum-variance weights via a linear solve. A singular
/// estimate gets a ridge of 1e-10 * trace / n on the diagonal (logged).
PortfolioWeights gmv_standard(const CovEstimate& cov);

/// Minimum variance with an l1 penalty lambda * ||w||_1, solved as the
/// 2n-variable QP over the positive and negative parts of w.
PortfolioWeights gmv_lasso(const CovEstimate& cov, double lambda, const SolverSettings& solver = {});

/// gmv_lasso plus the per-asset turnover box w_prev - k <= w <= w_prev + k.
/// k = infinity drops the box.
PortfolioWeights gmv_lasso_turnover(const CovEstimate& cov, double lambda, double k,
                                    const Eigen::VectorXd& w_prev,
                                    const SolverSettings& solver = {});

/// The split QP that gmv_lasso / gmv_lasso_turnover hand to solve_qp.
/// Variables are (w+, w-); the cost matrix is 2 * [[S, -S], [-S, S]].
QpProblem lasso_split_problem(const Eigen::MatrixXd& sigma, double lambda, double k,
                              const Eigen::VectorXd* w_prev);

/// Dispatch on `spec.model`.
PortfolioWeights fit_model(const CovEstimate& cov, const ModelSpec& spec,
                           const SolverSettings& solver = {});

/// In-sample variance w' S w.
double portfolio_variance(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& w);

}  // namespace sgmv
