#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "sgmv/market_data.hpp"

namespace sgmv {

enum class Estimator { Sample, LwLinear, LwNonlinear, Poet };

/// `ml`, `lw-lin`, `lw-nl`, `poet`.
std::string_view estimator_name(Estimator e);
Estimator parse_estimator(std::string_view name);

struct CovMeta {
    double concentration = 0.0;  // q = n / tau
    std::optional<double> shrinkage;                // LwLinear
    std::vector<double> sample_eigenvalues;         // LwNonlinear, ascending
    std::vector<double> shrunk_eigenvalues;         // LwNonlinear, same order
    std::optional<int> factors;                     // Poet
    std::optional<double> threshold;                // Poet
};

/// Covariance estimate in squared daily return units. The constructor
/// symmetrizes exactly, rejects non-finite entries and matrices whose
/// smallest eigenvalue is below -1e-10 times the largest, and clips small
/// negative eigenvalues to zero.
class CovEstimate {
public:
    CovEstimate(Eigen::MatrixXd matrix, Estimator estimator, CovMeta meta = {});

    const Eigen::MatrixXd& matrix() const { return matrix_; }
    Estimator estimator() const { return estimator_; }
    const CovMeta& meta() const { return meta_; }
    Eigen::Index size() const { return matrix_.rows(); }

private:
    Eigen::MatrixXd matrix_;
    Estimator estimator_;
    CovMeta meta_;
};

/// Symmetrizes `m` and clips eigenvalues below zero. Throws NumericalError when
/// the most negative eigenvalue exceeds `rel_tol` times the largest in magnitude.
Eigen::MatrixXd make_psd(const Eigen::MatrixXd& m, double rel_tol);

using ReturnsRef = Eigen::Ref<const Eigen::MatrixXd>;

/// Unbiased sample covariance (denominator tau - 1) of a tau x n return block.
CovEstimate sample_cov(ReturnsRef returns);
CovEstimate sample_cov(const ReturnPanel& window);

/// Linear shrinkage toward the constant-correlation target. The intensity is
/// the plug-in estimate of the asymptotically optimal value, clipped to [0, 1];
/// `forced_shrinkage` overrides it (diagnostics and tests).
CovEstimate lw_linear(ReturnsRef returns, std::optional<double> forced_shrinkage = std::nullopt);
CovEstimate lw_linear(const ReturnPanel& window, std::optional<double> forced_shrinkage = std::nullopt);

/// Constant-correlation target built from a covariance matrix: sample
/// variances on the diagonal, average pairwise correlation off the diagonal.
Eigen::MatrixXd constant_correlation_target(const Eigen::MatrixXd& sample);

/// Rotation-equivariant non-linear shrinkage: keeps the sample eigenvectors
/// and maps every sample eigenvalue through the analytic kernel formula
/// (Epanechnikov density estimate and its Hilbert transform). Needs tau > n.
CovEstimate lw_nonlinear(ReturnsRef returns);
CovEstimate lw_nonlinear(const ReturnPanel& window);

/// Principal orthogonal complement thresholding: top-K principal components
/// plus a soft-thresholded residual covariance. Off-diagonal residual entry
/// (i, j) is shrunk by theta * sqrt(u_ii u_jj) * sqrt(log n / tau).
CovEstimate poet(ReturnsRef returns, int factors, double theta);
CovEstimate poet(const ReturnPanel& window, int factors, double theta);

/// Chooses K from `candidates` by fitting POET on the first half of the
/// window and scoring Frobenius distance to the sample covariance of the
/// second half. Ties go to the smaller K.
int select_poet_k(ReturnsRef returns, const std::vector<int>& candidates, double theta);
int select_poet_k(const ReturnPanel& window, const std::vector<int>& candidates, double theta);

struct EstimatorConfig {
    Estimator estimator = Estimator::LwLinear;
    double poet_theta = 0.5;
    std::vector<int> poet_k_candidates{1, 2, 3, 4, 5};
};

/// Dispatches on `config.estimator`. For POET with more than one candidate
/// the factor count is re-selected on every call.
CovEstimate estimate_covariance(ReturnsRef returns, const EstimatorConfig& config);

}  // namespace sgmv
