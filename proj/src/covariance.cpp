#include "sgmv/covariance.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sgmv/errors.hpp"

namespace sgmv {

namespace {

Eigen::MatrixXd demeaned(ReturnsRef returns) {
    return returns.rowwise() - returns.colwise().mean();
}

double concentration(ReturnsRef returns) {
    return static_cast<double>(returns.cols()) / static_cast<double>(returns.rows());
}

void require_finite(ReturnsRef returns) {
    if (!returns.allFinite()) throw ValidationError("return window contains non-finite values");
}

}  // namespace

std::string_view estimator_name(Estimator e) {
    switch (e) {
        case Estimator::Sample: return "ml";
        case Estimator::LwLinear: return "lw-lin";
        case Estimator::LwNonlinear: return "lw-nl";
        case Estimator::Poet: return "poet";
    }
    return "?";
}

Estimator parse_estimator(std::string_view name) {
    if (name == "ml") return Estimator::Sample;
    if (name == "lw-lin") return Estimator::LwLinear;
    if (name == "lw-nl") return Estimator::LwNonlinear;
    if (name == "poet") return Estimator::Poet;
    throw ValidationError("unknown estimator '" + std::string(name) +
                          "' (expected ml, lw-lin, lw-nl or poet)");
}

Eigen::MatrixXd make_psd(const Eigen::MatrixXd& m, double rel_tol) {
    if (m.rows() != m.cols()) throw ValidationError("covariance matrix must be square");
    Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
    if (sym.size() == 0) return sym;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
    const Eigen::VectorXd& ev = es.eigenvalues();
    const double lo = ev.minCoeff();
    if (lo >= 0.0) return sym;
    const double scale = ev.cwiseAbs().maxCoeff();
    if (lo < -rel_tol * scale) {
        throw NumericalError("matrix is not positive semi-definite (smallest eigenvalue " +
                             std::to_string(lo) + ", largest magnitude " + std::to_string(scale) + ")");
    }
    const Eigen::MatrixXd& V = es.eigenvectors();
    Eigen::MatrixXd out = V * ev.cwiseMax(0.0).asDiagonal() * V.transpose();
    return 0.5 * (out + out.transpose());
}

CovEstimate::CovEstimate(Eigen::MatrixXd matrix, Estimator estimator, CovMeta meta)
    : estimator_(estimator), meta_(std::move(meta)) {
    if (!matrix.allFinite()) throw NumericalError("covariance estimate has non-finite entries");
    matrix_ = make_psd(matrix, 1e-10);
}

CovEstimate sample_cov(ReturnsRef returns) {
    const Eigen::Index tau = returns.rows();
    if (tau < 2) throw ValidationError("sample covariance needs at least 2 observations");
    require_finite(returns);
    const Eigen::MatrixXd X = demeaned(returns);
    Eigen::MatrixXd S = (X.transpose() * X) / static_cast<double>(tau - 1);
    CovMeta meta;
    meta.concentration = concentration(returns);
    return CovEstimate(std::move(S), Estimator::Sample, std::move(meta));
}

CovEstimate sample_cov(const ReturnPanel& window) { return sample_cov(window.returns()); }

Eigen::MatrixXd constant_correlation_target(const Eigen::MatrixXd& sample) {
    const Eigen::Index n = sample.rows();
    const Eigen::VectorXd sd = sample.diagonal().cwiseMax(0.0).cwiseSqrt();
    double corr_sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            // Zero-variance assets contribute zero correlation.
            if (i != j && sd(i) > 0.0 && sd(j) > 0.0) corr_sum += sample(i, j) / (sd(i) * sd(j));
        }
    }
    const double r_bar = n > 1 ? corr_sum / static_cast<double>(n * (n - 1)) : 0.0;
    Eigen::MatrixXd target = r_bar * (sd * sd.transpose());
    target.diagonal() = sample.diagonal();
    return target;
}

CovEstimate lw_linear(ReturnsRef returns, std::optional<double> forced_shrinkage) {
    const Eigen::Index tau = returns.rows();
    const Eigen::Index n = returns.cols();
    if (n < 2) throw ValidationError("constant-correlation target needs at least 2 assets");
    if (tau < 2) throw ValidationError("linear shrinkage needs at least 2 observations");
    require_finite(returns);
    if (forced_shrinkage && !(*forced_shrinkage >= 0.0 && *forced_shrinkage <= 1.0)) {
        throw ValidationError("forced shrinkage intensity must lie in [0, 1]");
    }

    const Eigen::MatrixXd X = demeaned(returns);
    const double t = static_cast<double>(tau);
    const Eigen::MatrixXd S = (X.transpose() * X) / (t - 1.0);
    const Eigen::MatrixXd target = constant_correlation_target(S);

    double s = 0.0;
    if (forced_shrinkage) {
        s = *forced_shrinkage;
    } else {
        // Plug-in intensity from the moments of the 1/tau-normalized sample matrix.
        const Eigen::MatrixXd sample = (X.transpose() * X) / t;
        const Eigen::VectorXd var = sample.diagonal();
        const Eigen::VectorXd sd = var.cwiseMax(0.0).cwiseSqrt();
        const Eigen::MatrixXd prior = constant_correlation_target(sample);

        double corr_sum = 0.0;
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j)
                if (i != j && sd(i) > 0.0 && sd(j) > 0.0) corr_sum += sample(i, j) / (sd(i) * sd(j));
        const double r_bar = corr_sum / static_cast<double>(n * (n - 1));

        const Eigen::MatrixXd Y = X.array().square().matrix();
        const Eigen::MatrixXd phi_mat =
            (Y.transpose() * Y) / t - sample.array().square().matrix();
        const double phi = phi_mat.sum();

        const Eigen::MatrixXd X3 = X.array().cube().matrix();
        const Eigen::MatrixXd term1 = (X3.transpose() * X) / t;
        double theta_sum = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!(sd(i) > 0.0)) continue;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (i == j) continue;
                const double theta_ij = term1(i, j) - var(i) * sample(i, j);
                theta_sum += sd(j) / sd(i) * theta_ij;
            }
        }
        const double rho = phi_mat.diagonal().sum() + r_bar * theta_sum;
        const double gamma = (sample - prior).squaredNorm();
        if (gamma > 0.0 && std::isfinite(gamma)) {
            const double kappa = (phi - rho) / gamma;
            s = std::clamp(kappa / t, 0.0, 1.0);
        }
        if (!std::isfinite(s)) s = 0.0;
    }

    Eigen::MatrixXd shrunk = s * target + (1.0 - s) * S;
    CovMeta meta;
    meta.concentration = concentration(returns);
    meta.shrinkage = s;
    return CovEstimate(std::move(shrunk), Estimator::LwLinear, std::move(meta));
}

CovEstimate lw_linear(const ReturnPanel& window, std::optional<double> forced_shrinkage) {
    return lw_linear(window.returns(), forced_shrinkage);
}

CovEstimate lw_nonlinear(ReturnsRef returns) {
    const Eigen::Index tau = returns.rows();
    const Eigen::Index n = returns.cols();
    if (tau <= n) {
        throw ValidationError("non-linear shrinkage requires more observations than assets (tau=" +
                              std::to_string(tau) + ", n=" + std::to_string(n) + ")");
    }
    require_finite(returns);

    // Demeaning costs one degree of freedom.
    const Eigen::MatrixXd X = demeaned(returns);
    const double n_eff = static_cast<double>(tau - 1);
    const Eigen::MatrixXd S = (X.transpose() * X) / n_eff;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
    const Eigen::VectorXd& lambda = es.eigenvalues();  // ascending
    const Eigen::MatrixXd& V = es.eigenvectors();

    CovMeta meta;
    meta.concentration = concentration(returns);
    meta.sample_eigenvalues.assign(lambda.data(), lambda.data() + lambda.size());

    const double top = lambda.maxCoeff();
    if (!(top > 0.0)) {
        meta.shrunk_eigenvalues.assign(static_cast<std::size_t>(n), 0.0);
        return CovEstimate(Eigen::MatrixXd::Zero(n, n), Estimator::LwNonlinear, std::move(meta));
    }
    // Rank-deficient windows (constant assets) get a tiny positive floor.
    const Eigen::VectorXd lam = lambda.cwiseMax(1e-14 * top);

    const double c = static_cast<double>(n) / n_eff;
    const double h = std::pow(n_eff, -1.0 / 3.0);
    const double sqrt5 = std::sqrt(5.0);
    const double pi = std::numbers::pi;

    Eigen::VectorXd shrunk(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double f = 0.0;
        double hf = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            const double H = h * lam(j);
            const double x = (lam(i) - lam(j)) / H;
            f += (3.0 / (4.0 * sqrt5)) * std::max(1.0 - x * x / 5.0, 0.0) / H;
            double hilbert = (-3.0 / (10.0 * pi)) * x;
            if (std::abs(x) != sqrt5) {
                hilbert += (3.0 / (4.0 * sqrt5 * pi)) * (1.0 - x * x / 5.0) *
                           std::log(std::abs((sqrt5 - x) / (sqrt5 + x)));
            }
            hf += hilbert / H;
        }
        f /= static_cast<double>(n);
        hf /= static_cast<double>(n);
        const double a = pi * c * lam(i) * f;
        const double b = 1.0 - c - pi * c * lam(i) * hf;
        shrunk(i) = lam(i) / (a * a + b * b);
    }
    meta.shrunk_eigenvalues.assign(shrunk.data(), shrunk.data() + shrunk.size());

    Eigen::MatrixXd out = V * shrunk.asDiagonal() * V.transpose();
    return CovEstimate(std::move(out), Estimator::LwNonlinear, std::move(meta));
}

CovEstimate lw_nonlinear(const ReturnPanel& window) { return lw_nonlinear(window.returns()); }

CovEstimate poet(ReturnsRef returns, int factors, double theta) {
    const Eigen::Index tau = returns.rows();
    const Eigen::Index n = returns.cols();
    if (tau < 2) throw ValidationError("POET needs at least 2 observations");
    if (factors < 0 || factors > std::min(n, tau)) {
        throw ValidationError("POET factor count " + std::to_string(factors) +
                              " outside [0, min(n, tau)]");
    }
    if (std::isnan(theta) || theta < 0.0) throw ValidationError("POET threshold must be >= 0");
    require_finite(returns);

    const Eigen::MatrixXd X = demeaned(returns);
    const Eigen::MatrixXd S = (X.transpose() * X) / static_cast<double>(tau - 1);

    Eigen::MatrixXd factor_part = Eigen::MatrixXd::Zero(n, n);
    if (factors > 0) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
        if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
        for (int k = 0; k < factors; ++k) {
            const Eigen::Index idx = n - 1 - k;  // eigenvalues ascending
            const Eigen::VectorXd v = es.eigenvectors().col(idx);
            factor_part += es.eigenvalues()(idx) * (v * v.transpose());
        }
    }

    Eigen::MatrixXd residual = S - factor_part;
    if (theta > 0.0) {
        const double rate = std::sqrt(std::log(static_cast<double>(n)) / static_cast<double>(tau));
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) {
                if (i == j) continue;
                const double scale =
                    std::sqrt(std::max(residual(i, i), 0.0) * std::max(residual(j, j), 0.0)) * rate;
                const double level = scale > 0.0 ? theta * scale : 0.0;
                const double u = residual(i, j);
                residual(i, j) = std::copysign(std::max(std::abs(u) - level, 0.0), u);
            }
        }
    }

    CovMeta meta;
    meta.concentration = concentration(returns);
    meta.factors = factors;
    meta.threshold = theta;
    return CovEstimate(factor_part + residual, Estimator::Poet, std::move(meta));
}

CovEstimate poet(const ReturnPanel& window, int factors, double theta) {
    return poet(window.returns(), factors, theta);
}

int select_poet_k(ReturnsRef returns, const std::vector<int>& candidates, double theta) {
    if (candidates.empty()) throw ValidationError("POET factor candidate list is empty");
    std::vector<int> sorted = candidates;
    std::sort(sorted.begin(), sorted.end());
    if (sorted.size() == 1) return sorted.front();

    const Eigen::Index tau = returns.rows();
    const Eigen::Index half = tau / 2;
    if (half < 2 || tau - half < 2) {
        throw ValidationError("window of " + std::to_string(tau) +
                              " rows is too short to split for factor selection");
    }
    const auto first = returns.topRows(half);
    const Eigen::MatrixXd second = sample_cov(returns.bottomRows(tau - half)).matrix();

    int best = sorted.front();
    double best_score = std::numeric_limits<double>::infinity();
    for (int k : sorted) {
        const double score = (poet(first, k, theta).matrix() - second).norm();
        if (score < best_score) {
            best_score = score;
            best = k;
        }
    }
    return best;
}

int select_poet_k(const ReturnPanel& window, const std::vector<int>& candidates, double theta) {
    return select_poet_k(window.returns(), candidates, theta);
}

CovEstimate estimate_covariance(ReturnsRef returns, const EstimatorConfig& config) {
    switch (config.estimator) {
        case Estimator::Sample: return sample_cov(returns);
        case Estimator::LwLinear: return lw_linear(returns);
        case Estimator::LwNonlinear: return lw_nonlinear(returns);
        case Estimator::Poet: {
            const int k = select_poet_k(returns, config.poet_k_candidates, config.poet_theta);
            return poet(returns, k, config.poet_theta);
        }
    }
    throw ValidationError("unknown estimator");
}

}  // namespace sgmv
