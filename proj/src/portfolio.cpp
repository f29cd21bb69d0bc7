#include "sgmv/portfolio.hpp"

#include <cmath>

#include <spdlog/spdlog.h>

#include "sgmv/errors.hpp"

namespace sgmv {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string_view model_name(ModelKind m) {
    switch (m) {
        case ModelKind::Standard: return "standard";
        case ModelKind::Lasso: return "lasso";
        case ModelKind::LassoTurnover: return "lasso_turnover";
    }
    return "?";
}

ModelKind parse_model(std::string_view name) {
    if (name == "standard") return ModelKind::Standard;
    if (name == "lasso") return ModelKind::Lasso;
    if (name == "lasso_turnover" || name == "lasso-turnover") return ModelKind::LassoTurnover;
    throw ValidationError("unknown model '" + std::string(name) +
                          "' (expected standard, lasso or lasso_turnover)");
}

double portfolio_variance(const MatrixXd& sigma, const VectorXd& w) { return w.dot(sigma * w); }

namespace {

void snap_zeros(VectorXd& w) {
    for (Index j = 0; j < w.size(); ++j) {
        if (std::abs(w(j)) < kZeroSnap) w(j) = 0.0;
    }
}

PortfolioWeights make_weights(VectorXd w, ModelKind model, double lambda) {
    PortfolioWeights out;
    out.delta = w.lpNorm<1>();
    out.w = std::move(w);
    out.model = model;
    out.lambda = lambda;
    return out;
}

VectorXd solve_split(const QpProblem& problem, Index n, const SolverSettings& solver) {
    const QpSolution sol = solve_qp(problem, solver.tolerance, solver.max_iter);
    if (sol.status != QpStatus::Optimal) {
        throw NumericalError("portfolio QP ended with status '" + std::string(status_name(sol.status)) +
                             "' (KKT residual " + std::to_string(sol.kkt_residual) + ")");
    }
    VectorXd w = sol.x.head(n) - sol.x.tail(n);
    snap_zeros(w);
    return w;
}

}  // namespace

PortfolioWeights gmv_standard(const CovEstimate& cov) {
    const MatrixXd& sigma = cov.matrix();
    const Index n = sigma.rows();
    if (n < 1) throw ValidationError("covariance estimate is empty");
    const VectorXd ones = VectorXd::Ones(n);
    if (n == 1) return make_weights(ones, ModelKind::Standard, 0.0);

    auto try_solve = [&](const MatrixXd& m, VectorXd& x) {
        Eigen::LLT<MatrixXd> llt(m);
        if (llt.info() != Eigen::Success || llt.rcond() < 1e-15) return false;
        x = llt.solve(ones);
        return x.allFinite() && ones.dot(x) > 0.0;
    };

    VectorXd x;
    if (!try_solve(sigma, x)) {
        const double ridge = 1e-10 * sigma.trace() / static_cast<double>(n);
        spdlog::warn("gmv_standard: singular covariance estimate, adding ridge {:.3e}", ridge);
        MatrixXd repaired = sigma;
        repaired.diagonal().array() += ridge;
        if (!(ridge > 0.0) || !try_solve(repaired, x)) {
            throw NumericalError("covariance estimate is irreparably singular");
        }
    }
    return make_weights(x / ones.dot(x), ModelKind::Standard, 0.0);
}

QpProblem lasso_split_problem(const MatrixXd& sigma, double lambda, double k, const VectorXd* w_prev) {
    const Index n = sigma.rows();
    MatrixXd Q(2 * n, 2 * n);
    Q << sigma, -sigma, -sigma, sigma;
    Q *= 2.0;  // solve_qp minimizes 1/2 x'Qx
    VectorXd c = VectorXd::Constant(2 * n, lambda);

    MatrixXd E(1, 2 * n);
    E << Eigen::RowVectorXd::Ones(n), -Eigen::RowVectorXd::Ones(n);
    VectorXd e = VectorXd::Ones(1);

    const bool boxed = std::isfinite(k);
    const Index rows = boxed ? 4 * n : 2 * n;
    MatrixXd G = MatrixXd::Zero(rows, 2 * n);
    VectorXd h = VectorXd::Zero(rows);
    G.topLeftCorner(2 * n, 2 * n) = -MatrixXd::Identity(2 * n, 2 * n);
    if (boxed) {
        for (Index j = 0; j < n; ++j) {
            // w_j <= w_prev_j + k
            G(2 * n + j, j) = 1.0;
            G(2 * n + j, n + j) = -1.0;
            h(2 * n + j) = (*w_prev)(j) + k;
            // -w_j <= k - w_prev_j
            G(3 * n + j, j) = -1.0;
            G(3 * n + j, n + j) = 1.0;
            h(3 * n + j) = k - (*w_prev)(j);
        }
    }
    return QpProblem(std::move(Q), std::move(c), std::move(E), std::move(e), std::move(G), std::move(h));
}

PortfolioWeights gmv_lasso(const CovEstimate& cov, double lambda, const SolverSettings& solver) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be finite and >= 0");
    const Index n = cov.size();
    if (n < 1) throw ValidationError("covariance estimate is empty");
    VectorXd w = solve_split(lasso_split_problem(cov.matrix(), lambda, INFINITY, nullptr), n, solver);
    return make_weights(std::move(w), ModelKind::Lasso, lambda);
}

PortfolioWeights gmv_lasso_turnover(const CovEstimate& cov, double lambda, double k,
                                    const VectorXd& w_prev, const SolverSettings& solver) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be finite and >= 0");
    if (!(k > 0.0)) throw ValidationError("turnover cap k must be > 0");
    const Index n = cov.size();
    if (w_prev.size() != n) throw ValidationError("previous weights have the wrong length");
    if (!w_prev.allFinite() || std::abs(w_prev.sum() - 1.0) > 1e-6) {
        throw ValidationError("previous weights must sum to 1 (got " + std::to_string(w_prev.sum()) + ")");
    }
    VectorXd w = solve_split(lasso_split_problem(cov.matrix(), lambda, k, &w_prev), n, solver);
    return make_weights(std::move(w), ModelKind::LassoTurnover, lambda);
}

PortfolioWeights fit_model(const CovEstimate& cov, const ModelSpec& spec, const SolverSettings& solver) {
    switch (spec.model) {
        case ModelKind::Standard: return gmv_standard(cov);
        case ModelKind::Lasso: return gmv_lasso(cov, spec.lambda, solver);
        case ModelKind::LassoTurnover:
            if (std::isinf(spec.k) && !spec.w_prev) {
                PortfolioWeights out = gmv_lasso(cov, spec.lambda, solver);
                out.model = ModelKind::LassoTurnover;
                return out;
            }
            if (!spec.w_prev) throw ValidationError("lasso_turnover with finite k needs previous weights");
            return gmv_lasso_turnover(cov, spec.lambda, spec.k, *spec.w_prev, solver);
    }
    throw ValidationError("unknown model");
}

}  // namespace sgmv
