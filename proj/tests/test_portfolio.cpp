#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "sgmv/errors.hpp"
#include "sgmv/portfolio.hpp"
#include "support.hpp"

using namespace sgmv;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

CovEstimate cov_of(const MatrixXd& s) { return CovEstimate(s, Estimator::Sample); }

double largest_eig(const MatrixXd& s) { return Eigen::SelfAdjointEigenSolver<MatrixXd>(s).eigenvalues().maxCoeff(); }

Eigen::Index nonzeros(const VectorXd& w) { return (w.array() != 0.0).count(); }

VectorXd random_budget(Eigen::Index n, std::mt19937_64& rng) {
    VectorXd w = testing::gaussian_matrix(n, 1, rng).col(0) * 0.3;
    w.array() += 1.0 / static_cast<double>(n) - w.mean();
    return w;
}

}  // namespace

TEST_CASE("model names") {
    for (ModelKind m : {ModelKind::Standard, ModelKind::Lasso, ModelKind::LassoTurnover}) {
        CHECK(parse_model(model_name(m)) == m);
    }
    CHECK(model_name(ModelKind::LassoTurnover) == "lasso_turnover");
    CHECK_THROWS_AS(parse_model("ridge"), ValidationError);
}

TEST_CASE("standard GMV") {
    SUBCASE("identity") {
        const PortfolioWeights p = gmv_standard(cov_of(MatrixXd::Identity(4, 4)));
        CHECK((p.w.array() - 0.25).abs().maxCoeff() <= 1e-15);
        CHECK(p.delta == doctest::Approx(1.0));
        CHECK(p.lambda == 0.0);
        CHECK(p.model == ModelKind::Standard);
    }
    SUBCASE("diag(1, 4) matches a scan over the budget line") {
        double best = 1e300, best_w1 = 0.0;
        for (int i = 0; i <= 50000; ++i) {
            const double w1 = -2.0 + i * 1e-4;
            const double v = w1 * w1 + 4.0 * (1.0 - w1) * (1.0 - w1);
            if (v < best) best = v, best_w1 = w1;
        }
        const PortfolioWeights p = gmv_standard(cov_of(VectorXd((VectorXd(2) << 1.0, 4.0).finished()).asDiagonal()));
        CHECK(std::abs(p.w(0) - best_w1) <= 1e-4);
        CHECK(std::abs(p.w(1) - (1.0 - best_w1)) <= 1e-4);
    }
    SUBCASE("single asset") {
        CHECK(gmv_standard(cov_of(MatrixXd::Constant(1, 1, 3e-4))).w(0) == 1.0);
    }
    SUBCASE("agrees with the equality-only QP") {
        std::mt19937_64 rng(3);
        for (int trial = 0; trial < 20; ++trial) {
            const Eigen::Index n = 2 + 3 * trial % 30;
            const MatrixXd S = testing::random_spd(n, rng, 1e-4);
            const QpSolution s = solve_qp(QpProblem(2.0 * S, VectorXd::Zero(n), MatrixXd::Ones(1, n),
                                                    VectorXd::Ones(1), MatrixXd(0, n), VectorXd(0)));
            REQUIRE(s.status == QpStatus::Optimal);
            CHECK((gmv_standard(cov_of(S)).w - s.x).cwiseAbs().maxCoeff() <= 1e-6);
        }
    }
    SUBCASE("singular estimates are ridge-repaired") {
        MatrixXd S = MatrixXd::Constant(3, 3, 1e-4);
        const PortfolioWeights p = gmv_standard(cov_of(S));
        CHECK(p.w.sum() == doctest::Approx(1.0).epsilon(1e-9));
        // The repaired matrix has condition number ~1e10, so ~1e-6 is the attainable accuracy.
        CHECK((p.w.array() - 1.0 / 3.0).abs().maxCoeff() <= 1e-5);
        CHECK_THROWS_AS(gmv_standard(cov_of(MatrixXd::Zero(3, 3))), NumericalError);
    }
}

TEST_CASE("lasso GMV") {
    std::mt19937_64 rng(11);
    SUBCASE("zero penalty is the standard portfolio") {
        for (int trial = 0; trial < 10; ++trial) {
            const MatrixXd S = testing::random_spd(12, rng, 1e-4);
            CHECK((gmv_lasso(cov_of(S), 0.0).w - gmv_standard(cov_of(S)).w).cwiseAbs().maxCoeff() <= 1e-5);
        }
    }
    SUBCASE("identity stays equal-weighted for any penalty") {
        for (double lambda : {0.0, 0.01, 1.0, 100.0}) {
            const PortfolioWeights p = gmv_lasso(cov_of(MatrixXd::Identity(5, 5)), lambda);
            CHECK((p.w.array() - 0.2).abs().maxCoeff() <= 1e-7);
        }
    }
    SUBCASE("a large penalty gives the long-only portfolio") {
        for (int trial = 0; trial < 10; ++trial) {
            const Eigen::Index n = 3 + trial;
            const MatrixXd S = testing::random_spd(n, rng, 1e-4);
            const PortfolioWeights p = gmv_lasso(cov_of(S), 1e3 * largest_eig(S));
            CHECK(p.w.minCoeff() >= -1e-6);
            CHECK(p.delta == doctest::Approx(1.0).epsilon(1e-6));
            const QpSolution lo = solve_qp(QpProblem(2.0 * S, VectorXd::Zero(n), MatrixXd::Ones(1, n),
                                                     VectorXd::Ones(1), -MatrixXd::Identity(n, n),
                                                     VectorXd::Zero(n)));
            REQUIRE(lo.status == QpStatus::Optimal);
            const double v_lasso = portfolio_variance(S, p.w), v_lo = portfolio_variance(S, lo.x);
            CHECK(std::abs(v_lasso - v_lo) <= 1e-4 * v_lo);
        }
    }
    SUBCASE("snapping and bookkeeping") {
        const MatrixXd S = testing::random_spd(15, rng, 1e-4);
        const PortfolioWeights p = gmv_lasso(cov_of(S), 0.5 * largest_eig(S));
        for (Eigen::Index j = 0; j < p.w.size(); ++j) CHECK((p.w(j) == 0.0 || std::abs(p.w(j)) >= kZeroSnap));
        CHECK(p.w.sum() == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(p.delta == doctest::Approx(p.w.lpNorm<1>()).epsilon(1e-15));
        CHECK(p.delta >= 1.0 - 1e-8);
        CHECK(p.model == ModelKind::Lasso);
        CHECK_THROWS_AS(gmv_lasso(cov_of(S), -1.0), ValidationError);
        CHECK_THROWS_AS(gmv_lasso(cov_of(S), kInf), ValidationError);
    }
    SUBCASE("split problem layout") {
        const MatrixXd S = testing::random_spd(3, rng);
        const QpProblem P = lasso_split_problem(S, 0.1, kInf, nullptr);
        CHECK(P.variables() == 6);
        CHECK(P.Q().topLeftCorner(3, 3) == 2.0 * S);
        CHECK(P.Q().topRightCorner(3, 3) == -2.0 * S);
        CHECK((P.c().array() == 0.1).all());
        CHECK(P.E().row(0).head(3).isOnes());
        CHECK((P.E().row(0).tail(3).array() == -1.0).all());
    }
}

TEST_CASE("penalty paths") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::Index n = 4 + trial % 7;
        const MatrixXd S = testing::random_spd(n, rng, 1e-4);
        const double top = largest_eig(S);
        Eigen::Index prev_nnz = n + 1;
        double prev_delta = kInf;
        double prev_var = 0.0;
        for (int i = 0; i < 10; ++i) {
            const double lambda = top * (i == 0 ? 0.0 : std::pow(10.0, -3.0 + i * 0.4));
            const PortfolioWeights p = gmv_lasso(cov_of(S), lambda);
            const Eigen::Index nnz = nonzeros(p.w);
            CHECK(nnz <= prev_nnz + 1);
            CHECK(p.delta <= prev_delta + 1e-6);
            const double var = portfolio_variance(S, p.w);
            CHECK(var >= prev_var * (1.0 - 1e-6));
            prev_nnz = nnz;
            prev_delta = p.delta;
            prev_var = var;
        }
    }
}

TEST_CASE("lasso with a turnover box") {
    std::mt19937_64 rng(13);
    SUBCASE("diag(1, 4) clipped by the box matches a segment scan") {
        const MatrixXd S = VectorXd((VectorXd(2) << 1.0, 4.0).finished()).asDiagonal();
        const VectorXd w_prev = VectorXd::Constant(2, 0.5);
        double best = 1e300, best_w1 = 0.0;
        for (int i = 0; i <= 2000; ++i) {
            const double w1 = 0.4 + i * 1e-4;
            if (std::abs(1.0 - w1 - 0.5) > 0.1 + 1e-12) continue;
            const double v = w1 * w1 + 4.0 * (1.0 - w1) * (1.0 - w1);
            if (v < best) best = v, best_w1 = w1;
        }
        const PortfolioWeights p = gmv_lasso_turnover(cov_of(S), 0.0, 0.1, w_prev);
        CHECK(std::abs(p.w(0) - best_w1) <= 1e-6);
        CHECK(std::abs(p.w(0) - 0.6) <= 1e-6);
        CHECK(std::abs(p.w(1) - 0.4) <= 1e-6);
    }
    SUBCASE("an unbounded box is plain lasso") {
        for (int trial = 0; trial < 10; ++trial) {
            const MatrixXd S = testing::random_spd(10, rng, 1e-4);
            const VectorXd w_prev = random_budget(10, rng);
            const double lambda = 0.05 * trial * largest_eig(S);
            const PortfolioWeights a = gmv_lasso_turnover(cov_of(S), lambda, kInf, w_prev);
            const PortfolioWeights b = gmv_lasso(cov_of(S), lambda);
            CHECK((a.w - b.w).cwiseAbs().maxCoeff() <= 1e-6);
        }
    }
    SUBCASE("a vanishing box pins the previous weights") {
        const MatrixXd S = testing::random_spd(8, rng, 1e-4);
        const VectorXd w_prev = random_budget(8, rng);
        const PortfolioWeights p = gmv_lasso_turnover(cov_of(S), 1e-5, 1e-12, w_prev);
        CHECK((p.w - w_prev).cwiseAbs().maxCoeff() <= 1e-10);
    }
    SUBCASE("cap and objective nesting on random instances") {
        for (int trial = 0; trial < 30; ++trial) {
            const Eigen::Index n = 3 + trial % 10;
            const MatrixXd S = testing::random_spd(n, rng, 1e-4);
            const VectorXd w_prev = random_budget(n, rng);
            const double lambda = (trial % 5) * 0.02 * largest_eig(S);
            const double k = 0.01 * (1 + trial % 4);
            const PortfolioWeights t = gmv_lasso_turnover(cov_of(S), lambda, k, w_prev);
            const PortfolioWeights l = gmv_lasso(cov_of(S), lambda);
            const PortfolioWeights s = gmv_standard(cov_of(S));
            CHECK((t.w - w_prev).cwiseAbs().maxCoeff() <= k + 1e-8);
            CHECK(t.w.sum() == doctest::Approx(1.0).epsilon(1e-6));
            const double vs = portfolio_variance(S, s.w), vl = portfolio_variance(S, l.w),
                         vt = portfolio_variance(S, t.w);
            CHECK(vs <= vl * (1.0 + 1e-6));
            CHECK(vl <= vt * (1.0 + 1e-6));
        }
    }
    SUBCASE("argument checks") {
        const MatrixXd S = MatrixXd::Identity(3, 3);
        CHECK_THROWS_AS(gmv_lasso_turnover(cov_of(S), 0.1, 0.0, VectorXd::Constant(3, 1.0 / 3)), ValidationError);
        CHECK_THROWS_AS(gmv_lasso_turnover(cov_of(S), 0.1, 0.1, VectorXd::Constant(3, 0.5)), ValidationError);
        CHECK_THROWS_AS(gmv_lasso_turnover(cov_of(S), 0.1, 0.1, VectorXd::Constant(2, 0.5)), ValidationError);
    }
}

TEST_CASE("fit_model dispatch") {
    std::mt19937_64 rng(14);
    const MatrixXd S = testing::random_spd(6, rng, 1e-4);
    const CovEstimate c = cov_of(S);
    const VectorXd w_prev = VectorXd::Constant(6, 1.0 / 6.0);
    const double lambda = 0.1 * largest_eig(S);

    CHECK(fit_model(c, {ModelKind::Standard, 0.0, kInf, std::nullopt}).w == gmv_standard(c).w);
    CHECK(fit_model(c, {ModelKind::Lasso, lambda, kInf, std::nullopt}).w == gmv_lasso(c, lambda).w);
    const PortfolioWeights t = fit_model(c, {ModelKind::LassoTurnover, lambda, 0.02, w_prev});
    CHECK(t.model == ModelKind::LassoTurnover);
    CHECK(t.lambda == lambda);
    CHECK(t.w == gmv_lasso_turnover(c, lambda, 0.02, w_prev).w);
    CHECK_THROWS_AS(fit_model(c, {ModelKind::LassoTurnover, lambda, 0.02, std::nullopt}), ValidationError);
}
