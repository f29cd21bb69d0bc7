#include <cmath>
#include <random>

#include "doctest.h"
#include "sgmv/errors.hpp"
#include "sgmv/portfolio.hpp"
#include "sgmv/qp.hpp"
#include "support.hpp"

using namespace sgmv;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct BoxProblem {
    MatrixXd Q;
    VectorXd c, lo, hi;

    QpProblem qp() const {
        const Eigen::Index m = Q.rows();
        MatrixXd G(2 * m, m);
        G << MatrixXd::Identity(m, m), -MatrixXd::Identity(m, m);
        VectorXd h(2 * m);
        h << hi, -lo;
        return QpProblem(Q, c, MatrixXd::Ones(1, m), VectorXd::Ones(1), G, h);
    }
};

BoxProblem random_box_problem(Eigen::Index m, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    BoxProblem b;
    b.Q = testing::random_spd(m, rng);
    b.c = 0.5 * testing::gaussian_matrix(m, 1, rng);
    b.lo.resize(m);
    b.hi.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        b.lo(i) = -u(rng);
        b.hi(i) = 0.5 + u(rng);
    }
    return b;
}

// Independent first-order optimality check on the cost-normalized problem.
void check_kkt(const QpProblem& P, const QpSolution& s, double tol) {
    const double scale = std::max(P.Q().cwiseAbs().maxCoeff(), P.c().cwiseAbs().maxCoeff());
    VectorXd stat = (P.Q() * s.x + P.c()) / scale;
    if (P.equalities()) stat += P.E().transpose() * s.eq_multipliers / scale;
    if (P.inequalities()) stat += P.G().transpose() * s.ineq_multipliers / scale;
    CHECK(stat.cwiseAbs().maxCoeff() <= tol);
    if (P.equalities()) CHECK((P.E() * s.x - P.e()).cwiseAbs().maxCoeff() <= tol);
    if (P.inequalities()) {
        const VectorXd slack = P.h() - P.G() * s.x;
        CHECK(slack.minCoeff() >= -tol);
        CHECK(s.ineq_multipliers.minCoeff() / scale >= -tol);
        CHECK((slack.cwiseProduct(s.ineq_multipliers) / scale).cwiseAbs().maxCoeff() <= tol);
    }
    CHECK(s.kkt_residual <= tol);
}

}  // namespace

TEST_CASE("problem validation") {
    const MatrixXd E = MatrixXd::Ones(1, 2);
    const VectorXd e = VectorXd::Ones(1);
    MatrixXd indefinite(2, 2);
    indefinite << 1.0, 0.0, 0.0, -0.1;
    CHECK_THROWS_AS(QpProblem(indefinite, VectorXd::Zero(2), E, e, MatrixXd(0, 2), VectorXd(0)), ValidationError);

    MatrixXd almost(2, 2);
    almost << 1.0, 0.0, 0.0, -1e-10;
    const QpProblem repaired(almost, VectorXd::Zero(2), E, e, MatrixXd(0, 2), VectorXd(0));
    CHECK(repaired.Q()(1, 1) >= 0.0);
    CHECK(repaired.Q() == repaired.Q().transpose());

    CHECK_THROWS_AS(QpProblem(MatrixXd::Identity(2, 2), VectorXd::Zero(3), E, e, MatrixXd(0, 2), VectorXd(0)),
                    ValidationError);
    CHECK_THROWS_AS(QpProblem(MatrixXd::Identity(2, 2), VectorXd::Zero(2), MatrixXd::Ones(1, 3), e, MatrixXd(0, 2),
                              VectorXd(0)),
                    ValidationError);
    CHECK_THROWS_AS(QpProblem(MatrixXd::Identity(2, 2), VectorXd::Zero(2), E, e, MatrixXd::Ones(2, 2), VectorXd(1)),
                    ValidationError);
    VectorXd nan_c = VectorXd::Zero(2);
    nan_c(0) = std::nan("");
    CHECK_THROWS_AS(QpProblem(MatrixXd::Identity(2, 2), nan_c, E, e, MatrixXd(0, 2), VectorXd(0)), ValidationError);

    const QpProblem ok(MatrixXd::Identity(2, 2), VectorXd::Zero(2), E, e, MatrixXd(0, 2), VectorXd(0));
    CHECK_THROWS_AS(solve_qp(ok, 0.0), ValidationError);
    CHECK_THROWS_AS(solve_qp(ok, 1e-8, 0), ValidationError);
}

TEST_CASE("small worked examples") {
    SUBCASE("equality pins a scalar") {
        const QpProblem P(MatrixXd::Constant(1, 1, 2.0), VectorXd::Zero(1), MatrixXd::Ones(1, 1), VectorXd::Ones(1),
                          MatrixXd(0, 1), VectorXd(0));
        const QpSolution s = solve_qp(P);
        CHECK(s.status == QpStatus::Optimal);
        CHECK(s.x(0) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(s.objective == doctest::Approx(1.0).epsilon(1e-12));
        check_kkt(P, s, 1e-8);
    }
    SUBCASE("symmetric split") {
        const QpProblem P(2.0 * MatrixXd::Identity(2, 2), VectorXd::Zero(2), MatrixXd::Ones(1, 2), VectorXd::Ones(1),
                          MatrixXd(0, 2), VectorXd(0));
        const QpSolution s = solve_qp(P);
        CHECK(s.status == QpStatus::Optimal);
        CHECK(std::abs(s.x(0) - 0.5) <= 1e-10);
        CHECK(std::abs(s.x(1) - 0.5) <= 1e-10);
    }
    SUBCASE("diag(1, 4) long-only matches a fine segment scan") {
        const MatrixXd Q = 2.0 * VectorXd((VectorXd(2) << 1.0, 4.0).finished()).asDiagonal();
        const QpProblem P(Q, VectorXd::Zero(2), MatrixXd::Ones(1, 2), VectorXd::Ones(1), -MatrixXd::Identity(2, 2),
                          VectorXd::Zero(2));
        double best = 1e300, best_x1 = -1.0;
        for (int i = 0; i <= 10000; ++i) {
            const double x1 = i * 1e-4;
            const double v = x1 * x1 + 4.0 * (1.0 - x1) * (1.0 - x1);
            if (v < best) best = v, best_x1 = x1;
        }
        const QpSolution s = solve_qp(P);
        CHECK(s.status == QpStatus::Optimal);
        CHECK(std::abs(s.x(0) - best_x1) <= 1e-4);
        CHECK(std::abs(s.x(1) - (1.0 - best_x1)) <= 1e-4);
        CHECK(s.objective <= best + 1e-12);
        check_kkt(P, s, 1e-8);
    }
    SUBCASE("inequalities without equalities") {
        // (x - 2)^2 with x <= 1.
        const QpProblem P(MatrixXd::Constant(1, 1, 2.0), VectorXd::Constant(1, -4.0), MatrixXd(0, 1), VectorXd(0),
                          MatrixXd::Ones(1, 1), VectorXd::Ones(1));
        const QpSolution s = solve_qp(P);
        CHECK(s.status == QpStatus::Optimal);
        CHECK(std::abs(s.x(0) - 1.0) <= 1e-8);
        CHECK(s.ineq_multipliers(0) == doctest::Approx(2.0).epsilon(1e-6));
    }
    SUBCASE("linear objective over a box") {
        const MatrixXd G = (MatrixXd(4, 2) << 1, 0, 0, 1, -1, 0, 0, -1).finished();
        const VectorXd h = (VectorXd(4) << 1, 1, 1, 1).finished();
        const QpProblem P(MatrixXd::Zero(2, 2), (VectorXd(2) << 1.0, -1.0).finished(), MatrixXd(0, 2), VectorXd(0), G,
                          h);
        const QpSolution s = solve_qp(P);
        CHECK(s.status == QpStatus::Optimal);
        CHECK(std::abs(s.x(0) + 1.0) <= 1e-7);
        CHECK(std::abs(s.x(1) - 1.0) <= 1e-7);
    }
}

TEST_CASE("matches a grid-search oracle on random box problems") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 40; ++trial) {
        const Eigen::Index m = 2 + trial % 4;
        const BoxProblem b = random_box_problem(m, rng);
        const QpProblem P = b.qp();
        const QpSolution s = solve_qp(P);
        REQUIRE(s.status == QpStatus::Optimal);
        check_kkt(P, s, 1e-8);
        const double oracle = testing::GridOracle{b.Q, b.c, b.lo, b.hi}.minimize();
        const double exact = testing::enumerate_box_qp(b.Q, b.c, b.lo, b.hi);
        CAPTURE(trial);
        CHECK(std::abs(oracle - exact) <= 1e-8 * std::abs(exact));
        CHECK(std::abs(s.objective - oracle) <= 1e-4 * std::abs(oracle));
        CHECK(s.objective <= oracle + 1e-10);
    }
}

TEST_CASE("joint scaling of the cost leaves the solution unchanged") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        const BoxProblem b = random_box_problem(5, rng);
        const double tol = 1e-8;
        const VectorXd x = solve_qp(b.qp(), tol).x;
        for (double f : {1e-6, 1e-2, 1e3}) {
            BoxProblem scaled = b;
            scaled.Q *= f;
            scaled.c *= f;
            const QpSolution s = solve_qp(scaled.qp(), tol);
            CHECK(s.status == QpStatus::Optimal);
            CHECK((s.x - x).cwiseAbs().maxCoeff() <= 10.0 * tol);
        }
    }
}

TEST_CASE("infeasible problems are certified") {
    SUBCASE("box excludes the budget") {
        const MatrixXd G = (MatrixXd(3, 2) << -1, 0, 0, -1, 1, 0).finished();
        const VectorXd h = (VectorXd(3) << 0.0, 0.0, -0.5).finished();
        const QpProblem P(MatrixXd::Identity(2, 2), VectorXd::Zero(2), MatrixXd::Ones(1, 2), VectorXd::Ones(1), G, h);
        CHECK(solve_qp(P).status == QpStatus::Infeasible);
    }
    SUBCASE("contradictory bounds") {
        const MatrixXd G = (MatrixXd(2, 1) << 1.0, -1.0).finished();
        const VectorXd h = (VectorXd(2) << -1.0, 0.0).finished();
        const QpProblem P(MatrixXd::Identity(1, 1), VectorXd::Zero(1), MatrixXd(0, 1), VectorXd(0), G, h);
        CHECK(solve_qp(P).status == QpStatus::Infeasible);
    }
    SUBCASE("a nearly infeasible box is still solved") {
        const MatrixXd G = (MatrixXd(2, 2) << 1, 0, 0, 1).finished();
        const VectorXd h = (VectorXd(2) << 0.5, 0.5 + 1e-6).finished();
        const QpProblem P(MatrixXd::Identity(2, 2), VectorXd::Zero(2), MatrixXd::Ones(1, 2), VectorXd::Ones(1), G, h);
        const QpSolution s = solve_qp(P);
        CHECK(s.status == QpStatus::Optimal);
        CHECK(s.x.sum() == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("optimal status always honours the tolerance") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        const BoxProblem b = random_box_problem(6, rng);
        for (int it : {1, 2, 5, 50000}) {
            const QpSolution s = solve_qp(b.qp(), 1e-8, it);
            if (s.status == QpStatus::Optimal) CHECK(s.kkt_residual <= 1e-8);
            CHECK(s.kkt_residual == doctest::Approx(kkt_residual(b.qp(), s.x, s.eq_multipliers, s.ineq_multipliers)));
        }
    }
    CHECK(status_name(QpStatus::Optimal) == "optimal");
    CHECK(status_name(QpStatus::Infeasible) == "infeasible");
}

TEST_CASE("structured turnover problems agree with the general path") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::Index n = 8;
        const MatrixXd S = testing::random_spd(n, rng, 1e-4);
        VectorXd w_prev = VectorXd::Constant(n, 1.0 / n);
        w_prev(0) += 0.2;
        w_prev(1) -= 0.2;
        const double lambda = 1e-5 * (trial + 1);
        const QpProblem structured = lasso_split_problem(S, lambda, 0.05, &w_prev);

        // A slack-free extra row breaks the pattern the structured solve looks for.
        MatrixXd G(structured.inequalities() + 1, 2 * n);
        G << structured.G(), VectorXd::Ones(2 * n).transpose();
        VectorXd h(G.rows());
        h << structured.h(), 1e6;
        const QpProblem general(structured.Q(), structured.c(), structured.E(), structured.e(), G, h);

        const QpSolution a = solve_qp(structured);
        const QpSolution b = solve_qp(general);
        REQUIRE(a.status == QpStatus::Optimal);
        REQUIRE(b.status == QpStatus::Optimal);
        check_kkt(structured, a, 1e-8);
        const VectorXd wa = a.x.head(n) - a.x.tail(n);
        const VectorXd wb = b.x.head(n) - b.x.tail(n);
        CHECK((wa - wb).cwiseAbs().maxCoeff() <= 1e-6);
        CHECK(a.objective == doctest::Approx(b.objective).epsilon(1e-8));
    }
}
