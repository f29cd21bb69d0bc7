#pragma once

#include <string_view>

#include <Eigen/Dense>

namespace sgmv {

/// minimize 1/2 x'Qx + c'x  subject to  Ex = e,  Gx <= h.
///
/// Q is validated at construction: it is symmetrized, rejected when its
/// smallest eigenvalue is below -1e-8 times its largest, and small negative
/// eigenvalues are clipped so every downstream solve is convex.
class QpProblem {
public:
    QpProblem(Eigen::MatrixXd Q, Eigen::VectorXd c, Eigen::MatrixXd E, Eigen::VectorXd e,
              Eigen::MatrixXd G, Eigen::VectorXd h);

    const Eigen::MatrixXd& Q() const { return Q_; }
    const Eigen::VectorXd& c() const { return c_; }
    const Eigen::MatrixXd& E() const { return E_; }
    const Eigen::VectorXd& e() const { return e_; }
    const Eigen::MatrixXd& G() const { return G_; }
    const Eigen::VectorXd& h() const { return h_; }

    Eigen::Index variables() const { return Q_.rows(); }
    Eigen::Index equalities() const { return E_.rows(); }
    Eigen::Index inequalities() const { return G_.rows(); }

    double objective(const Eigen::VectorXd& x) const;

private:
    Eigen::MatrixXd Q_;
    Eigen::VectorXd c_;
    Eigen::MatrixXd E_;
    Eigen::VectorXd e_;
    Eigen::MatrixXd G_;
    Eigen::VectorXd h_;
};

enum class QpStatus { Optimal, Infeasible, MaxIterations };

std::string_view status_name(QpStatus s);

struct QpSolution {
    Eigen::VectorXd x;
    Eigen::VectorXd eq_multipliers;    // y, sign convention Qx + c + E'y + G'z = 0
    Eigen::VectorXd ineq_multipliers;  // z >= 0
    double objective = 0.0;
    QpStatus status = QpStatus::MaxIterations;
    double kkt_residual = 0.0;
    int iterations = 0;
    bool polished = false;
};

/// KKT residual of a primal-dual point: the largest of the stationarity,
/// equality, inequality, dual-sign and complementarity violations (infinity
/// norms). The objective is normalized so that max(|Q|, |c|) = 1 before
/// measuring, so the residual does not depend on the cost scale.
double kkt_residual(const QpProblem& problem, const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                    const Eigen::VectorXd& z);

inline constexpr double kDefaultQpTolerance = 1e-8;
inline constexpr int kDefaultQpMaxIter = 50000;

/// Primal-dual interior-point solve (Mehrotra predictor-corrector) followed,
/// when the interior iterates stall short of the internal target, by an
/// active-set polish step. Status is Optimal only when kkt_residual <= tolerance.
/// Infeasible is reported when the dual iterates form a Farkas certificate.
QpSolution solve_qp(const QpProblem& problem, double tolerance = kDefaultQpTolerance,
                    int max_iter = kDefaultQpMaxIter);

}  // namespace sgmv
