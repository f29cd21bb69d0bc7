#include "sgmv/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "sgmv/errors.hpp"

namespace sgmv {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

double inf_norm(const VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

double cost_scale(const MatrixXd& Q, const VectorXd& c) {
    double s = 0.0;
    if (Q.size()) s = std::max(s, Q.cwiseAbs().maxCoeff());
    if (c.size()) s = std::max(s, c.cwiseAbs().maxCoeff());
    return s > 0.0 && std::isfinite(s) ? s : 1.0;
}

MatrixXd repair_psd(const MatrixXd& Q) {
    MatrixXd sym = 0.5 * (Q + Q.transpose());
    const double scale = sym.cwiseAbs().maxCoeff();
    if (!(scale > 0.0)) return sym;

    // Cheap screen: a pivoted LDLT with non-negative pivots means PSD up to rounding.
    // Eigen flags exactly singular input as a numerical issue, so only the pivots are inspected.
    Eigen::LDLT<MatrixXd> ldlt(sym);
    if (ldlt.vectorD().allFinite() && ldlt.vectorD().minCoeff() >= -1e-12 * scale) return sym;

    Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym);
    if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition of Q failed");
    const VectorXd& ev = es.eigenvalues();
    const double top = ev.cwiseAbs().maxCoeff();
    if (ev.minCoeff() < -1e-8 * top) {
        throw ValidationError("QP cost matrix is not positive semi-definite (smallest eigenvalue " +
                              std::to_string(ev.minCoeff()) + ")");
    }
    MatrixXd out = es.eigenvectors() * ev.cwiseMax(0.0).asDiagonal() * es.eigenvectors().transpose();
    return 0.5 * (out + out.transpose());
}

struct SparseRow {
    std::vector<std::pair<Index, double>> nz;
};

std::vector<SparseRow> sparse_rows(const MatrixXd& G) {
    std::vector<SparseRow> rows(static_cast<std::size_t>(G.rows()));
    for (Index i = 0; i < G.rows(); ++i) {
        for (Index j = 0; j < G.cols(); ++j) {
            if (G(i, j) != 0.0) rows[static_cast<std::size_t>(i)].nz.emplace_back(j, G(i, j));
        }
    }
    return rows;
}

// Residual on the cost-normalized problem; `s` is the explicit slack when
// available (interior iterates), otherwise h - Gx.
double normalized_residual(const MatrixXd& Qs, const VectorXd& cs, const QpProblem& P,
                           const VectorXd& x, const VectorXd& y, const VectorXd& z) {
    double r = 0.0;
    VectorXd stat = Qs * x + cs;
    if (P.equalities()) stat += P.E().transpose() * y;
    if (P.inequalities()) stat += P.G().transpose() * z;
    r = std::max(r, inf_norm(stat));
    if (P.equalities()) r = std::max(r, inf_norm(P.E() * x - P.e()));
    if (P.inequalities()) {
        const VectorXd slack = P.h() - P.G() * x;
        r = std::max(r, std::max(0.0, -slack.minCoeff()));
        r = std::max(r, std::max(0.0, -z.minCoeff()));
        r = std::max(r, inf_norm(z.cwiseProduct(slack)));
    }
    return r;
}

VectorXd rows_times(const std::vector<SparseRow>& rows, const VectorXd& x) {
    VectorXd out(static_cast<Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        double acc = 0.0;
        for (const auto& [j, g] : rows[i].nz) acc += g * x(j);
        out(static_cast<Index>(i)) = acc;
    }
    return out;
}

VectorXd rows_transpose_times(const std::vector<SparseRow>& rows, const VectorXd& z, Index m) {
    VectorXd out = VectorXd::Zero(m);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double zi = z(static_cast<Index>(i));
        for (const auto& [j, g] : rows[i].nz) out(j) += g * zi;
    }
    return out;
}

// Positive/negative-part structure: m = 2n, Q = [[A, -A], [-A, A]], every
// inequality row is a single-variable bound or a multiple of (e_j - e_{n+j}),
// and every variable carries at least one bound row. Then Q + G'WG equals
// D + U (A + B) U' with U = [I; -I] and D, B diagonal, which reduces the
// Newton system to one n x n solve.
bool has_split_structure(const MatrixXd& Q, const std::vector<SparseRow>& rows) {
    const Index m = Q.rows();
    if (m < 2 || m % 2 != 0 || rows.empty()) return false;
    const Index n = m / 2;
    const auto A = Q.topLeftCorner(n, n);
    if (!(Q.topRightCorner(n, n) + A).isZero(0.0) || Q.bottomRightCorner(n, n) != A) return false;
    std::vector<bool> bounded(static_cast<std::size_t>(m), false);
    for (const auto& row : rows) {
        if (row.nz.size() == 1) {
            bounded[static_cast<std::size_t>(row.nz[0].first)] = true;
        } else if (row.nz.size() == 2) {
            const auto& [j0, g0] = row.nz[0];
            const auto& [j1, g1] = row.nz[1];
            if (j0 >= n || j1 != j0 + n || g1 != -g0) return false;
        } else if (!row.nz.empty()) {
            return false;
        }
    }
    return std::all_of(bounded.begin(), bounded.end(), [](bool b) { return b; });
}

/// Newton system  [M E'; E 0] [dx; dy] = [a; b]  with M = Q + G'WG, solved by
/// Cholesky on M (or its n x n reduction for split problems) and a Schur
/// complement on the (few) equality rows.
class KktSolver {
public:
    KktSolver(const MatrixXd& Qs, const MatrixXd& E, const std::vector<SparseRow>& rows)
        : Qs_(Qs), E_(E), rows_(rows), split_(has_split_structure(Qs, rows)) {}

    bool factor(const VectorXd& w) {
        if (!(split_ ? factor_split(w) : factor_dense(w))) return false;
        if (E_.rows()) {
            MinvEt_.resize(Qs_.rows(), E_.rows());
            for (Index k = 0; k < E_.rows(); ++k) MinvEt_.col(k) = apply_inverse(E_.row(k).transpose());
            schur_.compute(E_ * MinvEt_);
            if (schur_.info() != Eigen::Success) return false;
        }
        return true;
    }

    void solve(const VectorXd& a, const VectorXd& b, VectorXd& dx, VectorXd& dy) const {
        const VectorXd Minv_a = apply_inverse(a);
        if (E_.rows() == 0) {
            dx = Minv_a;
            dy.resize(0);
            return;
        }
        dy = schur_.solve(E_ * Minv_a - b);
        dx = Minv_a - MinvEt_ * dy;
    }

private:
    bool factor_with_ridge(const MatrixXd& M) {
        llt_.compute(M);
        if (llt_.info() == Eigen::Success) return true;
        // Singular cost with uncovered directions: retry with a growing ridge.
        const double diag_scale = 1.0 + M.diagonal().cwiseAbs().maxCoeff();
        for (double reg = 1e-14; reg <= 1e-6; reg *= 100.0) {
            MatrixXd shifted = M;
            shifted.diagonal().array() += reg * diag_scale;
            llt_.compute(shifted);
            if (llt_.info() == Eigen::Success) return true;
        }
        return false;
    }

    bool factor_dense(const VectorXd& w) {
        MatrixXd M = Qs_;
        for (std::size_t i = 0; i < rows_.size(); ++i) {
            const auto& nz = rows_[i].nz;
            const double wi = w(static_cast<Index>(i));
            for (const auto& [a, ga] : nz)
                for (const auto& [b, gb] : nz) M(a, b) += wi * ga * gb;
        }
        return factor_with_ridge(M);
    }

    bool factor_split(const VectorXd& w) {
        const Index n = Qs_.rows() / 2;
        VectorXd d = VectorXd::Zero(2 * n);
        VectorXd box = VectorXd::Zero(n);
        for (std::size_t i = 0; i < rows_.size(); ++i) {
            const auto& nz = rows_[i].nz;
            const double wi = w(static_cast<Index>(i));
            if (nz.size() == 1) {
                d(nz[0].first) += wi * nz[0].second * nz[0].second;
            } else if (nz.size() == 2) {
                box(nz[0].first) += wi * nz[0].second * nz[0].second;
            }
        }
        d_ = d;
        MatrixXd R = Qs_.topLeftCorner(n, n);
        R.diagonal() += box;
        R.diagonal().array() += d.head(n).array() * d.tail(n).array() / (d.head(n).array() + d.tail(n).array());
        return factor_with_ridge(R);
    }

    // With y = x+ - x-, the pair equations give
    //   (C + diag(d+ d- / (d+ + d-))) y = (d- a+ - d+ a-) / (d+ + d-)
    //   x+ = (a+ + a- + d- y) / (d+ + d-),  x- = (a+ + a- - d+ y) / (d+ + d-),
    // which never divides by a single (possibly tiny) bound weight.
    VectorXd apply_inverse(const VectorXd& a) const {
        if (!split_) return llt_.solve(a);
        const Index n = Qs_.rows() / 2;
        const auto dp = d_.head(n).array();
        const auto dm = d_.tail(n).array();
        const auto ap = a.head(n).array();
        const auto am = a.tail(n).array();
        const Eigen::ArrayXd dsum = dp + dm;
        const VectorXd y = llt_.solve(((dm * ap - dp * am) / dsum).matrix());
        VectorXd x(2 * n);
        x.head(n) = ((ap + am + dm * y.array()) / dsum).matrix();
        x.tail(n) = ((ap + am - dp * y.array()) / dsum).matrix();
        return x;
    }

    const MatrixXd& Qs_;
    const MatrixXd& E_;
    const std::vector<SparseRow>& rows_;
    bool split_;
    VectorXd d_;
    MatrixXd MinvEt_;
    Eigen::LLT<MatrixXd> llt_;
    Eigen::LDLT<MatrixXd> schur_;
};

double max_step(const VectorXd& v, const VectorXd& dv) {
    double alpha = 1.0;
    for (Index i = 0; i < v.size(); ++i) {
        if (dv(i) < 0.0) alpha = std::min(alpha, -v(i) / dv(i));
    }
    return alpha;
}

struct Iterate {
    VectorXd x, y, z, s;
};

// Regularized equality-constrained solve on a guessed active set, refined
// against the unregularized KKT system.
bool polish(const MatrixXd& Qs, const VectorXd& cs, const QpProblem& P, const Iterate& it,
            VectorXd& x, VectorXd& y, VectorXd& z) {
    const Index m = P.variables();
    const Index p = P.equalities();
    std::vector<Index> active;
    for (Index i = 0; i < P.inequalities(); ++i) {
        if (it.z(i) > it.s(i)) active.push_back(i);
    }
    const Index a = static_cast<Index>(active.size());
    const Index dim = m + p + a;

    MatrixXd K = MatrixXd::Zero(dim, dim);
    K.topLeftCorner(m, m) = Qs;
    if (p) {
        K.block(0, m, m, p) = P.E().transpose();
        K.block(m, 0, p, m) = P.E();
    }
    VectorXd rhs(dim);
    rhs.head(m) = -cs;
    if (p) rhs.segment(m, p) = P.e();
    for (Index k = 0; k < a; ++k) {
        const Index row = active[static_cast<std::size_t>(k)];
        K.block(0, m + p + k, m, 1) = P.G().row(row).transpose();
        K.block(m + p + k, 0, 1, m) = P.G().row(row);
        rhs(m + p + k) = P.h()(row);
    }

    const double delta = 1e-9;
    MatrixXd Kreg = K;
    Kreg.diagonal().head(m).array() += delta;
    Kreg.diagonal().tail(p + a).array() -= delta;
    Eigen::PartialPivLU<MatrixXd> lu(Kreg);

    VectorXd sol(dim);
    sol.head(m) = it.x;
    if (p) sol.segment(m, p) = it.y;
    for (Index k = 0; k < a; ++k) sol(m + p + k) = it.z(active[static_cast<std::size_t>(k)]);
    for (int refine = 0; refine < 6; ++refine) {
        const VectorXd corr = lu.solve(rhs - K * sol);
        if (!corr.allFinite()) return false;
        sol += corr;
    }
    x = sol.head(m);
    y = p ? VectorXd(sol.segment(m, p)) : VectorXd();
    z = VectorXd::Zero(P.inequalities());
    for (Index k = 0; k < a; ++k) z(active[static_cast<std::size_t>(k)]) = sol(m + p + k);
    return x.allFinite() && y.allFinite() && z.allFinite();
}

}  // namespace

QpProblem::QpProblem(MatrixXd Q, VectorXd c, MatrixXd E, VectorXd e, MatrixXd G, VectorXd h)
    : c_(std::move(c)), E_(std::move(E)), e_(std::move(e)), G_(std::move(G)), h_(std::move(h)) {
    const Index m = Q.rows();
    if (m < 1 || Q.cols() != m) throw ValidationError("QP cost matrix must be square and non-empty");
    if (c_.size() != m) throw ValidationError("QP linear cost has wrong length");
    if (E_.rows() == 0 && E_.cols() == 0) E_.resize(0, m);
    if (G_.rows() == 0 && G_.cols() == 0) G_.resize(0, m);
    if (E_.cols() != m || e_.size() != E_.rows()) throw ValidationError("QP equality block has inconsistent dimensions");
    if (G_.cols() != m || h_.size() != G_.rows()) throw ValidationError("QP inequality block has inconsistent dimensions");
    if (!Q.allFinite() || !c_.allFinite() || !E_.allFinite() || !e_.allFinite() ||
        !G_.allFinite() || !h_.allFinite()) {
        throw ValidationError("QP data must be finite");
    }
    Q_ = repair_psd(Q);
}

double QpProblem::objective(const VectorXd& x) const { return 0.5 * x.dot(Q_ * x) + c_.dot(x); }

std::string_view status_name(QpStatus s) {
    switch (s) {
        case QpStatus::Optimal: return "optimal";
        case QpStatus::Infeasible: return "infeasible";
        case QpStatus::MaxIterations: return "max-iterations";
    }
    return "?";
}

double kkt_residual(const QpProblem& P, const VectorXd& x, const VectorXd& y, const VectorXd& z) {
    const double scale = cost_scale(P.Q(), P.c());
    const MatrixXd Qs = P.Q() / scale;
    const VectorXd cs = P.c() / scale;
    return normalized_residual(Qs, cs, P, x, y / scale, z / scale);
}

QpSolution solve_qp(const QpProblem& P, double tolerance, int max_iter) {
    if (!(tolerance > 0.0)) throw ValidationError("QP tolerance must be positive");
    if (max_iter < 1) throw ValidationError("QP iteration limit must be positive");

    const Index m = P.variables();
    const Index p = P.equalities();
    const Index q = P.inequalities();
    const double scale = cost_scale(P.Q(), P.c());
    const MatrixXd Qs = P.Q() / scale;
    const VectorXd cs = P.c() / scale;
    const MatrixXd& E = P.E();
    const MatrixXd& G = P.G();
    const auto rows = sparse_rows(G);
    const double target = 1e-3 * tolerance;

    KktSolver kkt(Qs, E, rows);
    Iterate it;

    // Start: least-squares-slack point with unit weights.
    if (!kkt.factor(VectorXd::Ones(q))) throw NumericalError("QP KKT system is singular at the starting point");
    {
        VectorXd a = -cs;
        if (q) a += rows_transpose_times(rows, P.h(), m);
        kkt.solve(a, P.e(), it.x, it.y);
        if (p == 0) it.y.resize(0);
        it.s = q ? VectorXd((P.h() - G * it.x).cwiseMax(1.0)) : VectorXd();
        it.z = VectorXd::Ones(q);
    }

    auto interior_residual = [&](const Iterate& v, VectorXd& rd, VectorXd& rp, VectorXd& rg) {
        rd = Qs * v.x + cs;
        if (p) rd += E.transpose() * v.y;
        if (q) rd += rows_transpose_times(rows, v.z, m);
        rp = p ? VectorXd(E * v.x - P.e()) : VectorXd();
        rg = q ? VectorXd(rows_times(rows, v.x) + v.s - P.h()) : VectorXd();
        double r = std::max({inf_norm(rd), inf_norm(rp), inf_norm(rg)});
        if (q) r = std::max(r, v.s.cwiseProduct(v.z).maxCoeff());
        return r;
    };

    QpSolution out;
    Iterate best = it;
    double best_res = std::numeric_limits<double>::infinity();
    int since_improvement = 0;
    bool infeasible = false;
    VectorXd rd, rp, rg, dx, dy, dz, ds;

    int iter = 0;
    for (; iter < max_iter; ++iter) {
        const double res = interior_residual(it, rd, rp, rg);
        if (res < best_res) {
            if (res < 0.5 * best_res) since_improvement = 0;
            best_res = res;
            best = it;
        }
        if (res <= target) break;
        if (++since_improvement > 12) break;

        if (q == 0) {
            // Pure equality-constrained problem: one Newton step is exact.
            if (!kkt.factor(VectorXd())) break;
            kkt.solve(-rd, -rp, dx, dy);
            it.x += dx;
            if (p) it.y += dy;
            continue;
        }

        const VectorXd w = it.z.cwiseQuotient(it.s);
        if (!kkt.factor(w)) break;
        const double mu = it.s.dot(it.z) / static_cast<double>(q);

        auto direction = [&](const VectorXd& r_sz) {
            const VectorXd a =
                -rd + rows_transpose_times(rows, (r_sz - it.z.cwiseProduct(rg)).cwiseQuotient(it.s), m);
            kkt.solve(a, p ? VectorXd(-rp) : VectorXd(), dx, dy);
            const VectorXd Gdx = rows_times(rows, dx);
            dz = (-r_sz + it.z.cwiseProduct(rg + Gdx)).cwiseQuotient(it.s);
            ds = -rg - Gdx;
        };

        // Predictor.
        const VectorXd sz = it.s.cwiseProduct(it.z);
        direction(sz);
        const double alpha_aff = std::min(max_step(it.s, ds), max_step(it.z, dz));
        const double mu_aff =
            (it.s + alpha_aff * ds).dot(it.z + alpha_aff * dz) / static_cast<double>(q);
        const double sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3.0);

        // Corrector.
        const VectorXd r_sz = sz + ds.cwiseProduct(dz) - VectorXd::Constant(q, sigma * mu);
        direction(r_sz);
        const double alpha = std::min(1.0, 0.99 * std::min(max_step(it.s, ds), max_step(it.z, dz)));
        if (!(alpha > 1e-14)) break;

        it.x += alpha * dx;
        if (p) it.y += alpha * dy;
        it.z += alpha * dz;
        it.s += alpha * ds;

        // Farkas certificate: E'y + G'z ~ 0 with e'y + h'z < 0 and z >= 0.
        const double nrm = std::max(inf_norm(it.y), inf_norm(it.z));
        if (nrm > 1e3) {
            VectorXd cert = rows_transpose_times(rows, it.z, m);
            double gap = P.h().dot(it.z);
            if (p) {
                cert += E.transpose() * it.y;
                gap += P.e().dot(it.y);
            }
            if (inf_norm(cert) / nrm <= 1e-9 && gap / nrm <= -1e-6) {
                infeasible = true;
                break;
            }
        }
    }

    out.iterations = iter;
    if (infeasible) {
        out.status = QpStatus::Infeasible;
        out.x = it.x;
        out.eq_multipliers = it.y * scale;
        out.ineq_multipliers = it.z * scale;
        out.objective = P.objective(out.x);
        out.kkt_residual = normalized_residual(Qs, cs, P, it.x, it.y, it.z);
        return out;
    }

    VectorXd x = best.x, y = best.y, z = best.z;
    double res = normalized_residual(Qs, cs, P, x, y, z);
    if (res > target && q > 0) {
        VectorXd px, py, pz;
        if (polish(Qs, cs, P, best, px, py, pz)) {
            const double pres = normalized_residual(Qs, cs, P, px, py, pz);
            if (pres < res) {
                x = std::move(px);
                y = std::move(py);
                z = std::move(pz);
                res = pres;
                out.polished = true;
            }
        }
    }

    out.x = x;
    out.eq_multipliers = y * scale;
    out.ineq_multipliers = z * scale;
    out.objective = P.objective(x);
    out.kkt_residual = res;
    out.status = res <= tolerance ? QpStatus::Optimal : QpStatus::MaxIterations;
    return out;
}

}  // namespace sgmv
