#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sgmv/market_data.hpp"

namespace sgmv::testing {

inline Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = nd(rng);
    return m;
}

/// Wishart-like positive definite matrix scaled to entries of order `scale`.
inline Eigen::MatrixXd random_spd(Eigen::Index n, std::mt19937_64& rng, double scale = 1.0) {
    const Eigen::MatrixXd a = gaussian_matrix(n, n + 5, rng);
    Eigen::MatrixXd s = a * a.transpose() / static_cast<double>(n + 5);
    s.diagonal().array() += 0.05;
    return scale * s;
}

inline ReturnPanel panel_from(const Eigen::MatrixXd& returns) {
    std::vector<std::string> ids;
    for (Eigen::Index j = 0; j < returns.cols(); ++j) ids.push_back("A" + std::to_string(j + 1));
    return ReturnPanel(business_day_labels(static_cast<std::size_t>(returns.rows())), ids, returns);
}

/// Gaussian returns with daily volatility `vol`.
inline ReturnPanel gaussian_panel(Eigen::Index T, Eigen::Index n, std::uint64_t seed, double vol = 0.01) {
    std::mt19937_64 rng(seed);
    return panel_from(vol * gaussian_matrix(T, n, rng));
}

/// Minimum of 1/2 x'Qx + c'x over {sum x = 1, lo <= x <= hi} by a zooming
/// grid. One coordinate is eliminated by the sum and the rest are scanned on a
/// full grid clamped to the box; the window re-centers on the best point and
/// halves its step once that point lies in the inner half. Every coordinate
/// takes a turn as the eliminated one, so a bound on the eliminated coordinate
/// never forces the search along a diagonal edge.
struct GridOracle {
    Eigen::MatrixXd Q;
    Eigen::VectorXd c, lo, hi;
    int points = 11;
    double final_step = 1e-7;

    double objective(const Eigen::VectorXd& x) const {
        double v = 0.0;
        for (Eigen::Index j = 0; j < x.size(); ++j) {
            double qx = 0.0;
            for (Eigen::Index i = 0; i < x.size(); ++i) qx += Q(i, j) * x(i);
            v += x(j) * (0.5 * qx + c(j));
        }
        return v;
    }

    double minimize(Eigen::VectorXd* argmin = nullptr) const {
        const Eigen::Index m = Q.rows();
        double best = std::numeric_limits<double>::infinity();
        Eigen::VectorXd best_x = Eigen::VectorXd::Constant(m, std::numeric_limits<double>::quiet_NaN());
        for (Eigen::Index e = 0; e < m; ++e) {
            Eigen::VectorXd x;
            const double v = minimize_eliminating(e, x);
            if (v < best) {
                best = v;
                best_x = x;
            }
        }
        if (argmin) *argmin = best_x;
        return best;
    }

    double minimize_eliminating(Eigen::Index e, Eigen::VectorXd& best_x) const {
        const Eigen::Index m = Q.rows();
        std::vector<Eigen::Index> freev;
        for (Eigen::Index i = 0; i < m; ++i)
            if (i != e) freev.push_back(i);
        const auto f = static_cast<Eigen::Index>(freev.size());
        double best = std::numeric_limits<double>::infinity();
        best_x = Eigen::VectorXd::Constant(m, std::numeric_limits<double>::quiet_NaN());
        if (f == 0) {
            best_x = Eigen::VectorXd::Ones(1);
            return objective(best_x);
        }
        const int half = (points - 1) / 2;
        Eigen::VectorXd step(f), a(f);
        for (Eigen::Index i = 0; i < f; ++i) {
            step(i) = (hi(freev[i]) - lo(freev[i])) / static_cast<double>(points - 1);
            a(i) = lo(freev[i]);
        }
        while (true) {
            std::vector<int> idx(static_cast<std::size_t>(f), 0);
            Eigen::VectorXd x(m);
            while (true) {
                double sum = 0.0;
                for (Eigen::Index i = 0; i < f; ++i) {
                    const Eigen::Index j = freev[i];
                    x(j) = std::clamp(a(i) + step(i) * idx[static_cast<std::size_t>(i)], lo(j), hi(j));
                    sum += x(j);
                }
                x(e) = 1.0 - sum;
                if (x(e) >= lo(e) - 1e-15 && x(e) <= hi(e) + 1e-15) {
                    const double v = objective(x);
                    if (v < best) {
                        best = v;
                        best_x = x;
                    }
                }
                Eigen::Index k = 0;
                while (k < f && ++idx[static_cast<std::size_t>(k)] == points) idx[static_cast<std::size_t>(k++)] = 0;
                if (k == f) break;
            }
            if (!std::isfinite(best)) return best;
            bool inner = true;
            for (Eigen::Index i = 0; i < f; ++i) {
                const Eigen::Index j = freev[i];
                const double center = a(i) + half * step(i);
                const bool at_bound = best_x(j) <= lo(j) || best_x(j) >= hi(j);
                if (!at_bound && std::abs(best_x(j) - center) > 0.5 * half * step(i) + 1e-15) inner = false;
            }
            if (inner) {
                if (step.maxCoeff() < final_step) break;
                step /= 2.0;
            }
            for (Eigen::Index i = 0; i < f; ++i) a(i) = best_x(freev[i]) - half * step(i);
        }
        return best;
    }
};

/// Exact minimum of the same problem by enumerating which coordinates sit at
/// their lower bound, their upper bound, or strictly inside, and solving the
/// equality-constrained system for each pattern.
inline double enumerate_box_qp(const Eigen::MatrixXd& Q, const Eigen::VectorXd& c, const Eigen::VectorXd& lo,
                               const Eigen::VectorXd& hi) {
    const Eigen::Index m = Q.rows();
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> state(static_cast<std::size_t>(m), 0);
    while (true) {
        std::vector<Eigen::Index> free;
        Eigen::VectorXd x = Eigen::VectorXd::Zero(m);
        for (Eigen::Index i = 0; i < m; ++i) {
            const int st = state[static_cast<std::size_t>(i)];
            if (st == 0) free.push_back(i);
            else x(i) = st == 1 ? lo(i) : hi(i);
        }
        const auto nf = static_cast<Eigen::Index>(free.size());
        bool ok = true;
        if (nf == 0) {
            ok = std::abs(x.sum() - 1.0) <= 1e-12;
        } else {
            // [Q_ff 1; 1' 0] [x_f; mu] = [-c_f - Q_fb x_b; 1 - sum x_b]
            Eigen::MatrixXd K = Eigen::MatrixXd::Zero(nf + 1, nf + 1);
            Eigen::VectorXd rhs(nf + 1);
            for (Eigen::Index a = 0; a < nf; ++a) {
                for (Eigen::Index b = 0; b < nf; ++b) K(a, b) = Q(free[a], free[b]);
                K(a, nf) = K(nf, a) = 1.0;
                rhs(a) = -c(free[a]) - Q.row(free[a]).dot(x);
            }
            rhs(nf) = 1.0 - x.sum();
            Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
            if (!lu.isInvertible()) ok = false;
            else {
                const Eigen::VectorXd sol = lu.solve(rhs);
                for (Eigen::Index a = 0; a < nf; ++a) x(free[a]) = sol(a);
            }
        }
        for (Eigen::Index i = 0; i < m && ok; ++i) ok = x(i) >= lo(i) - 1e-12 && x(i) <= hi(i) + 1e-12;
        if (ok) best = std::min(best, 0.5 * x.dot(Q * x) + c.dot(x));
        Eigen::Index k = 0;
        while (k < m && ++state[static_cast<std::size_t>(k)] == 3) state[static_cast<std::size_t>(k++)] = 0;
        if (k == m) break;
    }
    return best;
}

/// Fresh empty directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("sgmv_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace sgmv::testing
