#include "sgmv/backtest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <map>

#include <spdlog/spdlog.h>

#if defined(_OPENMP)
#include <omp.h>
#endif

#include "sgmv/csv_io.hpp"
#include "sgmv/errors.hpp"

namespace sgmv {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

template <class Fn>
void parallel_for(int count, int threads, Fn&& fn) {
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
#if defined(_OPENMP)
    const int nt = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(nt)
#else
    (void)threads;
#endif
    for (int i = 0; i < count; ++i) {
        try {
            fn(i);
        } catch (...) {
            errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

double sample_stddev(const std::vector<double>& x) {
    if (x.size() < 2) return 0.0;
    double mu = 0.0;
    for (double v : x) mu += v;
    mu /= static_cast<double>(x.size());
    double ss = 0.0;
    for (double v : x) ss += (v - mu) * (v - mu);
    return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

// Smallest stddev wins; values within `rel_tol` of it count as tied and the
// tie goes to the largest lambda.
std::size_t pick_lambda(const std::vector<double>& stddev, double rel_tol) {
    const double best = *std::min_element(stddev.begin(), stddev.end());
    const double slack = rel_tol * best + 1e-18;
    std::size_t chosen = 0;
    for (std::size_t i = 0; i < stddev.size(); ++i) {
        if (stddev[i] <= best + slack) chosen = i;
    }
    return chosen;
}

bool all_constant(const Eigen::Ref<const MatrixXd>& returns) {
    for (Index j = 0; j < returns.cols(); ++j) {
        if (returns.col(j).maxCoeff() != returns.col(j).minCoeff()) return false;
    }
    return true;
}

// Turnover-constrained CV fits, one row per shift and one entry per grid
// point. Shift 0 starts from w_prev; every later shift starts from the
// previous shift's fit drifted over its validation day, so the validation
// returns are those the constrained strategy would have produced.
template <class CovFor, class EvalRow>
std::vector<std::vector<VectorXd>> chained_turnover_fits(const BacktestConfig& config, int shifts,
                                                         const VectorXd& w_prev, CovFor&& cov_for,
                                                         EvalRow&& eval_row) {
    const std::size_t g = config.lambda_grid.size();
    std::vector<std::vector<VectorXd>> fits(static_cast<std::size_t>(shifts), std::vector<VectorXd>(g));
    for (int s = 0; s < shifts; ++s) {
        const CovEstimate& cov = cov_for(s);
        const auto su = static_cast<std::size_t>(s);
        const VectorXd r_prev = s > 0 ? VectorXd(eval_row(s - 1)) : VectorXd();
        parallel_for(static_cast<int>(g), config.threads, [&](int li) {
            const auto lu = static_cast<std::size_t>(li);
            const VectorXd anchor = s == 0 ? w_prev : drift_weights(fits[su - 1][lu], r_prev);
            fits[su][lu] = gmv_lasso_turnover(cov, config.lambda_grid[lu], config.k, anchor, config.solver).w;
        });
    }
    return fits;
}

/// Scores every grid point given weights(shift, grid index) and the return
/// row each shift is evaluated on.
template <class WeightsFor, class EvalRow>
CvResult score_grid(const BacktestConfig& config, WeightsFor&& weights_for, EvalRow&& eval_row) {
    const int h = config.cv_holdout;
    const std::size_t g = config.lambda_grid.size();
    CvResult out;
    out.cv_stddev.resize(g);
    for (std::size_t li = 0; li < g; ++li) {
        std::vector<double> rets(static_cast<std::size_t>(h));
        for (int s = 0; s < h; ++s) {
            const VectorXd& w = weights_for(config.cv_fast ? 0 : s, li);
            rets[static_cast<std::size_t>(s)] = eval_row(s).dot(w);
        }
        out.cv_stddev[li] = sample_stddev(rets);
    }
    out.lambda = config.lambda_grid[pick_lambda(out.cv_stddev, config.cv_tie_tolerance)];
    return out;
}

// Covariances and lasso fits of CV subwindows keyed by their first panel row.
// Consecutive days share all but one subwindow.
class CvCache {
public:
    CvCache(const ReturnPanel& panel, const BacktestConfig& config) : panel_(panel), config_(config) {}

    const CovEstimate& covariance(Index start) {
        auto it = covs_.find(start);
        if (it != covs_.end()) return it->second;
        const Index len = config_.tau - config_.cv_holdout;
        return covs_.emplace(start, estimate_covariance(panel_.returns().middleRows(start, len),
                                                        config_.estimator))
            .first->second;
    }

    const std::vector<VectorXd>& lasso(Index start) {
        auto it = lasso_.find(start);
        if (it != lasso_.end()) return it->second;
        const CovEstimate& cov = covariance(start);
        std::vector<VectorXd> fits(config_.lambda_grid.size());
        parallel_for(static_cast<int>(fits.size()), config_.threads, [&](int li) {
            fits[static_cast<std::size_t>(li)] =
                gmv_lasso(cov, config_.lambda_grid[static_cast<std::size_t>(li)], config_.solver).w;
        });
        return lasso_.emplace(start, std::move(fits)).first->second;
    }

    void evict_before(Index start) {
        covs_.erase(covs_.begin(), covs_.lower_bound(start));
        lasso_.erase(lasso_.begin(), lasso_.lower_bound(start));
    }

private:
    const ReturnPanel& panel_;
    const BacktestConfig& config_;
    std::map<Index, CovEstimate> covs_;
    std::map<Index, std::vector<VectorXd>> lasso_;
};

}  // namespace

std::vector<double> default_lambda_grid(int count, double step) {
    std::vector<double> grid(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) grid[static_cast<std::size_t>(i)] = i * step;
    return grid;
}

void BacktestConfig::validate() const {
    if (tau < 2) throw ValidationError("tau must be >= 2");
    if (cv_holdout < 2 || cv_holdout >= tau) throw ValidationError("cv_holdout must lie in [2, tau)");
    if (tau - cv_holdout < 2) throw ValidationError("CV fitting subwindow must have at least 2 rows");
    if (lambda_grid.empty()) throw ValidationError("lambda_grid must not be empty");
    for (std::size_t i = 0; i < lambda_grid.size(); ++i) {
        if (!(lambda_grid[i] >= 0.0) || !std::isfinite(lambda_grid[i])) {
            throw ValidationError("lambda_grid values must be finite and >= 0");
        }
        if (i > 0 && !(lambda_grid[i] > lambda_grid[i - 1])) {
            throw ValidationError("lambda_grid must be strictly increasing");
        }
    }
    if (!(k > 0.0)) throw ValidationError("turnover cap k must be > 0");
    if (models.empty()) throw ValidationError("at least one model must be selected");
    if (estimator.poet_k_candidates.empty()) throw ValidationError("poet_k_candidates must not be empty");
    if (std::isnan(estimator.poet_theta) || estimator.poet_theta < 0.0) {
        throw ValidationError("poet_theta must be >= 0");
    }
    if (!(cv_tie_tolerance >= 0.0) || !(cv_tie_tolerance < 1.0)) {
        throw ValidationError("cv_tie_tolerance must lie in [0, 1)");
    }
    if (!(solver.tolerance > 0.0) || solver.max_iter < 1) throw ValidationError("invalid QP settings");
}

bool BacktestConfig::has(ModelKind m) const {
    return std::find(models.begin(), models.end(), m) != models.end();
}

nlohmann::json config_to_json(const BacktestConfig& c) {
    nlohmann::json j;
    j["tau"] = c.tau;
    j["cv_holdout"] = c.cv_holdout;
    j["lambda_grid"] = c.lambda_grid;
    if (std::isinf(c.k)) {
        j["k"] = "inf";
    } else {
        j["k"] = c.k;
    }
    j["estimator"] = std::string(estimator_name(c.estimator.estimator));
    j["poet_theta"] = c.estimator.poet_theta;
    j["poet_k_candidates"] = c.estimator.poet_k_candidates;
    nlohmann::json models = nlohmann::json::array();
    for (ModelKind m : c.models) models.push_back(std::string(model_name(m)));
    j["models"] = models;
    j["cv_fast"] = c.cv_fast;
    j["cv_tie_tolerance"] = c.cv_tie_tolerance;
    j["qp_tolerance"] = c.solver.tolerance;
    j["qp_max_iter"] = c.solver.max_iter;
    j["threads"] = c.threads;
    return j;
}

BacktestConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ValidationError("config must be a JSON object");
    BacktestConfig c;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "tau") c.tau = value.get<int>();
            else if (key == "cv_holdout") c.cv_holdout = value.get<int>();
            else if (key == "lambda_grid") c.lambda_grid = value.get<std::vector<double>>();
            else if (key == "k") {
                if (value.is_string()) {
                    const auto s = value.get<std::string>();
                    if (s != "inf" && s != "infinity") throw ValidationError("k must be a number or \"inf\"");
                    c.k = std::numeric_limits<double>::infinity();
                } else {
                    c.k = value.get<double>();
                }
            } else if (key == "estimator") c.estimator.estimator = parse_estimator(value.get<std::string>());
            else if (key == "poet_theta") c.estimator.poet_theta = value.get<double>();
            else if (key == "poet_k_candidates") c.estimator.poet_k_candidates = value.get<std::vector<int>>();
            else if (key == "models") {
                c.models.clear();
                for (const auto& m : value) c.models.push_back(parse_model(m.get<std::string>()));
            } else if (key == "cv_fast") c.cv_fast = value.get<bool>();
            else if (key == "cv_tie_tolerance") c.cv_tie_tolerance = value.get<double>();
            else if (key == "qp_tolerance") c.solver.tolerance = value.get<double>();
            else if (key == "qp_max_iter") c.solver.max_iter = value.get<int>();
            else if (key == "threads") c.threads = value.get<int>();
            else throw ValidationError("unknown config key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("config type error: ") + e.what());
    }
    c.validate();
    return c;
}

BacktestConfig read_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config '" + path.string() + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("config '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

VectorXd drift_weights(const VectorXd& w, const VectorXd& r_next) {
    if (w.size() != r_next.size()) throw ValidationError("weights and returns differ in length");
    if (std::abs(w.sum() - 1.0) > 1e-6) throw ValidationError("weights to drift must sum to 1");
    if ((r_next.array() <= -1.0).any()) throw ValidationError("asset returns must be > -1");
    const double gross = 1.0 + w.dot(r_next);
    if (!(gross > 0.0)) {
        throw NumericalError("portfolio return " + std::to_string(gross - 1.0) +
                             " wipes out the portfolio; cannot drift weights");
    }
    return w.cwiseProduct((1.0 + r_next.array()).matrix()) / gross;
}

CvResult cross_validate_lambda(const ReturnPanel& window, const BacktestConfig& config, ModelKind model,
                               const std::optional<VectorXd>& w_prev) {
    config.validate();
    if (model == ModelKind::Standard) throw ValidationError("the standard model has no tuning parameter");
    if (window.rows() != config.tau) {
        throw ValidationError("CV window has " + std::to_string(window.rows()) + " rows, expected tau = " +
                              std::to_string(config.tau));
    }
    if (model == ModelKind::LassoTurnover && std::isfinite(config.k) && !w_prev) {
        throw ValidationError("turnover-constrained CV needs previous weights");
    }
    const auto& R = window.returns();
    if (all_constant(R)) {
        spdlog::warn("cross_validate_lambda: window returns are constant, choosing the largest lambda");
        CvResult out;
        out.lambda = config.lambda_grid.back();
        out.cv_stddev.assign(config.lambda_grid.size(), 0.0);
        out.degenerate = true;
        return out;
    }
    if (config.lambda_grid.size() == 1) {
        CvResult out;
        out.lambda = config.lambda_grid.front();
        out.cv_stddev.assign(1, 0.0);
        return out;
    }

    const int h = config.cv_holdout;
    const Index fit_len = config.tau - h;
    const int shifts = config.cv_fast ? 1 : h;
    const std::size_t g = config.lambda_grid.size();

    auto eval_row = [&](int s) -> VectorXd { return R.row(fit_len + s).transpose(); };
    std::vector<CovEstimate> covs;
    covs.reserve(static_cast<std::size_t>(shifts));
    for (int s = 0; s < shifts; ++s) covs.push_back(estimate_covariance(R.middleRows(s, fit_len), config.estimator));

    std::vector<std::vector<VectorXd>> fits;
    if (model == ModelKind::LassoTurnover && std::isfinite(config.k)) {
        fits = chained_turnover_fits(
            config, shifts, *w_prev, [&](int s) -> const CovEstimate& { return covs[static_cast<std::size_t>(s)]; },
            eval_row);
    } else {
        fits.assign(static_cast<std::size_t>(shifts), std::vector<VectorXd>(g));
        for (int s = 0; s < shifts; ++s) {
            parallel_for(static_cast<int>(g), config.threads, [&](int li) {
                fits[static_cast<std::size_t>(s)][static_cast<std::size_t>(li)] =
                    gmv_lasso(covs[static_cast<std::size_t>(s)], config.lambda_grid[static_cast<std::size_t>(li)],
                              config.solver)
                        .w;
            });
        }
    }
    return score_grid(
        config,
        [&](int s, std::size_t li) -> const VectorXd& { return fits[static_cast<std::size_t>(s)][li]; }, eval_row);
}

const ModelPath* BacktestResult::path(ModelKind m) const {
    for (const auto& p : paths) {
        if (p.model == m) return &p;
    }
    return nullptr;
}

BacktestResult run_backtest(const ReturnPanel& panel, const BacktestConfig& config) {
    config.validate();
    const Index T = panel.rows();
    const Index tau = config.tau;
    if (T <= tau) {
        throw ValidationError("panel has " + std::to_string(T) + " rows; need more than tau = " +
                              std::to_string(tau));
    }
    const Index days = T - tau;
    const int h = config.cv_holdout;
    const Index fit_len = tau - h;
    const auto& R = panel.returns();

    BacktestResult result;
    result.config = config;
    result.asset_ids = panel.asset_ids();
    const bool want_std = config.has(ModelKind::Standard);
    const bool want_lasso = config.has(ModelKind::Lasso);
    const bool want_lt = config.has(ModelKind::LassoTurnover);
    for (ModelKind m : {ModelKind::Standard, ModelKind::Lasso, ModelKind::LassoTurnover}) {
        if (config.has(m)) {
            ModelPath p;
            p.model = m;
            result.paths.push_back(std::move(p));
        }
    }
    auto path_of = [&](ModelKind m) -> ModelPath& {
        for (auto& p : result.paths) {
            if (p.model == m) return p;
        }
        throw std::logic_error("model path missing");
    };
    auto record = [&](ModelKind m, PortfolioWeights w, const VectorXd& r_next, const std::string& date) {
        ModelPath& p = path_of(m);
        w.date = date;
        p.oos_returns.push_back(w.w.dot(r_next));
        p.lambda_path.push_back(w.lambda);
        p.delta_path.push_back(w.delta);
        p.weights.push_back(std::move(w));
    };

    CvCache cache(panel, config);
    std::optional<VectorXd> lt_last;

    for (Index d = 0; d < days; ++d) {
        const auto t0 = std::chrono::steady_clock::now();
        const Index last = d + tau - 1;
        const std::string& date = panel.dates()[static_cast<std::size_t>(last)];
        const VectorXd r_next = R.row(last + 1).transpose();
        try {
            const auto window = R.middleRows(d, tau);
            if (all_constant(window) && (want_lasso || want_lt)) {
                spdlog::warn("{}: window returns are constant, using the largest lambda", date);
            }
            const CovEstimate cov = estimate_covariance(window, config.estimator);

            std::optional<PortfolioWeights> standard;
            if (want_std || (want_lt && !lt_last)) standard = gmv_standard(cov);
            if (want_std) record(ModelKind::Standard, *standard, r_next, date);

            auto eval_row = [&](int s) -> VectorXd { return R.row(d + fit_len + s).transpose(); };
            auto choose = [&](auto&& weights_for) {
                if (config.lambda_grid.size() == 1) return config.lambda_grid.front();
                if (all_constant(window)) return config.lambda_grid.back();
                return score_grid(config, weights_for, eval_row).lambda;
            };
            auto lasso_weights = [&](int s, std::size_t li) -> const VectorXd& {
                return cache.lasso(d + s)[li];
            };

            std::optional<double> lasso_lambda;
            if (want_lasso || (want_lt && std::isinf(config.k))) lasso_lambda = choose(lasso_weights);
            if (want_lasso) record(ModelKind::Lasso, gmv_lasso(cov, *lasso_lambda, config.solver), r_next, date);

            if (want_lt) {
                VectorXd w_prev;
                if (!lt_last) {
                    w_prev = standard->w;
                    result.turnover_initial_weights = w_prev;
                } else {
                    w_prev = drift_weights(*lt_last, R.row(last).transpose());
                }
                double lambda = 0.0;
                if (std::isinf(config.k)) {
                    lambda = *lasso_lambda;
                } else {
                    std::vector<std::vector<VectorXd>> fits;
                    if (config.lambda_grid.size() > 1 && !all_constant(window)) {
                        fits = chained_turnover_fits(
                            config, config.cv_fast ? 1 : h, w_prev,
                            [&](int s) -> const CovEstimate& { return cache.covariance(d + s); }, eval_row);
                    }
                    lambda = choose([&](int s, std::size_t li) -> const VectorXd& {
                        return fits[static_cast<std::size_t>(s)][li];
                    });
                }
                PortfolioWeights w = std::isinf(config.k)
                                         ? gmv_lasso(cov, lambda, config.solver)
                                         : gmv_lasso_turnover(cov, lambda, config.k, w_prev, config.solver);
                w.model = ModelKind::LassoTurnover;
                lt_last = w.w;
                record(ModelKind::LassoTurnover, std::move(w), r_next, date);
            }
        } catch (const ValidationError& e) {
            throw ValidationError("backtest failed on " + date + ": " + e.what());
        } catch (const NumericalError& e) {
            throw NumericalError("backtest failed on " + date + ": " + e.what());
        }
        cache.evict_before(d + 1);

        result.rebalance_dates.push_back(date);
        result.return_dates.push_back(panel.dates()[static_cast<std::size_t>(last + 1)]);
        result.next_returns.push_back(r_next);
        result.wall_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return result;
}

void write_backtest_results(const std::filesystem::path& dir, const BacktestResult& result) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "config.json", std::ios::binary | std::ios::trunc);
        out << config_to_json(result.config).dump(2) << '\n';
    }
    for (const auto& p : result.paths) {
        const std::string name(model_name(p.model));
        const Index days = static_cast<Index>(p.weights.size());

        LabeledTable oos{"date", result.return_dates, {"return"}, MatrixXd(days, 1)};
        LabeledTable weights{"date", result.rebalance_dates, result.asset_ids,
                             MatrixXd(days, static_cast<Index>(result.asset_ids.size()))};
        LabeledTable ld{"date", result.rebalance_dates, {"lambda", "delta"}, MatrixXd(days, 2)};
        for (Index t = 0; t < days; ++t) {
            const auto i = static_cast<std::size_t>(t);
            oos.values(t, 0) = p.oos_returns[i];
            weights.values.row(t) = p.weights[i].w.transpose();
            ld.values(t, 0) = p.lambda_path[i];
            ld.values(t, 1) = p.delta_path[i];
        }
        write_table_csv(dir / ("oos_returns_" + name + ".csv"), oos);
        write_table_csv(dir / ("weights_" + name + ".csv"), weights);
        write_table_csv(dir / ("lambda_delta_" + name + ".csv"), ld);
    }
    if (result.turnover_initial_weights && !result.rebalance_dates.empty()) {
        LabeledTable init{"date", {result.rebalance_dates.front()}, result.asset_ids,
                          result.turnover_initial_weights->transpose()};
        write_table_csv(dir / "initial_weights_lasso_turnover.csv", init);
    }
}

}  // namespace sgmv
