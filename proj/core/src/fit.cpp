#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

#include "json.hpp"
#include "stshared/inference.hpp"
#include "stshared/rng.hpp"

namespace stshared {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::uint64_t kDrawStream = 0x64726177;  // "draw"

/// log_h + log prior as a function of internal theta, with a warm start
/// carried between calls (fit() is sequential, so this is deterministic).
class Objective {
public:
    Objective(const JointModel& m, const ObservationSet& d, const FitConfig& cfg, FitDiagnostics& diag)
        : model_(m), data_(d), cfg_(cfg), diag_(diag) {
        std::tie(lo_, hi_) = m.theta_bounds();
    }

    const Eigen::VectorXd& lower() const { return lo_; }
    const Eigen::VectorXd& upper() const { return hi_; }

    Eigen::VectorXd clamp(const Eigen::VectorXd& th) const { return th.cwiseMax(lo_).cwiseMin(hi_); }

    double value(const Eigen::VectorXd& th, std::optional<LaplaceResult>* keep = nullptr) {
        ++diag_.objective_evaluations;
        if ((th.array() < lo_.array()).any() || (th.array() > hi_.array()).any()) return kNegInf;
        const double lp = model_.log_hyper_prior(th);
        if (!std::isfinite(lp)) return kNegInf;
        try {
            const HyperParams h = model_.hyper(th);
            LaplaceResult r = gaussian_approx(model_, data_, h, cfg_.newton, cfg_.likelihood,
                                              warm_.size() ? &warm_ : nullptr);
            diag_.newton_iterations += r.iterations;
            if (!r.converged) {
                ++diag_.newton_failures;
                // Retry cold before giving up on this theta.
                r = gaussian_approx(model_, data_, h, cfg_.newton, cfg_.likelihood, nullptr);
                diag_.newton_iterations += r.iterations;
                if (!r.converged) return kNegInf;
            }
            warm_ = r.mode;
            const double v = r.log_h + lp;
            if (keep) *keep = std::move(r);
            diag_.trace.emplace_back(th, v);
            return std::isfinite(v) ? v : kNegInf;
        } catch (const InferenceError&) {
            return kNegInf;
        } catch (const ConstraintError&) {
            return kNegInf;
        }
    }

    void set_warm(const Eigen::VectorXd& x) { warm_ = x; }

private:
    const JointModel& model_;
    const ObservationSet& data_;
    const FitConfig& cfg_;
    FitDiagnostics& diag_;
    Eigen::VectorXd lo_, hi_;
    Eigen::VectorXd warm_;
};

struct SimplexResult {
    Eigen::VectorXd x;
    double f = kNegInf;
    bool converged = false;
};

/// Nelder-Mead maximization inside a box (trial points are clamped).
SimplexResult nelder_mead(Objective& obj, const Eigen::VectorXd& x0, double size, double tol, int max_evals) {
    const int k = static_cast<int>(x0.size());
    std::vector<Eigen::VectorXd> v(k + 1, obj.clamp(x0));
    std::vector<double> f(k + 1);
    for (int i = 0; i < k; ++i) {
        Eigen::VectorXd p = v[0];
        p[i] += (p[i] + size <= obj.upper()[i]) ? size : -size;
        v[i + 1] = obj.clamp(p);
    }
    int evals = 0;
    for (int i = 0; i <= k; ++i, ++evals) f[i] = obj.value(v[i]);

    std::vector<int> idx(k + 1);
    SimplexResult out;
    while (evals < max_evals) {
        for (int i = 0; i <= k; ++i) idx[i] = i;
        std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return f[a] > f[b]; });
        const int best = idx[0], worst = idx[k], second = idx[k - 1];
        if (std::isfinite(f[worst]) && f[best] - f[worst] < tol) {
            out.converged = true;
            break;
        }
        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(k);
        for (int i = 0; i < k; ++i) centroid += v[idx[i]];
        centroid /= k;

        const Eigen::VectorXd xr = obj.clamp(centroid + (centroid - v[worst]));
        const double fr = obj.value(xr);
        ++evals;
        if (fr > f[best]) {
            const Eigen::VectorXd xe = obj.clamp(centroid + 2.0 * (centroid - v[worst]));
            const double fe = obj.value(xe);
            ++evals;
            if (fe > fr) {
                v[worst] = xe;
                f[worst] = fe;
            } else {
                v[worst] = xr;
                f[worst] = fr;
            }
            continue;
        }
        if (fr > f[second]) {
            v[worst] = xr;
            f[worst] = fr;
            continue;
        }
        const bool outside = fr > f[worst];
        const Eigen::VectorXd xc =
            outside ? obj.clamp(centroid + 0.5 * (xr - centroid)) : obj.clamp(centroid + 0.5 * (v[worst] - centroid));
        const double fc = obj.value(xc);
        ++evals;
        if (outside ? fc >= fr : fc > f[worst]) {
            v[worst] = xc;
            f[worst] = fc;
            continue;
        }
        for (int i = 1; i <= k; ++i) {
            const int j = idx[i];
            v[j] = obj.clamp(v[best] + 0.5 * (v[j] - v[best]));
            f[j] = obj.value(v[j]);
            ++evals;
        }
    }
    const auto it = std::max_element(f.begin(), f.end());
    out.x = v[static_cast<std::size_t>(it - f.begin())];
    out.f = *it;
    return out;
}

/// Central-difference Hessian of the objective.
Eigen::MatrixXd hessian(Objective& obj, const Eigen::VectorXd& x, double f0, double h) {
    const int k = static_cast<int>(x.size());
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(k, k);
    auto at = [&](int i, double si, int j, double sj) {
        Eigen::VectorXd p = x;
        p[i] += si;
        if (j >= 0) p[j] += sj;
        return obj.value(p);
    };
    for (int i = 0; i < k; ++i) {
        const double fp = at(i, h, -1, 0.0), fm = at(i, -h, -1, 0.0);
        if (std::isfinite(fp) && std::isfinite(fm)) {
            H(i, i) = (fp - 2.0 * f0 + fm) / (h * h);
        } else {
            // At a box face: one-sided second difference.
            const double s = std::isfinite(fp) ? h : -h;
            const double f1 = std::isfinite(fp) ? fp : fm, f2 = at(i, 2.0 * s, -1, 0.0);
            H(i, i) = std::isfinite(f2) && std::isfinite(f1) ? (f2 - 2.0 * f1 + f0) / (h * h) : -1.0;
        }
    }
    for (int i = 0; i < k; ++i) {
        for (int j = i + 1; j < k; ++j) {
            const double fpp = at(i, h, j, h), fpm = at(i, h, j, -h), fmp = at(i, -h, j, h), fmm = at(i, -h, j, -h);
            double v = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
            if (!std::isfinite(v)) v = 0.0;
            H(i, j) = H(j, i) = v;
        }
    }
    return H;
}

/// Corner signs of a two-level design with at most max_rows rows.
std::vector<std::vector<int>> corner_design(int k, int max_rows) {
    int base = k;
    while (base > 0 && (1 << base) > max_rows) --base;
    std::vector<std::vector<int>> generators;  // subsets of base columns for the extra factors
    if (base < k) {
        for (int size = base; size >= 2 && static_cast<int>(generators.size()) < k - base; --size) {
            std::vector<int> sel(base, 0);
            std::fill(sel.begin(), sel.begin() + size, 1);
            do {
                std::vector<int> subset;
                for (int c = 0; c < base; ++c) {
                    if (sel[c]) subset.push_back(c);
                }
                generators.push_back(subset);
                if (static_cast<int>(generators.size()) == k - base) break;
            } while (std::prev_permutation(sel.begin(), sel.end()));
        }
        if (static_cast<int>(generators.size()) < k - base) return {};
    }
    std::vector<std::vector<int>> rows;
    for (int r = 0; r < (1 << base); ++r) {
        std::vector<int> s(k);
        for (int c = 0; c < base; ++c) s[c] = (r >> c) & 1 ? 1 : -1;
        for (int g = 0; g < k - base; ++g) {
            int prod = 1;
            for (int c : generators[g]) prod *= s[c];
            s[base + g] = prod;
        }
        rows.push_back(std::move(s));
    }
    return rows;
}

Eigen::VectorXd stacked_offset(const ObservationSet& data, const LikelihoodSpec& lik) {
    Eigen::VectorXd off(2 * data.cells());
    for (int k = 0; k < 2 * data.cells(); ++k) {
        off[k] = lik.kind == Likelihood::Poisson ? std::log(data.population[k % data.cells()]) : 0.0;
    }
    return off;
}

int pick(const std::vector<GridPoint>& grid, double u) {
    double acc = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        acc += grid[k].weight;
        if (u < acc) return static_cast<int>(k);
    }
    return static_cast<int>(grid.size()) - 1;
}

}  // namespace

double quantile(std::vector<double> values, double p) {
    if (values.empty()) throw std::invalid_argument("quantile of empty sample");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

FitConfig FitConfig::from_json(const std::string& text) {
    FitConfig c;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
        if (!j.is_object()) throw std::invalid_argument("fit config must be an object");
        c.newton.max_iter = j.value("newton_max", c.newton.max_iter);
        c.newton.tol = j.value("newton_tol", c.newton.tol);
        c.simplex_tol = j.value("simplex_tol", c.simplex_tol);
        c.simplex_max_evals = j.value("simplex_max_evals", c.simplex_max_evals);
        c.simplex_restarts = j.value("simplex_restarts", c.simplex_restarts);
        c.hessian_step = j.value("hessian_step", c.hessian_step);
        c.grid_step = j.value("grid_step", c.grid_step);
        c.grid_max_corners = j.value("grid_max_corners", c.grid_max_corners);
        c.weight_truncation = j.value("weight_truncation", c.weight_truncation);
        c.draws = j.value("draws", c.draws);
        c.seed = j.value("seed", c.seed);
        const std::string lik = j.value("likelihood", std::string("poisson"));
        if (lik == "poisson") c.likelihood.kind = Likelihood::Poisson;
        else if (lik == "gaussian") c.likelihood.kind = Likelihood::Gaussian;
        else throw std::invalid_argument("likelihood must be 'poisson' or 'gaussian'");
        c.likelihood.gaussian_variance = j.value("gaussian_variance", c.likelihood.gaussian_variance);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("fit config: ") + e.what());
    }
    if (c.newton.max_iter < 1 || !(c.newton.tol > 0.0) || c.draws < 1 || !(c.grid_step > 0.0)) {
        throw std::invalid_argument("fit config: invalid numeric setting");
    }
    return c;
}

std::string FitConfig::to_json() const {
    nlohmann::ordered_json j;
    j["newton_max"] = newton.max_iter;
    j["newton_tol"] = newton.tol;
    j["simplex_tol"] = simplex_tol;
    j["simplex_max_evals"] = simplex_max_evals;
    j["simplex_restarts"] = simplex_restarts;
    j["hessian_step"] = hessian_step;
    j["grid_step"] = grid_step;
    j["grid_max_corners"] = grid_max_corners;
    j["weight_truncation"] = weight_truncation;
    j["draws"] = draws;
    j["seed"] = seed;
    j["likelihood"] = likelihood.kind == Likelihood::Poisson ? "poisson" : "gaussian";
    j["gaussian_variance"] = likelihood.gaussian_variance;
    return j.dump(2);
}

FitResult fit(const JointModel& model, const ObservationSet& data, const FitConfig& config) {
    if (config.likelihood.kind == Likelihood::Poisson) data.validate();
    if (data.A != model.A() || data.T != model.T()) throw std::invalid_argument("data shape does not match model");
    FitResult fr;
    fr.spec = model.spec();
    fr.layout = model.layout();
    fr.hyper_names = model.hyper_names();
    fr.seed = config.seed;
    fr.log_offset = stacked_offset(data, config.likelihood);
    auto& diag = fr.diagnostics;
    Objective obj(model, data, config, diag);
    const int k = model.n_hyper();

    // 1. Hyperparameter mode.
    Eigen::VectorXd theta;
    double best = kNegInf;
    if (config.fixed_theta) {
        theta = *config.fixed_theta;
        if (theta.size() != k) throw std::invalid_argument("fixed_theta has the wrong length");
        best = obj.value(theta);
        diag.optimizer_converged = std::isfinite(best);
    } else {
        SimplexResult s = nelder_mead(obj, model.initial_theta(), 1.0, config.simplex_tol, config.simplex_max_evals);
        for (int r = 0; r < config.simplex_restarts; ++r) {
            SimplexResult again = nelder_mead(obj, s.x, 0.5, config.simplex_tol, config.simplex_max_evals);
            const bool stalled = again.f - s.f < config.simplex_tol;
            if (again.f > s.f) s = again;
            if (stalled) break;
        }
        theta = s.x;
        best = s.f;
        diag.optimizer_converged = s.converged && std::isfinite(best);
    }
    if (!std::isfinite(best)) throw InferenceError("hyperparameter optimization failed: no finite objective value");
    if (!diag.optimizer_converged) diag.warnings.emplace_back("hyperparameter optimizer did not converge");
    fr.theta_mode = theta;
    fr.hyper_mode = model.hyper(theta);

    std::optional<LaplaceResult> center;
    best = obj.value(theta, &center);
    if (!center) throw InferenceError("Gaussian approximation failed at the hyperparameter mode");
    fr.latent_mode = center->mode;

    // 2. Curvature and exploration grid.
    std::vector<std::pair<Eigen::VectorXd, double>> points;
    std::vector<std::optional<LaplaceResult>> laplace;
    points.emplace_back(theta, best);
    laplace.push_back(center);
    fr.theta_covariance = Eigen::MatrixXd::Zero(k, k);
    double half_logdet_neg_hessian = 0.0;
    if (!config.fixed_theta) {
        const Eigen::MatrixXd H = hessian(obj, theta, best, config.hessian_step);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(-0.5 * (H + H.transpose()));
        Eigen::VectorXd lambda = es.eigenvalues();
        for (Eigen::Index i = 0; i < lambda.size(); ++i) {
            if (!(lambda[i] > 1e-2)) {
                lambda[i] = 1e-2;
                diag.warnings.emplace_back("non-positive curvature along a hyperparameter direction; clipped");
            }
        }
        const Eigen::MatrixXd V = es.eigenvectors();
        fr.theta_covariance = V * lambda.cwiseInverse().asDiagonal() * V.transpose();
        half_logdet_neg_hessian = 0.5 * lambda.array().log().sum();
        const Eigen::MatrixXd scale = V * lambda.cwiseSqrt().cwiseInverse().asDiagonal();

        std::vector<Eigen::VectorXd> zs;
        for (int i = 0; i < k; ++i) {
            for (double m : {-2.0, -1.0, 1.0, 2.0}) {
                Eigen::VectorXd z = Eigen::VectorXd::Zero(k);
                z[i] = m * config.grid_step;
                zs.push_back(z);
            }
        }
        if (k >= 2) {
            for (const auto& row : corner_design(k, config.grid_max_corners)) {
                Eigen::VectorXd z(k);
                for (int i = 0; i < k; ++i) z[i] = row[i] * config.grid_step;
                zs.push_back(z);
            }
        }
        for (const auto& z : zs) {
            obj.set_warm(center->mode);
            const Eigen::VectorXd th = theta + scale * z;
            std::optional<LaplaceResult> lr;
            const double v = obj.value(th, &lr);
            if (std::isfinite(v) && lr) {
                points.emplace_back(th, v);
                laplace.push_back(std::move(lr));
            }
        }
    }
    diag.grid_points = static_cast<int>(points.size());
    diag.log_marginal_likelihood =
        best + 0.5 * k * std::log(2.0 * std::numbers::pi) - half_logdet_neg_hessian;

    // 3. Weights with truncation.
    double vmax = kNegInf;
    for (const auto& p : points) vmax = std::max(vmax, p.second);
    std::vector<double> w(points.size());
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) total += (w[i] = std::exp(points[i].second - vmax));
    for (auto& x : w) x /= total;
    total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (w[i] < config.weight_truncation) w[i] = 0.0;
        total += w[i];
    }
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (w[i] == 0.0) continue;
        GridPoint g;
        g.theta = points[i].first;
        g.log_posterior = points[i].second;
        g.weight = w[i] / total;
        g.mode = laplace[i]->mode;
        g.posterior = laplace[i]->posterior;
        g.variance = g.posterior->marginal_variances();
        diag.max_constraint_residual = std::max(diag.max_constraint_residual, laplace[i]->constraint_residual);
        fr.grid.push_back(std::move(g));
    }
    // Exact renormalization so the weights sum to one to rounding.
    {
        double s = 0.0;
        for (const auto& g : fr.grid) s += g.weight;
        for (auto& g : fr.grid) g.weight /= s;
    }
    diag.grid_retained = static_cast<int>(fr.grid.size());
    diag.degenerate_grid = !config.fixed_theta && fr.grid.size() == 1;
    if (diag.degenerate_grid) diag.warnings.emplace_back("all grid weight on a single point");

    // 4. Latent marginals as a weighted mixture.
    const int n = model.dim();
    fr.latent_mean = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd second = Eigen::VectorXd::Zero(n);
    for (const auto& g : fr.grid) {
        fr.latent_mean += g.weight * g.mode;
        second += g.weight * (g.variance + g.mode.cwiseProduct(g.mode));
    }
    fr.latent_sd = (second - fr.latent_mean.cwiseProduct(fr.latent_mean)).cwiseMax(0.0).cwiseSqrt();

    // 5. Hyperparameter summaries (Gaussian on the internal scale for quantiles).
    for (int i = 0; i < k; ++i) {
        HyperSummary hs;
        hs.name = fr.hyper_names[i].substr(4);
        hs.mode = std::exp(theta[i]);
        double m1 = 0.0, m2 = 0.0;
        for (const auto& g : fr.grid) {
            const double v = std::exp(g.theta[i]);
            m1 += g.weight * v;
            m2 += g.weight * v * v;
        }
        hs.mean = m1;
        hs.sd = std::sqrt(std::max(0.0, m2 - m1 * m1));
        const double sd = std::sqrt(std::max(0.0, fr.theta_covariance(i, i)));
        hs.q025 = std::exp(theta[i] - 1.959963984540054 * sd);
        hs.q500 = std::exp(theta[i]);
        hs.q975 = std::exp(theta[i] + 1.959963984540054 * sd);
        fr.hyper_summary.push_back(hs);
    }

    // 6. Posterior draws of per-cell log-means and rate quantiles.
    const PosteriorDraws pd = posterior_draws(fr, config.draws, config.seed);
    const int m = 2 * data.cells();
    fr.predictive_store.resize(config.draws, m);
    fr.draw_grid_index = pd.grid_index;
    std::vector<SpMat> designs;
    for (const auto& g : fr.grid) designs.push_back(model.design(model.hyper(g.theta)));
    for (int j = 0; j < config.draws; ++j) {
        const Eigen::VectorXd eta = designs[pd.grid_index[j]] * pd.latent.row(j).transpose();
        fr.predictive_store.row(j) = (eta + fr.log_offset).transpose();
    }
    fr.rate_quantiles.resize(m, 3);
    std::vector<double> col(config.draws);
    for (int c = 0; c < m; ++c) {
        for (int j = 0; j < config.draws; ++j) col[j] = std::exp(fr.predictive_store(j, c) - fr.log_offset[c]);
        fr.rate_quantiles(c, 0) = quantile(col, 0.025);
        fr.rate_quantiles(c, 1) = quantile(col, 0.5);
        fr.rate_quantiles(c, 2) = quantile(col, 0.975);
    }
    return fr;
}

PosteriorDraws posterior_draws(const FitResult& fr, int n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("posterior_draws: n must be positive");
    if (fr.grid.empty()) throw std::invalid_argument("posterior_draws: empty grid");
    PosteriorDraws out;
    const int dim = static_cast<int>(fr.grid.front().mode.size());
    const int k = static_cast<int>(fr.grid.front().theta.size());
    out.latent.resize(n, dim);
    out.theta.resize(n, k);
    out.grid_index.resize(n);
    Rng rng = Rng::derive(seed, {kDrawStream});
    for (int j = 0; j < n; ++j) {
        const int g = pick(fr.grid, rng.uniform());
        out.grid_index[j] = g;
        out.theta.row(j) = fr.grid[g].theta.transpose();
        out.latent.row(j) = (fr.grid[g].mode + fr.grid[g].posterior->sample(rng)).transpose();
    }
    return out;
}

}  // namespace stshared
