#include <algorithm>
#include <cmath>
#include <limits>

#include "stshared/inference.hpp"
#include "stshared/rng.hpp"

namespace stshared {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Everything that depends on theta alone.
struct ThetaState {
    Eigen::VectorXd theta;
    HyperParams h;
    SpMat q;
    SpMat a;
    double log_prior = kNegInf;
    double half_ld_prior = 0.0;
    LaplaceResult lap;
    Eigen::VectorXd w_hat;  // likelihood curvature at the Laplace mode
};

class Target {
public:
    Target(const JointModel& m, const ObservationSet& d, const McmcConfig& cfg)
        : model_(m), data_(d), cfg_(cfg), lik_(cfg.likelihood) {
        offset_.resize(2 * d.cells());
        for (int k = 0; k < 2 * d.cells(); ++k) {
            offset_[k] = lik_.kind == Likelihood::Poisson ? std::log(d.population[k % d.cells()]) : 0.0;
        }
        mask_ = d.stacked_counts().array().isNaN().select(Eigen::VectorXd::Zero(2 * d.cells()), 1.0);
    }

    bool build(const Eigen::VectorXd& theta, const Eigen::VectorXd* warm, ThetaState& s) const {
        auto [lo, hi] = model_.theta_bounds();
        if ((theta.array() < lo.array()).any() || (theta.array() > hi.array()).any()) return false;
        s.theta = theta;
        s.log_prior = model_.log_hyper_prior(theta);
        if (!std::isfinite(s.log_prior)) return false;
        s.h = model_.hyper(theta);
        s.q = model_.prior_precision(s.h);
        s.a = model_.design(s.h);
        try {
            s.lap = gaussian_approx(model_, data_, s.h, cfg_.newton, lik_, warm);
        } catch (const InferenceError&) {
            return false;
        }
        if (!s.lap.converged) return false;
        s.half_ld_prior = s.lap.half_log_det_prior;
        s.w_hat = curvature(s.a * s.lap.mode);
        return true;
    }

    double log_lik(const ThetaState& s, const Eigen::VectorXd& x) const {
        return log_likelihood_terms(data_, s.a * x, lik_).sum();
    }

    Eigen::VectorXd gradient(const ThetaState& s, const Eigen::VectorXd& x) const {
        const Eigen::VectorXd eta = s.a * x;
        Eigen::VectorXd d1(eta.size());
        const Eigen::VectorXd y = data_.stacked_counts();
        for (Eigen::Index k = 0; k < eta.size(); ++k) {
            if (mask_[k] == 0.0) d1[k] = 0.0;
            else if (lik_.kind == Likelihood::Poisson) d1[k] = y[k] - std::exp(offset_[k] + eta[k]);
            else d1[k] = (y[k] - eta[k]) / lik_.gaussian_variance;
        }
        return s.a.transpose() * d1 - s.q * x;
    }

    /// log p(x | theta) on the constraint subspace, up to a theta-free constant.
    double log_latent_prior(const ThetaState& s, const Eigen::VectorXd& x) const {
        return s.half_ld_prior - 0.5 * x.dot(s.q * x);
    }

    /// Quadratic form of the Laplace precision Q + A'W^A.
    double laplace_quad(const ThetaState& s, const Eigen::VectorXd& v) const {
        const Eigen::VectorXd av = s.a * v;
        return v.dot(s.q * v) + (s.w_hat.array() * av.array().square()).sum();
    }

    /// log density of the Gaussian approximation at theta (same constant convention).
    double log_gaussian(const ThetaState& s, const Eigen::VectorXd& x) const {
        return 0.5 * s.lap.posterior->log_det_subspace() - 0.5 * laplace_quad(s, x - s.lap.mode);
    }

private:
    Eigen::VectorXd curvature(const Eigen::VectorXd& eta) const {
        Eigen::VectorXd w(eta.size());
        for (Eigen::Index k = 0; k < eta.size(); ++k) {
            if (mask_[k] == 0.0) w[k] = 0.0;
            else if (lik_.kind == Likelihood::Poisson) w[k] = std::exp(offset_[k] + eta[k]);
            else w[k] = 1.0 / lik_.gaussian_variance;
        }
        return w;
    }

    const JointModel& model_;
    const ObservationSet& data_;
    const McmcConfig& cfg_;
    LikelihoodSpec lik_;
    Eigen::VectorXd offset_;
    Eigen::VectorXd mask_;
};

ObservationSet without_counts(const ObservationSet& d) {
    ObservationSet e = ObservationSet::empty(d.A, d.T);
    e.population = d.population;
    return e;
}

}  // namespace

double effective_sample_size(const Eigen::VectorXd& chain) {
    const Eigen::Index n = chain.size();
    if (n < 4) return static_cast<double>(n);
    const Eigen::VectorXd c = chain.array() - chain.mean();
    const double var0 = c.squaredNorm() / static_cast<double>(n);
    if (!(var0 > 0.0)) return static_cast<double>(n);
    auto rho = [&](Eigen::Index lag) {
        return c.head(n - lag).dot(c.tail(n - lag)) / (static_cast<double>(n) * var0);
    };
    // Geyer: sums of adjacent autocorrelation pairs, truncated at the first
    // non-positive pair and forced monotone.
    double sum = 0.0;
    double prev = std::numeric_limits<double>::infinity();
    for (Eigen::Index m = 0; 2 * m + 1 < n; ++m) {
        double pair = rho(2 * m) + rho(2 * m + 1);
        if (pair <= 0.0) break;
        pair = std::min(pair, prev);
        prev = pair;
        sum += pair;
    }
    const double tau = std::max(1.0, -1.0 + 2.0 * sum);
    return static_cast<double>(n) / tau;
}

McmcResult mcmc_oracle(const JointModel& model, const ObservationSet& data_in, const McmcConfig& cfg) {
    if (static_cast<std::size_t>(model.dim()) > cfg.max_latent) {
        throw std::invalid_argument("mcmc_oracle: latent dimension " + std::to_string(model.dim()) +
                                    " exceeds the size guard of " + std::to_string(cfg.max_latent));
    }
    if (cfg.draws < 1 || cfg.burn_in < 0) throw std::invalid_argument("mcmc_oracle: invalid chain length");
    const ObservationSet data = cfg.prior_only ? without_counts(data_in) : data_in;
    const Target target(model, data, cfg);
    const int k = model.n_hyper();
    const int n = model.dim();
    Rng rng = Rng::derive(cfg.seed, {0x6d636d63});

    ThetaState cur;
    Eigen::VectorXd th0 = cfg.fixed_theta ? *cfg.fixed_theta : (cfg.initial_theta ? *cfg.initial_theta
                                                                                  : model.initial_theta());
    if (!target.build(th0, nullptr, cur)) throw InferenceError("mcmc_oracle: invalid starting hyperparameters");
    Eigen::VectorXd x = cur.lap.mode;
    double ll = target.log_lik(cur, x);

    Eigen::MatrixXd cov = cfg.proposal_covariance ? *cfg.proposal_covariance
                                                  : Eigen::MatrixXd(0.09 * Eigen::MatrixXd::Identity(k, k));
    Eigen::MatrixXd chol = Eigen::LLT<Eigen::MatrixXd>(cov).matrixL();
    double rw_scale = 1.0;
    double eps = 1.0;

    McmcResult res;
    if (cfg.keep_draws) {
        res.latent.resize(cfg.draws, n);
        res.theta.resize(cfg.draws, k);
    }
    Eigen::VectorXd sum_x = Eigen::VectorXd::Zero(n), sum_t = Eigen::VectorXd::Zero(k);
    std::vector<Eigen::VectorXd> burn_thetas;
    long joint_try = 0, joint_acc = 0, mala_try = 0, mala_acc = 0;
    long window_joint_try = 0, window_joint_acc = 0, window_mala_try = 0, window_mala_acc = 0;

    const int total = cfg.burn_in + cfg.draws;
    for (int it = 0; it < total; ++it) {
        const bool burning = it < cfg.burn_in;

        // Joint move: theta' by random walk, x' from the Gaussian approximation at theta'.
        {
            Eigen::VectorXd prop = cur.theta;
            if (!cfg.fixed_theta) {
                Eigen::VectorXd xi(k);
                for (int i = 0; i < k; ++i) xi[i] = rng.normal();
                prop += rw_scale * chol * xi;
            }
            ThetaState next;
            ++joint_try;
            ++window_joint_try;
            const bool ok = cfg.fixed_theta ? (next = cur, true) : target.build(prop, &cur.lap.mode, next);
            if (ok) {
                const Eigen::VectorXd xn = next.lap.mode + next.lap.posterior->sample(rng);
                const double lln = target.log_lik(next, xn);
                const double log_new = lln + target.log_latent_prior(next, xn) + next.log_prior;
                const double log_old = ll + target.log_latent_prior(cur, x) + cur.log_prior;
                const double log_ratio =
                    log_new - log_old + target.log_gaussian(cur, x) - target.log_gaussian(next, xn);
                if (std::isfinite(log_ratio) && std::log(rng.uniform()) < log_ratio) {
                    cur = std::move(next);
                    x = xn;
                    ll = lln;
                    ++joint_acc;
                    ++window_joint_acc;
                }
            }
        }

        // Preconditioned MALA on x at fixed theta.
        const ConstrainedFactor& pre = *cur.lap.posterior;
        for (int m = 0; m < cfg.mala_steps; ++m) {
            ++mala_try;
            ++window_mala_try;
            const Eigen::VectorXd g = target.gradient(cur, x);
            const Eigen::VectorXd drift = pre.constrained_solve(g);
            const Eigen::VectorXd xn = pre.project(x + 0.5 * eps * eps * drift + eps * pre.sample(rng));
            const Eigen::VectorXd gn = target.gradient(cur, xn);
            const Eigen::VectorXd driftn = pre.constrained_solve(gn);
            const double lln = target.log_lik(cur, xn);
            const double fwd = -target.laplace_quad(cur, xn - x - 0.5 * eps * eps * drift) / (2.0 * eps * eps);
            const double bwd = -target.laplace_quad(cur, x - xn - 0.5 * eps * eps * driftn) / (2.0 * eps * eps);
            const double log_ratio = lln + target.log_latent_prior(cur, xn) - ll - target.log_latent_prior(cur, x) +
                                     bwd - fwd;
            if (std::isfinite(log_ratio) && std::log(rng.uniform()) < log_ratio) {
                x = xn;
                ll = lln;
                ++mala_acc;
                ++window_mala_acc;
            }
        }

        if (burning) {
            if (!cfg.fixed_theta) burn_thetas.push_back(cur.theta);
            if ((it + 1) % 100 == 0) {
                const double ja = static_cast<double>(window_joint_acc) / std::max(1L, window_joint_try);
                const double ma = static_cast<double>(window_mala_acc) / std::max(1L, window_mala_try);
                rw_scale *= std::exp(ja - 0.25);
                eps = std::clamp(eps * std::exp(ma - 0.57), 0.05, 2.0);
                window_joint_try = window_joint_acc = window_mala_try = window_mala_acc = 0;
                if (!cfg.fixed_theta && (it + 1) == cfg.burn_in / 2 && burn_thetas.size() > static_cast<std::size_t>(10 * k)) {
                    Eigen::MatrixXd t(burn_thetas.size() / 2, k);
                    for (Eigen::Index r = 0; r < t.rows(); ++r) t.row(r) = burn_thetas[burn_thetas.size() / 2 + r];
                    const Eigen::MatrixXd cen = t.rowwise() - t.colwise().mean();
                    Eigen::MatrixXd emp = cen.transpose() * cen / std::max<Eigen::Index>(1, t.rows() - 1);
                    emp += 1e-6 * Eigen::MatrixXd::Identity(k, k);
                    Eigen::LLT<Eigen::MatrixXd> llt(emp * (2.38 * 2.38 / k));
                    if (llt.info() == Eigen::Success) {
                        chol = llt.matrixL();
                        rw_scale = 1.0;
                    }
                }
            }
            if (it + 1 == cfg.burn_in) joint_try = joint_acc = mala_try = mala_acc = 0;
            continue;
        }
        const int j = it - cfg.burn_in;
        sum_x += x;
        sum_t += cur.theta;
        if (cfg.keep_draws) {
            res.latent.row(j) = x.transpose();
            res.theta.row(j) = cur.theta.transpose();
        }
    }

    res.latent_mean = sum_x / cfg.draws;
    res.theta_mean = sum_t / cfg.draws;
    res.joint_acceptance = static_cast<double>(joint_acc) / std::max(1L, joint_try);
    res.mala_acceptance = static_cast<double>(mala_acc) / std::max(1L, mala_try);
    if (cfg.keep_draws) {
        res.latent_ess.resize(n);
        res.latent_mcse.resize(n);
        for (int i = 0; i < n; ++i) {
            const Eigen::VectorXd col = res.latent.col(i);
            const double ess = effective_sample_size(col);
            const double sd = std::sqrt((col.array() - col.mean()).square().sum() / std::max(1, cfg.draws - 1));
            res.latent_ess[i] = ess;
            res.latent_mcse[i] = sd / std::sqrt(ess);
        }
        res.theta_ess.resize(k);
        res.theta_mcse.resize(k);
        for (int i = 0; i < k; ++i) {
            const Eigen::VectorXd col = res.theta.col(i);
            const double ess = effective_sample_size(col);
            const double sd = std::sqrt((col.array() - col.mean()).square().sum() / std::max(1, cfg.draws - 1));
            res.theta_ess[i] = ess;
            res.theta_mcse[i] = sd / std::sqrt(ess);
        }
    }
    auto check = [&](double rate, const char* what) {
        if (rate < 0.1 || rate > 0.8) {
            res.warnings.push_back(std::string(what) + " acceptance rate " + std::to_string(rate) +
                                   " outside [0.1, 0.8]");
        }
    };
    if (!cfg.fixed_theta) check(res.joint_acceptance, "joint");
    check(res.mala_acceptance, "MALA");
    return res;
}

}  // namespace stshared
