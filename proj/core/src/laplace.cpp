#include <cmath>
#include <algorithm>
#include <limits>
#include <numbers>

#include "stshared/inference.hpp"

namespace stshared {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Observation-side quantities shared across Newton iterations.
struct Likelihood1D {
    Eigen::VectorXd y;       // stacked counts (0 where missing)
    Eigen::VectorXd mask;    // 1 observed, 0 missing
    Eigen::VectorXd offset;  // log population or 0
    Eigen::VectorXd constant;
    LikelihoodSpec spec;

    Likelihood1D(const ObservationSet& data, const LikelihoodSpec& lik) : spec(lik) {
        const int n = 2 * data.cells();
        const Eigen::VectorXd o = data.stacked_counts();
        y.resize(n);
        mask.resize(n);
        offset.resize(n);
        constant.resize(n);
        for (int k = 0; k < n; ++k) {
            const bool seen = !std::isnan(o[k]);
            y[k] = seen ? o[k] : 0.0;
            mask[k] = seen ? 1.0 : 0.0;
            if (lik.kind == Likelihood::Poisson) {
                offset[k] = std::log(data.population[k % data.cells()]);
                constant[k] = seen ? -std::lgamma(o[k] + 1.0) : 0.0;
            } else {
                offset[k] = 0.0;
                constant[k] = seen ? -0.5 * std::log(2.0 * std::numbers::pi * lik.gaussian_variance) : 0.0;
            }
        }
    }

    double value(const Eigen::VectorXd& eta) const {
        double s = 0.0;
        if (spec.kind == Likelihood::Poisson) {
            for (Eigen::Index k = 0; k < eta.size(); ++k) {
                if (mask[k] == 0.0) continue;
                const double lm = offset[k] + eta[k];
                s += y[k] * lm - std::exp(lm) + constant[k];
            }
        } else {
            for (Eigen::Index k = 0; k < eta.size(); ++k) {
                if (mask[k] == 0.0) continue;
                const double r = y[k] - eta[k];
                s += -0.5 * r * r / spec.gaussian_variance + constant[k];
            }
        }
        return s;
    }

    /// First derivative and negative second derivative with respect to eta.
    void derivatives(const Eigen::VectorXd& eta, Eigen::VectorXd& d1, Eigen::VectorXd& w) const {
        d1.resize(eta.size());
        w.resize(eta.size());
        for (Eigen::Index k = 0; k < eta.size(); ++k) {
            if (mask[k] == 0.0) {
                d1[k] = 0.0;
                w[k] = 0.0;
            } else if (spec.kind == Likelihood::Poisson) {
                const double mu = std::exp(offset[k] + eta[k]);
                d1[k] = y[k] - mu;
                w[k] = mu;
            } else {
                d1[k] = (y[k] - eta[k]) / spec.gaussian_variance;
                w[k] = 1.0 / spec.gaussian_variance;
            }
        }
    }
};

SparseFactor factor_or_throw(const SpMat& m, const Ordering& ord, int* jitter) {
    try {
        return factorize_with_jitter(m, ord, jitter);
    } catch (const NotPositiveDefinite& e) {
        throw InferenceError(std::string("factorization failed: ") + e.what());
    }
}

}  // namespace

Eigen::VectorXd log_likelihood_terms(const ObservationSet& data, const Eigen::VectorXd& eta, const LikelihoodSpec& lik) {
    const Likelihood1D l(data, lik);
    if (eta.size() != l.y.size()) throw std::invalid_argument("log_likelihood_terms: size mismatch");
    Eigen::VectorXd out(eta.size());
    for (Eigen::Index k = 0; k < eta.size(); ++k) {
        if (l.mask[k] == 0.0) {
            out[k] = 0.0;
        } else if (lik.kind == Likelihood::Poisson) {
            const double lm = l.offset[k] + eta[k];
            out[k] = l.y[k] * lm - std::exp(lm) + l.constant[k];
        } else {
            const double r = l.y[k] - eta[k];
            out[k] = -0.5 * r * r / lik.gaussian_variance + l.constant[k];
        }
    }
    return out;
}

LaplaceResult gaussian_approx(const JointModel& model, const ObservationSet& data, const HyperParams& h,
                              const NewtonOptions& options, const LikelihoodSpec& lik, const Eigen::VectorXd* start) {
    if (data.A != model.A() || data.T != model.T()) throw std::invalid_argument("data shape does not match model");
    const Likelihood1D like(data, lik);
    const SpMat q = model.prior_precision(h);
    const SpMat a = model.design(h);
    const SpMat at = a.transpose();
    const ConstraintSet& c = model.constraints();
    // Interaction kernels are seen by the likelihood when every count is
    // observed; augmenting them anyway would densify the factor.
    const bool augment_interaction = data.missing() > 0;
    const SpMat& gram = model.constraint_gram(augment_interaction);
    const Ordering& ord = model.ordering(augment_interaction);
    const int n = model.dim();

    // Orthogonal projector onto {C d = 0} for the convergence test.
    const Eigen::MatrixXd& cr = c.rows();
    Eigen::LLT<Eigen::MatrixXd> cct;
    if (!c.empty()) cct.compute(cr * cr.transpose());
    auto project_gradient = [&](const Eigen::VectorXd& g) -> Eigen::VectorXd {
        if (c.empty()) return g;
        return g - cr.transpose() * cct.solve(cr * g);
    };

    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    if (start != nullptr && start->size() == n) {
        x = *start;
    } else {
        const auto& lay = model.layout();
        const int cells = data.cells();
        for (int d = 0; d < 2; ++d) {
            double so = 0.0, sn = 0.0, cnt = 0.0;
            for (int k = 0; k < cells; ++k) {
                const int r = d * cells + k;
                if (like.mask[r] == 0.0) continue;
                so += like.y[r];
                sn += std::exp(like.offset[r]);
                cnt += 1.0;
            }
            double init = 0.0;
            if (cnt == 0.0) init = 0.0;
            else if (lik.kind == Likelihood::Poisson) init = std::log((so + 0.5) / sn);
            else if (cnt > 0.0) init = so / cnt;
            x[lay.alpha + d] = init;
        }
    }

    x = project_gradient(x);

    auto objective = [&](const Eigen::VectorXd& v, double* loglik) {
        const Eigen::VectorXd eta = a * v;
        const double ll = like.value(eta);
        if (loglik) *loglik = ll;
        const double f = ll - 0.5 * v.dot(q * v);
        return std::isfinite(f) ? f : kNegInf;
    };

    LaplaceResult res;
    Eigen::VectorXd d1, w;
    std::shared_ptr<const ConstrainedFactor> cf;
    double loglik = 0.0;
    for (int it = 0;; ++it) {
        const Eigen::VectorXd eta = a * x;
        like.derivatives(eta, d1, w);
        SpMat p = q + SpMat(at * w.asDiagonal() * a);
        const double wgt = augmentation_weight(p);
        if (!c.empty()) p += wgt * gram;
        int jitter = 0;
        auto factor = std::make_shared<const SparseFactor>(factor_or_throw(p, ord, &jitter));
        res.jitter_steps = std::max(res.jitter_steps, jitter);
        cf = std::make_shared<const ConstrainedFactor>(factor, c);
        const Eigen::VectorXd g = at * d1 - q * x;
        const Eigen::VectorXd pg = project_gradient(g);
        res.gradient_norm = pg.lpNorm<Eigen::Infinity>();
        res.iterations = it;
        if (res.gradient_norm < options.tol) {
            res.converged = true;
            break;
        }
        if (it >= options.max_iter) break;

        const Eigen::VectorXd step = cf->constrained_solve(g);
        const double f0 = objective(x, nullptr);
        const double decrement = g.dot(step);
        // Remaining ascent below working precision of the objective.
        if (decrement <= 1e-13 * std::max(1.0, std::abs(f0))) {
            res.converged = true;
            break;
        }
        double s = 1.0;
        bool moved = false;
        for (int half = 0; half < 40; ++half, s *= 0.5) {
            const Eigen::VectorXd xn = x + s * step;
            const double fn = objective(xn, nullptr);
            if (fn >= f0) {
                x = xn;
                moved = true;
                break;
            }
        }
        if (!moved) {
            // No ascent possible at working precision: the remaining gradient is roundoff.
            res.converged = decrement <= 1e-10 * std::max(1.0, std::abs(f0));
            break;
        }
    }

    // Removes roundoff drift off the constraint subspace.
    x = project_gradient(x);
    res.mode = x;
    res.posterior = cf;
    const double f = objective(x, &loglik);
    res.log_likelihood = loglik;
    res.constraint_residual = c.empty() ? 0.0 : c.residual(x).lpNorm<Eigen::Infinity>();

    // Prior normalization on the constraint subspace.
    const double half_ld_prior = 0.5 * model.log_det_prior_subspace(h);
    res.half_log_det_prior = half_ld_prior;
    res.log_h = f + half_ld_prior - 0.5 * cf->log_det_subspace();
    return res;
}

}  // namespace stshared
