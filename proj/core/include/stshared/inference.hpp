#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "stshared/gmrf.hpp"
#include "stshared/model.hpp"
#include "stshared/observations.hpp"

namespace stshared {

enum class Likelihood {
    Poisson,   ///< O ~ Poisson(n exp(eta))
    Gaussian,  ///< O ~ N(eta, variance); test surrogate, populations ignored
};

struct LikelihoodSpec {
    Likelihood kind = Likelihood::Poisson;
    double gaussian_variance = 1.0;
};

/// Per-cell log p(O | eta) for stacked (incidence, mortality) predictors;
/// NaN counts give 0.
Eigen::VectorXd log_likelihood_terms(const ObservationSet& data, const Eigen::VectorXd& eta,
                                     const LikelihoodSpec& lik = {});

struct NewtonOptions {
    int max_iter = 50;
    double tol = 1e-8;  ///< projected gradient infinity norm
};

class InferenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Gaussian approximation of the latent field at fixed hyperparameters.
struct LaplaceResult {
    Eigen::VectorXd mode;
    /// Factor of Q + A'WA + w C'C at the mode, with the constraints attached.
    std::shared_ptr<const ConstrainedFactor> posterior;
    /// log p(y | x^) + log p(x^ | h) - log p_G(x^ | y, h), with the improper
    /// prior normalized on the constraint subspace (Lebesgue measure there,
    /// up to a constant shared by all h).
    double log_h = 0.0;
    double log_likelihood = 0.0;
    /// (1/2) log det of the prior precision restricted to the constraint subspace.
    double half_log_det_prior = 0.0;
    int iterations = 0;
    bool converged = false;
    double gradient_norm = 0.0;
    double constraint_residual = 0.0;
    int jitter_steps = 0;
};

LaplaceResult gaussian_approx(const JointModel& model, const ObservationSet& data, const HyperParams& h,
                              const NewtonOptions& options = {}, const LikelihoodSpec& lik = {},
                              const Eigen::VectorXd* start = nullptr);

struct FitConfig {
    NewtonOptions newton;
    double simplex_tol = 1e-6;
    int simplex_max_evals = 3000;
    int simplex_restarts = 3;
    double hessian_step = 0.1;
    /// Grid spacing in standardized (Hessian-whitened) units; axial points at
    /// +-step and +-2 step, corners at +-step.
    double grid_step = 1.0;
    int grid_max_corners = 64;
    double weight_truncation = 1e-4;
    int draws = 1000;
    std::uint64_t seed = 1;
    LikelihoodSpec likelihood;
    /// Skip the hyperparameter search and condition on this internal theta.
    std::optional<Eigen::VectorXd> fixed_theta;

    /// JSON with keys newton_max, newton_tol, simplex_tol, grid_step, draws, seed, ...
    static FitConfig from_json(const std::string& text);
    std::string to_json() const;
};

struct GridPoint {
    Eigen::VectorXd theta;
    double log_posterior = 0.0;
    double weight = 0.0;
    Eigen::VectorXd mode;
    Eigen::VectorXd variance;
    std::shared_ptr<const ConstrainedFactor> posterior;
};

struct HyperSummary {
    std::string name;  ///< natural-scale name, e.g. "tau_kappa", "rho_2"
    double mode = 0.0;
    double mean = 0.0;
    double sd = 0.0;
    double q025 = 0.0;
    double q500 = 0.0;
    double q975 = 0.0;
};

struct FitDiagnostics {
    int objective_evaluations = 0;
    int newton_iterations = 0;
    int newton_failures = 0;
    bool optimizer_converged = false;
    int grid_points = 0;
    int grid_retained = 0;
    bool degenerate_grid = false;
    double max_constraint_residual = 0.0;
    double log_marginal_likelihood = 0.0;
    std::vector<std::string> warnings;
    std::vector<std::pair<Eigen::VectorXd, double>> trace;  ///< optimizer (theta, objective) history
};

struct FitResult {
    ModelSpec spec;
    LatentLayout layout;
    std::vector<std::string> hyper_names;
    Eigen::VectorXd theta_mode;
    HyperParams hyper_mode;
    Eigen::MatrixXd theta_covariance;  ///< inverse negative Hessian at the mode
    std::vector<GridPoint> grid;       ///< retained points, weights sum to 1
    std::vector<HyperSummary> hyper_summary;
    Eigen::VectorXd latent_mean;
    Eigen::VectorXd latent_sd;
    /// Mode of the latent field at the hyperparameter mode.
    Eigen::VectorXd latent_mode;
    /// Rows: incidence cells then mortality cells; columns 2.5%, 50%, 97.5% of r.
    Eigen::MatrixXd rate_quantiles;
    /// draws x 2TA posterior draws of per-cell log-means log(n) + eta.
    Eigen::MatrixXd predictive_store;
    /// Stacked log populations (0 for the Gaussian surrogate).
    Eigen::VectorXd log_offset;
    std::vector<int> draw_grid_index;
    std::uint64_t seed = 0;
    FitDiagnostics diagnostics;
};

FitResult fit(const JointModel& model, const ObservationSet& data, const FitConfig& config = {});

struct PosteriorDraws {
    Eigen::MatrixXd latent;  ///< n x dim
    Eigen::MatrixXd theta;   ///< n x n_hyper
    std::vector<int> grid_index;
};

/// Joint draws from the grid mixture; deterministic per seed.
PosteriorDraws posterior_draws(const FitResult& fr, int n, std::uint64_t seed);

/// Type-7 (linear interpolation) sample quantile.
double quantile(std::vector<double> values, double p);

struct McmcConfig {
    int draws = 200000;
    int burn_in = 5000;
    std::uint64_t seed = 1;
    bool prior_only = false;
    std::optional<Eigen::VectorXd> fixed_theta;
    /// Starting point and random-walk covariance for theta (defaults: the
    /// model's initial theta and 0.3^2 I); adapted during burn-in.
    std::optional<Eigen::VectorXd> initial_theta;
    std::optional<Eigen::MatrixXd> proposal_covariance;
    LikelihoodSpec likelihood;
    NewtonOptions newton{30, 1e-9};
    int mala_steps = 1;
    bool keep_draws = true;
    std::size_t max_latent = 2000;
};

struct McmcResult {
    Eigen::MatrixXd latent;  ///< kept draws (empty unless keep_draws)
    Eigen::MatrixXd theta;
    Eigen::VectorXd latent_mean;
    Eigen::VectorXd latent_mcse;
    Eigen::VectorXd latent_ess;
    Eigen::VectorXd theta_mean;
    Eigen::VectorXd theta_mcse;
    Eigen::VectorXd theta_ess;
    double joint_acceptance = 0.0;
    double mala_acceptance = 0.0;
    std::vector<std::string> warnings;
};

/// Metropolis-within-Gibbs reference sampler for small problems: a joint
/// (theta, x) block move (random-walk theta, x from the Gaussian
/// approximation at the proposed theta) followed by preconditioned MALA
/// steps on x, each with an exact Metropolis-Hastings correction.
McmcResult mcmc_oracle(const JointModel& model, const ObservationSet& data, const McmcConfig& config = {});

/// Effective sample size of a chain (Geyer initial monotone sequence).
double effective_sample_size(const Eigen::VectorXd& chain);

}  // namespace stshared
