#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stshared/graph.hpp"
#include "stshared/inference.hpp"
#include "stshared/model.hpp"
#include "stshared/observations.hpp"
#include "stshared/scoring.hpp"

namespace stshared {

/// Truth configuration of a simulation scenario.
///   1: independent interactions (tau_chi_I, tau_chi_M)
///   2: shared interaction with one scaling rho
///   3: shared interaction with block-wise scalings
struct Scenario {
    int id = 1;
    InteractionType interaction = InteractionType::I;
    double alpha_i = -8.9;
    double alpha_m = -9.3;
    double delta = 0.9;
    double tau_kappa = 35.7;
    double tau_gamma_i = 200.0;
    double tau_gamma_m = 120.0;
    double tau_chi_i = 400.0;
    double tau_chi_m = 550.0;
    double tau_chi = 80.0;
    ScalingBlocks blocks{{1}};
    std::vector<double> rho;

    /// Reference values; scenario 3 uses m = (3, 3, 3) when T = 9 and three
    /// near-equal blocks otherwise.
    static Scenario standard(int id, InteractionType interaction, int T);
    /// Model label ("1", "2" or "3") that generated the data.
    std::string true_model() const;
};

struct Truth {
    Eigen::VectorXd kappa;    ///< A
    Eigen::VectorXd gamma_i;  ///< T
    Eigen::VectorXd gamma_m;  ///< T
    Eigen::VectorXd chi_i;    ///< TA, interaction entering eta_I
    Eigen::VectorXd chi_m;    ///< TA, interaction entering eta_M
    Eigen::VectorXd rate_i;   ///< TA
    Eigen::VectorXd rate_m;   ///< TA
};

/// Draws kappa, gamma and the interaction(s) from their constrained priors
/// and assembles the rate fields. `zero_effects` keeps only the intercepts.
Truth generate_truth(const Scenario& s, const AdjacencyGraph& graph, int T, std::uint64_t seed,
                     bool zero_effects = false);

/// O ~ Poisson(n r) independently; rejects means above 1e12.
ObservationSet simulate_counts(const Eigen::VectorXd& rate_i, const Eigen::VectorXd& rate_m,
                               const Eigen::VectorXd& population, int A, int T, std::uint64_t seed);

/// Per-area populations, log-uniform on [lo, hi] and constant over periods (length T*A).
Eigen::VectorXd synth_populations(int A, int T, std::uint64_t seed, double lo = 9544.0, double hi = 1065000.0);

/// Reads `area,population` rows (one per area).
Eigen::VectorXd read_population_file(const std::string& path, int A, int T);

struct StudyConfig {
    std::string graph_file;        ///< empty: use `grid`
    std::string grid = "5x5";
    int T = 9;
    int replicates = 20;
    std::string population_file;   ///< empty: synthetic
    std::vector<std::string> models = {"1", "2", "3"};
    std::vector<int> scenarios = {1, 2, 3};
    std::vector<InteractionType> interactions = {InteractionType::I, InteractionType::II, InteractionType::III,
                                                 InteractionType::IV};
    std::uint64_t seed = 20240901;
    bool fixed_truth = false;
    int threads = 0;  ///< 0: hardware concurrency (capped by STSHARED_THREADS)
    FitConfig fit;

    static StudyConfig from_json(const std::string& text);
    std::string to_json() const;
};

struct ReplicateRecord {
    int scenario = 0;
    InteractionType interaction = InteractionType::I;
    int replicate = 0;
    std::string model;
    bool ok = false;
    std::string error;
    double dic = 0.0, waic = 0.0, ls = 0.0;
    double marb = 0.0, mrrmse = 0.0, is = 0.0, cil = 0.0, coverage = 0.0;
    int cells = 0;
    int covered = 0;
    double delta_median = 0.0;
    std::vector<double> rho_median;
    double max_constraint_residual = 0.0;
    double identifiability_residual = 0.0;
};

struct ModelSummary {
    std::string model;
    bool is_true = false;
    int n_ok = 0;
    int n_failed = 0;
    Percentiles dic_diff, waic_diff, ls_diff;  ///< model minus true model; unset for the true model
    double marb = 0.0, mrrmse = 0.0, is = 0.0, cil = 0.0;
    double coverage_pooled = 0.0;
    double coverage_mean = 0.0;
};

struct SubScenarioSummary {
    int scenario = 0;
    InteractionType interaction = InteractionType::I;
    std::string true_model;
    std::vector<ModelSummary> models;
    bool high_failure = false;  ///< more than 5% of fits failed
};

struct StudyReport {
    std::vector<ReplicateRecord> records;
    std::vector<SubScenarioSummary> summaries;

    /// Writes report_ic.csv, report_pred.csv and replicates/scenario<S>_type<X>.csv.
    void write(const std::string& dir) const;
};

/// Display name used in reports, e.g. "Model 3".
std::string study_model_name(const std::string& label);

StudyReport run_study(const StudyConfig& cfg);

/// Worker count: min(requested or hardware concurrency, STSHARED_THREADS).
int worker_count(int requested);

}  // namespace stshared
