#pragma once

#include <Eigen/Dense>

#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "stshared/observations.hpp"

namespace stshared {

/// Draw-based information criteria over a predictive store (draws x 2TA
/// matrix of per-cell log-means, incidence cells first). Missing counts are
/// skipped. All use the Poisson log-density including log(O!).
struct DicParts {
    double dic = 0.0;
    double d_bar = 0.0;
    double p_d = 0.0;
};
DicParts dic(const Eigen::MatrixXd& store, const ObservationSet& data);

struct WaicParts {
    double waic = 0.0;
    double lppd = 0.0;
    double p_waic = 0.0;
};
WaicParts waic(const Eigen::MatrixXd& store, const ObservationSet& data);

struct LogScore {
    double ls = 0.0;
    int excluded = 0;  ///< cells whose CPO was not finite
    bool few_draws = false;
};
/// LS = -sum log CPO with CPO^{-1} = mean(1 / p); the per-draw weights 1/p
/// of each cell are capped at their 99.5th percentile.
LogScore log_score(const Eigen::MatrixXd& store, const ObservationSet& data);

/// Poisson log p(O | mu) for each draw and cell; NaN counts give NaN columns.
Eigen::MatrixXd pointwise_log_density(const Eigen::MatrixXd& store, const ObservationSet& data);

/// Percent; estimates[j] and truths[j] hold the cells of replicate j.
double marb(const std::vector<Eigen::VectorXd>& estimates, const std::vector<Eigen::VectorXd>& truths);
double mrrmse(const std::vector<Eigen::VectorXd>& estimates, const std::vector<Eigen::VectorXd>& truths);

/// Mean over cells of (u - l) + (2/beta)(l - r)[r < l] + (2/beta)(r - u)[r > u].
double interval_score(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, const Eigen::VectorXd& truth, double beta);

/// (mean interval length, percent of cells with l <= r <= u).
std::pair<double, double> cil_coverage(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                                       const Eigen::VectorXd& truth);

/// (v - ref) / ref * 100.
double delta_vs_reference(double value, double reference);

struct CrudeRates {
    Eigen::VectorXd cell_i;  ///< per 100 000, per cell
    Eigen::VectorXd cell_m;
    Eigen::VectorXd area_i;  ///< sum over periods of O / sum of n, per 100 000
    Eigen::VectorXd area_m;
};
CrudeRates crude_rates(const ObservationSet& data);

struct Percentiles {
    double p025 = 0.0;
    double p500 = 0.0;
    double p975 = 0.0;
};
Percentiles percentiles(const std::vector<double>& values);

struct ScoreRow {
    std::string model;
    double dic = 0.0;
    double waic = 0.0;
    double ls = 0.0;
    double marb = 0.0;
    double mrrmse = 0.0;
    double is = 0.0;
    double cil = 0.0;
    double coverage = 0.0;
};

/// Per-model scores with percentage changes against a reference model.
struct ScoreTable {
    std::vector<ScoreRow> rows;
    std::string reference;

    /// Columns: model, DIC, WAIC, LS, MARB, MRRMSE, IS, CIL, coverage, then
    /// the same eight metrics suffixed `_delta_pct`; the reference row has "-".
    void write_csv(std::ostream& out) const;
};

/// Fixed-format number for deterministic CSV output.
std::string format_number(double v);

}  // namespace stshared
