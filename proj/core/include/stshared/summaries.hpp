#pragma once

#include <Eigen/Dense>

#include <cstdint>

#include "stshared/inference.hpp"

namespace stshared {

/// Posterior quantiles (2.5%, 50%, 97.5%) of derived quantities, one row each.
struct FitSummaries {
    Eigen::MatrixXd shared_spatial_i;  ///< A rows: exp(delta kappa_i)
    Eigen::MatrixXd shared_spatial_m;  ///< A rows: exp(kappa_i / delta)
    Eigen::MatrixXd temporal_i;        ///< T rows: exp(alpha_I + gamma_tI)
    Eigen::MatrixXd temporal_m;        ///< T rows: exp(alpha_M + gamma_tM)
    Eigen::MatrixXd trend_i;           ///< TA rows (cell = t * A + i): exp of the interaction in eta_I
    Eigen::MatrixXd trend_m;
    Eigen::MatrixXd rates_per_100k;    ///< 2TA rows: fitted rates times 1e5
};

/// Quantiles over `fr.predictive_store.rows()` joint draws (the same stream
/// as the fit's predictive store).
FitSummaries summarize(const JointModel& model, const FitResult& fr);

/// Row-wise 2.5/50/97.5% quantiles of a draws x k matrix.
Eigen::MatrixXd column_quantiles(const Eigen::MatrixXd& draws);

}  // namespace stshared
