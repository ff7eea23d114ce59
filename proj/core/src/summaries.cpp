#include "stshared/summaries.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace stshared {

Eigen::MatrixXd column_quantiles(const Eigen::MatrixXd& draws) {
    if (draws.rows() == 0) throw std::invalid_argument("column_quantiles: no draws");
    Eigen::MatrixXd out(draws.cols(), 3);
    std::vector<double> col(static_cast<std::size_t>(draws.rows()));
    for (Eigen::Index c = 0; c < draws.cols(); ++c) {
        for (Eigen::Index j = 0; j < draws.rows(); ++j) col[j] = draws(j, c);
        out(c, 0) = quantile(col, 0.025);
        out(c, 1) = quantile(col, 0.5);
        out(c, 2) = quantile(col, 0.975);
    }
    return out;
}

FitSummaries summarize(const JointModel& model, const FitResult& fr) {
    const int n = static_cast<int>(fr.predictive_store.rows());
    if (n == 0) throw std::invalid_argument("summarize: fit has no posterior draws");
    const PosteriorDraws pd = posterior_draws(fr, n, fr.seed);
    const auto& l = fr.layout;
    const int A = l.A;
    const int T = l.T;
    const int cells = l.cells();
    Eigen::MatrixXd si(n, A), sm(n, A), ti(n, T), tm(n, T), ri(n, cells), rm(n, cells);
    for (int j = 0; j < n; ++j) {
        const double delta = model.hyper(pd.theta.row(j).transpose()).delta;
        const auto x = pd.latent.row(j);
        for (int i = 0; i < A; ++i) {
            si(j, i) = std::exp(delta * x[l.kappa + i]);
            sm(j, i) = std::exp(x[l.kappa + i] / delta);
        }
        for (int t = 0; t < T; ++t) {
            ti(j, t) = std::exp(x[l.alpha] + x[l.gamma_i + t]);
            tm(j, t) = std::exp(x[l.alpha + 1] + x[l.gamma_m + t]);
        }
        for (int c = 0; c < cells; ++c) {
            ri(j, c) = std::exp(x[l.inter_i + c]);
            rm(j, c) = std::exp(x[l.inter_m + c]);
        }
    }
    FitSummaries s;
    s.shared_spatial_i = column_quantiles(si);
    s.shared_spatial_m = column_quantiles(sm);
    s.temporal_i = column_quantiles(ti);
    s.temporal_m = column_quantiles(tm);
    s.trend_i = column_quantiles(ri);
    s.trend_m = column_quantiles(rm);
    s.rates_per_100k = fr.rate_quantiles * 1e5;
    return s;
}

}  // namespace stshared
