#include "stshared/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace stshared {

namespace {

void check_store(const Eigen::MatrixXd& store, const ObservationSet& data, int min_draws) {
    if (store.rows() == 0) throw std::invalid_argument("empty predictive store");
    if (store.rows() < min_draws) throw std::invalid_argument("predictive store needs at least 2 draws");
    if (store.cols() != 2 * data.cells()) throw std::invalid_argument("predictive store does not match the data");
}

double log_mean_exp(const Eigen::VectorXd& v) {
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((v.array() - m).exp().mean());
}

double poisson_log_density(double o, double log_mu) { return o * log_mu - std::exp(log_mu) - std::lgamma(o + 1.0); }

void check_cells(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size()) throw std::invalid_argument("estimate/truth shape mismatch");
    for (Eigen::Index k = 0; k < b.size(); ++k) {
        if (b[k] == 0.0) throw std::invalid_argument("zero truth in relative metric");
    }
}

}  // namespace

Eigen::MatrixXd pointwise_log_density(const Eigen::MatrixXd& store, const ObservationSet& data) {
    const Eigen::VectorXd o = data.stacked_counts();
    Eigen::MatrixXd lp(store.rows(), store.cols());
    for (Eigen::Index c = 0; c < store.cols(); ++c) {
        for (Eigen::Index j = 0; j < store.rows(); ++j) {
            lp(j, c) = std::isnan(o[c]) ? std::numeric_limits<double>::quiet_NaN()
                                        : poisson_log_density(o[c], store(j, c));
        }
    }
    return lp;
}

DicParts dic(const Eigen::MatrixXd& store, const ObservationSet& data) {
    check_store(store, data, 1);
    const Eigen::VectorXd o = data.stacked_counts();
    const Eigen::MatrixXd lp = pointwise_log_density(store, data);
    DicParts out;
    double d_at_mean = 0.0;
    for (Eigen::Index c = 0; c < store.cols(); ++c) {
        if (std::isnan(o[c])) continue;
        out.d_bar += -2.0 * lp.col(c).mean();
        const double mu_bar = store.col(c).array().exp().mean();
        d_at_mean += -2.0 * poisson_log_density(o[c], std::log(mu_bar));
    }
    out.p_d = out.d_bar - d_at_mean;
    out.dic = out.d_bar + out.p_d;
    return out;
}

WaicParts waic(const Eigen::MatrixXd& store, const ObservationSet& data) {
    check_store(store, data, 2);
    const Eigen::VectorXd o = data.stacked_counts();
    const Eigen::MatrixXd lp = pointwise_log_density(store, data);
    WaicParts out;
    const double n = static_cast<double>(store.rows());
    for (Eigen::Index c = 0; c < store.cols(); ++c) {
        if (std::isnan(o[c])) continue;
        const Eigen::VectorXd col = lp.col(c);
        out.lppd += log_mean_exp(col);
        out.p_waic += (col.array() - col.mean()).square().sum() / (n - 1.0);
    }
    out.waic = -2.0 * (out.lppd - out.p_waic);
    return out;
}

LogScore log_score(const Eigen::MatrixXd& store, const ObservationSet& data) {
    check_store(store, data, 1);
    const Eigen::VectorXd o = data.stacked_counts();
    const Eigen::MatrixXd lp = pointwise_log_density(store, data);
    LogScore out;
    out.few_draws = store.rows() < 100;
    std::vector<double> neg(static_cast<std::size_t>(store.rows()));
    for (Eigen::Index c = 0; c < store.cols(); ++c) {
        if (std::isnan(o[c])) continue;
        // log of the weights 1/p, capped at their 99.5th percentile
        for (Eigen::Index j = 0; j < store.rows(); ++j) neg[j] = -lp(j, c);
        std::vector<double> sorted = neg;
        std::sort(sorted.begin(), sorted.end());
        const double h = (static_cast<double>(sorted.size()) - 1.0) * 0.995;
        const auto lo = static_cast<std::size_t>(std::floor(h));
        const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
        const double cap = sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
        Eigen::VectorXd w(store.rows());
        for (Eigen::Index j = 0; j < store.rows(); ++j) w[j] = std::min(neg[j], cap);
        const double log_inv_cpo = log_mean_exp(w);
        if (!std::isfinite(log_inv_cpo)) {
            ++out.excluded;
            continue;
        }
        out.ls += log_inv_cpo;
    }
    return out;
}

double marb(const std::vector<Eigen::VectorXd>& estimates, const std::vector<Eigen::VectorXd>& truths) {
    if (estimates.size() != truths.size() || estimates.empty()) throw std::invalid_argument("marb: shape mismatch");
    double s = 0.0;
    double count = 0.0;
    for (std::size_t j = 0; j < truths.size(); ++j) {
        check_cells(estimates[j], truths[j]);
        s += ((estimates[j] - truths[j]).array().abs() / truths[j].array()).sum();
        count += static_cast<double>(truths[j].size());
    }
    return 100.0 * s / count;
}

double mrrmse(const std::vector<Eigen::VectorXd>& estimates, const std::vector<Eigen::VectorXd>& truths) {
    if (estimates.size() != truths.size() || estimates.empty()) throw std::invalid_argument("mrrmse: shape mismatch");
    double s = 0.0;
    for (std::size_t j = 0; j < truths.size(); ++j) {
        check_cells(estimates[j], truths[j]);
        const Eigen::ArrayXd rel = (estimates[j] - truths[j]).array() / truths[j].array();
        s += std::sqrt(rel.square().mean());
    }
    return 100.0 * s / static_cast<double>(truths.size());
}

double interval_score(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, const Eigen::VectorXd& truth, double beta) {
    if (lo.size() != hi.size() || lo.size() != truth.size() || lo.size() == 0) {
        throw std::invalid_argument("interval_score: shape mismatch");
    }
    if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("interval_score: beta must be in (0, 1)");
    double s = 0.0;
    for (Eigen::Index k = 0; k < lo.size(); ++k) {
        if (lo[k] > hi[k]) throw std::invalid_argument("interval_score: crossed quantiles");
        s += hi[k] - lo[k];
        if (truth[k] < lo[k]) s += 2.0 / beta * (lo[k] - truth[k]);
        if (truth[k] > hi[k]) s += 2.0 / beta * (truth[k] - hi[k]);
    }
    return s / static_cast<double>(lo.size());
}

std::pair<double, double> cil_coverage(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                                       const Eigen::VectorXd& truth) {
    if (lo.size() != hi.size() || lo.size() != truth.size() || lo.size() == 0) {
        throw std::invalid_argument("cil_coverage: shape mismatch");
    }
    double len = 0.0;
    double inside = 0.0;
    for (Eigen::Index k = 0; k < lo.size(); ++k) {
        if (lo[k] > hi[k]) throw std::invalid_argument("cil_coverage: crossed quantiles");
        len += hi[k] - lo[k];
        inside += (lo[k] <= truth[k] && truth[k] <= hi[k]) ? 1.0 : 0.0;
    }
    const double n = static_cast<double>(lo.size());
    return {len / n, 100.0 * inside / n};
}

double delta_vs_reference(double value, double reference) {
    if (reference == 0.0) throw std::invalid_argument("delta_vs_reference: zero reference");
    return (value - reference) / reference * 100.0;
}

CrudeRates crude_rates(const ObservationSet& data) {
    CrudeRates r;
    const int n = data.cells();
    r.cell_i.resize(n);
    r.cell_m.resize(n);
    for (int c = 0; c < n; ++c) {
        if (!(data.population[c] > 0.0)) throw std::invalid_argument("crude_rates: zero population");
        r.cell_i[c] = data.counts_i[c] / data.population[c] * 1e5;
        r.cell_m[c] = data.counts_m[c] / data.population[c] * 1e5;
    }
    r.area_i = Eigen::VectorXd::Zero(data.A);
    r.area_m = Eigen::VectorXd::Zero(data.A);
    for (int i = 0; i < data.A; ++i) {
        double oi = 0.0, om = 0.0, pi = 0.0, pm = 0.0;
        for (int t = 0; t < data.T; ++t) {
            const int c = t * data.A + i;
            if (!std::isnan(data.counts_i[c])) {
                oi += data.counts_i[c];
                pi += data.population[c];
            }
            if (!std::isnan(data.counts_m[c])) {
                om += data.counts_m[c];
                pm += data.population[c];
            }
        }
        r.area_i[i] = pi > 0.0 ? oi / pi * 1e5 : std::numeric_limits<double>::quiet_NaN();
        r.area_m[i] = pm > 0.0 ? om / pm * 1e5 : std::numeric_limits<double>::quiet_NaN();
    }
    return r;
}

Percentiles percentiles(const std::vector<double>& values) {
    if (values.empty()) throw std::invalid_argument("percentiles of an empty sample");
    std::vector<double> v = values;
    std::sort(v.begin(), v.end());
    auto q = [&](double p) {
        const double h = (static_cast<double>(v.size()) - 1.0) * p;
        const auto lo = static_cast<std::size_t>(std::floor(h));
        const std::size_t hi = std::min(lo + 1, v.size() - 1);
        return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
    };
    return {q(0.025), q(0.5), q(0.975)};
}

std::string format_number(double v) {
    if (std::isnan(v)) return "NA";
    if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    std::string s = buf;
    if (s == "-0.000000") s = "0.000000";
    return s;
}

void ScoreTable::write_csv(std::ostream& out) const {
    static const char* names[] = {"DIC", "WAIC", "LS", "MARB", "MRRMSE", "IS", "CIL", "coverage"};
    auto values = [](const ScoreRow& r) {
        return std::vector<double>{r.dic, r.waic, r.ls, r.marb, r.mrrmse, r.is, r.cil, r.coverage};
    };
    out << "model";
    for (const char* n : names) out << ',' << n;
    for (const char* n : names) out << ',' << n << "_delta_pct";
    out << '\n';
    const ScoreRow* ref = nullptr;
    for (const auto& r : rows) {
        if (r.model == reference) ref = &r;
    }
    for (const auto& r : rows) {
        out << r.model;
        const auto v = values(r);
        for (double x : v) out << ',' << format_number(x);
        for (std::size_t k = 0; k < v.size(); ++k) {
            out << ',';
            if (ref == nullptr || &r == ref) {
                out << '-';
                continue;
            }
            const double base = values(*ref)[k];
            out << (base == 0.0 ? std::string("NA") : format_number(delta_vs_reference(v[k], base)));
        }
        out << '\n';
    }
}

}  // namespace stshared
