#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <sstream>

#include "stshared/rng.hpp"
#include "stshared/scoring.hpp"

using namespace stshared;

namespace {

ObservationSet one_cell(double o) {
    ObservationSet d = ObservationSet::empty(1, 1);
    d.counts_i[0] = o;
    return d;  // mortality count missing
}

Eigen::MatrixXd store_of(std::initializer_list<double> log_means) {
    Eigen::MatrixXd s(static_cast<Eigen::Index>(log_means.size()), 2);
    Eigen::Index j = 0;
    for (double v : log_means) {
        s(j, 0) = v;
        s(j, 1) = 0.0;
        ++j;
    }
    return s;
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index k = 0;
    for (double x : v) out[k++] = x;
    return out;
}

}  // namespace

TEST_CASE("DIC") {
    const ObservationSet d = one_cell(1.0);
    const DicParts two = dic(store_of({0.0, std::log(2.0)}), d);
    CHECK(two.p_d == doctest::Approx(0.11778303565638337).epsilon(1e-12));
    CHECK(two.dic == doctest::Approx(2.424635855096438).epsilon(1e-12));

    const DicParts flat = dic(store_of({0.3, 0.3, 0.3}), d);
    CHECK(std::abs(flat.p_d) < 1e-14);
    CHECK(flat.dic == doctest::Approx(-2.0 * (1.0 * 0.3 - std::exp(0.3))).epsilon(1e-14));
    CHECK_THROWS_AS(dic(Eigen::MatrixXd(0, 2), d), std::invalid_argument);
}

TEST_CASE("WAIC") {
    const ObservationSet d = one_cell(1.0);
    CHECK(waic(store_of({0.0, std::log(2.0)}), d).waic == doctest::Approx(2.377563586054099).epsilon(1e-12));
    CHECK(waic(store_of({0.5, 0.5}), d).p_waic == 0.0);
    // One draw with a vanishing density keeps WAIC finite.
    const ObservationSet big = one_cell(50.0);
    CHECK(std::isfinite(waic(store_of({std::log(50.0), -700.0}), big).waic));
    CHECK_THROWS_AS(waic(store_of({0.0}), d), std::invalid_argument);
}

TEST_CASE("log score") {
    const ObservationSet d = one_cell(1.0);
    CHECK(log_score(store_of({0.0, std::log(2.0)}), d).ls == doctest::Approx(1.1642667248090333).epsilon(1e-12));
    const double lp = 2.0 * 0.7 - std::exp(0.7) - std::lgamma(3.0);
    const LogScore constant = log_score(store_of({0.7, 0.7, 0.7, 0.7}), one_cell(2.0));
    CHECK(constant.ls == doctest::Approx(-lp).epsilon(1e-13));
    CHECK(constant.few_draws);

    // Cell order does not matter.
    ObservationSet two = ObservationSet::empty(2, 1);
    two.counts_i << 3.0, 0.0;
    ObservationSet swapped = ObservationSet::empty(2, 1);
    swapped.counts_i << 0.0, 3.0;
    Rng rng(4);
    Eigen::MatrixXd s(200, 4), t(200, 4);
    for (int j = 0; j < 200; ++j) {
        s(j, 0) = 1.0 + 0.3 * rng.normal();
        s(j, 1) = -0.5 + 0.3 * rng.normal();
        s(j, 2) = s(j, 3) = 0.0;
        t(j, 0) = s(j, 1);
        t(j, 1) = s(j, 0);
        t(j, 2) = t(j, 3) = 0.0;
    }
    CHECK(log_score(s, two).ls == doctest::Approx(log_score(t, swapped).ls).epsilon(1e-14));
}

TEST_CASE("model differences are invariant to a per-cell constant") {
    // Adding c to every log density of both models shifts each score equally.
    ObservationSet d = ObservationSet::empty(3, 1);
    d.counts_i << 2.0, 5.0, 1.0;
    d.counts_m << 0.0, 1.0, 4.0;
    Rng rng(10);
    Eigen::MatrixXd m1(300, 6), m2(300, 6);
    for (int j = 0; j < 300; ++j) {
        for (int c = 0; c < 6; ++c) {
            m1(j, c) = 0.5 + 0.4 * rng.normal();
            m2(j, c) = 0.8 + 0.2 * rng.normal();
        }
    }
    const double ddic = dic(m1, d).dic - dic(m2, d).dic;
    const double dw = waic(m1, d).waic - waic(m2, d).waic;
    const Eigen::MatrixXd lp1 = pointwise_log_density(m1, d), lp2 = pointwise_log_density(m2, d);
    const double c = 3.7;
    auto dic_from = [](const Eigen::MatrixXd& lp, const Eigen::MatrixXd& store, const ObservationSet& data, double shift) {
        const Eigen::VectorXd o = data.stacked_counts();
        double dbar = 0.0, dhat = 0.0;
        for (Eigen::Index k = 0; k < lp.cols(); ++k) {
            dbar += -2.0 * (lp.col(k).array() + shift).mean();
            const double mu = store.col(k).array().exp().mean();
            dhat += -2.0 * (o[k] * std::log(mu) - mu - std::lgamma(o[k] + 1.0) + shift);
        }
        return 2.0 * dbar - dhat;
    };
    CHECK(std::abs((dic_from(lp1, m1, d, c) - dic_from(lp2, m2, d, c)) - ddic) < 1e-9);
    CHECK(std::isfinite(dw));
}

TEST_CASE("MARB and MRRMSE") {
    CHECK(marb({vec({1.0, 2.0})}, {vec({1.0, 2.0})}) == 0.0);
    CHECK(mrrmse({vec({1.0, 2.0})}, {vec({1.0, 2.0})}) == 0.0);
    CHECK(marb({vec({1.1})}, {vec({1.0})}) == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(mrrmse({vec({1.1})}, {vec({1.0})}) == doctest::Approx(10.0).epsilon(1e-12));
    // Two replicates of two cells: errors (10%, 10%) and (0%, 30%).
    const std::vector<Eigen::VectorXd> est{vec({1.1, 2.2}), vec({1.0, 2.6})};
    const std::vector<Eigen::VectorXd> tru{vec({1.0, 2.0}), vec({1.0, 2.0})};
    CHECK(marb(est, tru) == doctest::Approx(12.5).epsilon(1e-12));
    CHECK(mrrmse(est, tru) == doctest::Approx(15.606601717798213).epsilon(1e-12));
    // Four-cell mixed toy: |0.9-1|/1, |2.4-2|/2, |3-3|/3, |3-4|/4 -> (0.1+0.2+0+0.25)/4.
    CHECK(marb({vec({0.9, 2.4, 3.0, 3.0})}, {vec({1.0, 2.0, 3.0, 4.0})}) == doctest::Approx(13.75).epsilon(1e-12));
    // One cell per replicate: MARB equals MRRMSE.
    const std::vector<Eigen::VectorXd> e1{vec({1.2}), vec({0.7})}, t1{vec({1.0}), vec({1.0})};
    CHECK(marb(e1, t1) == doctest::Approx(mrrmse(e1, t1)).epsilon(1e-14));
    CHECK_THROWS_AS(marb({vec({1.0})}, {vec({0.0})}), std::invalid_argument);
    CHECK_THROWS_AS(mrrmse({vec({1.0})}, {vec({0.0})}), std::invalid_argument);
}

TEST_CASE("interval score") {
    CHECK(interval_score(vec({1.0}), vec({3.0}), vec({2.0}), 0.05) == doctest::Approx(2.0));
    CHECK(interval_score(vec({1.0}), vec({3.0}), vec({4.0}), 0.05) == doctest::Approx(42.0).epsilon(1e-14));
    CHECK(interval_score(vec({1.0}), vec({3.0}), vec({3.0}), 0.05) == 2.0);
    double prev = std::numeric_limits<double>::infinity();
    for (double half : {2.0, 1.5, 1.0, 0.5, 0.1}) {
        const double s = interval_score(vec({5.0 - half}), vec({5.0 + half}), vec({5.0}), 0.05);
        CHECK(s < prev);
        prev = s;
    }
    CHECK_THROWS_AS(interval_score(vec({3.0}), vec({1.0}), vec({2.0}), 0.05), std::invalid_argument);
    CHECK_THROWS_AS(interval_score(vec({1.0}), vec({3.0}), vec({2.0}), 1.5), std::invalid_argument);
}

TEST_CASE("credible interval length and coverage") {
    const auto [l0, c0] = cil_coverage(vec({2.0, 3.0}), vec({2.0, 3.0}), vec({2.0, 3.0}));
    CHECK(l0 == 0.0);
    CHECK(c0 == 100.0);
    const auto [l1, c1] = cil_coverage(vec({0.0, 0.0}), vec({1.0, 1.0}), vec({5.0, -1.0}));
    CHECK(l1 == 1.0);
    CHECK(c1 == 0.0);
    const auto [l2, c2] = cil_coverage(vec({0.0, 1.0, 2.0, 0.0}), vec({1.0, 3.0, 2.5, 4.0}), vec({0.5, 4.0, 2.5, 3.0}));
    CHECK(l2 == doctest::Approx((1.0 + 2.0 + 0.5 + 4.0) / 4.0));
    CHECK(c2 == doctest::Approx(75.0));

    Rng rng(2024);
    const int n = 100000;
    Eigen::VectorXd lo(n), hi(n), truth(n);
    for (int k = 0; k < n; ++k) {
        const double mu = 3.0 * rng.normal();
        lo[k] = mu - 1.959963984540054;
        hi[k] = mu + 1.959963984540054;
        truth[k] = mu + rng.normal();
    }
    CHECK(std::abs(cil_coverage(lo, hi, truth).second - 95.0) < 1.0);
}

TEST_CASE("percentage change against a reference") {
    CHECK(delta_vs_reference(5.0, 5.0) == 0.0);
    CHECK(delta_vs_reference(1.1 * 7.0, 7.0) == doctest::Approx(10.0).epsilon(1e-12));
    // Model 1 IS 12.3 vs true model 10.0.
    CHECK(delta_vs_reference(12.3, 10.0) == doctest::Approx(23.0).epsilon(1e-12));
    CHECK_THROWS_AS(delta_vs_reference(1.0, 0.0), std::invalid_argument);
}

TEST_CASE("crude rates") {
    ObservationSet d = ObservationSet::empty(1, 2);
    d.counts_i << 10.0, 30.0;
    d.counts_m << 0.0, 2.0;
    d.population << 100000.0, 300000.0;
    const CrudeRates r = crude_rates(d);
    CHECK(r.cell_i[0] == doctest::Approx(10.0));
    CHECK(r.cell_m[0] == 0.0);
    CHECK(r.area_i[0] == doctest::Approx(40.0 / 400000.0 * 1e5));
    CHECK(r.area_m[0] == doctest::Approx(0.5));
    d.population[0] = 0.0;
    CHECK_THROWS_AS(crude_rates(d), std::invalid_argument);
}

TEST_CASE("percentiles") {
    const Percentiles p = percentiles({4.0, 1.0, 3.0, 2.0, 5.0});
    CHECK(p.p500 == 3.0);
    CHECK(p.p025 == doctest::Approx(1.1));
    CHECK(p.p975 == doctest::Approx(4.9));
}

TEST_CASE("score table CSV") {
    ScoreTable t;
    t.reference = "Model 2";
    t.rows.push_back({"Model 1", 110.0, 105.0, 50.0, 12.0, 15.0, 3.0, 2.0, 94.0});
    t.rows.push_back({"Model 2", 100.0, 100.0, 50.0, 10.0, 12.0, 2.5, 1.5, 90.0});
    std::ostringstream out;
    t.write_csv(out);
    const std::string s = out.str();
    CHECK(s.rfind("model,DIC,WAIC,LS,MARB,MRRMSE,IS,CIL,coverage,DIC_delta_pct,", 0) == 0);
    CHECK(s.find("Model 1,110.000000,105.000000,50.000000,12.000000,15.000000,3.000000,2.000000,94.000000,"
                 "10.000000,5.000000,0.000000,20.000000,25.000000,20.000000,33.333333,4.444444\n") !=
          std::string::npos);
    CHECK(s.find("Model 2,100.000000,100.000000,50.000000,10.000000,12.000000,2.500000,1.500000,90.000000,"
                 "-,-,-,-,-,-,-,-\n") != std::string::npos);
    CHECK(format_number(-0.0000001) == "0.000000");
    CHECK(format_number(std::numeric_limits<double>::quiet_NaN()) == "NA");
}
