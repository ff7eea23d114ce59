#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <boost/math/distributions/chi_squared.hpp>

#include <cmath>
#include <numbers>
#include <sstream>

#include "oracles.hpp"
#include "stshared/gmrf.hpp"
#include "stshared/model.hpp"
#include "stshared/rng.hpp"

using namespace stshared;

namespace {

SpMat random_spd(int n, Rng& rng) {
    std::vector<Eigen::Triplet<double>> t;
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < 3; ++k) {
            const int j = static_cast<int>(rng() % static_cast<std::uint64_t>(n));
            if (j == i) continue;
            const double v = rng.uniform() - 0.5;
            t.emplace_back(i, j, v);
            t.emplace_back(j, i, v);
        }
    }
    SpMat m(n, n);
    m.setFromTriplets(t.begin(), t.end());
    Eigen::VectorXd rowsum = Eigen::VectorXd::Zero(n);
    for (int k = 0; k < m.outerSize(); ++k) {
        for (SpMat::InnerIterator it(m, k); it; ++it) rowsum[it.row()] += std::abs(it.value());
    }
    for (int i = 0; i < n; ++i) m.coeffRef(i, i) += rowsum[i] + 0.5;
    return m;
}

Eigen::MatrixXd sum_row(int n) { return Eigen::MatrixXd::Ones(1, n); }

}  // namespace

TEST_CASE("factorize the identity") {
    SpMat eye(5, 5);
    eye.setIdentity();
    const SparseFactor f = factorize(eye);
    CHECK(f.log_determinant() == doctest::Approx(0.0));
    const Eigen::VectorXd b = Eigen::VectorXd::LinSpaced(5, -1.0, 3.0);
    CHECK((f.solve(b) - b).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("log determinant of a 2x2 matrix") {
    SpMat m(2, 2);
    m.insert(0, 0) = 2.0;
    m.insert(0, 1) = 1.0;
    m.insert(1, 0) = 1.0;
    m.insert(1, 1) = 2.0;
    CHECK(factorize(m).log_determinant() == doctest::Approx(std::log(3.0)).epsilon(1e-14));
}

TEST_CASE("random sparse SPD solve, log determinant and inverse diagonal") {
    Rng rng(11);
    const SpMat q = random_spd(100, rng);
    const Eigen::MatrixXd dense(q);
    Eigen::VectorXd b(100);
    for (int i = 0; i < 100; ++i) b[i] = rng.normal();
    for (const Ordering& ord : {Ordering::identity(100), Ordering::amd(q)}) {
        const SparseFactor f = SparseFactor::compute(q, ord);
        const Eigen::VectorXd x = f.solve(b);
        CHECK((q * x - b).cwiseAbs().maxCoeff() < 1e-9 * b.cwiseAbs().maxCoeff());
        CHECK(f.log_determinant() == doctest::Approx(std::log(dense.determinant())).epsilon(1e-10));
        const Eigen::VectorXd dinv = dense.inverse().diagonal();
        CHECK((f.inverse_diagonal() - dinv).cwiseAbs().maxCoeff() < 1e-8);

        Eigen::MatrixXd rhs(100, 3);
        rhs.col(0) = b;
        rhs.col(1) = -2.0 * b;
        rhs.col(2) = Eigen::VectorXd::Ones(100);
        const Eigen::MatrixXd xs = f.solve(rhs);
        CHECK((dense * xs - rhs).cwiseAbs().maxCoeff() < 1e-9 * 2.0 * b.cwiseAbs().maxCoeff());
    }
}

TEST_CASE("AMD ordering is a permutation") {
    Rng rng(3);
    const SpMat q = random_spd(40, rng);
    const Ordering o = Ordering::amd(q);
    REQUIRE(o.old_of_new.size() == 40);
    for (int k = 0; k < 40; ++k) CHECK(o.new_of_old[o.old_of_new[k]] == k);
}

TEST_CASE("indefinite matrix reports its pivot") {
    SpMat m(3, 3);
    m.insert(0, 0) = 1.0;
    m.insert(1, 1) = -1.0;
    m.insert(2, 2) = 1.0;
    try {
        SparseFactor::compute(m, Ordering::identity(3));
        FAIL("expected NotPositiveDefinite");
    } catch (const NotPositiveDefinite& e) {
        CHECK(e.pivot() == 1);
    }
}

TEST_CASE("jitter policy rescues a singular PSD matrix") {
    const SpMat r = rw1_structure(4).entries();
    int steps = -1;
    const SparseFactor f = factorize_with_jitter(r, Ordering::identity(4), &steps);
    CHECK(steps >= 1);
    CHECK(steps <= 3);
    CHECK(f.dim() == 4);
}

TEST_CASE("matrix market dump") {
    SpMat m(2, 2);
    m.insert(0, 1) = 2.5;
    std::ostringstream out;
    write_matrix_market(out, m);
    CHECK(out.str() == "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 2 2.5\n");
}

TEST_CASE("constraint sets drop dependent rows") {
    Eigen::MatrixXd rows(3, 3);
    rows << 1, 1, 1, 2, 2, 2, 1, 0, -1;
    const ConstraintSet c(rows);
    CHECK(c.size() == 2);
    CHECK(c.dropped() == 1);
    for (int r = 0; r < c.size(); ++r) CHECK(c.rows().row(r).norm() == doctest::Approx(1.0));
}

TEST_CASE("log density conventions") {
    const GmrfDensity std_normal(identity_structure(4), 1.0);
    CHECK(log_density(Eigen::VectorXd::Zero(4), std_normal) ==
          doctest::Approx(-2.0 * std::log(2.0 * std::numbers::pi)).epsilon(1e-14));

    const GmrfDensity rw(rw1_structure(5), 2.5);
    Rng rng(5);
    Eigen::VectorXd x(5);
    for (int i = 0; i < 5; ++i) x[i] = rng.normal();
    const Eigen::MatrixXd r(rw.structure().entries());
    const double expect = 0.5 * 4 * std::log(2.5) + 0.5 * oracle::log_gdet(r) - 0.5 * 2.5 * x.dot(r * x) -
                          0.5 * 4 * std::log(2.0 * std::numbers::pi);
    CHECK(std::abs(log_density(x, rw) - expect) < 1e-10);

    // Kernel directions leave the density unchanged and it is maximal there.
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(5);
    CHECK(std::abs(log_density(x + 3.7 * ones, rw) - log_density(x, rw)) < 1e-10);
    CHECK(log_density(ones, rw) >= log_density(x, rw));
    CHECK_THROWS_AS(log_density(Eigen::VectorXd::Zero(3), rw), std::invalid_argument);
}

TEST_CASE("generalized determinant against the dense oracle") {
    const StructureMatrix s = interaction_structure(InteractionType::IV, rw1_structure(3),
                                                    icar_structure(AdjacencyGraph::lattice(2, 3)));
    CHECK(log_generalized_determinant(s) == doctest::Approx(oracle::log_gdet(Eigen::MatrixXd(s.entries()))).epsilon(1e-10));
}

TEST_CASE("Type I sample with a sum row has zero mean") {
    const GmrfDensity g(identity_structure(12), 3.0);
    const ConstraintSet c(sum_row(12));
    Rng rng(2);
    const Eigen::VectorXd x = sample_constrained(g, c, rng);
    CHECK(std::abs(x.mean()) < 1e-10);
}

TEST_CASE("Type IV sample satisfies row and column sums") {
    const int A = 4, T = 3;
    const AdjacencyGraph graph = AdjacencyGraph::lattice(2, 2);
    const StructureMatrix rk = icar_structure(graph), rg = rw1_structure(T);
    const StructureMatrix q = interaction_structure(InteractionType::IV, rg, rk);
    const ModelSpec spec = ModelSpec::from_label("1.1", InteractionType::IV, T);
    const LatentLayout lay = layout(spec, A, T);
    const ConstraintSet all = constraints_for(spec, lay, rk, rg, q);
    const Eigen::MatrixXd rows = all.rows().middleCols(lay.inter_i, T * A);
    Eigen::MatrixXd kept(0, T * A);
    for (Eigen::Index r = 0; r < rows.rows(); ++r) {
        if (rows.row(r).norm() > 0.0) {
            kept.conservativeResize(kept.rows() + 1, Eigen::NoChange);
            kept.row(kept.rows() - 1) = rows.row(r);
        }
    }
    const ConstraintSet c(kept);
    CHECK(c.size() == A + T - 1);
    Rng rng(9);
    const Eigen::VectorXd x = sample_constrained(GmrfDensity(q, 4.0), c, rng);
    for (int t = 0; t < T; ++t) CHECK(std::abs(x.segment(t * A, A).sum()) < 1e-10);
    for (int i = 0; i < A; ++i) {
        double s = 0.0;
        for (int t = 0; t < T; ++t) s += x[t * A + i];
        CHECK(std::abs(s) < 1e-10);
    }
}

TEST_CASE("insufficient constraints are rejected") {
    const GmrfDensity g(rw2_structure(5), 1.0);
    Rng rng(1);
    CHECK_THROWS_AS(sample_constrained(g, ConstraintSet::none(5), rng), ConstraintError);
    CHECK_THROWS_AS(sample_constrained(g, ConstraintSet(sum_row(5)), rng), ConstraintError);
}

TEST_CASE("constrained iCAR covariance on a path") {
    std::vector<std::pair<int, int>> e{{0, 1}, {1, 2}};
    const GmrfDensity g(icar_structure(AdjacencyGraph(3, e)), 2.0);
    const ConstraintSet c(sum_row(3));
    const Eigen::MatrixXd q = 2.0 * Eigen::MatrixXd(g.structure().entries());
    const Eigen::MatrixXd cov = oracle::constrained_covariance(q, c.rows());
    CHECK((cov - oracle::pinv(q)).cwiseAbs().maxCoeff() < 1e-12);

    const int n = 50000;
    Rng rng(21);
    Eigen::MatrixXd draws(n, 3);
    for (int k = 0; k < n; ++k) draws.row(k) = sample_constrained(g, c, rng).transpose();
    const Eigen::MatrixXd emp = draws.transpose() * draws / n;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            const Eigen::ArrayXd prod = draws.col(i).array() * draws.col(j).array();
            const double se = std::sqrt((prod - prod.mean()).square().mean() / n);
            CHECK(std::abs(emp(i, j) - cov(i, j)) < 3.0 * se);
        }
    }
}

TEST_CASE("unconstrained proper sampling passes a chi-square test") {
    Rng rng(31);
    const SpMat q = random_spd(8, rng);
    const SparseFactor f = SparseFactor::compute(q, Ordering::amd(q));
    ConstrainedFactor cf(std::make_shared<const SparseFactor>(f), ConstraintSet::none(8));
    const int n = 10000;
    std::vector<double> m(n);
    for (int k = 0; k < n; ++k) {
        const Eigen::VectorXd x = cf.sample(rng);
        m[k] = x.dot(q * x);
    }
    // Binned Pearson test of the Mahalanobis norms against chi-square(8).
    const boost::math::chi_squared ref(8);
    const int bins = 20;
    std::vector<int> counts(bins, 0);
    for (double v : m) counts[std::min(bins - 1, static_cast<int>(boost::math::cdf(ref, v) * bins))]++;
    double stat = 0.0;
    const double expected = static_cast<double>(n) / bins;
    for (int c : counts) stat += (c - expected) * (c - expected) / expected;
    CHECK(stat < boost::math::quantile(boost::math::chi_squared(bins - 1), 0.99));
}

TEST_CASE("kriging terms match the dense subspace quantities") {
    Rng rng(41);
    const StructureMatrix s = icar_structure(AdjacencyGraph::lattice(2, 3));
    const SpMat q = 1.7 * s.entries();
    const ConstraintSet c(sum_row(6));
    const SpMat m = q + c.gram(augmentation_weight(q));
    ConstrainedFactor cf(std::make_shared<const SparseFactor>(factorize(m)), c);
    const Eigen::MatrixXd dq(q);
    CHECK(cf.log_det_subspace() == doctest::Approx(oracle::log_det_subspace(dq, c.rows())).epsilon(1e-10));
    const Eigen::MatrixXd cov = oracle::constrained_covariance(dq, c.rows());
    CHECK((cf.marginal_variances() - cov.diagonal()).cwiseAbs().maxCoeff() < 1e-10);
    Eigen::VectorXd b(6);
    for (int i = 0; i < 6; ++i) b[i] = rng.normal();
    CHECK((cf.constrained_solve(b) - cov * b).cwiseAbs().maxCoeff() < 1e-10);
}
