#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "stshared/simstudy.hpp"

using namespace stshared;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("stshared_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("standard scenarios") {
    const Scenario s1 = Scenario::standard(1, InteractionType::I, 9);
    CHECK(s1.alpha_i == -8.9);
    CHECK(s1.alpha_m == -9.3);
    CHECK(s1.delta == 0.9);
    CHECK(s1.tau_kappa == 35.7);
    CHECK(s1.tau_gamma_i == 200.0);
    CHECK(s1.tau_gamma_m == 120.0);
    CHECK(s1.tau_chi_i == 400.0);
    CHECK(s1.tau_chi_m == 550.0);
    const Scenario s2 = Scenario::standard(2, InteractionType::II, 9);
    CHECK(s2.rho == std::vector<double>{1.4});
    CHECK(s2.tau_chi == 80.0);
    const Scenario s3 = Scenario::standard(3, InteractionType::IV, 9);
    CHECK(s3.blocks.sizes == std::vector<int>{3, 3, 3});
    CHECK(s3.rho == std::vector<double>{1.0, 1.4, 1.8});
    CHECK(s3.true_model() == "3");
    CHECK_THROWS_AS(Scenario::standard(4, InteractionType::I, 9), std::invalid_argument);
}

TEST_CASE("scenario 2 is scenario 3 with equal scalings") {
    const AdjacencyGraph g = AdjacencyGraph::lattice(3, 3);
    for (auto type : {InteractionType::I, InteractionType::IV}) {
        const Scenario s2 = Scenario::standard(2, type, 9);
        Scenario s3 = Scenario::standard(3, type, 9);
        s3.rho = {1.4, 1.4, 1.4};
        const Truth a = generate_truth(s2, g, 9, 42);
        const Truth b = generate_truth(s3, g, 9, 42);
        CHECK(a.rate_i == b.rate_i);
        CHECK(a.rate_m == b.rate_m);
    }
}

TEST_CASE("zero effects leave the intercepts") {
    const Truth t = generate_truth(Scenario::standard(3, InteractionType::II, 4), AdjacencyGraph::lattice(2, 2), 4, 1, true);
    CHECK((t.rate_i.array() - std::exp(-8.9)).abs().maxCoeff() == 0.0);
    CHECK((t.rate_m.array() - std::exp(-9.3)).abs().maxCoeff() == 0.0);
}

TEST_CASE("truth fields satisfy their constraints") {
    const AdjacencyGraph g = AdjacencyGraph::lattice(3, 3);
    const int A = 9, T = 4;
    for (int id : {1, 2, 3}) {
        for (auto type : {InteractionType::I, InteractionType::II, InteractionType::III, InteractionType::IV}) {
            const Truth t = generate_truth(Scenario::standard(id, type, T), g, T, 7 + id);
            CHECK(std::abs(t.kappa.sum()) < 1e-10);
            CHECK(std::abs(t.gamma_i.sum()) < 1e-10);
            CHECK(std::abs(t.gamma_m.sum()) < 1e-10);
            // The constrained field is chi_i for scenario 1 and chi = chi_i / z3 otherwise.
            const Scenario s = Scenario::standard(id, type, T);
            const Eigen::VectorXd chi = id == 1 ? t.chi_i : t.chi_i.cwiseQuotient(build_z3(s.blocks, s.rho, A));
            const StructureMatrix q = interaction_structure(type, rw1_structure(T), icar_structure(g));
            if (q.nullity() > 0) {
                CHECK((q.kernel().transpose() * chi).cwiseAbs().maxCoeff() < 1e-10);
            } else {
                CHECK(std::abs(chi.sum()) < 1e-10);
            }
        }
    }
}

TEST_CASE("spatial truth variance matches the scaled pseudo-inverse") {
    const AdjacencyGraph g = AdjacencyGraph::lattice(2, 3);
    const Scenario s = Scenario::standard(1, InteractionType::I, 2);
    const int n = 10000;
    Eigen::MatrixXd draws(n, 6);
    for (int k = 0; k < n; ++k) draws.row(k) = generate_truth(s, g, 2, 1000 + k).kappa.transpose();
    const Eigen::MatrixXd cov = oracle::pinv(Eigen::MatrixXd(icar_structure(g).entries())) / 35.7;
    for (int i = 0; i < 6; ++i) {
        const Eigen::ArrayXd sq = draws.col(i).array().square();
        const double se = std::sqrt((sq - sq.mean()).square().mean() / n);
        CHECK(std::abs(sq.mean() - cov(i, i)) < 3.0 * se);
    }
}

TEST_CASE("Poisson count simulation") {
    SUBCASE("zero rates give zero counts") {
        const Eigen::VectorXd zero = Eigen::VectorXd::Zero(6);
        const ObservationSet d = simulate_counts(zero, zero, Eigen::VectorXd::Constant(6, 1e5), 3, 2, 1);
        CHECK(d.counts_i.sum() == 0.0);
        CHECK(d.counts_m.sum() == 0.0);
    }
    SUBCASE("sample mean") {
        const int n = 100000;
        const Eigen::VectorXd r = Eigen::VectorXd::Constant(n, 4e-5);
        const ObservationSet d = simulate_counts(r, r, Eigen::VectorXd::Constant(n, 1e5), n, 1, 3);
        const double mean = d.counts_i.mean();
        CHECK(std::abs(mean - 4.0) < 3.0 * std::sqrt(4.0 / n));
    }
    SUBCASE("determinism and overflow guard") {
        const Eigen::VectorXd r = Eigen::VectorXd::Constant(4, 1e-4);
        const Eigen::VectorXd pop = Eigen::VectorXd::Constant(4, 5e4);
        const ObservationSet a = simulate_counts(r, r, pop, 2, 2, 9);
        const ObservationSet b = simulate_counts(r, r, pop, 2, 2, 9);
        CHECK(a.counts_i == b.counts_i);
        CHECK(a.counts_m == b.counts_m);
        const Eigen::VectorXd huge = Eigen::VectorXd::Constant(4, 1e3);
        CHECK_THROWS_AS(simulate_counts(huge, r, Eigen::VectorXd::Constant(4, 1e10), 2, 2, 9), std::invalid_argument);
    }
}

TEST_CASE("synthetic populations") {
    const int n = 100000;
    const Eigen::VectorXd p = synth_populations(n, 1, 5);
    CHECK(p.minCoeff() >= 9544.0);
    CHECK(p.maxCoeff() <= 1065000.0);
    std::vector<double> v(p.data(), p.data() + n);
    std::nth_element(v.begin(), v.begin() + n / 2, v.end());
    // Median of log-uniform: sqrt(lo hi); the sample median of log p has sd
    // (b - a) / (2 sqrt(n)) for a uniform on [a, b].
    const double a = std::log(9544.0), b = std::log(1065000.0);
    CHECK(std::abs(std::log(v[n / 2]) - 0.5 * (a + b)) < 3.0 * (b - a) / (2.0 * std::sqrt(double(n))));
    const Eigen::VectorXd near = synth_populations(50, 2, 1, 1000.0, 1001.0);
    CHECK(near.maxCoeff() - near.minCoeff() <= 1.0);
    const Eigen::VectorXd panel = synth_populations(3, 4, 2);
    for (int t = 1; t < 4; ++t) CHECK(panel.segment(3 * t, 3) == panel.head(3));
    CHECK_THROWS_AS(synth_populations(2, 2, 1, 10.0, 5.0), std::invalid_argument);
}

TEST_CASE("population file") {
    const fs::path dir = scratch("pop");
    {
        std::ofstream out(dir / "pop.csv");
        out << "area,population\n0,1000\n1,2500.5\n";
    }
    const Eigen::VectorXd p = read_population_file((dir / "pop.csv").string(), 2, 3);
    CHECK(p.size() == 6);
    CHECK(p[5] == 2500.5);
    CHECK(p[2] == 1000.0);
    {
        std::ofstream out(dir / "bad.csv");
        out << "area,population\n0,1000\n";
    }
    CHECK_THROWS_AS(read_population_file((dir / "bad.csv").string(), 2, 3), DataError);
}

TEST_CASE("study config JSON") {
    StudyConfig c;
    c.grid = "3x4";
    c.T = 5;
    c.replicates = 3;
    c.models = {"1", "3"};
    c.scenarios = {2};
    c.interactions = {InteractionType::III};
    c.fixed_truth = true;
    c.fit.draws = 123;
    const StudyConfig back = StudyConfig::from_json(c.to_json());
    CHECK(back.grid == "3x4");
    CHECK(back.T == 5);
    CHECK(back.replicates == 3);
    CHECK(back.models == c.models);
    CHECK(back.scenarios == c.scenarios);
    CHECK(back.interactions == c.interactions);
    CHECK(back.fixed_truth);
    CHECK(back.fit.draws == 123);
    CHECK(back.to_json() == c.to_json());
    CHECK_THROWS(StudyConfig::from_json("{\"replicates\": 0}"));
    CHECK_THROWS(StudyConfig::from_json("{\"models\": []}"));
}

TEST_CASE("two-replicate study smoke run") {
    StudyConfig c;
    c.grid = "2x3";
    c.T = 4;
    c.replicates = 2;
    c.scenarios = {2};
    c.interactions = {InteractionType::I};
    c.threads = 1;
    c.fit.draws = 200;
    const StudyReport r = run_study(c);
    CHECK(r.records.size() == 6);
    REQUIRE(r.summaries.size() == 1);
    const SubScenarioSummary& s = r.summaries[0];
    CHECK(s.true_model == "2");
    REQUIRE(s.models.size() == 3);
    for (const auto& m : s.models) CHECK(m.n_ok + m.n_failed == 2);
    for (const auto& rec : r.records) {
        if (!rec.ok) continue;
        CHECK(rec.max_constraint_residual < 1e-8);
        CHECK(rec.identifiability_residual <= 1e-12);
    }

    const fs::path a = scratch("study_a"), b = scratch("study_b");
    r.write(a.string());
    run_study(c).write(b.string());
    for (const char* f : {"report_ic.csv", "report_pred.csv", "replicates/scenario2_typeI.csv"}) {
        REQUIRE(fs::exists(a / f));
        CHECK(slurp(a / f) == slurp(b / f));
    }
    const std::string ic = slurp(a / "report_ic.csv");
    CHECK(ic.rfind("scenario,interaction,model,criterion,p2.5,p50,p97.5\n", 0) == 0);
    CHECK(ic.find("2,I,Model 2,DIC,-,-,-") != std::string::npos);
    CHECK(ic.find("2,I,Model 1,DIC,") != std::string::npos);
    const std::string pred = slurp(a / "report_pred.csv");
    CHECK(pred.find("MARB_delta_pct") != std::string::npos);
}

TEST_CASE("worker count honours the environment cap") {
    CHECK(worker_count(3) >= 1);
    CHECK(worker_count(3) <= 3);
}
