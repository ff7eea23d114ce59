#include <benchmark/benchmark.h>

#include "stshared/gmrf.hpp"
#include "stshared/inference.hpp"
#include "stshared/rng.hpp"
#include "stshared/simstudy.hpp"

using namespace stshared;

namespace {

InteractionType type_arg(const benchmark::State& state) { return static_cast<InteractionType>(state.range(0)); }

ObservationSet desk_data(InteractionType type, const AdjacencyGraph& g, int T) {
    const Truth truth = generate_truth(Scenario::standard(2, type, T), g, T, 11);
    const Eigen::VectorXd pop = synth_populations(g.n_areas(), T, 3);
    return simulate_counts(truth.rate_i, truth.rate_m, pop, g.n_areas(), T, 5);
}

void BM_InteractionStructure(benchmark::State& state) {
    const AdjacencyGraph g = AdjacencyGraph::lattice(static_cast<int>(state.range(1)), static_cast<int>(state.range(1)));
    const StructureMatrix rk = icar_structure(g);
    const StructureMatrix r1 = rw1_structure(9);
    for (auto _ : state) benchmark::DoNotOptimize(interaction_structure(type_arg(state), r1, rk));
}
BENCHMARK(BM_InteractionStructure)->ArgsProduct({{0, 1, 2, 3}, {5, 10}});

void BM_PriorFactorization(benchmark::State& state) {
    const AdjacencyGraph g = AdjacencyGraph::lattice(5, 5);
    const JointModel model(ModelSpec::from_label("3", type_arg(state), 9), g, 9);
    const HyperParams h = model.hyper(model.initial_theta());
    const SpMat q = model.prior_precision(h) + augmentation_weight(model.prior_precision(h)) * model.constraint_gram();
    for (auto _ : state) benchmark::DoNotOptimize(SparseFactor::compute(q, model.ordering()));
}
BENCHMARK(BM_PriorFactorization)->DenseRange(0, 3)->Unit(benchmark::kMicrosecond);

void BM_ConstrainedIcarDraw(benchmark::State& state) {
    const AdjacencyGraph g = AdjacencyGraph::lattice(static_cast<int>(state.range(0)), static_cast<int>(state.range(0)));
    const GmrfDensity d(icar_structure(g), 2.0);
    const ConstraintSet c(Eigen::MatrixXd::Ones(1, g.n_areas()));
    Rng rng(1);
    for (auto _ : state) benchmark::DoNotOptimize(sample_constrained(d, c, rng));
}
BENCHMARK(BM_ConstrainedIcarDraw)->Arg(5)->Arg(20)->Unit(benchmark::kMicrosecond);

void BM_GaussianApprox(benchmark::State& state) {
    const AdjacencyGraph g = AdjacencyGraph::lattice(5, 5);
    const JointModel model(ModelSpec::from_label("3", type_arg(state), 9), g, 9);
    const ObservationSet data = desk_data(type_arg(state), g, 9);
    const HyperParams h = model.hyper(model.initial_theta());
    for (auto _ : state) benchmark::DoNotOptimize(gaussian_approx(model, data, h));
}
BENCHMARK(BM_GaussianApprox)->DenseRange(0, 3)->Unit(benchmark::kMillisecond);

void BM_FitTypeI(benchmark::State& state) {
    const AdjacencyGraph g = AdjacencyGraph::lattice(5, 5);
    const std::string label = state.range(0) == 1 ? "1" : state.range(0) == 2 ? "2" : "3";
    const JointModel model(ModelSpec::from_label(label, InteractionType::I, 9), g, 9);
    const ObservationSet data = desk_data(InteractionType::I, g, 9);
    for (auto _ : state) benchmark::DoNotOptimize(fit(model, data));
}
BENCHMARK(BM_FitTypeI)->DenseRange(1, 3)->Unit(benchmark::kMillisecond)->Iterations(1);

}  // namespace

BENCHMARK_MAIN();
