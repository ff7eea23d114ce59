#include "stshared/simstudy.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"
#include "stshared/gmrf.hpp"
#include "stshared/rng.hpp"

namespace stshared {

namespace {

enum StreamId : std::uint64_t { kKappa = 1, kGammaI, kGammaM, kChiI, kChiM, kChi };
constexpr std::uint64_t kTruthTag = 0x7472;
constexpr std::uint64_t kCountTag = 0x636e;
constexpr std::uint64_t kFitTag = 0x6674;
constexpr std::uint64_t kPopulationTag = 0x706f;

Eigen::VectorXd draw_field(const StructureMatrix& s, double tau, const Eigen::MatrixXd& rows, std::uint64_t seed,
                           std::uint64_t id) {
    Rng rng = Rng::derive(seed, {id});
    return sample_constrained(GmrfDensity(s, tau), ConstraintSet(rows), rng);
}

Eigen::MatrixXd interaction_rows(const StructureMatrix& q) {
    if (q.nullity() > 0) return q.kernel().transpose();
    return Eigen::MatrixXd::Ones(1, q.dim());
}

std::string type_name(InteractionType t) { return to_string(t); }

}  // namespace

Scenario Scenario::standard(int id, InteractionType interaction, int T) {
    if (id < 1 || id > 3) throw std::invalid_argument("scenario must be 1, 2 or 3");
    Scenario s;
    s.id = id;
    s.interaction = interaction;
    if (id == 2) {
        s.blocks = ScalingBlocks::single(T);
        s.rho = {1.4};
    } else if (id == 3) {
        s.blocks = T == 9 ? ScalingBlocks{{3, 3, 3}} : ScalingBlocks::even(T, std::min(3, T));
        s.rho = {1.0, 1.4, 1.8};
        s.rho.resize(s.blocks.count(), 1.8);
    } else {
        s.blocks = ScalingBlocks::single(T);
    }
    return s;
}

std::string Scenario::true_model() const { return std::to_string(id); }

Truth generate_truth(const Scenario& s, const AdjacencyGraph& graph, int T, std::uint64_t seed, bool zero_effects) {
    const int A = graph.n_areas();
    const StructureMatrix rk = icar_structure(graph);
    const StructureMatrix rg = rw1_structure(T);
    const StructureMatrix qc = interaction_structure(s.interaction, rg, rk);
    Truth t;
    if (zero_effects) {
        t.kappa = Eigen::VectorXd::Zero(A);
        t.gamma_i = t.gamma_m = Eigen::VectorXd::Zero(T);
        t.chi_i = t.chi_m = Eigen::VectorXd::Zero(T * A);
    } else {
        t.kappa = draw_field(rk, s.tau_kappa, rk.kernel().transpose(), seed, kKappa);
        t.gamma_i = draw_field(rg, s.tau_gamma_i, rg.kernel().transpose(), seed, kGammaI);
        t.gamma_m = draw_field(rg, s.tau_gamma_m, rg.kernel().transpose(), seed, kGammaM);
        if (s.id == 1) {
            t.chi_i = draw_field(qc, s.tau_chi_i, interaction_rows(qc), seed, kChiI);
            t.chi_m = draw_field(qc, s.tau_chi_m, interaction_rows(qc), seed, kChiM);
        } else {
            s.blocks.validate(T);
            const Eigen::VectorXd chi = draw_field(qc, s.tau_chi, interaction_rows(qc), seed, kChi);
            const Eigen::VectorXd z3 = build_z3(s.blocks, s.rho, A);
            t.chi_i = z3.cwiseProduct(chi);
            t.chi_m = chi.cwiseQuotient(z3);
        }
    }
    t.rate_i.resize(T * A);
    t.rate_m.resize(T * A);
    for (int tt = 0; tt < T; ++tt) {
        for (int i = 0; i < A; ++i) {
            const int c = tt * A + i;
            t.rate_i[c] = std::exp(s.alpha_i + s.delta * t.kappa[i] + t.gamma_i[tt] + t.chi_i[c]);
            t.rate_m[c] = std::exp(s.alpha_m + t.kappa[i] / s.delta + t.gamma_m[tt] + t.chi_m[c]);
        }
    }
    return t;
}

ObservationSet simulate_counts(const Eigen::VectorXd& rate_i, const Eigen::VectorXd& rate_m,
                               const Eigen::VectorXd& population, int A, int T, std::uint64_t seed) {
    const int n = A * T;
    if (rate_i.size() != n || rate_m.size() != n || population.size() != n) {
        throw std::invalid_argument("simulate_counts: shape mismatch");
    }
    ObservationSet d = ObservationSet::empty(A, T);
    d.population = population;
    Rng rng = Rng::derive(seed, {kCountTag});
    for (int k = 0; k < 2 * n; ++k) {
        const double r = k < n ? rate_i[k] : rate_m[k - n];
        const double pop = population[k % n];
        if (!(r >= 0.0) || !(pop > 0.0)) throw std::invalid_argument("simulate_counts: rates and populations must be valid");
        const double mean = pop * r;
        if (mean > 1e12) throw std::invalid_argument("simulate_counts: Poisson mean above 1e12");
        double o = 0.0;
        if (mean > 0.0) {
            std::poisson_distribution<long long> pd(mean);
            o = static_cast<double>(pd(rng));
        }
        (k < n ? d.counts_i[k] : d.counts_m[k - n]) = o;
    }
    return d;
}

Eigen::VectorXd synth_populations(int A, int T, std::uint64_t seed, double lo, double hi) {
    if (!(lo > 0.0) || !(lo < hi)) throw std::invalid_argument("synth_populations: need 0 < lo < hi");
    Rng rng = Rng::derive(seed, {kPopulationTag});
    Eigen::VectorXd pop(static_cast<Eigen::Index>(A) * T);
    const double a = std::log(lo), b = std::log(hi);
    for (int i = 0; i < A; ++i) {
        const double v = std::exp(a + (b - a) * rng.uniform());
        for (int t = 0; t < T; ++t) pop[t * A + i] = v;
    }
    return pop;
}

Eigen::VectorXd read_population_file(const std::string& path, int A, int T) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open population file '" + path + "'");
    std::string line;
    std::getline(in, line);
    if (line.rfind("area,population", 0) != 0) throw DataError("population file header must be 'area,population'");
    Eigen::VectorXd per_area = Eigen::VectorXd::Constant(A, -1.0);
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ss(line);
        std::string a, p;
        std::getline(ss, a, ',');
        std::getline(ss, p, ',');
        int area = 0;
        double pop = 0.0;
        try {
            area = std::stoi(a);
            pop = std::stod(p);
        } catch (const std::exception&) {
            throw DataError("population file: malformed line '" + line + "'");
        }
        if (area < 0 || area >= A) throw DataError("population file: area out of range");
        if (!(pop > 0.0)) throw DataError("population file: populations must be positive");
        per_area[area] = pop;
    }
    if ((per_area.array() < 0.0).any()) throw DataError("population file: every area needs a population");
    Eigen::VectorXd out(static_cast<Eigen::Index>(A) * T);
    for (int t = 0; t < T; ++t) out.segment(static_cast<Eigen::Index>(t) * A, A) = per_area;
    return out;
}

// ---------------------------------------------------------------------------

StudyConfig StudyConfig::from_json(const std::string& text) {
    StudyConfig c;
    try {
        const nlohmann::json j = nlohmann::json::parse(text);
        if (!j.is_object()) throw std::invalid_argument("study config must be an object");
        c.graph_file = j.value("graph", c.graph_file);
        c.grid = j.value("grid", c.grid);
        c.T = j.value("T", c.T);
        c.replicates = j.value("replicates", c.replicates);
        c.population_file = j.value("population_file", c.population_file);
        if (j.contains("models")) c.models = j["models"].get<std::vector<std::string>>();
        if (j.contains("scenarios")) c.scenarios = j["scenarios"].get<std::vector<int>>();
        if (j.contains("interactions")) {
            c.interactions.clear();
            for (const auto& s : j["interactions"].get<std::vector<std::string>>()) {
                c.interactions.push_back(interaction_from_string(s));
            }
        }
        c.seed = j.value("seed", c.seed);
        c.fixed_truth = j.value("fixed_truth", c.fixed_truth);
        c.threads = j.value("threads", c.threads);
        if (j.contains("fit")) c.fit = FitConfig::from_json(j["fit"].dump());
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("study config: ") + e.what());
    }
    if (c.replicates < 1) throw std::invalid_argument("study config: replicates must be >= 1");
    if (c.models.empty()) throw std::invalid_argument("study config: model list is empty");
    if (c.T < 3) throw std::invalid_argument("study config: T must be >= 3");
    for (int s : c.scenarios) {
        if (s < 1 || s > 3) throw std::invalid_argument("study config: scenarios must be 1, 2 or 3");
    }
    return c;
}

std::string StudyConfig::to_json() const {
    nlohmann::ordered_json j;
    j["graph"] = graph_file;
    j["grid"] = grid;
    j["T"] = T;
    j["replicates"] = replicates;
    j["population_file"] = population_file;
    j["models"] = models;
    j["scenarios"] = scenarios;
    std::vector<std::string> types;
    for (auto t : interactions) types.push_back(to_string(t));
    j["interactions"] = types;
    j["seed"] = seed;
    j["fixed_truth"] = fixed_truth;
    j["threads"] = threads;
    j["fit"] = nlohmann::ordered_json::parse(fit.to_json());
    return j.dump(2);
}

std::string study_model_name(const std::string& label) { return "Model " + label; }

int worker_count(int requested) {
    int n = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
    if (n < 1) n = 1;
    if (const char* env = std::getenv("STSHARED_THREADS")) {
        const int cap = std::atoi(env);
        if (cap >= 1) n = std::min(n, cap);
    }
    return n;
}

StudyReport run_study(const StudyConfig& cfg) {
    const AdjacencyGraph graph = cfg.graph_file.empty() ? lattice_from_spec(cfg.grid) : load_graph_file(cfg.graph_file);
    const int A = graph.n_areas();
    const int T = cfg.T;
    const Eigen::VectorXd population = cfg.population_file.empty()
                                           ? synth_populations(A, T, cfg.seed)
                                           : read_population_file(cfg.population_file, A, T);

    struct Sub {
        Scenario scenario;
        std::vector<std::shared_ptr<const JointModel>> models;
    };
    std::vector<Sub> subs;
    for (int sid : cfg.scenarios) {
        for (InteractionType type : cfg.interactions) {
            Sub sub;
            sub.scenario = Scenario::standard(sid, type, T);
            if (std::find(cfg.models.begin(), cfg.models.end(), sub.scenario.true_model()) == cfg.models.end()) {
                throw std::invalid_argument("study: the true model of scenario " + std::to_string(sid) +
                                            " must be among the fitted models");
            }
            for (const auto& label : cfg.models) {
                sub.models.push_back(std::make_shared<const JointModel>(ModelSpec::from_label(label, type, T), graph, T));
            }
            subs.push_back(std::move(sub));
        }
    }

    const int n_models = static_cast<int>(cfg.models.size());
    const int n_tasks = static_cast<int>(subs.size()) * cfg.replicates;
    std::vector<ReplicateRecord> records(static_cast<std::size_t>(n_tasks) * n_models);

    auto run_task = [&](int task) {
        const int si = task / cfg.replicates;
        const int rep = task % cfg.replicates;
        const Sub& sub = subs[si];
        const auto sc = static_cast<std::uint64_t>(sub.scenario.id);
        const auto ty = static_cast<std::uint64_t>(sub.scenario.interaction);
        const std::uint64_t truth_rep = cfg.fixed_truth ? 0 : static_cast<std::uint64_t>(rep);
        for (int m = 0; m < n_models; ++m) {
            auto& r = records[static_cast<std::size_t>(task) * n_models + m];
            r.scenario = sub.scenario.id;
            r.interaction = sub.scenario.interaction;
            r.replicate = rep;
            r.model = cfg.models[m];
        }
        try {
            const std::uint64_t tseed = Rng::derive(cfg.seed, {kTruthTag, sc, ty, truth_rep})();
            const Truth truth = generate_truth(sub.scenario, graph, T, tseed);
            const std::uint64_t cseed = Rng::derive(cfg.seed, {kCountTag, sc, ty, static_cast<std::uint64_t>(rep)})();
            const ObservationSet data = simulate_counts(truth.rate_i, truth.rate_m, population, A, T, cseed);
            Eigen::VectorXd truth_rates(2 * A * T);
            truth_rates << truth.rate_i, truth.rate_m;
            for (int m = 0; m < n_models; ++m) {
                auto& r = records[static_cast<std::size_t>(task) * n_models + m];
                try {
                    FitConfig fc = cfg.fit;
                    fc.seed = Rng::derive(cfg.seed, {kFitTag, sc, ty, static_cast<std::uint64_t>(rep),
                                                     static_cast<std::uint64_t>(m)})();
                    const FitResult fr = fit(*sub.models[m], data, fc);
                    r.dic = dic(fr.predictive_store, data).dic;
                    r.waic = waic(fr.predictive_store, data).waic;
                    r.ls = log_score(fr.predictive_store, data).ls;
                    const Eigen::VectorXd med = fr.rate_quantiles.col(1);
                    const Eigen::VectorXd lo = fr.rate_quantiles.col(0);
                    const Eigen::VectorXd hi = fr.rate_quantiles.col(2);
                    r.marb = marb({med}, {truth_rates});
                    r.mrrmse = mrrmse({med}, {truth_rates});
                    // Interval metrics on rates per 100 000.
                    r.is = interval_score(lo * 1e5, hi * 1e5, truth_rates * 1e5, 0.05);
                    const auto [cil, cov] = cil_coverage(lo * 1e5, hi * 1e5, truth_rates * 1e5);
                    r.cil = cil;
                    r.coverage = cov;
                    r.cells = static_cast<int>(truth_rates.size());
                    r.covered = static_cast<int>(std::lround(cov / 100.0 * r.cells));
                    for (const auto& hs : fr.hyper_summary) {
                        if (hs.name == "delta") r.delta_median = hs.q500;
                        if (hs.name.rfind("rho_", 0) == 0) r.rho_median.push_back(hs.q500);
                    }
                    check_scaling_identifiability(fr.hyper_mode.rho, &r.identifiability_residual);
                    r.max_constraint_residual = fr.diagnostics.max_constraint_residual;
                    r.ok = true;
                } catch (const std::exception& e) {
                    r.ok = false;
                    r.error = e.what();
                }
            }
        } catch (const std::exception& e) {
            for (int m = 0; m < n_models; ++m) {
                auto& r = records[static_cast<std::size_t>(task) * n_models + m];
                r.ok = false;
                r.error = e.what();
            }
        }
    };

    const int workers = std::min(worker_count(cfg.threads), std::max(1, n_tasks));
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int t = next.fetch_add(1); t < n_tasks; t = next.fetch_add(1)) run_task(t);
    };
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    // Single-threaded reduction.
    StudyReport report;
    report.records = records;
    for (std::size_t si = 0; si < subs.size(); ++si) {
        const Sub& sub = subs[si];
        SubScenarioSummary sum;
        sum.scenario = sub.scenario.id;
        sum.interaction = sub.scenario.interaction;
        sum.true_model = sub.scenario.true_model();
        const int true_idx = static_cast<int>(
            std::find(cfg.models.begin(), cfg.models.end(), sum.true_model) - cfg.models.begin());
        auto rec = [&](int rep, int m) -> const ReplicateRecord& {
            return records[(si * cfg.replicates + rep) * n_models + m];
        };
        int failed = 0;
        for (int m = 0; m < n_models; ++m) {
            ModelSummary ms;
            ms.model = cfg.models[m];
            ms.is_true = m == true_idx;
            std::vector<double> dd, wd, ld;
            double covered = 0.0, cells = 0.0, cov_sum = 0.0;
            for (int rep = 0; rep < cfg.replicates; ++rep) {
                const auto& r = rec(rep, m);
                if (!r.ok) {
                    ++ms.n_failed;
                    continue;
                }
                ++ms.n_ok;
                ms.marb += r.marb;
                ms.mrrmse += r.mrrmse;
                ms.is += r.is;
                ms.cil += r.cil;
                cov_sum += r.coverage;
                covered += r.covered;
                cells += r.cells;
                const auto& t = rec(rep, true_idx);
                if (!ms.is_true && t.ok) {
                    dd.push_back(r.dic - t.dic);
                    wd.push_back(r.waic - t.waic);
                    ld.push_back(r.ls - t.ls);
                }
            }
            failed += ms.n_failed;
            if (ms.n_ok > 0) {
                ms.marb /= ms.n_ok;
                ms.mrrmse /= ms.n_ok;
                ms.is /= ms.n_ok;
                ms.cil /= ms.n_ok;
                ms.coverage_mean = cov_sum / ms.n_ok;
                ms.coverage_pooled = 100.0 * covered / cells;
            }
            if (!dd.empty()) {
                ms.dic_diff = percentiles(dd);
                ms.waic_diff = percentiles(wd);
                ms.ls_diff = percentiles(ld);
            }
            sum.models.push_back(ms);
        }
        sum.high_failure = failed > 0.05 * n_models * cfg.replicates;
        report.summaries.push_back(std::move(sum));
    }
    return report;
}

void StudyReport::write(const std::string& dir) const {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "replicates");
    {
        std::ofstream out(fs::path(dir) / "report_ic.csv");
        out << "scenario,interaction,model,criterion,p2.5,p50,p97.5\n";
        for (const auto& s : summaries) {
            for (const auto& m : s.models) {
                const std::pair<const char*, const Percentiles*> crit[] = {
                    {"DIC", &m.dic_diff}, {"WAIC", &m.waic_diff}, {"LS", &m.ls_diff}};
                for (const auto& [name, p] : crit) {
                    out << s.scenario << ',' << type_name(s.interaction) << ',' << study_model_name(m.model) << ','
                        << name << ',';
                    if (m.is_true) out << "-,-,-\n";
                    else out << format_number(p->p025) << ',' << format_number(p->p500) << ','
                             << format_number(p->p975) << '\n';
                }
            }
        }
    }
    {
        std::ofstream out(fs::path(dir) / "report_pred.csv");
        out << "scenario,interaction,model,MARB,MARB_delta_pct,IS,IS_delta_pct,MRRMSE,MRRMSE_delta_pct,CIL,"
               "CIL_delta_pct,coverage,coverage_replicate_mean,n_ok,n_failed,failure_flag\n";
        for (const auto& s : summaries) {
            const ModelSummary* ref = nullptr;
            for (const auto& m : s.models) {
                if (m.is_true) ref = &m;
            }
            for (const auto& m : s.models) {
                auto delta = [&](double v, double base) {
                    if (m.is_true || ref == nullptr || base == 0.0) return std::string("-");
                    return format_number(delta_vs_reference(v, base));
                };
                out << s.scenario << ',' << type_name(s.interaction) << ',' << study_model_name(m.model) << ','
                    << format_number(m.marb) << ',' << delta(m.marb, ref ? ref->marb : 0.0) << ','
                    << format_number(m.is) << ',' << delta(m.is, ref ? ref->is : 0.0) << ','
                    << format_number(m.mrrmse) << ',' << delta(m.mrrmse, ref ? ref->mrrmse : 0.0) << ','
                    << format_number(m.cil) << ',' << delta(m.cil, ref ? ref->cil : 0.0) << ','
                    << format_number(m.coverage_pooled) << ',' << format_number(m.coverage_mean) << ',' << m.n_ok
                    << ',' << m.n_failed << ',' << (s.high_failure ? 1 : 0) << '\n';
            }
        }
    }
    std::map<std::pair<int, int>, std::vector<const ReplicateRecord*>> groups;
    for (const auto& r : records) groups[{r.scenario, static_cast<int>(r.interaction)}].push_back(&r);
    for (const auto& [key, rows] : groups) {
        std::ofstream out(fs::path(dir) / "replicates" /
                          ("scenario" + std::to_string(key.first) + "_type" +
                           type_name(static_cast<InteractionType>(key.second)) + ".csv"));
        std::size_t max_rho = 0;
        for (const auto* r : rows) max_rho = std::max(max_rho, r->rho_median.size());
        out << "replicate,model,ok,DIC,WAIC,LS,MARB,MRRMSE,IS,CIL,coverage,delta_median";
        for (std::size_t k = 0; k < max_rho; ++k) out << ",rho_" << k + 1 << "_median";
        out << ",error\n";
        for (const auto* r : rows) {
            out << r->replicate << ',' << study_model_name(r->model) << ',' << (r->ok ? 1 : 0);
            for (double v : {r->dic, r->waic, r->ls, r->marb, r->mrrmse, r->is, r->cil, r->coverage, r->delta_median}) {
                out << ',' << (r->ok ? format_number(v) : std::string("NA"));
            }
            for (std::size_t k = 0; k < max_rho; ++k) {
                out << ',' << (k < r->rho_median.size() && r->ok ? format_number(r->rho_median[k]) : std::string(""));
            }
            std::string err = r->error;
            std::replace(err.begin(), err.end(), ',', ';');
            std::replace(err.begin(), err.end(), '\n', ' ');
            out << ',' << err << '\n';
        }
    }
}

}  // namespace stshared
