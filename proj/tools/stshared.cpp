#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "stshared/graph.hpp"
#include "stshared/inference.hpp"
#include "stshared/model.hpp"
#include "stshared/observations.hpp"
#include "stshared/rng.hpp"
#include "stshared/scoring.hpp"
#include "stshared/simstudy.hpp"
#include "stshared/structure.hpp"
#include "stshared/summaries.hpp"
#include "svg_chart.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stshared;

namespace {

constexpr const char* kVersion = "0.1.0";

/// Input validation failure (exit code 2).
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string read_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

/// FNV-1a over the canonical (key-sorted) JSON dump.
std::string config_digest(const json& config) {
    const std::string text = config.dump();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Collects output files and writes manifest.json at the end of a run.
class Run {
public:
    Run(std::string command, std::string out_dir) : command_(std::move(command)), out_(std::move(out_dir)) {
        started_ = utc_now();
        if (!out_.empty()) fs::create_directories(out_);
    }

    fs::path path(const std::string& rel) const { return fs::path(out_) / rel; }

    std::ofstream open(const std::string& rel) {
        const fs::path p = path(rel);
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        std::ofstream f(p);
        if (!f) throw std::runtime_error("cannot write '" + p.string() + "'");
        outputs_.push_back(rel);
        return f;
    }

    void record(const std::string& rel) { outputs_.push_back(rel); }

    void finish(const json& config, std::uint64_t seed) {
        if (out_.empty()) return;
        json m;
        m["command"] = command_;
        m["config"] = config;
        m["config_digest"] = config_digest(config);
        m["seed"] = seed;
        m["tool_version"] = kVersion;
        m["started"] = started_;
        m["finished"] = utc_now();
        std::sort(outputs_.begin(), outputs_.end());
        m["outputs"] = outputs_;
        std::ofstream f(path("manifest.json"));
        f << m.dump(2) << '\n';
    }

private:
    std::string command_;
    std::string out_;
    std::string started_;
    std::vector<std::string> outputs_;
};

struct GraphSource {
    std::string file;
    std::string grid;

    void add(CLI::App* app) {
        app->add_option("--graph", file, "Adjacency graph file");
        app->add_option("--grid", grid, "Lattice graph RxC, e.g. 5x5");
    }

    AdjacencyGraph load() const {
        if (!file.empty() && !grid.empty()) throw UsageError("use either --graph or --grid, not both");
        if (!file.empty()) return load_graph_file(file);
        if (!grid.empty()) return lattice_from_spec(grid);
        throw UsageError("a graph is required (--graph or --grid)");
    }

    json describe() const { return file.empty() ? json{{"grid", grid}} : json{{"graph", file}}; }
};

InteractionType parse_interaction(const std::string& s) {
    try {
        return interaction_from_string(s);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
}

std::string fmt(double v) { return format_number(v); }

/// Nine significant digits, for quantities on arbitrary scales.
std::string sig(double v) {
    if (!std::isfinite(v)) return format_number(v);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

void write_bands(std::ostream& out, const std::string& prefix, const Eigen::MatrixXd& q, int row) {
    out << prefix << ',' << sig(q(row, 0)) << ',' << sig(q(row, 1)) << ',' << sig(q(row, 2)) << '\n';
}

// ---------------------------------------------------------------------------
// graph

int cmd_graph(const GraphSource& src, int T, const std::string& out_dir) {
    if (T < 3) throw UsageError("--periods must be >= 3");
    const AdjacencyGraph g = src.load();
    const StructureMatrix rk = icar_structure(g);
    const StructureMatrix r1 = rw1_structure(T);
    const StructureMatrix r2 = rw2_structure(T);
    json rep;
    rep["areas"] = g.n_areas();
    rep["edges"] = g.edges().size();
    rep["connected"] = g.connected();
    rep["components"] = g.n_components();
    rep["periods"] = T;
    rep["icar"] = {{"rank", rk.rank()}, {"null_dim", rk.nullity()}};
    rep["rw1"] = {{"rank", r1.rank()}, {"null_dim", r1.nullity()}};
    rep["rw2"] = {{"rank", r2.rank()}, {"null_dim", r2.nullity()}};
    json types = json::object();
    for (auto t : {InteractionType::I, InteractionType::II, InteractionType::III, InteractionType::IV}) {
        const StructureMatrix q = interaction_structure(t, r1, rk);
        types[to_string(t)] = {{"dim", q.dim()}, {"rank", q.rank()}, {"null_dim", q.nullity()}};
    }
    rep["interaction"] = types;
    std::cout << rep.dump(2) << '\n';
    Run run("graph", out_dir);
    if (!out_dir.empty()) {
        run.open("graph_report.json") << rep.dump(2) << '\n';
        run.finish({{"source", src.describe()}, {"periods", T}}, 0);
    }
    return 0;
}

// ---------------------------------------------------------------------------
// simulate

void write_truth_csv(std::ostream& out, const Truth& t, int A, int T) {
    out << "area,period,outcome,rate\n";
    for (int d = 0; d < 2; ++d) {
        for (int tt = 0; tt < T; ++tt) {
            for (int i = 0; i < A; ++i) {
                const double r = (d == 0 ? t.rate_i : t.rate_m)[tt * A + i];
                char buf[64];
                std::snprintf(buf, sizeof buf, "%.17g", r);
                out << i << ',' << tt + 1 << ',' << (d == 0 ? 'I' : 'M') << ',' << buf << '\n';
            }
        }
    }
}

Eigen::VectorXd read_truth_csv(const std::string& path, int A, int T) {
    std::istringstream in(read_text(path));
    std::string line;
    std::getline(in, line);
    if (line.rfind("area,period,outcome,rate", 0) != 0) throw UsageError("truth file header must be 'area,period,outcome,rate'");
    Eigen::VectorXd r = Eigen::VectorXd::Constant(2 * A * T, std::nan(""));
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        std::istringstream ls(line);
        std::string a, p, o, v;
        std::getline(ls, a, ',');
        std::getline(ls, p, ',');
        std::getline(ls, o, ',');
        std::getline(ls, v, ',');
        try {
            const int i = std::stoi(a), t = std::stoi(p) - 1;
            if (i < 0 || i >= A || t < 0 || t >= T || (o != "I" && o != "M")) throw UsageError("");
            r[(o == "I" ? 0 : A * T) + t * A + i] = std::stod(v);
        } catch (const std::exception&) {
            throw UsageError("truth file: malformed line '" + line + "'");
        }
    }
    if (r.hasNaN()) throw UsageError("truth file does not cover every cell");
    return r;
}

int cmd_simulate(const GraphSource& src, int T, int scenario, const std::string& interaction, std::uint64_t seed,
                 const std::string& population_file, const std::string& out_dir) {
    if (out_dir.empty()) throw UsageError("--out is required");
    if (scenario < 1 || scenario > 3) throw UsageError("--scenario must be 1, 2 or 3");
    if (T < 3) throw UsageError("--periods must be >= 3");
    const AdjacencyGraph g = src.load();
    const int A = g.n_areas();
    const Scenario s = Scenario::standard(scenario, parse_interaction(interaction), T);
    const Truth truth = generate_truth(s, g, T, Rng::derive(seed, {1})());
    const Eigen::VectorXd pop = population_file.empty() ? synth_populations(A, T, Rng::derive(seed, {2})())
                                                        : read_population_file(population_file, A, T);
    const ObservationSet data = simulate_counts(truth.rate_i, truth.rate_m, pop, A, T, Rng::derive(seed, {3})());
    Run run("simulate", out_dir);
    {
        auto f = run.open("data.csv");
        write_observations_csv(f, data);
    }
    {
        auto f = run.open("truth.csv");
        write_truth_csv(f, truth, A, T);
    }
    {
        auto f = run.open("graph.txt");
        write_graph(f, g);
    }
    run.finish({{"source", src.describe()},
                {"periods", T},
                {"scenario", scenario},
                {"interaction", interaction},
                {"population_file", population_file}},
               seed);
    return 0;
}

// ---------------------------------------------------------------------------
// fit

ModelSpec resolve_model(const std::string& m, InteractionType type, int T) {
    try {
        if (fs::exists(m) && fs::is_regular_file(m)) return model_spec_from_config(read_text(m), T);
        return ModelSpec::from_label(m, type, T);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
}

void write_fit_outputs(Run& run, const std::string& dir, const JointModel& model, const FitResult& fr) {
    const auto& l = fr.layout;
    const int A = l.A;
    const int T = l.T;
    const FitSummaries s = summarize(model, fr);
    run.open(dir + "/model.json") << to_config(fr.spec) << '\n';
    {
        auto f = run.open(dir + "/hyperparameters.csv");
        f << "name,mode,mean,sd,q025,q500,q975\n";
        for (const auto& h : fr.hyper_summary) {
            f << h.name << ',' << sig(h.mode) << ',' << sig(h.mean) << ',' << sig(h.sd) << ',' << sig(h.q025) << ','
              << sig(h.q500) << ',' << sig(h.q975) << '\n';
        }
    }
    {
        auto f = run.open(dir + "/shared_spatial.csv");
        f << "outcome,area,q025,q500,q975\n";
        for (int i = 0; i < A; ++i) write_bands(f, "I," + std::to_string(i), s.shared_spatial_i, i);
        for (int i = 0; i < A; ++i) write_bands(f, "M," + std::to_string(i), s.shared_spatial_m, i);
    }
    {
        auto f = run.open(dir + "/temporal.csv");
        f << "outcome,period,q025,q500,q975\n";
        for (int t = 0; t < T; ++t) write_bands(f, "I," + std::to_string(t + 1), s.temporal_i, t);
        for (int t = 0; t < T; ++t) write_bands(f, "M," + std::to_string(t + 1), s.temporal_m, t);
    }
    auto cell_rows = [&](std::ostream& f, const Eigen::MatrixXd& qi, const Eigen::MatrixXd& qm) {
        for (int d = 0; d < 2; ++d) {
            for (int i = 0; i < A; ++i) {
                for (int t = 0; t < T; ++t) {
                    write_bands(f, std::string(d == 0 ? "I," : "M,") + std::to_string(i) + ',' + std::to_string(t + 1),
                                d == 0 ? qi : qm, t * A + i);
                }
            }
        }
    };
    {
        auto f = run.open(dir + "/interaction_trends.csv");
        f << "outcome,area,period,q025,q500,q975\n";
        cell_rows(f, s.trend_i, s.trend_m);
    }
    {
        auto f = run.open(dir + "/rates.csv");
        f << "outcome,area,period,q025,q500,q975\n";
        const Eigen::MatrixXd ri = s.rates_per_100k.topRows(A * T);
        const Eigen::MatrixXd rm = s.rates_per_100k.bottomRows(A * T);
        cell_rows(f, ri, rm);
    }
    {
        json d;
        const auto& g = fr.diagnostics;
        d["objective_evaluations"] = g.objective_evaluations;
        d["newton_failures"] = g.newton_failures;
        d["optimizer_converged"] = g.optimizer_converged;
        d["grid_points"] = g.grid_points;
        d["grid_retained"] = g.grid_retained;
        d["degenerate_grid"] = g.degenerate_grid;
        d["max_constraint_residual"] = fmt(g.max_constraint_residual);
        d["log_marginal_likelihood"] = fmt(g.log_marginal_likelihood);
        d["warnings"] = g.warnings;
        run.open(dir + "/diagnostics.json") << d.dump(2) << '\n';
    }
}

int cmd_fit(const GraphSource& src, const std::string& data_file, std::vector<std::string> models,
            const std::string& interaction, const std::string& config_file, const std::string& truth_file,
            const std::optional<std::uint64_t>& seed, const std::string& out_dir) {
    if (out_dir.empty()) throw UsageError("--out is required");
    if (data_file.empty()) throw UsageError("--data is required");
    const AdjacencyGraph g = src.load();
    const ObservationSet data = read_observations_file(data_file);
    if (data.A != g.n_areas()) {
        throw UsageError("data has " + std::to_string(data.A) + " areas but the graph has " +
                         std::to_string(g.n_areas()));
    }
    const int T = data.T;
    if (T < 3) throw UsageError("at least 3 periods are required");
    FitConfig fc;
    if (!config_file.empty()) {
        try {
            fc = FitConfig::from_json(read_text(config_file));
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
    }
    if (seed) fc.seed = *seed;
    if (models.empty()) models = {"1", "2", "3"};
    const InteractionType type = parse_interaction(interaction);
    std::vector<ModelSpec> specs;
    for (const auto& m : models) specs.push_back(resolve_model(m, type, T));
    std::optional<Eigen::VectorXd> truth;
    if (!truth_file.empty()) truth = read_truth_csv(truth_file, data.A, T);

    Run run("fit", out_dir);
    ScoreTable table;
    std::map<std::string, int> seen;
    for (const auto& spec : specs) {
        std::string name = spec.label() + "_" + to_string(spec.interaction);
        if (seen[name]++ > 0) name += "_" + std::to_string(seen[name]);
        const JointModel model(spec, g, T);
        const FitResult fr = fit(model, data, fc);
        write_fit_outputs(run, "model_" + name, model, fr);
        ScoreRow row;
        row.model = name;
        row.dic = dic(fr.predictive_store, data).dic;
        row.waic = waic(fr.predictive_store, data).waic;
        row.ls = log_score(fr.predictive_store, data).ls;
        const double nan = std::nan("");
        row.marb = row.mrrmse = row.is = row.cil = row.coverage = nan;
        if (truth) {
            const Eigen::VectorXd lo = fr.rate_quantiles.col(0), med = fr.rate_quantiles.col(1),
                                  hi = fr.rate_quantiles.col(2);
            row.marb = marb({med}, {*truth});
            row.mrrmse = mrrmse({med}, {*truth});
            row.is = interval_score(lo * 1e5, hi * 1e5, *truth * 1e5, 0.05);
            std::tie(row.cil, row.coverage) = cil_coverage(lo * 1e5, hi * 1e5, *truth * 1e5);
        }
        if (table.reference.empty()) table.reference = name;
        table.rows.push_back(row);
    }
    {
        auto f = run.open("scores.csv");
        table.write_csv(f);
    }
    {
        const CrudeRates cr = crude_rates(data);
        auto f = run.open("crude_rates.csv");
        f << "outcome,area,period,rate_per_100k\n";
        for (int d = 0; d < 2; ++d) {
            for (int i = 0; i < data.A; ++i) {
                for (int t = 0; t < T; ++t) {
                    f << (d == 0 ? 'I' : 'M') << ',' << i << ',' << t + 1 << ','
                      << fmt((d == 0 ? cr.cell_i : cr.cell_m)[t * data.A + i]) << '\n';
                }
            }
        }
    }
    json models_json = json::array();
    for (const auto& s : specs) models_json.push_back(json::parse(to_config(s)));
    run.finish({{"source", src.describe()},
                {"data", data_file},
                {"models", models_json},
                {"fit", json::parse(fc.to_json())},
                {"truth", truth_file}},
               fc.seed);
    std::cout << "wrote " << specs.size() << " model fit(s) to " << out_dir << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// report

struct BandRow {
    std::string outcome;
    int area = -1;
    int period = 0;
    double lo = 0.0, med = 0.0, hi = 0.0;
};

std::vector<BandRow> read_band_csv(const fs::path& p, bool has_area) {
    if (!fs::exists(p)) throw UsageError("missing input '" + p.string() + "'");
    std::istringstream in(read_text(p.string()));
    std::string line;
    std::getline(in, line);
    std::vector<BandRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> tok;
        std::istringstream ls(line);
        for (std::string t; std::getline(ls, t, ',');) tok.push_back(t);
        const std::size_t need = has_area ? 6 : 5;
        if (tok.size() != need) throw UsageError("malformed line in '" + p.string() + "'");
        BandRow r;
        std::size_t k = 0;
        r.outcome = tok[k++];
        try {
            if (has_area) r.area = std::stoi(tok[k++]);
            r.period = std::stoi(tok[k++]);
            r.lo = std::stod(tok[k++]);
            r.med = std::stod(tok[k++]);
            r.hi = std::stod(tok[k++]);
        } catch (const std::exception&) {
            throw UsageError("malformed number in '" + p.string() + "'");
        }
        rows.push_back(r);
    }
    return rows;
}

ChartSeries make_series(const std::vector<BandRow>& rows, const std::string& outcome, int area) {
    ChartSeries s;
    s.name = outcome == "I" ? "incidence" : "mortality";
    for (const auto& r : rows) {
        if (r.outcome != outcome || r.area != area) continue;
        s.x.push_back(r.period);
        s.lo.push_back(r.lo);
        s.mid.push_back(r.med);
        s.hi.push_back(r.hi);
    }
    return s;
}

void write_chart(Run& run, const std::string& name, const LineChart& chart, std::ostream& points) {
    run.open(name + ".svg") << render_svg(chart);
    for (const auto& s : chart.series) {
        for (std::size_t k = 0; k < s.x.size(); ++k) {
            points << name << ',' << s.name << ',' << sig(s.x[k]) << ',' << sig(s.lo[k]) << ',' << sig(s.mid[k]) << ','
                   << sig(s.hi[k]) << '\n';
        }
    }
}

int cmd_report(const std::string& input, std::vector<int> areas, const std::string& out_dir) {
    if (input.empty()) throw UsageError("--input is required");
    if (out_dir.empty()) throw UsageError("--out is required");
    const fs::path in(input);
    if (!fs::is_directory(in)) throw UsageError("input directory '" + input + "' does not exist");
    const auto temporal = read_band_csv(in / "temporal.csv", false);
    const auto trends = read_band_csv(in / "interaction_trends.csv", true);
    int n_areas = 0;
    for (const auto& r : trends) n_areas = std::max(n_areas, r.area + 1);
    if (areas.empty()) areas = {0};
    for (int a : areas) {
        if (a < 0 || a >= n_areas) throw UsageError("--area out of range");
    }
    Run run("report", out_dir);
    auto points = run.open("chart_points.csv");
    points << "chart,series,x,q025,q500,q975\n";
    {
        LineChart c;
        c.title = "Temporal components exp(alpha + gamma_t)";
        c.x_label = "period";
        c.y_label = "relative rate";
        c.series = {make_series(temporal, "I", -1), make_series(temporal, "M", -1)};
        write_chart(run, "temporal", c, points);
    }
    for (int a : areas) {
        LineChart c;
        c.title = "Interaction trend, area " + std::to_string(a);
        c.x_label = "period";
        c.y_label = "relative risk";
        c.series = {make_series(trends, "I", a), make_series(trends, "M", a)};
        write_chart(run, "trend_area" + std::to_string(a), c, points);
    }
    run.finish({{"input", input}, {"areas", areas}}, 0);
    return 0;
}

// ---------------------------------------------------------------------------
// study

int cmd_study(const GraphSource& src, const std::string& config_file, const std::optional<int>& replicates,
              const std::vector<int>& scenarios, const std::vector<std::string>& interactions,
              const std::optional<std::uint64_t>& seed, const std::optional<int>& periods, bool full_scale,
              const std::string& out_dir) {
    if (out_dir.empty()) throw UsageError("--out is required");
    StudyConfig cfg;
    try {
        if (!config_file.empty()) cfg = StudyConfig::from_json(read_text(config_file));
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    if (!src.file.empty() && !src.grid.empty()) throw UsageError("use either --graph or --grid, not both");
    if (!src.file.empty()) {
        cfg.graph_file = src.file;
    } else if (!src.grid.empty()) {
        cfg.graph_file.clear();
        cfg.grid = src.grid;
    }
    if (full_scale) {
        if (cfg.graph_file.empty()) throw UsageError("--full-scale needs a user-supplied --graph");
        cfg.replicates = 100;
    }
    if (replicates) cfg.replicates = *replicates;
    if (!scenarios.empty()) cfg.scenarios = scenarios;
    if (!interactions.empty()) {
        cfg.interactions.clear();
        for (const auto& s : interactions) cfg.interactions.push_back(parse_interaction(s));
    }
    if (seed) cfg.seed = *seed;
    if (periods) cfg.T = *periods;
    try {
        cfg = StudyConfig::from_json(cfg.to_json());
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    if (cfg.graph_file.empty()) lattice_from_spec(cfg.grid);
    else load_graph_file(cfg.graph_file);

    const StudyReport report = run_study(cfg);
    Run run("study", out_dir);
    report.write(out_dir);
    run.record("report_ic.csv");
    run.record("report_pred.csv");
    for (const auto& e : fs::directory_iterator(fs::path(out_dir) / "replicates")) {
        run.record("replicates/" + e.path().filename().string());
    }
    int failed = 0;
    for (const auto& r : report.records) failed += r.ok ? 0 : 1;
    std::cout << "study: " << report.records.size() << " fits, " << failed << " failed; reports in " << out_dir
              << '\n';
    run.finish(json::parse(cfg.to_json()), cfg.seed);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Joint spatio-temporal disease mapping with shared interactions"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    GraphSource graph_src, sim_src, fit_src, study_src;
    std::string out;
    int periods = 9;
    std::optional<int> study_periods;

    auto* g = app.add_subcommand("graph", "Validate a graph and report null-space dimensions");
    graph_src.add(g);
    g->add_option("--periods", periods, "Number of periods T for the interaction structures");
    g->add_option("--out", out, "Output directory for graph_report.json");

    int scenario = 2;
    std::string interaction = "I";
    std::uint64_t sim_seed = 1;
    std::string population_file;
    auto* sim = app.add_subcommand("simulate", "Simulate a data set from a scenario truth");
    sim_src.add(sim);
    sim->add_option("--periods", periods, "Number of periods T");
    sim->add_option("--scenario", scenario, "Scenario 1, 2 or 3");
    sim->add_option("--interaction", interaction, "Interaction type I, II, III or IV");
    sim->add_option("--seed", sim_seed, "Random seed");
    sim->add_option("--population", population_file, "Population file (area,population)");
    sim->add_option("--out", out, "Output directory");

    std::string data_file, config_file, truth_file;
    std::vector<std::string> models;
    std::optional<std::uint64_t> seed;
    auto* f = app.add_subcommand("fit", "Fit one or more models to a data set");
    fit_src.add(f);
    f->add_option("--data", data_file, "Data CSV (area,period,outcome,count,population)");
    f->add_option("--model", models, "Model label (e.g. 1, 2, 3.1a) or model JSON file; repeatable");
    f->add_option("--interaction", interaction, "Interaction type for model labels");
    f->add_option("--config", config_file, "Fit configuration JSON");
    f->add_option("--truth", truth_file, "True rates CSV (area,period,outcome,rate) for predictive scores");
    f->add_option("--seed", seed, "Random seed");
    f->add_option("--out", out, "Output directory");

    std::string input;
    std::vector<int> areas;
    auto* r = app.add_subcommand("report", "Render charts from a fitted model directory");
    r->add_option("--input", input, "Model directory written by `fit`");
    r->add_option("--area", areas, "Areas for interaction-trend charts; repeatable");
    r->add_option("--out", out, "Output directory");

    std::optional<int> replicates;
    std::vector<int> scenarios;
    std::vector<std::string> interactions;
    bool full_scale = false;
    auto* s = app.add_subcommand("study", "Run the simulation study");
    study_src.add(s);
    s->add_option("--config", config_file, "Study configuration JSON");
    s->add_option("--replicates", replicates, "Replicates per sub-scenario");
    s->add_option("--scenario", scenarios, "Scenarios to run; repeatable");
    s->add_option("--interaction", interactions, "Interaction types to run; repeatable");
    s->add_option("--seed", seed, "Master seed");
    s->add_option("--periods", study_periods, "Number of periods T");
    s->add_flag("--full-scale", full_scale, "100 replicates on a user-supplied graph");
    s->add_option("--out", out, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*g) return cmd_graph(graph_src, periods, out);
        if (*sim) return cmd_simulate(sim_src, periods, scenario, interaction, sim_seed, population_file, out);
        if (*f) return cmd_fit(fit_src, data_file, models, interaction, config_file, truth_file, seed, out);
        if (*r) return cmd_report(input, areas, out);
        if (*s) {
            return cmd_study(study_src, config_file, replicates, scenarios, interactions, seed, study_periods,
                             full_scale, out);
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const GraphError& e) {
        std::cerr << "invalid graph: " << e.what() << '\n';
        return 2;
    } catch (const DataError& e) {
        std::cerr << "invalid data: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
