#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kCli = STSHARED_CLI_PATH;
const fs::path kData = STSHARED_TEST_DATA;

int run(const std::string& args) {
    const std::string cmd = "\"" + kCli + "\" " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string run_stdout(const std::string& args) {
    const fs::path out = fs::temp_directory_path() / "stshared_cli_stdout.txt";
    const std::string cmd = "\"" + kCli + "\" " + args + " >\"" + out.string() + "\" 2>/dev/null";
    REQUIRE(std::system(cmd.c_str()) == 0);
    std::ifstream in(out);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("stshared_cli_" + name);
    fs::remove_all(p);
    return p;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

/// Every CSV and SVG file below `dir`, keyed by relative path.
std::map<std::string, std::string> artifacts(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        const auto ext = e.path().extension();
        if (ext == ".csv" || ext == ".svg") out[fs::relative(e.path(), dir).string()] = slurp(e.path());
    }
    return out;
}

std::string toy_fit_args(const fs::path& out) {
    return "fit --graph " + q(kData / "toy_graph.txt") + " --data " + q(kData / "toy_data.csv") + " --truth " +
           q(kData / "toy_truth.csv") + " --model 1 --model 2 --seed 5 --out " + q(out);
}

}  // namespace

TEST_CASE("graph command") {
    const std::string rep = run_stdout("graph --grid 3x3 --periods 4");
    const json j = json::parse(rep);
    CHECK(j["areas"] == 9);
    CHECK(j["connected"] == true);
    CHECK(j["interaction"]["IV"]["null_dim"] == 9 + 4 - 1);
    CHECK(j["interaction"]["I"]["null_dim"] == 0);
    CHECK(j["interaction"]["II"]["null_dim"] == 9);
    CHECK(j["interaction"]["III"]["null_dim"] == 4);
    CHECK(run("graph --graph " + q(kData / "toy_graph.txt")) == 0);
    CHECK(run("graph --graph " + q(kData / "asymmetric_graph.txt")) == 2);
    CHECK(run("graph --grid 3x") == 2);
    CHECK(run("graph") == 2);
    CHECK(run("graph --grid 3x3 --bogus") == 2);
    const fs::path out = scratch("graph");
    CHECK(run("graph --grid 2x2 --out " + q(out)) == 0);
    CHECK(fs::exists(out / "graph_report.json"));
    CHECK(fs::exists(out / "manifest.json"));
}

TEST_CASE("simulate command") {
    const fs::path a = scratch("sim_a"), b = scratch("sim_b");
    const std::string args = "simulate --grid 2x3 --periods 3 --scenario 3 --interaction IV --seed 4 --out ";
    CHECK(run(args + q(a)) == 0);
    CHECK(run(args + q(b)) == 0);
    CHECK(artifacts(a) == artifacts(b));
    CHECK(artifacts(a).size() == 2);
    CHECK(run("simulate --grid 2x3 --scenario 4 --out " + q(a)) == 2);
    CHECK(run("simulate --grid 2x3 --interaction V --out " + q(a)) == 2);
    CHECK(run("simulate --grid 2x3") == 2);
}

TEST_CASE("fit and report on bundled toy data") {
    const fs::path a = scratch("fit_a"), b = scratch("fit_b");
    REQUIRE(run(toy_fit_args(a)) == 0);
    REQUIRE(run(toy_fit_args(b)) == 0);
    const auto fa = artifacts(a);
    CHECK(fa == artifacts(b));
    for (const char* f : {"scores.csv", "crude_rates.csv", "model_1.1_I/rates.csv", "model_2.1_I/temporal.csv",
                          "model_2.1_I/shared_spatial.csv", "model_2.1_I/interaction_trends.csv",
                          "model_1.1_I/hyperparameters.csv"}) {
        CHECK_MESSAGE(fa.count(f) == 1, f);
    }
    const json m = json::parse(slurp(a / "manifest.json"));
    CHECK(m["command"] == "fit");
    CHECK(m["seed"] == 5);
    CHECK(m["outputs"].size() == fa.size() + 4);  // plus model.json and diagnostics.json per model

    const std::string scores = fa.at("scores.csv");
    CHECK(scores.find("\n1.1_I,") != std::string::npos);
    CHECK(scores.find("\n2.1_I,") != std::string::npos);

    const fs::path ra = scratch("report_a"), rb = scratch("report_b");
    REQUIRE(run("report --input " + q(a / "model_2.1_I") + " --area 0 --area 4 --out " + q(ra)) == 0);
    REQUIRE(run("report --input " + q(a / "model_2.1_I") + " --area 0 --area 4 --out " + q(rb)) == 0);
    CHECK(artifacts(ra) == artifacts(rb));
    CHECK(fs::exists(ra / "temporal.svg"));
    CHECK(fs::exists(ra / "trend_area4.svg"));

    // A plotted median in the SVG agrees with the band CSV under the chart's axis mapping.
    std::istringstream pts(slurp(ra / "chart_points.csv"));
    std::string line;
    std::getline(pts, line);
    std::vector<std::vector<double>> rows;  // series index, x, lo, mid, hi
    while (std::getline(pts, line)) {
        std::vector<std::string> tok;
        std::istringstream ls(line);
        for (std::string t; std::getline(ls, t, ',');) tok.push_back(t);
        if (tok[0] != "temporal") continue;
        rows.push_back({tok[1] == "incidence" ? 0.0 : 1.0, std::stod(tok[2]), std::stod(tok[3]), std::stod(tok[4]),
                        std::stod(tok[5])});
    }
    REQUIRE(rows.size() == 8);
    double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
    for (const auto& r : rows) {
        x0 = std::min(x0, r[1]);
        x1 = std::max(x1, r[1]);
        y0 = std::min({y0, r[2], r[3]});
        y1 = std::max({y1, r[4], r[3]});
    }
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
    const auto& r = rows[2];
    const double px = 70 + (r[1] - x0) / (x1 - x0) * 550;
    const double py = 40 + (1.0 - (r[3] - y0) / (y1 - y0)) * 310;
    std::smatch mt;
    const std::string svg = slurp(ra / "temporal.svg");
    REQUIRE(std::regex_search(svg, mt, std::regex("class=\"median\"[^>]*points=\"([^\"]*)\"")));
    std::istringstream ps(mt[1].str());
    std::string pt;
    for (int k = 0; k <= 2; ++k) ps >> pt;
    const auto comma = pt.find(',');
    CHECK(std::abs(std::stod(pt.substr(0, comma)) - px) < 1e-3);
    CHECK(std::abs(std::stod(pt.substr(comma + 1)) - py) < 1e-3);

    CHECK(run("report --input " + q(scratch("missing")) + " --out " + q(ra)) == 2);
    CHECK(run("report --input " + q(a / "model_2.1_I") + " --area 99 --out " + q(ra)) == 2);
}

TEST_CASE("fit input validation") {
    const fs::path out = scratch("fit_bad");
    CHECK(run("fit --grid 2x2 --data " + q(kData / "toy_data.csv") + " --out " + q(out)) == 2);
    CHECK(run("fit --graph " + q(kData / "toy_graph.txt") + " --data " + q(kData / "missing.csv") + " --out " +
              q(out)) == 2);
    CHECK(run("fit --graph " + q(kData / "toy_graph.txt") + " --data " + q(kData / "toy_data.csv") +
              " --model 9.9 --out " + q(out)) == 2);
    CHECK(run("fit --graph " + q(kData / "toy_graph.txt") + " --data " + q(kData / "toy_data.csv")) == 2);
}

TEST_CASE("runtime failure exits with 1") {
    // A study output path that collides with an existing file cannot be created.
    const fs::path blocker = scratch("blocker");
    std::ofstream(blocker) << "x";
    CHECK(run("study --grid 2x2 --periods 3 --replicates 1 --scenario 2 --interaction I --out " +
              q(blocker / "sub")) == 1);
}

TEST_CASE("study command and manifest digest") {
    const fs::path cfg_a = scratch("cfg_a.json"), cfg_b = scratch("cfg_b.json");
    std::ofstream(cfg_a) << R"({"grid": "2x2", "T": 3, "replicates": 1, "models": ["1", "2"], "scenarios": [2],
                               "interactions": ["I"], "seed": 3, "fit": {"draws": 200}})";
    std::ofstream(cfg_b) << R"({"fit": {"draws": 200}, "seed": 3, "interactions": ["I"], "scenarios": [2],
                               "models": ["1", "2"], "replicates": 1, "T": 3, "grid": "2x2"})";
    const fs::path a = scratch("study_a"), b = scratch("study_b");
    REQUIRE(run("study --config " + q(cfg_a) + " --out " + q(a)) == 0);
    REQUIRE(run("study --config " + q(cfg_b) + " --out " + q(b)) == 0);
    const json ma = json::parse(slurp(a / "manifest.json"));
    const json mb = json::parse(slurp(b / "manifest.json"));
    CHECK(ma["config_digest"] == mb["config_digest"]);
    CHECK(ma["config_digest"].get<std::string>().size() == 16);
    CHECK(artifacts(a) == artifacts(b));
    CHECK(fs::exists(a / "replicates" / "scenario2_typeI.csv"));
    CHECK(run("study --config " + q(kData / "missing.json") + " --out " + q(a)) == 2);
    CHECK(run("study --grid 2x2 --replicates 0 --out " + q(a)) == 2);
    CHECK(run("study --grid 2x2 --full-scale --out " + q(a)) == 2);
}
