#include "stshared/observations.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <tuple>
#include <vector>

namespace stshared {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    for (auto& f : out) {
        const auto b = f.find_first_not_of(" \t");
        const auto e = f.find_last_not_of(" \t");
        f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
    }
    return out;
}

double parse_number(const std::string& s, int line, const char* what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw DataError("line " + std::to_string(line) + ": invalid " + what + " '" + s + "'");
    }
}

}  // namespace

ObservationSet ObservationSet::empty(int A, int T) {
    ObservationSet d;
    d.A = A;
    d.T = T;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    d.counts_i = Eigen::VectorXd::Constant(A * T, nan);
    d.counts_m = Eigen::VectorXd::Constant(A * T, nan);
    d.population = Eigen::VectorXd::Ones(A * T);
    return d;
}

Eigen::VectorXd ObservationSet::stacked_counts() const {
    Eigen::VectorXd out(2 * cells());
    out << counts_i, counts_m;
    return out;
}

void ObservationSet::validate() const {
    if (A < 1 || T < 1) throw DataError("panel must have at least one area and one period");
    if (counts_i.size() != cells() || counts_m.size() != cells() || population.size() != cells()) {
        throw DataError("panel arrays do not match A * T");
    }
    for (int c = 0; c < cells(); ++c) {
        if (!(population[c] > 0.0) || !std::isfinite(population[c])) {
            throw DataError("population must be positive (area " + std::to_string(c % A) + ", period " +
                            std::to_string(c / A + 1) + ")");
        }
        for (double o : {counts_i[c], counts_m[c]}) {
            if (std::isnan(o)) continue;
            if (o < 0.0 || !std::isfinite(o) || o != std::floor(o)) {
                throw DataError("counts must be non-negative integers (area " + std::to_string(c % A) + ", period " +
                                std::to_string(c / A + 1) + ")");
            }
        }
    }
}

int ObservationSet::missing() const {
    int m = 0;
    for (int c = 0; c < cells(); ++c) m += std::isnan(counts_i[c]) + std::isnan(counts_m[c]);
    return m;
}

ObservationSet read_observations_csv(std::istream& in) {
    std::string line;
    int lineno = 0;
    if (!std::getline(in, line)) throw DataError("empty data file");
    ++lineno;
    const auto header = split_csv(line);
    const std::vector<std::string> expected = {"area", "period", "outcome", "count", "population"};
    if (header != expected) throw DataError("header must be 'area,period,outcome,count,population'");

    struct Row {
        int area, period;
        Outcome d;
        double count, population;
    };
    std::vector<Row> rows;
    int max_area = -1, max_period = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto f = split_csv(line);
        if (f.size() != 5) throw DataError("line " + std::to_string(lineno) + ": expected 5 fields");
        Row r{};
        const double area = parse_number(f[0], lineno, "area");
        const double period = parse_number(f[1], lineno, "period");
        if (area < 0 || area != std::floor(area)) throw DataError("line " + std::to_string(lineno) + ": bad area");
        if (period < 1 || period != std::floor(period)) {
            throw DataError("line " + std::to_string(lineno) + ": periods are numbered from 1");
        }
        r.area = static_cast<int>(area);
        r.period = static_cast<int>(period);
        if (f[2] == "I") r.d = Outcome::Incidence;
        else if (f[2] == "M") r.d = Outcome::Mortality;
        else throw DataError("line " + std::to_string(lineno) + ": outcome must be I or M");
        r.count = f[3].empty() ? std::numeric_limits<double>::quiet_NaN() : parse_number(f[3], lineno, "count");
        r.population = parse_number(f[4], lineno, "population");
        max_area = std::max(max_area, r.area);
        max_period = std::max(max_period, r.period);
        rows.push_back(r);
    }
    if (rows.empty()) throw DataError("data file has no rows");

    ObservationSet d = ObservationSet::empty(max_area + 1, max_period);
    std::vector<char> seen(2 * static_cast<std::size_t>(d.cells()), 0);
    std::vector<double> pop(static_cast<std::size_t>(d.cells()), std::numeric_limits<double>::quiet_NaN());
    for (const auto& r : rows) {
        const int c = (r.period - 1) * d.A + r.area;
        const std::size_t key = static_cast<std::size_t>(r.d) * d.cells() + c;
        if (seen[key]) {
            throw DataError("duplicate row for area " + std::to_string(r.area) + ", period " +
                            std::to_string(r.period) + ", outcome " + (r.d == Outcome::Incidence ? "I" : "M"));
        }
        seen[key] = 1;
        if (!std::isnan(pop[c]) && pop[c] != r.population) {
            throw DataError("population differs between outcomes for area " + std::to_string(r.area) + ", period " +
                            std::to_string(r.period));
        }
        pop[c] = r.population;
        d.count(r.area, r.period - 1, r.d) = r.count;
    }
    for (std::size_t k = 0; k < seen.size(); ++k) {
        if (!seen[k]) {
            const int c = static_cast<int>(k % d.cells());
            throw DataError("missing row for area " + std::to_string(c % d.A) + ", period " +
                            std::to_string(c / d.A + 1));
        }
    }
    d.population = Eigen::Map<Eigen::VectorXd>(pop.data(), d.cells());
    d.validate();
    return d;
}

ObservationSet read_observations_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open data file '" + path + "'");
    return read_observations_csv(in);
}

void write_observations_csv(std::ostream& out, const ObservationSet& data) {
    out << "area,period,outcome,count,population\n";
    std::ostringstream num;
    num.precision(17);
    for (int d = 0; d < 2; ++d) {
        for (int t = 0; t < data.T; ++t) {
            for (int i = 0; i < data.A; ++i) {
                const double o = data.count(i, t, static_cast<Outcome>(d));
                num.str("");
                num << data.population[t * data.A + i];
                out << i << ',' << t + 1 << ',' << (d == 0 ? 'I' : 'M') << ',';
                if (!std::isnan(o)) out << static_cast<long long>(o);
                out << ',' << num.str() << '\n';
            }
        }
    }
}

}  // namespace stshared
