#include "stshared/graph.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace stshared {

namespace {

std::vector<int> label_components(int n, const std::vector<std::vector<int>>& nbrs, int& count) {
    std::vector<int> label(n, -1);
    count = 0;
    std::vector<int> stack;
    for (int s = 0; s < n; ++s) {
        if (label[s] >= 0) continue;
        label[s] = count;
        stack.push_back(s);
        while (!stack.empty()) {
            const int v = stack.back();
            stack.pop_back();
            for (int w : nbrs[v]) {
                if (label[w] < 0) {
                    label[w] = count;
                    stack.push_back(w);
                }
            }
        }
        ++count;
    }
    return label;
}

bool parse_int(const std::string& token, long long& out) {
    try {
        std::size_t pos = 0;
        out = std::stoll(token, &pos);
        return pos == token.size();
    } catch (const std::exception&) {
        return false;
    }
}

}  // namespace

AdjacencyGraph::AdjacencyGraph(int n_areas, std::vector<std::pair<int, int>> edges)
    : n_areas_(n_areas) {
    if (n_areas <= 0) throw GraphError(GraphError::Kind::Malformed, "graph must have at least one area");
    for (auto& [a, b] : edges) {
        if (a < 0 || b < 0 || a >= n_areas || b >= n_areas) {
            throw GraphError(GraphError::Kind::OutOfRange,
                             "edge (" + std::to_string(a) + "," + std::to_string(b) + ") out of range");
        }
        if (a == b) throw GraphError(GraphError::Kind::SelfLoop, "self-loop at area " + std::to_string(a));
        if (a > b) std::swap(a, b);
    }
    std::sort(edges.begin(), edges.end());
    if (std::adjacent_find(edges.begin(), edges.end()) != edges.end()) {
        throw GraphError(GraphError::Kind::Duplicate, "duplicate edge");
    }
    edges_ = std::move(edges);
    neighbors_.assign(n_areas, {});
    for (const auto& [a, b] : edges_) {
        neighbors_[a].push_back(b);
        neighbors_[b].push_back(a);
    }
    for (auto& nb : neighbors_) std::sort(nb.begin(), nb.end());
    component_ = label_components(n_areas_, neighbors_, n_components_);
}

AdjacencyGraph AdjacencyGraph::lattice(int rows, int cols) {
    if (rows <= 0 || cols <= 0) throw GraphError(GraphError::Kind::Malformed, "lattice dimensions must be positive");
    std::vector<std::pair<int, int>> edges;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const int v = r * cols + c;
            if (c + 1 < cols) edges.emplace_back(v, v + 1);
            if (r + 1 < rows) edges.emplace_back(v, v + cols);
        }
    }
    return AdjacencyGraph(rows * cols, std::move(edges));
}

AdjacencyGraph AdjacencyGraph::permuted(const std::vector<int>& perm) const {
    if (static_cast<int>(perm.size()) != n_areas_) {
        throw GraphError(GraphError::Kind::Malformed, "permutation size mismatch");
    }
    std::vector<std::pair<int, int>> edges;
    edges.reserve(edges_.size());
    for (const auto& [a, b] : edges_) edges.emplace_back(perm[a], perm[b]);
    return AdjacencyGraph(n_areas_, std::move(edges));
}

AdjacencyGraph load_graph(std::istream& in) {
    std::string line;
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::vector<std::string> tokens;
        for (std::string tok; ls >> tok;) tokens.push_back(tok);
        if (!tokens.empty()) rows.push_back(std::move(tokens));
    }
    if (rows.empty() || rows[0].size() != 1) {
        throw GraphError(GraphError::Kind::Malformed, "first line must hold the number of areas");
    }
    long long n = 0;
    if (!parse_int(rows[0][0], n) || n <= 0 || n > 100000000) {
        throw GraphError(GraphError::Kind::Malformed, "invalid area count '" + rows[0][0] + "'");
    }
    if (static_cast<long long>(rows.size()) - 1 != n) {
        throw GraphError(GraphError::Kind::Malformed, "expected " + std::to_string(n) + " node lines, found " +
                                                          std::to_string(rows.size() - 1));
    }
    std::vector<std::set<int>> declared(n);
    std::vector<bool> seen(n, false);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& tok = rows[r];
        const std::string where = "node line " + std::to_string(r + 1);
        long long id = 0, k = 0;
        if (tok.size() < 2 || !parse_int(tok[0], id) || !parse_int(tok[1], k) || k < 0) {
            throw GraphError(GraphError::Kind::Malformed, where + ": expected '<id> <count> <neighbors...>'");
        }
        if (id < 0 || id >= n) throw GraphError(GraphError::Kind::OutOfRange, where + ": node id out of range");
        if (seen[id]) throw GraphError(GraphError::Kind::Malformed, where + ": node declared twice");
        seen[id] = true;
        if (static_cast<long long>(tok.size()) - 2 != k) {
            throw GraphError(GraphError::Kind::Malformed, where + ": neighbor count does not match list");
        }
        for (std::size_t j = 2; j < tok.size(); ++j) {
            long long nb = 0;
            if (!parse_int(tok[j], nb)) throw GraphError(GraphError::Kind::Malformed, where + ": bad neighbor id");
            if (nb < 0 || nb >= n) throw GraphError(GraphError::Kind::OutOfRange, where + ": neighbor id out of range");
            if (nb == id) throw GraphError(GraphError::Kind::SelfLoop, where + ": self-loop");
            if (!declared[id].insert(static_cast<int>(nb)).second) {
                throw GraphError(GraphError::Kind::Duplicate, where + ": duplicate neighbor");
            }
        }
    }
    std::vector<std::pair<int, int>> edges;
    for (int a = 0; a < n; ++a) {
        for (int b : declared[a]) {
            if (!declared[b].count(a)) {
                throw GraphError(GraphError::Kind::Asymmetric, std::to_string(b) + " is a neighbor of " +
                                                                   std::to_string(a) + " but not vice versa");
            }
            if (a < b) edges.emplace_back(a, b);
        }
    }
    return AdjacencyGraph(static_cast<int>(n), std::move(edges));
}

AdjacencyGraph load_graph_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open graph file '" + path + "'");
    return load_graph(in);
}

void write_graph(std::ostream& out, const AdjacencyGraph& g) {
    out << g.n_areas() << '\n';
    for (int a = 0; a < g.n_areas(); ++a) {
        out << a << ' ' << g.degree(a);
        for (int b : g.neighbors(a)) out << ' ' << b;
        out << '\n';
    }
}

AdjacencyGraph lattice_from_spec(const std::string& spec) {
    const auto x = spec.find_first_of("xX");
    long long r = 0, c = 0;
    if (x == std::string::npos || !parse_int(spec.substr(0, x), r) || !parse_int(spec.substr(x + 1), c) || r <= 0 ||
        c <= 0) {
        throw GraphError(GraphError::Kind::Malformed, "grid spec must look like RxC, got '" + spec + "'");
    }
    return AdjacencyGraph::lattice(static_cast<int>(r), static_cast<int>(c));
}

}  // namespace stshared
