#pragma once

#include <istream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace stshared {

/// Raised for malformed or inconsistent adjacency input.
class GraphError : public std::runtime_error {
public:
    enum class Kind { Malformed, Asymmetric, OutOfRange, SelfLoop, Duplicate };

    GraphError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

/// Undirected spatial adjacency over areas 0..n_areas-1.
class AdjacencyGraph {
public:
    /// Validates and normalizes an edge list (each pair stored as (lo, hi), sorted).
    AdjacencyGraph(int n_areas, std::vector<std::pair<int, int>> edges);

    /// Rook-adjacency lattice with `rows * cols` areas, row-major numbering.
    static AdjacencyGraph lattice(int rows, int cols);

    int n_areas() const { return n_areas_; }
    const std::vector<std::pair<int, int>>& edges() const { return edges_; }
    const std::vector<int>& neighbors(int area) const { return neighbors_.at(area); }
    int degree(int area) const { return static_cast<int>(neighbors_.at(area).size()); }

    int n_components() const { return n_components_; }
    bool connected() const { return n_components_ == 1; }
    /// Component label of each area; labels are numbered by first appearance.
    const std::vector<int>& component() const { return component_; }

    /// Graph with areas relabelled: new index of old area i is perm[i].
    AdjacencyGraph permuted(const std::vector<int>& perm) const;

private:
    int n_areas_;
    std::vector<std::pair<int, int>> edges_;
    std::vector<std::vector<int>> neighbors_;
    std::vector<int> component_;
    int n_components_ = 0;
};

/// Reads the text adjacency format:
///   line 1: n_areas
///   then one line per node: <node-id> <num-neighbors> <neighbor-id>...
/// Ids are 0-based and every neighbor declaration must be reciprocated.
AdjacencyGraph load_graph(std::istream& in);
AdjacencyGraph load_graph_file(const std::string& path);

/// Writes `g` in the format accepted by load_graph.
void write_graph(std::ostream& out, const AdjacencyGraph& g);

/// Parses "RxC" (e.g. "5x5") into a lattice graph.
AdjacencyGraph lattice_from_spec(const std::string& spec);

}  // namespace stshared
