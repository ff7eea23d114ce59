#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <string>

#include "stshared/graph.hpp"

namespace stshared {

using SpMat = Eigen::SparseMatrix<double>;

/// Space-time interaction structure (Knorr-Held types).
enum class InteractionType { I, II, III, IV };

std::string to_string(InteractionType t);
InteractionType interaction_from_string(const std::string& s);

/// Sparse symmetric precision template together with its rank and kernel.
///
/// `kernel()` holds exact spanning vectors of the null space (integer or
/// half-integer entries for the intrinsic builders, so M * v vanishes
/// without rounding); `null_basis()` is an orthonormalized copy.
class StructureMatrix {
public:
    StructureMatrix() = default;
    StructureMatrix(SpMat entries, int rank, Eigen::MatrixXd kernel);

    int dim() const { return static_cast<int>(entries_.rows()); }
    const SpMat& entries() const { return entries_; }
    int rank() const { return rank_; }
    int nullity() const { return dim() - rank_; }
    bool intrinsic() const { return rank_ < dim(); }
    const Eigen::MatrixXd& kernel() const { return kernel_; }
    const Eigen::MatrixXd& null_basis() const { return null_basis_; }

private:
    SpMat entries_;
    int rank_ = 0;
    Eigen::MatrixXd kernel_;
    Eigen::MatrixXd null_basis_;
};

StructureMatrix identity_structure(int n);

/// Graph Laplacian (iCAR structure); rank = n_areas - components.
StructureMatrix icar_structure(const AdjacencyGraph& graph);

/// First-order random walk, D'D for first differences; requires T >= 2.
StructureMatrix rw1_structure(int T);

/// Second-order random walk, D2'D2; requires T >= 3.
StructureMatrix rw2_structure(int T);

/// Kronecker product a (x) b; `a` indexes the slow (outer) coordinate.
StructureMatrix kronecker(const StructureMatrix& a, const StructureMatrix& b);

/// Interaction structure over T*A cells ordered area-fastest (cell = t*A + i).
StructureMatrix interaction_structure(InteractionType kind, const StructureMatrix& r_gamma,
                                      const StructureMatrix& r_kappa);

/// Keeps a maximal linearly independent subset of the columns of `vectors`,
/// scanning left to right. Used for kernels and constraint rows.
Eigen::MatrixXd independent_columns(const Eigen::MatrixXd& vectors, double tol = 1e-9);

}  // namespace stshared
