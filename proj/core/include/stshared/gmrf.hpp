#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <memory>
#include <stdexcept>

#include "stshared/sparse_factor.hpp"
#include "stshared/structure.hpp"

namespace stshared {

class Rng;

/// Linear equality constraints C x = 0.
///
/// Rows are scaled to unit Euclidean norm; linearly dependent rows are
/// dropped (scanning in input order) and counted in `dropped()`.
class ConstraintSet {
public:
    ConstraintSet() = default;
    explicit ConstraintSet(const Eigen::MatrixXd& rows);

    /// Empty constraint set over `dim` coordinates.
    static ConstraintSet none(int dim);

    int size() const { return static_cast<int>(rows_.rows()); }
    int dim() const { return static_cast<int>(rows_.cols()); }
    bool empty() const { return rows_.rows() == 0; }
    int dropped() const { return dropped_; }
    const Eigen::MatrixXd& rows() const { return rows_; }

    Eigen::VectorXd residual(const Eigen::VectorXd& x) const { return rows_ * x; }
    /// weight * C'C as a sparse matrix.
    SpMat gram(double weight) const;

    /// Block-diagonal stacking; `offsets[i]` places set i inside a vector of length `dim`.
    static ConstraintSet stack(int dim, const std::vector<std::pair<int, Eigen::MatrixXd>>& blocks);

private:
    Eigen::MatrixXd rows_;
    int dropped_ = 0;
};

class ConstraintError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Factor of an (augmented) precision M together with the kriging terms
/// W = M^{-1} C' and S = C W used to restrict a Gaussian to {C x = 0}.
///
/// For any M that agrees with the target precision on the constraint
/// subspace (e.g. Q + w C'C), the restricted distribution is the same.
class ConstrainedFactor {
public:
    ConstrainedFactor(std::shared_ptr<const SparseFactor> factor, const ConstraintSet& constraints);

    const SparseFactor& factor() const { return *factor_; }
    std::shared_ptr<const SparseFactor> factor_ptr() const { return factor_; }
    int dim() const { return factor_->dim(); }
    const ConstraintSet& constraints() const { return constraints_; }

    /// Conditioning by kriging: x - W S^{-1} C x.
    Eigen::VectorXd project(const Eigen::VectorXd& x) const;

    /// Solves M d = b restricted to C d = 0 (projected solve).
    Eigen::VectorXd constrained_solve(const Eigen::VectorXd& b) const;

    /// log det(M) + log det(C M^{-1} C'); equals log det(V'MV) + log det(CC')
    /// for an orthonormal basis V of the constraint null space.
    double log_det_subspace() const;

    /// Marginal variances of the constrained Gaussian with precision M.
    Eigen::VectorXd marginal_variances() const;

    /// Draw from N(0, M^{-1}) conditioned on C x = 0.
    Eigen::VectorXd sample(Rng& rng) const;

private:
    std::shared_ptr<const SparseFactor> factor_;
    ConstraintSet constraints_;
    Eigen::MatrixXd w_;                 // M^{-1} C'
    Eigen::LLT<Eigen::MatrixXd> s_;    // C M^{-1} C'
};

/// Weight used when augmenting a precision with C'C: the mean diagonal of `q`.
double augmentation_weight(const SpMat& q);

/// Intrinsic (or proper) GMRF with precision tau * structure.
class GmrfDensity {
public:
    GmrfDensity(StructureMatrix structure, double tau);

    const StructureMatrix& structure() const { return structure_; }
    double tau() const { return tau_; }
    GmrfDensity with_tau(double tau) const;

    /// log of the product of the non-zero eigenvalues of the unscaled structure.
    /// Above kDenseLimit the value is fixed at 0 (a documented constant offset).
    double log_generalized_determinant() const { return log_gdet_; }

    static constexpr int kDenseLimit = 5000;

private:
    StructureMatrix structure_;
    double tau_;
    double log_gdet_ = 0.0;
};

double log_generalized_determinant(const StructureMatrix& s);

/// log density with respect to Lebesgue measure on the range of the structure:
///   (rank/2) log tau + (1/2) log gdet(R) - (tau/2) x'Rx - (rank/2) log(2 pi).
double log_density(const Eigen::VectorXd& x, const GmrfDensity& g);

/// Draws from the GMRF conditioned on C x = 0. The constraints must span the
/// kernel of the structure so that the conditioned law is proper.
Eigen::VectorXd sample_constrained(const GmrfDensity& g, const ConstraintSet& c, Rng& rng);

/// Sparse Cholesky factor (see SparseFactor); thin alias for the kernel API.
inline SparseFactor factorize(const SpMat& q) { return SparseFactor::compute(q); }

}  // namespace stshared
