#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace stshared {

using SpMat = Eigen::SparseMatrix<double>;

class Rng;

/// Factorization failed because a pivot was not positive.
class NotPositiveDefinite : public std::runtime_error {
public:
    explicit NotPositiveDefinite(int pivot)
        : std::runtime_error("matrix is not positive definite (pivot at index " + std::to_string(pivot) + ")"),
          pivot_(pivot) {}
    /// Index of the failing pivot in the caller's (unpermuted) numbering.
    int pivot() const { return pivot_; }

private:
    int pivot_;
};

/// Fill-reducing permutation; old_of_new[k] is the original index of row k.
struct Ordering {
    std::vector<int> old_of_new;
    std::vector<int> new_of_old;

    static Ordering identity(int n);
    /// Approximate minimum degree on the symmetric pattern of `q`.
    static Ordering amd(const SpMat& q);
};

/// Sparse Cholesky factor P Q P' = L L' (up-looking, row-by-row).
///
/// Read-only after construction; safe to share between threads.
class SparseFactor {
public:
    /// Factorizes a symmetric positive definite matrix. Both triangles of `q`
    /// may be stored; only the upper part of the permuted matrix is read.
    static SparseFactor compute(const SpMat& q, const Ordering& ordering);
    static SparseFactor compute(const SpMat& q);

    int dim() const { return n_; }
    double log_determinant() const;

    Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
    Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const;

    /// x with x ~ N(0, Q^{-1}) when `z` is standard normal (solves L' y = z).
    Eigen::VectorXd sample_from_standard(const Eigen::VectorXd& z) const;
    Eigen::VectorXd sample(Rng& rng) const;

    /// diag(Q^{-1}) via the Takahashi recursions on the pattern of L.
    Eigen::VectorXd inverse_diagonal() const;

    const Ordering& ordering() const { return ord_; }
    long long nonzeros() const { return static_cast<long long>(Lx_.size()); }

private:
    void forward(double* x) const;   // L y = x, in place
    void backward(double* x) const;  // L' y = x, in place

    int n_ = 0;
    Ordering ord_;
    std::vector<int> Lp_;
    std::vector<int> Li_;
    std::vector<double> Lx_;
};

/// Factorization with the fixed jitter policy: on failure add
/// 1e-10 * max|diag| to the diagonal, retrying at most three times and
/// escalating tenfold each time. `jitter_steps` reports retries used.
SparseFactor factorize_with_jitter(const SpMat& q, const Ordering& ordering, int* jitter_steps = nullptr);

/// Writes `m` in Matrix Market coordinate format (general, real).
void write_matrix_market(std::ostream& out, const SpMat& m);

}  // namespace stshared
