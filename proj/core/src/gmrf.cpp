#include "stshared/gmrf.hpp"

#include <cmath>
#include <numbers>

#include "stshared/rng.hpp"

namespace stshared {

ConstraintSet::ConstraintSet(const Eigen::MatrixXd& rows) {
    const Eigen::MatrixXd kept = independent_columns(rows.transpose());
    dropped_ = static_cast<int>(rows.rows() - kept.cols());
    rows_ = kept.transpose();
    for (Eigen::Index r = 0; r < rows_.rows(); ++r) rows_.row(r) /= rows_.row(r).norm();
}

ConstraintSet ConstraintSet::none(int dim) {
    ConstraintSet c;
    c.rows_.resize(0, dim);
    return c;
}

ConstraintSet ConstraintSet::stack(int dim, const std::vector<std::pair<int, Eigen::MatrixXd>>& blocks) {
    Eigen::Index total = 0;
    for (const auto& b : blocks) total += b.second.rows();
    Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(total, dim);
    Eigen::Index r = 0;
    for (const auto& [offset, block] : blocks) {
        if (offset < 0 || offset + block.cols() > dim) throw std::invalid_argument("constraint block out of range");
        rows.block(r, offset, block.rows(), block.cols()) = block;
        r += block.rows();
    }
    if (total == 0) return none(dim);
    return ConstraintSet(rows);
}

SpMat ConstraintSet::gram(double weight) const {
    const Eigen::Index n = rows_.cols();
    std::vector<Eigen::Triplet<double>> t;
    for (Eigen::Index r = 0; r < rows_.rows(); ++r) {
        std::vector<std::pair<Eigen::Index, double>> nz;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (rows_(r, j) != 0.0) nz.emplace_back(j, rows_(r, j));
        }
        for (const auto& [i, vi] : nz) {
            for (const auto& [j, vj] : nz) t.emplace_back(static_cast<int>(i), static_cast<int>(j), weight * vi * vj);
        }
    }
    SpMat g(n, n);
    g.setFromTriplets(t.begin(), t.end());
    return g;
}

double augmentation_weight(const SpMat& q) {
    double s = 0.0;
    for (int k = 0; k < q.outerSize(); ++k) s += std::abs(q.coeff(k, k));
    return q.rows() > 0 && s > 0.0 ? s / static_cast<double>(q.rows()) : 1.0;
}

ConstrainedFactor::ConstrainedFactor(std::shared_ptr<const SparseFactor> factor, const ConstraintSet& constraints)
    : factor_(std::move(factor)), constraints_(constraints) {
    if (!constraints_.empty()) {
        if (constraints_.dim() != factor_->dim()) throw std::invalid_argument("constraint dimension mismatch");
        w_ = factor_->solve(Eigen::MatrixXd(constraints_.rows().transpose()));
        const Eigen::MatrixXd s = constraints_.rows() * w_;
        s_.compute(0.5 * (s + s.transpose()));
        if (s_.info() != Eigen::Success) throw ConstraintError("singular constraint covariance C Q^- C'");
    }
}

Eigen::VectorXd ConstrainedFactor::project(const Eigen::VectorXd& x) const {
    if (constraints_.empty()) return x;
    return x - w_ * s_.solve(constraints_.rows() * x);
}

Eigen::VectorXd ConstrainedFactor::constrained_solve(const Eigen::VectorXd& b) const {
    return project(factor_->solve(b));
}

double ConstrainedFactor::log_det_subspace() const {
    double ld = factor_->log_determinant();
    if (!constraints_.empty()) {
        const auto& l = s_.matrixLLT();
        for (Eigen::Index k = 0; k < l.rows(); ++k) ld += 2.0 * std::log(l(k, k));
    }
    return ld;
}

Eigen::VectorXd ConstrainedFactor::marginal_variances() const {
    Eigen::VectorXd v = factor_->inverse_diagonal();
    if (!constraints_.empty()) {
        // diag(W S^{-1} W') = rowwise squared norm of W L^{-T}
        const Eigen::MatrixXd b = s_.matrixL().solve(w_.transpose());
        v -= b.colwise().squaredNorm().transpose();
    }
    return v;
}

Eigen::VectorXd ConstrainedFactor::sample(Rng& rng) const { return project(factor_->sample(rng)); }

GmrfDensity::GmrfDensity(StructureMatrix structure, double tau) : structure_(std::move(structure)), tau_(tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("GMRF precision scale must be positive");
    log_gdet_ = stshared::log_generalized_determinant(structure_);
}

GmrfDensity GmrfDensity::with_tau(double tau) const {
    if (!(tau > 0.0)) throw std::invalid_argument("GMRF precision scale must be positive");
    GmrfDensity g = *this;
    g.tau_ = tau;
    return g;
}

double log_generalized_determinant(const StructureMatrix& s) {
    if (s.dim() > GmrfDensity::kDenseLimit) return 0.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(s.entries()), Eigen::EigenvaluesOnly);
    // Rank is known symbolically: the top `rank` eigenvalues are the non-zero ones.
    const auto& ev = es.eigenvalues();
    double ld = 0.0;
    for (Eigen::Index k = s.dim() - s.rank(); k < s.dim(); ++k) ld += std::log(ev[k]);
    return ld;
}

double log_density(const Eigen::VectorXd& x, const GmrfDensity& g) {
    const auto& r = g.structure();
    if (x.size() != r.dim()) throw std::invalid_argument("log_density: dimension mismatch");
    const double quad = x.dot(r.entries() * x);
    const double rank = r.rank();
    return 0.5 * rank * std::log(g.tau()) + 0.5 * g.log_generalized_determinant() - 0.5 * g.tau() * quad -
           0.5 * rank * std::log(2.0 * std::numbers::pi);
}

Eigen::VectorXd sample_constrained(const GmrfDensity& g, const ConstraintSet& c, Rng& rng) {
    const auto& r = g.structure();
    const int n = r.dim();
    if (!c.empty() && c.dim() != n) throw std::invalid_argument("sample_constrained: constraint dimension mismatch");
    if (r.nullity() > 0) {
        if (c.empty()) throw ConstraintError("constraints do not make the density proper (empty set)");
        Eigen::FullPivLU<Eigen::MatrixXd> lu(c.rows() * r.kernel());
        lu.setThreshold(1e-10);
        if (lu.rank() < r.nullity()) throw ConstraintError("constraints do not span the null space of the structure");
    }
    SpMat q = g.tau() * r.entries();
    if (!c.empty()) q += c.gram(augmentation_weight(q));
    auto factor = std::make_shared<const SparseFactor>(SparseFactor::compute(q));
    ConstrainedFactor cf(std::move(factor), c);
    return cf.sample(rng);
}

}  // namespace stshared
