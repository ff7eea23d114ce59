#include "stshared/sparse_factor.hpp"

#include <Eigen/OrderingMethods>

#include <algorithm>
#include <cmath>
#include <ostream>

#include "stshared/rng.hpp"

namespace stshared {

namespace {

/// Upper triangle of the permuted matrix in compressed-column form.
struct UpperCsc {
    int n = 0;
    std::vector<int> p, i;
    std::vector<double> x;
};

UpperCsc permuted_upper(const SpMat& q, const Ordering& ord) {
    const int n = static_cast<int>(q.rows());
    UpperCsc c;
    c.n = n;
    c.p.assign(n + 1, 0);
    for (int j = 0; j < q.outerSize(); ++j) {
        for (SpMat::InnerIterator it(q, j); it; ++it) {
            const int ni = ord.new_of_old[it.row()];
            const int nj = ord.new_of_old[j];
            if (ni <= nj) ++c.p[nj + 1];
        }
    }
    for (int k = 0; k < n; ++k) c.p[k + 1] += c.p[k];
    c.i.resize(c.p[n]);
    c.x.resize(c.p[n]);
    std::vector<int> next(c.p.begin(), c.p.end() - 1);
    for (int j = 0; j < q.outerSize(); ++j) {
        for (SpMat::InnerIterator it(q, j); it; ++it) {
            const int ni = ord.new_of_old[it.row()];
            const int nj = ord.new_of_old[j];
            if (ni <= nj) {
                const int pos = next[nj]++;
                c.i[pos] = ni;
                c.x[pos] = it.value();
            }
        }
    }
    return c;
}

std::vector<int> elimination_tree(const UpperCsc& c) {
    std::vector<int> parent(c.n, -1), ancestor(c.n, -1);
    for (int k = 0; k < c.n; ++k) {
        for (int p = c.p[k]; p < c.p[k + 1]; ++p) {
            for (int i = c.i[p]; i != -1 && i < k;) {
                const int inext = ancestor[i];
                ancestor[i] = k;
                if (inext == -1) parent[i] = k;
                i = inext;
            }
        }
    }
    return parent;
}

/// Nonzero pattern of row k of L (excluding the diagonal) into s[top..n).
int ereach(const UpperCsc& c, int k, const std::vector<int>& parent, std::vector<int>& s, std::vector<int>& mark) {
    int top = c.n;
    mark[k] = k;
    for (int p = c.p[k]; p < c.p[k + 1]; ++p) {
        int i = c.i[p];
        if (i > k) continue;
        int len = 0;
        for (; mark[i] != k; i = parent[i]) {
            s[len++] = i;
            mark[i] = k;
        }
        while (len > 0) s[--top] = s[--len];
    }
    return top;
}

}  // namespace

Ordering Ordering::identity(int n) {
    Ordering o;
    o.old_of_new.resize(n);
    for (int k = 0; k < n; ++k) o.old_of_new[k] = k;
    o.new_of_old = o.old_of_new;
    return o;
}

Ordering Ordering::amd(const SpMat& q) {
    const int n = static_cast<int>(q.rows());
    // Symmetrized pattern, as expected by Eigen's AMD.
    SpMat pattern = q.cwiseAbs();
    SpMat sym = pattern + SpMat(pattern.transpose());
    Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> pinv;
    Eigen::AMDOrdering<int> amd;
    amd(sym, pinv);
    Ordering o;
    o.old_of_new.resize(n);
    o.new_of_old.resize(n);
    const Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> p = pinv.inverse();
    for (int k = 0; k < n; ++k) {
        o.new_of_old[k] = p.indices()[k];
    }
    for (int k = 0; k < n; ++k) o.old_of_new[o.new_of_old[k]] = k;
    return o;
}

SparseFactor SparseFactor::compute(const SpMat& q) { return compute(q, Ordering::amd(q)); }

SparseFactor SparseFactor::compute(const SpMat& q, const Ordering& ordering) {
    if (q.rows() != q.cols()) throw std::invalid_argument("factorize: matrix must be square");
    const int n = static_cast<int>(q.rows());
    if (static_cast<int>(ordering.old_of_new.size()) != n) throw std::invalid_argument("factorize: ordering size");

    SparseFactor f;
    f.n_ = n;
    f.ord_ = ordering;
    const UpperCsc c = permuted_upper(q, ordering);
    const std::vector<int> parent = elimination_tree(c);

    std::vector<int> s(n), mark(n, -1), count(n, 1);
    for (int k = 0; k < n; ++k) {
        const int top = ereach(c, k, parent, s, mark);
        for (int t = top; t < n; ++t) ++count[s[t]];
    }
    f.Lp_.assign(n + 1, 0);
    for (int k = 0; k < n; ++k) f.Lp_[k + 1] = f.Lp_[k] + count[k];
    f.Li_.resize(f.Lp_[n]);
    f.Lx_.resize(f.Lp_[n]);

    std::vector<int> next(f.Lp_.begin(), f.Lp_.end() - 1);
    std::vector<double> x(n, 0.0);
    std::fill(mark.begin(), mark.end(), -1);
    for (int k = 0; k < n; ++k) {
        const int top = ereach(c, k, parent, s, mark);
        for (int p = c.p[k]; p < c.p[k + 1]; ++p) {
            if (c.i[p] <= k) x[c.i[p]] += c.x[p];
        }
        double d = x[k];
        x[k] = 0.0;
        for (int t = top; t < n; ++t) {
            const int i = s[t];
            const double lki = x[i] / f.Lx_[f.Lp_[i]];
            x[i] = 0.0;
            for (int p = f.Lp_[i] + 1; p < next[i]; ++p) x[f.Li_[p]] -= f.Lx_[p] * lki;
            d -= lki * lki;
            const int p = next[i]++;
            f.Li_[p] = k;
            f.Lx_[p] = lki;
        }
        if (!(d > 0.0) || !std::isfinite(d)) throw NotPositiveDefinite(ordering.old_of_new[k]);
        const int p = next[k]++;
        f.Li_[p] = k;
        f.Lx_[p] = std::sqrt(d);
    }
    return f;
}

double SparseFactor::log_determinant() const {
    double s = 0.0;
    for (int k = 0; k < n_; ++k) s += std::log(Lx_[Lp_[k]]);
    return 2.0 * s;
}

void SparseFactor::forward(double* x) const {
    for (int j = 0; j < n_; ++j) {
        x[j] /= Lx_[Lp_[j]];
        const double xj = x[j];
        for (int p = Lp_[j] + 1; p < Lp_[j + 1]; ++p) x[Li_[p]] -= Lx_[p] * xj;
    }
}

void SparseFactor::backward(double* x) const {
    for (int j = n_ - 1; j >= 0; --j) {
        double v = x[j];
        for (int p = Lp_[j] + 1; p < Lp_[j + 1]; ++p) v -= Lx_[p] * x[Li_[p]];
        x[j] = v / Lx_[Lp_[j]];
    }
}

Eigen::VectorXd SparseFactor::solve(const Eigen::VectorXd& b) const {
    if (b.size() != n_) throw std::invalid_argument("solve: dimension mismatch");
    std::vector<double> w(n_);
    for (int k = 0; k < n_; ++k) w[k] = b[ord_.old_of_new[k]];
    forward(w.data());
    backward(w.data());
    Eigen::VectorXd out(n_);
    for (int k = 0; k < n_; ++k) out[ord_.old_of_new[k]] = w[k];
    return out;
}

Eigen::MatrixXd SparseFactor::solve(const Eigen::MatrixXd& b) const {
    if (b.rows() != n_) throw std::invalid_argument("solve: dimension mismatch");
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    // One sweep over L for all right-hand sides.
    RowMajor w(n_, b.cols());
    for (int k = 0; k < n_; ++k) w.row(k) = b.row(ord_.old_of_new[k]);
    for (int j = 0; j < n_; ++j) {
        w.row(j) /= Lx_[Lp_[j]];
        for (int p = Lp_[j] + 1; p < Lp_[j + 1]; ++p) w.row(Li_[p]) -= Lx_[p] * w.row(j);
    }
    for (int j = n_ - 1; j >= 0; --j) {
        for (int p = Lp_[j] + 1; p < Lp_[j + 1]; ++p) w.row(j) -= Lx_[p] * w.row(Li_[p]);
        w.row(j) /= Lx_[Lp_[j]];
    }
    Eigen::MatrixXd out(n_, b.cols());
    for (int k = 0; k < n_; ++k) out.row(ord_.old_of_new[k]) = w.row(k);
    return out;
}

Eigen::VectorXd SparseFactor::sample_from_standard(const Eigen::VectorXd& z) const {
    if (z.size() != n_) throw std::invalid_argument("sample: dimension mismatch");
    std::vector<double> w(z.data(), z.data() + n_);
    backward(w.data());
    Eigen::VectorXd out(n_);
    for (int k = 0; k < n_; ++k) out[ord_.old_of_new[k]] = w[k];
    return out;
}

Eigen::VectorXd SparseFactor::sample(Rng& rng) const {
    Eigen::VectorXd z(n_);
    for (int k = 0; k < n_; ++k) z[k] = rng.normal();
    return sample_from_standard(z);
}

Eigen::VectorXd SparseFactor::inverse_diagonal() const {
    // Sigma shares the pattern of L; entry (r, c), r >= c, lives in column c.
    std::vector<double> sx(Lx_.size(), 0.0);
    auto at = [&](int r, int c) -> double {
        if (r < c) std::swap(r, c);
        const auto first = Li_.begin() + Lp_[c];
        const auto last = Li_.begin() + Lp_[c + 1];
        const auto it = std::lower_bound(first, last, r);
        return sx[static_cast<std::size_t>(it - Li_.begin())];
    };
    for (int i = n_ - 1; i >= 0; --i) {
        const int begin = Lp_[i] + 1;
        const int end = Lp_[i + 1];
        const double lii = Lx_[Lp_[i]];
        for (int q = end - 1; q >= begin; --q) {
            const int j = Li_[q];
            double sum = 0.0;
            for (int p = begin; p < end; ++p) sum += Lx_[p] * at(Li_[p], j);
            sx[q] = -sum / lii;
        }
        double sum = 0.0;
        for (int p = begin; p < end; ++p) sum += Lx_[p] * sx[p];
        sx[Lp_[i]] = 1.0 / (lii * lii) - sum / lii;
    }
    Eigen::VectorXd out(n_);
    for (int k = 0; k < n_; ++k) out[ord_.old_of_new[k]] = sx[Lp_[k]];
    return out;
}

SparseFactor factorize_with_jitter(const SpMat& q, const Ordering& ordering, int* jitter_steps) {
    if (jitter_steps) *jitter_steps = 0;
    try {
        return SparseFactor::compute(q, ordering);
    } catch (const NotPositiveDefinite&) {
    }
    double max_diag = 0.0;
    for (int k = 0; k < q.outerSize(); ++k) max_diag = std::max(max_diag, std::abs(q.coeff(k, k)));
    if (max_diag == 0.0) max_diag = 1.0;
    SpMat eye(q.rows(), q.cols());
    eye.setIdentity();
    double jitter = 1e-10 * max_diag;
    for (int step = 1; step <= 3; ++step, jitter *= 10.0) {
        if (jitter_steps) *jitter_steps = step;
        try {
            return SparseFactor::compute(SpMat(q + jitter * eye), ordering);
        } catch (const NotPositiveDefinite& e) {
            if (step == 3) throw;
        }
    }
    throw std::logic_error("unreachable");
}

void write_matrix_market(std::ostream& out, const SpMat& m) {
    out << "%%MatrixMarket matrix coordinate real general\n";
    out << m.rows() << ' ' << m.cols() << ' ' << m.nonZeros() << '\n';
    out.precision(17);
    for (int j = 0; j < m.outerSize(); ++j) {
        for (SpMat::InnerIterator it(m, j); it; ++it) out << it.row() + 1 << ' ' << j + 1 << ' ' << it.value() << '\n';
    }
}

}  // namespace stshared
