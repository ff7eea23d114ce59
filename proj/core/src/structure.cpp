#include "stshared/structure.hpp"

#include <limits>
#include <stdexcept>
#include <vector>

namespace stshared {

namespace {

using Triplet = Eigen::Triplet<double>;

SpMat from_triplets(int n, const std::vector<Triplet>& t) {
    SpMat m(n, n);
    m.setFromTriplets(t.begin(), t.end());
    m.makeCompressed();
    return m;
}

}  // namespace

std::string to_string(InteractionType t) {
    switch (t) {
        case InteractionType::I: return "I";
        case InteractionType::II: return "II";
        case InteractionType::III: return "III";
        case InteractionType::IV: return "IV";
    }
    return "?";
}

InteractionType interaction_from_string(const std::string& s) {
    if (s == "I" || s == "1") return InteractionType::I;
    if (s == "II" || s == "2") return InteractionType::II;
    if (s == "III" || s == "3") return InteractionType::III;
    if (s == "IV" || s == "4") return InteractionType::IV;
    throw std::invalid_argument("unknown interaction type '" + s + "'");
}

Eigen::MatrixXd independent_columns(const Eigen::MatrixXd& vectors, double tol) {
    const Eigen::Index n = vectors.rows();
    std::vector<Eigen::Index> keep;
    Eigen::MatrixXd basis(n, 0);
    for (Eigen::Index j = 0; j < vectors.cols(); ++j) {
        Eigen::VectorXd v = vectors.col(j);
        const double norm0 = v.norm();
        if (norm0 == 0.0) continue;
        // Two passes of modified Gram-Schmidt.
        for (int pass = 0; pass < 2; ++pass) {
            for (Eigen::Index k = 0; k < basis.cols(); ++k) v -= basis.col(k).dot(v) * basis.col(k);
        }
        const double norm = v.norm();
        if (norm <= tol * norm0) continue;
        basis.conservativeResize(n, basis.cols() + 1);
        basis.col(basis.cols() - 1) = v / norm;
        keep.push_back(j);
    }
    Eigen::MatrixXd out(n, static_cast<Eigen::Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) out.col(k) = vectors.col(keep[k]);
    return out;
}

StructureMatrix::StructureMatrix(SpMat entries, int rank, Eigen::MatrixXd kernel)
    : entries_(std::move(entries)), rank_(rank), kernel_(std::move(kernel)) {
    if (entries_.rows() != entries_.cols()) throw std::invalid_argument("structure matrix must be square");
    if (rank_ < 0 || rank_ > dim()) throw std::invalid_argument("invalid structure rank");
    if (kernel_.cols() != dim() - rank_ || (kernel_.cols() > 0 && kernel_.rows() != dim())) {
        throw std::invalid_argument("kernel dimension does not match dim - rank");
    }
    if (kernel_.cols() == 0) kernel_.resize(dim(), 0);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(kernel_);
    null_basis_ = qr.householderQ() * Eigen::MatrixXd::Identity(dim(), kernel_.cols());
}

StructureMatrix identity_structure(int n) {
    if (n <= 0) throw std::invalid_argument("identity dimension must be positive");
    SpMat m(n, n);
    m.setIdentity();
    m.makeCompressed();
    return StructureMatrix(std::move(m), n, Eigen::MatrixXd(n, 0));
}

StructureMatrix icar_structure(const AdjacencyGraph& graph) {
    const int n = graph.n_areas();
    std::vector<Triplet> t;
    t.reserve(n + 2 * graph.edges().size());
    for (int i = 0; i < n; ++i) t.emplace_back(i, i, static_cast<double>(graph.degree(i)));
    for (const auto& [a, b] : graph.edges()) {
        t.emplace_back(a, b, -1.0);
        t.emplace_back(b, a, -1.0);
    }
    const int comps = graph.n_components();
    Eigen::MatrixXd kernel = Eigen::MatrixXd::Zero(n, comps);
    for (int i = 0; i < n; ++i) kernel(i, graph.component()[i]) = 1.0;
    return StructureMatrix(from_triplets(n, t), n - comps, std::move(kernel));
}

StructureMatrix rw1_structure(int T) {
    if (T < 2) throw std::invalid_argument("RW1 requires T >= 2");
    std::vector<Triplet> t;
    for (int k = 0; k + 1 < T; ++k) {
        t.emplace_back(k, k, 1.0);
        t.emplace_back(k + 1, k + 1, 1.0);
        t.emplace_back(k, k + 1, -1.0);
        t.emplace_back(k + 1, k, -1.0);
    }
    return StructureMatrix(from_triplets(T, t), T - 1, Eigen::MatrixXd::Ones(T, 1));
}

StructureMatrix rw2_structure(int T) {
    if (T < 3) throw std::invalid_argument("RW2 requires T >= 3");
    std::vector<Triplet> t;
    const double d[3] = {1.0, -2.0, 1.0};
    for (int k = 0; k + 2 < T; ++k) {
        for (int a = 0; a < 3; ++a) {
            for (int b = 0; b < 3; ++b) t.emplace_back(k + a, k + b, d[a] * d[b]);
        }
    }
    Eigen::MatrixXd kernel(T, 2);
    for (int k = 0; k < T; ++k) {
        kernel(k, 0) = 1.0;
        kernel(k, 1) = k - 0.5 * (T - 1);  // centred trend, exact in binary
    }
    return StructureMatrix(from_triplets(T, t), T - 2, std::move(kernel));
}

StructureMatrix kronecker(const StructureMatrix& a, const StructureMatrix& b) {
    const long long na = a.dim(), nb = b.dim();
    if (na * nb > std::numeric_limits<int>::max()) throw std::overflow_error("kronecker dimension overflow");
    const int n = static_cast<int>(na * nb);
    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(a.entries().nonZeros()) * b.entries().nonZeros());
    for (int ca = 0; ca < a.entries().outerSize(); ++ca) {
        for (SpMat::InnerIterator ia(a.entries(), ca); ia; ++ia) {
            for (int cb = 0; cb < b.entries().outerSize(); ++cb) {
                for (SpMat::InnerIterator ib(b.entries(), cb); ib; ++ib) {
                    t.emplace_back(static_cast<int>(ia.row() * nb + ib.row()), static_cast<int>(ca * nb + cb),
                                   ia.value() * ib.value());
                }
            }
        }
    }
    // null(A (x) B) = null(A) (x) R^nb + R^na (x) null(B)
    const int ka = static_cast<int>(a.kernel().cols());
    const int kb = static_cast<int>(b.kernel().cols());
    Eigen::MatrixXd span = Eigen::MatrixXd::Zero(n, ka * nb + na * kb);
    int col = 0;
    for (int j = 0; j < ka; ++j) {
        for (int l = 0; l < nb; ++l, ++col) {
            for (int i = 0; i < na; ++i) span(i * nb + l, col) = a.kernel()(i, j);
        }
    }
    for (int i = 0; i < na; ++i) {
        for (int j = 0; j < kb; ++j, ++col) {
            for (int l = 0; l < nb; ++l) span(i * nb + l, col) = b.kernel()(l, j);
        }
    }
    Eigen::MatrixXd kernel = independent_columns(span);
    const int rank = a.rank() * b.rank();
    if (kernel.cols() != n - rank) throw std::logic_error("kronecker kernel does not match symbolic rank");
    return StructureMatrix(from_triplets(n, t), rank, std::move(kernel));
}

StructureMatrix interaction_structure(InteractionType kind, const StructureMatrix& r_gamma,
                                      const StructureMatrix& r_kappa) {
    const int T = r_gamma.dim();
    const int A = r_kappa.dim();
    switch (kind) {
        case InteractionType::I: return identity_structure(T * A);
        case InteractionType::II: return kronecker(r_gamma, identity_structure(A));
        case InteractionType::III: return kronecker(identity_structure(T), r_kappa);
        case InteractionType::IV: return kronecker(r_gamma, r_kappa);
    }
    throw std::invalid_argument("unknown interaction type");
}

}  // namespace stshared
