#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>

// Dense reference computations used as independent oracles.
namespace oracle {

inline Eigen::VectorXd eigenvalues(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

inline double tolerance(const Eigen::VectorXd& ev) {
    const double top = std::max(1.0, ev.cwiseAbs().maxCoeff());
    return 1e-9 * top * static_cast<double>(ev.size());
}

inline int rank(const Eigen::MatrixXd& m) {
    const Eigen::VectorXd ev = eigenvalues(m);
    const double tol = tolerance(ev);
    int r = 0;
    for (Eigen::Index k = 0; k < ev.size(); ++k) r += ev[k] > tol ? 1 : 0;
    return r;
}

inline int rank(const Eigen::SparseMatrix<double>& m) { return rank(Eigen::MatrixXd(m)); }

/// Log of the product of non-zero eigenvalues.
inline double log_gdet(const Eigen::MatrixXd& m) {
    const Eigen::VectorXd ev = eigenvalues(m);
    const double tol = tolerance(ev);
    double s = 0.0;
    for (Eigen::Index k = 0; k < ev.size(); ++k) {
        if (ev[k] > tol) s += std::log(ev[k]);
    }
    return s;
}

/// Moore-Penrose pseudo-inverse of a symmetric matrix.
inline Eigen::MatrixXd pinv(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
    const Eigen::VectorXd ev = es.eigenvalues();
    const double tol = tolerance(ev);
    Eigen::VectorXd inv(ev.size());
    for (Eigen::Index k = 0; k < ev.size(); ++k) inv[k] = ev[k] > tol ? 1.0 / ev[k] : 0.0;
    return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

/// Orthonormal basis of {x : C x = 0}.
inline Eigen::MatrixXd null_space(const Eigen::MatrixXd& c) {
    const int n = static_cast<int>(c.cols());
    if (c.rows() == 0) return Eigen::MatrixXd::Identity(n, n);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(c, Eigen::ComputeFullV);
    int r = 0;
    const Eigen::VectorXd s = svd.singularValues();
    for (Eigen::Index k = 0; k < s.size(); ++k) r += s[k] > 1e-10 * std::max(1.0, s[0]) ? 1 : 0;
    return svd.matrixV().rightCols(n - r);
}

/// Covariance of N(0, Q^-) restricted to {C x = 0}: V (V'QV)^{-1} V'.
inline Eigen::MatrixXd constrained_covariance(const Eigen::MatrixXd& q, const Eigen::MatrixXd& c) {
    const Eigen::MatrixXd v = null_space(c);
    const Eigen::MatrixXd inner = v.transpose() * q * v;
    return v * inner.inverse() * v.transpose();
}

/// log det(V'QV) + log det(CC').
inline double log_det_subspace(const Eigen::MatrixXd& q, const Eigen::MatrixXd& c) {
    const Eigen::MatrixXd v = null_space(c);
    const Eigen::MatrixXd inner = v.transpose() * q * v;
    double ld = 2.0 * Eigen::MatrixXd(inner.llt().matrixL()).diagonal().array().log().sum();
    if (c.rows() > 0) {
        const Eigen::MatrixXd cc = c * c.transpose();
        ld += 2.0 * Eigen::MatrixXd(cc.llt().matrixL()).diagonal().array().log().sum();
    }
    return ld;
}

}  // namespace oracle
