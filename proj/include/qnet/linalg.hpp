#pragma once

#include <Eigen/Dense>

#include "qnet/errors.hpp"

namespace qnet {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Solve A x = b by partial-pivot LU with one iterative-refinement pass.
// Systems here are small (J <= 64) and well conditioned once the routing
// matrix passes validation, so a single refinement step is plenty.
inline Vec solve_refined(const Mat& A, const Vec& b) {
    Eigen::PartialPivLU<Mat> lu(A);
    Vec x = lu.solve(b);
    x += lu.solve(b - A * x);
    return x;
}

inline Mat inverse_refined(const Mat& A) {
    Eigen::PartialPivLU<Mat> lu(A);
    Mat X = lu.solve(Mat::Identity(A.rows(), A.cols()));
    X += lu.solve(Mat::Identity(A.rows(), A.cols()) - A * X);
    return X;
}

// Factor a symmetric matrix as F F^T through its eigendecomposition.
// Eigenvalues in [eig_floor, 0) are treated as roundoff and clipped to zero;
// the smallest eigenvalue is reported so callers can reject matrices that
// are genuinely indefinite rather than merely noisy.
inline Mat psd_sqrt_factor(const Mat& A, double* min_eigenvalue = nullptr) {
    Eigen::SelfAdjointEigenSolver<Mat> es(A);
    if (es.info() != Eigen::Success)
        throw Error("invalid-covariance", "eigendecomposition failed");
    Vec ev = es.eigenvalues();
    if (min_eigenvalue) *min_eigenvalue = ev.minCoeff();
    Vec root = ev.cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * root.asDiagonal();
}

}  // namespace qnet
