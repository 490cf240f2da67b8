#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "lvstab/types.hpp"

namespace lvstab {

// Full spectrum of a symmetric matrix with an a-posteriori residual
// certificate.  Eigenvalues ascend; eigenvector k is the matching column.
struct SymEigResult {
    Vector eigenvalues;
    Matrix eigenvectors;
    double residual_norm = 0.0;  // max_k ||M v_k - lambda_k v_k||_2
    int sweeps = 0;
};

// Cyclic Jacobi diagonalization.  The method is unconditionally stable for
// symmetric input and needs no shifts or deflation logic, which keeps the
// certification path easy to audit.  Operates on the symmetric part of M.
inline SymEigResult sym_eig(const Matrix& M_in) {
    if (M_in.rows() != M_in.cols())
        throw Error("sym_eig requires a square matrix");
    const int N = static_cast<int>(M_in.rows());
    const Matrix M = 0.5 * (M_in + M_in.transpose());

    Matrix A = M;
    Matrix V = Matrix::Identity(N, N);
    const double scale = std::max(M.norm(), 1e-300);
    const double tol = 1e-14 * scale;
    const int max_sweeps = 100;

    int sweep = 0;
    for (; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < N; ++p)
            for (int q = p + 1; q < N; ++q) off += 2.0 * A(p, q) * A(p, q);
        if (std::sqrt(off) <= tol) break;

        for (int p = 0; p < N - 1; ++p) {
            for (int q = p + 1; q < N; ++q) {
                const double apq = A(p, q);
                if (std::abs(apq) <= 0.1 * tol / N) continue;
                const double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
                double t;
                if (std::abs(theta) > 1e154) {
                    t = 0.5 / theta;  // avoids overflow in theta^2
                } else {
                    t = (theta >= 0 ? 1.0 : -1.0) /
                        (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                }
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                for (int k = 0; k < N; ++k) {
                    const double akp = A(k, p), akq = A(k, q);
                    A(k, p) = c * akp - s * akq;
                    A(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < N; ++k) {
                    const double apk = A(p, k), aqk = A(q, k);
                    A(p, k) = c * apk - s * aqk;
                    A(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < N; ++k) {
                    const double vkp = V(k, p), vkq = V(k, q);
                    V(k, p) = c * vkp - s * vkq;
                    V(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    if (sweep == max_sweeps)
        throw NoConvergence("Jacobi eigensolver did not converge in 100 sweeps");

    std::vector<int> order(N);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return A(a, a) < A(b, b); });

    SymEigResult out;
    out.eigenvalues.resize(N);
    out.eigenvectors.resize(N, N);
    for (int k = 0; k < N; ++k) {
        out.eigenvalues(k) = A(order[k], order[k]);
        out.eigenvectors.col(k) = V.col(order[k]);
    }
    out.sweeps = sweep;

    double worst = 0.0;
    for (int k = 0; k < N; ++k) {
        const double res =
            (M * out.eigenvectors.col(k) -
             out.eigenvalues(k) * out.eigenvectors.col(k))
                .norm();
        worst = std::max(worst, res);
    }
    out.residual_norm = worst;
    return out;
}

// Largest eigenvalue with its eigenvector; avoids copying the full spectrum
// at call sites that only need the extreme end.
struct MaxEig {
    double value = 0.0;
    Vector vector;
    double residual_norm = 0.0;
};

inline MaxEig max_eigenvalue(const Matrix& M) {
    const SymEigResult full = sym_eig(M);
    MaxEig out;
    const int N = static_cast<int>(full.eigenvalues.size());
    out.value = full.eigenvalues(N - 1);
    out.vector = full.eigenvectors.col(N - 1);
    out.residual_norm = full.residual_norm;
    return out;
}

}  // namespace lvstab
