#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "lvstab/model.hpp"
#include "lvstab/types.hpp"

namespace lvstab {

// The stability certificate couples the instantaneous state to three lifted
// channel blocks.  Two equivalent sign conventions circulate for the final
// quadratic-coupling block; DerivationConsistent places the damping on the
// distributed-delay channel (the form the certificate's derivation yields),
// PaperLiteral places it on the discrete-delay channel.
enum class Sigma4Mode { DerivationConsistent, PaperLiteral };

inline const char* to_string(Sigma4Mode m) {
    return m == Sigma4Mode::DerivationConsistent ? "derivation" : "paper";
}

// Selector matrices and diagonal channel lifts for the augmented vector
// xi = (x, x~d, x~D, zD) of dimension N = n + 3n^2.  Channel k = i*n + j
// carries the (i,j) interaction pair.
struct AugmentedBasis {
    int n = 0;
    int N = 0;
    Matrix e1;     // n   x N, selects x
    Matrix e2;     // n^2 x N, selects x~d
    Matrix e3;     // n^2 x N, selects x~D
    Matrix e4;     // n^2 x N, selects zD
    Matrix e5;     // n^2 x N, stacked copies of x (stack * e1)
    Matrix stack;  // n^2 x n, channel k = (i,j) reads x_j
    Matrix cal_A;  // n x N, drift row map [A_tilde, lifted A_d, lifted A_D, 0]
    Vector T;      // n^2 diag, tau_bar per channel
    Vector Td;     // n^2 diag, 1 - tau_bar_d per channel
    Vector Aal;    // n^2 diag, alpha per channel
    Vector B;      // n^2 diag, beta per channel
    Vector u_star;
    Matrix sigma;
};

inline AugmentedBasis build_basis(const ModelSpec& spec,
                                  const DerivedModel& derived) {
    const int n = spec.n;
    if (n > 8)
        throw ModelError(
            "dense certificate path supports up to 8 species; got n = " +
            std::to_string(n));
    const int n2 = n * n;
    AugmentedBasis b;
    b.n = n;
    b.N = augmented_dim(n);

    b.e1 = Matrix::Zero(n, b.N);
    b.e1.block(0, 0, n, n).setIdentity();
    b.e2 = Matrix::Zero(n2, b.N);
    b.e2.block(0, n, n2, n2).setIdentity();
    b.e3 = Matrix::Zero(n2, b.N);
    b.e3.block(0, n + n2, n2, n2).setIdentity();
    b.e4 = Matrix::Zero(n2, b.N);
    b.e4.block(0, n + 2 * n2, n2, n2).setIdentity();

    b.stack = Matrix::Zero(n2, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) b.stack(pair_index(i, j, n), j) = 1.0;
    b.e5 = b.stack * b.e1;

    // Row i of the lifted interaction maps picks up channel (i,j) with the
    // matching matrix entry.
    b.cal_A = Matrix::Zero(n, b.N);
    b.cal_A.block(0, 0, n, n) = derived.A_tilde;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const int k = pair_index(i, j, n);
            b.cal_A(i, n + k) = spec.A_d(i, j);
            b.cal_A(i, n + n2 + k) = spec.A_D(i, j);
        }
    }

    b.T.resize(n2);
    b.Td.resize(n2);
    b.Aal.resize(n2);
    b.B.resize(n2);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const int k = pair_index(i, j, n);
            b.T(k) = spec.tau_bar(i, j);
            b.Td(k) = 1.0 - spec.tau_bar_d(i, j);
            b.Aal(k) = spec.alpha(i, j);
            b.B(k) = derived.beta(i, j);
        }
    }
    b.u_star = derived.u_star;
    b.sigma = spec.sigma;
    return b;
}

// Certificate multipliers: one p per species, one q/r/s per channel.
struct DecisionVars {
    int n = 0;
    Vector p;  // length n
    Vector q;  // length n^2
    Vector r;  // length n^2
    Vector s;  // length n^2

    static int count(int n) { return n + 3 * n * n; }

    Vector packed() const {
        Vector v(count(n));
        v << p, q, r, s;
        return v;
    }

    static DecisionVars unpack(const Vector& v, int n) {
        const int n2 = n * n;
        if (v.size() != count(n))
            throw Error("decision vector has wrong length");
        DecisionVars d;
        d.n = n;
        d.p = v.segment(0, n);
        d.q = v.segment(n, n2);
        d.r = v.segment(n + n2, n2);
        d.s = v.segment(n + 2 * n2, n2);
        return d;
    }

    static DecisionVars ones(int n) {
        DecisionVars d;
        d.n = n;
        d.p = Vector::Ones(n);
        d.q = Vector::Ones(n * n);
        d.r = Vector::Ones(n * n);
        d.s = Vector::Ones(n * n);
        return d;
    }
};

namespace detail {

inline Matrix symmetrize(const Matrix& M) {
    return 0.5 * (M + M.transpose());
}

}  // namespace detail

// Drift/diffusion block: -sym(e1' P cal_A) + (1/2) e1' sigma' P U* sigma e1.
inline Matrix assemble_sigma1(const AugmentedBasis& b, const Vector& p) {
    const Matrix Pa = p.asDiagonal() * b.cal_A;          // n x N
    Matrix M = -0.5 * (b.e1.transpose() * Pa);           // N x N
    M += M.transpose().eval();
    const Matrix PUs = (p.cwiseProduct(b.u_star)).asDiagonal() * b.sigma;
    M += 0.5 * b.e1.transpose() * (b.sigma.transpose() * PUs) * b.e1;
    return detail::symmetrize(M);
}

// Discrete-delay energy: column-sum gain on x minus rate-discounted loss on
// the delayed channel value x~d + x.
inline Matrix assemble_sigma2(const AugmentedBasis& b, const Vector& q) {
    const int n = b.n;
    Vector colsum = Vector::Zero(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) colsum(j) += q(pair_index(i, j, n));
    Matrix M = b.e1.transpose() * colsum.asDiagonal() * b.e1;
    const Matrix C = b.e2 + b.e5;  // n^2 x N
    M -= C.transpose() * (b.Td.cwiseProduct(q)).asDiagonal() * C;
    return detail::symmetrize(M);
}

// Distributed-delay energy with the window-weighted cross terms against zD.
inline Matrix assemble_sigma3(const AugmentedBasis& b, const Vector& r) {
    const int n = b.n;
    Vector wcol = Vector::Zero(n);  // per-species sum of tau_bar * r
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const int k = pair_index(i, j, n);
            wcol(j) += b.T(k) * r(k);
        }
    Matrix M = b.e1.transpose() * wcol.asDiagonal() * b.e1;

    const Vector r2 = r.cwiseQuotient(b.T);  // r / tau_bar per channel
    const Matrix C = b.e3 + b.B.asDiagonal() * b.e5;
    const Matrix R2C = r2.asDiagonal() * C;
    M -= 4.0 * (C.transpose() * R2C);
    const Matrix cross = C.transpose() * (r2.asDiagonal() * b.e4);
    M += 6.0 * (cross + cross.transpose());
    const Vector corner = 12.0 * r2 + 4.0 * b.Aal.cwiseProduct(r);
    M -= b.e4.transpose() * corner.asDiagonal() * b.e4;
    return detail::symmetrize(M);
}

// Cross-coupling block tying x to zD with window-normalized damping.  The
// damped channel depends on the sign convention (see Sigma4Mode).
inline Matrix assemble_sigma4(const AugmentedBasis& b, const Vector& s,
                              Sigma4Mode mode) {
    const int n = b.n;
    // stack' * diag(s): row j collects s over channels (i,j).
    Matrix S1 = Matrix::Zero(n, n * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const int k = pair_index(i, j, n);
            S1(j, k) = s(k);
        }
    Matrix M = b.e1.transpose() * (S1 * b.e4);
    M += M.transpose().eval();

    const Matrix C = (mode == Sigma4Mode::DerivationConsistent)
                         ? Matrix(b.e3 + b.B.asDiagonal() * b.e5)
                         : Matrix(b.e2 + b.B.asDiagonal() * b.e5);
    const Vector s2 = s.cwiseQuotient(b.T);
    M -= C.transpose() * s2.asDiagonal() * C;
    M -= 2.0 * b.e4.transpose() *
         (b.Aal.cwiseProduct(s)).asDiagonal() * b.e4;
    return detail::symmetrize(M);
}

inline Matrix assemble_sigma(const AugmentedBasis& b, const DecisionVars& v,
                             Sigma4Mode mode) {
    return assemble_sigma1(b, v.p) + assemble_sigma2(b, v.q) +
           assemble_sigma3(b, v.r) + assemble_sigma4(b, v.s, mode);
}

// The certificate matrix is linear and homogeneous in the multipliers, so it
// is cached as one symmetric coefficient matrix per scalar variable.
struct LmiProblem {
    AugmentedBasis basis;
    Sigma4Mode mode = Sigma4Mode::DerivationConsistent;
    int m = 0;  // number of decision variables
    std::vector<Matrix> coeff;

    // Sigma(v) from the cached coefficients.
    Matrix evaluate(const Vector& v) const {
        Matrix M = Matrix::Zero(basis.N, basis.N);
        for (int k = 0; k < m; ++k) M += v(k) * coeff[k];
        return M;
    }

    // Sigma(v) re-assembled from the block formulas, bypassing the cache.
    Matrix assemble(const Vector& v) const {
        return assemble_sigma(basis, DecisionVars::unpack(v, basis.n), mode);
    }

    std::string var_name(int k) const {
        const int n = basis.n;
        const int n2 = n * n;
        char buf[32];
        if (k < n) {
            std::snprintf(buf, sizeof(buf), "p_%d", k + 1);
        } else {
            const char* g = k < n + n2 ? "q" : (k < n + 2 * n2 ? "r" : "s");
            const int c = (k - n) % n2;
            std::snprintf(buf, sizeof(buf), "%s_%d%d", g, c / n + 1,
                          c % n + 1);
        }
        return buf;
    }
};

inline LmiProblem build_problem(const ModelSpec& spec,
                                const DerivedModel& derived, Sigma4Mode mode) {
    LmiProblem prob;
    prob.basis = build_basis(spec, derived);
    prob.mode = mode;
    const int n = spec.n;
    const int n2 = n * n;
    prob.m = DecisionVars::count(n);
    prob.coeff.reserve(prob.m);
    Vector unit;
    for (int k = 0; k < n; ++k) {
        unit = Vector::Unit(n, k);
        prob.coeff.push_back(assemble_sigma1(prob.basis, unit));
    }
    for (int k = 0; k < n2; ++k) {
        unit = Vector::Unit(n2, k);
        prob.coeff.push_back(assemble_sigma2(prob.basis, unit));
    }
    for (int k = 0; k < n2; ++k) {
        unit = Vector::Unit(n2, k);
        prob.coeff.push_back(assemble_sigma3(prob.basis, unit));
    }
    for (int k = 0; k < n2; ++k) {
        unit = Vector::Unit(n2, k);
        prob.coeff.push_back(assemble_sigma4(prob.basis, unit, mode));
    }
    return prob;
}

}  // namespace lvstab
