#pragma once

#include <Eigen/LU>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>

#include "lvstab/types.hpp"

namespace lvstab {

// n-species interaction model with discrete and distributed delays and
// multiplicative noise.  Interaction matrices are dense n x n; entry (i,j)
// couples species i to species j.
struct ModelSpec {
    int n = 0;
    Matrix A;          // instantaneous interaction coefficients
    Matrix A_d;        // discrete-delay interaction coefficients
    Matrix A_D;        // distributed-delay interaction coefficients
    Matrix alpha;      // distributed-delay kernel decay rates, >= 0
    Matrix tau_bar;    // delay upper bounds, > 0
    Matrix tau_bar_d;  // delay derivative upper bounds, max < 1
    Matrix sigma;      // noise intensity coefficients, >= 0
    Vector rho;        // intrinsic growth rates, > 0 (empty if equilibrium given)

    void validate(bool require_rho = true) const;
};

// Quantities derived from a ModelSpec that the certification and simulation
// layers share.
struct DerivedModel {
    Matrix beta;       // effective kernel masses over one delay window
    Matrix A_beta_D;   // A_D weighted elementwise by beta
    Matrix A_tilde;    // A + A_d + A_beta_D
    Vector u_star;     // positive equilibrium
    double tau_bar_max = 0.0;
};

namespace detail {

inline void check_shape(const Matrix& M, int n, const char* name) {
    if (M.rows() != n || M.cols() != n) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%s must be %d x %d, got %ld x %ld",
                      name, n, n, static_cast<long>(M.rows()),
                      static_cast<long>(M.cols()));
        throw ModelError(buf);
    }
}

inline std::string entry_msg(const char* name, int i, int j, double v,
                             const char* req) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s(%d,%d) = %.17g violates %s", name, i,
                  j, v, req);
    return buf;
}

}  // namespace detail

inline void ModelSpec::validate(bool require_rho) const {
    if (n <= 0) throw ModelError("species count n must be positive");
    detail::check_shape(A, n, "A");
    detail::check_shape(A_d, n, "A_d");
    detail::check_shape(A_D, n, "A_D");
    detail::check_shape(alpha, n, "alpha");
    detail::check_shape(tau_bar, n, "tau_bar");
    detail::check_shape(tau_bar_d, n, "tau_bar_d");
    detail::check_shape(sigma, n, "sigma");
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (!(tau_bar(i, j) > 0.0))
                throw ModelError(
                    detail::entry_msg("tau_bar", i, j, tau_bar(i, j), "> 0"));
            if (!(alpha(i, j) >= 0.0))
                throw ModelError(
                    detail::entry_msg("alpha", i, j, alpha(i, j), ">= 0"));
            if (!(sigma(i, j) >= 0.0))
                throw ModelError(
                    detail::entry_msg("sigma", i, j, sigma(i, j), ">= 0"));
            if (!(tau_bar_d(i, j) < 1.0))
                throw ModelError(detail::entry_msg(
                    "tau_bar_d", i, j, tau_bar_d(i, j), "< 1"));
        }
    }
    if (require_rho) {
        if (rho.size() != n)
            throw ModelError("rho must have length n = " + std::to_string(n));
        for (int i = 0; i < n; ++i) {
            if (!(rho(i) > 0.0)) {
                char buf[96];
                std::snprintf(buf, sizeof(buf),
                              "rho(%d) = %.17g violates > 0", i, rho(i));
                throw ModelError(buf);
            }
        }
    }
}

// Mass of the normalized exponential kernel over one delay window:
//   beta = (1 - exp(-alpha * tau_bar)) / alpha,  beta -> tau_bar as alpha -> 0.
// The series branch keeps the expression well conditioned near alpha = 0.
inline double beta_entry(double alpha, double tau_bar) {
    const double at = alpha * tau_bar;
    if (std::abs(at) < 1e-8) return tau_bar * (1.0 - 0.5 * at);
    return (1.0 - std::exp(-at)) / alpha;
}

inline Matrix compute_beta(const Matrix& alpha, const Matrix& tau_bar) {
    Matrix beta(alpha.rows(), alpha.cols());
    for (int i = 0; i < alpha.rows(); ++i)
        for (int j = 0; j < alpha.cols(); ++j)
            beta(i, j) = beta_entry(alpha(i, j), tau_bar(i, j));
    return beta;
}

namespace detail {

// Shared by derive() and equilibrium_from_target(): everything derivable
// without knowing the equilibrium.
inline DerivedModel derive_coefficients(const ModelSpec& spec) {
    DerivedModel d;
    d.beta = compute_beta(spec.alpha, spec.tau_bar);
    d.A_beta_D = spec.A_D.cwiseProduct(d.beta);
    d.A_tilde = spec.A + spec.A_d + d.A_beta_D;
    d.tau_bar_max = spec.tau_bar.maxCoeff();
    return d;
}

}  // namespace detail

// Solves A_tilde * u_star = rho for the positive equilibrium and bundles the
// derived coefficient matrices.  Rejects near-singular aggregate interaction
// matrices and equilibria that are not strictly positive.
inline DerivedModel derive(const ModelSpec& spec) {
    spec.validate(/*require_rho=*/true);
    DerivedModel d = detail::derive_coefficients(spec);

    Eigen::PartialPivLU<Matrix> lu(d.A_tilde);
    const double rc = lu.rcond();
    if (!(rc > 1e-12)) {
        char buf[96];
        std::snprintf(buf, sizeof(buf),
                      "aggregate interaction matrix is near singular "
                      "(condition estimate %.3g)",
                      rc > 0 ? 1.0 / rc : std::numeric_limits<double>::infinity());
        throw SingularSystem(buf);
    }
    Vector u = lu.solve(spec.rho);
    // One step of iterative refinement tightens the residual at negligible cost.
    u += lu.solve(spec.rho - d.A_tilde * u);

    const double res = (d.A_tilde * u - spec.rho).cwiseAbs().maxCoeff();
    const double scale =
        d.A_tilde.cwiseAbs().maxCoeff() * u.cwiseAbs().maxCoeff() +
        spec.rho.cwiseAbs().maxCoeff();
    if (!(res <= 1e-10 * scale))
        throw SingularSystem("equilibrium solve residual did not converge");

    for (int i = 0; i < spec.n; ++i) {
        if (!(u(i) > 0.0)) {
            char buf[128];
            std::snprintf(buf, sizeof(buf),
                          "equilibrium component %d = %.17g is not positive",
                          i, u(i));
            throw NonPositiveEquilibrium(buf);
        }
    }
    d.u_star = u;
    return d;
}

// Returns a copy of `spec` whose growth rates are chosen so that `u_star` is
// the exact equilibrium: rho = A_tilde * u_star.
inline ModelSpec equilibrium_from_target(const ModelSpec& spec,
                                         const Vector& u_star) {
    spec.validate(/*require_rho=*/false);
    if (u_star.size() != spec.n)
        throw ModelError("equilibrium target must have length n = " +
                         std::to_string(spec.n));
    for (int i = 0; i < spec.n; ++i)
        if (!(u_star(i) > 0.0))
            throw NonPositiveEquilibrium(
                "equilibrium target has a non-positive component");

    const DerivedModel d = detail::derive_coefficients(spec);
    ModelSpec out = spec;
    // The implied growth rates may come out non-positive (the certificate
    // itself never uses them); downstream validation only re-checks them
    // when they are required as primary data.
    out.rho = d.A_tilde * u_star;
    return out;
}

// Derivation path for a pinned equilibrium: no growth rates and no linear
// solve are involved, so it works even for models whose implied growth
// rates would be inadmissible as primary data.
inline DerivedModel derive_from_target(const ModelSpec& spec,
                                       const Vector& u_star) {
    spec.validate(/*require_rho=*/false);
    if (u_star.size() != spec.n)
        throw ModelError("equilibrium target must have length n = " +
                         std::to_string(spec.n));
    for (int i = 0; i < spec.n; ++i)
        if (!(u_star(i) > 0.0))
            throw NonPositiveEquilibrium(
                "equilibrium target has a non-positive component");
    DerivedModel d = detail::derive_coefficients(spec);
    d.u_star = u_star;
    return d;
}

}  // namespace lvstab
