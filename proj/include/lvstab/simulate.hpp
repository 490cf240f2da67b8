#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <random>
#include <thread>
#include <vector>

#include "lvstab/lmi.hpp"
#include "lvstab/model.hpp"
#include "lvstab/types.hpp"

namespace lvstab {

// Concrete time-varying delay families.  The model only bounds tau_ij(t) and
// its derivative; Sinusoidal attains both bounds tightly (sup tau = tau_bar,
// sup tau' = tau_bar_d) to stress certificates, Constant pins tau = tau_bar.
enum class DelayKind { Constant, Sinusoidal };

inline const char* to_string(DelayKind k) {
    return k == DelayKind::Constant ? "constant" : "sinusoidal";
}

struct DelayFunctionSpec {
    DelayKind kind = DelayKind::Sinusoidal;

    double eval(double tau_bar, double tau_bar_d, double t) const {
        if (kind == DelayKind::Constant) return tau_bar;
        if (!(tau_bar_d >= 0.0))
            throw ModelError(
                "sinusoidal delays need a non-negative derivative bound");
        const double amp = 0.45 * tau_bar;
        const double omega = tau_bar_d / amp;
        return 0.55 * tau_bar + amp * std::sin(omega * t);
    }
};

// Uniform-grid state history with linear interpolation.  Row k holds the
// state at t0 + k*dt; queries snap to nodes so node lookups are exact.
struct HistoryBuffer {
    double t0 = 0.0;
    double dt = 0.0;
    int n = 0;
    Matrix u;         // (#nodes) x n
    int filled = 0;   // number of valid rows

    static HistoryBuffer with_capacity(double t0, double dt, int n,
                                       int nodes) {
        HistoryBuffer h;
        h.t0 = t0;
        h.dt = dt;
        h.n = n;
        h.u = Matrix::Zero(nodes, n);
        return h;
    }

    void push(const Vector& state) {
        if (filled >= u.rows()) throw Error("history buffer capacity exceeded");
        u.row(filled++) = state.transpose();
    }

    double t_last() const { return t0 + (filled - 1) * dt; }

    double value(int species, double t) const {
        const double pos = (t - t0) / dt;
        if (pos < -1e-9 || pos > filled - 1 + 1e-9)
            throw Error("history lookup outside the stored window");
        int k = static_cast<int>(std::floor(pos));
        k = std::max(0, std::min(k, filled - 2 >= 0 ? filled - 2 : 0));
        double frac = pos - k;
        if (frac < 1e-9) frac = 0.0;
        if (frac > 1.0 - 1e-9 && k + 1 < filled) {
            ++k;
            frac = 0.0;
        }
        if (frac == 0.0) return u(k, species);
        return (1.0 - frac) * u(k, species) + frac * u(k + 1, species);
    }

    Vector state(double t) const {
        Vector s(n);
        for (int j = 0; j < n; ++j) s(j) = value(j, t);
        return s;
    }
};

// Trapezoid weights for one distributed-delay channel on a fixed grid: full
// cells at s = k*dt for k = 0..K plus a partial cell ending exactly at
// s = tau_bar.  Shared by the simulator hot path and the public kernel
// evaluation so both produce identical sums.
struct KernelWeights {
    double alpha = 0.0, tau_bar = 0.0, dt = 0.0;
    int K = 0;        // full cells
    double rem = 0.0; // tau_bar - K*dt
    std::vector<double> w;  // exp(-alpha * k * dt), k = 0..K
    double w_tail = 0.0;    // exp(-alpha * tau_bar)
};

inline KernelWeights make_kernel_weights(double alpha, double tau_bar,
                                         double dt) {
    KernelWeights kw;
    kw.alpha = alpha;
    kw.tau_bar = tau_bar;
    kw.dt = dt;
    kw.K = static_cast<int>(std::floor(tau_bar / dt + 1e-12));
    kw.rem = tau_bar - kw.K * dt;
    if (kw.rem < 1e-12 * tau_bar) kw.rem = 0.0;
    kw.w.resize(kw.K + 1);
    for (int k = 0; k <= kw.K; ++k) kw.w[k] = std::exp(-alpha * k * dt);
    kw.w_tail = std::exp(-alpha * tau_bar);
    return kw;
}

// Trapezoidal value of the distributed term
//   K_ij(t) = integral over [t - tau_bar, t] of exp(alpha*(eta - t)) u_j(eta)
// on the history grid; exact for constant integrands with alpha = 0 and for
// linear u with alpha = 0, O(dt^2) otherwise.
inline double distributed_kernel(const HistoryBuffer& hist, int species,
                                 const KernelWeights& kw, double t) {
    const int K = kw.K;
    double acc = 0.0;
    if (K > 0) {
        acc += 0.5 * kw.w[0] * hist.value(species, t);
        for (int k = 1; k < K; ++k)
            acc += kw.w[k] * hist.value(species, t - k * kw.dt);
        acc += 0.5 * kw.w[K] * hist.value(species, t - K * kw.dt);
        acc *= kw.dt;
    }
    if (kw.rem > 0.0) {
        const double y_edge = hist.value(species, t - K * kw.dt);
        const double y_tail = hist.value(species, t - kw.tau_bar);
        acc += 0.5 * kw.rem * (kw.w[K] * y_edge + kw.w_tail * y_tail);
    } else if (K == 0) {
        // Degenerate window shorter than one grid cell with rem snapped to 0.
        acc = 0.0;
    }
    return acc;
}

inline double distributed_kernel(const HistoryBuffer& hist, int species,
                                 double alpha, double tau_bar, double t) {
    return distributed_kernel(hist, species,
                              make_kernel_weights(alpha, tau_bar, hist.dt), t);
}

// One Euler-Maruyama step in log coordinates.  dW must hold n independent
// N(0, dt) increments.  Log coordinates keep every realized state strictly
// positive; the drift carries the Ito correction from the change of
// variables.
struct StepOutcome {
    Vector u;
    bool overflow = false;
};

inline StepOutcome step_log_em(const ModelSpec& m, const DerivedModel& d,
                               const HistoryBuffer& hist,
                               const DelayFunctionSpec& delay,
                               const std::vector<KernelWeights>& kernels,
                               double t, double dt, const Vector& dW) {
    const int n = m.n;
    const Vector u_now = hist.u.row(hist.filled - 1).transpose();
    StepOutcome out;
    out.u.resize(n);
    for (int i = 0; i < n; ++i) {
        double f = m.rho(i);
        double g = 0.0;
        for (int j = 0; j < n; ++j) {
            f -= m.A(i, j) * u_now(j);
            if (m.A_d(i, j) != 0.0) {
                const double tau =
                    delay.eval(m.tau_bar(i, j), m.tau_bar_d(i, j), t);
                f -= m.A_d(i, j) * hist.value(j, t - tau);
            }
            if (m.A_D(i, j) != 0.0)
                f -= m.A_D(i, j) *
                     distributed_kernel(hist, j,
                                        kernels[pair_index(i, j, n)], t);
            g += m.sigma(i, j) * (u_now(j) - d.u_star(j));
        }
        const double v_new =
            std::log(u_now(i)) + (f - 0.5 * g * g) * dt + g * dW(i);
        if (!(std::abs(v_new) <= 700.0)) {
            out.overflow = true;
            return out;
        }
        out.u(i) = std::exp(v_new);
    }
    return out;
}

namespace detail {

// Trapezoid of weight(s) * x_j(t-s)^2 over s in [0, L] on the history grid,
// with a partial end cell.
template <typename WeightFn>
double window_integral(const HistoryBuffer& hist, int species, double ustar_j,
                       double L, double t, WeightFn weight) {
    const double dt = hist.dt;
    int K = static_cast<int>(std::floor(L / dt + 1e-12));
    double rem = L - K * dt;
    if (rem < 1e-12 * std::max(L, dt)) rem = 0.0;
    const auto xsq = [&](double s) {
        const double x = hist.value(species, t - s) - ustar_j;
        return x * x;
    };
    double acc = 0.0;
    if (K > 0) {
        acc += 0.5 * weight(0.0) * xsq(0.0);
        for (int k = 1; k < K; ++k) acc += weight(k * dt) * xsq(k * dt);
        acc += 0.5 * weight(K * dt) * xsq(K * dt);
        acc *= dt;
    }
    if (rem > 0.0)
        acc += 0.5 * rem * (weight(K * dt) * xsq(K * dt) + weight(L) * xsq(L));
    return acc;
}

}  // namespace detail

// Lyapunov-Krasovskii functional along a stored path at time t, for a given
// set of certificate multipliers.  All four families are included:
//  V1: entropy-like distance between u(t) and u*;
//  V2: discrete-delay energy over the time-varying window tau_ij(t);
//  V3: distributed-delay energy with the decaying ramp weight;
//  V4: window-normalized energy of the inner kernel integral (the zD lift),
//      with the inner integral cached on the grid in one backward pass.
inline double evaluate_lkf(const HistoryBuffer& hist, const ModelSpec& m,
                           const DerivedModel& d, const DecisionVars& vars,
                           const DelayFunctionSpec& delay, double t) {
    const int n = m.n;
    const double dt = hist.dt;
    double V = 0.0;

    for (int i = 0; i < n; ++i) {
        const double u_i = hist.value(i, t);
        if (!(u_i > 0.0))
            throw DomainError("state left the positive orthant; the "
                              "entropy term is undefined");
        const double us = d.u_star(i);
        const double x = u_i - us;
        V += vars.p(i) * (x - us * std::log(u_i / us));
    }

    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const int k = pair_index(i, j, n);
            const double tb = m.tau_bar(i, j);
            const double al = m.alpha(i, j);
            const double usj = d.u_star(j);

            if (vars.q(k) != 0.0) {
                const double L = delay.eval(tb, m.tau_bar_d(i, j), t);
                V += vars.q(k) * detail::window_integral(
                                     hist, j, usj, L, t,
                                     [](double) { return 1.0; });
            }
            if (vars.r(k) != 0.0) {
                V += vars.r(k) *
                     detail::window_integral(
                         hist, j, usj, tb, t, [&](double s) {
                             return (tb - s) * std::exp(-2.0 * al * s);
                         });
            }
            if (vars.s(k) != 0.0) {
                // Inner integral F(s) = int_0^s exp(-al*z) x_j(t-z) dz at
                // grid nodes, one backward pass.
                int K = static_cast<int>(std::floor(tb / dt + 1e-12));
                double rem = tb - K * dt;
                if (rem < 1e-12 * std::max(tb, dt)) rem = 0.0;
                std::vector<double> F(K + 1), g(K + 1);
                for (int kk = 0; kk <= K; ++kk)
                    g[kk] = std::exp(-al * kk * dt) *
                            (hist.value(j, t - kk * dt) - usj);
                F[0] = 0.0;
                for (int kk = 1; kk <= K; ++kk)
                    F[kk] = F[kk - 1] + 0.5 * dt * (g[kk - 1] + g[kk]);
                double acc = 0.0;
                if (K > 0) {
                    acc += 0.5 * F[0] * F[0];
                    for (int kk = 1; kk < K; ++kk) acc += F[kk] * F[kk];
                    acc += 0.5 * F[K] * F[K];
                    acc *= dt;
                }
                if (rem > 0.0) {
                    const double g_tail =
                        std::exp(-al * tb) *
                        (hist.value(j, t - tb) - usj);
                    const double F_tail =
                        F[K] + 0.5 * rem * (g[K] + g_tail);
                    acc += 0.5 * rem * (F[K] * F[K] + F_tail * F_tail);
                }
                V += vars.s(k) / tb * acc;
            }
        }
    }
    return V;
}

struct SimOptions {
    double horizon = 50.0;
    double dt = 0.0;  // <= 0 selects min(tau_bar_min / 20, 1e-2)
    int paths = 100;
    std::uint64_t seed = 42;
    Vector u0;  // constant initial history; empty selects 1.3 * u_star
    DelayKind delay_kind = DelayKind::Sinusoidal;
    int trace_samples = 201;
    bool record_lkf = true;
};

struct PathTrace {
    std::uint64_t path_index = 0;
    bool overflow = false;
    double abort_time = std::numeric_limits<double>::quiet_NaN();
    // Entries only for trace times the path reached.
    std::vector<Vector> u;
    std::vector<double> V;  // empty when no multipliers were supplied
};

struct PathEnsemble {
    double dt = 0.0;
    int steps = 0;
    Vector u_star;
    Vector u0;
    std::vector<double> t;  // trace grid
    std::vector<PathTrace> paths;
    // Summary over paths alive at each trace time.
    std::vector<double> mean_dist, q05_dist, q50_dist, q95_dist, mean_V;
    int overflow_count = 0;
};

inline double resolve_dt(const ModelSpec& m, double requested) {
    if (requested > 0.0) return requested;
    return std::min(m.tau_bar.minCoeff() / 20.0, 1e-2);
}

// Simulates M independent paths.  Each path derives its RNG stream from
// (master seed, path index), so results do not depend on scheduling; the
// summary reduction runs in path order.
inline PathEnsemble run_ensemble(const ModelSpec& m, const DerivedModel& d,
                                 const DecisionVars* vars,
                                 const SimOptions& opt) {
    // The drift needs growth rates of either sign (they may be implied by a
    // pinned equilibrium), so positivity is not re-imposed here.
    m.validate(/*require_rho=*/false);
    if (m.rho.size() != m.n)
        throw ModelError("simulation requires growth rates of length n");
    if (opt.paths < 1) throw Error("ensemble needs at least one path");
    if (!(opt.horizon > 0.0)) throw Error("horizon must be positive");
    const int n = m.n;

    PathEnsemble ens;
    ens.dt = resolve_dt(m, opt.dt);
    ens.steps = static_cast<int>(std::ceil(opt.horizon / ens.dt - 1e-9));
    ens.u_star = d.u_star;
    ens.u0 = opt.u0.size() == n ? opt.u0 : Vector(1.3 * d.u_star);
    for (int i = 0; i < n; ++i)
        if (!(ens.u0(i) > 0.0))
            throw ModelError("initial history must be strictly positive");

    const double dt = ens.dt;
    const int H = static_cast<int>(std::ceil(d.tau_bar_max / dt - 1e-9));
    const int nodes = H + ens.steps + 1;

    // Trace grid: evenly spread step indices, always including 0 and the end.
    std::vector<int> trace_idx;
    const int S = std::min(opt.trace_samples, ens.steps + 1);
    for (int r = 0; r < S; ++r) {
        const int k = S == 1 ? ens.steps
                             : static_cast<int>(
                                   (static_cast<long long>(r) * ens.steps) /
                                   (S - 1));
        if (trace_idx.empty() || trace_idx.back() != k) trace_idx.push_back(k);
    }
    for (int k : trace_idx) ens.t.push_back(k * dt);

    std::vector<KernelWeights> kernels(n * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            kernels[pair_index(i, j, n)] =
                make_kernel_weights(m.alpha(i, j), m.tau_bar(i, j), dt);

    const DelayFunctionSpec delay{opt.delay_kind};
    const bool want_V = vars != nullptr && opt.record_lkf;
    ens.paths.resize(opt.paths);

    const auto run_path = [&](int ell) {
        PathTrace& tr = ens.paths[ell];
        tr.path_index = static_cast<std::uint64_t>(ell);
        std::seed_seq sq{static_cast<std::uint32_t>(opt.seed),
                         static_cast<std::uint32_t>(opt.seed >> 32),
                         static_cast<std::uint32_t>(ell),
                         0x9e3779b9u};
        std::mt19937_64 rng(sq);
        std::normal_distribution<double> gauss(0.0, 1.0);
        const double sq_dt = std::sqrt(dt);

        HistoryBuffer hist = HistoryBuffer::with_capacity(-H * dt, dt, n, nodes);
        for (int k = 0; k <= H; ++k) hist.push(ens.u0);

        size_t next_trace = 0;
        const auto record = [&](int step_idx) {
            while (next_trace < trace_idx.size() &&
                   trace_idx[next_trace] == step_idx) {
                tr.u.push_back(hist.u.row(hist.filled - 1).transpose());
                if (want_V)
                    tr.V.push_back(evaluate_lkf(hist, m, d, *vars, delay,
                                                step_idx * dt));
                ++next_trace;
            }
        };
        record(0);

        Vector dW(n);
        for (int k = 0; k < ens.steps; ++k) {
            const double t = k * dt;
            for (int i = 0; i < n; ++i) dW(i) = sq_dt * gauss(rng);
            const StepOutcome s =
                step_log_em(m, d, hist, delay, kernels, t, dt, dW);
            if (s.overflow) {
                tr.overflow = true;
                tr.abort_time = t;
                return;
            }
            hist.push(s.u);
            record(k + 1);
        }
    };

    int threads = 1;
    if (const char* env = std::getenv("LVSTAB_THREADS"))
        threads = std::max(1, std::atoi(env));
    threads = std::min(threads, opt.paths);
    if (threads <= 1) {
        for (int ell = 0; ell < opt.paths; ++ell) run_path(ell);
    } else {
        std::atomic<int> cursor{0};
        const auto worker = [&]() {
            for (;;) {
                const int ell = cursor.fetch_add(1);
                if (ell >= opt.paths) return;
                run_path(ell);
            }
        };
        std::vector<std::thread> pool;
        for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    for (const PathTrace& tr : ens.paths)
        if (tr.overflow) ++ens.overflow_count;

    const size_t T = ens.t.size();
    ens.mean_dist.assign(T, std::numeric_limits<double>::quiet_NaN());
    ens.q05_dist.assign(T, std::numeric_limits<double>::quiet_NaN());
    ens.q50_dist.assign(T, std::numeric_limits<double>::quiet_NaN());
    ens.q95_dist.assign(T, std::numeric_limits<double>::quiet_NaN());
    ens.mean_V.assign(T, std::numeric_limits<double>::quiet_NaN());
    std::vector<double> dists;
    for (size_t r = 0; r < T; ++r) {
        dists.clear();
        double sum = 0.0, sumV = 0.0;
        int haveV = 0;
        for (const PathTrace& tr : ens.paths) {
            if (tr.u.size() <= r) continue;  // aborted before this time
            const double dist = (tr.u[r] - d.u_star).norm();
            dists.push_back(dist);
            sum += dist;
            if (tr.V.size() > r) {
                sumV += tr.V[r];
                ++haveV;
            }
        }
        if (dists.empty()) continue;
        std::sort(dists.begin(), dists.end());
        const auto quantile = [&](double q) {
            const size_t idx = static_cast<size_t>(
                std::min<double>(dists.size() - 1.0,
                                 std::floor(q * (dists.size() - 1) + 0.5)));
            return dists[idx];
        };
        ens.mean_dist[r] = sum / dists.size();
        ens.q05_dist[r] = quantile(0.05);
        ens.q50_dist[r] = quantile(0.50);
        ens.q95_dist[r] = quantile(0.95);
        if (haveV > 0) ens.mean_V[r] = sumV / haveV;
    }
    return ens;
}

}  // namespace lvstab
