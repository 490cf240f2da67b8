#pragma once

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "lvstab/feasibility.hpp"
#include "lvstab/lmi.hpp"
#include "lvstab/model.hpp"
#include "lvstab/types.hpp"

namespace lvstab {

// How the positive equilibrium is pinned down: solve for it from given
// growth rates, or assume it and derive the growth rates it implies.
enum class EquilibriumMode { FromRho, FromUStar };

inline const char* to_string(EquilibriumMode m) {
    return m == EquilibriumMode::FromRho ? "rho" : "ustar";
}

struct SweepCell {
    double lambda2 = 1.0;     // noise-intensity scale
    double lambda1 = 1.0;     // distributed-interaction scale
    double taud_scale = 0.0;  // delay-derivative-bound scale
};

enum class CellStatus { Capped, Bounded, Infeasible };

inline const char* to_string(CellStatus s) {
    switch (s) {
        case CellStatus::Capped: return "capped";
        case CellStatus::Bounded: return "bounded";
        default: return "infeasible-at-any-tau";
    }
}

struct CellResult {
    SweepCell cell;
    CellStatus status = CellStatus::Infeasible;
    double madb = std::numeric_limits<double>::quiet_NaN();
    // Certified margins at the final bisection bracket: the last feasible
    // delay scale (lo) and the first infeasible one (hi).
    double margin_lo = std::numeric_limits<double>::quiet_NaN();
    double margin_hi = std::numeric_limits<double>::quiet_NaN();
    Vector witness;  // multipliers at the last feasible delay scale
    bool monotone_ok = true;
    std::string note;
    int solves = 0;
};

struct SweepConfig {
    ModelSpec base;  // pattern matrices; scaled per cell before validation
    EquilibriumMode eq_mode = EquilibriumMode::FromUStar;
    Vector u_star_target;  // required in FromUStar mode
    Sigma4Mode sigma4_mode = Sigma4Mode::DerivationConsistent;
    std::vector<double> lambda2_grid{1.0, 2.0};
    std::vector<double> lambda1_grid{0.0, 0.5, 1.0};
    std::vector<double> taud_grid{0.0, 0.2, 0.4, 0.6, 0.6515};
    double tau_lo = 1e-3;
    double tau_cap = 100.0;
    double tol = 5e-4;
    int monotonicity_samples = 8;
    SolverOptions solver;
};

struct SweepResult {
    std::vector<CellResult> cells;  // lambda2-major, then lambda1, then taud
};

// Applies the per-cell scale factors to the pattern model.  The derived
// quantities (beta, A_tilde, equilibrium) are intentionally not touched here;
// they are recomputed downstream because beta depends on the delay bounds.
inline ModelSpec scaled_model(const ModelSpec& base, double lambda1,
                              double lambda2, double tau_scale,
                              double taud_scale) {
    if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0) || !(taud_scale >= 0.0))
        throw InvalidScale("scale factors must be non-negative");
    if (!(tau_scale > 0.0))
        throw InvalidScale("delay scale must be positive");
    ModelSpec m = base;
    m.A_D = lambda1 * base.A_D;
    m.sigma = lambda2 * base.sigma;
    m.tau_bar = tau_scale * base.tau_bar;
    m.tau_bar_d = taud_scale * base.tau_bar_d;
    const double worst = m.tau_bar_d.maxCoeff();
    if (!(worst < 1.0)) {
        char buf[96];
        std::snprintf(buf, sizeof(buf),
                      "scaled tau_bar_d reaches %.17g; bounds must stay below 1",
                      worst);
        throw InvalidScale(buf);
    }
    return m;
}

// Full certification pipeline for one (cell, delay scale) point.
inline FeasibilityVerdict cell_verdict(const SweepConfig& cfg,
                                       const SweepCell& cell,
                                       double tau_scale,
                                       const Vector& warm = Vector()) {
    const ModelSpec m = scaled_model(cfg.base, cell.lambda1, cell.lambda2,
                                     tau_scale, cell.taud_scale);
    const DerivedModel d = cfg.eq_mode == EquilibriumMode::FromUStar
                               ? derive_from_target(m, cfg.u_star_target)
                               : derive(m);
    const LmiProblem prob = build_problem(m, d, cfg.sigma4_mode);
    SolverOptions opt = cfg.solver;
    opt.init = warm;
    return solve_feasibility(prob, opt);
}

namespace detail {

inline void append_note(std::string& note, const std::string& extra) {
    if (!note.empty()) note += "; ";
    note += extra;
}

// Samples feasibility across the bracket and reports feasible/infeasible
// interleavings instead of silently assuming monotonicity.  For bounded
// cells the stored witness is also re-certified on a fresh assembly just
// below the reported bound.
inline void monotonicity_check(const SweepConfig& cfg, const SweepCell& cell,
                               CellResult& res) {
    const int K = cfg.monotonicity_samples;
    if (K <= 0 || cfg.tau_lo >= cfg.tau_cap) return;

    const bool bounded = res.status == CellStatus::Bounded;
    if (bounded && res.witness.size() > 0 &&
        res.madb - cfg.tol >= cfg.tau_lo) {
        const double tau = res.madb - cfg.tol;
        const ModelSpec m = scaled_model(cfg.base, cell.lambda1, cell.lambda2,
                                         tau, cell.taud_scale);
        const DerivedModel d = cfg.eq_mode == EquilibriumMode::FromUStar
                                   ? derive_from_target(m, cfg.u_star_target)
                                   : derive(m);
        const LmiProblem prob = build_problem(m, d, cfg.sigma4_mode);
        const CertifiedPoint cp =
            certify(prob, res.witness, cfg.solver.eps_neg_scale);
        if (!(cp.margin < 0.0)) {
            res.monotone_ok = false;
            char buf[128];
            std::snprintf(buf, sizeof(buf),
                          "witness re-certification failed just below the "
                          "bound (margin %.3g at tau=%.6g)",
                          cp.margin, tau);
            append_note(res.note, buf);
        }
    }

    const double ratio = cfg.tau_cap / cfg.tau_lo;
    for (int i = 0; i < K; ++i) {
        const double frac = K == 1 ? 0.0 : static_cast<double>(i) / (K - 1);
        const double tau = cfg.tau_lo * std::pow(ratio, frac);
        if (bounded && std::abs(tau - res.madb) <= cfg.tol)
            continue;  // inside the unresolved bracket band
        const FeasibilityVerdict v = cell_verdict(cfg, cell, tau);
        ++res.solves;
        const bool feas = v.status == FeasibilityStatus::Feasible;
        bool expected;
        switch (res.status) {
            case CellStatus::Capped: expected = true; break;
            case CellStatus::Infeasible: expected = false; break;
            default: expected = tau < res.madb; break;
        }
        if (feas != expected) {
            res.monotone_ok = false;
            char buf[160];
            std::snprintf(buf, sizeof(buf),
                          "NonMonotoneFeasibility: verdict %s at tau=%.6g "
                          "contradicts %s cell with madb=%.6g",
                          feas ? "feasible" : "not-feasible", tau,
                          to_string(res.status), res.madb);
            append_note(res.note, buf);
        }
    }
}

}  // namespace detail

// Largest delay scale keeping the certificate feasible, by bisection.
// Feasibility is treated as certified only for a strict Feasible verdict;
// indeterminate boundary points count as not feasible, which keeps the
// reported bound conservative.
inline CellResult madb_bisect(const SweepConfig& cfg, const SweepCell& cell) {
    if (!(cfg.tau_lo > 0.0) || !(cfg.tau_lo <= cfg.tau_cap) ||
        !(cfg.tol > 0.0))
        throw InvalidScale(
            "bisection bracket must satisfy 0 < tau_lo <= tau_cap with "
            "positive tolerance");
    CellResult res;
    res.cell = cell;

    Vector warm;
    const auto probe = [&](double tau) {
        FeasibilityVerdict v = cell_verdict(cfg, cell, tau, warm);
        ++res.solves;
        if (v.status == FeasibilityStatus::Feasible) warm = v.witness;
        return v;
    };

    const FeasibilityVerdict at_lo = probe(cfg.tau_lo);
    if (at_lo.status != FeasibilityStatus::Feasible) {
        res.status = CellStatus::Infeasible;
        res.margin_hi = at_lo.margin;
        if (at_lo.status == FeasibilityStatus::Indeterminate)
            detail::append_note(res.note,
                                "verdict at tau_lo was indeterminate");
        detail::monotonicity_check(cfg, cell, res);
        return res;
    }

    if (cfg.tau_lo == cfg.tau_cap) {  // degenerate bracket
        res.status = CellStatus::Capped;
        res.madb = cfg.tau_lo;
        res.margin_lo = at_lo.margin;
        res.witness = at_lo.witness;
        return res;
    }

    const FeasibilityVerdict at_cap = probe(cfg.tau_cap);
    if (at_cap.status == FeasibilityStatus::Feasible) {
        res.status = CellStatus::Capped;
        res.madb = cfg.tau_cap;
        res.margin_lo = at_cap.margin;
        res.witness = at_cap.witness;
        detail::monotonicity_check(cfg, cell, res);
        return res;
    }

    double lo = cfg.tau_lo, hi = cfg.tau_cap;
    double margin_lo = at_lo.margin, margin_hi = at_cap.margin;
    Vector wit = at_lo.witness;
    while (hi - lo > cfg.tol) {
        const double mid = 0.5 * (lo + hi);
        const FeasibilityVerdict v = probe(mid);
        if (v.status == FeasibilityStatus::Feasible) {
            lo = mid;
            margin_lo = v.margin;
            wit = v.witness;
        } else {
            hi = mid;
            margin_hi = v.margin;
        }
    }
    res.status = CellStatus::Bounded;
    res.madb = lo;
    res.margin_lo = margin_lo;
    res.margin_hi = margin_hi;
    res.witness = wit;
    detail::monotonicity_check(cfg, cell, res);
    return res;
}

// With no distributed interaction (lambda1 = 0) the certificate has no
// channel through which the delay upper bounds can act, so feasibility must
// not depend on the delay scale.  This check verifies that structurally:
// identical verdicts across widely separated delay scales for every
// delay-derivative column, plus a scan locating the feasibility edge just
// above the last column.
struct TauIndependenceRow {
    double lambda2 = 1.0;
    double taud_scale = 0.0;
    FeasibilityStatus status[3] = {FeasibilityStatus::Indeterminate,
                                   FeasibilityStatus::Indeterminate,
                                   FeasibilityStatus::Indeterminate};
    bool consistent = false;
};

struct TauIndependenceEdge {
    double lambda2 = 1.0;
    std::vector<double> taud_scales;
    std::vector<FeasibilityStatus> status;
    // First scanned scale that is no longer feasible (NaN if none flips).
    double flip_at = std::numeric_limits<double>::quiet_NaN();
};

struct TauIndependenceReport {
    // One row per (lambda2, taud) pair; verdicts at the three probe scales.
    static constexpr double probe_scales[3] = {0.01, 1.0, 100.0};
    std::vector<TauIndependenceRow> rows;
    std::vector<TauIndependenceEdge> edges;
    bool all_consistent = false;
};

inline TauIndependenceReport a_d_zero_tau_independence_check(
    const SweepConfig& cfg) {
    TauIndependenceReport rep;
    rep.all_consistent = true;
    for (double l2 : cfg.lambda2_grid) {
        for (double td : cfg.taud_grid) {
            TauIndependenceRow row;
            row.lambda2 = l2;
            row.taud_scale = td;
            const SweepCell cell{l2, 0.0, td};
            Vector warm;
            for (int s = 0; s < 3; ++s) {
                const FeasibilityVerdict v = cell_verdict(
                    cfg, cell, TauIndependenceReport::probe_scales[s], warm);
                if (v.status == FeasibilityStatus::Feasible)
                    warm = v.witness;
                row.status[s] = v.status;
            }
            row.consistent = row.status[0] == row.status[1] &&
                             row.status[1] == row.status[2];
            rep.all_consistent = rep.all_consistent && row.consistent;
            rep.rows.push_back(row);
        }

        TauIndependenceEdge edge;
        edge.lambda2 = l2;
        const double base =
            cfg.taud_grid.empty() ? 0.6515 : cfg.taud_grid.back();
        edge.taud_scales = {base, 0.66, 0.67, 0.68, 0.69, 0.70};
        Vector warm;
        for (double td : edge.taud_scales) {
            const FeasibilityVerdict v =
                cell_verdict(cfg, SweepCell{l2, 0.0, td}, 1.0, warm);
            if (v.status == FeasibilityStatus::Feasible) warm = v.witness;
            edge.status.push_back(v.status);
            if (v.status != FeasibilityStatus::Feasible &&
                std::isnan(edge.flip_at))
                edge.flip_at = td;
        }
        rep.edges.push_back(edge);
    }
    return rep;
}

// Evaluates the full scale grid.  Cells are independent; a small worker pool
// (size from LVSTAB_THREADS, default 1) pulls cell indices from a shared
// counter and writes results by index, so the reduced grid order never
// depends on scheduling.
inline SweepResult run_table(const SweepConfig& cfg) {
    SweepResult out;
    std::vector<SweepCell> cells;
    for (double l2 : cfg.lambda2_grid)
        for (double l1 : cfg.lambda1_grid)
            for (double td : cfg.taud_grid)
                cells.push_back(SweepCell{l2, l1, td});
    out.cells.resize(cells.size());

    int threads = 1;
    if (const char* env = std::getenv("LVSTAB_THREADS"))
        threads = std::max(1, std::atoi(env));
    threads = std::min<int>(threads, static_cast<int>(cells.size()));

    std::atomic<size_t> next{0};
    const auto worker = [&]() {
        for (;;) {
            const size_t idx = next.fetch_add(1);
            if (idx >= cells.size()) return;
            out.cells[idx] = madb_bisect(cfg, cells[idx]);
        }
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return out;
}

}  // namespace lvstab
