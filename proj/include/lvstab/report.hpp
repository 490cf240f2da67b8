#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lvstab/feasibility.hpp"
#include "lvstab/simulate.hpp"
#include "lvstab/sweep.hpp"
#include "lvstab/types.hpp"

namespace lvstab {

// FNV-1a over raw bytes; used to stamp artifacts with the exact input they
// came from.
inline std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 1469598103934665603ull;
    for (const char c : data) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    return h;
}

struct Provenance {
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
    Sigma4Mode sigma4_mode = Sigma4Mode::DerivationConsistent;
    EquilibriumMode eq_mode = EquilibriumMode::FromRho;

    // Comment header embedded in every artifact.  Deliberately contains no
    // timestamps or host details so identical runs yield identical bytes.
    std::string header() const {
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "# config=%016llx seed=%llu sigma4_mode=%s "
                      "equilibrium_mode=%s\n",
                      static_cast<unsigned long long>(config_hash),
                      static_cast<unsigned long long>(seed),
                      to_string(sigma4_mode), to_string(eq_mode));
        return buf;
    }
};

namespace detail {

inline std::string fmt_g(double x) {
    if (std::isnan(x)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", x);
    return buf;
}

inline std::string fmt_f4(double x) {
    if (std::isnan(x)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.4f", x);
    return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Sweep artifacts

inline void write_sweep_csv(std::ostream& os, const SweepResult& result,
                            const Provenance& prov) {
    os << prov.header();
    os << "lambda2,lambda1,taud_scale,madb,status,margin_lo,margin_hi,"
          "equilibrium_mode,sigma4_mode\n";
    for (const CellResult& c : result.cells) {
        os << detail::fmt_g(c.cell.lambda2) << ','
           << detail::fmt_g(c.cell.lambda1) << ','
           << detail::fmt_g(c.cell.taud_scale) << ','
           << detail::fmt_g(c.madb) << ',' << to_string(c.status) << ','
           << detail::fmt_g(c.margin_lo) << ',' << detail::fmt_g(c.margin_hi)
           << ',' << to_string(prov.eq_mode) << ','
           << to_string(prov.sigma4_mode);
        if (!c.note.empty()) {
            std::string note = c.note;
            for (char& ch : note)
                if (ch == ',' || ch == '\n') ch = ';';
            os << " # " << note;
        }
        os << '\n';
    }
}

// Published comparison values: one row per cell, value either a number or
// the string "infeasible".
struct ReferenceEntry {
    SweepCell cell;
    bool infeasible = false;
    double madb = 0.0;
};

inline std::vector<ReferenceEntry> load_reference_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open reference file: " + path);
    std::vector<ReferenceEntry> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (line.rfind("lambda2", 0) == 0) continue;  // header row
        std::stringstream ss(line);
        std::string f0, f1, f2, f3;
        if (!std::getline(ss, f0, ',') || !std::getline(ss, f1, ',') ||
            !std::getline(ss, f2, ',') || !std::getline(ss, f3))
            throw ParseError("malformed reference row: " + line);
        ReferenceEntry e;
        e.cell.lambda2 = std::stod(f0);
        e.cell.lambda1 = std::stod(f1);
        e.cell.taud_scale = std::stod(f2);
        if (f3 == "infeasible") e.infeasible = true;
        else e.madb = std::stod(f3);
        out.push_back(e);
    }
    return out;
}

inline const ReferenceEntry* find_reference(
    const std::vector<ReferenceEntry>& refs, const SweepCell& cell) {
    for (const auto& e : refs)
        if (std::abs(e.cell.lambda2 - cell.lambda2) < 1e-12 &&
            std::abs(e.cell.lambda1 - cell.lambda1) < 1e-12 &&
            std::abs(e.cell.taud_scale - cell.taud_scale) < 1e-12)
            return &e;
    return nullptr;
}

// Aligned text table: one row per (lambda2, lambda1), one column per
// taud_scale, with published values printed underneath when available.
inline void write_sweep_text(std::ostream& os, const SweepResult& result,
                             const Provenance& prov,
                             const std::vector<ReferenceEntry>& refs) {
    std::vector<double> l2s, l1s, tds;
    for (const CellResult& c : result.cells) {
        const auto add = [](std::vector<double>& v, double x) {
            for (double y : v)
                if (std::abs(x - y) < 1e-12) return;
            v.push_back(x);
        };
        add(l2s, c.cell.lambda2);
        add(l1s, c.cell.lambda1);
        add(tds, c.cell.taud_scale);
    }
    const auto find_cell = [&](double l2, double l1,
                               double td) -> const CellResult* {
        for (const CellResult& c : result.cells)
            if (std::abs(c.cell.lambda2 - l2) < 1e-12 &&
                std::abs(c.cell.lambda1 - l1) < 1e-12 &&
                std::abs(c.cell.taud_scale - td) < 1e-12)
                return &c;
        return nullptr;
    };
    const auto cell_text = [](const CellResult* c) -> std::string {
        if (!c) return "";
        switch (c->status) {
            case CellStatus::Capped: return detail::fmt_f4(c->madb) + "*";
            case CellStatus::Bounded: return detail::fmt_f4(c->madb);
            default: return "-";
        }
    };

    os << prov.header();
    os << "maximum allowable delay scale per cell"
       << " ('*' = still feasible at the search cap, '-' = infeasible at "
          "the smallest scale searched)\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%8s %8s |", "lambda2", "lambda1");
    os << buf;
    for (double td : tds) {
        std::snprintf(buf, sizeof(buf), " %10s", detail::fmt_f4(td).c_str());
        os << buf;
    }
    os << "  (taud_scale)\n";
    for (double l2 : l2s) {
        for (double l1 : l1s) {
            std::snprintf(buf, sizeof(buf), "%8s %8s |",
                          detail::fmt_g(l2).c_str(),
                          detail::fmt_g(l1).c_str());
            os << buf;
            bool any_ref = false;
            for (double td : tds) {
                const CellResult* c = find_cell(l2, l1, td);
                std::snprintf(buf, sizeof(buf), " %10s",
                              cell_text(c).c_str());
                os << buf;
                if (c && find_reference(refs, c->cell)) any_ref = true;
            }
            os << '\n';
            if (any_ref) {
                std::snprintf(buf, sizeof(buf), "%8s %8s |", "", "ref:");
                os << buf;
                for (double td : tds) {
                    std::string txt;
                    if (const CellResult* c = find_cell(l2, l1, td)) {
                        if (const ReferenceEntry* e =
                                find_reference(refs, c->cell))
                            txt = e->infeasible ? "-"
                                                : detail::fmt_f4(e->madb);
                    }
                    std::snprintf(buf, sizeof(buf), " %10s", txt.c_str());
                    os << buf;
                }
                os << '\n';
            }
        }
    }
    bool any_warning = false;
    for (const CellResult& c : result.cells) {
        if (c.note.empty()) continue;
        if (!any_warning) {
            os << "notes:\n";
            any_warning = true;
        }
        os << "  cell (" << detail::fmt_g(c.cell.lambda2) << ", "
           << detail::fmt_g(c.cell.lambda1) << ", "
           << detail::fmt_g(c.cell.taud_scale) << "): " << c.note << '\n';
    }
}

inline void write_tau_independence_text(std::ostream& os,
                                        const TauIndependenceReport& rep) {
    os << "delay-bound independence with zero distributed interaction "
          "(lambda1 = 0):\n";
    for (const TauIndependenceRow& row : rep.rows) {
        os << "  lambda2 " << detail::fmt_g(row.lambda2) << ", taud_scale "
           << detail::fmt_g(row.taud_scale) << ": ";
        for (int s = 0; s < 3; ++s) {
            if (s) os << " / ";
            os << to_string(row.status[s]);
        }
        os << " at tau scales {0.01, 1, 100} -> "
           << (row.consistent ? "consistent" : "INCONSISTENT") << '\n';
    }
    for (const TauIndependenceEdge& edge : rep.edges) {
        os << "  feasibility edge in taud_scale at lambda2 "
           << detail::fmt_g(edge.lambda2) << ":";
        for (size_t i = 0; i < edge.taud_scales.size(); ++i)
            os << ' ' << detail::fmt_g(edge.taud_scales[i]) << "="
               << to_string(edge.status[i]);
        if (std::isnan(edge.flip_at))
            os << " -> no flip in the scanned window";
        else
            os << " -> first not-feasible at " << detail::fmt_g(edge.flip_at);
        os << '\n';
    }
}

// ---------------------------------------------------------------------------
// Certification report

inline void write_verdict_text(std::ostream& os,
                               const FeasibilityVerdict& verdict,
                               const LmiProblem& prob,
                               const Provenance& prov) {
    os << prov.header();
    os << "verdict: " << to_string(verdict.status) << '\n';
    os << "margin (largest eigenvalue at witness): "
       << detail::fmt_g(verdict.margin) << '\n';
    os << "strictness threshold: " << detail::fmt_g(verdict.eps_neg) << '\n';
    os << "certified lower bound on achievable margin: "
       << detail::fmt_g(verdict.lower_bound) << '\n';
    os << "eigensolver residual: " << detail::fmt_g(verdict.eig_residual)
       << '\n';
    os << "newton steps: " << verdict.newton_steps
       << ", attempts: " << verdict.attempts << '\n';
    os << "witness (normalized to sum 1):\n";
    for (int k = 0; k < verdict.witness.size(); ++k)
        os << "  " << prob.var_name(k) << " = "
           << detail::fmt_g(verdict.witness(k)) << '\n';
}

// ---------------------------------------------------------------------------
// Simulation artifacts

inline void write_ensemble_summary_csv(std::ostream& os,
                                       const PathEnsemble& ens,
                                       const Provenance& prov) {
    os << prov.header();
    os << "t,mean_dist,q05_dist,q50_dist,q95_dist,mean_V,alive\n";
    for (size_t r = 0; r < ens.t.size(); ++r) {
        int alive = 0;
        for (const PathTrace& p : ens.paths)
            if (p.u.size() > r) ++alive;
        os << detail::fmt_g(ens.t[r]) << ',' << detail::fmt_g(ens.mean_dist[r])
           << ',' << detail::fmt_g(ens.q05_dist[r]) << ','
           << detail::fmt_g(ens.q50_dist[r]) << ','
           << detail::fmt_g(ens.q95_dist[r]) << ','
           << detail::fmt_g(ens.mean_V[r]) << ',' << alive << '\n';
    }
}

inline void write_path_csv(std::ostream& os, const PathEnsemble& ens,
                           size_t path_index, const Provenance& prov) {
    const PathTrace& p = ens.paths.at(path_index);
    os << prov.header();
    os << "# path=" << path_index;
    if (p.overflow)
        os << " overflow_abort_t=" << detail::fmt_g(p.abort_time);
    os << '\n';
    const int n = static_cast<int>(ens.u_star.size());
    os << 't';
    for (int i = 0; i < n; ++i) os << ",u_" << (i + 1);
    if (!p.V.empty()) os << ",V";
    os << '\n';
    for (size_t r = 0; r < p.u.size(); ++r) {
        os << detail::fmt_g(ens.t[r]);
        for (int i = 0; i < n; ++i) os << ',' << detail::fmt_g(p.u[r](i));
        if (!p.V.empty()) os << ',' << detail::fmt_g(p.V[r]);
        os << '\n';
    }
}

// Self-contained vector plot of the ensemble distance-to-equilibrium: the
// 5-95% quantile band, the median, and the mean; no external renderer needed.
inline void write_ensemble_svg(std::ostream& os, const PathEnsemble& ens,
                               const Provenance& prov) {
    const double W = 900, H = 540;
    const double x0 = 70, x1 = W - 30, y0 = H - 60, y1 = 40;
    double tmax = 1e-12, dmax = 1e-12;
    for (size_t r = 0; r < ens.t.size(); ++r) {
        tmax = std::max(tmax, ens.t[r]);
        if (!std::isnan(ens.q95_dist[r])) dmax = std::max(dmax, ens.q95_dist[r]);
        if (!std::isnan(ens.mean_dist[r])) dmax = std::max(dmax, ens.mean_dist[r]);
    }
    const auto X = [&](double t) { return x0 + (x1 - x0) * (t / tmax); };
    const auto Y = [&](double d) { return y0 - (y0 - y1) * (d / (1.05 * dmax)); };
    const auto pt = [&](double x, double y) {
        char buf[48];
        std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", x, y);
        return std::string(buf);
    };

    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
       << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << " " << H
       << "\">\n";
    os << "<rect width=\"" << W << "\" height=\"" << H
       << "\" fill=\"white\"/>\n";
    os << "<!-- " << prov.header() << " -->\n";
    os << "<text x=\"" << x0 << "\" y=\"24\" font-family=\"monospace\" "
          "font-size=\"14\">distance to equilibrium: mean, median, 5-95% "
          "band (" << ens.paths.size() << " paths)</text>\n";
    // axes
    os << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1
       << "\" y2=\"" << y0 << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0
       << "\" y2=\"" << y1 << "\" stroke=\"black\"/>\n";
    char lab[96];
    std::snprintf(lab, sizeof(lab),
                  "<text x=\"%.1f\" y=\"%.1f\" font-family=\"monospace\" "
                  "font-size=\"12\">t=%s</text>\n",
                  x1 - 60, y0 + 20, detail::fmt_g(tmax).c_str());
    os << lab;
    std::snprintf(lab, sizeof(lab),
                  "<text x=\"%.1f\" y=\"%.1f\" font-family=\"monospace\" "
                  "font-size=\"12\">%s</text>\n",
                  8.0, y1 + 4, detail::fmt_g(1.05 * dmax).c_str());
    os << lab;

    // quantile band
    os << "<polygon fill=\"#b8d4f0\" stroke=\"none\" points=\"";
    for (size_t r = 0; r < ens.t.size(); ++r)
        if (!std::isnan(ens.q95_dist[r]))
            os << pt(X(ens.t[r]), Y(ens.q95_dist[r]));
    for (size_t r = ens.t.size(); r-- > 0;)
        if (!std::isnan(ens.q05_dist[r]))
            os << pt(X(ens.t[r]), Y(ens.q05_dist[r]));
    os << "\"/>\n";
    // median and mean
    os << "<polyline fill=\"none\" stroke=\"#2060a0\" stroke-width=\"1.5\" "
          "points=\"";
    for (size_t r = 0; r < ens.t.size(); ++r)
        if (!std::isnan(ens.q50_dist[r]))
            os << pt(X(ens.t[r]), Y(ens.q50_dist[r]));
    os << "\"/>\n";
    os << "<polyline fill=\"none\" stroke=\"#a03020\" stroke-width=\"1.5\" "
          "points=\"";
    for (size_t r = 0; r < ens.t.size(); ++r)
        if (!std::isnan(ens.mean_dist[r]))
            os << pt(X(ens.t[r]), Y(ens.mean_dist[r]));
    os << "\"/>\n";
    os << "</svg>\n";
}

}  // namespace lvstab
