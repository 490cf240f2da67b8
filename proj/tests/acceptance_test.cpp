// End-to-end acceptance gate.  Each numbered check prints exactly one
// PASS/FAIL line; the process exit code is the number of failed checks.
// Checks are self-contained and use independent reference implementations
// (tests/oracles.hpp) wherever a library result needs outside confirmation.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "lvstab/config.hpp"
#include "lvstab/feasibility.hpp"
#include "lvstab/simulate.hpp"
#include "lvstab/sweep.hpp"
#include "oracles.hpp"

using namespace lvstab;

namespace {

int g_failures = 0;

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         t0)
        .count();
}

void report(int idx, bool ok, const std::string& what, double elapsed,
            double budget, const std::string& detail = "") {
    const bool in_budget = budget <= 0.0 || elapsed <= budget;
    const bool pass = ok && in_budget;
    if (!pass) ++g_failures;
    std::printf("%s criterion %d: %s (%.2f s%s)\n", pass ? "PASS" : "FAIL",
                idx, what.c_str(), elapsed,
                in_budget ? "" : ", over budget");
    if (!detail.empty()) std::printf("%s", detail.c_str());
    std::fflush(stdout);
}

struct CmdResult {
    int exit_code = -1;
    std::string output;
};

CmdResult run_cli(const std::string& args) {
    const std::string cmd = std::string(LVSTAB_CLI_PATH) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    CmdResult res;
    if (!pipe) return res;
    char buf[512];
    while (fgets(buf, sizeof(buf), pipe)) res.output += buf;
    const int status = pclose(pipe);
    res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return res;
}

std::string scratch_dir() {
    static std::string dir = [] {
        char tmpl[] = "/tmp/lvstab_accept_XXXXXX";
        char* d = mkdtemp(tmpl);
        return std::string(d ? d : "/tmp");
    }();
    return dir;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Extracts the verdict token from a line of the form "<label>: <verdict> ...".
std::string verdict_of(const std::string& output, const std::string& label) {
    const size_t at = output.find(label + ": ");
    if (at == std::string::npos) return "<missing>";
    const size_t start = at + label.size() + 2;
    const size_t end = output.find_first_of(" \n(", start);
    return output.substr(start, end - start);
}

ModelSpec scalar_model(double a) {
    ModelSpec m;
    m.n = 1;
    m.A = Matrix::Constant(1, 1, a);
    m.A_d = Matrix::Zero(1, 1);
    m.A_D = Matrix::Zero(1, 1);
    m.alpha = Matrix::Zero(1, 1);
    m.tau_bar = Matrix::Constant(1, 1, 0.5);
    m.tau_bar_d = Matrix::Zero(1, 1);
    m.sigma = Matrix::Zero(1, 1);
    return m;
}

// ---------------------------------------------------------------------------

void criterion1_assembly_oracle() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(20260815);
    std::uniform_real_distribution<double> U(0.05, 1.0), X(-1.0, 1.0);
    int checked = 0;
    double worst = 0.0;
    for (int it = 0; it < 200; ++it) {
        const int n = 1 + static_cast<int>(rng() % 3);
        const oracle::RandomInstance inst = oracle::random_model(rng, n);
        const DerivedModel d = derive_from_target(inst.model, inst.u_star);
        const Sigma4Mode mode = it % 2 == 0 ? Sigma4Mode::DerivationConsistent
                                            : Sigma4Mode::PaperLiteral;
        const LmiProblem prob = build_problem(inst.model, d, mode);
        Vector v(prob.m);
        for (int k = 0; k < prob.m; ++k) v(k) = U(rng);
        Vector xi(prob.basis.N);
        for (int k = 0; k < prob.basis.N; ++k) xi(k) = X(rng);

        const Matrix S = prob.evaluate(v);
        const double got = xi.dot(S * xi);
        const double ref = oracle::quad_form_ref(
            inst.model, d, DecisionVars::unpack(v, n), xi, mode);
        const double scale =
            std::max(1.0, S.cwiseAbs().maxCoeff() * xi.squaredNorm());
        worst = std::max(worst, std::abs(got - ref) / scale);
        ++checked;
    }
    char detail[160];
    std::snprintf(detail, sizeof(detail),
                  "  %d instances, worst relative deviation %.3g\n", checked,
                  worst);
    report(1, checked == 200 && worst <= 1e-11,
           "matrix assembly matches the channel-summation reference",
           seconds_since(t0), 10.0, detail);
}

void criterion2_scalar_signs() {
    const auto t0 = std::chrono::steady_clock::now();
    const Vector one = Vector::Constant(1, 1.0);

    const ModelSpec stable = scalar_model(1.0);
    const LmiProblem ps = build_problem(
        stable, derive_from_target(stable, one),
        Sigma4Mode::DerivationConsistent);
    const FeasibilityVerdict vs = solve_feasibility(ps);

    const ModelSpec unstable = scalar_model(-1.0);
    const LmiProblem pu = build_problem(
        unstable, derive_from_target(unstable, one),
        Sigma4Mode::DerivationConsistent);
    const FeasibilityVerdict vu = solve_feasibility(pu);

    char detail[160];
    std::snprintf(detail, sizeof(detail),
                  "  a=+1 -> %s (margin %.3g); a=-1 -> %s (bound %.3g)\n",
                  to_string(vs.status), vs.margin, to_string(vu.status),
                  vu.lower_bound);
    report(2,
           vs.status == FeasibilityStatus::Feasible &&
               vu.status == FeasibilityStatus::Infeasible,
           "scalar sign case splits as forced analytically",
           seconds_since(t0), 1.0, detail);
}

void criterion3_two_species_benchmark() {
    const auto t0 = std::chrono::steady_clock::now();
    const CmdResult res =
        run_cli(std::string("example2 --config ") + LVSTAB_CONFIG_DIR +
                "/example2.json --out " + scratch_dir() + "/ex2");
    const std::string v1 = verdict_of(res.output, "dataset-1");
    const std::string v2 = verdict_of(res.output, "dataset-2");
    const bool flagged = res.output.find("inconsistent") != std::string::npos;

    const bool ok1 = v1 == "feasible";
    const bool ok2 = v2 == "feasible";  // expected by the check
    std::string detail = "  dataset-1: " + v1 + "; dataset-2: " + v2 +
                         "; growth-rate inconsistency " +
                         (flagged ? "flagged" : "NOT flagged") + "\n";
    if (!ok2) {
        detail +=
            "  expected feasible for dataset-2, observed " + v2 +
            ".  With the equilibrium pinned at (1, 1) and noise\n"
            "  intensities (sqrt2, sqrt2), the instantaneous block of the "
            "certificate has determinant -(4 p1 - 3 p2)^2 / 4 <= 0\n"
            "  with negative trace for every multiplier choice, so its top "
            "eigenvalue cannot be strictly negative; the delay\n"
            "  channels only add non-negative terms on the diagonal.  The "
            "refutation is dual-certified (positive lower bound).\n"
            "  The observed verdict is reported as-is rather than relaxing "
            "the check.\n";
    }
    report(3, ok1 && ok2 && flagged,
           "two-species benchmark datasets both certified feasible with the "
           "inconsistency flagged",
           seconds_since(t0), 5.0, detail);
}

void criterion4_grid_structure() {
    const auto t0 = std::chrono::steady_clock::now();
    const RunConfig cfg =
        parse_config(std::string(LVSTAB_CONFIG_DIR) + "/example1.json");
    const SweepResult table = run_table(cfg.sweep);
    const TauIndependenceReport indep =
        a_d_zero_tau_independence_check(cfg.sweep);

    const auto& L2 = cfg.sweep.lambda2_grid;  // {1, 2}
    const auto& L1 = cfg.sweep.lambda1_grid;  // {0, 0.5, 1}
    const auto& TD = cfg.sweep.taud_grid;     // {0, .2, .4, .6, .6515}
    const auto cell_at = [&](size_t i2, size_t i1, size_t id)
        -> const CellResult& {
        return table.cells[(i2 * L1.size() + i1) * TD.size() + id];
    };
    const auto value_of = [&](const CellResult& c) {
        switch (c.status) {
            case CellStatus::Capped: return cfg.sweep.tau_cap;
            case CellStatus::Bounded: return c.madb;
            default: return 0.0;
        }
    };

    // (a) every cell without distributed interaction runs to the cap.
    bool a_ok = true;
    for (size_t i2 = 0; i2 < L2.size(); ++i2)
        for (size_t id = 0; id < TD.size(); ++id)
            a_ok = a_ok && cell_at(i2, 0, id).status == CellStatus::Capped;

    // (b) with no distributed interaction, verdicts are delay-scale
    //     independent across three decades.
    const bool b_ok = indep.all_consistent;

    // (c) the hardest grid corner is infeasible.
    const CellResult& corner = cell_at(1, 2, TD.size() - 1);
    const bool c_ok = corner.status == CellStatus::Infeasible;

    // (d) the bound is monotone non-increasing along every axis.
    bool d_ok = true;
    const double slack = 2.0 * cfg.sweep.tol;
    for (size_t i2 = 0; i2 < L2.size(); ++i2)
        for (size_t i1 = 0; i1 < L1.size(); ++i1)
            for (size_t id = 0; id < TD.size(); ++id) {
                const double v = value_of(cell_at(i2, i1, id));
                if (id + 1 < TD.size())
                    d_ok = d_ok &&
                           value_of(cell_at(i2, i1, id + 1)) <= v + slack;
                if (i1 + 1 < L1.size())
                    d_ok = d_ok &&
                           value_of(cell_at(i2, i1 + 1, id)) <= v + slack;
                if (i2 + 1 < L2.size())
                    d_ok = d_ok &&
                           value_of(cell_at(i2 + 1, i1, id)) <= v + slack;
            }

    // (e) the no-distributed-interaction feasibility edge sits just above
    //     the last grid column.
    bool e_ok = !indep.edges.empty();
    for (const TauIndependenceEdge& e : indep.edges)
        e_ok = e_ok && !std::isnan(e.flip_at) && e.flip_at > 0.6515 &&
               e.flip_at <= 0.70;

    std::ostringstream detail;
    detail << "  (a) zero-distributed rows capped: " << (a_ok ? "yes" : "NO")
           << "; (b) delay-scale independent: " << (b_ok ? "yes" : "NO")
           << "; (c) corner cell: " << to_string(corner.status)
           << "; (d) monotone: " << (d_ok ? "yes" : "NO") << "; (e) flips:";
    for (const TauIndependenceEdge& e : indep.edges)
        detail << ' ' << e.flip_at;
    detail << "\n  computed bounds are logged beside the published ones by "
              "the table command; numeric equality is not asserted\n";
    report(4, a_ok && b_ok && c_ok && d_ok && e_ok,
           "delay-bound grid reproduces the published structure",
           seconds_since(t0), 300.0, detail.str());
}

void criterion5_planted_instances() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(424242);
    int found = 0, recertified = 0;
    for (int it = 0; it < 100; ++it) {
        const oracle::PlantedInstance inst = oracle::plant_feasible(rng);
        const DerivedModel d = derive_from_target(inst.model, inst.u_star);
        const LmiProblem prob = build_problem(
            inst.model, d, Sigma4Mode::DerivationConsistent);
        const FeasibilityVerdict v = solve_feasibility(prob);
        if (v.status != FeasibilityStatus::Feasible) continue;
        ++found;
        if (oracle::eigen_lambda_max(prob.assemble(v.witness)) < 0.0)
            ++recertified;
    }
    char detail[160];
    std::snprintf(detail, sizeof(detail),
                  "  %d/100 found feasible, %d/%d re-certified "
                  "independently\n",
                  found, recertified, found);
    report(5, found >= 98 && recertified == found,
           "planted-feasible instances are found and verdicts re-certify",
           seconds_since(t0), 120.0, detail);
}

void criterion6_eigensolver() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(606060);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    bool ok = true;
    double worst_rec = 0.0, worst_orth = 0.0;
    for (int it = 0; it < 8; ++it) {
        const int N = 30;
        Matrix M(N, N);
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < N; ++j) M(i, j) = U(rng);
        M = 0.5 * (M + M.transpose()).eval();
        const SymEigResult r = sym_eig(M);
        const double rec = (r.eigenvectors * r.eigenvalues.asDiagonal() *
                                r.eigenvectors.transpose() -
                            M)
                               .norm() /
                           M.norm();
        const double orth = (r.eigenvectors.transpose() * r.eigenvectors -
                             Matrix::Identity(N, N))
                                .cwiseAbs()
                                .maxCoeff();
        worst_rec = std::max(worst_rec, rec);
        worst_orth = std::max(worst_orth, orth);
        ok = ok && rec < 1e-10 && orth < 1e-12;
    }
    char detail[160];
    std::snprintf(detail, sizeof(detail),
                  "  worst reconstruction %.3g (limit 1e-10), worst "
                  "orthonormality %.3g (limit 1e-12)\n",
                  worst_rec, worst_orth);
    report(6, ok, "eigensolver reconstruction and orthonormality contracts",
           seconds_since(t0), 5.0, detail);
}

void criterion7_simulator() {
    const auto t0 = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = true;

    // (a) + (d): certified-feasible three-species configuration, 100 paths
    // of 10^4 steps; positivity is structural and the ensemble must both
    // contract toward the equilibrium and not grow its energy functional.
    const RunConfig cfg =
        parse_config(std::string(LVSTAB_CONFIG_DIR) + "/example1.json");
    const ModelSpec scaled =
        scaled_model(cfg.primary.model, 0.5, 1.0, 1.0, 0.0);
    const ModelSpec with_rho =
        equilibrium_from_target(scaled, cfg.primary.u_star);
    const DerivedModel d = derive_from_target(with_rho, cfg.primary.u_star);
    const LmiProblem prob =
        build_problem(with_rho, d, Sigma4Mode::DerivationConsistent);
    const FeasibilityVerdict cert = solve_feasibility(prob, cfg.solver);
    const bool certified = cert.status == FeasibilityStatus::Feasible;
    ok = ok && certified;
    detail += std::string("  (a,d) simulated configuration certificate: ") +
              to_string(cert.status) + "\n";

    if (certified) {
        DecisionVars vars = DecisionVars::unpack(cert.witness, 3);
        SimOptions opt = cfg.sim;
        opt.horizon = 50.0;
        opt.dt = 0.005;  // 10^4 steps
        opt.paths = 100;
        opt.seed = 42;
        opt.u0 = 1.3 * d.u_star;
        opt.trace_samples = 101;
        opt.record_lkf = true;
        const PathEnsemble ens = run_ensemble(with_rho, d, &vars, opt);

        bool positive = ens.overflow_count == 0;
        long states = 0;
        for (const PathTrace& tr : ens.paths)
            for (const Vector& u : tr.u) {
                positive = positive && u.minCoeff() > 0.0;
                ++states;
            }
        const double d0 = ens.mean_dist.front();
        const double dT = ens.mean_dist.back();
        const double V0 = ens.mean_V.front();
        const double VT = ens.mean_V.back();
        const bool contracted = dT < 0.1 * d0;
        const bool energy_ok = VT <= 1.05 * V0;
        ok = ok && positive && contracted && energy_ok;

        char buf[240];
        std::snprintf(buf, sizeof(buf),
                      "  (a) %d paths x %d steps, %ld stored states, all "
                      "positive: %s, overflows: %d\n"
                      "  (d) mean distance %.4g -> %.4g (need < %.4g); mean "
                      "energy %.4g -> %.4g (need <= %.4g)\n",
                      opt.paths, ens.steps, states, positive ? "yes" : "NO",
                      ens.overflow_count, d0, dT, 0.1 * d0, V0, VT,
                      1.05 * V0);
        detail += buf;
    }

    // (b) deterministic logistic sub-case converges at first order.
    {
        ModelSpec m = scalar_model(1.0);
        m.rho = Vector::Constant(1, 1.0);
        const DerivedModel dl = derive(m);
        const double exact = oracle::logistic_exact(0.2, 1.0, 1.0, 2.0);
        const auto err = [&](double dt) {
            SimOptions o;
            o.horizon = 2.0;
            o.dt = dt;
            o.paths = 1;
            o.u0 = Vector::Constant(1, 0.2);
            o.trace_samples = 2;
            o.record_lkf = false;
            return std::abs(
                run_ensemble(m, dl, nullptr, o).paths[0].u.back()(0) - exact);
        };
        const double ratio = err(0.01) / err(0.005);
        const bool b_ok = ratio > 1.5 && ratio < 2.5;
        ok = ok && b_ok;
        char buf[120];
        std::snprintf(buf, sizeof(buf),
                      "  (b) logistic halving ratio %.3f (need within [1.5, "
                      "2.5])\n",
                      ratio);
        detail += buf;
    }

    // (c) constant-history kernel: exact without decay, second order with.
    {
        HistoryBuffer h0 = HistoryBuffer::with_capacity(-2.0, 0.01, 1, 220);
        for (int k = 0; k < 220; ++k) h0.push(Vector::Constant(1, 3.0));
        const double flat = distributed_kernel(h0, 0, 0.0, 0.5, 0.0);
        const bool exact_ok = std::abs(flat - 1.5) < 1e-12;

        const double target = 3.0 * oracle::beta_ref(2.0, 0.5);
        const auto kerr = [&](double dt) {
            const int nodes = static_cast<int>(std::ceil(2.0 / dt)) + 2;
            HistoryBuffer h = HistoryBuffer::with_capacity(-2.0, dt, 1, nodes);
            for (int k = 0; k < nodes; ++k) h.push(Vector::Constant(1, 3.0));
            return std::abs(distributed_kernel(h, 0, 2.0, 0.5, 0.0) - target);
        };
        const double kratio = kerr(0.01) / kerr(0.005);
        const bool c_ok = exact_ok && kratio > 3.0 && kratio < 5.0;
        ok = ok && c_ok;
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "  (c) no-decay kernel exact: %s; decaying-kernel "
                      "halving ratio %.3f (need ~4)\n",
                      exact_ok ? "yes" : "NO", kratio);
        detail += buf;
    }

    report(7, ok,
           "simulator positivity, convergence orders, and certified-case "
           "contraction",
           seconds_since(t0), 180.0, detail);
}

void criterion8_determinism() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::string dir = scratch_dir();
    bool ok = true;
    std::string detail;

    const auto compare = [&](const std::string& what,
                             const std::string& invocation,
                             const std::vector<std::string>& artifacts) {
        const std::string o1 = dir + "/" + what + "_1";
        const std::string o2 = dir + "/" + what + "_2";
        const CmdResult r1 = run_cli(invocation + " --out " + o1);
        const CmdResult r2 = run_cli(invocation + " --out " + o2);
        bool same = r1.exit_code == r2.exit_code && r1.output == r2.output;
        for (const std::string& a : artifacts) {
            const std::string b1 = slurp(o1 + "/" + a);
            const std::string b2 = slurp(o2 + "/" + a);
            same = same && !b1.empty() && b1 == b2;
        }
        ok = ok && same;
        detail += "  " + what + ": " +
                  (same ? "byte-identical" : "DIFFERS") + "\n";
    };

    compare("certify",
            std::string("certify --config ") + LVSTAB_CONFIG_DIR +
                "/scalar_stable.json",
            {"certify.txt"});

    // Reduced grid keeps the repeated sweep affordable.
    {
        std::ofstream out(dir + "/reduced_grid.json");
        out << R"({
  "schema": "lv-stab/1",
  "model": )";
        // Reuse the benchmark pattern verbatim.
        const RunConfig cfg =
            parse_config(std::string(LVSTAB_CONFIG_DIR) + "/example1.json");
        json model = json::parse(render_config(cfg)).at("model");
        out << model.dump(2) << R"(,
  "sweep": {"lambda2_grid": [1], "lambda1_grid": [0, 1],
            "taud_grid": [0, 0.6515], "tau_lo": 0.001, "tau_cap": 2,
            "tolerance": 0.001, "monotonicity_samples": 4}
})";
    }
    compare("table1",
            "table1 --config " + dir + "/reduced_grid.json",
            {"table1.csv", "table1.txt"});

    compare("simulate",
            std::string("simulate --config ") + LVSTAB_CONFIG_DIR +
                "/example1.json --paths 20 --horizon 10",
            {"simulate.txt", "sim_summary.csv", "sim_path0.csv",
             "sim_ensemble.svg"});

    report(8, ok,
           "repeated runs with fixed seeds produce byte-identical artifacts",
           seconds_since(t0), 0.0, detail);
}

}  // namespace

int main() {
    std::printf("acceptance checks (library + %s)\n", LVSTAB_CLI_PATH);
    criterion1_assembly_oracle();
    criterion2_scalar_signs();
    criterion3_two_species_benchmark();
    criterion4_grid_structure();
    criterion5_planted_instances();
    criterion6_eigensolver();
    criterion7_simulator();
    criterion8_determinism();
    std::printf("%d of 8 criteria failed\n", g_failures);
    return g_failures;
}
