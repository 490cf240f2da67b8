// Command-line front end: certification, delay-bound sweeps, and Monte-Carlo
// simulation for stochastic Lotka-Volterra models with delays.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "lvstab/config.hpp"
#include "lvstab/report.hpp"

namespace fs = std::filesystem;
using namespace lvstab;

namespace {

struct Flags {
    std::string config_path;
    std::string out_dir;
    std::string reference;
    std::uint64_t seed = 0;
    bool has_seed = false;
    std::string sigma4;
    std::string eqmode;
    int paths = 0;
    double horizon = 0.0;
    double dt = 0.0;
    bool has_paths = false, has_horizon = false, has_dt = false;
};

void add_common_flags(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config_path, "JSON configuration file")
        ->required();
    cmd->add_option("--out", f.out_dir, "output directory for artifacts");
    cmd->add_option("--seed", f.seed, "override every RNG seed")
        ->trigger_on_parse()
        ->each([&f](const std::string&) { f.has_seed = true; });
    cmd->add_option("--sigma4-mode", f.sigma4,
                    "cross-coupling damped-channel convention")
        ->check(CLI::IsMember({"derivation", "paper"}));
    cmd->add_option("--equilibrium-mode", f.eqmode,
                    "how the equilibrium is pinned down")
        ->check(CLI::IsMember({"rho", "ustar"}));
}

void add_sim_flags(CLI::App* cmd, Flags& f) {
    cmd->add_option("--paths", f.paths, "number of Monte-Carlo paths")
        ->each([&f](const std::string&) { f.has_paths = true; });
    cmd->add_option("--horizon", f.horizon, "simulation end time")
        ->each([&f](const std::string&) { f.has_horizon = true; });
    cmd->add_option("--dt", f.dt, "integration step")
        ->each([&f](const std::string&) { f.has_dt = true; });
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Loads the config, applies command-line overrides, and computes the
// provenance stamp from the raw bytes actually read.
RunConfig load_config(const Flags& f, Provenance& prov) {
    const std::string text = read_file(f.config_path);
    RunConfig cfg = parse_config_text(text);
    prov.config_hash = fnv1a64(text);

    if (!f.sigma4.empty()) {
        cfg.sigma4_mode = f.sigma4 == "paper" ? Sigma4Mode::PaperLiteral
                                              : Sigma4Mode::DerivationConsistent;
        cfg.sweep.sigma4_mode = cfg.sigma4_mode;
    }
    if (!f.eqmode.empty()) {
        const EquilibriumMode m = f.eqmode == "ustar"
                                      ? EquilibriumMode::FromUStar
                                      : EquilibriumMode::FromRho;
        cfg.primary.eq_mode = m;
        cfg.sweep.eq_mode = m;
        for (auto& ds : cfg.datasets) ds.eq_mode = m;
    }
    if (f.has_seed) {
        cfg.solver.seed = f.seed;
        cfg.sweep.solver.seed = f.seed;
        cfg.sim.seed = f.seed;
    }
    if (f.has_paths) cfg.sim.paths = f.paths;
    if (f.has_horizon) cfg.sim.horizon = f.horizon;
    if (f.has_dt) cfg.sim.dt = f.dt;
    if (!f.out_dir.empty()) cfg.out_dir = f.out_dir;
    if (cfg.out_dir.empty()) cfg.out_dir = "out";

    prov.seed = cfg.solver.seed;
    prov.sigma4_mode = cfg.sigma4_mode;
    prov.eq_mode = cfg.primary.eq_mode;
    return cfg;
}

void write_artifact(const std::string& dir, const std::string& name,
                    const std::string& bytes) {
    fs::create_directories(dir);
    const std::string path = (fs::path(dir) / name).string();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write artifact: " + path);
    out << bytes;
}

struct Resolved {
    ModelSpec m;     // carries growth rates (given or implied)
    DerivedModel d;  // coefficients plus the resolved equilibrium
};

// Resolves one dataset to a concrete model with a positive equilibrium.
// In ustar mode the growth rates are recomputed from the pinned equilibrium;
// a growth-rate vector also present in the config is checked against the
// implied one and any mismatch is reported through `note`.
Resolved resolve_model(const DatasetConfig& ds, std::string* note) {
    if (ds.eq_mode == EquilibriumMode::FromUStar) {
        if (ds.u_star.size() == 0)
            throw SchemaError("equilibrium mode ustar requires u_star");
        Resolved r{equilibrium_from_target(ds.model, ds.u_star),
                   derive_from_target(ds.model, ds.u_star)};
        if (note && ds.model.rho.size() == r.m.rho.size()) {
            const double scale =
                std::max(1.0, ds.model.rho.cwiseAbs().maxCoeff());
            const double diff =
                (r.m.rho - ds.model.rho).cwiseAbs().maxCoeff();
            if (diff > 1e-9 * scale) {
                std::ostringstream ss;
                ss << "growth rates in the config are inconsistent with the "
                      "pinned equilibrium: given [";
                for (int i = 0; i < ds.model.rho.size(); ++i)
                    ss << (i ? ", " : "") << detail::fmt_g(ds.model.rho(i));
                ss << "], implied [";
                for (int i = 0; i < r.m.rho.size(); ++i)
                    ss << (i ? ", " : "") << detail::fmt_g(r.m.rho(i));
                ss << "]; certifying the pinned equilibrium";
                *note = ss.str();
            }
        }
        return r;
    }
    return {ds.model, derive(ds.model)};
}

std::vector<ReferenceEntry> load_reference_entries(const Flags& f) {
    std::string path = f.reference;
    if (path.empty()) {
        // Default: comparison table sitting next to the config file.
        const fs::path guess =
            fs::path(f.config_path).parent_path() / "table1_reference.csv";
        if (!fs::exists(guess)) return {};
        path = guess.string();
    }
    return load_reference_csv(path);
}

int cmd_certify(const Flags& f) {
    Provenance prov;
    RunConfig cfg = load_config(f, prov);
    if (!cfg.has_model) throw SchemaError("certify requires a model section");

    const Resolved r = resolve_model(cfg.primary, nullptr);
    const LmiProblem prob = build_problem(r.m, r.d, cfg.sigma4_mode);
    const FeasibilityVerdict verdict = solve_feasibility(prob, cfg.solver);

    std::ostringstream ss;
    write_verdict_text(ss, verdict, prob, prov);
    std::cout << ss.str();
    write_artifact(cfg.out_dir, "certify.txt", ss.str());

    switch (verdict.status) {
        case FeasibilityStatus::Feasible: return 0;
        case FeasibilityStatus::Infeasible: return 1;
        default: return 2;
    }
}

int cmd_madb(const Flags& f) {
    Provenance prov;
    RunConfig cfg = load_config(f, prov);
    if (!cfg.has_sweep || !cfg.has_cell)
        throw SchemaError("madb requires sweep and sweep.cell sections");

    const CellResult res = madb_bisect(cfg.sweep, cfg.cell);
    std::ostringstream ss;
    ss << prov.header();
    ss << "cell lambda2=" << detail::fmt_g(res.cell.lambda2)
       << " lambda1=" << detail::fmt_g(res.cell.lambda1)
       << " taud_scale=" << detail::fmt_g(res.cell.taud_scale) << '\n';
    switch (res.status) {
        case CellStatus::Capped:
            ss << "madb: >= " << detail::fmt_g(res.madb)
               << " (still feasible at the search cap)\n";
            break;
        case CellStatus::Bounded:
            ss << "madb: " << detail::fmt_g(res.madb) << " (bracket ["
               << detail::fmt_g(res.madb) << ", "
               << detail::fmt_g(res.madb + cfg.sweep.tol)
               << "], margins " << detail::fmt_g(res.margin_lo) << " / "
               << detail::fmt_g(res.margin_hi) << ")\n";
            break;
        default:
            ss << "madb: none (infeasible at the smallest scale searched, "
               << detail::fmt_g(cfg.sweep.tau_lo) << ")\n";
    }
    const auto refs = load_reference_entries(f);
    if (const ReferenceEntry* e = find_reference(refs, res.cell)) {
        ss << "reference value: "
           << (e->infeasible ? "infeasible" : detail::fmt_g(e->madb)) << '\n';
    }
    if (!res.note.empty()) ss << "note: " << res.note << '\n';

    std::cout << ss.str();
    write_artifact(cfg.out_dir, "madb.txt", ss.str());
    return 0;
}

int cmd_table1(const Flags& f) {
    Provenance prov;
    RunConfig cfg = load_config(f, prov);
    if (!cfg.has_sweep) throw SchemaError("table1 requires a sweep section");

    const SweepResult res = run_table(cfg.sweep);
    const auto refs = load_reference_entries(f);
    const TauIndependenceReport indep =
        a_d_zero_tau_independence_check(cfg.sweep);

    std::ostringstream csv;
    write_sweep_csv(csv, res, prov);
    std::ostringstream txt;
    write_sweep_text(txt, res, prov, refs);
    write_tau_independence_text(txt, indep);

    std::cout << txt.str();
    write_artifact(cfg.out_dir, "table1.csv", csv.str());
    write_artifact(cfg.out_dir, "table1.txt", txt.str());
    return 0;
}

int cmd_simulate(const Flags& f) {
    Provenance prov;
    RunConfig cfg = load_config(f, prov);
    if (!cfg.has_model) throw SchemaError("simulate requires a model section");
    prov.seed = cfg.sim.seed;

    DatasetConfig ds = cfg.primary;
    ds.model = scaled_model(ds.model, cfg.sim_lambda1, cfg.sim_lambda2,
                            cfg.sim_tau, cfg.sim_taud);
    std::string note;
    const Resolved res = resolve_model(ds, &note);
    const ModelSpec& m = res.m;
    const DerivedModel& d = res.d;

    SimOptions opt = cfg.sim;
    if (opt.u0.size() == 0 && cfg.sim_u0_scale > 0.0)
        opt.u0 = cfg.sim_u0_scale * d.u_star;

    DecisionVars vars;
    bool have_vars = false;
    std::string lkf_note;
    if (opt.record_lkf) {
        const LmiProblem prob = build_problem(m, d, cfg.sigma4_mode);
        const FeasibilityVerdict v = solve_feasibility(prob, cfg.solver);
        if (v.status == FeasibilityStatus::Feasible) {
            vars = DecisionVars::unpack(v.witness, m.n);
            have_vars = true;
        } else {
            opt.record_lkf = false;
            lkf_note = std::string("no feasible certificate (") +
                       to_string(v.status) +
                       "); energy-functional trace disabled";
        }
    }

    const PathEnsemble ens =
        run_ensemble(m, d, have_vars ? &vars : nullptr, opt);

    std::ostringstream summary, path0, svg;
    write_ensemble_summary_csv(summary, ens, prov);
    write_path_csv(path0, ens, 0, prov);
    write_ensemble_svg(svg, ens, prov);
    write_artifact(cfg.out_dir, "sim_summary.csv", summary.str());
    write_artifact(cfg.out_dir, "sim_path0.csv", path0.str());
    write_artifact(cfg.out_dir, "sim_ensemble.svg", svg.str());

    std::ostringstream ss;
    ss << prov.header();
    if (!note.empty()) ss << "note: " << note << '\n';
    if (!lkf_note.empty()) ss << "note: " << lkf_note << '\n';
    const size_t last = ens.t.size() - 1;
    ss << "paths: " << ens.paths.size() << ", steps: " << ens.steps
       << ", dt: " << detail::fmt_g(ens.dt)
       << ", overflow aborts: " << ens.overflow_count << '\n';
    ss << "mean distance to equilibrium: start "
       << detail::fmt_g(ens.mean_dist.front()) << ", end "
       << detail::fmt_g(ens.mean_dist[last]) << '\n';
    if (have_vars)
        ss << "mean energy functional: start "
           << detail::fmt_g(ens.mean_V.front()) << ", end "
           << detail::fmt_g(ens.mean_V[last]) << '\n';
    std::cout << ss.str();
    write_artifact(cfg.out_dir, "simulate.txt", ss.str());
    return 0;
}

int cmd_example2(const Flags& f) {
    Provenance prov;
    RunConfig cfg = load_config(f, prov);
    std::vector<DatasetConfig> sets = cfg.datasets;
    if (sets.empty() && cfg.has_model) sets.push_back(cfg.primary);
    if (sets.empty())
        throw SchemaError("example2 requires a datasets section");

    std::ostringstream ss;
    ss << prov.header();
    for (size_t k = 0; k < sets.size(); ++k) {
        const DatasetConfig& ds = sets[k];
        const std::string label =
            ds.name.empty() ? "dataset " + std::to_string(k + 1) : ds.name;
        std::string note;
        const Resolved r = resolve_model(ds, &note);
        const LmiProblem prob = build_problem(r.m, r.d, cfg.sigma4_mode);
        const FeasibilityVerdict v = solve_feasibility(prob, cfg.solver);
        ss << label << ": " << to_string(v.status)
           << " (margin " << detail::fmt_g(v.margin) << ", threshold "
           << detail::fmt_g(v.eps_neg) << ", equilibrium [";
        for (int i = 0; i < r.d.u_star.size(); ++i)
            ss << (i ? ", " : "") << detail::fmt_g(r.d.u_star(i));
        ss << "])\n";
        if (!note.empty()) ss << "  note: " << note << '\n';
    }
    std::cout << ss.str();
    write_artifact(cfg.out_dir, "example2.txt", ss.str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "Stability certification for stochastic Lotka-Volterra systems "
        "with discrete and distributed delays"};
    app.require_subcommand(1);

    Flags f;
    CLI::App* certify =
        app.add_subcommand("certify", "decide one model's certificate");
    CLI::App* madb = app.add_subcommand(
        "madb", "largest feasible delay scale for one grid cell");
    madb->add_option("--reference", f.reference,
                     "CSV of published comparison values");
    CLI::App* table1 = app.add_subcommand(
        "table1", "delay-bound sweep over the full scale grid");
    table1->add_option("--reference", f.reference,
                       "CSV of published comparison values");
    CLI::App* simulate = app.add_subcommand(
        "simulate", "Monte-Carlo ensemble of the stochastic system");
    CLI::App* example2 = app.add_subcommand(
        "example2", "certify each bundled dataset and report verdicts");
    for (CLI::App* c : {certify, madb, table1, simulate, example2})
        add_common_flags(c, f);
    add_sim_flags(simulate, f);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (certify->parsed()) return cmd_certify(f);
        if (madb->parsed()) return cmd_madb(f);
        if (table1->parsed()) return cmd_table1(f);
        if (simulate->parsed()) return cmd_simulate(f);
        if (example2->parsed()) return cmd_example2(f);
        return 3;
    } catch (const ParseError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 3;
    } catch (const SchemaError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    }
}
