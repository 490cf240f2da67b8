#pragma once

#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lvstab/feasibility.hpp"
#include "lvstab/lmi.hpp"
#include "lvstab/model.hpp"
#include "lvstab/simulate.hpp"
#include "lvstab/sweep.hpp"
#include "lvstab/types.hpp"

namespace lvstab {

using nlohmann::json;

// One model together with how its equilibrium is pinned down.
struct DatasetConfig {
    std::string name;
    ModelSpec model;
    EquilibriumMode eq_mode = EquilibriumMode::FromRho;
    Vector u_star;  // target equilibrium in FromUStar mode
};

// Fully parsed configuration file.  Defaults are filled at parse time so a
// canonical render records exactly what a run used.
struct RunConfig {
    std::string schema = "lv-stab/1";
    DatasetConfig primary;
    bool has_model = false;
    std::vector<DatasetConfig> datasets;  // for multi-dataset commands

    Sigma4Mode sigma4_mode = Sigma4Mode::DerivationConsistent;
    SolverOptions solver;
    std::string out_dir;  // optional default output directory

    bool has_sweep = false;
    SweepConfig sweep;  // base/eq/sigma4/solver propagated after parse
    bool has_cell = false;
    SweepCell cell;

    bool has_sim = false;
    SimOptions sim;
    double sim_lambda1 = 1.0, sim_lambda2 = 1.0;
    double sim_tau = 1.0, sim_taud = 1.0;
    double sim_u0_scale = 0.0;  // 0 = unset (run_ensemble defaults to 1.3 u*)
};

namespace detail {

[[noreturn]] inline void schema_fail(const std::string& msg) {
    throw SchemaError(msg);
}

inline void check_keys(const json& obj, const std::set<std::string>& allowed,
                       const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            schema_fail("unknown key \"" + it.key() + "\" in " + where);
}

inline double get_number(const json& obj, const std::string& key,
                         const std::string& where) {
    if (!obj.contains(key))
        schema_fail("missing key \"" + key + "\" in " + where);
    const json& v = obj.at(key);
    if (!v.is_number()) schema_fail(where + "." + key + " must be a number");
    return v.get<double>();
}

inline Vector parse_vector(const json& v, int n, const std::string& name) {
    if (!v.is_array() || static_cast<int>(v.size()) != n)
        schema_fail(name + " must be an array of length " +
                    std::to_string(n));
    Vector out(n);
    for (int i = 0; i < n; ++i) {
        if (!v[i].is_number())
            schema_fail(name + " entries must be numbers");
        out(i) = v[i].get<double>();
    }
    return out;
}

inline Matrix parse_matrix(const json& v, int n, const std::string& name) {
    if (!v.is_array() || static_cast<int>(v.size()) != n)
        schema_fail(name + " must be an array of " + std::to_string(n) +
                    " rows");
    Matrix out(n, n);
    for (int i = 0; i < n; ++i) {
        const json& row = v[i];
        if (!row.is_array() || static_cast<int>(row.size()) != n)
            schema_fail(name + " row " + std::to_string(i) + " must have " +
                        std::to_string(n) + " entries");
        for (int j = 0; j < n; ++j) {
            if (!row[j].is_number())
                schema_fail(name + " entries must be numbers");
            out(i, j) = row[j].get<double>();
        }
    }
    return out;
}

inline void check_matrix_signs(const ModelSpec& m, bool strict_taud,
                               const std::string& where) {
    for (int i = 0; i < m.n; ++i) {
        for (int j = 0; j < m.n; ++j) {
            if (!(m.tau_bar(i, j) > 0.0))
                schema_fail(where + ".tau_bar entries must be positive");
            if (!(m.alpha(i, j) >= 0.0))
                schema_fail(where + ".alpha entries must be non-negative");
            if (!(m.sigma(i, j) >= 0.0))
                schema_fail(where + ".sigma entries must be non-negative");
            if (!(m.tau_bar_d(i, j) >= 0.0))
                schema_fail(where +
                            ".tau_bar_d entries must be non-negative");
            if (strict_taud && !(m.tau_bar_d(i, j) < 1.0))
                schema_fail(where + ".tau_bar_d entry (" +
                            std::to_string(i) + "," + std::to_string(j) +
                            ") must stay below 1");
        }
    }
}

// strict_taud: enforce tau_bar_d < 1 now.  Sweep-pattern models defer that
// bound to per-cell scaling, where it is enforced by scaled_model.
inline DatasetConfig parse_dataset(const json& obj, const std::string& where,
                                   bool strict_taud) {
    check_keys(obj,
               {"name", "n", "A", "A_d", "A_D", "alpha", "tau_bar",
                "tau_bar_d", "sigma", "rho", "u_star", "equilibrium_mode"},
               where);
    DatasetConfig ds;
    ds.name = where;
    if (obj.contains("name")) {
        if (!obj.at("name").is_string())
            schema_fail(where + ".name must be a string");
        ds.name = obj.at("name").get<std::string>();
    }
    if (!obj.contains("n") || !obj.at("n").is_number_integer())
        schema_fail(where + ".n must be an integer");
    const int n = obj.at("n").get<int>();
    if (n < 1) schema_fail(where + ".n must be at least 1");
    ds.model.n = n;
    ds.model.A = parse_matrix(obj.at("A"), n, where + ".A");
    ds.model.A_d = obj.contains("A_d")
                       ? parse_matrix(obj.at("A_d"), n, where + ".A_d")
                       : Matrix(Matrix::Zero(n, n));
    ds.model.A_D = obj.contains("A_D")
                       ? parse_matrix(obj.at("A_D"), n, where + ".A_D")
                       : Matrix(Matrix::Zero(n, n));
    ds.model.alpha = obj.contains("alpha")
                         ? parse_matrix(obj.at("alpha"), n, where + ".alpha")
                         : Matrix(Matrix::Zero(n, n));
    if (!obj.contains("tau_bar"))
        schema_fail(where + ".tau_bar is required");
    ds.model.tau_bar = parse_matrix(obj.at("tau_bar"), n, where + ".tau_bar");
    ds.model.tau_bar_d =
        obj.contains("tau_bar_d")
            ? parse_matrix(obj.at("tau_bar_d"), n, where + ".tau_bar_d")
            : Matrix(Matrix::Zero(n, n));
    ds.model.sigma = obj.contains("sigma")
                         ? parse_matrix(obj.at("sigma"), n, where + ".sigma")
                         : Matrix(Matrix::Zero(n, n));
    check_matrix_signs(ds.model, strict_taud, where);

    const bool has_rho = obj.contains("rho");
    const bool has_ustar = obj.contains("u_star");
    if (has_rho) {
        ds.model.rho = parse_vector(obj.at("rho"), n, where + ".rho");
        for (int i = 0; i < n; ++i)
            if (!(ds.model.rho(i) > 0.0))
                schema_fail(where + ".rho entries must be positive");
    }
    if (has_ustar) {
        ds.u_star = parse_vector(obj.at("u_star"), n, where + ".u_star");
        for (int i = 0; i < n; ++i)
            if (!(ds.u_star(i) > 0.0))
                schema_fail(where + ".u_star entries must be positive");
    }
    if (obj.contains("equilibrium_mode")) {
        const std::string m = obj.at("equilibrium_mode").get<std::string>();
        if (m == "rho") ds.eq_mode = EquilibriumMode::FromRho;
        else if (m == "ustar") ds.eq_mode = EquilibriumMode::FromUStar;
        else schema_fail(where + ".equilibrium_mode must be rho or ustar");
        if (ds.eq_mode == EquilibriumMode::FromRho && !has_rho)
            schema_fail(where + ": equilibrium_mode rho requires rho");
        if (ds.eq_mode == EquilibriumMode::FromUStar && !has_ustar)
            schema_fail(where + ": equilibrium_mode ustar requires u_star");
    } else if (has_rho && !has_ustar) {
        ds.eq_mode = EquilibriumMode::FromRho;
    } else if (has_ustar && !has_rho) {
        ds.eq_mode = EquilibriumMode::FromUStar;
    } else if (has_rho && has_ustar) {
        schema_fail(where + ": both rho and u_star given; set "
                            "equilibrium_mode explicitly");
    } else {
        schema_fail(where + ": equilibrium underdetermined (provide rho or "
                            "u_star)");
    }
    return ds;
}

inline std::vector<double> parse_grid(const json& v,
                                      const std::string& name) {
    if (!v.is_array() || v.empty())
        schema_fail(name + " must be a non-empty array");
    std::vector<double> out;
    for (const auto& e : v) {
        if (!e.is_number()) schema_fail(name + " entries must be numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

}  // namespace detail

inline RunConfig parse_config_json(const json& root) {
    using detail::check_keys;
    using detail::schema_fail;
    if (!root.is_object()) schema_fail("top level must be an object");
    check_keys(root,
               {"schema", "model", "datasets", "sigma4_mode", "solver",
                "sweep", "simulation", "out"},
               "top level");
    RunConfig cfg;
    if (!root.contains("schema") || !root.at("schema").is_string())
        schema_fail("missing schema tag");
    cfg.schema = root.at("schema").get<std::string>();
    if (cfg.schema != "lv-stab/1")
        schema_fail("unsupported schema \"" + cfg.schema + "\"");

    if (root.contains("sigma4_mode")) {
        const std::string m = root.at("sigma4_mode").get<std::string>();
        if (m == "derivation")
            cfg.sigma4_mode = Sigma4Mode::DerivationConsistent;
        else if (m == "paper")
            cfg.sigma4_mode = Sigma4Mode::PaperLiteral;
        else
            schema_fail("sigma4_mode must be derivation or paper");
    }
    if (root.contains("out")) {
        if (!root.at("out").is_string())
            schema_fail("out must be a string path");
        cfg.out_dir = root.at("out").get<std::string>();
    }
    if (root.contains("solver")) {
        const json& s = root.at("solver");
        check_keys(s,
                   {"eps_pos", "eps_neg_scale", "max_stages",
                    "max_newton_per_stage", "restarts", "seed"},
                   "solver");
        if (s.contains("eps_pos"))
            cfg.solver.eps_pos = detail::get_number(s, "eps_pos", "solver");
        if (s.contains("eps_neg_scale"))
            cfg.solver.eps_neg_scale =
                detail::get_number(s, "eps_neg_scale", "solver");
        if (s.contains("max_stages"))
            cfg.solver.max_stages =
                static_cast<int>(detail::get_number(s, "max_stages", "solver"));
        if (s.contains("max_newton_per_stage"))
            cfg.solver.max_newton_per_stage = static_cast<int>(
                detail::get_number(s, "max_newton_per_stage", "solver"));
        if (s.contains("restarts"))
            cfg.solver.restarts =
                static_cast<int>(detail::get_number(s, "restarts", "solver"));
        if (s.contains("seed")) {
            if (!s.at("seed").is_number_integer() &&
                !s.at("seed").is_number_unsigned())
                schema_fail("solver.seed must be an integer");
            cfg.solver.seed = s.at("seed").get<std::uint64_t>();
        }
        if (!(cfg.solver.eps_pos > 0.0) || !(cfg.solver.eps_neg_scale > 0.0))
            schema_fail("solver tolerances must be positive");
    }

    const bool has_sweep = root.contains("sweep");
    if (root.contains("model")) {
        cfg.primary = detail::parse_dataset(root.at("model"), "model",
                                            /*strict_taud=*/!has_sweep);
        cfg.has_model = true;
    }
    if (root.contains("datasets")) {
        const json& arr = root.at("datasets");
        if (!arr.is_array() || arr.empty())
            schema_fail("datasets must be a non-empty array");
        for (size_t i = 0; i < arr.size(); ++i) {
            DatasetConfig ds = detail::parse_dataset(
                arr[i], "datasets[" + std::to_string(i) + "]",
                /*strict_taud=*/true);
            cfg.datasets.push_back(std::move(ds));
        }
    }
    if (!cfg.has_model && cfg.datasets.empty())
        schema_fail("config needs a model or a datasets array");

    if (has_sweep) {
        if (!cfg.has_model)
            schema_fail("sweep requires a model section");
        const json& s = root.at("sweep");
        check_keys(s,
                   {"lambda2_grid", "lambda1_grid", "taud_grid", "tau_lo",
                    "tau_cap", "tolerance", "monotonicity_samples", "cell"},
                   "sweep");
        cfg.has_sweep = true;
        if (s.contains("lambda2_grid"))
            cfg.sweep.lambda2_grid =
                detail::parse_grid(s.at("lambda2_grid"), "sweep.lambda2_grid");
        if (s.contains("lambda1_grid"))
            cfg.sweep.lambda1_grid =
                detail::parse_grid(s.at("lambda1_grid"), "sweep.lambda1_grid");
        if (s.contains("taud_grid"))
            cfg.sweep.taud_grid =
                detail::parse_grid(s.at("taud_grid"), "sweep.taud_grid");
        if (s.contains("tau_lo"))
            cfg.sweep.tau_lo = detail::get_number(s, "tau_lo", "sweep");
        if (s.contains("tau_cap"))
            cfg.sweep.tau_cap = detail::get_number(s, "tau_cap", "sweep");
        if (s.contains("tolerance"))
            cfg.sweep.tol = detail::get_number(s, "tolerance", "sweep");
        if (s.contains("monotonicity_samples"))
            cfg.sweep.monotonicity_samples = static_cast<int>(
                detail::get_number(s, "monotonicity_samples", "sweep"));
        if (!(cfg.sweep.tau_lo > 0.0) ||
            !(cfg.sweep.tau_lo <= cfg.sweep.tau_cap))
            schema_fail("sweep bracket must satisfy 0 < tau_lo <= tau_cap");
        if (!(cfg.sweep.tol > 0.0))
            schema_fail("sweep.tolerance must be positive");
        if (s.contains("cell")) {
            const json& c = s.at("cell");
            check_keys(c, {"lambda2", "lambda1", "taud_scale"}, "sweep.cell");
            cfg.cell.lambda2 = detail::get_number(c, "lambda2", "sweep.cell");
            cfg.cell.lambda1 = detail::get_number(c, "lambda1", "sweep.cell");
            cfg.cell.taud_scale =
                detail::get_number(c, "taud_scale", "sweep.cell");
            cfg.has_cell = true;
        }
    }

    if (root.contains("simulation")) {
        if (!cfg.has_model)
            schema_fail("simulation requires a model section");
        const json& s = root.at("simulation");
        check_keys(s,
                   {"horizon", "dt", "paths", "seed", "u0", "u0_scale",
                    "delay", "trace_samples", "record_lkf", "scales"},
                   "simulation");
        cfg.has_sim = true;
        if (s.contains("horizon"))
            cfg.sim.horizon = detail::get_number(s, "horizon", "simulation");
        if (s.contains("dt"))
            cfg.sim.dt = detail::get_number(s, "dt", "simulation");
        if (s.contains("paths"))
            cfg.sim.paths = static_cast<int>(
                detail::get_number(s, "paths", "simulation"));
        if (s.contains("seed")) {
            if (!s.at("seed").is_number_integer() &&
                !s.at("seed").is_number_unsigned())
                schema_fail("simulation.seed must be an integer");
            cfg.sim.seed = s.at("seed").get<std::uint64_t>();
        }
        if (s.contains("trace_samples"))
            cfg.sim.trace_samples = static_cast<int>(
                detail::get_number(s, "trace_samples", "simulation"));
        if (s.contains("record_lkf")) {
            if (!s.at("record_lkf").is_boolean())
                schema_fail("simulation.record_lkf must be a boolean");
            cfg.sim.record_lkf = s.at("record_lkf").get<bool>();
        }
        if (s.contains("delay")) {
            const std::string dk = s.at("delay").get<std::string>();
            if (dk == "constant") cfg.sim.delay_kind = DelayKind::Constant;
            else if (dk == "sinusoidal")
                cfg.sim.delay_kind = DelayKind::Sinusoidal;
            else
                schema_fail("simulation.delay must be constant or sinusoidal");
        }
        if (s.contains("u0") && s.contains("u0_scale"))
            schema_fail("simulation.u0 and simulation.u0_scale are mutually "
                        "exclusive");
        if (s.contains("u0"))
            cfg.sim.u0 = detail::parse_vector(s.at("u0"), cfg.primary.model.n,
                                              "simulation.u0");
        if (s.contains("u0_scale")) {
            cfg.sim_u0_scale = detail::get_number(s, "u0_scale", "simulation");
            if (!(cfg.sim_u0_scale > 0.0))
                schema_fail("simulation.u0_scale must be positive");
        }
        if (s.contains("scales")) {
            const json& sc = s.at("scales");
            check_keys(sc, {"lambda1", "lambda2", "tau", "taud"},
                       "simulation.scales");
            if (sc.contains("lambda1"))
                cfg.sim_lambda1 =
                    detail::get_number(sc, "lambda1", "simulation.scales");
            if (sc.contains("lambda2"))
                cfg.sim_lambda2 =
                    detail::get_number(sc, "lambda2", "simulation.scales");
            if (sc.contains("tau"))
                cfg.sim_tau = detail::get_number(sc, "tau", "simulation.scales");
            if (sc.contains("taud"))
                cfg.sim_taud =
                    detail::get_number(sc, "taud", "simulation.scales");
        }
    }

    // Propagate shared pieces into the sweep configuration.
    if (cfg.has_sweep) {
        cfg.sweep.base = cfg.primary.model;
        cfg.sweep.eq_mode = cfg.primary.eq_mode;
        cfg.sweep.u_star_target = cfg.primary.u_star;
        cfg.sweep.sigma4_mode = cfg.sigma4_mode;
        cfg.sweep.solver = cfg.solver;
    }
    return cfg;
}

inline RunConfig parse_config_text(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(e.what());  // nlohmann reports line/column
    }
    return parse_config_json(root);
}

inline RunConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

namespace detail {

inline json render_dataset(const DatasetConfig& ds) {
    const int n = ds.model.n;
    const auto mat = [&](const Matrix& M) {
        json rows = json::array();
        for (int i = 0; i < n; ++i) {
            json row = json::array();
            for (int j = 0; j < n; ++j) row.push_back(M(i, j));
            rows.push_back(row);
        }
        return rows;
    };
    json j;
    j["name"] = ds.name;
    j["n"] = n;
    j["A"] = mat(ds.model.A);
    j["A_d"] = mat(ds.model.A_d);
    j["A_D"] = mat(ds.model.A_D);
    j["alpha"] = mat(ds.model.alpha);
    j["tau_bar"] = mat(ds.model.tau_bar);
    j["tau_bar_d"] = mat(ds.model.tau_bar_d);
    j["sigma"] = mat(ds.model.sigma);
    if (ds.model.rho.size() == n) {
        json v = json::array();
        for (int i = 0; i < n; ++i) v.push_back(ds.model.rho(i));
        j["rho"] = v;
    }
    if (ds.u_star.size() == n) {
        json v = json::array();
        for (int i = 0; i < n; ++i) v.push_back(ds.u_star(i));
        j["u_star"] = v;
    }
    j["equilibrium_mode"] =
        ds.eq_mode == EquilibriumMode::FromRho ? "rho" : "ustar";
    return j;
}

}  // namespace detail

// Canonical form with all defaults made explicit; parse(render(cfg)) is the
// identity on the canonical form.
inline std::string render_config(const RunConfig& cfg) {
    json root;
    root["schema"] = cfg.schema;
    if (cfg.has_model) root["model"] = detail::render_dataset(cfg.primary);
    if (!cfg.datasets.empty()) {
        json arr = json::array();
        for (const auto& ds : cfg.datasets)
            arr.push_back(detail::render_dataset(ds));
        root["datasets"] = arr;
    }
    root["sigma4_mode"] = to_string(cfg.sigma4_mode);
    if (!cfg.out_dir.empty()) root["out"] = cfg.out_dir;
    root["solver"] = {{"eps_pos", cfg.solver.eps_pos},
                      {"eps_neg_scale", cfg.solver.eps_neg_scale},
                      {"max_stages", cfg.solver.max_stages},
                      {"max_newton_per_stage", cfg.solver.max_newton_per_stage},
                      {"restarts", cfg.solver.restarts},
                      {"seed", cfg.solver.seed}};
    if (cfg.has_sweep) {
        json s;
        s["lambda2_grid"] = cfg.sweep.lambda2_grid;
        s["lambda1_grid"] = cfg.sweep.lambda1_grid;
        s["taud_grid"] = cfg.sweep.taud_grid;
        s["tau_lo"] = cfg.sweep.tau_lo;
        s["tau_cap"] = cfg.sweep.tau_cap;
        s["tolerance"] = cfg.sweep.tol;
        s["monotonicity_samples"] = cfg.sweep.monotonicity_samples;
        if (cfg.has_cell)
            s["cell"] = {{"lambda2", cfg.cell.lambda2},
                         {"lambda1", cfg.cell.lambda1},
                         {"taud_scale", cfg.cell.taud_scale}};
        root["sweep"] = s;
    }
    if (cfg.has_sim) {
        json s;
        s["horizon"] = cfg.sim.horizon;
        s["dt"] = cfg.sim.dt;
        s["paths"] = cfg.sim.paths;
        s["seed"] = cfg.sim.seed;
        s["trace_samples"] = cfg.sim.trace_samples;
        s["record_lkf"] = cfg.sim.record_lkf;
        s["delay"] = to_string(cfg.sim.delay_kind);
        if (cfg.sim.u0.size() > 0) {
            json v = json::array();
            for (int i = 0; i < cfg.sim.u0.size(); ++i)
                v.push_back(cfg.sim.u0(i));
            s["u0"] = v;
        }
        if (cfg.sim_u0_scale > 0.0) s["u0_scale"] = cfg.sim_u0_scale;
        s["scales"] = {{"lambda1", cfg.sim_lambda1},
                       {"lambda2", cfg.sim_lambda2},
                       {"tau", cfg.sim_tau},
                       {"taud", cfg.sim_taud}};
        root["simulation"] = s;
    }
    return root.dump(2) + "\n";
}

}  // namespace lvstab
