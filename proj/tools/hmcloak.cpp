// hmcloak: optimize / homogenize / validate / sweep.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hmcloak/config.hpp"
#include "hmcloak/homogenization.hpp"
#include "hmcloak/io.hpp"
#include "hmcloak/optimizer.hpp"
#include "hmcloak/validation.hpp"
#include "hmcloak/vtk.hpp"

namespace fs = std::filesystem;
using namespace hmcloak;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;

// Input problems that are not config syntax (missing run, bad checkpoint).
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void print_defaults(const RunConfig& cfg) {
    if (cfg.defaults_used.empty()) return;
    std::cout << "defaults applied:\n";
    for (const auto& d : cfg.defaults_used) std::cout << "  " << d << '\n';
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_cell_vtk(const fs::path& path, const TriMesh& cell, const LevelSetField& f, const Materials& m) {
    const auto chi = element_characteristic(cell, f.phi, f.d);
    std::vector<double> k(chi.size());
    for (std::size_t e = 0; e < chi.size(); ++e) k[e] = element_conductivity(chi[e], m.k_cell_a, m.k_cell_b);
    VtkData data;
    data.point_scalars = {{"phi", &f.phi}};
    data.cell_scalars = {{"chi", chi}, {"k", std::move(k)}};
    write_vtk(path, cell, data, "cell " + std::to_string(f.cell_index));
}

// A run directory holds final/state.json; a checkpoint directory holds state.json itself.
fs::path design_dir(const fs::path& run) {
    if (fs::exists(run / "state.json")) return run;
    if (fs::exists(run / "final" / "state.json")) return run / "final";
    throw InputError("no checkpoint found in " + run.string() + " (expected state.json or final/state.json)");
}

DesignState load_design(const fs::path& run, const TriMesh& cell) {
    const fs::path dir = design_dir(run);
    try {
        return resume(dir, cell);
    } catch (const std::exception& e) {
        throw InputError(e.what());
    }
}

int cell_divisions_of(const fs::path& run) {
    try {
        return cell_divisions_of_csv(design_dir(run) / "phi_1.csv");
    } catch (const InputError&) {
        throw;
    } catch (const std::exception& e) {
        throw InputError(e.what());
    }
}

RunConfig config_for(const std::string& config_path, const fs::path& run) {
    if (!config_path.empty()) return load_config(config_path);
    if (!run.empty() && fs::exists(run / "config.json")) return load_config(run / "config.json");
    throw ConfigError("--config is required (no config.json in the run directory)");
}

TilingSpec tiling_for(const RunConfig& cfg, std::vector<LevelSetField> phis, TriMesh cell, double eps) {
    TilingSpec s;
    s.epsilon0 = eps;
    s.d = cfg.scenario.d_schedule.steps.back().second;
    s.geometry = cfg.scenario.geometry;
    s.materials = cfg.scenario.materials;
    s.bc = cfg.scenario.bc;
    s.cell_mesh = std::move(cell);
    for (auto& f : phis) f.d = s.d;
    s.phis = std::move(phis);
    return s;
}

std::vector<LevelSetField> initial_fields(const RunConfig& cfg, const TriMesh& cell) {
    std::vector<LevelSetField> out;
    for (int l = 1; l <= cfg.scenario.geometry.n_sectors; ++l)
        out.push_back(initialize(cfg.scenario.init, cell, l, cfg.scenario.d_schedule.steps.back().second));
    return out;
}

void write_sweep_csv(const fs::path& path, const std::vector<SweepRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "design,psi_deg,J1,J1_ratio\n" << std::setprecision(12);
    for (const auto& r : rows) out << r.design << ',' << r.psi_deg << ',' << r.J1 << ',' << r.J1_ratio << '\n';
}

void print_sweep(const std::vector<SweepRow>& rows) {
    for (const auto& r : rows)
        std::cout << "  " << r.design << " psi=" << r.psi_deg << " J1=" << r.J1 << " J1/J1_init=" << r.J1_ratio << '\n';
}

// ---------------------------------------------------------------------------

struct OptimizeArgs {
    std::string config;
    std::string out;
    int threads = 1;
    std::optional<int> checkpoint_every;
    std::string resume_from;
};

int cmd_optimize(const OptimizeArgs& a) {
    RunConfig cfg = load_config(a.config);
    if (!a.out.empty()) cfg.output_dir = a.out;
    if (a.checkpoint_every) {
        if (*a.checkpoint_every < 0) throw ConfigError("--checkpoint-every must be >= 0");
        cfg.checkpoint_every = *a.checkpoint_every;
    }
    print_defaults(cfg);
    const fs::path out = cfg.output_dir;
    fs::create_directories(out);
    {
        std::ofstream c(out / "config.json");
        c << read_text(a.config);
    }

    RunOptions opts;
    opts.threads = a.threads;
    opts.checkpoint_every = cfg.exports.checkpoints ? cfg.checkpoint_every : 0;
    opts.checkpoint_dir = out / "checkpoints";

    std::ofstream history;
    if (cfg.exports.history_csv) {
        history.open(out / "history.csv");
        if (!history) throw std::runtime_error("cannot write " + (out / "history.csv").string());
        history << kHistoryHeader << '\n';
    }
    opts.on_iteration = [&](const IterationRecord& r, const DesignState&) {
        std::cout << "iter " << r.iter << " J1=" << r.J1 << " J2=" << r.J2 << " J=" << r.J << " J1/J1_init=" << r.J1_ratio
                  << " J2/J2_init=" << r.J2_ratio << " d=" << r.d << " (" << static_cast<long>(r.wall_ms) << " ms)"
                  << std::endl;
        if (history.is_open()) {
            write_history_row(history, r);
            history.flush();
        }
    };

    const Optimizer opt(cfg.scenario, cfg.mesh, opts);
    std::cout << "macro mesh: " << opt.macro_mesh().num_elements() << " elements, cell mesh: "
              << opt.cell_mesh().num_elements() << " elements\n";
    DesignState state;
    if (!a.resume_from.empty()) {
        state = load_design(a.resume_from, opt.cell_mesh());
        std::cout << "resuming after iteration " << state.iteration << '\n';
        if (history.is_open())
            for (const auto& r : state.history) write_history_row(history, r);
    } else {
        state = opt.initial_state();
    }
    state = opt.run(std::move(state));

    if (cfg.exports.checkpoints) checkpoint(state, opt.cell_mesh(), out / "final");
    if (cfg.exports.tensor_csv) write_tensor_csv(out / "tensors.csv", state.tensors);
    if (cfg.exports.vtk) {
        const double d = state.phis.front().d;
        const Evaluation ev = opt.evaluate(state.phis, d);
        const auto K = ev.matmap.element_tensors(opt.macro_mesh());
        const MacroState macro(opt.macro_mesh(), K, cfg.scenario.bc);
        write_macro_vtk(out / "macro.vtk", opt.macro_mesh(), K, macro.temperature().values, opt.T_steel().values);
        for (const auto& f : state.phis)
            write_cell_vtk(out / ("cell_" + std::to_string(f.cell_index) + ".vtk"), opt.cell_mesh(), f, cfg.scenario.materials);
    }
    const auto& first = state.history.front();
    std::cout << "done: " << state.iteration << " iterations, J1 " << first.J1 << " -> " << state.J1 << " (ratio "
              << state.history.back().J1_ratio << "), J2 " << first.J2 << " -> " << state.J2 << " (ratio "
              << state.history.back().J2_ratio << ")\n";
    std::cout << "output: " << out.string() << '\n';
    return 0;
}

// ---------------------------------------------------------------------------

struct HomogenizeArgs {
    std::string phi;
    std::string config;
    std::optional<double> k_a, k_b;
    double d = 0.01;
};

int cmd_homogenize(const HomogenizeArgs& a) {
    double ka = 0, kb = 0;
    if (!a.config.empty()) {
        const RunConfig cfg = load_config(a.config);
        ka = cfg.scenario.materials.k_cell_a;
        kb = cfg.scenario.materials.k_cell_b;
    }
    if (a.k_a) ka = *a.k_a;
    if (a.k_b) kb = *a.k_b;
    if (!(ka > 0.0 && kb > 0.0)) throw ConfigError("homogenize: cell conductivities required (--config or --k-a/--k-b)");
    if (!(a.d > 0.0 && a.d < 1.0)) throw ConfigError("homogenize: --d must lie in (0,1)");
    int n = 0;
    try {
        n = cell_divisions_of_csv(a.phi);
    } catch (const std::exception& e) {
        throw InputError(e.what());
    }
    const TriMesh cell = build_cell_mesh({1.0, n});
    LevelSetField f;
    try {
        f = read_level_set_csv(a.phi, cell, 1, a.d);
    } catch (const std::exception& e) {
        throw InputError(e.what());
    }
    const CellMaterialField mat{element_characteristic(cell, f.phi, a.d), ka, kb};
    const CellResponse r = homogenize(cell, mat);
    std::cout << std::setprecision(10) << "cell mesh " << n << "x" << n << ", d = " << a.d << ", k_a = " << ka
              << ", k_b = " << kb << "\n"
              << "K*    = [[" << r.K.K11 << ", " << r.K.K12 << "], [" << r.K.K12 << ", " << r.K.K22 << "]]\n"
              << "Kbar1 = " << r.K.Kbar1 << "\nKbar2 = " << r.K.Kbar2 << "\ntheta = " << r.K.theta << " deg\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct ValidateArgs {
    std::string config;
    std::string run;
    std::string out;
    std::optional<double> epsilon0;
    std::vector<double> psi;
    int threads = 1;
};

int cmd_validate(const ValidateArgs& a) {
    RunConfig cfg = config_for(a.config, a.run);
    print_defaults(cfg);
    const double eps = a.epsilon0.value_or(cfg.validation.epsilon0);
    if (!(eps > 0.0)) throw ConfigError("--epsilon0 must be positive");
    const TriMesh cell = build_cell_mesh({1.0, cell_divisions_of(a.run)});
    const DesignState design = load_design(a.run, cell);
    const fs::path out = a.out.empty() ? fs::path(a.run) / "validation" : fs::path(a.out);
    fs::create_directories(out);

    const TiledEvaluator ev(tiled_mesh(cfg.scenario.geometry, eps, cfg.validation.per_cell), cfg.scenario.materials.K_E,
                            cfg.scenario.bc, cfg.scenario.geometry.n_sectors);
    std::cout << "tiled mesh: " << ev.mesh().num_elements() << " elements, epsilon0 = " << eps << '\n';
    const TilingSpec init = tiling_for(cfg, initial_fields(cfg, cell), cell, eps);
    const TilingSpec final_spec = tiling_for(cfg, design.phis, cell, eps);
    const TiledResult r0 = ev.evaluate(init);
    const TiledResult r1 = ev.evaluate(final_spec);

    std::ofstream csv(out / "validation.csv");
    csv << "structure,epsilon0,elements,J1,J2,J1_ratio,J2_ratio\n" << std::setprecision(12);
    csv << "initial," << eps << ',' << ev.mesh().num_elements() << ',' << r0.J1 << ',' << r0.J2 << ",1,1\n";
    csv << "optimized," << eps << ',' << ev.mesh().num_elements() << ',' << r1.J1 << ',' << r1.J2 << ',' << r1.J1 / r0.J1
        << ',' << r1.J2 / r0.J2 << '\n';
    std::cout << "tiled initial:   J1 = " << r0.J1 << ", J2 = " << r0.J2 << '\n'
              << "tiled optimized: J1 = " << r1.J1 << ", J2 = " << r1.J2 << " (J1/J1_init = " << r1.J1 / r0.J1
              << ", J2/J2_init = " << r1.J2 / r0.J2 << ")\n";

    VtkData data;
    const Vector T_sub = r1.T.values - ev.T_steel().values;
    data.point_scalars = {{"T", &r1.T.values}, {"T_sub", &T_sub}};
    data.cell_scalars = {{"k", r1.conductivity}};
    write_vtk(out / "tiled.vtk", ev.mesh(), data, "tiled design");

    if (!a.psi.empty()) {
        ObstacleSpec base = cfg.validation.obstacle;
        if (!(base.k_obstacle > 0.0)) throw ConfigError("sweep needs validation.obstacle in the config");
        const std::vector<NamedDesign> designs{{"design", final_spec, r0.J1}};
        const auto rows = robustness_sweep(ev, designs, a.psi, base, a.threads);
        write_sweep_csv(out / "sweep.csv", rows);
        print_sweep(rows);
    }
    std::cout << "output: " << out.string() << '\n';
    return 0;
}

// ---------------------------------------------------------------------------

struct SweepArgs {
    std::string config;
    std::vector<std::string> designs;
    std::string out;
    std::optional<double> epsilon0;
    std::vector<double> psi;
    int threads = 1;
};

int cmd_sweep(const SweepArgs& a) {
    RunConfig cfg = load_config(a.config);
    print_defaults(cfg);
    ObstacleSpec base = cfg.validation.obstacle;
    if (!(base.k_obstacle > 0.0)) throw ConfigError(a.config + ": validation.obstacle: required for sweep");
    const double eps = a.epsilon0.value_or(cfg.validation.epsilon0);
    if (!(eps > 0.0)) throw ConfigError("--epsilon0 must be positive");
    const std::vector<double> psi = a.psi.empty() ? cfg.validation.psi_deg : a.psi;

    const TiledEvaluator ev(tiled_mesh(cfg.scenario.geometry, eps, cfg.validation.per_cell), cfg.scenario.materials.K_E,
                            cfg.scenario.bc, cfg.scenario.geometry.n_sectors);
    std::cout << "tiled mesh: " << ev.mesh().num_elements() << " elements, epsilon0 = " << eps << '\n';
    std::vector<NamedDesign> designs;
    for (const auto& item : a.designs) {
        const auto eq = item.find('=');
        const std::string name = eq == std::string::npos ? fs::path(item).filename().string() : item.substr(0, eq);
        const fs::path run = eq == std::string::npos ? item : item.substr(eq + 1);
        const TriMesh cell = build_cell_mesh({1.0, cell_divisions_of(run)});
        const DesignState st = load_design(run, cell);
        const double J1_init = ev.evaluate(tiling_for(cfg, initial_fields(cfg, cell), cell, eps)).J1;
        designs.push_back({name, tiling_for(cfg, st.phis, cell, eps), J1_init});
    }
    const auto rows = robustness_sweep(ev, designs, psi, base, a.threads);
    const fs::path out = a.out.empty() ? fs::path("sweep.csv") : fs::path(a.out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_sweep_csv(out, rows);
    print_sweep(rows);
    std::cout << "output: " << out.string() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multiscale level-set design of thermal cloaks"};
    app.require_subcommand(1);

    OptimizeArgs oa;
    auto* opt = app.add_subcommand("optimize", "run the level-set optimization");
    opt->add_option("--config", oa.config, "scenario config (JSON)")->required()->check(CLI::ExistingFile);
    opt->add_option("--out", oa.out, "run directory (overrides output_dir)");
    opt->add_option("--threads", oa.threads, "worker threads")->check(CLI::PositiveNumber);
    opt->add_option("--checkpoint-every", oa.checkpoint_every, "checkpoint period in iterations, 0 disables");
    opt->add_option("--resume", oa.resume_from, "checkpoint directory to continue from")->check(CLI::ExistingDirectory);

    HomogenizeArgs ha;
    auto* hom = app.add_subcommand("homogenize", "effective tensor of one cell level set");
    hom->add_option("--phi", ha.phi, "level-set CSV (node_index,y1,y2,phi)")->required()->check(CLI::ExistingFile);
    hom->add_option("--config", ha.config, "take the cell conductivities from this config")->check(CLI::ExistingFile);
    hom->add_option("--k-a", ha.k_a, "conductivity of the phi > 0 phase");
    hom->add_option("--k-b", ha.k_b, "conductivity of the phi < 0 phase");
    hom->add_option("--d", ha.d, "transition width")->capture_default_str();
    int hom_threads = 1;
    hom->add_option("--threads", hom_threads, "unused, accepted for uniformity");

    ValidateArgs va;
    auto* val = app.add_subcommand("validate", "tiled finite-cell check of a finished run");
    val->add_option("--config", va.config, "scenario config (defaults to <run>/config.json)")->check(CLI::ExistingFile);
    val->add_option("--run", va.run, "run directory or checkpoint directory")->required()->check(CLI::ExistingDirectory);
    val->add_option("--out", va.out, "output directory (default <run>/validation)");
    val->add_option("--epsilon0", va.epsilon0, "cell size");
    val->add_option("--psi", va.psi, "obstacle angles in degrees for a robustness sweep")->delimiter(',');
    val->add_option("--threads", va.threads, "worker threads")->check(CLI::PositiveNumber);

    SweepArgs sa;
    auto* sw = app.add_subcommand("sweep", "rotated-obstacle robustness sweep over designs");
    sw->add_option("--config", sa.config, "scenario config with a validation.obstacle section")->required()->check(CLI::ExistingFile);
    sw->add_option("--design", sa.designs, "name=run_dir (repeatable)")->required();
    sw->add_option("--out", sa.out, "CSV path (default sweep.csv)");
    sw->add_option("--epsilon0", sa.epsilon0, "cell size");
    sw->add_option("--psi", sa.psi, "angles in degrees (default from config)")->delimiter(',');
    sw->add_option("--threads", sa.threads, "worker threads")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (opt->parsed()) return cmd_optimize(oa);
        if (hom->parsed()) return cmd_homogenize(ha);
        if (val->parsed()) return cmd_validate(va);
        if (sw->parsed()) return cmd_sweep(sa);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "solver failure: " << e.what() << '\n';
        return kExitSolver;
    }
    return kExitConfig;
}
