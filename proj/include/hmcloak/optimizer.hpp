#pragma once

// Multiscale level-set optimization loop: cell correctors -> homogenized
// tensors -> macro state -> objectives -> adjoints -> sensitivities ->
// level-set update, with a transition-width schedule and an iteration cap.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hmcloak/fem.hpp"
#include "hmcloak/geometry.hpp"
#include "hmcloak/homogenization.hpp"
#include "hmcloak/levelset.hpp"
#include "hmcloak/macro_solver.hpp"
#include "hmcloak/objectives.hpp"
#include "hmcloak/parallel.hpp"
#include "hmcloak/sensitivity.hpp"

namespace hmcloak {

struct Materials {
    double k_cell_a = 386.0;   ///< chi = 1 phase of the cells (copper)
    double k_cell_b = 0.15;    ///< chi = 0 phase of the cells (PDMS / steel)
    double K_E = 67.0;         ///< Omega_E (steel)
    double K_obstacle = 386.0; ///< Omega_C
    double K_pdms = 0.15;      ///< Omega_D fill of the T_PDMS reference (normalized mode)
};

enum class ObjectiveMode { standard, normalized_appendixB };

/// Piecewise-constant transition width: entry (i, d) applies from iteration i on.
struct DSchedule {
    std::vector<std::pair<int, double>> steps{{1, 0.2}, {71, 0.01}};

    [[nodiscard]] double at(int iteration) const {
        double d = steps.front().second;
        for (const auto& [it, v] : steps)
            if (iteration >= it) d = v;
        return d;
    }
    [[nodiscard]] int last_switch() const { return steps.back().first; }

    void validate() const {
        if (steps.empty()) throw std::invalid_argument("d_schedule: at least one entry required");
        if (steps.front().first != 1) throw std::invalid_argument("d_schedule: first entry must start at iteration 1");
        for (std::size_t i = 0; i < steps.size(); ++i) {
            if (!(steps[i].second > 0.0 && steps[i].second < 1.0))
                throw std::invalid_argument("d_schedule: d values must lie in (0,1)");
            if (i > 0 && steps[i].first <= steps[i - 1].first)
                throw std::invalid_argument("d_schedule: iterations must increase");
        }
    }
};

struct Scenario {
    MacroGeometry geometry;
    Materials materials;
    BoundaryData bc;
    double w = 1.0;
    double K_phi = 1.5;
    double tau = 2.0e-4;
    double dt = 0.02;
    std::optional<double> dt_after_switch = 0.002;  ///< step once the last d switch is reached
    DSchedule d_schedule;
    int max_iter = 150;
    InitPattern init = PdmsDisk{};
    ObjectiveMode objective_mode = ObjectiveMode::standard;
    bool early_stop = false;

    void validate() const {
        geometry.validate();
        if (!(w >= 0.0 && w <= 1.0)) throw std::invalid_argument("scenario: w must lie in [0,1]");
        if (max_iter < 1) throw std::invalid_argument("scenario: max_iter must be >= 1");
        if (!(K_phi > 0.0)) throw std::invalid_argument("scenario: K_phi must be positive");
        if (!(tau >= 0.0)) throw std::invalid_argument("scenario: tau must be non-negative");
        if (!(dt > 0.0)) throw std::invalid_argument("scenario: dt must be positive");
        if (dt_after_switch && !(*dt_after_switch > 0.0)) throw std::invalid_argument("scenario: dt_after_switch must be positive");
        const Materials& m = materials;
        if (!(m.k_cell_a > 0 && m.k_cell_b > 0 && m.K_E > 0 && m.K_obstacle > 0 && m.K_pdms > 0))
            throw std::invalid_argument("scenario: conductivities must be positive");
        if (bc.T_low == bc.T_high) throw std::invalid_argument("scenario: T_low equals T_high (trivial problem)");
        d_schedule.validate();
    }
};

struct MeshSettings {
    MacroMeshResolution macro;
    int cell_divisions = 64;
};

struct IterationRecord {
    int iter = 0;
    double J1 = 0.0;
    double J2 = 0.0;
    double J = 0.0;
    double J1_ratio = 0.0;
    double J2_ratio = 0.0;
    double d = 0.0;
    double wall_ms = 0.0;
};

/// Work counters; lets callers confirm which solves a run performed.
struct StageCounters {
    long cell_solves = 0;
    long state_solves = 0;
    long adjoint_J1_solves = 0;
    long adjoint_J2_solves = 0;
    long levelset_updates = 0;
};

struct DesignState {
    int iteration = 0;  ///< completed iterations
    std::vector<LevelSetField> phis;
    std::vector<EffectiveTensor> tensors;
    double J1 = 0.0;
    double J2 = 0.0;
    double J = 0.0;
    std::vector<IterationRecord> history;
    StageCounters counters;
    bool finished = false;
};

class OptimizationError : public SolverError {
  public:
    OptimizationError(int iteration, const std::string& stage, const std::string& what)
        : SolverError("iteration " + std::to_string(iteration) + ", stage " + stage + ": " + what),
          iteration_(iteration),
          stage_(stage) {}
    [[nodiscard]] int iteration() const { return iteration_; }
    [[nodiscard]] const std::string& stage() const { return stage_; }

  private:
    int iteration_;
    std::string stage_;
};

struct RunOptions {
    int threads = 1;
    int checkpoint_every = 0;  ///< 0 disables periodic checkpoints
    std::filesystem::path checkpoint_dir;
    std::function<void(const IterationRecord&, const DesignState&)> on_iteration;  ///< tensors are those evaluated this iteration
};

/// Fields produced by one evaluation of a design (cells + macro).
struct Evaluation {
    std::vector<CellResponse> cells;
    std::vector<CellMaterialField> materials;
    MacroMaterialMap matmap;
    ScalarField T;
    double J1 = 0.0;
    double J2 = 0.0;
    double J = 0.0;
};

void checkpoint(const DesignState& state, const TriMesh& cell_mesh, const std::filesystem::path& dir);
DesignState resume(const std::filesystem::path& dir, const TriMesh& cell_mesh);

class Optimizer {
  public:
    Optimizer(Scenario scenario, MeshSettings mesh, RunOptions options = {})
        : scenario_(std::move(scenario)), settings_(mesh), options_(std::move(options)) {
        scenario_.validate();
        macro_mesh_ = build_macro_mesh(scenario_.geometry, settings_.macro);
        cell_mesh_ = build_cell_mesh({1.0, settings_.cell_divisions});
        evaluator_ = std::make_unique<ObjectiveEvaluator>(macro_mesh_);
        const int ns = scenario_.geometry.n_sectors;
        const Materials& m = scenario_.materials;
        T_steel_ = reference_steel(macro_mesh_, m.K_E, scenario_.bc, ns);
        if (scenario_.objective_mode == ObjectiveMode::normalized_appendixB) {
            T_pdms_ = reference_filled(macro_mesh_, m.K_pdms, m.K_E, m.K_obstacle, scenario_.bc, ns);
            normalizer_ = evaluator_->J1(T_pdms_->values, T_steel_.values);
            if (!(normalizer_ > 0.0)) throw std::invalid_argument("normalized objective: T_PDMS equals T_steel");
        }
        weights_ = periodic_weights(cell_mesh_);
        updater_ = std::make_unique<LevelSetUpdater>(cell_mesh_, scenario_.K_phi, scenario_.tau, scenario_.dt);
        if (scenario_.dt_after_switch)
            final_updater_ = std::make_unique<LevelSetUpdater>(cell_mesh_, scenario_.K_phi, scenario_.tau, *scenario_.dt_after_switch);
    }

    [[nodiscard]] const Scenario& scenario() const { return scenario_; }
    [[nodiscard]] const TriMesh& macro_mesh() const { return macro_mesh_; }
    [[nodiscard]] const TriMesh& cell_mesh() const { return cell_mesh_; }
    [[nodiscard]] const ScalarField& T_steel() const { return T_steel_; }
    [[nodiscard]] const ObjectiveEvaluator& objectives() const { return *evaluator_; }

    [[nodiscard]] DesignState initial_state() const {
        DesignState s;
        const int ns = scenario_.geometry.n_sectors;
        const double d0 = scenario_.d_schedule.at(1);
        for (int l = 1; l <= ns; ++l) s.phis.push_back(initialize(scenario_.init, cell_mesh_, l, d0));
        return s;
    }

    /// Objective used for the J1 slot of J: raw J1, or the normalized ratio.
    [[nodiscard]] double exterior_objective(double J1) const {
        return scenario_.objective_mode == ObjectiveMode::normalized_appendixB ? J1 / normalizer_ : J1;
    }

    /// Homogenizes every cell at width d and solves the macro state.
    [[nodiscard]] Evaluation evaluate(const std::vector<LevelSetField>& phis, double d, StageCounters* counters = nullptr) const {
        const int ns = scenario_.geometry.n_sectors;
        Evaluation ev;
        ev.cells.resize(static_cast<std::size_t>(ns));
        ev.materials.resize(static_cast<std::size_t>(ns));
        parallel_for(ns, options_.threads, [&](int l) {
            CellMaterialField mat{element_characteristic(cell_mesh_, phis[static_cast<std::size_t>(l)].phi, d),
                                  scenario_.materials.k_cell_a, scenario_.materials.k_cell_b};
            ev.cells[static_cast<std::size_t>(l)] = homogenize(cell_mesh_, mat);
            ev.materials[static_cast<std::size_t>(l)] = std::move(mat);
        });
        if (counters) counters->cell_solves += 2L * ns;
        ev.matmap.K_E = scenario_.materials.K_E;
        ev.matmap.K_obstacle = scenario_.materials.K_obstacle;
        for (const auto& c : ev.cells) ev.matmap.sector_tensors.push_back(c.K.tensor());
        return ev;
    }

    /// Runs from the initial layout.
    [[nodiscard]] DesignState run() const { return run(initial_state()); }

    /// Continues `state` until max_iter. A finished state is returned unchanged.
    [[nodiscard]] DesignState run(DesignState state) const {
        const int ns = scenario_.geometry.n_sectors;
        if (static_cast<int>(state.phis.size()) != ns) throw std::invalid_argument("run: wrong number of level-set fields");
        if (state.finished || state.iteration >= scenario_.max_iter) {
            state.finished = true;
            return state;
        }
        using clock = std::chrono::steady_clock;
        for (int it = state.iteration + 1; it <= scenario_.max_iter; ++it) {
            const auto t0 = clock::now();
            const double d = scenario_.d_schedule.at(it);
            std::string stage = "homogenization";
            try {
                for (auto& f : state.phis) f.d = d;
                Evaluation ev = evaluate(state.phis, d, &state.counters);

                stage = "state";
                const auto K = ev.matmap.element_tensors(macro_mesh_);
                const MacroState macro(macro_mesh_, K, scenario_.bc);
                ++state.counters.state_solves;
                const Vector& T = macro.temperature().values;
                const double J1 = evaluator_->J1(T, T_steel_.values);
                const double J2 = evaluator_->J2(T);
                const double J = compose(exterior_objective(J1), J2, scenario_.w);

                IterationRecord rec;
                rec.iter = it;
                rec.J1 = J1;
                rec.J2 = J2;
                rec.J = J;
                const double J1_init = state.history.empty() ? J1 : state.history.front().J1;
                const double J2_init = state.history.empty() ? J2 : state.history.front().J2;
                rec.J1_ratio = J1_init > 0.0 ? J1 / J1_init : 0.0;
                rec.J2_ratio = J2_init > 0.0 ? J2 / J2_init : 0.0;
                rec.d = d;

                state.tensors.clear();
                for (const auto& c : ev.cells) state.tensors.push_back(c.K);
                state.J1 = J1;
                state.J2 = J2;
                state.J = J;

                const bool last = it == scenario_.max_iter || should_stop(state, rec);
                if (!last) {
                    stage = "adjoint";
                    const double w = scenario_.w;
                    std::vector<TensorSensitivity> dJ1(static_cast<std::size_t>(ns)), dJ2(static_cast<std::size_t>(ns));
                    if (w > 0.0) {
                        Vector load = evaluator_->J1_gradient(T, T_steel_.values);
                        if (scenario_.objective_mode == ObjectiveMode::normalized_appendixB) load /= normalizer_;
                        const ScalarField v1 = macro.adjoint(load);
                        ++state.counters.adjoint_J1_solves;
                        for (int l = 0; l < ns; ++l)
                            dJ1[static_cast<std::size_t>(l)] = tensor_sensitivity(macro.temperature(), v1, macro_mesh_, l);
                    }
                    if (w < 1.0) {
                        const ScalarField v2 = macro.adjoint(evaluator_->J2_gradient(T));
                        ++state.counters.adjoint_J2_solves;
                        for (int l = 0; l < ns; ++l)
                            dJ2[static_cast<std::size_t>(l)] = tensor_sensitivity(macro.temperature(), v2, macro_mesh_, l);
                    }

                    stage = "sensitivity/update";
                    const LevelSetUpdater& updater = updater_for(it);
                    std::vector<LevelSetField> next(state.phis.size());
                    parallel_for(ns, options_.threads, [&](int l) {
                        const auto sl = static_cast<std::size_t>(l);
                        const CellResponse& cell = ev.cells[sl];
                        const CellMaterialField& mat = ev.materials[sl];
                        CellSensitivityInputs in;
                        in.dJ1 = dJ1[sl];
                        in.dJ2 = dJ2[sl];
                        in.DT_K_a_into_b = element_topological_derivative(cell_mesh_, mat, cell.w1, cell.w2, Insertion::a_into_b);
                        in.DT_K_b_into_a = element_topological_derivative(cell_mesh_, mat, cell.w1, cell.w2, Insertion::b_into_a);
                        const auto chi_n = nodal_characteristic(state.phis[sl].phi, d);
                        const Vector chi_nodal = Eigen::Map<const Vector>(chi_n.data(), static_cast<Eigen::Index>(chi_n.size()));
                        const Vector Jp = combined_sensitivity(cell_mesh_, in, mat.chi, chi_nodal, w, weights_).J_prime;
                        next[sl] = updater.update(state.phis[sl], Jp);
                    });
                    state.counters.levelset_updates += ns;
                    state.phis = std::move(next);
                }
                rec.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
                state.history.push_back(rec);
                state.iteration = it;
                if (options_.on_iteration) options_.on_iteration(rec, state);
                if (last) {
                    state.finished = true;
                } else if (options_.checkpoint_every > 0 && it % options_.checkpoint_every == 0 &&
                           !options_.checkpoint_dir.empty()) {
                    std::ostringstream name;
                    name << "iter_" << std::setw(4) << std::setfill('0') << it;
                    checkpoint(state, cell_mesh_, options_.checkpoint_dir / name.str());
                }
                if (last) break;
            } catch (const OptimizationError&) {
                throw;
            } catch (const std::exception& e) {
                throw OptimizationError(it, stage, e.what());
            }
        }
        return state;
    }

  private:
    [[nodiscard]] const LevelSetUpdater& updater_for(int it) const {
        return final_updater_ && it >= scenario_.d_schedule.last_switch() ? *final_updater_ : *updater_;
    }

    // Optional relative-change stop, active only after the final d switch.
    [[nodiscard]] bool should_stop(const DesignState& state, const IterationRecord& rec) const {
        if (!scenario_.early_stop) return false;
        constexpr int window = 10;
        if (rec.iter < scenario_.d_schedule.last_switch() + window) return false;
        if (static_cast<int>(state.history.size()) < window) return false;
        double prev = rec.J;
        for (int k = 0; k < window; ++k) {
            const double cur = state.history[state.history.size() - 1 - static_cast<std::size_t>(k)].J;
            if (std::abs(prev - cur) > 1e-6 * std::abs(cur)) return false;
            prev = cur;
        }
        return true;
    }

    Scenario scenario_;
    MeshSettings settings_;
    RunOptions options_;
    TriMesh macro_mesh_;
    TriMesh cell_mesh_;
    std::unique_ptr<ObjectiveEvaluator> evaluator_;
    ScalarField T_steel_;
    std::optional<ScalarField> T_pdms_;
    double normalizer_ = 1.0;
    Vector weights_;
    std::unique_ptr<LevelSetUpdater> updater_;
    std::unique_ptr<LevelSetUpdater> final_updater_;
};

// ---------------------------------------------------------------------------
// Checkpoints: <dir>/phi_<l>.csv for each cell plus <dir>/state.json.

inline void checkpoint(const DesignState& state, const TriMesh& cell_mesh, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    for (const auto& f : state.phis) write_level_set_csv(dir / ("phi_" + std::to_string(f.cell_index) + ".csv"), cell_mesh, f);
    nlohmann::json j;
    j["iteration"] = state.iteration;
    j["finished"] = state.finished;
    j["n_cells"] = state.phis.size();
    j["d"] = state.phis.empty() ? 0.0 : state.phis.front().d;
    j["J1"] = state.J1;
    j["J2"] = state.J2;
    j["J"] = state.J;
    auto& h = j["history"] = nlohmann::json::array();
    for (const auto& r : state.history)
        h.push_back({{"iter", r.iter}, {"J1", r.J1}, {"J2", r.J2}, {"J", r.J}, {"J1_ratio", r.J1_ratio},
                     {"J2_ratio", r.J2_ratio}, {"d", r.d}, {"wall_ms", r.wall_ms}});
    auto& t = j["tensors"] = nlohmann::json::array();
    for (const auto& k : state.tensors) t.push_back({k.K11, k.K12, k.K22});
    const StageCounters& c = state.counters;
    j["counters"] = {{"cell_solves", c.cell_solves}, {"state_solves", c.state_solves},
                     {"adjoint_J1_solves", c.adjoint_J1_solves}, {"adjoint_J2_solves", c.adjoint_J2_solves},
                     {"levelset_updates", c.levelset_updates}};
    std::ofstream out(dir / "state.json");
    if (!out) throw std::runtime_error("cannot write checkpoint " + (dir / "state.json").string());
    out << j.dump(1) << '\n';
}

inline DesignState resume(const std::filesystem::path& dir, const TriMesh& cell_mesh) {
    std::ifstream in(dir / "state.json");
    if (!in) throw std::runtime_error("checkpoint missing: " + (dir / "state.json").string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("corrupt checkpoint " + (dir / "state.json").string() + ": " + e.what());
    }
    DesignState s;
    try {
        s.iteration = j.at("iteration").get<int>();
        s.finished = j.at("finished").get<bool>();
        s.J1 = j.at("J1").get<double>();
        s.J2 = j.at("J2").get<double>();
        s.J = j.at("J").get<double>();
        const double d = j.at("d").get<double>();
        const int n = j.at("n_cells").get<int>();
        for (const auto& r : j.at("history")) {
            IterationRecord rec;
            rec.iter = r.at("iter").get<int>();
            rec.J1 = r.at("J1").get<double>();
            rec.J2 = r.at("J2").get<double>();
            rec.J = r.at("J").get<double>();
            rec.J1_ratio = r.at("J1_ratio").get<double>();
            rec.J2_ratio = r.at("J2_ratio").get<double>();
            rec.d = r.at("d").get<double>();
            rec.wall_ms = r.at("wall_ms").get<double>();
            s.history.push_back(rec);
        }
        for (const auto& t : j.at("tensors")) s.tensors.push_back(EffectiveTensor::from({t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>()}));
        const auto& c = j.at("counters");
        s.counters = {c.at("cell_solves").get<long>(), c.at("state_solves").get<long>(),
                      c.at("adjoint_J1_solves").get<long>(), c.at("adjoint_J2_solves").get<long>(),
                      c.at("levelset_updates").get<long>()};
        for (int l = 1; l <= n; ++l)
            s.phis.push_back(read_level_set_csv(dir / ("phi_" + std::to_string(l) + ".csv"), cell_mesh, l, d));
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("corrupt checkpoint " + dir.string() + ": " + e.what());
    }
    if (static_cast<int>(s.history.size()) != s.iteration)
        throw std::runtime_error("corrupt checkpoint " + dir.string() + ": history length differs from iteration");
    return s;
}

}  // namespace hmcloak
