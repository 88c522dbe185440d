#pragma once

// Run configuration (JSON). Physical constants (geometry, materials,
// boundary temperatures) have no defaults; algorithmic knobs do, and every
// default that was filled in is reported back so the caller can print it.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hmcloak/optimizer.hpp"
#include "hmcloak/validation.hpp"

namespace hmcloak {

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct ExportFlags {
    bool history_csv = true;
    bool tensor_csv = true;
    bool vtk = true;
    bool checkpoints = true;
};

struct ValidationSettings {
    double epsilon0 = 1.0 / 9.0;
    int per_cell = 8;
    std::vector<double> psi_deg{0, 45, 90, 135, 180, 225, 270, 315};
    ObstacleSpec obstacle;
};

struct RunConfig {
    Scenario scenario;
    MeshSettings mesh;
    std::filesystem::path output_dir = "run";
    ExportFlags exports;
    ValidationSettings validation;
    int checkpoint_every = 10;
    std::vector<std::string> defaults_used;  ///< "path = value" for each default applied
};

namespace detail {

// Best-effort 1-based line of a key path in the source text: each component is
// searched for as a quoted key after the previous one.
inline int locate_line(const std::string& text, const std::string& path) {
    std::size_t pos = 0;
    std::stringstream ss(path);
    std::string part;
    bool found = false;
    while (std::getline(ss, part, '.')) {
        if (part.empty() || part.front() == '[') continue;
        const auto p = text.find('"' + part + '"', pos);
        if (p == std::string::npos) break;
        pos = p;
        found = true;
    }
    if (!found) return 0;
    return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
}

class Reader {
  public:
    Reader(const std::string& text, std::string source, std::vector<std::string>* defaults)
        : text_(text), source_(std::move(source)), defaults_(defaults) {}

    [[noreturn]] void fail(const std::string& path, const std::string& msg) const {
        const int line = locate_line(text_, path);
        std::string where = source_;
        if (line > 0) where += ":" + std::to_string(line);
        throw ConfigError(where + ": " + path + ": " + msg);
    }

    void check_keys(const nlohmann::json& obj, const std::string& path, std::initializer_list<const char*> allowed) const {
        if (!obj.is_object()) fail(path, "expected an object");
        for (const auto& [k, v] : obj.items()) {
            bool ok = false;
            for (const char* a : allowed) ok = ok || k == a;
            if (!ok) fail(join(path, k), "unknown key");
        }
    }

    const nlohmann::json& section(const nlohmann::json& obj, const std::string& path, const char* key) const {
        if (!obj.contains(key)) fail(join(path, key), "required section missing");
        return obj.at(key);
    }

    double number(const nlohmann::json& obj, const std::string& path, const char* key) const {
        if (!obj.contains(key)) fail(join(path, key), "required value missing (physical constants have no default)");
        return as_number(obj.at(key), join(path, key));
    }

    double number(const nlohmann::json& obj, const std::string& path, const char* key, double def) const {
        if (!obj.contains(key)) {
            note(join(path, key), fmt(def));
            return def;
        }
        return as_number(obj.at(key), join(path, key));
    }

    int integer(const nlohmann::json& obj, const std::string& path, const char* key, int def) const {
        if (!obj.contains(key)) {
            note(join(path, key), std::to_string(def));
            return def;
        }
        const auto& v = obj.at(key);
        if (!v.is_number_integer()) fail(join(path, key), "expected an integer");
        return v.get<int>();
    }

    bool boolean(const nlohmann::json& obj, const std::string& path, const char* key, bool def) const {
        if (!obj.contains(key)) {
            note(join(path, key), def ? "true" : "false");
            return def;
        }
        const auto& v = obj.at(key);
        if (!v.is_boolean()) fail(join(path, key), "expected true or false");
        return v.get<bool>();
    }

    std::string string(const nlohmann::json& obj, const std::string& path, const char* key, const std::string& def) const {
        if (!obj.contains(key)) {
            note(join(path, key), def);
            return def;
        }
        const auto& v = obj.at(key);
        if (!v.is_string()) fail(join(path, key), "expected a string");
        return v.get<std::string>();
    }

    double as_number(const nlohmann::json& v, const std::string& path) const {
        if (!v.is_number()) fail(path, "expected a number");
        const double x = v.get<double>();
        if (!std::isfinite(x)) fail(path, "not finite");
        return x;
    }

    void note(const std::string& path, const std::string& value) const {
        if (defaults_) defaults_->push_back(path + " = " + value);
    }

    static std::string join(const std::string& a, const std::string& b) { return a.empty() ? b : a + "." + b; }

    static std::string fmt(double x) {
        std::ostringstream o;
        o << std::setprecision(10) << x;
        return o.str();
    }

  private:
    const std::string& text_;
    std::string source_;
    std::vector<std::string>* defaults_;
};

inline MacroGeometry read_geometry(const Reader& r, const nlohmann::json& j, const std::string& p) {
    r.check_keys(j, p, {"Lx", "Ly", "R_D", "R_c", "n_sectors"});
    MacroGeometry g;
    g.Lx = r.number(j, p, "Lx");
    g.Ly = r.number(j, p, "Ly");
    g.R_D = r.number(j, p, "R_D");
    g.R_c = r.number(j, p, "R_c");
    g.n_sectors = r.integer(j, p, "n_sectors", 8);
    try {
        g.validate();
    } catch (const std::invalid_argument& e) {
        r.fail(p, e.what());
    }
    return g;
}

inline Materials read_materials(const Reader& r, const nlohmann::json& j, const std::string& p, ObjectiveMode mode) {
    r.check_keys(j, p, {"k_cell_a", "k_cell_b", "K_E", "K_obstacle", "K_pdms"});
    Materials m;
    m.k_cell_a = r.number(j, p, "k_cell_a");
    m.k_cell_b = r.number(j, p, "k_cell_b");
    m.K_E = r.number(j, p, "K_E");
    m.K_obstacle = r.number(j, p, "K_obstacle");
    if (mode == ObjectiveMode::normalized_appendixB) m.K_pdms = r.number(j, p, "K_pdms");
    else if (j.contains("K_pdms")) m.K_pdms = r.number(j, p, "K_pdms");
    for (double k : {m.k_cell_a, m.k_cell_b, m.K_E, m.K_obstacle, m.K_pdms})
        if (!(k > 0.0)) r.fail(p, "conductivities must be positive");
    return m;
}

inline InitPattern read_init(const Reader& r, const nlohmann::json& j, const std::string& p,
                             const std::filesystem::path& base) {
    if (!j.is_object()) r.fail(p, "expected an object");
    if (!j.contains("type")) r.fail(Reader::join(p, "type"), "required (pdms_disk, uniform or file)");
    const std::string type = j.at("type").is_string() ? j.at("type").get<std::string>() : "";
    if (type == "pdms_disk") {
        r.check_keys(j, p, {"type", "radius", "width"});
        PdmsDisk d;
        d.radius = r.number(j, p, "radius", d.radius);
        d.width = r.number(j, p, "width", d.width);
        if (!(d.radius > 0.0 && d.radius < 0.5)) r.fail(Reader::join(p, "radius"), "must lie in (0, 0.5)");
        if (!(d.width > 0.0)) r.fail(Reader::join(p, "width"), "must be positive");
        return d;
    }
    if (type == "uniform") {
        r.check_keys(j, p, {"type", "sign"});
        UniformPhase u;
        u.sign = r.integer(j, p, "sign", 1);
        if (u.sign != 1 && u.sign != -1) r.fail(Reader::join(p, "sign"), "must be +1 or -1");
        return u;
    }
    if (type == "file") {
        r.check_keys(j, p, {"type", "path"});
        std::filesystem::path path = r.string(j, p, "path", "");
        if (path.empty()) r.fail(Reader::join(p, "path"), "required for type file");
        if (path.is_relative()) path = base / path;
        return CustomFile{path.string()};
    }
    r.fail(Reader::join(p, "type"), "expected pdms_disk, uniform or file");
}

inline DSchedule read_schedule(const Reader& r, const nlohmann::json& j, const std::string& p) {
    if (!j.is_array()) r.fail(p, "expected a list of [iteration, d] pairs");
    DSchedule s;
    s.steps.clear();
    for (std::size_t i = 0; i < j.size(); ++i) {
        const std::string q = p + "[" + std::to_string(i) + "]";
        const auto& e = j[i];
        if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer()) r.fail(q, "expected [iteration, d]");
        s.steps.emplace_back(e[0].get<int>(), r.as_number(e[1], q));
    }
    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        r.fail(p, e.what());
    }
    return s;
}

inline Scenario read_scenario(const Reader& r, const nlohmann::json& j, const std::string& p,
                              const std::filesystem::path& base) {
    r.check_keys(j, p, {"geometry", "materials", "bc", "w", "K_phi", "tau", "dt", "dt_after_switch", "d_schedule",
                        "max_iter", "init", "objective_mode", "early_stop"});
    Scenario s;
    const std::string mode = r.string(j, p, "objective_mode", "standard");
    if (mode == "standard") s.objective_mode = ObjectiveMode::standard;
    else if (mode == "normalized_appendixB") s.objective_mode = ObjectiveMode::normalized_appendixB;
    else r.fail(Reader::join(p, "objective_mode"), "expected standard or normalized_appendixB");

    s.geometry = read_geometry(r, r.section(j, p, "geometry"), Reader::join(p, "geometry"));
    s.materials = read_materials(r, r.section(j, p, "materials"), Reader::join(p, "materials"), s.objective_mode);
    const std::string pb = Reader::join(p, "bc");
    const auto& bc = r.section(j, p, "bc");
    r.check_keys(bc, pb, {"T_low", "T_high"});
    s.bc.T_low = r.number(bc, pb, "T_low");
    s.bc.T_high = r.number(bc, pb, "T_high");
    if (s.bc.T_low == s.bc.T_high) r.fail(pb, "T_low equals T_high");

    if (!j.contains("w")) r.fail(Reader::join(p, "w"), "required (objective weight in [0,1])");
    s.w = r.number(j, p, "w");
    if (!(s.w >= 0.0 && s.w <= 1.0)) r.fail(Reader::join(p, "w"), "must lie in [0,1]");
    s.K_phi = r.number(j, p, "K_phi", s.K_phi);
    if (!(s.K_phi > 0.0)) r.fail(Reader::join(p, "K_phi"), "must be positive");
    s.tau = r.number(j, p, "tau", s.tau);
    if (!(s.tau >= 0.0)) r.fail(Reader::join(p, "tau"), "must be non-negative");
    s.dt = r.number(j, p, "dt", s.dt);
    if (!(s.dt > 0.0)) r.fail(Reader::join(p, "dt"), "must be positive");
    if (j.contains("dt_after_switch") && j.at("dt_after_switch").is_null()) {
        s.dt_after_switch.reset();
    } else {
        s.dt_after_switch = r.number(j, p, "dt_after_switch", *s.dt_after_switch);
        if (!(*s.dt_after_switch > 0.0)) r.fail(Reader::join(p, "dt_after_switch"), "must be positive (or null)");
    }
    if (j.contains("d_schedule")) s.d_schedule = read_schedule(r, j.at("d_schedule"), Reader::join(p, "d_schedule"));
    else r.note(Reader::join(p, "d_schedule"), "[[1, 0.2], [71, 0.01]]");
    s.max_iter = r.integer(j, p, "max_iter", s.max_iter);
    if (s.max_iter < 1) r.fail(Reader::join(p, "max_iter"), "must be >= 1");
    if (j.contains("init")) s.init = read_init(r, j.at("init"), Reader::join(p, "init"), base);
    else r.note(Reader::join(p, "init"), "pdms_disk radius 0.25 width 0.1");
    s.early_stop = r.boolean(j, p, "early_stop", false);
    return s;
}

inline MeshSettings read_mesh(const Reader& r, const nlohmann::json& j, const std::string& p, const MacroGeometry& g) {
    r.check_keys(j, p, {"cell_divisions", "macro_element_size", "sector_divisions", "ring_layers", "core_layers",
                        "outer_layers"});
    MeshSettings m;
    m.cell_divisions = r.integer(j, p, "cell_divisions", m.cell_divisions);
    if (m.cell_divisions < 16) r.fail(Reader::join(p, "cell_divisions"), "must be >= 16");
    if (j.contains("macro_element_size")) {
        for (const char* k : {"sector_divisions", "ring_layers", "core_layers", "outer_layers"})
            if (j.contains(k)) r.fail(Reader::join(p, k), "conflicts with macro_element_size");
        const double h = r.number(j, p, "macro_element_size");
        if (!(h > 0.0)) r.fail(Reader::join(p, "macro_element_size"), "must be positive");
        m.macro = MacroMeshResolution::for_element_size(g, h);
        return m;
    }
    m.macro.sector_divisions = r.integer(j, p, "sector_divisions", m.macro.sector_divisions);
    m.macro.ring_layers = r.integer(j, p, "ring_layers", m.macro.ring_layers);
    m.macro.core_layers = r.integer(j, p, "core_layers", m.macro.core_layers);
    m.macro.outer_layers = r.integer(j, p, "outer_layers", m.macro.outer_layers);
    if (m.macro.sector_divisions < 1) r.fail(Reader::join(p, "sector_divisions"), "must be >= 1");
    for (int v : {m.macro.ring_layers, m.macro.core_layers, m.macro.outer_layers})
        if (v < 0) r.fail(p, "layer counts must be >= 0 (0 selects automatic)");
    return m;
}

inline ValidationSettings read_validation(const Reader& r, const nlohmann::json& j, const std::string& p) {
    r.check_keys(j, p, {"epsilon0", "per_cell", "psi_deg", "obstacle"});
    ValidationSettings v;
    v.epsilon0 = r.number(j, p, "epsilon0", v.epsilon0);
    if (!(v.epsilon0 > 0.0)) r.fail(Reader::join(p, "epsilon0"), "must be positive");
    v.per_cell = r.integer(j, p, "per_cell", v.per_cell);
    if (v.per_cell < 8) r.fail(Reader::join(p, "per_cell"), "must be >= 8");
    if (j.contains("psi_deg")) {
        const auto& a = j.at("psi_deg");
        if (!a.is_array()) r.fail(Reader::join(p, "psi_deg"), "expected a list of angles");
        v.psi_deg.clear();
        for (std::size_t i = 0; i < a.size(); ++i) v.psi_deg.push_back(r.as_number(a[i], p + ".psi_deg[" + std::to_string(i) + "]"));
    } else {
        r.note(Reader::join(p, "psi_deg"), "[0, 45, ..., 315]");
    }
    const std::string po = Reader::join(p, "obstacle");
    if (j.contains("obstacle")) {
        const auto& o = j.at("obstacle");
        r.check_keys(o, po, {"shape", "radius_factor", "k_obstacle"});
        const std::string shape = r.string(o, po, "shape", "half_disk");
        if (shape == "half_disk") v.obstacle.shape = ObstacleSpec::Shape::half_disk;
        else if (shape == "disk") v.obstacle.shape = ObstacleSpec::Shape::disk;
        else r.fail(Reader::join(po, "shape"), "expected half_disk or disk");
        v.obstacle.radius_factor = r.number(o, po, "radius_factor", v.obstacle.radius_factor);
        v.obstacle.k_obstacle = r.number(o, po, "k_obstacle");
        try {
            v.obstacle.validate();
        } catch (const std::invalid_argument& e) {
            r.fail(po, e.what());
        }
    } else {
        r.note(po, "none (sweep needs an obstacle section)");
        v.obstacle.k_obstacle = 0.0;
    }
    return v;
}

}  // namespace detail

/// Parses a config from text; `source` names it in diagnostics and `base`
/// resolves a relative init file path. output_dir is taken as given.
inline RunConfig parse_config(const std::string& text, const std::string& source = "<config>",
                              const std::filesystem::path& base = ".") {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        const auto upto = std::min<std::size_t>(e.byte, text.size());
        const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n'));
        throw ConfigError(source + ":" + std::to_string(line) + ": JSON syntax error: " + e.what());
    }
    RunConfig cfg;
    const detail::Reader r(text, source, &cfg.defaults_used);
    r.check_keys(j, "", {"scenario", "mesh", "output_dir", "export", "validation", "checkpoint_every"});
    cfg.scenario = detail::read_scenario(r, r.section(j, "", "scenario"), "scenario", base);
    if (j.contains("mesh")) cfg.mesh = detail::read_mesh(r, j.at("mesh"), "mesh", cfg.scenario.geometry);
    else r.note("mesh", "cell_divisions 64, automatic macro layers");
    const std::string out = r.string(j, "", "output_dir", "run");
    cfg.output_dir = out;
    if (j.contains("export")) {
        const auto& e = j.at("export");
        r.check_keys(e, "export", {"history_csv", "tensor_csv", "vtk", "checkpoints"});
        cfg.exports.history_csv = r.boolean(e, "export", "history_csv", true);
        cfg.exports.tensor_csv = r.boolean(e, "export", "tensor_csv", true);
        cfg.exports.vtk = r.boolean(e, "export", "vtk", true);
        cfg.exports.checkpoints = r.boolean(e, "export", "checkpoints", true);
    } else {
        r.note("export", "all artifacts");
    }
    cfg.checkpoint_every = r.integer(j, "", "checkpoint_every", cfg.checkpoint_every);
    if (cfg.checkpoint_every < 0) r.fail("checkpoint_every", "must be >= 0");
    if (j.contains("validation")) cfg.validation = detail::read_validation(r, j.at("validation"), "validation");
    else {
        r.note("validation", "epsilon0 1/9, per_cell 8, no obstacle");
        cfg.validation.obstacle.k_obstacle = 0.0;
    }
    try {
        cfg.scenario.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(source + ": scenario: " + e.what());
    }
    return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.string(), path.parent_path().empty() ? "." : path.parent_path());
}

}  // namespace hmcloak
