#pragma once

// CSV artifacts of a run: the per-iteration history and the cell tensors.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hmcloak/homogenization.hpp"
#include "hmcloak/optimizer.hpp"

namespace hmcloak {

inline constexpr const char* kHistoryHeader = "iter,J1,J2,J,J1_ratio,J2_ratio,d,wall_ms";
inline constexpr const char* kTensorHeader = "l,K11,K12,K22,Kbar1,Kbar2,theta";

inline void write_history_row(std::ostream& out, const IterationRecord& r) {
    out << std::setprecision(17) << r.iter << ',' << r.J1 << ',' << r.J2 << ',' << r.J << ',' << r.J1_ratio << ','
        << r.J2_ratio << ',' << r.d << ',' << r.wall_ms << '\n';
}

inline void write_history_csv(const std::filesystem::path& path, const std::vector<IterationRecord>& history) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << kHistoryHeader << '\n';
    for (const auto& r : history) write_history_row(out, r);
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

namespace detail {
inline std::vector<double> split_numbers(const std::string& line, std::size_t expect, const std::string& where) {
    std::vector<double> v;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        try {
            std::size_t used = 0;
            v.push_back(std::stod(cell, &used));
            if (used != cell.size() && cell.find_first_not_of(" \r", used) != std::string::npos) throw std::invalid_argument(cell);
        } catch (const std::exception&) {
            throw std::runtime_error(where + ": malformed number '" + cell + "'");
        }
    }
    if (v.size() != expect) throw std::runtime_error(where + ": expected " + std::to_string(expect) + " columns");
    return v;
}
}  // namespace detail

inline std::vector<IterationRecord> read_history_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind(kHistoryHeader, 0) != 0)
        throw std::runtime_error(path.string() + ": missing header " + kHistoryHeader);
    std::vector<IterationRecord> h;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto v = detail::split_numbers(line, 8, path.string() + ":" + std::to_string(lineno));
        h.push_back({static_cast<int>(v[0]), v[1], v[2], v[3], v[4], v[5], v[6], v[7]});
    }
    return h;
}

inline void write_tensor_csv(const std::filesystem::path& path, const std::vector<EffectiveTensor>& tensors) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << kTensorHeader << '\n' << std::setprecision(17);
    for (std::size_t l = 0; l < tensors.size(); ++l) {
        const auto& t = tensors[l];
        out << l + 1 << ',' << t.K11 << ',' << t.K12 << ',' << t.K22 << ',' << t.Kbar1 << ',' << t.Kbar2 << ',' << t.theta << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline std::vector<EffectiveTensor> read_tensor_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind(kTensorHeader, 0) != 0)
        throw std::runtime_error(path.string() + ": missing header " + kTensorHeader);
    std::vector<EffectiveTensor> out;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto v = detail::split_numbers(line, 7, path.string() + ":" + std::to_string(lineno));
        out.push_back({v[1], v[2], v[3], v[4], v[5], v[6]});
    }
    return out;
}

}  // namespace hmcloak
