#pragma once

// Loaders for the published reference results shipped under data/.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fjsync/gof.hpp"
#include "fjsync/network.hpp"

#ifndef FJSYNC_DATA_DIR
#define FJSYNC_DATA_DIR "data"
#endif

namespace fjsync::reference {

using nlohmann::json;

// $FJSYNC_DATA_DIR if set, else the source-tree data directory.
inline std::filesystem::path data_dir() {
    if (const char* env = std::getenv("FJSYNC_DATA_DIR"); env && *env) return env;
    return FJSYNC_DATA_DIR;
}

inline json load_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return json::parse(in);
}

struct Cell {
    double lambda = 0.0;
    gof::RegionPoint point;
    double chi2 = 0.0;
    bool accepted = false;
    double delta_t_rel_percent = 0.0;

    NetworkParams params() const { return gof::network_for(point, lambda); }
};

struct ServerRange {
    std::uint32_t lo = 1;
    std::optional<std::uint32_t> hi;  // nullopt: unbounded

    bool contains(const ServerCount& n) const {
        if (n.is_infinite()) return !hi.has_value();
        return n.count() >= lo && (!hi || n.count() <= *hi);
    }
};

// (lo, hi]
struct UtilizationRange {
    double lo = 0.0;
    double hi = 1.0;

    bool contains(double psi) const { return psi > lo && psi <= hi; }
};

struct Region {
    ServerRange n_a, n_b;
    UtilizationRange psi_a, psi_b;

    bool contains(const gof::RegionPoint& p) const {
        return n_a.contains(p.n_a) && n_b.contains(p.n_b) && psi_a.contains(p.psi_a) &&
               psi_b.contains(p.psi_b);
    }
};

struct DiagnosticRow {
    double psi = 0.0;
    double d12 = 0.0;
    double d3 = 0.0;
    std::string bound;  // "below": values are upper bounds; "typical": observed values
};

inline std::vector<Cell> load_cells(const std::filesystem::path& path = data_dir() / "reference_cells.json") {
    const auto j = load_json(path);
    std::vector<Cell> cells;
    for (const auto& c : j.at("cells")) {
        Cell cell;
        cell.lambda = c.at("lam").get<double>();
        cell.point = {ServerCount(c.at("n_a").get<std::uint32_t>()), ServerCount(c.at("n_b").get<std::uint32_t>()),
                      c.at("psi_a").get<double>(), c.at("psi_b").get<double>()};
        cell.chi2 = c.at("chi2").get<double>();
        cell.accepted = c.at("accepted").get<bool>();
        cell.delta_t_rel_percent = c.at("delta_t_rel_percent").get<double>();
        cells.push_back(cell);
    }
    return cells;
}

inline std::vector<Region> load_regions(const std::filesystem::path& path = data_dir() / "reference_regions.json") {
    const auto j = load_json(path);
    auto servers = [](const json& r) {
        ServerRange s;
        s.lo = r.at(0).get<std::uint32_t>();
        if (!r.at(1).is_null()) s.hi = r.at(1).get<std::uint32_t>();
        return s;
    };
    auto util = [](const json& r) { return UtilizationRange{r.at(0).get<double>(), r.at(1).get<double>()}; };
    std::vector<Region> regions;
    for (const auto& r : j.at("regions"))
        regions.push_back({servers(r.at("n_a")), servers(r.at("n_b")), util(r.at("psi_a")), util(r.at("psi_b"))});
    return regions;
}

inline std::vector<DiagnosticRow> load_ck_diagnostics(
    const std::filesystem::path& path = data_dir() / "reference_ck_diagnostics.json") {
    const auto j = load_json(path);
    std::vector<DiagnosticRow> rows;
    for (const auto& r : j.at("rows"))
        rows.push_back({r.at("psi").get<double>(), r.at("d12").get<double>(), r.at("d3").get<double>(),
                        r.at("bound").get<std::string>()});
    return rows;
}

inline bool expected_accept(const std::vector<Region>& regions, const gof::RegionPoint& p) {
    for (const auto& r : regions)
        if (r.contains(p)) return true;
    return false;
}

}  // namespace fjsync::reference
