#pragma once

// Command-line front end: option wiring, JSON config files and the
// subcommand runners used by tools/fjsync.cpp.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fjsync/analytic.hpp"
#include "fjsync/ck_solver.hpp"
#include "fjsync/gof.hpp"
#include "fjsync/io.hpp"
#include "fjsync/network.hpp"
#include "fjsync/parallel.hpp"
#include "fjsync/reference.hpp"
#include "fjsync/simulation.hpp"

namespace fjsync::cli {

using nlohmann::json;

/// CLI11 config backend for JSON files. Top-level keys are global options,
/// nested objects are subcommand sections; a section also selects its
/// subcommand, so a file written by `--write-config` replays the same run.
class JsonConfig : public CLI::Config {
public:
    std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
        return to_json(app, default_also).dump(2) + "\n";
    }

    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        json j;
        try {
            j = json::parse(input);
        } catch (const json::parse_error& e) {
            throw CLI::ConversionError(std::string("invalid JSON config: ") + e.what());
        }
        if (!j.is_object()) throw CLI::ConversionError("JSON config must be an object");
        std::vector<CLI::ConfigItem> items;
        collect(j, {}, items);
        return items;
    }

private:
    static json scalar(const std::string& s) {
        if (s == "true") return true;
        if (s == "false") return false;
        double v = 0.0;
        const auto* end = s.data() + s.size();
        const auto res = std::from_chars(s.data(), end, v);
        if (!s.empty() && res.ec == std::errc() && res.ptr == end) return json::parse(s);
        return s;
    }

    static json to_json(const CLI::App* app, bool default_also) {
        json j = json::object();
        for (const CLI::Option* opt : app->get_options({})) {
            if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
            const std::string name = opt->get_lnames().front();
            if (opt->get_type_size() != 0) {
                if (opt->count() == 1 && opt->get_expected_max() <= 1) {
                    j[name] = scalar(opt->results().front());
                } else if (opt->count() >= 1) {
                    json arr = json::array();
                    for (const auto& r : opt->results()) arr.push_back(scalar(r));
                    j[name] = arr;
                } else if (default_also && !opt->get_default_str().empty()) {
                    j[name] = scalar(opt->get_default_str());
                }
            } else if (opt->count() > 0) {
                j[name] = true;
            } else if (default_also) {
                j[name] = false;
            }
        }
        for (const CLI::App* sub : app->get_subcommands({})) {
            if (sub->parsed()) j[sub->get_name()] = to_json(sub, default_also);
        }
        return j;
    }

    static std::string as_input(const json& v, const std::string& name) {
        if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
        if (v.is_number()) return v.dump();
        if (v.is_string()) return v.get<std::string>();
        throw CLI::ConversionError("unsupported value for " + name);
    }

    static void collect(const json& j, const std::vector<std::string>& parents,
                        std::vector<CLI::ConfigItem>& items) {
        for (const auto& [key, value] : j.items()) {
            if (value.is_object()) {
                auto path = parents;
                path.push_back(key);
                items.push_back({path, "++", {}});
                collect(value, path, items);
                items.push_back({path, "--", {}});
                continue;
            }
            CLI::ConfigItem item;
            item.parents = parents;
            item.name = key;
            if (value.is_array()) {
                for (const auto& v : value) item.inputs.push_back(as_input(v, key));
            } else {
                item.inputs.push_back(as_input(value, key));
            }
            items.push_back(std::move(item));
        }
    }
};

struct NetworkFlags {
    double lambda = 1.0;
    std::string n_a = "1";
    std::string n_b = "1";
    std::optional<double> mu_a, mu_b;
    std::optional<double> psi_a, psi_b;
    bool inf_servers = false;

    friend bool operator==(const NetworkFlags&, const NetworkFlags&) = default;

    NetworkParams resolve() const {
        const ServerCount na = inf_servers ? ServerCount::infinite() : ServerCount::parse(n_a);
        const ServerCount nb = inf_servers ? ServerCount::infinite() : ServerCount::parse(n_b);
        auto rate = [this](ServerCount n, const std::optional<double>& mu, const std::optional<double>& psi,
                           const char* which) {
            if (mu) return *mu;
            if (psi) {
                const double servers = n.is_infinite() ? 1.0 : static_cast<double>(n.count());
                return lambda / (servers * *psi);
            }
            throw std::invalid_argument(std::string("branch ") + which + " needs a service rate or a utilization");
        };
        NetworkParams p{lambda, {na, rate(na, mu_a, psi_a, "a")}, {nb, rate(nb, mu_b, psi_b, "b")}};
        p.validate();
        return p;
    }
};

struct AnalyticConfig {
    NetworkFlags net;
    std::string output;  // empty: stdout only

    friend bool operator==(const AnalyticConfig&, const AnalyticConfig&) = default;
};

struct SimulateConfig {
    NetworkFlags net;
    std::uint64_t n_jobs = 100'000;
    std::uint64_t seed = 0;
    double warmup = 0.0;
    bool trace = false;
    std::string prefix = "sim";

    friend bool operator==(const SimulateConfig&, const SimulateConfig&) = default;
};

struct CkConfig {
    double psi_a = 0.5;
    double psi_b = 0.5;
    std::size_t grid = 190;
    double d3 = 1e-11;
    double d12 = 1e-11;
    std::uint64_t max_iterations = 5'000'000;
    std::string prefix = "ck";

    friend bool operator==(const CkConfig&, const CkConfig&) = default;
};

struct Fig3Config {
    std::vector<double> psi_a = {0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45,
                                 0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9};
    std::vector<double> psi_b = {0.05, 0.35, 0.65, 0.9};
    std::size_t grid = 190;
    std::string prefix = "fig3";

    friend bool operator==(const Fig3Config&, const Fig3Config&) = default;
};

struct ValidateConfig {
    std::string table = "cells";  // cells | regions
    std::uint64_t seed = 0;       // seeds used: seed, seed+1, ...
    std::size_t seeds = 5;
    std::uint64_t n_jobs = 100'000;
    double warmup = 0.0;
    bool exact_critical = false;
    double lambda = 1.0;  // regions only
    std::vector<double> psi = {0.1, 0.2, 0.5, 0.75, 0.8};
    std::vector<std::uint32_t> servers = {1, 2, 3, 5, 6, 8};
    std::string pairs = "covered";  // covered | all
    std::string prefix = "validate";

    friend bool operator==(const ValidateConfig&, const ValidateConfig&) = default;
};

struct ExperimentConfig {
    std::string out_dir = ".";
    unsigned workers = default_workers();
    std::string write_config;
    AnalyticConfig analytic;
    SimulateConfig simulate;
    CkConfig ck;
    Fig3Config fig3;
    ValidateConfig validate;

    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

namespace detail {

inline void add_network_options(CLI::App* cmd, NetworkFlags& net) {
    cmd->add_option("--lambda", net.lambda, "arrival rate")->check(CLI::PositiveNumber);
    cmd->add_option("--na", net.n_a, "servers in branch a (integer or 'inf')");
    cmd->add_option("--nb", net.n_b, "servers in branch b (integer or 'inf')");
    auto* mua = cmd->add_option("--mua", net.mu_a, "service rate per server, branch a")->check(CLI::PositiveNumber);
    auto* mub = cmd->add_option("--mub", net.mu_b, "service rate per server, branch b")->check(CLI::PositiveNumber);
    cmd->add_option("--psia", net.psi_a, "utilization of branch a (instead of --mua)")
        ->check(CLI::Range(0.0, 1.0))
        ->excludes(mua);
    cmd->add_option("--psib", net.psi_b, "utilization of branch b (instead of --mub)")
        ->check(CLI::Range(0.0, 1.0))
        ->excludes(mub);
    cmd->add_flag("--inf-servers", net.inf_servers, "both branches are M/M/inf");
}

inline std::filesystem::path output_path(const ExperimentConfig& cfg, const std::string& name) {
    std::filesystem::path dir(cfg.out_dir);
    std::filesystem::create_directories(dir);
    return dir / name;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

inline void write_json(const std::filesystem::path& path, const json& j) {
    auto out = open_output(path);
    out << j.dump(2) << '\n';
}

inline std::vector<std::uint64_t> seed_list(const ValidateConfig& v) {
    if (v.seeds == 0) throw std::invalid_argument("need at least one seed");
    std::vector<std::uint64_t> s(v.seeds);
    for (std::size_t i = 0; i < v.seeds; ++i) s[i] = v.seed + i;
    return s;
}

inline gof::ChiSquareOptions chi_options(const ValidateConfig& v) {
    gof::ChiSquareOptions o;
    o.mode = v.exact_critical ? gof::CriticalMode::exact : gof::CriticalMode::tabulated;
    return o;
}

}  // namespace detail

inline std::string default_out_dir() {
    if (const char* env = std::getenv("FJSYNC_OUT_DIR"); env && *env) return env;
    return ".";
}

/// Registers every option on `app`; values land in `cfg` after parsing.
inline void configure(CLI::App& app, ExperimentConfig& cfg) {
    app.config_formatter(std::make_shared<JsonConfig>());
    app.set_config("--config", "", "read options from a JSON file (flags override)");
    app.option_defaults()->always_capture_default();

    cfg.out_dir = default_out_dir();
    app.add_option("--out-dir", cfg.out_dir, "output directory (default: $FJSYNC_OUT_DIR or .)");
    app.add_option("--workers", cfg.workers, "worker threads for sweeps")->check(CLI::PositiveNumber);
    app.add_option("--write-config", cfg.write_config, "write the effective configuration as JSON and continue")
        ->configurable(false);
    app.require_subcommand(1);
    app.fallthrough();  // global options may follow the subcommand name

    auto* analytic = app.add_subcommand("analytic", "closed-form synchronizer wait density and mean");
    analytic->configurable();
    detail::add_network_options(analytic, cfg.analytic.net);
    analytic->add_option("--output", cfg.analytic.output, "also write the JSON result to this file name");

    auto* simulate = app.add_subcommand("simulate", "discrete-event simulation of the fork-join network");
    simulate->configurable();
    detail::add_network_options(simulate, cfg.simulate.net);
    simulate->add_option("--jobs", cfg.simulate.n_jobs, "number of forked jobs")->check(CLI::PositiveNumber);
    simulate->add_option("--seed", cfg.simulate.seed, "random seed")->required();
    simulate->add_option("--warmup", cfg.simulate.warmup, "fraction of jobs discarded as warmup")
        ->check(CLI::Range(0.0, 0.99));
    simulate->add_flag("--trace", cfg.simulate.trace, "also write the synchronizer occupancy trace");
    simulate->add_option("--prefix", cfg.simulate.prefix, "output file prefix");

    auto* ck = app.add_subcommand("ck-solve", "stationary joint queue lengths of the {M/M/1; M/M/1} network");
    ck->configurable();
    ck->add_option("--psia", cfg.ck.psi_a, "utilization of branch a")->check(CLI::Range(0.0, 1.0));
    ck->add_option("--psib", cfg.ck.psi_b, "utilization of branch b")->check(CLI::Range(0.0, 1.0));
    ck->add_option("--grid", cfg.ck.grid, "truncation size per axis")->check(CLI::Range(10, 100000));
    ck->add_option("--d3", cfg.ck.d3, "stop threshold on the L1 change per iteration");
    ck->add_option("--d12", cfg.ck.d12, "stop threshold on the marginal deviations");
    ck->add_option("--max-iterations", cfg.ck.max_iterations, "iteration cap");
    ck->add_option("--prefix", cfg.ck.prefix, "output file prefix");

    auto* fig3 = app.add_subcommand("fig3", "sojourn-time correlation curves from the stationary solver");
    fig3->configurable();
    fig3->add_option("--psia-values", cfg.fig3.psi_a, "utilizations of branch a (x axis)")
        ->check(CLI::Range(0.0, 1.0));
    fig3->add_option("--psib-values", cfg.fig3.psi_b, "utilizations of branch b (one curve each)")
        ->check(CLI::Range(0.0, 1.0));
    fig3->add_option("--grid", cfg.fig3.grid, "truncation size per axis")->check(CLI::Range(10, 100000));
    fig3->add_option("--prefix", cfg.fig3.prefix, "output file prefix");

    auto* validate = app.add_subcommand("validate", "chi-square validation against the reference tables");
    validate->configurable();
    validate->add_option("--table", cfg.validate.table, "cells or regions")
        ->check(CLI::IsMember({"cells", "regions"}));
    validate->add_option("--seed", cfg.validate.seed, "first seed")->required();
    validate->add_option("--seeds", cfg.validate.seeds, "seeds per point (majority vote)")
        ->check(CLI::PositiveNumber);
    validate->add_option("--jobs", cfg.validate.n_jobs, "jobs per run")->check(CLI::PositiveNumber);
    validate->add_option("--warmup", cfg.validate.warmup, "fraction of jobs discarded as warmup")
        ->check(CLI::Range(0.0, 0.99));
    validate->add_flag("--exact-critical", cfg.validate.exact_critical,
                       "use the exact chi-square quantile instead of 49.6");
    validate->add_option("--lambda", cfg.validate.lambda, "arrival rate for the region grid")
        ->check(CLI::PositiveNumber);
    validate->add_option("--psi", cfg.validate.psi, "utilization grid for regions")->check(CLI::Range(0.0, 1.0));
    validate->add_option("--servers", cfg.validate.servers, "server-count grid for regions")
        ->check(CLI::PositiveNumber);
    validate->add_option("--pairs", cfg.validate.pairs, "covered: only (N_a, N_b) pairs a reference region covers")
        ->check(CLI::IsMember({"covered", "all"}));
    validate->add_option("--prefix", cfg.validate.prefix, "output file prefix");
}

inline int run_analytic(const ExperimentConfig& cfg, std::ostream& out) {
    const auto params = cfg.analytic.net.resolve();
    const auto summary = io::analytic_summary(params);
    out << summary.dump(2) << '\n';
    if (!cfg.analytic.output.empty()) detail::write_json(detail::output_path(cfg, cfg.analytic.output), summary);
    return 0;
}

inline int run_simulate(const ExperimentConfig& cfg, std::ostream& out) {
    const auto& s = cfg.simulate;
    const auto params = s.net.resolve();
    const auto result = sim::run_simulation(params, s.n_jobs, s.seed, s.warmup, s.trace);

    const auto samples_path = detail::output_path(cfg, s.prefix + "_samples.csv");
    {
        auto f = detail::open_output(samples_path);
        io::write_samples_csv(f, result);
    }
    auto summary = io::simulation_summary(result);
    detail::write_json(detail::output_path(cfg, s.prefix + "_summary.json"), summary);
    if (s.trace) {
        auto f = detail::open_output(detail::output_path(cfg, s.prefix + "_occupancy.csv"));
        f << "time,count\n";
        for (const auto& p : sim::occupancy_trace(result))
            f << io::format_number(p.time) << ',' << p.count << '\n';
    }
    out << "T_emp=" << io::format_number(result.t_mean_emp) << " (se "
        << io::format_number(result.t_mean_std_error) << "), T=" << summary["t_mean_analytic"].get<double>()
        << ", samples -> " << samples_path.string() << '\n';
    return 0;
}

inline int run_ck(const ExperimentConfig& cfg, std::ostream& out) {
    const auto& c = cfg.ck;
    ck::StopCriteria stop;
    stop.d3 = c.d3;
    stop.d12 = c.d12;
    stop.max_iterations = c.max_iterations;
    const auto res = ck::solve_stationary(ck::CkParams::from_utilization(c.psi_a, c.psi_b), c.grid, {}, stop);
    {
        auto f = detail::open_output(detail::output_path(cfg, c.prefix + "_grid.csv"));
        io::write_grid_csv(f, res.grid);
    }
    const auto summary = io::ck_summary(res);
    detail::write_json(detail::output_path(cfg, c.prefix + "_diagnostics.json"), summary);
    out << "iterations=" << res.diag.iterations << " stop=" << ck::to_string(res.diag.stop_reason)
        << " D1=" << io::format_number(res.diag.d1) << " D2=" << io::format_number(res.diag.d2)
        << " D3=" << io::format_number(res.diag.d3) << " R=" << io::format_number(summary["correlation"].get<double>())
        << '\n';
    return 0;
}

inline int run_fig3(const ExperimentConfig& cfg, std::ostream& out) {
    const auto& f3 = cfg.fig3;
    const auto pts = ck::correlation_curves(f3.psi_a, f3.psi_b, f3.grid, cfg.workers);
    {
        auto f = detail::open_output(detail::output_path(cfg, f3.prefix + ".csv"));
        io::write_correlation_csv(f, pts);
    }
    json points = json::array();
    for (const auto& p : pts)
        points.push_back({{"psi_a", p.psi_a}, {"psi_b", p.psi_b}, {"R", p.r}, {"diagnostics", io::to_json(p.diag)}});
    detail::write_json(detail::output_path(cfg, f3.prefix + ".json"),
                       {{"grid_size", f3.grid}, {"psi_a", f3.psi_a}, {"psi_b", f3.psi_b}, {"points", points}});
    out << pts.size() << " points -> " << (std::filesystem::path(cfg.out_dir) / (f3.prefix + ".csv")).string()
        << '\n';
    return 0;
}

// Published deviations within 5 points when >= 5%, else within 2 points.
inline bool delta_within_tolerance(double reference_percent, double ours_percent) {
    const double tol = reference_percent >= 5.0 ? 5.0 : 2.0;
    return std::abs(ours_percent - reference_percent) <= tol;
}

inline std::vector<gof::RegionPoint> region_grid(const ValidateConfig& v, const std::vector<reference::Region>& regions) {
    auto psi = v.psi;
    auto servers = v.servers;
    std::sort(psi.begin(), psi.end());
    std::sort(servers.begin(), servers.end());
    std::vector<gof::RegionPoint> pts;
    for (auto na : servers) {
        for (auto nb : servers) {
            const bool covered = std::any_of(regions.begin(), regions.end(), [&](const reference::Region& r) {
                return r.n_a.contains(ServerCount(na)) && r.n_b.contains(ServerCount(nb));
            });
            if (v.pairs == "covered" && !covered) continue;
            for (double pa : psi)
                for (double pb : psi) pts.push_back({ServerCount(na), ServerCount(nb), pa, pb});
        }
    }
    return pts;
}

inline int run_validate(const ExperimentConfig& cfg, std::ostream& out) {
    const auto& v = cfg.validate;
    const auto seeds = detail::seed_list(v);
    const auto options = detail::chi_options(v);
    json echo{{"table", v.table}, {"seeds", seeds}, {"n_jobs", v.n_jobs}, {"warmup_fraction", v.warmup},
              {"critical_mode", v.exact_critical ? "exact" : "tabulated"}};

    std::vector<gof::RegionRow> rows;
    json diff = json::array();
    std::size_t matches = 0;

    if (v.table == "cells") {
        const auto cells = reference::load_cells();
        // Cells carry their own lambda; run them one lambda group at a time.
        rows.resize(cells.size());
        for (std::size_t i = 0; i < cells.size(); ++i) {
            const gof::RegionPoint pt = cells[i].point;
            auto one = gof::validity_region_scan(std::span(&pt, 1), cells[i].lambda, v.n_jobs, seeds, cfg.workers,
                                                 options);
            rows[i] = std::move(one.front());
        }
        for (std::size_t i = 0; i < cells.size(); ++i) {
            const auto& c = cells[i];
            const auto& r = rows[i];
            const double ours_pct = 100.0 * r.mean_delta_t_rel();
            const bool verdict_match = r.accepted == c.accepted;
            const bool delta_ok = delta_within_tolerance(c.delta_t_rel_percent, ours_pct);
            matches += verdict_match ? 1 : 0;
            diff.push_back({{"lambda", c.lambda},
                            {"params", io::to_json(r.params)},
                            {"reference", {{"chi2", c.chi2}, {"accepted", c.accepted},
                                           {"delta_t_rel_percent", c.delta_t_rel_percent}}},
                            {"chi2", r.chi2},
                            {"accept_count", r.accept_count},
                            {"accepted", r.accepted},
                            {"delta_t_rel_percent", ours_pct},
                            {"verdict_match", verdict_match},
                            {"delta_within_tolerance", delta_ok}});
        }
    } else {
        const auto regions = reference::load_regions();
        const auto pts = region_grid(v, regions);
        echo["lambda"] = v.lambda;
        echo["psi"] = v.psi;
        echo["servers"] = v.servers;
        echo["pairs"] = v.pairs;
        rows = gof::validity_region_scan(pts, v.lambda, v.n_jobs, seeds, cfg.workers, options);
        for (const auto& r : rows) {
            const bool expected = reference::expected_accept(regions, r.point);
            const bool match = expected == r.accepted;
            matches += match ? 1 : 0;
            diff.push_back({{"n_a", r.point.n_a.to_string()}, {"n_b", r.point.n_b.to_string()},
                            {"psi_a", r.point.psi_a}, {"psi_b", r.point.psi_b},
                            {"chi2", r.chi2}, {"accept_count", r.accept_count},
                            {"accepted", r.accepted}, {"expected", expected}, {"match", match}});
        }
    }

    const std::string stem = v.prefix + "_" + v.table;
    {
        auto f = detail::open_output(detail::output_path(cfg, stem + ".csv"));
        io::write_region_csv(f, rows);
    }
    echo["matches"] = matches;
    echo["points"] = rows.size();
    echo["rows"] = diff;
    detail::write_json(detail::output_path(cfg, stem + ".json"), echo);
    out << v.table << ": " << matches << "/" << rows.size() << " verdicts match the reference\n";
    return 0;
}

/// Runs whichever subcommand `app` parsed. Returns the process exit code.
inline int dispatch(const CLI::App& app, const ExperimentConfig& cfg, std::ostream& out) {
    if (!cfg.write_config.empty()) {
        auto f = detail::open_output(cfg.write_config);
        f << app.config_to_str(false, true);
    }
    if (app.got_subcommand("analytic")) return run_analytic(cfg, out);
    if (app.got_subcommand("simulate")) return run_simulate(cfg, out);
    if (app.got_subcommand("ck-solve")) return run_ck(cfg, out);
    if (app.got_subcommand("fig3")) return run_fig3(cfg, out);
    if (app.got_subcommand("validate")) return run_validate(cfg, out);
    throw std::logic_error("no subcommand selected");
}

}  // namespace fjsync::cli
