#pragma once

// CSV and JSON emission. Numbers go through std::to_chars (shortest
// round-trip form), so output is locale-independent and byte-stable.

#include <charconv>
#include <cmath>
#include <ostream>
#include <span>
#include <string>
#include <system_error>

#include <json.hpp>

#include "fjsync/analytic.hpp"
#include "fjsync/ck_solver.hpp"
#include "fjsync/gof.hpp"
#include "fjsync/network.hpp"
#include "fjsync/simulation.hpp"

namespace fjsync::io {

using nlohmann::json;

inline std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    if (res.ec != std::errc()) throw std::runtime_error("number formatting failed");
    return std::string(buf, res.ptr);
}

inline std::string format_number(std::uint64_t v) { return std::to_string(v); }

// --- parameters -----------------------------------------------------------

inline json to_json(const ServerCount& n) {
    if (n.is_infinite()) return "inf";
    return n.count();
}

inline ServerCount server_count_from_json(const json& j) {
    if (j.is_string()) return ServerCount::parse(j.get<std::string>());
    return ServerCount(j.get<std::uint32_t>());
}

inline json to_json(const NetworkParams& p) {
    return json{{"lambda", p.lambda},
                {"n_a", to_json(p.a.servers)},
                {"mu_a", p.a.mu},
                {"n_b", to_json(p.b.servers)},
                {"mu_b", p.b.mu},
                {"psi_a", p.psi_a()},
                {"psi_b", p.psi_b()}};
}

inline NetworkParams params_from_json(const json& j) {
    NetworkParams p;
    p.lambda = j.at("lambda").get<double>();
    p.a = {server_count_from_json(j.at("n_a")), j.at("mu_a").get<double>()};
    p.b = {server_count_from_json(j.at("n_b")), j.at("mu_b").get<double>()};
    p.validate();
    return p;
}

// --- analytic ---------------------------------------------------------------

inline json analytic_summary(const NetworkParams& p) {
    const auto f = analytic::waiting_time_density(p);
    const double mean = analytic::mixture_mean(f);
    json mixture;
    fjsync::to_json(mixture, f);
    return json{{"params", to_json(p)},
                {"mixture", mixture},
                {"mean_wait", mean},
                {"occupancy", analytic::little_occupancy(p.lambda, mean)}};
}

// --- simulation -------------------------------------------------------------

inline void write_samples_csv(std::ostream& os, const sim::SimResult& r) {
    os << "id,t_a,t_b,t_sync,first_branch\n";
    for (const auto& s : r.samples) {
        os << s.id << ',' << format_number(s.t_a) << ',' << format_number(s.t_b) << ','
           << format_number(s.t_sync) << ',' << to_char(s.first_branch) << '\n';
    }
}

inline json simulation_summary(const sim::SimResult& r) {
    const double t_mean = analytic::mean_wait(r.params);
    return json{{"params", to_json(r.params)},
                {"seed", r.seed},
                {"n_jobs", r.n_jobs},
                {"warmup_fraction", r.warmup_fraction},
                {"warmup_jobs", r.warmup_jobs},
                {"samples", r.samples.size()},
                {"t_mean_emp", r.t_mean_emp},
                {"t_mean_emp_std_error", r.t_mean_std_error},
                {"t_mean_analytic", t_mean},
                {"delta_t_rel", (t_mean - r.t_mean_emp) / t_mean},
                {"sync_occupancy_mean", r.sync_occupancy_mean},
                {"little_occupancy", analytic::little_occupancy(r.params.lambda, r.t_mean_emp)},
                {"max_memory", r.max_memory},
                {"window_start", r.window_start},
                {"window_end", r.window_end}};
}

// --- ck -----------------------------------------------------------------------

inline void write_grid_csv(std::ostream& os, const ck::JointGrid& g) {
    const std::size_t n = g.size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (j) os << ',';
            os << format_number(g(i, j));
        }
        os << '\n';
    }
}

inline json to_json(const ck::CkParams& p) {
    return json{{"lambda", p.lambda}, {"mu_a", p.mu_a}, {"mu_b", p.mu_b},
                {"psi_a", p.psi_a()}, {"psi_b", p.psi_b()}};
}

inline json to_json(const ck::ConvergenceDiag& d) {
    json phases = json::array();
    for (const auto& ph : d.gamma_history)
        phases.push_back({{"start_iteration", ph.start_iteration}, {"gamma", ph.gamma}});
    return json{{"d1", d.d1},
                {"d2", d.d2},
                {"d3", d.d3},
                {"iterations", d.iterations},
                {"converged", d.converged},
                {"stop_reason", ck::to_string(d.stop_reason)},
                {"boundary_mass", d.boundary_mass},
                {"truncation_warning", d.truncation_warning},
                {"gamma_history", phases}};
}

inline json ck_summary(const ck::SolveResult& r) {
    return json{{"params", to_json(r.grid.params())},
                {"grid_size", r.grid.size()},
                {"diagnostics", to_json(r.diag)},
                {"residual", ck::ck_residual(r.grid)},
                {"correlation", ck::sojourn_correlation(r.grid)}};
}

inline void write_correlation_csv(std::ostream& os, std::span<const ck::CorrelationPoint> pts) {
    os << "psi_a,psi_b,R\n";
    for (const auto& p : pts)
        os << format_number(p.psi_a) << ',' << format_number(p.psi_b) << ',' << format_number(p.r) << '\n';
}

// --- gof ----------------------------------------------------------------------

inline json to_json(const gof::GofReport& r) {
    json j{{"chi2", r.chi2},        {"bins", r.bins},         {"critical", r.critical},
           {"alpha", r.alpha},      {"accepted", r.accepted}, {"sample_count", r.sample_count}};
    if (r.params) j["params"] = to_json(*r.params);
    if (r.seed) j["seed"] = *r.seed;
    if (r.n_jobs) j["n_jobs"] = *r.n_jobs;
    if (r.t_mean) j["t_mean"] = *r.t_mean;
    if (r.t_mean_emp) j["t_mean_emp"] = *r.t_mean_emp;
    if (r.t_mean_emp_std_error) j["t_mean_emp_std_error"] = *r.t_mean_emp_std_error;
    if (r.delta_t_rel) j["delta_t_rel"] = *r.delta_t_rel;
    if (r.occupancy_mean) j["occupancy_mean"] = *r.occupancy_mean;
    return j;
}

inline void write_region_csv(std::ostream& os, std::span<const gof::RegionRow> rows) {
    os << "n_a,n_b,psi_a,psi_b,chi2,accepted,delta_t_rel\n";
    for (const auto& r : rows) {
        os << r.point.n_a.to_string() << ',' << r.point.n_b.to_string() << ','
           << format_number(r.point.psi_a) << ',' << format_number(r.point.psi_b) << ','
           << format_number(r.median_chi2()) << ',' << (r.accepted ? 1 : 0) << ','
           << format_number(r.mean_delta_t_rel()) << '\n';
    }
}

}  // namespace fjsync::io
