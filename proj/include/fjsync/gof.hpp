#pragma once

// Pearson chi-square test of simulated synchronizer waits against the
// analytic hyperexponential density.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "fjsync/analytic.hpp"
#include "fjsync/network.hpp"
#include "fjsync/parallel.hpp"
#include "fjsync/simulation.hpp"

namespace fjsync::gof {

// Upper 1% point of chi-square with 29 degrees of freedom, as tabulated.
inline constexpr double critical_30_bins_alpha_001 = 49.6;

enum class CriticalMode : std::uint8_t { tabulated, exact };

struct ChiSquareOptions {
    std::size_t bins = 30;
    double alpha = 0.01;
    // `tabulated` uses 49.6 for (30 bins, alpha 0.01) and falls back to the
    // exact quantile for any other combination.
    CriticalMode mode = CriticalMode::tabulated;
};

struct GofReport {
    double chi2 = 0.0;
    std::vector<std::uint64_t> bins;
    double critical = 0.0;
    double alpha = 0.01;
    bool accepted = false;
    std::uint64_t sample_count = 0;

    // Filled in by hypothesis1_verdict.
    std::optional<NetworkParams> params;
    std::optional<std::uint64_t> seed;
    std::optional<std::uint64_t> n_jobs;
    std::optional<double> t_mean;
    std::optional<double> t_mean_emp;
    std::optional<double> t_mean_emp_std_error;  // batch means
    std::optional<double> delta_t_rel;  // (T - T_emp) / T
    std::optional<double> occupancy_mean;
};

inline double critical_value(std::size_t bins, double alpha, CriticalMode mode) {
    if (bins < 2) throw std::domain_error("chi-square test needs at least 2 bins");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::domain_error("alpha must lie in (0, 1)");
    if (mode == CriticalMode::tabulated && bins == 30 && alpha == 0.01) return critical_30_bins_alpha_001;
    const boost::math::chi_squared dist(static_cast<double>(bins - 1));
    return boost::math::quantile(boost::math::complement(dist, alpha));
}

// Interior edges of `bins` equal-probability cells of the hypothesis.
inline std::vector<double> equal_probability_edges(const ExpMixture& hypothesis, std::size_t bins) {
    std::vector<double> edges;
    edges.reserve(bins - 1);
    for (std::size_t k = 1; k < bins; ++k)
        edges.push_back(analytic::mixture_quantile(
            hypothesis, static_cast<double>(k) / static_cast<double>(bins)));
    return edges;
}

/// Counts the samples in equal-probability bins of the hypothesis and forms
/// sum (O_k - E)^2 / E with E = n / bins.
inline GofReport chi_square_test(std::span<const double> samples, const ExpMixture& hypothesis,
                                 const ChiSquareOptions& options = {}) {
    if (!hypothesis.is_one_sided()) throw std::invalid_argument("hypothesis must be one-sided");
    if (options.bins < 2) throw std::domain_error("chi-square test needs at least 2 bins");
    if (samples.size() < 10 * options.bins)
        throw std::domain_error("chi-square test needs at least 10 samples per bin");

    GofReport report;
    report.alpha = options.alpha;
    report.critical = critical_value(options.bins, options.alpha, options.mode);
    report.sample_count = samples.size();
    report.bins.assign(options.bins, 0);

    const auto edges = equal_probability_edges(hypothesis, options.bins);
    for (double x : samples) {
        if (!(x >= 0.0)) throw std::domain_error("chi-square samples must be non-negative");
        const auto k = static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), x) - edges.begin());
        ++report.bins[k];
    }

    const double expected = static_cast<double>(samples.size()) / static_cast<double>(options.bins);
    double chi2 = 0.0;
    for (auto observed : report.bins) {
        const double d = static_cast<double>(observed) - expected;
        chi2 += d * d / expected;
    }
    report.chi2 = chi2;
    report.accepted = chi2 <= report.critical;
    return report;
}

/// Simulates the network and tests the observed synchronizer waits against
/// the analytic density built under the branch-independence approximation.
inline GofReport hypothesis1_verdict(const NetworkParams& params, std::uint64_t n_jobs,
                                     std::uint64_t seed, double warmup_fraction = 0.0,
                                     const ChiSquareOptions& options = {}) {
    params.validate();
    const auto density = analytic::waiting_time_density(params);
    const double t_mean = analytic::mixture_mean(density);
    const auto run = sim::run_simulation(params, n_jobs, seed, warmup_fraction, false);
    const auto w = sim::waits(run);

    auto report = chi_square_test(w, density, options);
    report.params = params;
    report.seed = seed;
    report.n_jobs = n_jobs;
    report.t_mean = t_mean;
    report.t_mean_emp = run.t_mean_emp;
    report.t_mean_emp_std_error = run.t_mean_std_error;
    report.delta_t_rel = (t_mean - run.t_mean_emp) / t_mean;
    report.occupancy_mean = run.sync_occupancy_mean;
    return report;
}

struct RegionPoint {
    ServerCount n_a{1};
    ServerCount n_b{1};
    double psi_a = 0.5;
    double psi_b = 0.5;

    friend bool operator==(const RegionPoint&, const RegionPoint&) = default;
};

struct RegionRow {
    RegionPoint point;
    NetworkParams params;
    std::vector<double> chi2;  // one per seed
    std::vector<double> delta_t_rel;
    std::size_t accept_count = 0;
    bool accepted = false;  // majority over seeds

    double median_chi2() const {
        auto v = chi2;
        std::sort(v.begin(), v.end());
        return v.empty() ? 0.0 : v[v.size() / 2];
    }

    double mean_delta_t_rel() const {
        double s = 0.0;
        for (double d : delta_t_rel) s += d;
        return delta_t_rel.empty() ? 0.0 : s / static_cast<double>(delta_t_rel.size());
    }
};

// mu_i = lambda / (N_i psi_i). Infinite branches take mu from psi as if N = 1.
inline NetworkParams network_for(const RegionPoint& pt, double lambda) {
    auto branch = [lambda](ServerCount n, double psi) {
        if (!(psi > 0.0)) throw std::domain_error("region point utilization must be positive");
        const double servers = n.is_infinite() ? 1.0 : static_cast<double>(n.count());
        return BranchParams{n, lambda / (servers * psi)};
    };
    NetworkParams p{lambda, branch(pt.n_a, pt.psi_a), branch(pt.n_b, pt.psi_b)};
    p.validate();
    return p;
}

/// Accept/reject table over a grid of network shapes, each point decided by
/// majority vote over the given seeds. Rows come back in input order.
inline std::vector<RegionRow> validity_region_scan(std::span<const RegionPoint> points, double lambda,
                                                   std::uint64_t n_jobs,
                                                   std::span<const std::uint64_t> seeds,
                                                   unsigned workers = default_workers(),
                                                   const ChiSquareOptions& options = {}) {
    if (seeds.empty()) throw std::domain_error("validity_region_scan needs at least one seed");
    std::vector<RegionRow> rows(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        rows[i].point = points[i];
        rows[i].params = network_for(points[i], lambda);
        rows[i].chi2.resize(seeds.size());
        rows[i].delta_t_rel.resize(seeds.size());
    }

    std::vector<char> accepted(points.size() * seeds.size(), 0);
    parallel_for(points.size() * seeds.size(), workers, [&](std::size_t task) {
        const std::size_t i = task / seeds.size();
        const std::size_t s = task % seeds.size();
        const auto report = hypothesis1_verdict(rows[i].params, n_jobs, seeds[s], 0.0, options);
        rows[i].chi2[s] = report.chi2;
        rows[i].delta_t_rel[s] = *report.delta_t_rel;
        accepted[task] = report.accepted ? 1 : 0;
    });

    for (std::size_t i = 0; i < points.size(); ++i) {
        for (std::size_t s = 0; s < seeds.size(); ++s) rows[i].accept_count += accepted[i * seeds.size() + s];
        rows[i].accepted = 2 * rows[i].accept_count > seeds.size();
    }
    return rows;
}

}  // namespace fjsync::gof
