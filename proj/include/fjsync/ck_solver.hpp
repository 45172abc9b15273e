#pragma once

// Stationary joint queue-length distribution P(q_a, q_b) of the
// {M/M/1; M/M/1} fork-join network by relaxed fixed-point iteration of the
// global balance equations on a truncated n x n grid.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <span>
#include <vector>

#include "fjsync/parallel.hpp"

namespace fjsync::ck {

struct CkParams {
    double lambda = 1.0;
    double mu_a = 2.0;
    double mu_b = 2.0;

    double psi_a() const noexcept { return lambda / mu_a; }
    double psi_b() const noexcept { return lambda / mu_b; }

    void validate() const {
        if (!(lambda > 0.0) || !(mu_a > 0.0) || !(mu_b > 0.0) || !std::isfinite(lambda) ||
            !std::isfinite(mu_a) || !std::isfinite(mu_b))
            throw std::domain_error("ck: rates must be positive and finite");
        if (!(psi_a() < 1.0) || !(psi_b() < 1.0))
            throw std::domain_error("ck: unstable network (psi >= 1)");
    }

    static CkParams from_utilization(double psi_a, double psi_b, double lambda) {
        if (!(psi_a > 0.0) || !(psi_b > 0.0))
            throw std::domain_error("ck: utilizations must be positive");
        CkParams p{lambda, lambda / psi_a, lambda / psi_b};
        p.validate();
        return p;
    }

    // Time unit chosen so that lambda + mu_a + mu_b = 1.
    static CkParams from_utilization(double psi_a, double psi_b) {
        if (!(psi_a > 0.0) || !(psi_b > 0.0))
            throw std::domain_error("ck: utilizations must be positive");
        return from_utilization(psi_a, psi_b, 1.0 / (1.0 + 1.0 / psi_a + 1.0 / psi_b));
    }
};

/// Row-major n x n matrix of P(q_a, q_b); q_a indexes rows.
class JointGrid {
public:
    JointGrid() = default;
    JointGrid(std::size_t n, CkParams params) : n_(n), params_(params), p_(n * n, 0.0) {}

    std::size_t size() const noexcept { return n_; }
    const CkParams& params() const noexcept { return params_; }

    double operator()(std::size_t qa, std::size_t qb) const noexcept { return p_[qa * n_ + qb]; }
    double& operator()(std::size_t qa, std::size_t qb) noexcept { return p_[qa * n_ + qb]; }

    // Zero outside the grid.
    double at_or_zero(long qa, long qb) const noexcept {
        if (qa < 0 || qb < 0 || qa >= static_cast<long>(n_) || qb >= static_cast<long>(n_))
            return 0.0;
        return p_[static_cast<std::size_t>(qa) * n_ + static_cast<std::size_t>(qb)];
    }

    std::vector<double>& data() noexcept { return p_; }
    const std::vector<double>& data() const noexcept { return p_; }

    double sum() const noexcept {
        double s = 0.0;
        for (double v : p_) s += v;
        return s;
    }

    void normalize() {
        const double s = sum();
        if (!(s > 0.0) || !std::isfinite(s)) throw std::domain_error("ck: grid has no mass");
        const double inv = 1.0 / s;
        for (double& v : p_) v *= inv;
    }

    std::vector<double> marginal_a() const {
        std::vector<double> m(n_, 0.0);
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < n_; ++j) m[i] += (*this)(i, j);
        return m;
    }

    std::vector<double> marginal_b() const {
        std::vector<double> m(n_, 0.0);
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < n_; ++j) m[j] += (*this)(i, j);
        return m;
    }

    // Mass on the last row and column: a proxy for truncation error.
    double boundary_mass() const noexcept {
        if (n_ == 0) return 0.0;
        double s = 0.0;
        for (std::size_t k = 0; k < n_; ++k) s += (*this)(n_ - 1, k) + (*this)(k, n_ - 1);
        return s - (*this)(n_ - 1, n_ - 1);
    }

private:
    std::size_t n_ = 0;
    CkParams params_;
    std::vector<double> p_;
};

/// Independent-queues product form (1-psi_a) psi_a^qa (1-psi_b) psi_b^qb.
inline JointGrid product_form(const CkParams& params, std::size_t n) {
    params.validate();
    JointGrid g(n, params);
    const double pa = params.psi_a();
    const double pb = params.psi_b();
    double row = 1.0 - pa;
    for (std::size_t i = 0; i < n; ++i, row *= pa) {
        double cell = row * (1.0 - pb);
        for (std::size_t j = 0; j < n; ++j, cell *= pb) g(i, j) = cell;
    }
    return g;
}

/// Largest |outflow - inflow| over states whose balance equation only
/// references grid cells (q_a, q_b <= n-2).
inline double ck_residual(const JointGrid& g) {
    const auto& prm = g.params();
    prm.validate();
    const std::size_t n = g.size();
    if (n < 2) throw std::domain_error("ck_residual: grid too small");
    const double lam = prm.lambda, ma = prm.mu_a, mb = prm.mu_b;
    double worst = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        for (std::size_t j = 0; j + 1 < n; ++j) {
            double out = lam;
            double in = ma * g(i + 1, j) + mb * g(i, j + 1);
            if (i > 0) out += ma;
            if (j > 0) out += mb;
            if (i > 0 && j > 0) in += lam * g(i - 1, j - 1);
            worst = std::max(worst, std::abs(out * g(i, j) - in));
        }
    }
    return worst;
}

struct GammaSchedule {
    double fast_gamma = 1.0;
    double damped_gamma = 0.1;
    std::uint64_t damped_iterations = 1000;
    // The fast phase ends once D3 improved by less than this relative
    // amount over the last `stall_window` iterations.
    std::uint64_t stall_window = 100;
    double stall_rel_improvement = 1e-12;
};

struct StopCriteria {
    double d3 = 1e-11;
    // Upper bound on D1 and D2; infinity stops on D3 alone.
    double d12 = 1e-11;
    std::uint64_t max_iterations = 5'000'000;
    // Once D3 is below its threshold, give up on D1/D2 if their maximum has
    // not dropped by `floor_rel_improvement` within `floor_window` iterations
    // (truncation keeps them from reaching d12). Zero disables the check.
    std::uint64_t floor_window = 1000;
    double floor_rel_improvement = 0.01;
};

enum class StopReason : std::uint8_t { thresholds_met, marginal_floor, iteration_cap };

inline const char* to_string(StopReason r) noexcept {
    switch (r) {
    case StopReason::thresholds_met: return "thresholds_met";
    case StopReason::marginal_floor: return "marginal_floor";
    case StopReason::iteration_cap: return "iteration_cap";
    }
    return "unknown";
}

struct GammaPhase {
    std::uint64_t start_iteration = 0;
    double gamma = 1.0;
};

struct ConvergenceDiag {
    double d1 = 0.0;
    double d2 = 0.0;
    double d3 = 0.0;
    std::uint64_t iterations = 0;
    std::vector<GammaPhase> gamma_history;
    bool converged = false;
    StopReason stop_reason = StopReason::iteration_cap;
    double boundary_mass = 0.0;
    bool truncation_warning = false;  // boundary mass >= 1e-6
};

struct IterationInfo {
    std::uint64_t iteration = 0;
    double gamma = 1.0;
    double d1 = 0.0;
    double d2 = 0.0;
    double d3 = 0.0;
    double max_abs_delta = 0.0;
    double sum_before_normalization = 1.0;
};

struct SolveResult {
    JointGrid grid;
    ConvergenceDiag diag;
};

namespace detail {

// One relaxed sweep from `cur` into `next` (unnormalized).
inline void sweep(const JointGrid& cur, JointGrid& next, double gamma) {
    const auto& prm = cur.params();
    const std::size_t n = cur.size();
    const double lam = prm.lambda, ma = prm.mu_a, mb = prm.mu_b;
    const double keep = 1.0 - gamma;
    const double* P = cur.data().data();
    double* Q = next.data().data();

    const double inv_corner = gamma / lam;
    const double inv_edge_a0 = gamma / (lam + mb);  // q_a = 0, q_b > 0
    const double inv_edge_b0 = gamma / (lam + ma);  // q_a > 0, q_b = 0
    const double inv_inner = gamma / (lam + ma + mb);

    for (std::size_t i = 0; i < n; ++i) {
        const double* row = P + i * n;
        const double* below = i + 1 < n ? P + (i + 1) * n : nullptr;  // q_a + 1
        const double* above = i > 0 ? P + (i - 1) * n : nullptr;      // q_a - 1
        double* out = Q + i * n;

        // q_b = 0
        {
            const double from_a = below ? ma * below[0] : 0.0;
            const double from_b = n > 1 ? mb * row[1] : 0.0;
            out[0] = keep * row[0] + (i == 0 ? inv_corner : inv_edge_b0) * (from_a + from_b);
        }
        const std::size_t last = n - 1;
        if (i == 0) {
            for (std::size_t j = 1; j < last; ++j)
                out[j] = keep * row[j] + inv_edge_a0 * (ma * below[j] + mb * row[j + 1]);
            if (last > 0)
                out[last] = keep * row[last] + inv_edge_a0 * ((below ? ma * below[last] : 0.0));
        } else if (below) {
            for (std::size_t j = 1; j < last; ++j)
                out[j] = keep * row[j] +
                         inv_inner * (lam * above[j - 1] + ma * below[j] + mb * row[j + 1]);
            out[last] = keep * row[last] + inv_inner * (lam * above[last - 1] + ma * below[last]);
        } else {
            for (std::size_t j = 1; j < last; ++j)
                out[j] = keep * row[j] + inv_inner * (lam * above[j - 1] + mb * row[j + 1]);
            out[last] = keep * row[last] + inv_inner * (lam * above[last - 1]);
        }
    }
}

inline double marginal_deviation(const std::vector<double>& marginal, double psi) {
    double d = 0.0;
    double target = 1.0 - psi;
    for (double m : marginal) {
        d += std::abs(target - m);
        target *= psi;
    }
    return d;
}

}  // namespace detail

using IterationObserver = std::function<void(const IterationInfo&)>;

/// Relaxed fixed-point iteration of the balance equations.
///
/// Starts from the product form, applies
///   P' = (1 - gamma) P + gamma * inflow(P) / outflow_rate
/// cell by cell, and renormalizes after every sweep. gamma alternates
/// between a fast phase (gamma = 1) that runs until D3 stops decreasing and
/// a fixed-length damped phase (gamma = 0.1). Stops when D1, D2 and D3 are
/// all below threshold; otherwise returns the last grid with
/// `converged == false` and the reason (marginal floor or iteration cap).
inline SolveResult solve_stationary(const CkParams& params, std::size_t n = 190,
                                   const GammaSchedule& schedule = {},
                                   const StopCriteria& stop = {},
                                   const IterationObserver& observer = {}) {
    params.validate();
    if (n < 10) throw std::domain_error("solve_stationary: grid size must be >= 10");

    JointGrid cur = product_form(params, n);
    JointGrid next(n, params);
    ConvergenceDiag diag;

    enum class Phase { fast, damped } phase = Phase::fast;
    double gamma = schedule.fast_gamma;
    std::uint64_t phase_start = 0;
    diag.gamma_history.push_back({0, gamma});

    std::vector<double> d3_history(schedule.stall_window + 1, 0.0);
    std::uint64_t fast_count = 0;
    std::uint64_t floor_start = 0;
    double floor_ref = 0.0;

    for (std::uint64_t it = 1; it <= stop.max_iterations; ++it) {
        detail::sweep(cur, next, gamma);
        const double total = next.sum();
        if (!(total > 0.0) || !std::isfinite(total)) throw std::domain_error("ck: iteration lost all mass");
        const double inv = 1.0 / total;

        double d3 = 0.0, max_delta = 0.0;
        auto& nd = next.data();
        const auto& cd = cur.data();
        for (std::size_t k = 0; k < nd.size(); ++k) {
            nd[k] *= inv;
            const double delta = std::abs(nd[k] - cd[k]);
            d3 += delta;
            max_delta = std::max(max_delta, delta);
        }
        std::swap(cur, next);

        diag.iterations = it;
        diag.d3 = d3;
        const bool check_marginals = d3 < stop.d3 || observer || it == stop.max_iterations;
        if (check_marginals) {
            diag.d1 = detail::marginal_deviation(cur.marginal_a(), params.psi_a());
            diag.d2 = detail::marginal_deviation(cur.marginal_b(), params.psi_b());
        }
        if (observer) observer({it, gamma, diag.d1, diag.d2, d3, max_delta, total});

        if (d3 < stop.d3) {
            const double d12 = std::max(diag.d1, diag.d2);
            if (d12 < stop.d12) {
                diag.converged = true;
                diag.stop_reason = StopReason::thresholds_met;
                break;
            }
            if (floor_start == 0 || d12 < floor_ref * (1.0 - stop.floor_rel_improvement)) {
                floor_start = it;
                floor_ref = d12;
            } else if (stop.floor_window > 0 && it - floor_start >= stop.floor_window) {
                diag.stop_reason = StopReason::marginal_floor;
                break;
            }
        }

        if (phase == Phase::fast) {
            d3_history[fast_count % d3_history.size()] = d3;
            ++fast_count;
            if (fast_count > schedule.stall_window) {
                const double old = d3_history[(fast_count - 1 - schedule.stall_window) % d3_history.size()];
                if (d3 > old * (1.0 - schedule.stall_rel_improvement)) {
                    phase = Phase::damped;
                    gamma = schedule.damped_gamma;
                    phase_start = it;
                    diag.gamma_history.push_back({it, gamma});
                }
            }
        } else if (it - phase_start >= schedule.damped_iterations) {
            phase = Phase::fast;
            gamma = schedule.fast_gamma;
            fast_count = 0;
            diag.gamma_history.push_back({it, gamma});
        }
    }

    diag.boundary_mass = cur.boundary_mass();
    diag.truncation_warning = diag.boundary_mass >= 1e-6;
    return {std::move(cur), std::move(diag)};
}

struct QueueMoments {
    double mean_a = 0.0, mean_b = 0.0;
    double var_a = 0.0, var_b = 0.0;
    double cov = 0.0;
};

inline QueueMoments queue_moments(const JointGrid& g) {
    const std::size_t n = g.size();
    double s = 0.0, ea = 0.0, eb = 0.0, eaa = 0.0, ebb = 0.0, eab = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double qa = static_cast<double>(i);
        for (std::size_t j = 0; j < n; ++j) {
            const double p = g(i, j);
            const double qb = static_cast<double>(j);
            s += p;
            ea += qa * p;
            eb += qb * p;
            eaa += qa * qa * p;
            ebb += qb * qb * p;
            eab += qa * qb * p;
        }
    }
    if (!(s > 0.0) || !std::isfinite(s)) throw std::domain_error("queue_moments: grid has no mass");
    ea /= s, eb /= s, eaa /= s, ebb /= s, eab /= s;
    return {ea, eb, eaa - ea * ea, ebb - eb * eb, eab - ea * eb};
}

/// Correlation of the two branch sojourn times of one pair.
///
/// A forking pair sees (q_a, q_b) with probability P(q_a, q_b) (Poisson
/// arrivals see time averages). Given the state, t_i is Erlang(q_i + 1, mu_i)
/// and the two are independent, so
///   Cov(t_a, t_b) = Cov(q_a, q_b) / (mu_a mu_b)
///   Var(t_i)      = (E q_i + 1 + Var q_i) / mu_i^2.
inline double sojourn_correlation(const JointGrid& g) {
    const auto m = queue_moments(g);
    const auto& prm = g.params();
    const double var_a = (m.mean_a + 1.0 + m.var_a) / (prm.mu_a * prm.mu_a);
    const double var_b = (m.mean_b + 1.0 + m.var_b) / (prm.mu_b * prm.mu_b);
    if (!(var_a > 0.0) || !(var_b > 0.0)) throw std::domain_error("sojourn_correlation: zero variance");
    return m.cov / (prm.mu_a * prm.mu_b) / std::sqrt(var_a * var_b);
}

struct CorrelationPoint {
    double psi_a = 0.0;
    double psi_b = 0.0;
    double r = 0.0;
    ConvergenceDiag diag;
};

/// R over the cartesian product psi_b x psi_a (psi_b outer), one CK solve per
/// point. Results are ordered by input position, independent of `workers`.
inline std::vector<CorrelationPoint> correlation_curves(std::span<const double> psi_a_values,
                                                        std::span<const double> psi_b_values,
                                                        std::size_t n = 190,
                                                        unsigned workers = default_workers(),
                                                        const GammaSchedule& schedule = {},
                                                        const StopCriteria& stop = {}) {
    std::vector<CorrelationPoint> out(psi_a_values.size() * psi_b_values.size());
    parallel_for(out.size(), workers, [&](std::size_t k) {
        auto& pt = out[k];
        pt.psi_b = psi_b_values[k / psi_a_values.size()];
        pt.psi_a = psi_a_values[k % psi_a_values.size()];
        auto res = solve_stationary(CkParams::from_utilization(pt.psi_a, pt.psi_b), n, schedule, stop);
        pt.r = sojourn_correlation(res.grid);
        pt.diag = std::move(res.diag);
    });
    return out;
}

}  // namespace fjsync::ck
