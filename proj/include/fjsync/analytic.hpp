#pragma once

// Closed-form sojourn-time densities for the marked-pair synchronizer under
// the branch-independence approximation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "fjsync/exp_mixture.hpp"
#include "fjsync/network.hpp"

namespace fjsync::analytic {

struct BranchOccupancy {
    double p0 = 1.0;       // probability the branch is empty
    double p_queue = 0.0;  // probability an arrival has to queue
};

namespace detail {

inline void check_finite_branch(double lambda, double mu, std::uint32_t n) {
    if (!(lambda > 0.0) || !(mu > 0.0) || n == 0)
        throw std::domain_error("require lambda > 0, mu > 0, n >= 1");
    if (!(lambda / (static_cast<double>(n) * mu) < 1.0))
        throw std::domain_error("unstable branch: lambda >= n mu");
}

}  // namespace detail

/// Stationary M/M/n occupancy split into the empty-system probability and
/// the probability that all servers are busy (queue non-empty for an arrival).
///
/// Poisson-weight terms a^k/k! are accumulated in log space with the
/// recurrence log w_k = log w_{k-1} + log(a/k), so n in the hundreds neither
/// overflows nor loses the small-lambda limit.
inline BranchOccupancy branch_occupancy(double lambda, double mu, std::uint32_t n) {
    detail::check_finite_branch(lambda, mu, n);
    const double offered = lambda / mu;
    const double psi = offered / static_cast<double>(n);
    const double log_a = std::log(offered);

    std::vector<double> log_w(n + 1);
    log_w[0] = 0.0;
    for (std::uint32_t k = 1; k <= n; ++k)
        log_w[k] = log_w[k - 1] + log_a - std::log(static_cast<double>(k));

    // Queue term: w_n / (1 - psi).
    const double log_tail = log_w[n] - std::log1p(-psi);
    double peak = log_tail;
    for (std::uint32_t k = 0; k < n; ++k) peak = std::max(peak, log_w[k]);

    double scaled = std::exp(log_tail - peak);
    for (std::uint32_t k = 0; k < n; ++k) scaled += std::exp(log_w[k] - peak);

    BranchOccupancy occ;
    occ.p0 = std::exp(-peak) / scaled;
    occ.p_queue = std::exp(log_tail - peak) / scaled;
    if (n == 1) {
        occ.p0 = 1.0 - psi;
        occ.p_queue = psi;
    }
    return occ;
}

inline double erlang_idle_prob(double lambda, double mu, std::uint32_t n) {
    return branch_occupancy(lambda, mu, n).p0;
}

inline double queue_nonempty_prob(double lambda, double mu, std::uint32_t n) {
    return branch_occupancy(lambda, mu, n).p_queue;
}

// When mu (N-1) and lambda nearly coincide the two exponents of the branch
// density collide; the queue rate is moved to mu (1 +- this) instead.
inline constexpr double collision_nudge = 1e-8;

/// Sojourn time (wait + service) of one FIFO M/M/N branch, kept in the
/// structured form
///   f = (1 - p) Exp(mu) + p Hypo(mu, c),   c = mu N - lambda,
/// with p the probability of queueing. In exponential-term form
///   N = inf: mu e^{-mu t}
///   N = 1:   (mu - lambda) e^{-(mu - lambda) t}
///   else:    mu (1 + p mu / (mu(N-1) - lambda)) e^{-mu t}
///            - p mu (mu N - lambda) / (mu(N-1) - lambda) e^{-(mu N - lambda) t}
/// The term coefficients grow like 1 / (c - mu) near the collision; the
/// Laplace transform below does not, which is what keeps the cross
/// convolution of two such densities accurate.
class BranchSojourn {
public:
    BranchSojourn(double lambda, double mu, ServerCount n) : mu_(mu) {
        if (n.is_infinite()) {
            if (!(mu > 0.0) || !std::isfinite(mu)) throw std::domain_error("service rate must be positive");
            mixture_ = ExpMixture::exponential(mu);
            return;
        }
        const std::uint32_t servers = n.count();
        detail::check_finite_branch(lambda, mu, servers);
        if (servers == 1) {
            // Hypo(mu, mu - lambda) mixed with Exp(mu) collapses to Exp(mu - lambda).
            mu_ = mu - lambda;
            mixture_ = ExpMixture::exponential(mu_);
            return;
        }
        p_queue_ = queue_nonempty_prob(lambda, mu, servers);
        double c = mu * static_cast<double>(servers) - lambda;
        if (std::abs(c - mu) < collision_nudge * mu)
            c = mu * (c >= mu ? 1.0 + collision_nudge : 1.0 - collision_nudge);
        queue_rate_ = c;
        const double gap = c - mu;
        mixture_ = ExpMixture::one_sided({
            {mu * (1.0 + p_queue_ * mu / gap), mu, Side::right},
            {-p_queue_ * mu * c / gap, c, Side::right},
        });
    }

    const ExpMixture& mixture() const noexcept { return mixture_; }
    double queue_probability() const noexcept { return p_queue_; }

    // E[exp(-x T)] for x > -min rate.
    double laplace(double x) const noexcept {
        const double service = mu_ / (mu_ + x);
        if (p_queue_ == 0.0) return service;
        return service * ((1.0 - p_queue_) + p_queue_ * queue_rate_ / (queue_rate_ + x));
    }

private:
    double mu_;
    double p_queue_ = 0.0;
    double queue_rate_ = 0.0;
    ExpMixture mixture_;
};

inline ExpMixture branch_sojourn_density(double lambda, double mu, ServerCount n) {
    return BranchSojourn(lambda, mu, n).mixture();
}

inline BranchSojourn branch_sojourn(const NetworkParams& params, Branch which) {
    const auto& br = params.branch(which);
    return BranchSojourn(params.lambda, br.mu, br.servers);
}

inline ExpMixture branch_sojourn_density(const NetworkParams& params, Branch which) {
    return branch_sojourn(params, which).mixture();
}

/// Density of t_a - t_b for independent t_a ~ fa, t_b ~ fb:
///   integral fb(tau) fa(tau + t) dtau.
/// Term pair (A, a), (B, b) contributes A B / (a + b) on both half-lines,
/// decaying as e^{-a t} to the right and e^{b t} to the left.
inline ExpMixture cross_convolve(const ExpMixture& fa, const ExpMixture& fb) {
    if (!fa.is_one_sided() || !fb.is_one_sided())
        throw std::invalid_argument("cross_convolve takes one-sided densities");
    std::vector<ExpTerm> terms;
    terms.reserve(2 * fa.size() * fb.size());
    for (const auto& ta : fa.terms()) {
        for (const auto& tb : fb.terms()) {
            const double weight = ta.coefficient * tb.coefficient / (ta.rate + tb.rate);
            terms.push_back({weight, ta.rate, Side::right});
            terms.push_back({weight, tb.rate, Side::left});
        }
    }
    return ExpMixture::two_sided(std::move(terms));
}

/// Same density as above for two branch sojourns. Summing A_j B_k / (a_j + b_k)
/// over k is A_j times the Laplace transform of fb at a_j, evaluated here
/// without the cancellation between large opposite-sign coefficients.
inline ExpMixture cross_convolve(const BranchSojourn& fa, const BranchSojourn& fb) {
    std::vector<ExpTerm> terms;
    terms.reserve(fa.mixture().size() + fb.mixture().size());
    for (const auto& ta : fa.mixture().terms())
        terms.push_back({ta.coefficient * fb.laplace(ta.rate), ta.rate, Side::right});
    for (const auto& tb : fb.mixture().terms())
        terms.push_back({tb.coefficient * fa.laplace(tb.rate), tb.rate, Side::left});
    return ExpMixture::two_sided(std::move(terms));
}

/// f(t) = g(t) + g(-t) on [0, inf): the density of |X| for X ~ g.
inline ExpMixture fold_to_waiting_density(const ExpMixture& two_sided) {
    std::vector<ExpTerm> terms;
    terms.reserve(two_sided.size());
    for (auto t : two_sided.terms()) {
        t.side = Side::right;
        terms.push_back(t);
    }
    return ExpMixture::one_sided(std::move(terms));
}

/// Density of the synchronizer wait |t_a - t_b| for the whole network.
inline ExpMixture waiting_time_density(const NetworkParams& params) {
    params.validate();
    return fold_to_waiting_density(
        cross_convolve(branch_sojourn(params, Branch::a), branch_sojourn(params, Branch::b)));
}

inline double mixture_mean(const ExpMixture& f) {
    if (!f.is_one_sided()) throw std::invalid_argument("mixture_mean needs a one-sided density");
    double m = 0.0;
    for (const auto& t : f.terms()) m += t.coefficient / (t.rate * t.rate);
    return m;
}

inline double mixture_cdf(const ExpMixture& f, double t) {
    if (!f.is_one_sided()) throw std::invalid_argument("mixture_cdf needs a one-sided density");
    if (!(t >= 0.0)) throw std::domain_error("mixture_cdf: t must be >= 0");
    if (std::isinf(t)) return f.mass();
    double F = 0.0;
    for (const auto& term : f.terms())
        F += (term.coefficient / term.rate) * -std::expm1(-term.rate * t);
    return F;
}

/// Inverse CDF by safeguarded Newton iteration inside a bisection bracket.
/// Returns t with |F(t) - p| <= 1e-12.
inline double mixture_quantile(const ExpMixture& f, double p) {
    if (!(p >= 0.0 && p < 1.0)) throw std::domain_error("mixture_quantile: p must lie in [0, 1)");
    if (p == 0.0) return 0.0;
    constexpr double tolerance = 1e-12;

    double lo = 0.0;
    double hi = 1.0 / f.min_rate();
    while (mixture_cdf(f, hi) < p) {
        lo = hi;
        hi *= 2.0;
        if (!std::isfinite(hi)) throw std::domain_error("mixture_quantile: CDF never reaches p");
    }

    double t = 0.5 * (lo + hi);
    for (int iter = 0; iter < 400; ++iter) {
        const double err = mixture_cdf(f, t) - p;
        if (std::abs(err) <= tolerance) return t;
        if (err > 0.0)
            hi = t;
        else
            lo = t;
        const double density = f(t);
        double next = density > 0.0 ? t - err / density : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) return next;
        t = next;
    }
    return t;
}

/// Little's law: mean number of first partners held by the synchronizer.
inline double little_occupancy(double lambda, double mean_wait) {
    if (!(lambda > 0.0)) throw std::domain_error("little_occupancy: lambda must be positive");
    if (!(mean_wait >= 0.0)) throw std::domain_error("little_occupancy: mean wait must be >= 0");
    return lambda * mean_wait;
}

inline double mean_wait(const NetworkParams& params) {
    return mixture_mean(waiting_time_density(params));
}

}  // namespace fjsync::analytic
