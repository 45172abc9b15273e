#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "fjsync/analytic.hpp"
#include "oracles.hpp"

using namespace fjsync;
using namespace fjsync::analytic;

namespace {

NetworkParams network(double lambda, ServerCount na, double mua, ServerCount nb, double mub) {
    return NetworkParams{lambda, {na, mua}, {nb, mub}};
}

oracle::BranchDensity oracle_branch(double lambda, double mu, ServerCount n) {
    oracle::BranchDensity d{lambda, mu, {}};
    if (!n.is_infinite()) d.servers = n.count();
    return d;
}

}  // namespace

TEST(Erlang, SingleServerReducesToUtilization) {
    EXPECT_DOUBLE_EQ(erlang_idle_prob(0.3, 0.4, 1), 0.25);
    EXPECT_DOUBLE_EQ(queue_nonempty_prob(0.3, 0.4, 1), 0.75);
}

TEST(Erlang, LightTrafficLimit) {
    EXPECT_NEAR(erlang_idle_prob(1e-9, 1.0, 3), 1.0, 1e-8);
    EXPECT_LT(queue_nonempty_prob(1e-9, 1.0, 3), 1e-25);
}

TEST(Erlang, EightServersAgainstExactRational) {
    // Offered load 4 on 8 servers; the Erlang sums are rationals:
    // p0 = 35/1927, P(wait) = 1024/17343.
    EXPECT_NEAR(erlang_idle_prob(2.0, 0.5, 8), 35.0 / 1927.0, 1e-16);
    EXPECT_NEAR(queue_nonempty_prob(2.0, 0.5, 8), 1024.0 / 17343.0, 1e-16);
}

TEST(Erlang, AgreesWithBirthDeathChain) {
    struct Case { double lambda, mu; std::uint32_t n; };
    for (auto c : {Case{2.0, 0.5, 8}, Case{1.5, 0.6, 3}, Case{1.5, 0.33, 5}, Case{0.9, 1.0, 1}, Case{9.5, 1.0, 10}}) {
        const auto ref = oracle::birth_death(c.lambda, c.mu, c.n);
        EXPECT_NEAR(erlang_idle_prob(c.lambda, c.mu, c.n), ref.p0, 1e-13) << c.n;
        EXPECT_NEAR(queue_nonempty_prob(c.lambda, c.mu, c.n), ref.p_wait, 1e-12) << c.n;
    }
}

TEST(Erlang, HundredsOfServersStayFinite) {
    const auto occ = branch_occupancy(400.0, 1.0, 500);
    EXPECT_TRUE(std::isfinite(occ.p0));
    const auto ref = oracle::birth_death(400.0, 1.0, 500, 20000);
    EXPECT_NEAR(occ.p_queue, ref.p_wait, 1e-12);
    EXPECT_NEAR(occ.p0 / ref.p0, 1.0, 1e-9);
}

TEST(Erlang, RejectsUnstableOrInvalid) {
    EXPECT_THROW(erlang_idle_prob(1.0, 0.5, 2), std::domain_error);
    EXPECT_THROW(erlang_idle_prob(1.0, 1.0, 0), std::domain_error);
    EXPECT_THROW(erlang_idle_prob(-1.0, 1.0, 1), std::domain_error);
}

TEST(BranchDensity, Reductions) {
    const auto one = branch_sojourn_density(0.3, 0.4, ServerCount(1));
    ASSERT_EQ(one.size(), 1u);
    EXPECT_NEAR(one.terms()[0].coefficient, 0.1, 1e-15);
    EXPECT_NEAR(one.terms()[0].rate, 0.1, 1e-15);

    const auto inf = branch_sojourn_density(5.0, 0.7, ServerCount::infinite());
    ASSERT_EQ(inf.size(), 1u);
    EXPECT_EQ(inf.terms()[0].coefficient, 0.7);
    EXPECT_EQ(inf.terms()[0].rate, 0.7);
}

TEST(BranchDensity, MatchesConvolutionQuadrature) {
    struct Case { double lambda, mu; ServerCount n; };
    for (auto c : {Case{1.5, 0.6, ServerCount(3)}, Case{2.0, 0.5, ServerCount(8)}, Case{1.5, 0.33, ServerCount(5)},
                   Case{0.3, 0.4, ServerCount(1)}, Case{2.0, 1.3, ServerCount::infinite()}}) {
        const auto f = branch_sojourn_density(c.lambda, c.mu, c.n);
        const auto ref = oracle_branch(c.lambda, c.mu, c.n);
        double worst = 0.0;
        for (double t = 0.0; t <= 50.0; t += 0.25) worst = std::max(worst, std::abs(f(t) - ref(t)));
        EXPECT_LT(worst, 1e-10) << c.n.to_string();
        EXPECT_NEAR(f.mass(), 1.0, 1e-12);
    }
}

TEST(BranchDensity, MeanIsServicePlusExpectedWait) {
    const double lambda = 1.5, mu = 0.6;
    const auto f = branch_sojourn_density(lambda, mu, ServerCount(3));
    const double p = oracle::birth_death(lambda, mu, 3).p_wait;
    EXPECT_NEAR(mixture_mean(f), 1.0 / mu + p / (3 * mu - lambda), 1e-12);
}

TEST(CrossConvolve, SymmetricLaplace) {
    const auto e = ExpMixture::exponential(1.0);
    const auto g = cross_convolve(e, e);
    for (double t : {-3.0, -0.5, 0.0, 0.7, 2.0}) EXPECT_NEAR(g(t), 0.5 * std::exp(-std::abs(t)), 1e-16);
    const auto f = fold_to_waiting_density(g);
    ASSERT_EQ(f.size(), 1u);
    EXPECT_EQ(f.terms()[0].coefficient, 1.0);
    EXPECT_EQ(f.terms()[0].rate, 1.0);
}

TEST(CrossConvolve, InfiniteServerPairTwoSidedForm) {
    const double ma = 1.0, mb = 2.0;
    const auto g = cross_convolve(ExpMixture::exponential(ma), ExpMixture::exponential(mb));
    const double k = ma * mb / (ma + mb);
    for (double t : {0.1, 1.0, 4.0}) {
        EXPECT_NEAR(g(t), k * std::exp(-ma * t), 1e-16);
        EXPECT_NEAR(g(-t), k * std::exp(-mb * t), 1e-16);
    }
}

TEST(CrossConvolve, StructuredFormMatchesPairwiseAwayFromCollision) {
    const auto p = network(1.5, ServerCount(3), 0.6, ServerCount(5), 0.33);
    const auto structured = cross_convolve(branch_sojourn(p, Branch::a), branch_sojourn(p, Branch::b));
    const auto pairwise = cross_convolve(branch_sojourn_density(p, Branch::a), branch_sojourn_density(p, Branch::b));
    for (double t = -40.0; t <= 40.0; t += 0.5) EXPECT_NEAR(structured(t), pairwise(t), 1e-13) << t;
}

TEST(CrossConvolve, MatchesNumericalConvolution) {
    const double lambda = 1.5;
    const auto fa = branch_sojourn_density(lambda, 0.6, ServerCount(3));
    const auto fb = branch_sojourn_density(lambda, 0.33, ServerCount(5));
    const auto g = cross_convolve(fa, fb);
    const auto oa = oracle_branch(lambda, 0.6, ServerCount(3));
    const auto ob = oracle_branch(lambda, 0.33, ServerCount(5));
    for (double t : {-30.0, -8.0, -1.0, -0.1, 0.0, 0.1, 1.0, 8.0, 30.0}) {
        // density of t_a - t_b at t
        const double lo = std::max(0.0, -t);
        const double ref = oracle::integrate([&](double s) { return ob(s) * oa(s + t); }, lo, lo + 200.0, 1e-13);
        EXPECT_NEAR(g(t), ref, 1e-8) << t;
    }
}

TEST(WaitingDensity, InfiniteServerPair) {
    const auto p = network(1.0, ServerCount::infinite(), 1.0, ServerCount::infinite(), 2.0);
    const auto f = waiting_time_density(p);
    ASSERT_EQ(f.size(), 2u);
    EXPECT_NEAR(f.terms()[0].coefficient, 2.0 / 3.0, 1e-16);
    EXPECT_NEAR(f.terms()[1].coefficient, 2.0 / 3.0, 1e-16);
    EXPECT_EQ(f.terms()[0].rate, 1.0);
    EXPECT_EQ(f.terms()[1].rate, 2.0);
    EXPECT_NEAR(mixture_mean(f), 5.0 / 6.0, 1e-15);
    const double by_quadrature = oracle::integrate([&](double t) { return t * f(t); }, 0.0, 80.0);
    EXPECT_NEAR(by_quadrature, 5.0 / 6.0, 1e-12);
}

TEST(WaitingDensity, SymmetricCasesReduceToOneRate) {
    EXPECT_NEAR(mean_wait(network(1.0, ServerCount::infinite(), 1.0, ServerCount::infinite(), 1.0)), 1.0, 1e-15);
    EXPECT_NEAR(mean_wait(network(0.3, ServerCount(1), 0.4, ServerCount(1), 0.4)), 10.0, 1e-12);
}

TEST(WaitingDensity, SingleServerPairCoefficients) {
    const double lambda = 0.3, ma = 0.5, mb = 0.9;
    const double a = ma - lambda, b = mb - lambda;
    const auto f = waiting_time_density(network(lambda, ServerCount(1), ma, ServerCount(1), mb));
    ASSERT_EQ(f.size(), 2u);
    EXPECT_NEAR(f.terms()[0].coefficient, a * b / (a + b), 1e-15);
    EXPECT_NEAR(f.terms()[1].coefficient, a * b / (a + b), 1e-15);
    EXPECT_NEAR(mixture_mean(f), (a * a + b * b) / (a * b * (a + b)), 1e-12);
}

TEST(WaitingDensity, FourRateStructure) {
    const auto p = network(1.5, ServerCount(3), 0.6, ServerCount(5), 0.5);
    const auto f = waiting_time_density(p);
    const auto rates = f.rates();
    const std::vector<double> expected = {0.3, 0.5, 0.6, 1.0};  // {3*0.6-1.5, mu_b, mu_a, 5*0.5-1.5}
    ASSERT_EQ(rates.size(), expected.size());
    for (std::size_t i = 0; i < rates.size(); ++i) EXPECT_NEAR(rates[i], expected[i], 1e-15);

    const double by_quadrature = oracle::integrate([&](double t) { return t * f(t); }, 0.0, 200.0);
    EXPECT_NEAR(mixture_mean(f) / by_quadrature, 1.0, 1e-9);
    EXPECT_NEAR(mixture_mean(f), 3.2032075545031304, 1e-12);
}

TEST(WaitingDensity, MatchesOracleForGeneralNetwork) {
    const auto p = network(1.5, ServerCount(3), 0.6, ServerCount(5), 0.33);
    const auto f = waiting_time_density(p);
    const auto oa = oracle_branch(1.5, 0.6, ServerCount(3));
    const auto ob = oracle_branch(1.5, 0.33, ServerCount(5));
    for (double t : {0.0, 0.3, 1.0, 3.0, 10.0, 40.0}) EXPECT_NEAR(f(t), oracle::waiting_density(oa, ob, t), 1e-9) << t;
}

TEST(WaitingDensity, SwappingBranchesChangesNothing) {
    const auto p = network(2.0, ServerCount(8), 0.5, ServerCount(3), 0.9);
    const auto q = network(2.0, ServerCount(3), 0.9, ServerCount(8), 0.5);
    const auto f = waiting_time_density(p), g = waiting_time_density(q);
    for (double t = 0.0; t < 30.0; t += 0.37) EXPECT_NEAR(f(t), g(t), 1e-14);
    EXPECT_NEAR(mixture_mean(f), mixture_mean(g), 1e-13);
}

TEST(WaitingDensity, NormalizedAndNonNegative) {
    const std::vector<NetworkParams> cases = {
        network(1.5, ServerCount(3), 0.6, ServerCount(5), 0.33), network(0.3, ServerCount(1), 0.31, ServerCount(1), 2.0),
        network(2.0, ServerCount(8), 0.27, ServerCount(8), 0.3), network(4.0, ServerCount::infinite(), 0.05, ServerCount(30), 0.2)};
    for (const auto& p : cases) {
        const auto f = waiting_time_density(p);
        EXPECT_NEAR(f.mass(), 1.0, 1e-10);
        const double hi = 50.0 / f.min_rate();
        const double lo = 1e-6 / f.min_rate();
        double worst = f(0.0);
        for (int k = 0; k < 10000; ++k) worst = std::min(worst, f(lo * std::pow(hi / lo, k / 9999.0)));
        EXPECT_GE(worst, -1e-12);
        double max_rate = 0.0;
        for (double r : f.rates()) max_rate = std::max(max_rate, r);
        const double quad_mass =
            oracle::integrate_geometric([&](double t) { return f(t); }, 0.1 / max_rate, 80.0 / f.min_rate());
        EXPECT_NEAR(quad_mass, f.mass(), 1e-10);
    }
}

TEST(WaitingDensity, DegenerateCollisionAgainstQuadrature) {
    // N = 2 and lambda = mu: the queue rate 2 mu - lambda equals mu.
    const auto p = network(1.0, ServerCount(2), 1.0, ServerCount(2), 1.0);
    const auto f = waiting_time_density(p);
    EXPECT_NEAR(f.mass(), 1.0, 1e-9);
    // The split rates carry coefficients near 3e7, so each evaluation loses
    // about eight digits.
    EXPECT_NEAR(oracle::integrate_geometric([&](double t) { return f(t); }, 0.1, 80.0), 1.0, 1e-8);
    const auto o = oracle_branch(1.0, 1.0, ServerCount(2));
    for (double t : {0.0, 0.5, 2.0, 8.0}) EXPECT_NEAR(f(t), oracle::waiting_density(o, o, t), 1e-6) << t;
    const auto fb = branch_sojourn_density(1.0, 1.0, ServerCount(2));
    for (double t : {0.1, 1.0, 5.0}) EXPECT_NEAR(fb(t), o(t), 1e-6) << t;
}

TEST(Cdf, BasicValues) {
    const auto e = ExpMixture::exponential(1.0);
    EXPECT_NEAR(mixture_cdf(e, std::log(2.0)), 0.5, 1e-16);
    EXPECT_EQ(mixture_cdf(e, 0.0), 0.0);
    EXPECT_THROW(mixture_cdf(e, -1.0), std::domain_error);
}

TEST(Cdf, MatchesQuadratureAtMean) {
    const auto f = waiting_time_density(network(0.3, ServerCount(1), 0.4, ServerCount(1), 0.4));
    const double T = mixture_mean(f);
    const double ref = oracle::integrate([&](double t) { return f(t); }, 0.0, T);
    EXPECT_NEAR(mixture_cdf(f, T), ref, 1e-13);
    EXPECT_NEAR(mixture_cdf(f, T), 1.0 - std::exp(-1.0), 1e-13);  // single rate 0.1, T = 10
}

TEST(Quantile, ExponentialAndRoundTrip) {
    EXPECT_NEAR(mixture_quantile(ExpMixture::exponential(1.0), 0.5), std::log(2.0), 1e-12);
    const auto f = waiting_time_density(network(1.5, ServerCount(3), 0.6, ServerCount(5), 0.33));
    EXPECT_EQ(mixture_quantile(f, 0.0), 0.0);
    for (int k = 1; k <= 9; ++k) {
        const double p = k / 10.0;
        EXPECT_NEAR(mixture_cdf(f, mixture_quantile(f, p)), p, 1e-12) << p;
    }
    EXPECT_NEAR(mixture_cdf(f, mixture_quantile(f, 1.0 - 1e-9)), 1.0 - 1e-9, 1e-12);
    EXPECT_THROW(mixture_quantile(f, 1.0), std::domain_error);
    EXPECT_THROW(mixture_quantile(f, -0.1), std::domain_error);
}

TEST(Little, Occupancy) {
    EXPECT_DOUBLE_EQ(little_occupancy(0.3, 10.0), 3.0);
    EXPECT_EQ(little_occupancy(0.7, 0.0), 0.0);
    EXPECT_THROW(little_occupancy(0.0, 1.0), std::domain_error);
}
