#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>

namespace fjsync {

enum class Branch : std::uint8_t { a = 0, b = 1 };

inline constexpr Branch other(Branch b) noexcept {
    return b == Branch::a ? Branch::b : Branch::a;
}

inline constexpr char to_char(Branch b) noexcept { return b == Branch::a ? 'a' : 'b'; }

// Number of parallel servers in a branch. The infinite-server case is a
// distinct state, not a large integer.
class ServerCount {
public:
    constexpr explicit ServerCount(std::uint32_t n) : n_(n) {
        if (n == 0) throw std::domain_error("server count must be >= 1");
    }

    static constexpr ServerCount infinite() noexcept { return ServerCount(); }

    constexpr bool is_infinite() const noexcept { return !n_.has_value(); }

    constexpr std::uint32_t count() const {
        if (!n_) throw std::logic_error("infinite server count has no finite value");
        return *n_;
    }

    std::string to_string() const { return n_ ? std::to_string(*n_) : std::string("inf"); }

    // Accepts a positive integer or "inf".
    static ServerCount parse(const std::string& s) {
        if (s == "inf" || s == "infinity" || s == "Inf") return infinite();
        std::size_t pos = 0;
        long long v = 0;
        try {
            v = std::stoll(s, &pos);
        } catch (const std::exception&) {
            throw std::invalid_argument("invalid server count '" + s + "'");
        }
        if (pos != s.size() || v < 1 || v > std::numeric_limits<std::uint32_t>::max())
            throw std::invalid_argument("invalid server count '" + s + "'");
        return ServerCount(static_cast<std::uint32_t>(v));
    }

    friend constexpr bool operator==(const ServerCount&, const ServerCount&) = default;

private:
    constexpr ServerCount() = default;
    std::optional<std::uint32_t> n_;
};

struct BranchParams {
    ServerCount servers{1};
    double mu = 1.0;  // per-server service rate

    // psi = lambda / (N mu); zero for the infinite-server branch.
    double utilization(double lambda) const {
        if (servers.is_infinite()) return 0.0;
        return lambda / (static_cast<double>(servers.count()) * mu);
    }

    friend bool operator==(const BranchParams&, const BranchParams&) = default;
};

struct NetworkParams {
    double lambda = 1.0;
    BranchParams a;
    BranchParams b;

    const BranchParams& branch(Branch which) const { return which == Branch::a ? a : b; }

    double psi_a() const { return a.utilization(lambda); }
    double psi_b() const { return b.utilization(lambda); }

    // Throws std::domain_error unless the network is well formed and stable.
    void validate() const {
        if (!(lambda > 0.0) || !std::isfinite(lambda))
            throw std::domain_error("arrival rate must be positive and finite");
        for (const auto* br : {&a, &b}) {
            if (!(br->mu > 0.0) || !std::isfinite(br->mu))
                throw std::domain_error("service rate must be positive and finite");
            if (!(br->utilization(lambda) < 1.0))
                throw std::domain_error("unstable branch: utilization psi = " +
                                        std::to_string(br->utilization(lambda)) + " >= 1");
        }
    }

    // Builds a network from target utilizations: mu_i = lambda / (N_i psi_i).
    static NetworkParams from_utilization(double lambda, ServerCount na, double psi_a,
                                          ServerCount nb, double psi_b) {
        auto rate = [lambda](ServerCount n, double psi) {
            if (n.is_infinite())
                throw std::domain_error("utilization does not determine mu for infinite servers");
            if (!(psi > 0.0)) throw std::domain_error("utilization must be positive");
            return lambda / (static_cast<double>(n.count()) * psi);
        };
        NetworkParams p{lambda, {na, rate(na, psi_a)}, {nb, rate(nb, psi_b)}};
        p.validate();
        return p;
    }

    friend bool operator==(const NetworkParams&, const NetworkParams&) = default;
};

}  // namespace fjsync
