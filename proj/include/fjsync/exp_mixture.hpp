#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace fjsync {

// Which half-line a term lives on.
//   right: c * exp(-r t) for t >= 0
//   left:  c * exp(+r t) for t <  0
enum class Side : std::uint8_t { right, left };

enum class Support : std::uint8_t { one_sided, two_sided };

struct ExpTerm {
    double coefficient = 0.0;
    double rate = 1.0;
    Side side = Side::right;

    friend bool operator==(const ExpTerm&, const ExpTerm&) = default;
};

/// Signed finite mixture of decaying exponentials.
///
/// One-sided mixtures are densities on [0, inf) (generalized hyperexponential:
/// individual coefficients may be negative as long as the sum stays a density).
/// Two-sided mixtures live on the whole real line and carry left and right
/// terms. Terms on the same side whose rates agree to a relative 1e-12 are
/// merged at construction, so each (side, rate) appears at most once.
class ExpMixture {
public:
    static constexpr double rate_merge_tolerance = 1e-12;

    ExpMixture() = default;

    static ExpMixture one_sided(std::vector<ExpTerm> terms) {
        for (const auto& t : terms)
            if (t.side != Side::right)
                throw std::invalid_argument("one-sided mixture cannot hold left terms");
        return ExpMixture(Support::one_sided, std::move(terms));
    }

    static ExpMixture two_sided(std::vector<ExpTerm> terms) {
        return ExpMixture(Support::two_sided, std::move(terms));
    }

    static ExpMixture exponential(double rate) { return one_sided({{rate, rate, Side::right}}); }

    Support support() const noexcept { return support_; }
    bool is_one_sided() const noexcept { return support_ == Support::one_sided; }
    std::span<const ExpTerm> terms() const noexcept { return terms_; }
    std::size_t size() const noexcept { return terms_.size(); }
    bool empty() const noexcept { return terms_.empty(); }

    double operator()(double t) const noexcept {
        double sum = 0.0;
        for (const auto& term : terms_) {
            if (term.side == Side::right) {
                if (t >= 0.0) sum += term.coefficient * std::exp(-term.rate * t);
            } else if (t < 0.0) {
                sum += term.coefficient * std::exp(term.rate * t);
            }
        }
        return sum;
    }

    // Integral over the support, sum of c/r.
    double mass() const noexcept {
        double m = 0.0;
        for (const auto& term : terms_) m += term.coefficient / term.rate;
        return m;
    }

    double min_rate() const {
        if (terms_.empty()) throw std::logic_error("empty mixture has no rate");
        double r = std::numeric_limits<double>::infinity();
        for (const auto& term : terms_) r = std::min(r, term.rate);
        return r;
    }

    std::vector<double> rates() const {
        std::vector<double> r;
        r.reserve(terms_.size());
        for (const auto& term : terms_) r.push_back(term.rate);
        return r;
    }

    friend bool operator==(const ExpMixture&, const ExpMixture&) = default;

private:
    ExpMixture(Support support, std::vector<ExpTerm> terms) : support_(support) {
        for (const auto& t : terms) {
            if (!(t.rate > 0.0) || !std::isfinite(t.rate))
                throw std::domain_error("mixture rates must be positive and finite");
            if (!std::isfinite(t.coefficient))
                throw std::domain_error("mixture coefficients must be finite");
            add(t);
        }
        std::sort(terms_.begin(), terms_.end(), [](const ExpTerm& x, const ExpTerm& y) {
            if (x.side != y.side) return x.side < y.side;
            return x.rate < y.rate;
        });
    }

    void add(const ExpTerm& t) {
        for (auto& existing : terms_) {
            if (existing.side == t.side &&
                std::abs(existing.rate - t.rate) <=
                    rate_merge_tolerance * std::max(existing.rate, t.rate)) {
                existing.coefficient += t.coefficient;
                return;
            }
        }
        terms_.push_back(t);
    }

    Support support_ = Support::one_sided;
    std::vector<ExpTerm> terms_;
};

inline const char* to_string(Side s) noexcept { return s == Side::right ? "right" : "left"; }

inline void to_json(nlohmann::json& j, const ExpTerm& t) {
    j = nlohmann::json{{"c", t.coefficient}, {"r", t.rate}, {"side", to_string(t.side)}};
}

inline void to_json(nlohmann::json& j, const ExpMixture& m) {
    j = nlohmann::json::array();
    for (const auto& t : m.terms()) j.push_back(t);
}

// Parses an array of {c, r, side}. Any left-side term makes the result two-sided.
inline ExpMixture mixture_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw std::invalid_argument("mixture JSON must be an array");
    std::vector<ExpTerm> terms;
    bool two_sided = false;
    for (const auto& item : j) {
        ExpTerm t;
        t.coefficient = item.at("c").get<double>();
        t.rate = item.at("r").get<double>();
        const auto side = item.value("side", std::string("right"));
        if (side == "left") {
            t.side = Side::left;
            two_sided = true;
        } else if (side != "right") {
            throw std::invalid_argument("unknown mixture side '" + side + "'");
        }
        terms.push_back(t);
    }
    return two_sided ? ExpMixture::two_sided(std::move(terms))
                     : ExpMixture::one_sided(std::move(terms));
}

}  // namespace fjsync
