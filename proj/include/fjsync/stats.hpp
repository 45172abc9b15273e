#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>

namespace fjsync::stats {

struct Estimate {
    double value = 0.0;
    double std_error = std::numeric_limits<double>::quiet_NaN();
};

inline double mean(std::span<const double> x) {
    if (x.empty()) return 0.0;
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("pearson: need two equal-length samples of size >= 2");
    const double mx = mean(x);
    const double my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw std::domain_error("pearson: zero variance");
    return sxy / std::sqrt(sxx * syy);
}

// Non-overlapping batch means. Simulation output is autocorrelated, so the
// naive s/sqrt(n) understates the error; batches much longer than the
// correlation time are close to independent.
inline Estimate batch_means(std::span<const double> x, std::size_t batches = 50) {
    Estimate e{mean(x)};
    if (batches < 2 || x.size() < 2 * batches) return e;
    const std::size_t len = x.size() / batches;
    double s = 0.0, ss = 0.0;
    for (std::size_t k = 0; k < batches; ++k) {
        const double m = mean(x.subspan(k * len, len));
        s += m;
        ss += m * m;
    }
    const double nb = static_cast<double>(batches);
    const double var = (ss - s * s / nb) / (nb - 1.0);
    e.std_error = std::sqrt(std::max(var, 0.0) / nb);
    return e;
}

// Full-sample Pearson r with a batch-derived standard error.
inline Estimate batch_correlation(std::span<const double> x, std::span<const double> y,
                                  std::size_t batches = 50) {
    Estimate e{pearson(x, y)};
    if (batches < 2 || x.size() < 4 * batches) return e;
    const std::size_t len = x.size() / batches;
    double s = 0.0, ss = 0.0;
    for (std::size_t k = 0; k < batches; ++k) {
        const double r = pearson(x.subspan(k * len, len), y.subspan(k * len, len));
        s += r;
        ss += r * r;
    }
    const double nb = static_cast<double>(batches);
    const double var = (ss - s * s / nb) / (nb - 1.0);
    e.std_error = std::sqrt(std::max(var, 0.0) / nb);
    return e;
}

}  // namespace fjsync::stats
