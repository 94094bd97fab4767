#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace pricing {

/// Standard normal CDF, accurate over the full double range.
inline double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

/// p-quantile of a sorted sample, linear interpolation between order
/// statistics (the common "type 7" rule: h = (n-1)p).
inline double quantile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty())
        throw std::invalid_argument("quantile_sorted: empty sample");
    if (!(p >= 0.0 && p <= 1.0))
        throw std::invalid_argument("quantile_sorted: p outside [0,1]");
    const std::size_t n = sorted.size();
    if (n == 1) return sorted[0];
    const double h = static_cast<double>(n - 1) * p;
    const auto lo = static_cast<std::size_t>(h);
    if (lo + 1 >= n) return sorted[n - 1];
    const double w = h - static_cast<double>(lo);
    return sorted[lo] + w * (sorted[lo + 1] - sorted[lo]);
}

struct SampleSummary {
    double mean = 0.0;
    double stddev = 0.0;   // sample standard deviation (n-1 denominator)
    double min = 0.0;
    double max = 0.0;
    std::size_t count = 0;
};

/// Two-pass mean/stddev/min/max; deterministic for a fixed input order.
inline SampleSummary summarize(std::span<const double> xs) {
    if (xs.empty()) throw std::invalid_argument("summarize: empty sample");
    SampleSummary s;
    s.count = xs.size();
    double sum = 0.0;
    s.min = xs[0];
    s.max = xs[0];
    for (double x : xs) {
        sum += x;
        s.min = std::min(s.min, x);
        s.max = std::max(s.max, x);
    }
    s.mean = sum / static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) {
            const double d = x - s.mean;
            ss += d * d;
        }
        s.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    return s;
}

/// Quantiles of an unsorted sample (copies and sorts internally).
inline std::vector<double> quantiles(std::span<const double> xs, std::span<const double> ps) {
    std::vector<double> sorted(xs.begin(), xs.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> out;
    out.reserve(ps.size());
    for (double p : ps) out.push_back(quantile_sorted(sorted, p));
    return out;
}

struct HistogramBin {
    double left = 0.0;
    double right = 0.0;
    std::size_t count = 0;
};

/// Equal-width histogram over [min, max]; the top edge is inclusive. A
/// constant sample collapses to a single zero-width bin.
inline std::vector<HistogramBin> make_histogram(std::span<const double> xs, std::size_t n_bins) {
    if (xs.empty()) throw std::invalid_argument("make_histogram: empty sample");
    if (n_bins == 0) throw std::invalid_argument("make_histogram: need at least one bin");
    const auto [lo_it, hi_it] = std::minmax_element(xs.begin(), xs.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    if (lo == hi) return {{lo, hi, xs.size()}};
    std::vector<HistogramBin> bins(n_bins);
    const double width = (hi - lo) / static_cast<double>(n_bins);
    for (std::size_t i = 0; i < n_bins; ++i) {
        bins[i].left = lo + static_cast<double>(i) * width;
        bins[i].right = i + 1 == n_bins ? hi : lo + static_cast<double>(i + 1) * width;
    }
    for (double x : xs) {
        auto idx = static_cast<std::size_t>((x - lo) / width);
        ++bins[std::min(idx, n_bins - 1)].count;
    }
    return bins;
}

} // namespace pricing
