// stats.hpp - small shared numerics: log-domain helpers, count-class sums
// over product measures, distribution distances, confidence intervals.
#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "qnd/errors.hpp"

namespace qnd {

inline double log_sum_exp(const std::vector<double>& xs) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : xs) m = std::max(m, x);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : xs) s += std::exp(x - m);
    return m + std::log(s);
}

inline double log_factorial(int n) { return std::lgamma(static_cast<double>(n) + 1.0); }

inline double log_multinomial(int total, const std::vector<int>& counts) {
    double v = log_factorial(total);
    for (int c : counts) v -= log_factorial(c);
    return v;
}

// All count vectors with the given number of parts summing to total.
inline void for_each_composition(int total, int parts,
                                 const std::function<void(const std::vector<int>&)>& fn) {
    std::vector<int> c(static_cast<std::size_t>(parts), 0);
    std::function<void(int, int)> rec = [&](int idx, int left) {
        if (idx == parts - 1) {
            c[static_cast<std::size_t>(idx)] = left;
            fn(c);
            return;
        }
        for (int k = 0; k <= left; ++k) {
            c[static_cast<std::size_t>(idx)] = k;
            rec(idx + 1, left - k);
        }
    };
    if (parts < 1) throw Error("for_each_composition: need at least one part");
    rec(0, total);
}

// log prod_s p[s]^c[s], with 0^0 = 1 and log 0 = -inf.
inline double log_product_power(const std::vector<double>& p, const std::vector<int>& c) {
    double v = 0.0;
    for (std::size_t s = 0; s < p.size(); ++s) {
        if (c[s] == 0) continue;
        if (p[s] <= 0.0) return -std::numeric_limits<double>::infinity();
        v += c[s] * std::log(p[s]);
    }
    return v;
}

// Expectation of a count-symmetric function under the i.i.d. product of one
// categorical law over `depth` coordinates.
inline double symmetric_product_expectation(const std::vector<double>& law, int depth,
                                            const std::function<double(const std::vector<int>&)>& f) {
    double total = 0.0;
    for_each_composition(depth, static_cast<int>(law.size()), [&](const std::vector<int>& c) {
        double lw = log_multinomial(depth, c) + log_product_power(law, c);
        if (std::isfinite(lw)) total += std::exp(lw) * f(c);
    });
    return total;
}

// Exact total variation between the depth-fold products of two categorical
// laws, via count classes.
inline double product_tv_distance(const std::vector<double>& p, const std::vector<double>& q,
                                  int depth) {
    if (p.size() != q.size())
        throw DimensionMismatch("product_tv_distance: laws must share one alphabet");
    double tv = 0.0;
    for_each_composition(depth, static_cast<int>(p.size()), [&](const std::vector<int>& c) {
        double lm = log_multinomial(depth, c);
        double lp = log_product_power(p, c), lq = log_product_power(q, c);
        double mp = std::isfinite(lp) ? std::exp(lm + lp) : 0.0;
        double mq = std::isfinite(lq) ? std::exp(lm + lq) : 0.0;
        tv += std::abs(mp - mq);
    });
    return 0.5 * tv;
}

// Squared Hellinger distance between two categorical laws.
inline double hellinger_squared(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size())
        throw DimensionMismatch("hellinger_squared: laws must share one alphabet");
    double affinity = 0.0;
    for (std::size_t s = 0; s < p.size(); ++s) affinity += std::sqrt(p[s] * q[s]);
    return 1.0 - affinity;
}

inline double tv_distance(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size())
        throw DimensionMismatch("tv_distance: distributions must share one support");
    double tv = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) tv += std::abs(p[i] - q[i]);
    return 0.5 * tv;
}

// Wilson score interval for a binomial proportion.
inline std::pair<double, double> wilson_interval(int successes, int trials, double z = 3.0) {
    if (trials <= 0) throw Error("wilson_interval: need at least one trial");
    double n = trials, x = successes;
    double p = x / n, z2 = z * z;
    double denom = 1.0 + z2 / n;
    double center = (p + z2 / (2.0 * n)) / denom;
    double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

// P(lo < X/n < hi) for X ~ Binomial(n, p), strict inequalities.
inline double binomial_frequency_probability(int n, double p, double lo, double hi) {
    double lp = p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
    double lq = p < 1.0 ? std::log(1.0 - p) : -std::numeric_limits<double>::infinity();
    double total = 0.0;
    for (int k = 0; k <= n; ++k) {
        double f = static_cast<double>(k) / n;
        if (f <= lo || f >= hi) continue;
        double lw = log_factorial(n) - log_factorial(k) - log_factorial(n - k);
        if (k > 0) lw += k * lp;
        if (k < n) lw += (n - k) * lq;
        if (std::isfinite(lw)) total += std::exp(lw);
    }
    return total;
}

}  // namespace qnd
