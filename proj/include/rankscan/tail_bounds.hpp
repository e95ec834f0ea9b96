// rankscan/tail_bounds.hpp
//
// Tail inequalities used to bound scan P-values without simulation: the
// normal Mills-ratio bound, Bernstein's inequality for sampling without
// replacement, a Chernoff bound for sums of ranks, and the Chernoff bound for
// standardized sums from an exponential family.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "rankscan/errors.hpp"
#include "rankscan/models.hpp"
#include "rankscan/net.hpp"

namespace rankscan {

/// Result of a one-dimensional maximization over lambda >= 0.
struct Optimum {
    double lambda = 0;
    double value = 0;
    bool at_boundary = false;
};

namespace detail {

// Maximizes a concave f on [0, cap] given its derivative, by bracketing the
// sign change of df and bisecting it to the resolution of doubles.
template <class F, class DF>
Optimum maximize_concave(F&& f, DF&& df, double cap = 1e6) {
    if (!(df(0.0) > 0)) return {0.0, f(0.0), true};
    double lo = 0, hi = 1e-3;
    while (df(hi) > 0) {
        lo = hi;
        if (hi >= cap) return {hi, f(hi), true};
        hi = std::min(cap, 2 * hi);
    }
    for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        (df(mid) > 0 ? lo : hi) = mid;
    }
    const double best = 0.5 * (lo + hi);
    return {best, f(best), false};
}

inline double log_sinh(double x) {
    if (x > 20) return x - std::numbers::ln2 + std::log1p(-std::exp(-2 * x));
    return std::log(std::sinh(x));
}

inline double coth(double x) { return x > 20 ? 1.0 : 1.0 / std::tanh(x); }

// K(l) = log E exp(l (Z - (n+1)/2)), Z uniform on {1..n}.
inline double rank_log_mgf(double n, double lambda) {
    if (lambda * n < 1e-3) {
        const double l2 = lambda * lambda;
        return l2 * (n * n - 1) / 24.0 - l2 * l2 * (n * n * n * n - 1) / 2880.0;
    }
    return log_sinh(lambda * n / 2) - std::log(n) - log_sinh(lambda / 2);
}

inline double rank_log_mgf_derivative(double n, double lambda) {
    if (lambda * n < 1e-3) return lambda * (n * n - 1) / 12.0 - lambda * lambda * lambda * (n * n * n * n - 1) / 720.0;
    return 0.5 * n * coth(lambda * n / 2) - 0.5 * coth(lambda / 2);
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline double normal_survival(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

/// e^{-x^2/2}, an upper bound on the standard normal survival function.
inline double mills_bound(double x) {
    detail::require(x >= 0, "mills_bound: x must be nonnegative");
    return std::exp(-0.5 * x * x);
}

/// Finite population z_1..z_J with population mean, variance (divisor J) and max.
class FinitePopulation {
public:
    explicit FinitePopulation(std::vector<double> values) : values_(std::move(values)) {
        detail::require(!values_.empty(), "FinitePopulation: need at least one value");
        long double sum = 0;
        for (double z : values_) sum += z;
        mean_ = static_cast<double>(sum / values_.size());
        long double ss = 0;
        for (double z : values_) ss += (z - static_cast<long double>(mean_)) * (z - static_cast<long double>(mean_));
        variance_ = static_cast<double>(ss / values_.size());
        max_ = *std::max_element(values_.begin(), values_.end());
    }

    std::size_t size() const noexcept { return values_.size(); }
    std::span<const double> values() const noexcept { return values_; }
    double mean() const noexcept { return mean_; }
    double variance() const noexcept { return variance_; }
    double max() const noexcept { return max_; }

private:
    std::vector<double> values_;
    double mean_ = 0;
    double variance_ = 0;
    double max_ = 0;
};

/// Bernstein bound for the mean of m draws without replacement:
///   P(mean >= z_bar + t) <= exp(-m t^2 / (2 sigma_z^2 + 2/3 (z_max - z_bar) t)).
inline double bernstein_swr(const FinitePopulation& pop, std::size_t m, double t) {
    detail::require(m >= 1 && m <= pop.size(), "bernstein_swr: need 1 <= m <= J");
    detail::require(t >= 0, "bernstein_swr: t must be nonnegative");
    if (t == 0) return 1.0;
    const double denom = 2 * pop.variance() + (2.0 / 3.0) * (pop.max() - pop.mean()) * t;
    if (denom <= 0) return 0.0;  // constant population: any positive deviation is impossible
    return std::min(1.0, std::exp(-static_cast<double>(m) * t * t / denom));
}

/// Maximizer of psi(t, l) = l t - log(sinh(l n / 2) / (n sinh(l / 2))) over l >= 0.
inline Optimum chernoff_rank_optimum(std::size_t n, double t) {
    detail::require(n >= 1, "chernoff_rank: n must be positive");
    detail::require(t >= 0, "chernoff_rank: t must be nonnegative");
    const double nd = static_cast<double>(n);
    auto psi = [&](double l) { return l == 0 ? 0.0 : l * t - detail::rank_log_mgf(nd, l); };
    auto dpsi = [&](double l) { return t - detail::rank_log_mgf_derivative(nd, l); };
    return detail::maximize_concave(psi, dpsi);
}

/// Chernoff bound exp(-m sup_l psi(t, l)) on P(mean >= (n+1)/2 + t) for the
/// mean of m ranks drawn without replacement from {1..n}.
inline double chernoff_rank(std::size_t n, std::size_t m, double t) {
    detail::require(m >= 1 && m <= n, "chernoff_rank: need 1 <= m <= n");
    detail::require(t >= 0, "chernoff_rank: t must be nonnegative");
    if (t == 0) return 1.0;
    const double span = (static_cast<double>(n) - 1) / 2;
    if (t > span) return 0.0;
    if (t == span) return std::min(1.0, std::pow(static_cast<double>(n), -static_cast<double>(m)));
    const Optimum opt = chernoff_rank_optimum(n, t);
    return std::min(1.0, std::exp(-static_cast<double>(m) * opt.value));
}

/// Rate function psi_0(t) = sup_{l >= 0} (l t - K(l)) of the standardized
/// null. Infinite above the top of the support.
inline double rate_function(const Family& family, double t) {
    validate_family(family);
    if (!(t > 0)) return 0.0;
    if (std::holds_alternative<Normal>(family)) return 0.5 * t * t;
    const double top = standardized_support_max(family);
    if (t > top) return std::numeric_limits<double>::infinity();
    if (t == top) return -std::log(std::get<Bernoulli>(family).p0);
    auto f = [&](double l) { return l * t - log_mgf_standardized(family, l); };
    auto df = [&](double l) { return t - log_mgf_standardized_derivative(family, l); };
    return detail::maximize_concave(f, df).value;
}

/// Numerical rate function for any family, bypassing closed forms; used to
/// cross-check rate_function.
inline Optimum rate_function_optimum(const Family& family, double t) {
    validate_family(family);
    auto f = [&](double l) { return l * t - log_mgf_standardized(family, l); };
    auto df = [&](double l) { return t - log_mgf_standardized_derivative(family, l); };
    return detail::maximize_concave(f, df);
}

/// Chernoff bound exp(-|S| psi_0(y / sqrt|S|)) on P(Y_S >= y), where Y_S is
/// the normalized sum of |S| standardized null draws. Returns 1 for y <= 0 and
/// 0 when y is beyond the attainable range.
inline double chernoff_exp_family(const Family& family, std::size_t set_size, double y) {
    detail::require(set_size >= 1, "chernoff_exp_family: set size must be positive");
    const double root = std::sqrt(static_cast<double>(set_size));
    const double rate = rate_function(family, y / root);
    if (std::isinf(rate)) return 0.0;
    return std::min(1.0, std::exp(-static_cast<double>(set_size) * rate));
}

/// Permutation-free upper bound on the permutation P-value of a centered scan:
///   |net| exp(-scan^2 / (2 sigma^2 + (x_max - x_bar) 2^{-ql/2} scan)),
/// valid when every net member has length at least 2^ql / 2.
inline double pvalue_bound_bernstein(double scan_value, std::size_t n, int ql, std::size_t net_size,
                                     double sample_var, double sample_max_minus_mean) {
    detail::require(scan_value >= 0, "pvalue_bound_bernstein: scan value must be nonnegative");
    detail::require(n >= 2 && ql >= 0, "pvalue_bound_bernstein: need N >= 2 and ql >= 0");
    detail::require(sample_var >= 0 && sample_max_minus_mean >= 0, "pvalue_bound_bernstein: invalid moments");
    if (scan_value == 0) return 1.0;
    const double denom = 2 * sample_var + sample_max_minus_mean * std::pow(2.0, -ql / 2.0) * scan_value;
    if (denom <= 0) return 0.0;
    return std::min(1.0, static_cast<double>(net_size) * std::exp(-scan_value * scan_value / denom));
}

/// Rank version of the bound, using sigma_r^2 < N^2/12 and r_max - r_bar < N/2:
///   |net| exp(-scan^2 / (N^2/6 + N/2 2^{-ql/2} scan)).
inline double pvalue_bound_rank(double scan_value, std::size_t n, int ql, std::size_t net_size) {
    detail::require(scan_value >= 0, "pvalue_bound_rank: scan value must be nonnegative");
    detail::require(n >= 2 && ql >= 0, "pvalue_bound_rank: need N >= 2 and ql >= 0");
    if (scan_value == 0) return 1.0;
    const double nd = static_cast<double>(n);
    const double denom = nd * nd / 6.0 + nd / 2.0 * std::pow(2.0, -ql / 2.0) * scan_value;
    return std::min(1.0, static_cast<double>(net_size) * std::exp(-scan_value * scan_value / denom));
}

/// Largest ql whose bound is valid for `net`: every member has length >= 2^ql / 2.
inline int valid_bound_ql(std::size_t min_length) {
    detail::require(min_length >= 1, "valid_bound_ql: empty net");
    return detail::floor_log2(min_length) + 1;
}

}  // namespace rankscan
