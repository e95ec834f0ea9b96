// rankscan/models.hpp
//
// One-parameter natural exponential families used to simulate nulls and
// planted anomalies. F_theta has density exp(theta x - log phi0(theta)) with
// respect to the base law F_0:
//   normal    F_0 = N(0, 1),          F_theta = N(theta, 1)
//   poisson   F_0 = Poisson(lambda0), F_theta = Poisson(lambda0 e^theta)
//   bernoulli F_0 = Bernoulli(p0),    F_theta = Bernoulli(logistic(logit p0 + theta))
// Samples are on the raw scale unless Scale::standardized is requested, in
// which case they are mapped through (x - mu0) / sigma0 of the null.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "rankscan/errors.hpp"
#include "rankscan/interval.hpp"
#include "rankscan/random.hpp"

namespace rankscan {

struct Normal {
    friend bool operator==(const Normal&, const Normal&) = default;
};
struct Poisson {
    double lambda0 = 1.0;
    friend bool operator==(const Poisson&, const Poisson&) = default;
};
struct Bernoulli {
    double p0 = 0.5;
    friend bool operator==(const Bernoulli&, const Bernoulli&) = default;
};

using Family = std::variant<Normal, Poisson, Bernoulli>;

enum class Scale { raw, standardized };

struct Moments {
    double mean = 0;
    double variance = 0;
};

struct ModelSpec {
    Family family = Normal{};
    double theta = 0;
};

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

// ---------------------------------------------------------------------------
// Parameters and moments

inline void validate_family(const Family& family) {
    std::visit(Overloaded{
                   [](const Normal&) {},
                   [](const Poisson& f) {
                       detail::require(std::isfinite(f.lambda0) && f.lambda0 > 0,
                                       "poisson: lambda0 must be positive");
                   },
                   [](const Bernoulli& f) {
                       detail::require(f.p0 > 0 && f.p0 < 1, "bernoulli: p0 must lie in (0, 1)");
                   },
               },
               family);
}

inline double logistic(double z) {
    return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

/// Success probability of the tilted Bernoulli.
inline double bernoulli_tilted(double p0, double theta) {
    return logistic(std::log(p0) - std::log1p(-p0) + theta);
}

/// Throws unless theta lies in [0, theta_star) for the family.
inline void validate_theta(const Family& family, double theta) {
    validate_family(family);
    detail::require(std::isfinite(theta) && theta >= 0, "theta must be finite and nonnegative");
    if (const auto* f = std::get_if<Bernoulli>(&family))
        detail::require(bernoulli_tilted(f->p0, theta) < 1.0, "bernoulli: theta too large (p rounds to 1)");
    if (const auto* f = std::get_if<Poisson>(&family))
        detail::require(std::isfinite(f->lambda0 * std::exp(theta)), "poisson: theta too large");
}

/// Mean and variance of F_0 on the raw scale.
inline Moments null_moments(const Family& family) {
    return std::visit(Overloaded{
                          [](const Normal&) { return Moments{0.0, 1.0}; },
                          [](const Poisson& f) { return Moments{f.lambda0, f.lambda0}; },
                          [](const Bernoulli& f) { return Moments{f.p0, f.p0 * (1 - f.p0)}; },
                      },
                      family);
}

/// Exact mean and variance of F_theta, raw or after the null standardization.
inline Moments mean_var_theta(const Family& family, double theta, Scale scale = Scale::raw) {
    validate_theta(family, theta);
    const Moments raw = std::visit(
        Overloaded{
            [&](const Normal&) { return Moments{theta, 1.0}; },
            [&](const Poisson& f) {
                const double rate = f.lambda0 * std::exp(theta);
                return Moments{rate, rate};
            },
            [&](const Bernoulli& f) {
                const double p = bernoulli_tilted(f.p0, theta);
                return Moments{p, p * (1 - p)};
            },
        },
        family);
    if (scale == Scale::raw) return raw;
    const Moments null = null_moments(family);
    return {(raw.mean - null.mean) / std::sqrt(null.variance), raw.variance / null.variance};
}

namespace detail {

// Shortest text that parses back to the same double.
inline std::string format_real(double x) {
    char buf[32];
    for (int digits = 6; digits <= 17; ++digits) {
        std::snprintf(buf, sizeof buf, "%.*g", digits, x);
        if (std::strtod(buf, nullptr) == x) break;
    }
    return buf;
}

}  // namespace detail

inline std::string to_string(const Family& family) {
    return std::visit(Overloaded{
                          [](const Normal&) { return std::string("normal"); },
                          [](const Poisson& f) { return "poisson:" + detail::format_real(f.lambda0); },
                          [](const Bernoulli& f) { return "bernoulli:" + detail::format_real(f.p0); },
                      },
                      family);
}

/// "normal", "poisson[:lambda0]" or "bernoulli[:p0]".
inline Family parse_family(const std::string& text) {
    const auto colon = text.find(':');
    const std::string name = text.substr(0, colon);
    double param = std::numeric_limits<double>::quiet_NaN();
    if (colon != std::string::npos) {
        try {
            param = std::stod(text.substr(colon + 1));
        } catch (const std::exception&) {
            throw ParameterError("invalid family parameter in '" + text + "'");
        }
    }
    Family f;
    if (name == "normal") {
        detail::require(colon == std::string::npos, "normal family takes no parameter");
        f = Normal{};
    } else if (name == "poisson") {
        f = Poisson{std::isnan(param) ? 1.0 : param};
    } else if (name == "bernoulli") {
        f = Bernoulli{std::isnan(param) ? 0.5 : param};
    } else {
        throw ParameterError("unknown family '" + text + "'");
    }
    validate_family(f);
    return f;
}

// ---------------------------------------------------------------------------
// Sampling

/// One raw draw from F_theta.
inline double draw(const Family& family, double theta, Rng& rng) {
    return std::visit(Overloaded{
                          [&](const Normal&) { return std::normal_distribution<double>(theta, 1.0)(rng); },
                          [&](const Poisson& f) {
                              return static_cast<double>(
                                  std::poisson_distribution<long long>(f.lambda0 * std::exp(theta))(rng));
                          },
                          [&](const Bernoulli& f) {
                              return std::bernoulli_distribution(bernoulli_tilted(f.p0, theta))(rng) ? 1.0
                                                                                                    : 0.0;
                          },
                      },
                      family);
}

inline void standardize_in_place(const Family& family, std::span<double> data) {
    const Moments m = null_moments(family);
    const double sd = std::sqrt(m.variance);
    for (auto& x : data) x = (x - m.mean) / sd;
}

/// N independent draws from F_0.
inline std::vector<double> sample_null(const Family& family, std::size_t n, Rng& rng,
                                       Scale scale = Scale::raw) {
    validate_family(family);
    std::vector<double> out(n);
    for (auto& x : out) x = draw(family, 0.0, rng);
    if (scale == Scale::standardized) standardize_in_place(family, out);
    return out;
}

/// A planted segment: entries of `where` are drawn from F_theta.
struct PlantedSignal {
    Interval where;
    double theta = 0;
};

/// Null draws everywhere except on the planted segments.
inline std::vector<double> sample_with_signals(const Family& family, std::size_t n,
                                               std::span<const PlantedSignal> signals, Rng& rng,
                                               Scale scale = Scale::raw) {
    validate_family(family);
    std::vector<double> theta(n, 0.0);
    for (const auto& s : signals) {
        detail::require(s.where.a >= 1 && s.where.a <= s.where.b && s.where.b <= n,
                        "planted signal outside [1, N]");
        validate_theta(family, s.theta);
        for (std::size_t v = s.where.a; v <= s.where.b; ++v) theta[v - 1] = s.theta;
    }
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = draw(family, theta[i], rng);
    if (scale == Scale::standardized) standardize_in_place(family, out);
    return out;
}

/// Single anomalous interval with amplitude theta_S = t sqrt(2 log N / |S|).
struct AlternativeSpec {
    std::size_t n = 0;
    Interval anomaly;
    double amplitude_t = 0;
    Family family = Normal{};
};

inline double signal_theta(std::size_t n, std::size_t set_size, double t) {
    detail::require(n >= 2 && set_size >= 1, "signal_theta: need N >= 2 and |S| >= 1");
    return t * std::sqrt(2.0 * std::log(static_cast<double>(n)) / static_cast<double>(set_size));
}

inline std::vector<double> sample_alternative(const AlternativeSpec& alt, Rng& rng, Scale scale = Scale::raw) {
    detail::require(alt.amplitude_t >= 0, "sample_alternative: t must be nonnegative");
    const PlantedSignal sig{alt.anomaly, signal_theta(alt.n, alt.anomaly.length(), alt.amplitude_t)};
    return sample_with_signals(alt.family, alt.n, std::span<const PlantedSignal>(&sig, 1), rng, scale);
}

/// Elementwise clamp to [-t, t].
inline std::vector<double> censor(std::span<const double> data, double t) {
    detail::require(t >= 0, "censor: threshold must be nonnegative");
    std::vector<double> out(data.begin(), data.end());
    for (auto& x : out) x = std::clamp(x, -t, t);
    return out;
}

// ---------------------------------------------------------------------------
// Rank-relevant functionals

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

namespace detail {

// Poisson pmf on 0..K, truncated once k > rate and the remaining mass < tail.
inline std::vector<double> poisson_pmf(double rate, double tail = 1e-12) {
    std::vector<double> pmf;
    double cdf = 0;
    const double cap = rate + 60.0 * std::sqrt(rate) + 100.0;
    for (std::size_t k = 0;; ++k) {
        const double kd = static_cast<double>(k);
        const double p = std::exp(kd * std::log(rate) - rate - std::lgamma(kd + 1.0));
        pmf.push_back(p);
        cdf += p;
        if ((kd > rate && 1.0 - cdf < tail) || kd > cap) break;
    }
    return pmf;
}

template <class F>
double simpson(F&& f, double lo, double hi, int intervals) {
    const double h = (hi - lo) / intervals;
    double s = f(lo) + f(hi);
    for (int i = 1; i < intervals; ++i) s += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2 * std::numbers::pi); }

}  // namespace detail

/// P(Y > X) + P(Y = X) / 2 for independent Y ~ Bernoulli(p1), X ~ Bernoulli(p0).
inline double bernoulli_win_probability(double p0, double p1) {
    return p1 * (1 - p0) + 0.5 * (p1 * p0 + (1 - p1) * (1 - p0));
}

/// p_theta = P(Y > X) + P(Y = X) / 2 with Y ~ F_theta, X ~ F_0 independent.
inline double p_theta(const Family& family, double theta) {
    validate_theta(family, theta);
    return std::visit(
        Overloaded{
            // Y - X ~ N(theta, 2)
            [&](const Normal&) { return normal_cdf(theta / std::numbers::sqrt2); },
            [&](const Poisson& f) {
                const auto px = detail::poisson_pmf(f.lambda0);
                const auto py = detail::poisson_pmf(f.lambda0 * std::exp(theta));
                double below = 0, p = 0;
                for (std::size_t k = 0; k < py.size(); ++k) {
                    const double fx = k < px.size() ? px[k] : 0.0;
                    p += py[k] * (below + 0.5 * fx);
                    below += fx;
                }
                return p;
            },
            [&](const Bernoulli& f) { return bernoulli_win_probability(f.p0, bernoulli_tilted(f.p0, theta)); },
        },
        family);
}

/// lambda = P(X > Y1, X > Y2) + P(X = Y1 > Y2) + P(X = Y1 = Y2) / 3 with
/// X ~ F_theta and Y1, Y2 ~ F_0 independent; the second moment of a rank.
inline double lambda_theta(const Family& family, double theta) {
    validate_theta(family, theta);
    return std::visit(
        Overloaded{
            [&](const Normal&) {
                auto integrand = [&](double x) {
                    const double c = normal_cdf(x);
                    return detail::normal_pdf(x - theta) * c * c;
                };
                return detail::simpson(integrand, theta - 12.0, theta + 12.0, 8000);
            },
            [&](const Poisson& f) {
                const auto p0 = detail::poisson_pmf(f.lambda0);
                const auto p1 = detail::poisson_pmf(f.lambda0 * std::exp(theta));
                double below = 0, lam = 0;
                for (std::size_t k = 0; k < p1.size(); ++k) {
                    const double fk = k < p0.size() ? p0[k] : 0.0;
                    lam += p1[k] * (below * below + fk * below + fk * fk / 3.0);
                    below += fk;
                }
                return lam;
            },
            [&](const Bernoulli& f) {
                const double q0 = 1 - f.p0;
                const double p1 = bernoulli_tilted(f.p0, theta);
                return (1 - p1) * (q0 * q0 / 3.0) + p1 * (q0 * q0 + f.p0 * q0 + f.p0 * f.p0 / 3.0);
            },
        },
        family);
}

/// Upsilon_0 = E[max(X, Y)] / 2 for X, Y iid from the standardized null.
inline double upsilon0(const Family& family) {
    validate_family(family);
    return std::visit(Overloaded{
                          [](const Normal&) { return 1.0 / (2.0 * std::sqrt(std::numbers::pi)); },
                          [](const Poisson& f) {
                              // E max(P1, P2) = sum_{k >= 0} (1 - F(k)^2)
                              const auto pmf = detail::poisson_pmf(f.lambda0, 1e-16);
                              double cdf = 0, emax = 0;
                              for (double p : pmf) {
                                  cdf += p;
                                  emax += 1.0 - std::min(1.0, cdf * cdf);
                              }
                              return 0.5 * (emax - f.lambda0) / std::sqrt(f.lambda0);
                          },
                          [](const Bernoulli& f) {
                              const double q = 1 - f.p0;
                              const double sd = std::sqrt(f.p0 * q);
                              // max is the low value only when both draws are low
                              const double emax = ((1 - q * q) * q - q * q * f.p0) / sd;
                              return 0.5 * emax;
                          },
                      },
                      family);
}

/// Monte Carlo estimate of Upsilon_0 with its standard error.
inline std::pair<double, double> upsilon0_monte_carlo(const Family& family, std::size_t pairs, Rng& rng) {
    validate_family(family);
    detail::require(pairs >= 2, "upsilon0_monte_carlo: need at least two pairs");
    const Moments m = null_moments(family);
    const double sd = std::sqrt(m.variance);
    double sum = 0, sumsq = 0;
    for (std::size_t i = 0; i < pairs; ++i) {
        const double x = (draw(family, 0, rng) - m.mean) / sd;
        const double y = (draw(family, 0, rng) - m.mean) / sd;
        const double h = 0.5 * std::max(x, y);
        sum += h;
        sumsq += h * h;
    }
    const double n = static_cast<double>(pairs);
    const double mean = sum / n;
    const double var = (sumsq - n * mean * mean) / (n - 1);
    return {mean, std::sqrt(var / n)};
}

// ---------------------------------------------------------------------------
// Cumulant generating function of the standardized null, K(l) = log E e^{l X}.

inline double log_mgf_standardized(const Family& family, double lambda) {
    validate_family(family);
    return std::visit(Overloaded{
                          [&](const Normal&) { return 0.5 * lambda * lambda; },
                          [&](const Poisson& f) {
                              const double sd = std::sqrt(f.lambda0);
                              const double u = lambda / sd;
                              return f.lambda0 * std::expm1(u) - f.lambda0 * u;
                          },
                          [&](const Bernoulli& f) {
                              const double sd = std::sqrt(f.p0 * (1 - f.p0));
                              const double u = lambda / sd;
                              // log(1 - p + p e^u) - p u, evaluated without overflow
                              const double a = std::log1p(-f.p0);
                              const double b = std::log(f.p0) + u;
                              const double hi = std::max(a, b);
                              return hi + std::log1p(std::exp(std::min(a, b) - hi)) - f.p0 * u;
                          },
                      },
                      family);
}

/// K'(l): mean of the standardized null tilted by l.
inline double log_mgf_standardized_derivative(const Family& family, double lambda) {
    validate_family(family);
    return std::visit(Overloaded{
                          [&](const Normal&) { return lambda; },
                          [&](const Poisson& f) {
                              const double sd = std::sqrt(f.lambda0);
                              return f.lambda0 / sd * std::expm1(lambda / sd);
                          },
                          [&](const Bernoulli& f) {
                              const double sd = std::sqrt(f.p0 * (1 - f.p0));
                              const double p = bernoulli_tilted(f.p0, lambda / sd);
                              return (p - f.p0) / sd;
                          },
                      },
                      family);
}

/// Largest value of the standardized null (infinite for normal and Poisson).
inline double standardized_support_max(const Family& family) {
    return std::visit(Overloaded{
                          [](const Normal&) { return std::numeric_limits<double>::infinity(); },
                          [](const Poisson&) { return std::numeric_limits<double>::infinity(); },
                          [](const Bernoulli& f) { return (1 - f.p0) / std::sqrt(f.p0 * (1 - f.p0)); },
                      },
                      family);
}

}  // namespace rankscan
