// rankscan/scan.hpp
//
// Centered, normalized scan statistic
//     scan(x) = max_{S in net} ( sum_{v in S} x_v / sqrt|S|  -  sqrt|S| * mean(x) )
// evaluated from one prefix-sum pass. Intervals of equal length share the
// centering term, so each length group reduces to a maximum window sum.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <type_traits>
#include <utility>
#include <vector>

#include "rankscan/errors.hpp"
#include "rankscan/net.hpp"

namespace rankscan {

struct ScanOutcome {
    double value = -std::numeric_limits<double>::infinity();
    Interval argmax;
    std::map<std::size_t, double> per_scale_max;  // filled on request
};

namespace detail {

inline void check_net(std::size_t n, const ApproximatingNet& net) {
    require(n >= 1, "scan: empty data");
    require(net.n() == n, "scan: net was built for N=" + std::to_string(net.n()) +
                              " but data has N=" + std::to_string(n));
    require(!net.empty(), "scan: empty net");
}

}  // namespace detail

/// Reusable scanner bound to one net; keeps its prefix-sum buffers between
/// calls. Not thread-safe; use one per thread.
///
/// Integer data (ranks) use exact 64-bit prefix sums and are centered per
/// length group. Real data are centered first and accumulated as
/// double-double (two-sum) prefixes, so window sums stay accurate to about
/// one ulp even at N = 2^20.
template <class T>
class Scanner {
public:
    static constexpr bool exact = std::is_integral_v<T>;

    explicit Scanner(const ApproximatingNet& net) : net_(&net) {
        if constexpr (exact) prefix_.resize(net.n() + 1);
        else {
            hi_.resize(net.n() + 1);
            lo_.resize(net.n() + 1);
        }
    }

    const ApproximatingNet& net() const noexcept { return *net_; }

    /// Centered statistic (null_mean = nullopt) or the uncentered statistic
    /// sum (x_v - null_mean) / sqrt|S|.
    ScanOutcome operator()(std::span<const T> data, std::optional<double> null_mean = std::nullopt,
                           bool per_scale = false) {
        detail::check_net(data.size(), *net_);
        const long double center = fill_prefix(data, null_mean);
        ScanOutcome out;
        const auto iv = net_->intervals();
        for (const auto& g : net_->groups()) {
            auto best = window(iv[g.begin]);
            std::size_t best_i = g.begin;
            for (std::size_t i = g.begin + 1; i < g.end; ++i) {
                const auto w = window(iv[i]);
                if (w > best) {
                    best = w;
                    best_i = i;
                }
            }
            const double value = normalize(best, g.length, center);
            if (per_scale) out.per_scale_max[g.length] = value;
            if (value > out.value) {
                out.value = value;
                out.argmax = iv[best_i];
            }
        }
        return out;
    }

    /// Value of the statistic on each net interval, in net order.
    std::vector<double> values(std::span<const T> data, std::optional<double> null_mean = std::nullopt) {
        detail::check_net(data.size(), *net_);
        const long double center = fill_prefix(data, null_mean);
        std::vector<double> out;
        out.reserve(net_->size());
        for (const auto& s : net_->intervals()) out.push_back(normalize(window(s), s.length(), center));
        return out;
    }

private:
    long double fill_prefix(std::span<const T> data, std::optional<double> null_mean) {
        long double center = 0;
        if (null_mean) {
            center = *null_mean;
        } else {
            for (const auto& x : data) center += static_cast<long double>(x);
            center /= static_cast<long double>(data.size());
        }
        if constexpr (exact) {
            prefix_[0] = 0;
            for (std::size_t i = 0; i < data.size(); ++i) prefix_[i + 1] = prefix_[i] + static_cast<std::int64_t>(data[i]);
        } else {
            double hi = 0, lo = 0;
            hi_[0] = lo_[0] = 0;
            for (std::size_t i = 0; i < data.size(); ++i) {
                const double y = static_cast<double>(static_cast<long double>(data[i]) - center);
                const double s = hi + y;  // two-sum
                const double bp = s - hi;
                lo += (hi - (s - bp)) + (y - bp);
                hi = s;
                hi_[i + 1] = hi;
                lo_[i + 1] = lo;
            }
        }
        return center;
    }

    auto window(const Interval& s) const noexcept {
        if constexpr (exact) return prefix_[s.b] - prefix_[s.a - 1];
        else return (hi_[s.b] - hi_[s.a - 1]) + (lo_[s.b] - lo_[s.a - 1]);
    }

    template <class W>
    static double normalize(W w, std::size_t length, long double center) {
        const long double len = static_cast<long double>(length);
        if constexpr (exact) return static_cast<double>((static_cast<long double>(w) - len * center) / std::sqrt(len));
        else return w / std::sqrt(static_cast<double>(length));
    }

    const ApproximatingNet* net_;
    std::vector<std::int64_t> prefix_;
    std::vector<double> hi_, lo_;
};

/// Centered scan over `net`; argmax ties go to the smallest (length, start).
template <class T>
ScanOutcome scan(std::span<const T> data, const ApproximatingNet& net, bool per_scale = false) {
    return Scanner<T>(net)(data, std::nullopt, per_scale);
}

template <class T>
ScanOutcome scan(const std::vector<T>& data, const ApproximatingNet& net, bool per_scale = false) {
    return scan(std::span<const T>(data), net, per_scale);
}

/// Oracle-setting scan max_S sum (x_v - null_mean) / sqrt|S|.
template <class T>
ScanOutcome scan_uncentered(std::span<const T> data, const ApproximatingNet& net, double null_mean) {
    return Scanner<T>(net)(data, null_mean);
}

template <class T>
ScanOutcome scan_uncentered(const std::vector<T>& data, const ApproximatingNet& net, double null_mean) {
    return scan_uncentered(std::span<const T>(data), net, null_mean);
}

/// Direct per-interval summation; reference implementation for testing.
template <class T>
ScanOutcome scan_bruteforce(std::span<const T> data, const ApproximatingNet& net,
                            std::optional<double> null_mean = std::nullopt) {
    detail::check_net(data.size(), net);
    long double mean = 0;
    if (null_mean) {
        mean = *null_mean;
    } else {
        for (const auto& x : data) mean += static_cast<long double>(x);
        mean /= static_cast<long double>(data.size());
    }
    ScanOutcome out;
    for (const auto& s : net.intervals()) {
        long double sum = 0;
        for (std::size_t v = s.a; v <= s.b; ++v) sum += static_cast<long double>(data[v - 1]);
        const long double root = std::sqrt(static_cast<long double>(s.length()));
        const double value = static_cast<double>(sum / root - root * mean);
        auto& slot = out.per_scale_max.try_emplace(s.length(), value).first->second;
        slot = std::max(slot, value);
        if (value > out.value) {
            out.value = value;
            out.argmax = s;
        }
    }
    return out;
}

template <class T>
ScanOutcome scan_bruteforce(const std::vector<T>& data, const ApproximatingNet& net,
                            std::optional<double> null_mean = std::nullopt) {
    return scan_bruteforce(std::span<const T>(data), net, null_mean);
}

}  // namespace rankscan
