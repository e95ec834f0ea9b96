// rankscan/interval.hpp
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <ostream>

namespace rankscan {

/// Discrete interval {a, ..., b} of 1-based node indices, a <= b.
struct Interval {
    std::size_t a = 1;
    std::size_t b = 1;

    constexpr std::size_t length() const noexcept { return b - a + 1; }
    constexpr bool contains(const Interval& other) const noexcept {
        return a <= other.a && other.b <= b;
    }

    friend constexpr bool operator==(const Interval&, const Interval&) = default;

    friend std::ostream& operator<<(std::ostream& os, const Interval& s) {
        return os << '[' << s.a << ',' << s.b << ']';
    }
};

/// Net order: shorter intervals first, then by start.
struct ByLengthThenStart {
    constexpr bool operator()(const Interval& l, const Interval& r) const noexcept {
        return l.length() != r.length() ? l.length() < r.length() : l.a < r.a;
    }
};

constexpr std::size_t intersection_size(const Interval& s, const Interval& t) noexcept {
    const std::size_t lo = std::max(s.a, t.a);
    const std::size_t hi = std::min(s.b, t.b);
    return lo <= hi ? hi - lo + 1 : 0;
}

constexpr bool intersects(const Interval& s, const Interval& t) noexcept {
    return intersection_size(s, t) > 0;
}

/// Overlap similarity |s ∩ t| / sqrt(|s| |t|), in [0, 1].
inline double rho(const Interval& s, const Interval& t) noexcept {
    const double inter = static_cast<double>(intersection_size(s, t));
    if (inter == 0.0) return 0.0;
    if (s == t) return 1.0;
    return inter / std::sqrt(static_cast<double>(s.length()) * static_cast<double>(t.length()));
}

}  // namespace rankscan
