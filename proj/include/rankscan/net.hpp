// rankscan/net.hpp
//
// Interval classes and approximating nets over {1, ..., N}.
//
// The dyadic net S_b is built scale by scale. At scale j the seed class D_{j,0}
// holds the unions of two adjacent dyadic intervals of scale j-1 (which
// includes the scale-j dyadics themselves; at j = 0 it is the singletons).
// Steps k = 1..b-1 append optional left/right flanks that are dyadic
// intervals of scale j-k; the last step k = b uses flanks of scale j-b+1.
// A flank whose scale would be negative is always empty. Every interval of
// {1..N} is then contained in a member S* with
//     rho(S, S*) >= (1 + 2^{2-b})^{-1/2},
// and the net has at most N 4^{b+1} members.
#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rankscan/errors.hpp"
#include "rankscan/interval.hpp"

namespace rankscan {

enum class NetKind { full, dyadic_net, dyadic_lengths, fixed_length };

/// Parameters of an interval class. For dyadic_lengths, ql/qu are the log2
/// bounds on the lengths; for full they bound the lengths to [2^ql, 2^qu];
/// for dyadic_net they record a restriction applied by restrict_net.
struct NetSpec {
    std::size_t n = 0;
    NetKind kind = NetKind::full;
    int b = 0;
    std::optional<int> ql;
    std::optional<int> qu;
    std::size_t k = 0;  // fixed_length only

    friend bool operator==(const NetSpec&, const NetSpec&) = default;
};

namespace detail {

constexpr bool is_power_of_two(std::size_t x) noexcept { return x != 0 && (x & (x - 1)) == 0; }

constexpr int floor_log2(std::size_t x) noexcept {
    return x == 0 ? -1 : static_cast<int>(std::bit_width(x)) - 1;
}

constexpr int ceil_log2(std::size_t x) noexcept {
    return x <= 1 ? 0 : static_cast<int>(std::bit_width(x - 1));
}

constexpr std::size_t pow2(int e) noexcept { return std::size_t{1} << e; }

}  // namespace detail

inline std::string to_string(NetKind kind) {
    switch (kind) {
        case NetKind::full: return "full";
        case NetKind::dyadic_net: return "dyadic_net";
        case NetKind::dyadic_lengths: return "dyadic_lengths";
        case NetKind::fixed_length: return "fixed_length";
    }
    return "unknown";
}

/// b = max(0, floor(log2 log2 N)).
inline int default_depth(std::size_t n) {
    if (n < 4) return 0;
    return std::max(0, static_cast<int>(std::floor(std::log2(std::log2(static_cast<double>(n))))));
}

/// Length bounds (ql, qu) mirroring the asymptotic conditions
/// ql - 3 log2 log N -> inf and qu - log2 N -> -inf at finite N:
/// ql = ceil(3 log2 log2 N) + 1, qu = ceil(log2 N) - 2. At desk-scale N the
/// first exceeds the second, so ql is clamped to qu.
inline std::pair<int, int> asymptotic_length_bounds(std::size_t n) {
    detail::require(n >= 4, "asymptotic_length_bounds: N must be at least 4");
    const int qu = std::max(0, detail::ceil_log2(n) - 2);
    const double lll = std::log2(std::log2(static_cast<double>(n)));
    const int ql = static_cast<int>(std::ceil(3.0 * lll)) + 1;
    return {std::min(ql, qu), qu};
}

/// Immutable, deduplicated collection of intervals sorted by (length, start).
class ApproximatingNet {
public:
    struct LengthGroup {
        std::size_t length;
        std::size_t begin;  // index range into intervals()
        std::size_t end;
    };

    ApproximatingNet() = default;

    ApproximatingNet(NetSpec spec, std::vector<Interval> intervals)
        : spec_(std::move(spec)), intervals_(std::move(intervals)) {
        detail::require(spec_.n >= 1, "net: N must be positive");
        for (const auto& s : intervals_) {
            detail::require(s.a >= 1 && s.a <= s.b && s.b <= spec_.n,
                            "net: interval outside [1, N]");
        }
        std::sort(intervals_.begin(), intervals_.end(), ByLengthThenStart{});
        intervals_.erase(std::unique(intervals_.begin(), intervals_.end()), intervals_.end());
        for (std::size_t i = 0; i < intervals_.size();) {
            std::size_t j = i;
            while (j < intervals_.size() && intervals_[j].length() == intervals_[i].length()) ++j;
            groups_.push_back({intervals_[i].length(), i, j});
            i = j;
        }
    }

    const NetSpec& spec() const noexcept { return spec_; }
    std::size_t n() const noexcept { return spec_.n; }
    std::size_t size() const noexcept { return intervals_.size(); }
    bool empty() const noexcept { return intervals_.empty(); }
    std::span<const Interval> intervals() const noexcept { return intervals_; }
    std::span<const LengthGroup> groups() const noexcept { return groups_; }

    std::size_t min_length() const noexcept { return groups_.empty() ? 0 : groups_.front().length; }
    std::size_t max_length() const noexcept { return groups_.empty() ? 0 : groups_.back().length; }

    bool contains(const Interval& s) const {
        return std::binary_search(intervals_.begin(), intervals_.end(), s, ByLengthThenStart{});
    }

private:
    NetSpec spec_;
    std::vector<Interval> intervals_;
    std::vector<LengthGroup> groups_;
};

namespace detail {

inline std::vector<Interval> dedup(std::vector<Interval> v) {
    std::sort(v.begin(), v.end(), ByLengthThenStart{});
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

// S_b over {1..n}, n a power of two.
inline std::vector<Interval> dyadic_net_pow2(std::size_t n, int b) {
    const int q = floor_log2(n);
    std::vector<Interval> out;
    for (int j = 0; j <= q; ++j) {
        std::vector<Interval> cur;
        if (j == 0) {
            for (std::size_t a = 1; a <= n; ++a) cur.push_back({a, a});
        } else {
            const std::size_t h = pow2(j - 1);
            const std::size_t blocks = n / h;
            for (std::size_t i = 0; i < blocks; ++i) {
                cur.push_back({1 + i * h, (i + 1) * h});
                if (i + 1 < blocks) cur.push_back({1 + i * h, (i + 2) * h});
            }
        }
        for (int k = 1; k <= b; ++k) {
            const int flank_scale = k < b ? j - k : j - b + 1;
            if (flank_scale < 0) continue;
            const std::size_t len = pow2(flank_scale);
            std::vector<Interval> next = cur;
            for (const auto& s : cur) {
                const bool left = (s.a - 1) % len == 0 && s.a - 1 >= len;
                const bool right = s.b % len == 0 && s.b + len <= n;
                if (left) next.push_back({s.a - len, s.b});
                if (right) next.push_back({s.a, s.b + len});
                if (left && right) next.push_back({s.a - len, s.b + len});
            }
            cur = dedup(std::move(next));
        }
        out.insert(out.end(), cur.begin(), cur.end());
    }
    return out;
}

}  // namespace detail

/// Dyadic approximating net S_b. Non-power-of-two N: built for the next power
/// of two, then clipped to [1, N].
inline ApproximatingNet build_dyadic_net(std::size_t n, int b) {
    detail::require(n >= 2, "build_dyadic_net: N must be at least 2");
    detail::require(b >= 0, "build_dyadic_net: b must be nonnegative");
    detail::require(b < 30, "build_dyadic_net: b too large");
    const std::size_t padded = std::bit_ceil(n);
    auto raw = detail::dyadic_net_pow2(padded, b);
    std::vector<Interval> clipped;
    clipped.reserve(raw.size());
    for (const auto& s : raw) {
        if (s.a > n) continue;
        clipped.push_back({s.a, std::min(s.b, n)});
    }
    return ApproximatingNet(NetSpec{n, NetKind::dyadic_net, b, std::nullopt, std::nullopt, 0},
                            std::move(clipped));
}

inline ApproximatingNet build_dyadic_net(const NetSpec& spec) {
    detail::require(spec.kind == NetKind::dyadic_net, "build_dyadic_net: spec kind must be dyadic_net");
    return build_dyadic_net(spec.n, spec.b);
}

/// Keeps S* iff some interval S with 2^ql <= |S| <= 2^qu satisfies
/// rho(S, S*) >= (1 + 2^{2-b})^{-1/2}.
///
/// The best achievable rho against a length-L class member is closed-form:
/// a shorter S can sit inside S*, a longer one can cover it, so
///   rho* = 1                 if 2^ql <= |S*| <= 2^qu
///        = sqrt(|S*| / 2^ql) if |S*| < 2^ql
///        = sqrt(2^qu / |S*|) if |S*| > 2^qu.
inline ApproximatingNet restrict_net(const ApproximatingNet& net, int ql, int qu) {
    const NetSpec& spec = net.spec();
    detail::require(spec.kind == NetKind::dyadic_net, "restrict_net: net must be a dyadic net");
    detail::require(0 <= ql && ql <= qu, "restrict_net: need 0 <= ql <= qu");
    detail::require(qu <= detail::floor_log2(spec.n), "restrict_net: 2^qu must not exceed N");
    const double lo = static_cast<double>(detail::pow2(ql));
    const double hi = static_cast<double>(detail::pow2(qu));
    // rho^2 >= 1 / (1 + 2^{2-b})  <=>  ratio * (1 + 2^{2-b}) >= 1
    const double slack = 1.0 + std::ldexp(1.0, 2 - spec.b);
    std::vector<Interval> kept;
    for (const auto& s : net.intervals()) {
        const double len = static_cast<double>(s.length());
        bool keep;
        if (len < lo) keep = len * slack >= lo;
        else if (len > hi) keep = hi * slack >= len;
        else keep = true;
        if (keep) kept.push_back(s);
    }
    NetSpec out = spec;
    out.ql = ql;
    out.qu = qu;
    return ApproximatingNet(out, std::move(kept));
}

/// All intervals of length 2^j, min_log_len <= j <= max_log_len.
inline ApproximatingNet build_dyadic_lengths(std::size_t n, int max_log_len, int min_log_len = 0) {
    detail::require(n >= 1, "build_dyadic_lengths: N must be positive");
    detail::require(0 <= min_log_len && min_log_len <= max_log_len,
                    "build_dyadic_lengths: need 0 <= min_log_len <= max_log_len");
    detail::require(max_log_len < 63 && detail::pow2(max_log_len) <= n,
                    "build_dyadic_lengths: 2^max_log_len must not exceed N");
    std::vector<Interval> v;
    for (int j = min_log_len; j <= max_log_len; ++j) {
        const std::size_t len = detail::pow2(j);
        for (std::size_t a = 1; a + len - 1 <= n; ++a) v.push_back({a, a + len - 1});
    }
    return ApproximatingNet(NetSpec{n, NetKind::dyadic_lengths, 0, min_log_len, max_log_len, 0},
                            std::move(v));
}

/// Every interval of {1..N}, optionally with 2^ql <= length <= 2^qu.
inline ApproximatingNet build_full(std::size_t n, std::optional<int> ql = std::nullopt,
                                   std::optional<int> qu = std::nullopt) {
    detail::require(n >= 1, "build_full: N must be positive");
    detail::require(ql.has_value() == qu.has_value(), "build_full: give both ql and qu or neither");
    std::size_t lo = 1, hi = n;
    if (ql) {
        detail::require(0 <= *ql && *ql <= *qu && *qu < 63, "build_full: need 0 <= ql <= qu");
        detail::require(detail::pow2(*ql) <= n, "build_full: 2^ql must not exceed N");
        lo = detail::pow2(*ql);
        hi = std::min(n, detail::pow2(*qu));
    }
    std::vector<Interval> v;
    for (std::size_t len = lo; len <= hi; ++len)
        for (std::size_t a = 1; a + len - 1 <= n; ++a) v.push_back({a, a + len - 1});
    return ApproximatingNet(NetSpec{n, NetKind::full, 0, ql, qu, 0}, std::move(v));
}

/// The N - k + 1 intervals of length exactly k.
inline ApproximatingNet build_fixed_length(std::size_t n, std::size_t k) {
    detail::require(k >= 1 && k <= n, "build_fixed_length: need 1 <= k <= N");
    std::vector<Interval> v;
    for (std::size_t a = 1; a + k - 1 <= n; ++a) v.push_back({a, a + k - 1});
    return ApproximatingNet(NetSpec{n, NetKind::fixed_length, 0, std::nullopt, std::nullopt, k},
                            std::move(v));
}

/// Builds the class described by `spec`; dyadic nets with ql/qu set are
/// restricted after construction.
inline ApproximatingNet build_net(const NetSpec& spec) {
    switch (spec.kind) {
        case NetKind::full: return build_full(spec.n, spec.ql, spec.qu);
        case NetKind::dyadic_lengths:
            return build_dyadic_lengths(spec.n, spec.qu.value_or(detail::floor_log2(spec.n)),
                                        spec.ql.value_or(0));
        case NetKind::fixed_length: return build_fixed_length(spec.n, spec.k);
        case NetKind::dyadic_net: {
            auto net = build_dyadic_net(spec.n, spec.b);
            detail::require(spec.ql.has_value() == spec.qu.has_value(),
                            "build_net: give both ql and qu or neither");
            if (spec.ql) return restrict_net(net, *spec.ql, *spec.qu);
            return net;
        }
    }
    throw ParameterError("build_net: unknown net kind");
}

// ---------------------------------------------------------------------------
// Serialization: a header line
//   netspec N=<N> kind=<kind> b=<b> ql=<ql> qu=<qu>
// followed by one "a b" line per interval in net order. Absent bounds are
// written as "none"; a fixed-length class is written kind=fixed_length:<k>.

inline std::string header_line(const NetSpec& spec) {
    auto opt = [](const std::optional<int>& q) { return q ? std::to_string(*q) : std::string("none"); };
    std::string kind = to_string(spec.kind);
    if (spec.kind == NetKind::fixed_length) kind += ":" + std::to_string(spec.k);
    return "netspec N=" + std::to_string(spec.n) + " kind=" + kind + " b=" + std::to_string(spec.b) +
           " ql=" + opt(spec.ql) + " qu=" + opt(spec.qu);
}

inline void write_net(std::ostream& os, const ApproximatingNet& net) {
    os << header_line(net.spec()) << '\n';
    for (const auto& s : net.intervals()) os << s.a << ' ' << s.b << '\n';
}

inline std::string to_text(const ApproximatingNet& net) {
    std::ostringstream os;
    write_net(os, net);
    return os.str();
}

namespace detail {

inline std::string field(const std::string& token, const std::string& key, std::size_t line) {
    if (token.rfind(key + "=", 0) != 0) throw ParseError("expected field '" + key + "'", line);
    return token.substr(key.size() + 1);
}

inline long long parse_integer(const std::string& text, std::size_t line) {
    std::size_t pos = 0;
    long long value = 0;
    try {
        value = std::stoll(text, &pos);
    } catch (const std::exception&) {
        throw ParseError("invalid integer '" + text + "'", line);
    }
    if (pos != text.size()) throw ParseError("invalid integer '" + text + "'", line);
    return value;
}

inline NetSpec parse_header(const std::string& header) {
    std::istringstream is(header);
    std::string tag, n, kind, b, ql, qu;
    is >> tag >> n >> kind >> b >> ql >> qu;
    if (tag != "netspec") throw ParseError("missing netspec header", 1);
    NetSpec spec;
    const auto nn = parse_integer(field(n, "N", 1), 1);
    if (nn < 1) throw ParseError("N must be positive", 1);
    spec.n = static_cast<std::size_t>(nn);
    const std::string k = field(kind, "kind", 1);
    if (k == "full") spec.kind = NetKind::full;
    else if (k == "dyadic_net") spec.kind = NetKind::dyadic_net;
    else if (k == "dyadic_lengths") spec.kind = NetKind::dyadic_lengths;
    else if (k.rfind("fixed_length:", 0) == 0) {
        spec.kind = NetKind::fixed_length;
        spec.k = static_cast<std::size_t>(parse_integer(k.substr(13), 1));
    } else {
        throw ParseError("unknown net kind '" + k + "'", 1);
    }
    spec.b = static_cast<int>(parse_integer(field(b, "b", 1), 1));
    auto opt = [](const std::string& v) -> std::optional<int> {
        if (v == "none") return std::nullopt;
        return static_cast<int>(parse_integer(v, 1));
    };
    spec.ql = opt(field(ql, "ql", 1));
    spec.qu = opt(field(qu, "qu", 1));
    return spec;
}

}  // namespace detail

inline ApproximatingNet read_net(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw ParseError("empty net file", 1);
    NetSpec spec = detail::parse_header(line);
    std::vector<Interval> v;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        long long a = 0, b = 0;
        if (!(ls >> a >> b) || a < 1 || b < a || static_cast<std::size_t>(b) > spec.n)
            throw ParseError("invalid interval line '" + line + "'", lineno);
        v.push_back({static_cast<std::size_t>(a), static_cast<std::size_t>(b)});
    }
    return ApproximatingNet(spec, std::move(v));
}

/// 64-bit FNV-1a digest of the serialized net, as 16 lowercase hex digits.
inline std::string fingerprint(const ApproximatingNet& net) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : to_text(net)) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace rankscan
