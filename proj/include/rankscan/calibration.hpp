// rankscan/calibration.hpp
//
// Calibrating scan statistics: permutation P-values, rank transforms with
// random tie-breaking, Monte Carlo null tables (oracle and rank), the
// fixed-length rank scan with its Bonferroni combination, and exact rank
// moments for planted alternatives.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "rankscan/errors.hpp"
#include "rankscan/models.hpp"
#include "rankscan/net.hpp"
#include "rankscan/parallel.hpp"
#include "rankscan/random.hpp"
#include "rankscan/scan.hpp"

namespace rankscan {

/// Ranks 1..N in increasing order of the data.
using RankVector = std::vector<std::int32_t>;

/// Ranks with uniformly random order among ties: shuffle, then stable sort.
inline RankVector rank_transform(std::span<const double> data, Rng& rng) {
    for (double x : data) detail::require(std::isfinite(x), "rank_transform: data must be finite");
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return data[i] < data[j]; });
    RankVector ranks(data.size());
    for (std::size_t r = 0; r < order.size(); ++r) ranks[order[r]] = static_cast<std::int32_t>(r + 1);
    return ranks;
}

inline RankVector random_permutation_ranks(std::size_t n, Rng& rng) {
    RankVector r(n);
    std::iota(r.begin(), r.end(), 1);
    std::shuffle(r.begin(), r.end(), rng);
    return r;
}

inline const std::vector<double>& default_alphas() {
    static const std::vector<double> alphas{0.01, 0.05, 0.1};
    return alphas;
}

struct TestResult {
    double p_value = 1.0;
    double statistic = 0.0;
    Interval argmax;
    std::map<double, bool> reject_at;
};

inline TestResult make_result(double p_value, const ScanOutcome& outcome,
                              std::span<const double> alphas = default_alphas()) {
    TestResult r{p_value, outcome.value, outcome.argmax, {}};
    for (double a : alphas) r.reject_at[a] = p_value <= a;
    return r;
}

namespace detail {

// Statistic comparisons count near-equal values as ">=", so permuting equal
// values cannot turn a tie into a strict loss through rounding.
inline double tie_floor(double observed) { return observed - 1e-10 * std::max(1.0, std::abs(observed)); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Permutation calibration

/// (1 + #{b : scan(x_pi_b) >= scan(x)}) / (B + 1) over B random permutations.
inline TestResult permutation_pvalue(std::span<const double> data, const ApproximatingNet& net, std::size_t B,
                                     Rng& rng) {
    detail::require(B >= 1, "permutation_pvalue: B must be positive");
    Scanner<double> scanner(net);
    const ScanOutcome observed = scanner(data);
    const double floor = detail::tie_floor(observed.value);
    std::vector<double> x(data.begin(), data.end());
    std::size_t count = 0;
    for (std::size_t b = 0; b < B; ++b) {
        std::shuffle(x.begin(), x.end(), rng);
        if (scanner(x).value >= floor) ++count;
    }
    return make_result(static_cast<double>(count + 1) / static_cast<double>(B + 1), observed);
}

/// Exact permutation P-value |{pi : scan(x_pi) >= scan(x)}| / N!, N <= 9.
inline double permutation_pvalue_exact(std::span<const double> data, const ApproximatingNet& net) {
    detail::require(data.size() <= 9, "permutation_pvalue_exact: N must be at most 9");
    Scanner<double> scanner(net);
    const double floor = detail::tie_floor(scanner(data).value);
    std::vector<std::size_t> perm(data.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::vector<double> x(data.size());
    std::uint64_t count = 0, total = 0;
    do {
        for (std::size_t i = 0; i < perm.size(); ++i) x[i] = data[perm[i]];
        if (scanner(x).value >= floor) ++count;
        ++total;
    } while (std::next_permutation(perm.begin(), perm.end()));
    return static_cast<double>(count) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Null tables

enum class StatisticKind { oracle_scan, rank_scan, rank_scan_fixed_k };

struct CalibrationTable {
    std::size_t n = 0;
    std::string net_fingerprint;
    StatisticKind kind = StatisticKind::rank_scan;
    std::size_t k = 0;               // rank_scan_fixed_k only
    std::optional<Family> family;    // oracle_scan only
    std::uint64_t seed = 0;
    std::vector<double> values;      // sorted ascending

    std::size_t replicates() const noexcept { return values.size(); }
};

inline std::string kind_string(const CalibrationTable& t) {
    switch (t.kind) {
        case StatisticKind::oracle_scan: return "oracle_scan:" + to_string(t.family.value_or(Normal{}));
        case StatisticKind::rank_scan: return "rank_scan";
        case StatisticKind::rank_scan_fixed_k: return "rank_scan_fixed_k:" + std::to_string(t.k);
    }
    return "unknown";
}

/// Oracle statistic: uncentered scan of data standardized by the known null moments.
inline ScanOutcome oracle_statistic(std::span<const double> data, const Family& family, Scanner<double>& scanner) {
    std::vector<double> z(data.begin(), data.end());
    standardize_in_place(family, z);
    return scanner(z, 0.0);
}

/// M Monte Carlo replicates of the null statistic, sorted. Replicate i uses
/// stream i of the seed, so the table does not depend on the thread count.
/// Rank tables need no data model: the null law of the ranks is a uniform
/// random permutation of 1..N.
inline CalibrationTable build_null_table(StatisticKind kind, const ApproximatingNet& net, std::size_t M,
                                         std::uint64_t seed, std::optional<Family> family = std::nullopt) {
    detail::require(M >= 1, "build_null_table: M must be positive");
    CalibrationTable table;
    table.n = net.n();
    table.net_fingerprint = fingerprint(net);
    table.kind = kind;
    table.seed = seed;
    if (kind == StatisticKind::oracle_scan) {
        detail::require(family.has_value(), "build_null_table: oracle tables need a null family");
        validate_family(*family);
        table.family = family;
    } else {
        detail::require(!family.has_value(), "build_null_table: rank tables take no null family");
    }
    if (kind == StatisticKind::rank_scan_fixed_k) {
        detail::require(net.spec().kind == NetKind::fixed_length,
                        "build_null_table: fixed-k tables need a fixed-length class");
        table.k = net.spec().k;
    }
    table.values.resize(M);
    parallel_for(M, [&](std::size_t i) {
        Rng rng = make_stream(seed, StreamDomain::table, i);
        if (kind == StatisticKind::oracle_scan) {
            Scanner<double> scanner(net);
            const auto x = sample_null(*family, net.n(), rng, Scale::standardized);
            table.values[i] = scanner(x, 0.0).value;
        } else {
            Scanner<std::int32_t> scanner(net);
            table.values[i] = scanner(random_permutation_ranks(net.n(), rng)).value;
        }
    });
    std::sort(table.values.begin(), table.values.end());
    return table;
}

/// The ceil((1 - alpha)(M + 1))-th order statistic; +inf when that index
/// exceeds M (the table is too small to reject at this level).
inline double critical_value(const CalibrationTable& table, double alpha) {
    detail::require(alpha > 0 && alpha < 1, "critical_value: alpha must be in (0, 1)");
    detail::require(!table.values.empty(), "critical_value: empty table");
    const double M = static_cast<double>(table.replicates());
    const auto idx = static_cast<std::size_t>(std::ceil((1 - alpha) * (M + 1) - 1e-9));
    if (idx > table.replicates()) return std::numeric_limits<double>::infinity();
    return table.values[std::max<std::size_t>(idx, 1) - 1];
}

/// (1 + #{table values >= statistic}) / (M + 1).
inline double table_pvalue(const CalibrationTable& table, double statistic) {
    const auto it = std::lower_bound(table.values.begin(), table.values.end(), detail::tie_floor(statistic));
    const auto count = static_cast<std::size_t>(table.values.end() - it);
    return static_cast<double>(count + 1) / static_cast<double>(table.replicates() + 1);
}

inline void check_table(const CalibrationTable& table, StatisticKind kind, const ApproximatingNet& net) {
    if (table.kind != kind)
        throw IncompatibleTableError("calibration table has kind " + kind_string(table) + ", expected another kind");
    if (table.n != net.n())
        throw IncompatibleTableError("calibration table built for N=" + std::to_string(table.n) +
                                     ", data has N=" + std::to_string(net.n()));
    if (table.net_fingerprint != fingerprint(net))
        throw IncompatibleTableError("calibration table net fingerprint " + table.net_fingerprint +
                                     " does not match the scanned net " + fingerprint(net));
    if (table.values.empty()) throw IncompatibleTableError("calibration table is empty");
}

/// Rank scan: scan the ranks of the data and read the P-value off a rank table.
inline TestResult rank_scan_test(std::span<const double> data, const ApproximatingNet& net,
                                 const CalibrationTable& table, Rng& rng) {
    check_table(table, StatisticKind::rank_scan, net);
    const RankVector r = rank_transform(data, rng);
    const ScanOutcome out = Scanner<std::int32_t>(net)(r);
    return make_result(table_pvalue(table, out.value), out);
}

/// Oracle scan: known-null standardization, uncentered scan, oracle table.
inline TestResult oracle_scan_test(std::span<const double> data, const ApproximatingNet& net,
                                   const CalibrationTable& table) {
    check_table(table, StatisticKind::oracle_scan, net);
    Scanner<double> scanner(net);
    const ScanOutcome out = oracle_statistic(data, *table.family, scanner);
    return make_result(table_pvalue(table, out.value), out);
}

namespace detail {

inline TestResult rank_small_k_on_ranks(const RankVector& ranks, std::size_t k, const CalibrationTable& table) {
    require(k > 2 && k <= ranks.size(), "rank_scan_small_k: need 2 < k <= N");
    const ApproximatingNet net = build_fixed_length(ranks.size(), k);
    check_table(table, StatisticKind::rank_scan_fixed_k, net);
    const ScanOutcome out = Scanner<std::int32_t>(net)(ranks);
    return make_result(table_pvalue(table, out.value), out);
}

}  // namespace detail

/// Rank scan over all N - k + 1 intervals of length exactly k.
inline TestResult rank_scan_small_k(std::span<const double> data, std::size_t k, const CalibrationTable& table,
                                    Rng& rng) {
    detail::require(k > 2 && k <= data.size(), "rank_scan_small_k: need 2 < k <= N");
    return detail::rank_small_k_on_ranks(rank_transform(data, rng), k, table);
}

/// Fixed-k rank scans for k = 3..k_max on one set of ranks, combined as
/// min(1, (k_max - 2) min_k p_k). The statistic and argmax of the result
/// come from the k attaining the minimum.
inline TestResult rank_scan_bonferroni(std::span<const double> data, std::size_t k_max,
                                       const std::map<std::size_t, CalibrationTable>& tables, Rng& rng) {
    detail::require(k_max >= 3 && k_max <= data.size(), "rank_scan_bonferroni: need 3 <= k_max <= N");
    const RankVector ranks = rank_transform(data, rng);
    std::optional<TestResult> best;
    for (std::size_t k = 3; k <= k_max; ++k) {
        const auto it = tables.find(k);
        detail::require(it != tables.end(), "rank_scan_bonferroni: missing table for k=" + std::to_string(k));
        TestResult r = detail::rank_small_k_on_ranks(ranks, k, it->second);
        if (!best || r.p_value < best->p_value) best = std::move(r);
    }
    const double p = std::min(1.0, static_cast<double>(k_max - 2) * best->p_value);
    ScanOutcome out;
    out.value = best->statistic;
    out.argmax = best->argmax;
    return make_result(p, out);
}

// ---------------------------------------------------------------------------
// Rank moments under a planted alternative: s anomalous coordinates among n.

struct RankMomentInput {
    std::vector<double> p0;                    // p_{i,0}: anomalous i beats a null draw
    std::vector<std::vector<double>> pairwise; // p_{i,j} among anomalous coordinates
    std::vector<double> lambda;                // lambda_i
};

struct RankMoments {
    std::vector<double> anomalous_mean;
    double null_mean = 0;
    std::vector<double> anomalous_variance_leading;  // (lambda_i - p_{i,0}^2) n^2, error O(sn)
    double covariance_order = 0;                     // |Cov(R_i, R_j)| = O(n); reports n
};

inline RankMoments rank_moments(std::size_t s, std::size_t n, const RankMomentInput& in) {
    detail::require(s >= 1 && s < n, "rank_moments: need 1 <= s < n");
    detail::require(in.p0.size() == s && in.pairwise.size() == s && in.lambda.size() == s,
                    "rank_moments: inputs must have s entries");
    const double nd = static_cast<double>(n), sd = static_cast<double>(s);
    RankMoments out;
    double sum_p0 = 0;
    for (std::size_t i = 0; i < s; ++i) {
        detail::require(in.pairwise[i].size() == s, "rank_moments: pairwise matrix must be s x s");
        double row = 0;
        for (std::size_t j = 0; j < s; ++j) {
            if (j == i) continue;
            detail::require(std::abs(in.pairwise[i][j] + in.pairwise[j][i] - 1) < 1e-9,
                            "rank_moments: need p_ij + p_ji = 1");
            row += in.pairwise[i][j];
        }
        out.anomalous_mean.push_back((nd - sd) * in.p0[i] + row + 1);
        out.anomalous_variance_leading.push_back((in.lambda[i] - in.p0[i] * in.p0[i]) * nd * nd);
        sum_p0 += in.p0[i];
    }
    out.null_mean = (nd + sd + 1) / 2 - sum_p0;
    out.covariance_order = nd;
    return out;
}

/// Inputs for s identically distributed anomalous coordinates at natural parameter theta.
inline RankMomentInput identical_anomalies(const Family& family, double theta, std::size_t s) {
    const double p = p_theta(family, theta);
    const double l = lambda_theta(family, theta);
    RankMomentInput in;
    in.p0.assign(s, p);
    in.lambda.assign(s, l);
    in.pairwise.assign(s, std::vector<double>(s, 0.5));
    return in;
}

// ---------------------------------------------------------------------------
// Table files:
//   caltab v1 N=<N> kind=<kind> M=<M> seed=<seed> net=<fingerprint>
// followed by the M sorted values, one per line, %.17g.

inline void write_table(std::ostream& os, const CalibrationTable& t) {
    os << "caltab v1 N=" << t.n << " kind=" << kind_string(t) << " M=" << t.replicates() << " seed=" << t.seed
       << " net=" << t.net_fingerprint << '\n';
    char buf[40];
    for (double v : t.values) {
        std::snprintf(buf, sizeof buf, "%.17g\n", v);
        os << buf;
    }
}

inline CalibrationTable read_table(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw ParseError("empty calibration table", 1);
    std::istringstream hs(line);
    std::string tag, version, n, kind, m, seed, net;
    hs >> tag >> version >> n >> kind >> m >> seed >> net;
    if (tag != "caltab") throw ParseError("missing caltab header", 1);
    if (version != "v1") throw ParseError("unsupported table version '" + version + "'", 1);
    CalibrationTable t;
    const auto nn = detail::parse_integer(detail::field(n, "N", 1), 1);
    if (nn < 1) throw ParseError("N must be positive", 1);
    t.n = static_cast<std::size_t>(nn);
    const std::string k = detail::field(kind, "kind", 1);
    if (k == "rank_scan") {
        t.kind = StatisticKind::rank_scan;
    } else if (k.rfind("rank_scan_fixed_k:", 0) == 0) {
        t.kind = StatisticKind::rank_scan_fixed_k;
        t.k = static_cast<std::size_t>(detail::parse_integer(k.substr(18), 1));
    } else if (k.rfind("oracle_scan:", 0) == 0) {
        t.kind = StatisticKind::oracle_scan;
        try {
            t.family = parse_family(k.substr(12));
        } catch (const ParameterError& e) {
            throw ParseError(e.what(), 1);
        }
    } else {
        throw ParseError("unknown table kind '" + k + "'", 1);
    }
    const auto mm = detail::parse_integer(detail::field(m, "M", 1), 1);
    if (mm < 1) throw ParseError("M must be positive", 1);
    const std::string seed_text = detail::field(seed, "seed", 1);
    try {
        std::size_t pos = 0;
        t.seed = std::stoull(seed_text, &pos);
        if (pos != seed_text.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
        throw ParseError("invalid seed '" + seed_text + "'", 1);
    }
    t.net_fingerprint = detail::field(net, "net", 1);
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::size_t pos = 0;
        double v = 0;
        try {
            v = std::stod(line, &pos);
        } catch (const std::exception&) {
            throw ParseError("invalid table value '" + line + "'", lineno);
        }
        if (pos != line.size()) throw ParseError("invalid table value '" + line + "'", lineno);
        if (!t.values.empty() && v < t.values.back()) throw ParseError("table values are not sorted", lineno);
        t.values.push_back(v);
    }
    if (t.values.size() != static_cast<std::size_t>(mm))
        throw ParseError("table declares M=" + std::to_string(mm) + " but holds " + std::to_string(t.values.size()) +
                             " values",
                         lineno);
    return t;
}

inline void save_table(const std::string& path, const CalibrationTable& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    write_table(os, t);
    if (!os) throw IoError("error writing '" + path + "'");
}

inline CalibrationTable load_table(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "'");
    try {
        return read_table(is);
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what(), e.line());
    }
}

}  // namespace rankscan
