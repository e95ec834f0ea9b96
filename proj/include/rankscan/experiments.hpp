// rankscan/experiments.hpp
//
// Pipelines behind the command-line tool: data ingestion and binning, test
// suites with their calibration tables, detection, identification, power
// curves and table calibration.
#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "rankscan/calibration.hpp"
#include "rankscan/errors.hpp"
#include "rankscan/identification.hpp"
#include "rankscan/models.hpp"
#include "rankscan/net.hpp"
#include "rankscan/parallel.hpp"
#include "rankscan/random.hpp"
#include "rankscan/scan.hpp"

namespace rankscan {

// ---------------------------------------------------------------------------
// Ingestion

enum class InputFormat { plain, csv };
enum class Aggregator { sum, median };

struct IngestOptions {
    InputFormat format = InputFormat::plain;
    std::string column;  // csv only; empty means the first column
    std::size_t bin_width = 1;
    Aggregator aggregator = Aggregator::sum;
};

namespace detail {

inline double parse_real(std::string_view text, std::size_t line) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
    double v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v))
        throw ParseError("not a finite number: '" + std::string(text) + "'", line);
    return v;
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace detail

/// Raw values: whitespace-separated numbers (plain; blank lines and '#'
/// comments skipped) or one column of a CSV file with a header row.
inline std::vector<double> read_values(std::istream& is, const IngestOptions& opt) {
    std::vector<double> v;
    std::string line;
    std::size_t lineno = 0;
    if (opt.format == InputFormat::plain) {
        while (std::getline(is, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.resize(hash);
            std::istringstream ls(line);
            std::string tok;
            while (ls >> tok) v.push_back(detail::parse_real(tok, lineno));
        }
    } else {
        if (!std::getline(is, line)) throw ParseError("missing CSV header", 1);
        ++lineno;
        const auto header = detail::split_csv(line);
        std::size_t col = 0;
        if (!opt.column.empty()) {
            auto it = std::find_if(header.begin(), header.end(), [&](const std::string& h) {
                std::string t = h;
                t.erase(0, t.find_first_not_of(" \t\""));
                t.erase(t.find_last_not_of(" \t\"") + 1);
                return t == opt.column;
            });
            if (it == header.end()) throw ParseError("CSV column '" + opt.column + "' not found", 1);
            col = static_cast<std::size_t>(it - header.begin());
        }
        while (std::getline(is, line)) {
            ++lineno;
            if (line.empty() || line == "\r") continue;
            const auto fields = detail::split_csv(line);
            if (col >= fields.size()) throw ParseError("missing CSV field", lineno);
            v.push_back(detail::parse_real(fields[col], lineno));
        }
    }
    return v;
}

/// Consecutive bins of bin_width aggregated by sum or median; a trailing
/// partial bin is dropped.
inline std::vector<double> bin_values(const std::vector<double>& raw, std::size_t bin_width, Aggregator agg) {
    detail::require(bin_width >= 1, "bin width must be positive");
    const std::size_t bins = raw.size() / bin_width;
    std::vector<double> out(bins);
    for (std::size_t i = 0; i < bins; ++i) {
        const auto first = raw.begin() + static_cast<std::ptrdiff_t>(i * bin_width);
        const auto last = first + static_cast<std::ptrdiff_t>(bin_width);
        if (agg == Aggregator::sum) {
            long double s = 0;
            for (auto it = first; it != last; ++it) s += *it;
            out[i] = static_cast<double>(s);
        } else {
            out[i] = median_of(std::vector<double>(first, last));
        }
    }
    return out;
}

inline std::vector<double> ingest(std::istream& is, const IngestOptions& opt) {
    detail::require(opt.bin_width >= 1, "bin width must be positive");
    const auto raw = read_values(is, opt);
    if (raw.empty()) throw IoError("input holds no values");
    auto out = bin_values(raw, opt.bin_width, opt.aggregator);
    if (out.empty()) throw IoError("input has fewer values than one bin");
    return out;
}

inline std::vector<double> ingest(const std::string& path, const IngestOptions& opt) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open '" + path + "'");
    try {
        return ingest(is, opt);
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what(), e.line());
    } catch (const IoError& e) {
        throw IoError(path + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Configuration

enum class TestKind { oracle, perm, rank, rank_small, rank_bonferroni };
enum class NetChoice { dyadic_net, dyadic_lengths, full };

inline std::string to_string(TestKind t) {
    switch (t) {
        case TestKind::oracle: return "oracle";
        case TestKind::perm: return "perm";
        case TestKind::rank: return "rank";
        case TestKind::rank_small: return "rank-small";
        case TestKind::rank_bonferroni: return "rank-bonferroni";
    }
    return "unknown";
}

struct ExperimentConfig {
    std::size_t n = 0;
    Family family = Normal{};
    std::vector<TestKind> tests{TestKind::rank};
    NetChoice net = NetChoice::dyadic_lengths;
    std::optional<int> b;
    std::optional<int> ql;
    std::optional<int> qu;
    std::size_t k = 8;
    std::size_t kmax = 8;
    double alpha = 0.05;
    std::size_t permutations = 200;
    std::size_t replicates = 1000;
    std::size_t table_replicates = 1000;
    std::uint64_t seed = 1;
    std::vector<Interval> anomalies;
    std::vector<double> t_grid;
    std::optional<double> theta;
    PostProcess post = PostProcess::merge;
};

inline void validate(const ExperimentConfig& c) {
    detail::require(c.n >= 2, "N must be at least 2");
    validate_family(c.family);
    detail::require(!c.tests.empty(), "no test selected");
    detail::require(c.alpha > 0 && c.alpha < 1, "alpha must be in (0, 1)");
    detail::require(c.permutations >= 1, "permutations must be positive");
    detail::require(c.replicates >= 1, "replicates must be positive");
    detail::require(c.table_replicates >= 1, "table replicates must be positive");
    for (const auto& a : c.anomalies)
        detail::require(a.a >= 1 && a.a <= a.b && a.b <= c.n, "anomaly must lie inside [1, N]");
    for (double t : c.t_grid) detail::require(t >= 0 && std::isfinite(t), "t values must be nonnegative");
}

/// The scanned class for the oracle, permutation and rank tests.
inline ApproximatingNet make_net(const ExperimentConfig& c) {
    switch (c.net) {
        case NetChoice::dyadic_lengths:
            return build_dyadic_lengths(c.n, c.qu.value_or(detail::floor_log2(c.n)), c.ql.value_or(0));
        case NetChoice::full: {
            detail::require(c.ql.has_value() == c.qu.has_value(), "give both --ql and --qu or neither");
            return build_full(c.n, c.ql, c.qu);
        }
        case NetChoice::dyadic_net: {
            detail::require(c.ql.has_value() == c.qu.has_value(), "give both --ql and --qu or neither");
            auto net = build_dyadic_net(c.n, c.b.value_or(default_depth(c.n)));
            if (c.ql) return restrict_net(net, *c.ql, *c.qu);
            return net;
        }
    }
    throw ParameterError("unknown net choice");
}

// ---------------------------------------------------------------------------
// Test suites: the net plus whatever tables the selected tests need.

struct TestSuite {
    ApproximatingNet net;
    std::optional<CalibrationTable> oracle_table;
    std::optional<CalibrationTable> rank_table;
    std::map<std::size_t, CalibrationTable> fixed_k_tables;
    std::size_t k = 0;
    std::size_t kmax = 0;
    std::size_t permutations = 200;
};

/// Tables needed by `test` under configuration c, built from c.seed.
inline std::vector<CalibrationTable> build_tables(const ExperimentConfig& c, TestKind test,
                                                  const ApproximatingNet& net) {
    switch (test) {
        case TestKind::perm: return {};
        case TestKind::oracle:
            return {build_null_table(StatisticKind::oracle_scan, net, c.table_replicates, c.seed, c.family)};
        case TestKind::rank: return {build_null_table(StatisticKind::rank_scan, net, c.table_replicates, c.seed)};
        case TestKind::rank_small:
            detail::require(c.k > 2 && c.k <= c.n, "--k must satisfy 2 < k <= N");
            return {build_null_table(StatisticKind::rank_scan_fixed_k, build_fixed_length(c.n, c.k),
                                     c.table_replicates, c.seed)};
        case TestKind::rank_bonferroni: {
            detail::require(c.kmax >= 3 && c.kmax <= c.n, "--kmax must satisfy 3 <= kmax <= N");
            std::vector<CalibrationTable> out;
            for (std::size_t k = 3; k <= c.kmax; ++k)
                out.push_back(build_null_table(StatisticKind::rank_scan_fixed_k, build_fixed_length(c.n, k),
                                               c.table_replicates, c.seed));
            return out;
        }
    }
    return {};
}

inline void install_table(TestSuite& suite, CalibrationTable table) {
    switch (table.kind) {
        case StatisticKind::oracle_scan: suite.oracle_table = std::move(table); break;
        case StatisticKind::rank_scan: suite.rank_table = std::move(table); break;
        case StatisticKind::rank_scan_fixed_k: suite.fixed_k_tables[table.k] = std::move(table); break;
    }
}

/// Builds the net and any missing tables for every test in c.tests.
/// `preloaded` tables take precedence over freshly simulated ones.
inline TestSuite build_suite(const ExperimentConfig& c, std::vector<CalibrationTable> preloaded = {}) {
    validate(c);
    TestSuite suite;
    suite.net = make_net(c);
    suite.k = c.k;
    suite.kmax = c.kmax;
    suite.permutations = c.permutations;
    for (auto& t : preloaded) install_table(suite, std::move(t));
    for (TestKind test : c.tests) {
        const bool have = (test == TestKind::perm) || (test == TestKind::oracle && suite.oracle_table) ||
                          (test == TestKind::rank && suite.rank_table) ||
                          (test == TestKind::rank_small && suite.fixed_k_tables.count(c.k)) ||
                          (test == TestKind::rank_bonferroni && suite.fixed_k_tables.count(3));
        if (!have)
            for (auto& t : build_tables(c, test, suite.net)) install_table(suite, std::move(t));
    }
    return suite;
}

namespace detail {

inline const CalibrationTable& need(const std::optional<CalibrationTable>& t, const char* what) {
    if (!t) throw IncompatibleTableError(std::string("no ") + what + " table available; run the calibrate mode");
    return *t;
}

}  // namespace detail

/// Runs one test. perm_rng drives permutations, rank_rng rank tie-breaking.
inline TestResult run_test(const TestSuite& suite, TestKind test, std::span<const double> data, Rng& perm_rng,
                           Rng& rank_rng) {
    switch (test) {
        case TestKind::oracle:
            return oracle_scan_test(data, suite.net, detail::need(suite.oracle_table, "oracle"));
        case TestKind::perm: return permutation_pvalue(data, suite.net, suite.permutations, perm_rng);
        case TestKind::rank: return rank_scan_test(data, suite.net, detail::need(suite.rank_table, "rank"), rank_rng);
        case TestKind::rank_small: {
            const auto it = suite.fixed_k_tables.find(suite.k);
            if (it == suite.fixed_k_tables.end())
                throw IncompatibleTableError("no fixed-length rank table for k=" + std::to_string(suite.k));
            return rank_scan_small_k(data, suite.k, it->second, rank_rng);
        }
        case TestKind::rank_bonferroni:
            return rank_scan_bonferroni(data, suite.kmax, suite.fixed_k_tables, rank_rng);
    }
    throw ParameterError("unknown test");
}

/// Simulated data for replicate r: null draws with the configured anomalies
/// planted at natural parameter theta.
inline std::vector<double> simulate(const ExperimentConfig& c, double theta, std::uint64_t replicate) {
    Rng rng = make_stream(c.seed, StreamDomain::data, replicate);
    std::vector<PlantedSignal> sig;
    for (const auto& a : c.anomalies) sig.push_back({a, theta});
    return sample_with_signals(c.family, c.n, sig, rng);
}

/// Detection on given data; one result per test in c.tests.
inline std::vector<TestResult> run_detect(const ExperimentConfig& c, const TestSuite& suite,
                                          std::span<const double> data) {
    detail::require(data.size() == c.n, "data length does not match N");
    std::vector<TestResult> out;
    for (TestKind test : c.tests) {
        Rng perm = make_stream(c.seed, StreamDomain::permutation, 0);
        Rng ranks = make_stream(c.seed, StreamDomain::ranks, 0);
        out.push_back(run_test(suite, test, data, perm, ranks));
    }
    return out;
}

inline IdentificationReport run_identify(const ExperimentConfig& c, const TestSuite& suite,
                                         std::span<const double> data, TestKind test) {
    detail::require(data.size() == c.n, "data length does not match N");
    IdentificationReport report;
    if (test == TestKind::rank) {
        Rng ranks = make_stream(c.seed, StreamDomain::ranks, 0);
        report = identify_rank_scan(data, suite.net, detail::need(suite.rank_table, "rank"), c.alpha, ranks, c.post);
    } else if (test == TestKind::oracle) {
        report = identify_oracle_scan(data, suite.net, detail::need(suite.oracle_table, "oracle"), c.alpha, c.post);
    } else {
        throw ParameterError("identification supports the oracle and rank tests");
    }
    return report;
}

// ---------------------------------------------------------------------------
// Power curves

struct PowerRow {
    double t = 0;
    TestKind test = TestKind::rank;
    std::size_t replicates = 0;
    std::size_t rejections = 0;
    double power = 0;
    double moe = 0;  // 1.96 sqrt(p (1 - p) / R)
};

/// Rejection frequencies at level c.alpha for each t in c.t_grid and each
/// test, over c.replicates replicates with a single anomaly (c.anomalies[0])
/// at theta_S = t sqrt(2 log N / |S|). Replicate r reuses the same noise
/// stream for every t and test.
inline std::vector<PowerRow> run_power_curve(const ExperimentConfig& c, const TestSuite& suite) {
    validate(c);
    detail::require(!c.t_grid.empty(), "power mode needs a nonempty t grid");
    detail::require(c.anomalies.size() == 1, "power mode needs exactly one anomaly");
    const Interval s = c.anomalies.front();
    std::vector<PowerRow> rows;
    for (std::size_t ti = 0; ti < c.t_grid.size(); ++ti) {
        const double t = c.t_grid[ti];
        const double theta = signal_theta(c.n, s.length(), t);
        validate_theta(c.family, theta);
        std::vector<std::vector<char>> reject(c.tests.size(), std::vector<char>(c.replicates, 0));
        parallel_for(c.replicates, [&](std::size_t r) {
            const auto data = simulate(c, theta, r);
            for (std::size_t j = 0; j < c.tests.size(); ++j) {
                const std::uint64_t stream = (static_cast<std::uint64_t>(ti) << 32) | r;
                Rng perm = make_stream(c.seed, StreamDomain::permutation, stream);
                Rng ranks = make_stream(c.seed, StreamDomain::ranks, stream);
                reject[j][r] = run_test(suite, c.tests[j], data, perm, ranks).p_value <= c.alpha;
            }
        });
        for (std::size_t j = 0; j < c.tests.size(); ++j) {
            PowerRow row;
            row.t = t;
            row.test = c.tests[j];
            row.replicates = c.replicates;
            row.rejections = static_cast<std::size_t>(std::count(reject[j].begin(), reject[j].end(), 1));
            row.power = static_cast<double>(row.rejections) / static_cast<double>(row.replicates);
            row.moe = 1.96 * std::sqrt(row.power * (1 - row.power) / static_cast<double>(row.replicates));
            rows.push_back(row);
        }
    }
    return rows;
}

/// CSV schema version 1; the minimax boundary t = 1 is a constant column.
inline void write_power_csv(std::ostream& os, const std::vector<PowerRow>& rows, double alpha) {
    os << "schema_version,t,test,replicates,rejections,power,moe,alpha,minimax_t\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "1,%.6g,%s,%zu,%zu,%.6f,%.6f,%.6g,1\n", r.t, to_string(r.test).c_str(),
                      r.replicates, r.rejections, r.power, r.moe, alpha);
        os << buf;
    }
}

// ---------------------------------------------------------------------------
// Calibration

/// Tables for the first test in c.tests (several for rank-bonferroni).
inline std::vector<CalibrationTable> run_calibrate(const ExperimentConfig& c) {
    validate(c);
    detail::require(c.tests.size() == 1, "calibrate takes exactly one test");
    detail::require(c.tests.front() != TestKind::perm, "the permutation test has no precomputed table");
    return build_tables(c, c.tests.front(), make_net(c));
}

inline void write_critical_values(std::ostream& os, const CalibrationTable& t) {
    char buf[128];
    for (double a : default_alphas()) {
        std::snprintf(buf, sizeof buf, "alpha=%g critical_value=%.10g\n", a, critical_value(t, a));
        os << "kind=" << kind_string(t) << ' ' << buf;
    }
}

}  // namespace rankscan
