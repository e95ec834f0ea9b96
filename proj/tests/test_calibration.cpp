#include <catch_amalgamated.hpp>

#include <functional>
#include <set>
#include <sstream>

#include "rankscan/calibration.hpp"
#include "rankscan/tail_bounds.hpp"

using namespace rankscan;
using Catch::Approx;

namespace {

// All permutations by recursive swapping (independent of std::next_permutation).
void each_permutation(std::vector<double>& x, std::size_t k, const std::function<void(const std::vector<double>&)>& f) {
    if (k == x.size()) {
        f(x);
        return;
    }
    for (std::size_t i = k; i < x.size(); ++i) {
        std::swap(x[k], x[i]);
        each_permutation(x, k + 1, f);
        std::swap(x[k], x[i]);
    }
}

double exact_by_enumeration(const std::vector<double>& data, const ApproximatingNet& net) {
    const double obs = scan_bruteforce(data, net).value;
    std::vector<double> x = data;
    double count = 0, total = 0;
    each_permutation(x, 0, [&](const std::vector<double>& p) {
        total += 1;
        if (scan_bruteforce(p, net).value >= obs - 1e-10 * std::max(1.0, std::abs(obs))) count += 1;
    });
    return count / total;
}

ApproximatingNet lengths_between(std::size_t n, std::size_t lo, std::size_t hi) {
    std::vector<Interval> v;
    for (std::size_t len = lo; len <= hi; ++len)
        for (std::size_t a = 1; a + len - 1 <= n; ++a) v.push_back({a, a + len - 1});
    return ApproximatingNet(NetSpec{n, NetKind::full, 0, std::nullopt, std::nullopt, 0}, v);
}

std::vector<double> normal_data(std::size_t n, std::uint64_t seed) {
    Rng rng = make_stream(seed, 0);
    return sample_null(Normal{}, n, rng);
}

}  // namespace

TEST_CASE("rank transform", "[calibration]") {
    Rng rng = make_stream(1, 0);
    CHECK(rank_transform(std::vector<double>{1, 2, 3, 4}, rng) == RankVector{1, 2, 3, 4});
    CHECK(rank_transform(std::vector<double>{3, 1, 2}, rng) == RankVector{3, 1, 2});

    std::map<RankVector, int> freq;
    const int reps = 10000;
    for (int i = 0; i < reps; ++i) freq[rank_transform(std::vector<double>{5, 5, 5}, rng)]++;
    REQUIRE(freq.size() == 6);
    double chi2 = 0;
    const double expect = reps / 6.0, se = std::sqrt(reps * (1 / 6.0) * (5 / 6.0));
    for (const auto& [perm, c] : freq) {
        CHECK(std::abs(c - expect) < 3 * se);
        chi2 += (c - expect) * (c - expect) / expect;
    }
    CHECK(chi2 < 20.5);  // chi-square(5) 0.999 quantile

    // ties: tied entries occupy a contiguous block of ranks
    const auto r = rank_transform(std::vector<double>{2, 1, 2, 0}, rng);
    CHECK(r[1] == 2);
    CHECK(r[3] == 1);
    CHECK(std::set<int>{r[0], r[2]} == std::set<int>{3, 4});
    CHECK_THROWS_AS(rank_transform(std::vector<double>{1, std::nan("")}, rng), ParameterError);
}

TEST_CASE("permutation P-values", "[calibration]") {
    Rng rng = make_stream(2, 0);
    const auto net = build_dyadic_lengths(32, 5);
    const std::vector<double> flat(32, 1.5);
    CHECK(permutation_pvalue(flat, net, 200, rng).p_value == 1.0);
    CHECK(permutation_pvalue_exact(std::vector<double>(6, 2.0), build_full(6)) == 1.0);

    const auto x = normal_data(32, 3);
    const auto r = permutation_pvalue(x, net, 199, rng);
    CHECK(r.p_value > 0);
    CHECK(r.p_value <= 1);
    CHECK(r.statistic == scan(x, net).value);
    CHECK(r.argmax == scan(x, net).argmax);
    for (const auto& [a, rej] : r.reject_at) CHECK(rej == (r.p_value <= a));
    CHECK(std::round(r.p_value * 200) == Approx(r.p_value * 200).margin(1e-9));
    CHECK_THROWS_AS(permutation_pvalue_exact(normal_data(10, 1), build_full(10)), ParameterError);
}

TEST_CASE("exact permutation P-value matches enumeration oracle", "[calibration]") {
    for (std::uint64_t s = 0; s < 5; ++s) {
        auto x = normal_data(6, 10 + s);
        x[2] += 1.5;
        for (const auto& net : {build_full(6), build_dyadic_net(6, 1), build_dyadic_lengths(6, 2)})
            CHECK(permutation_pvalue_exact(x, net) == exact_by_enumeration(x, net));
    }
    // ties in the data: (0, 0, 0, 0, 10) over lengths 2..3
    const std::vector<double> spike{0, 0, 0, 0, 10};
    const auto net = lengths_between(5, 2, 3);
    CHECK(permutation_pvalue_exact(spike, net) == exact_by_enumeration(spike, net));
    CHECK(permutation_pvalue_exact(spike, net) == 1.0);
}

TEST_CASE("exact P-value is super-uniform under the null", "[calibration]") {
    const auto net = build_full(6);
    const int reps = 400;
    std::vector<double> p(reps);
    for (int i = 0; i < reps; ++i) p[i] = permutation_pvalue_exact(normal_data(6, 100 + i), net);
    for (double a = 0.05; a < 1; a += 0.05) {
        const double freq = double(std::count_if(p.begin(), p.end(), [&](double v) { return v <= a; })) / reps;
        CHECK(freq <= a + 3 * std::sqrt(a * (1 - a) / reps));
    }
    for (double v : p) CHECK(std::abs(v * 720 - std::round(v * 720)) < 1e-9);
}

TEST_CASE("sampled permutation P-value converges to the exact value", "[calibration]") {
    const auto net = build_full(7);
    for (std::uint64_t s = 0; s < 3; ++s) {
        auto x = normal_data(7, 200 + s);
        x[3] += 1.0;
        const double exact = permutation_pvalue_exact(x, net);
        Rng rng = make_stream(201, s);
        const std::size_t B = 20000;
        const double sampled = permutation_pvalue(x, net, B, rng).p_value;
        CHECK(std::abs(sampled - exact) < 4 * std::sqrt(exact * (1 - exact) / B) + 2.0 / B);
    }
}

TEST_CASE("null tables", "[calibration]") {
    const auto net = build_dyadic_lengths(256, 8);
    const auto t1 = build_null_table(StatisticKind::rank_scan, net, 300, 9);
    const auto t2 = build_null_table(StatisticKind::rank_scan, net, 300, 9);
    CHECK(t1.values == t2.values);
    CHECK(std::is_sorted(t1.values.begin(), t1.values.end()));
    const std::size_t saved = default_thread_count();
    default_thread_count() = 1;
    const auto serial = build_null_table(StatisticKind::rank_scan, net, 300, 9);
    default_thread_count() = 3;
    const auto threaded = build_null_table(StatisticKind::rank_scan, net, 300, 9);
    default_thread_count() = saved;
    CHECK(serial.values == threaded.values);
    CHECK(serial.values == t1.values);

    CHECK_THROWS_AS(build_null_table(StatisticKind::oracle_scan, net, 10, 1), ParameterError);
    CHECK_THROWS_AS(build_null_table(StatisticKind::rank_scan, net, 10, 1, Family{Normal{}}), ParameterError);
    CHECK_THROWS_AS(build_null_table(StatisticKind::rank_scan_fixed_k, net, 10, 1), ParameterError);

    CalibrationTable t;
    t.values.resize(1000);
    std::iota(t.values.begin(), t.values.end(), 1.0);
    CHECK(critical_value(t, 0.05) == 951.0);  // ceil(0.95 * 1001) = 951
    CHECK(critical_value(t, 0.01) == 991.0);
    CHECK(table_pvalue(t, 951.0) == Approx(51.0 / 1001));
    CHECK(table_pvalue(t, 2000.0) == Approx(1.0 / 1001));
    CHECK(table_pvalue(t, -5.0) == 1.0);
    t.values.resize(10);
    CHECK(std::isinf(critical_value(t, 0.05)));
}

TEST_CASE("rank tables from different seeds agree", "[calibration]") {
    const auto net = build_dyadic_lengths(256, 8);
    const auto a = build_null_table(StatisticKind::rank_scan, net, 1000, 1);
    const auto b = build_null_table(StatisticKind::rank_scan, net, 1000, 2);
    // bootstrap standard error of the 0.95 order statistic of table a
    Rng rng = make_stream(3, StreamDomain::bootstrap, 0);
    std::vector<double> qs;
    std::uniform_int_distribution<std::size_t> pick(0, 999);
    for (int i = 0; i < 300; ++i) {
        std::vector<double> r(1000);
        for (auto& v : r) v = a.values[pick(rng)];
        std::sort(r.begin(), r.end());
        qs.push_back(r[950]);
    }
    double m = 0, ss = 0;
    for (double q : qs) m += q;
    m /= qs.size();
    for (double q : qs) ss += (q - m) * (q - m);
    const double se = std::sqrt(ss / (qs.size() - 1));
    CHECK(std::abs(critical_value(a, 0.05) - critical_value(b, 0.05)) < 3 * std::sqrt(2.0) * se);
}

TEST_CASE("rank table support matches enumeration at N=8", "[calibration]") {
    const auto net = build_full(8);
    std::vector<double> all;
    RankVector r{1, 2, 3, 4, 5, 6, 7, 8};
    do {
        all.push_back(scan_bruteforce(r, net).value);
    } while (std::next_permutation(r.begin(), r.end()));
    std::sort(all.begin(), all.end());
    const auto t = build_null_table(StatisticKind::rank_scan, net, 2000, 4);
    for (double v : t.values) {
        auto it = std::lower_bound(all.begin(), all.end(), v - 1e-9);
        CHECK((it != all.end() && std::abs(*it - v) < 1e-9));
    }
    // and the table is close to the exact law at the 0.95 quantile
    const double exact95 = all[static_cast<std::size_t>(std::ceil(0.95 * all.size())) - 1];
    CHECK(std::abs(critical_value(t, 0.05) - exact95) < 0.6);
}

TEST_CASE("rank scan test", "[calibration]") {
    const auto net = build_dyadic_lengths(128, 7);
    const auto table = build_null_table(StatisticKind::rank_scan, net, 500, 5);
    const auto x = normal_data(128, 6);
    std::vector<double> ex = x, cube = x;
    for (auto& v : ex) v = std::exp(v);
    for (auto& v : cube) v = v * v * v;
    Rng r1 = make_stream(7, 0), r2 = make_stream(7, 0), r3 = make_stream(7, 0);
    const auto a = rank_scan_test(x, net, table, r1);
    const auto b = rank_scan_test(ex, net, table, r2);
    const auto c = rank_scan_test(cube, net, table, r3);
    CHECK(a.p_value == b.p_value);
    CHECK(a.statistic == b.statistic);
    CHECK(a.argmax == b.argmax);
    CHECK(a.p_value == c.p_value);

    Rng rng = make_stream(8, 0);
    const auto flat = rank_scan_test(std::vector<double>(128, 0.0), net, table, rng);
    CHECK(flat.p_value > 0);
    CHECK(flat.p_value <= 1);

    CHECK_THROWS_AS(rank_scan_test(normal_data(64, 1), build_dyadic_lengths(64, 6), table, rng),
                    IncompatibleTableError);
    CHECK_THROWS_AS(rank_scan_test(x, build_dyadic_lengths(128, 6), table, rng), IncompatibleTableError);
    const auto oracle = build_null_table(StatisticKind::oracle_scan, net, 100, 5, Family{Normal{}});
    CHECK_THROWS_AS(rank_scan_test(x, net, oracle, rng), IncompatibleTableError);
    CHECK_THROWS_AS(oracle_scan_test(x, net, table), IncompatibleTableError);
    CHECK(oracle_scan_test(x, net, oracle).p_value > 0);
}

TEST_CASE("fixed-length rank scan and Bonferroni", "[calibration]") {
    const std::size_t n = 64;
    std::map<std::size_t, CalibrationTable> tables;
    for (std::size_t k = 3; k <= 6; ++k)
        tables[k] = build_null_table(StatisticKind::rank_scan_fixed_k, build_fixed_length(n, k), 400, 11);
    const auto x = normal_data(n, 12);

    Rng r1 = make_stream(13, 0), r2 = make_stream(13, 0);
    const auto single = rank_scan_small_k(x, 3, tables.at(3), r1);
    const auto bonf = rank_scan_bonferroni(x, 3, tables, r2);
    CHECK(single.p_value == bonf.p_value);
    CHECK(single.statistic == bonf.statistic);

    Rng r3 = make_stream(13, 0);
    const auto ranks = rank_transform(x, r3);
    const auto fixed = build_fixed_length(n, 5);
    Rng r4 = make_stream(13, 0);
    const auto five = rank_scan_small_k(x, 5, tables.at(5), r4);
    const auto ref = scan_bruteforce(ranks, fixed);
    CHECK(five.statistic == Approx(ref.value).epsilon(1e-12));
    CHECK(five.argmax == ref.argmax);

    double prev = 1.0;
    for (std::size_t kmax = 3; kmax <= 6; ++kmax) {
        Rng r = make_stream(13, 0);
        const auto res = rank_scan_bonferroni(x, kmax, tables, r);
        const double min_p = res.p_value / double(kmax - 2);
        if (res.p_value < 1) {
            CHECK(min_p <= prev + 1e-12);
            prev = min_p;
        }
    }
    Rng r5 = make_stream(14, 0);
    CHECK_THROWS_AS(rank_scan_bonferroni(x, 7, tables, r5), ParameterError);
    CHECK_THROWS_AS(rank_scan_small_k(x, 2, tables.at(3), r5), ParameterError);
    CHECK_THROWS_AS(rank_scan_small_k(x, 4, tables.at(3), r5), IncompatibleTableError);

    // k = N: a single interval whose rank sum is fixed, so the statistic is 0 and p = 1
    const std::size_t m = 10;
    const auto whole = build_null_table(StatisticKind::rank_scan_fixed_k, build_fixed_length(m, m), 50, 1);
    const auto res = rank_scan_small_k(normal_data(m, 2), m, whole, r5);
    CHECK(res.statistic == Approx(0.0).margin(1e-12));
    CHECK(res.p_value == 1.0);
}

TEST_CASE("rank moments", "[calibration]") {
    RankMomentInput null_in{std::vector<double>(4, 0.5), std::vector<std::vector<double>>(4, std::vector<double>(4, 0.5)),
                            std::vector<double>(4, 1.0 / 3)};
    const auto m = rank_moments(4, 50, null_in);
    for (double v : m.anomalous_mean) CHECK(v == Approx(25.5));
    CHECK(m.null_mean == Approx(25.5));
    CHECK(m.anomalous_variance_leading[0] == Approx(50.0 * 50 / 12));

    RankMomentInput dom{{1.0}, {{0.5}}, {1.0}};
    CHECK(rank_moments(1, 30, dom).anomalous_mean[0] == 30.0);
    CHECK_THROWS_AS(rank_moments(0, 30, dom), ParameterError);
    CHECK_THROWS_AS(rank_moments(2, 30, dom), ParameterError);

    // Monte Carlo check of the mean rank: s = 5 at theta = 1 among n = 200
    const std::size_t s = 5, n = 200;
    const auto pred = rank_moments(s, n, identical_anomalies(Normal{}, 1.0, s));
    const int reps = 20000;
    std::vector<double> sum(n, 0), sumsq(n, 0);
    for (int i = 0; i < reps; ++i) {
        Rng rng = make_stream(15, i);
        const auto x = sample_with_signals(Normal{}, n, std::vector<PlantedSignal>{{{1, s}, 1.0}}, rng);
        const auto r = rank_transform(x, rng);
        for (std::size_t v = 0; v < n; ++v) {
            sum[v] += r[v];
            sumsq[v] += double(r[v]) * r[v];
        }
    }
    for (std::size_t v = 0; v < 10; ++v) {
        const double mean = sum[v] / reps, var = sumsq[v] / reps - mean * mean;
        const double expect = v < s ? pred.anomalous_mean[v] : pred.null_mean;
        INFO("coordinate " << v);
        CHECK(std::abs(mean - expect) < 3 * std::sqrt(var / reps));
    }
}

TEST_CASE("P-value bounds dominate sampled P-values", "[calibration]") {
    const std::size_t n = 256;
    const auto net = restrict_net(build_dyadic_net(n, 2), 3, 6);
    const int ql = valid_bound_ql(net.min_length());
    const auto table = build_null_table(StatisticKind::rank_scan, net, 200, 17);
    for (int i = 0; i < 40; ++i) {
        const auto x = normal_data(n, 300 + i);
        Rng rng = make_stream(18, i);
        const auto perm = permutation_pvalue(x, net, 100, rng);
        double mean = 0, mx = -1e300;
        for (double v : x) {
            mean += v;
            mx = std::max(mx, v);
        }
        mean /= n;
        double var = 0;
        for (double v : x) var += (v - mean) * (v - mean);
        var /= n;
        const double s = std::max(0.0, perm.statistic);
        CHECK(pvalue_bound_bernstein(s, n, ql, net.size(), var, mx - mean) >= perm.p_value);
        const auto rank = rank_scan_test(x, net, table, rng);
        CHECK(pvalue_bound_rank(std::max(0.0, rank.statistic), n, ql, net.size()) >= rank.p_value);
    }
}

TEST_CASE("rank scan is robust to a single outlier", "[calibration]") {
    const std::size_t n = 256;
    const auto net = build_dyadic_lengths(n, 8);
    auto x = normal_data(n, 19);
    Rng r1 = make_stream(20, 0);
    const auto before = Scanner<std::int32_t>(net)(rank_transform(x, r1));
    const double raw_before = scan(x, net).value;
    x[100] = 1e6;
    Rng r2 = make_stream(20, 0);
    const auto after = Scanner<std::int32_t>(net)(rank_transform(x, r2));
    // one rank moves to N and at most N - 1 others shift by one
    CHECK(std::abs(after.value - before.value) <= double(n) + std::sqrt(double(n)));
    CHECK(scan(x, net).value - raw_before > 1e4);
}

TEST_CASE("table files", "[calibration]") {
    const auto net = build_dyadic_lengths(64, 6);
    const auto t = build_null_table(StatisticKind::oracle_scan, net, 50, 21, Family{Poisson{2.5}});
    std::stringstream a, b;
    write_table(a, t);
    write_table(b, build_null_table(StatisticKind::oracle_scan, net, 50, 21, Family{Poisson{2.5}}));
    CHECK(a.str() == b.str());
    CHECK(a.str().rfind("caltab v1 N=64 kind=oracle_scan:poisson:2.5 M=50 seed=21 net=" + fingerprint(net), 0) == 0);
    std::stringstream in(a.str());
    const auto back = read_table(in);
    CHECK(back.values == t.values);
    CHECK(back.family == t.family);
    CHECK(back.net_fingerprint == t.net_fingerprint);

    const auto fk = build_null_table(StatisticKind::rank_scan_fixed_k, build_fixed_length(64, 5), 20, 1);
    std::stringstream f;
    write_table(f, fk);
    std::stringstream fin(f.str());
    const auto fback = read_table(fin);
    CHECK(fback.k == 5);
    CHECK(fback.kind == StatisticKind::rank_scan_fixed_k);

    std::stringstream bad("caltab v1 N=4 kind=rank_scan M=3 seed=1 net=00\n1\n2\nzz\n");
    try {
        read_table(bad);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 4);
    }
    std::stringstream short_table("caltab v1 N=4 kind=rank_scan M=3 seed=1 net=00\n1\n2\n");
    CHECK_THROWS_AS(read_table(short_table), ParseError);
    CHECK_THROWS_AS(load_table("/nonexistent/table"), IoError);
}
