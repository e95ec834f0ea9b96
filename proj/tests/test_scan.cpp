#include <catch_amalgamated.hpp>

#include "rankscan/models.hpp"
#include "rankscan/net.hpp"
#include "rankscan/random.hpp"
#include "rankscan/scan.hpp"

using namespace rankscan;
using Catch::Approx;

namespace {

// Reference: every interval, direct summation, with the same tie rule.
ScanOutcome reference_scan(const std::vector<double>& x, const ApproximatingNet& net) {
    long double mean = 0;
    for (double v : x) mean += v;
    mean /= x.size();
    ScanOutcome best;
    std::vector<Interval> order(net.intervals().begin(), net.intervals().end());
    for (const auto& s : order) {
        long double sum = 0;
        for (std::size_t v = s.a; v <= s.b; ++v) sum += x[v - 1];
        const double value = static_cast<double>((sum - s.length() * mean) / std::sqrt((long double)s.length()));
        if (value > best.value) {
            best.value = value;
            best.argmax = s;
        }
    }
    return best;
}

bool close(double a, double b, double rel = 1e-9) {
    return std::abs(a - b) <= rel * std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

}  // namespace

TEST_CASE("constant data scan to zero", "[scan]") {
    const std::vector<double> x(16, 3.25);
    for (const auto& net : {build_full(16), build_dyadic_net(16, 2), build_dyadic_lengths(16, 4)}) {
        CHECK(std::abs(scan(x, net).value) < 1e-12);
        CHECK(std::abs(scan_bruteforce(x, net).value) < 1e-12);
    }
    const std::vector<double> zeros(16, 0.0);
    CHECK(scan_bruteforce(zeros, build_full(16)).value == 0.0);
}

TEST_CASE("single spike example", "[scan]") {
    const std::vector<double> x{0, 0, 1, 0};
    const auto net = build_full(4);
    const auto fast = scan(x, net);
    CHECK(fast.argmax == Interval{3, 3});
    CHECK(fast.value == Approx(0.75).epsilon(1e-12));
    const auto slow = scan_bruteforce(x, net);
    CHECK(slow.argmax == Interval{3, 3});
    CHECK(slow.value == Approx(0.75).epsilon(1e-12));
}

TEST_CASE("fast scan matches direct summation on random data", "[scan]") {
    for (std::uint64_t rep = 0; rep < 30; ++rep) {
        Rng rng = make_stream(7, rep);
        const std::size_t n = 2 + rng() % 200;
        std::vector<double> x(n);
        std::normal_distribution<double> z(1.5, 3.0);
        for (auto& v : x) v = z(rng);
        for (const auto& net : {build_full(n), build_dyadic_net(n, static_cast<int>(rep % 4)),
                                build_dyadic_lengths(n, detail::floor_log2(n))}) {
            const auto fast = scan(x, net, true);
            const auto ref = reference_scan(x, net);
            CHECK(close(fast.value, ref.value));
            CHECK(fast.argmax == ref.argmax);
            const auto slow = scan_bruteforce(x, net);
            CHECK(close(fast.value, slow.value));
            for (const auto& [len, v] : slow.per_scale_max) CHECK(close(fast.per_scale_max.at(len), v));
        }
    }
}

TEST_CASE("argmax value recomputes and ties go to shortest then leftmost", "[scan]") {
    const std::vector<double> x{1, 0, 1, 0, 0};
    const auto net = build_full(5);
    const auto out = scan(x, net);
    CHECK(out.argmax == Interval{1, 1});
    const auto vals = Scanner<double>(net).values(x);
    for (std::size_t i = 0; i < net.size(); ++i)
        if (net.intervals()[i] == out.argmax) CHECK(vals[i] == out.value);
}

TEST_CASE("uncentered scan", "[scan]") {
    Rng rng = make_stream(3, 0);
    const auto x = sample_null(Normal{}, 64, rng);
    const auto net = build_dyadic_net(64, 2);
    double mean = 0;
    for (double v : x) mean += v;
    mean /= 64;
    CHECK(close(scan_uncentered(x, net, mean).value, scan(x, net).value, 1e-12));
    const auto unc = scan_uncentered(x, net, 0.25);
    const auto ref = scan_bruteforce(x, net, 0.25);
    CHECK(close(unc.value, ref.value));
    CHECK(unc.argmax == ref.argmax);
    const std::vector<double> flat(64, 0.25);
    CHECK(std::abs(scan_uncentered(flat, net, 0.25).value) < 1e-12);
}

TEST_CASE("shift invariance and scale equivariance", "[scan]") {
    Rng rng = make_stream(11, 0);
    auto x = sample_null(Normal{}, 512, rng);
    const auto net = build_dyadic_lengths(512, 9);
    const auto base = scan(x, net);
    std::vector<double> shifted = x, scaled = x;
    for (auto& v : shifted) v += 1234.5;
    for (auto& v : scaled) v *= 7.0;
    CHECK(close(scan(shifted, net).value, base.value));
    const auto sc = scan(scaled, net);
    CHECK(close(sc.value, 7.0 * base.value));
    CHECK(sc.argmax == base.argmax);
}

TEST_CASE("integer scans are exact", "[scan]") {
    std::vector<std::int32_t> r{3, 1, 4, 2, 5, 8, 7, 6};
    const auto net = build_full(8);
    const auto out = scan(r, net);
    const auto ref = scan_bruteforce(r, net);
    CHECK(out.value == Approx(ref.value).epsilon(1e-14));
    CHECK(out.argmax == ref.argmax);
}

TEST_CASE("size mismatch is a parameter error", "[scan]") {
    const std::vector<double> x(10, 0.0);
    CHECK_THROWS_AS(scan(x, build_full(9)), ParameterError);
}
