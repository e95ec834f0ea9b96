// rankscan/identification.hpp
//
// Turning a scan into a set of estimated anomalous intervals: threshold the
// per-interval statistics, post-process overlapping selections, and score
// the result against known truth. Also a simplified robust segment
// identifier (binned medians, robust standardization, dyadic scan).
#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "rankscan/calibration.hpp"
#include "rankscan/errors.hpp"
#include "rankscan/interval.hpp"
#include "rankscan/net.hpp"
#include "rankscan/scan.hpp"
#include "rankscan/tail_bounds.hpp"

namespace rankscan {

struct ScoredInterval {
    Interval where;
    double statistic = 0;
    double p_value = 1;  // table P-value or a union bound, depending on the method
};

enum class PostProcess { merge, keep_most_significant };

struct IdentificationReport {
    std::vector<ScoredInterval> selected;  // disjoint, sorted by start
    std::vector<double> dissimilarity;      // D_j per true interval (empty if no truth)
    std::size_t overselection = 0;          // O
    double threshold = 0;
};

/// Unions of selections that overlap or touch, scored by their best member.
inline std::vector<ScoredInterval> merge_intervals(std::vector<ScoredInterval> v) {
    std::sort(v.begin(), v.end(), [](const auto& l, const auto& r) {
        return l.where.a != r.where.a ? l.where.a < r.where.a : l.where.b < r.where.b;
    });
    std::vector<ScoredInterval> out;
    for (const auto& s : v) {
        if (!out.empty() && s.where.a <= out.back().where.b + 1) {
            auto& last = out.back();
            last.where.b = std::max(last.where.b, s.where.b);
            if (s.statistic > last.statistic) {
                last.statistic = s.statistic;
                last.p_value = s.p_value;
            }
        } else {
            out.push_back(s);
        }
    }
    return out;
}

/// Greedy: repeatedly keep the highest-statistic selection and drop all that intersect it.
inline std::vector<ScoredInterval> keep_most_significant(std::vector<ScoredInterval> v) {
    std::stable_sort(v.begin(), v.end(), [](const auto& l, const auto& r) { return l.statistic > r.statistic; });
    std::vector<ScoredInterval> kept;
    for (const auto& s : v) {
        const bool clash = std::any_of(kept.begin(), kept.end(),
                                       [&](const auto& k) { return intersects(k.where, s.where); });
        if (!clash) kept.push_back(s);
    }
    std::sort(kept.begin(), kept.end(), [](const auto& l, const auto& r) { return l.where.a < r.where.a; });
    return kept;
}

inline std::vector<ScoredInterval> post_process(std::vector<ScoredInterval> v, PostProcess how) {
    return how == PostProcess::merge ? merge_intervals(std::move(v)) : keep_most_significant(std::move(v));
}

/// D_j = min over selections of 1 - rho(S_j, selection); 1 when nothing is selected.
inline std::vector<double> dissimilarities(std::span<const Interval> truth, std::span<const ScoredInterval> selected) {
    std::vector<double> d;
    for (const auto& t : truth) {
        double best = 1.0;
        for (const auto& s : selected) best = std::min(best, 1.0 - rho(t, s.where));
        d.push_back(best);
    }
    return d;
}

/// Number of selections disjoint from every true interval.
inline std::size_t overselection(std::span<const Interval> truth, std::span<const ScoredInterval> selected) {
    return static_cast<std::size_t>(std::count_if(selected.begin(), selected.end(), [&](const auto& s) {
        return std::none_of(truth.begin(), truth.end(), [&](const auto& t) { return intersects(t, s.where); });
    }));
}

inline void score_against_truth(IdentificationReport& report, std::span<const Interval> truth) {
    report.dissimilarity = dissimilarities(truth, report.selected);
    report.overselection = overselection(truth, report.selected);
}

/// Selects every net interval whose rank-scan statistic exceeds the table's
/// alpha-critical value, then post-processes the selection.
inline IdentificationReport identify_rank_scan(std::span<const double> data, const ApproximatingNet& net,
                                               const CalibrationTable& table, double alpha, Rng& rng,
                                               PostProcess how = PostProcess::merge) {
    check_table(table, StatisticKind::rank_scan, net);
    const RankVector ranks = rank_transform(data, rng);
    const auto values = Scanner<std::int32_t>(net).values(ranks);
    IdentificationReport report;
    report.threshold = critical_value(table, alpha);
    std::vector<ScoredInterval> raw;
    const auto iv = net.intervals();
    for (std::size_t i = 0; i < iv.size(); ++i)
        if (values[i] > report.threshold) raw.push_back({iv[i], values[i], table_pvalue(table, values[i])});
    report.selected = post_process(std::move(raw), how);
    return report;
}

/// Same as identify_rank_scan with the oracle statistic and an oracle table.
inline IdentificationReport identify_oracle_scan(std::span<const double> data, const ApproximatingNet& net,
                                                 const CalibrationTable& table, double alpha,
                                                 PostProcess how = PostProcess::merge) {
    check_table(table, StatisticKind::oracle_scan, net);
    std::vector<double> z(data.begin(), data.end());
    standardize_in_place(*table.family, z);
    const auto values = Scanner<double>(net).values(z, 0.0);
    IdentificationReport report;
    report.threshold = critical_value(table, alpha);
    std::vector<ScoredInterval> raw;
    const auto iv = net.intervals();
    for (std::size_t i = 0; i < iv.size(); ++i)
        if (values[i] > report.threshold) raw.push_back({iv[i], values[i], table_pvalue(table, values[i])});
    report.selected = post_process(std::move(raw), how);
    return report;
}

inline double median_of(std::vector<double> v) {
    detail::require(!v.empty(), "median of an empty set");
    const std::size_t h = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(h), v.end());
    const double upper = v[h];
    if (v.size() % 2 == 1) return upper;
    const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(h));
    return 0.5 * (lower + upper);
}

/// Simplified robust segment identifier. Medians over consecutive bins of m
/// (a trailing partial bin is dropped) are standardized by their median and
/// 1.4826 * MAD; dyadic-length windows of up to L / m bins are scanned and
/// windows above sqrt(2 log N) are selected, mapped back to the original
/// coordinates, and post-processed. Degenerate scale (MAD = 0) selects nothing.
inline IdentificationReport rsi_baseline(std::span<const double> data, std::size_t m, std::size_t L,
                                         PostProcess how = PostProcess::merge) {
    const std::size_t n = data.size();
    detail::require(m >= 1 && m <= n, "rsi_baseline: need 1 <= m <= N");
    detail::require(L >= m && L <= n, "rsi_baseline: need m <= L <= N");
    const std::size_t bins = n / m;
    std::vector<double> med(bins);
    for (std::size_t i = 0; i < bins; ++i)
        med[i] = median_of(std::vector<double>(data.begin() + static_cast<std::ptrdiff_t>(i * m),
                                               data.begin() + static_cast<std::ptrdiff_t>((i + 1) * m)));
    IdentificationReport report;
    report.threshold = std::sqrt(2.0 * std::log(static_cast<double>(n)));
    const double center = median_of(med);
    std::vector<double> dev(bins);
    for (std::size_t i = 0; i < bins; ++i) dev[i] = std::abs(med[i] - center);
    const double scale = 1.4826 * median_of(dev);
    if (!(scale > 0)) return report;
    for (auto& x : med) x = (x - center) / scale;

    const int max_log = std::min(detail::floor_log2(L / m), detail::floor_log2(bins));
    const ApproximatingNet net = build_dyadic_lengths(bins, max_log);
    const auto values = Scanner<double>(net).values(med, 0.0);
    const auto iv = net.intervals();
    const double tests = static_cast<double>(net.size());
    std::vector<ScoredInterval> raw;
    for (std::size_t i = 0; i < iv.size(); ++i) {
        if (values[i] <= report.threshold) continue;
        const Interval w{(iv[i].a - 1) * m + 1, iv[i].b * m};
        raw.push_back({w, values[i], std::min(1.0, tests * normal_survival(values[i]))});
    }
    report.selected = post_process(std::move(raw), how);
    return report;
}

}  // namespace rankscan
