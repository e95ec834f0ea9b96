// rankscan command-line tool: calibrate | detect | identify | power.
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "rankscan/rankscan.hpp"

using namespace rankscan;

namespace {

struct Options {
    std::optional<std::size_t> n;
    std::string family = "normal";
    std::vector<std::string> tests;
    std::string net = "dyadic-lengths";
    std::optional<int> b, ql, qu;
    std::size_t k = 8, kmax = 8;
    double alpha = 0.05;
    std::size_t permutations = 200;
    std::size_t replicates = 1000;
    std::optional<std::size_t> table_replicates;
    std::uint64_t seed = 1;
    std::size_t bin_width = 1;
    std::string aggregator = "sum";
    std::string input;
    std::vector<std::string> tables;
    std::string output;
    std::string format = "plain";
    std::string column;
    std::vector<std::string> anomalies;
    std::vector<std::string> truth;
    std::vector<double> t;
    std::optional<double> theta;
    std::string method = "scan";
    std::size_t rsi_bin = 8;
    std::optional<std::size_t> rsi_max_len;
    std::string post = "merge";
    std::size_t threads = 0;
};

TestKind parse_test(const std::string& s) {
    if (s == "oracle") return TestKind::oracle;
    if (s == "perm") return TestKind::perm;
    if (s == "rank") return TestKind::rank;
    if (s == "rank-small") return TestKind::rank_small;
    if (s == "rank-bonferroni") return TestKind::rank_bonferroni;
    throw ParameterError("unknown test '" + s + "'");
}

// "a:b" or "a-b", 1-based inclusive.
Interval parse_interval(const std::string& s) {
    const auto sep = s.find_first_of(":-");
    detail::require(sep != std::string::npos, "interval '" + s + "' must look like a:b");
    try {
        std::size_t p1 = 0, p2 = 0;
        const auto a = std::stoull(s.substr(0, sep), &p1);
        const auto b = std::stoull(s.substr(sep + 1), &p2);
        detail::require(p1 == sep && p2 == s.size() - sep - 1, "interval '" + s + "' must look like a:b");
        detail::require(a >= 1 && a <= b, "interval '" + s + "' needs 1 <= a <= b");
        return {a, b};
    } catch (const std::logic_error&) {
        throw ParameterError("interval '" + s + "' must look like a:b");
    }
}

std::string format_real(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}

void add_common(CLI::App* app, Options& o) {
    app->add_option("--n", o.n, "Sequence length N");
    app->add_option("--family", o.family, "Null family: normal, poisson[:rate], bernoulli[:p]");
    app->add_option("--test", o.tests, "oracle, perm, rank, rank-small, rank-bonferroni")->delimiter(',');
    app->add_option("--net", o.net, "Scanned class")->check(CLI::IsMember({"dyadic-net", "dyadic-lengths", "full"}));
    app->add_option("--b", o.b, "Dyadic net depth (default floor(log2 log2 N))");
    app->add_option("--ql", o.ql, "Lower log2 length bound");
    app->add_option("--qu", o.qu, "Upper log2 length bound");
    app->add_option("--k", o.k, "Interval length for rank-small");
    app->add_option("--kmax", o.kmax, "Largest length for rank-bonferroni");
    app->add_option("--alpha", o.alpha, "Significance level");
    app->add_option("--permutations", o.permutations, "Permutations for the permutation test");
    app->add_option("--replicates", o.replicates, "Simulation replicates (power) or table size (calibrate)");
    app->add_option("--table-replicates", o.table_replicates, "Null table size when tables are built on the fly");
    app->add_option("--seed", o.seed, "Random seed");
    app->add_option("--table", o.tables, "Calibration table file(s)");
    app->add_option("--output", o.output, "Output file (default: standard output)");
    app->add_option("--anomaly", o.anomalies, "Planted anomaly a:b (repeatable)");
    app->add_option("--t", o.t, "Signal amplitude(s) t, comma separated")->delimiter(',');
    app->add_option("--theta", o.theta, "Natural parameter on planted anomalies (overrides --t)");
    app->add_option("--threads", o.threads, "Worker threads (0 = all cores)");
}

void add_input(CLI::App* app, Options& o) {
    app->add_option("--input", o.input, "Data file");
    app->add_option("--format", o.format, "Input format")->check(CLI::IsMember({"plain", "csv"}));
    app->add_option("--column", o.column, "CSV column name");
    app->add_option("--bin-width", o.bin_width, "Aggregate consecutive bins of this width");
    app->add_option("--aggregator", o.aggregator, "Bin aggregator")->check(CLI::IsMember({"sum", "median"}));
}

ExperimentConfig make_config(const Options& o, std::vector<TestKind> default_tests) {
    ExperimentConfig c;
    if (o.n) c.n = *o.n;
    c.family = parse_family(o.family);
    c.tests.clear();
    for (const auto& s : o.tests) c.tests.push_back(parse_test(s));
    if (c.tests.empty()) c.tests = std::move(default_tests);
    c.net = o.net == "dyadic-net" ? NetChoice::dyadic_net : o.net == "full" ? NetChoice::full : NetChoice::dyadic_lengths;
    c.b = o.b;
    c.ql = o.ql;
    c.qu = o.qu;
    c.k = o.k;
    c.kmax = o.kmax;
    c.alpha = o.alpha;
    c.permutations = o.permutations;
    c.replicates = o.replicates;
    c.table_replicates = o.table_replicates.value_or(1000);
    c.seed = o.seed;
    for (const auto& a : o.anomalies) c.anomalies.push_back(parse_interval(a));
    c.t_grid = o.t;
    c.theta = o.theta;
    detail::require(o.post == "merge" || o.post == "keep-most-significant",
                    "--post must be merge or keep-most-significant");
    c.post = o.post == "merge" ? PostProcess::merge : PostProcess::keep_most_significant;
    return c;
}

std::vector<CalibrationTable> load_tables(const Options& o) {
    std::vector<CalibrationTable> out;
    for (const auto& p : o.tables) out.push_back(load_table(p));
    return out;
}

// Output sink: a file if --output was given, otherwise standard output.
class Sink {
public:
    explicit Sink(const std::string& path) {
        if (!path.empty()) {
            file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
            if (!*file_) throw IoError("cannot open '" + path + "' for writing");
        }
    }
    std::ostream& os() { return file_ ? *file_ : std::cout; }
    void close(const std::string& path) {
        if (file_) {
            file_->close();
            if (!*file_) throw IoError("error writing '" + path + "'");
        }
    }

private:
    std::unique_ptr<std::ofstream> file_;
};

// Data for detect/identify: the input file, or one simulated replicate.
std::vector<double> acquire_data(const Options& o, ExperimentConfig& c, bool family_given) {
    if (!o.input.empty()) {
        const bool distribution_free = std::none_of(c.tests.begin(), c.tests.end(),
                                                    [](TestKind t) { return t == TestKind::oracle; });
        detail::require(!(family_given && distribution_free),
                        "--family is only used by the oracle test or for simulated data");
        IngestOptions io;
        io.format = o.format == "csv" ? InputFormat::csv : InputFormat::plain;
        io.column = o.column;
        io.bin_width = o.bin_width;
        io.aggregator = o.aggregator == "median" ? Aggregator::median : Aggregator::sum;
        auto data = ingest(o.input, io);
        detail::require(!o.n || *o.n == data.size(),
                        "--n does not match the " + std::to_string(data.size()) + " ingested values");
        c.n = data.size();
        return data;
    }
    detail::require(c.n >= 2, "give --input, or --n for simulated data");
    validate(c);
    double theta = 0;
    if (c.theta) {
        theta = *c.theta;
    } else if (!c.t_grid.empty()) {
        detail::require(c.t_grid.size() == 1, "give a single --t for simulated data");
        detail::require(!c.anomalies.empty(), "--t needs an --anomaly");
        theta = signal_theta(c.n, c.anomalies.front().length(), c.t_grid.front());
    }
    return simulate(c, theta, 0);
}

int cmd_calibrate(const Options& o) {
    detail::require(o.input.empty(), "calibrate takes no data: null tables depend only on N and the net");
    detail::require(!o.output.empty(), "calibrate needs --output");
    detail::require(o.n.has_value(), "calibrate needs --n");
    ExperimentConfig c = make_config(o, {TestKind::rank});
    c.table_replicates = o.table_replicates.value_or(o.replicates);
    const auto tables = run_calibrate(c);
    for (const auto& t : tables) {
        const std::string path = tables.size() == 1 ? o.output : o.output + ".k" + std::to_string(t.k);
        save_table(path, t);
        std::cout << "table=" << path << " N=" << t.n << " M=" << t.replicates() << " net=" << t.net_fingerprint
                  << '\n';
        write_critical_values(std::cout, t);
    }
    return 0;
}

int cmd_detect(const Options& o, bool family_given) {
    ExperimentConfig c = make_config(o, {TestKind::rank});
    const auto data = acquire_data(o, c, family_given);
    const TestSuite suite = build_suite(c, load_tables(o));
    const auto results = run_detect(c, suite, data);
    Sink sink(o.output);
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        sink.os() << "test=" << to_string(c.tests[i]) << " N=" << c.n << " statistic=" << format_real(r.statistic)
                  << " p_value=" << format_real(r.p_value) << " argmax=" << r.argmax.a << ':' << r.argmax.b;
        for (const auto& [a, rej] : r.reject_at) sink.os() << " reject@" << a << '=' << (rej ? 1 : 0);
        sink.os() << '\n';
    }
    sink.close(o.output);
    return 0;
}

int cmd_identify(const Options& o, bool family_given) {
    ExperimentConfig c = make_config(o, {TestKind::rank});
    detail::require(o.method == "scan" || o.method == "rsi", "--method must be scan or rsi");
    const auto data = acquire_data(o, c, family_given && o.method == "scan");
    IdentificationReport report;
    if (o.method == "rsi") {
        const std::size_t L = o.rsi_max_len.value_or(std::size_t{1} << (c.qu ? *c.qu : detail::floor_log2(c.n)));
        report = rsi_baseline(data, o.rsi_bin, L, c.post);
    } else {
        detail::require(c.tests.size() == 1, "identify takes one test");
        const TestSuite suite = build_suite(c, load_tables(o));
        report = run_identify(c, suite, data, c.tests.front());
    }
    std::vector<Interval> truth;
    for (const auto& s : o.truth) truth.push_back(parse_interval(s));
    if (truth.empty() && o.input.empty()) truth = c.anomalies;
    if (!truth.empty()) score_against_truth(report, truth);

    Sink sink(o.output);
    sink.os() << "method=" << (o.method == "rsi" ? std::string("rsi") : to_string(c.tests.front()))
              << " N=" << c.n << " threshold=" << format_real(report.threshold)
              << " selected=" << report.selected.size() << '\n';
    for (const auto& s : report.selected)
        sink.os() << "interval " << s.where.a << ':' << s.where.b << " statistic=" << format_real(s.statistic)
                  << " p_value=" << format_real(s.p_value) << '\n';
    for (std::size_t j = 0; j < report.dissimilarity.size(); ++j)
        sink.os() << "D" << j + 1 << '=' << format_real(report.dissimilarity[j]) << '\n';
    if (!truth.empty()) sink.os() << "O=" << report.overselection << '\n';
    sink.close(o.output);
    return 0;
}

int cmd_power(const Options& o) {
    detail::require(o.input.empty(), "power mode simulates its data; --input is not accepted");
    detail::require(o.n.has_value(), "power needs --n");
    ExperimentConfig c = make_config(o, {TestKind::oracle, TestKind::perm, TestKind::rank});
    if (c.anomalies.empty()) {
        const std::size_t len = std::min<std::size_t>(128, c.n / 2);
        const std::size_t a = c.n / 2 - len / 2 + 1;
        c.anomalies.push_back({a, a + len - 1});
    }
    if (c.t_grid.empty()) c.t_grid = {0, 0.5, 1.0, 1.5, 2.0};
    const TestSuite suite = build_suite(c, load_tables(o));
    const auto rows = run_power_curve(c, suite);
    Sink sink(o.output);
    write_power_csv(sink.os(), rows, c.alpha);
    sink.close(o.output);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Distribution-free scan tests for anomalous intervals"};
    app.require_subcommand(1);
    Options o;

    auto* calibrate = app.add_subcommand("calibrate", "Simulate and store a null calibration table");
    auto* detect = app.add_subcommand("detect", "Test a sequence for an anomalous interval");
    auto* identify = app.add_subcommand("identify", "Extract significant intervals");
    auto* power = app.add_subcommand("power", "Simulate power curves");
    for (auto* sc : {calibrate, detect, identify, power}) add_common(sc, o);
    for (auto* sc : {calibrate, detect, identify, power}) add_input(sc, o);
    identify->add_option("--truth", o.truth, "True interval a:b for D_j and O (repeatable)");
    identify->add_option("--method", o.method, "scan or rsi");
    identify->add_option("--rsi-bin", o.rsi_bin, "RSI bin size m");
    identify->add_option("--rsi-max-len", o.rsi_max_len, "RSI longest interval L");
    identify->add_option("--post", o.post, "merge or keep-most-significant");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        default_thread_count() = o.threads;
        CLI::App* used = app.get_subcommands().front();
        const bool family_given = used->count("--family") > 0;
        if (used == calibrate) return cmd_calibrate(o);
        if (used == detect) return cmd_detect(o, family_given);
        if (used == identify) return cmd_identify(o, family_given);
        return cmd_power(o);
    } catch (const ParameterError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const IncompatibleTableError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    }
}
