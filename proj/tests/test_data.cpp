#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "ltvforge/data.hpp"
#include "ltvforge/errors.hpp"
#include "ltvforge/metrics.hpp"

using namespace ltvforge;

namespace {

GeneratorConfig small_cfg() {
    GeneratorConfig cfg;
    cfg.n_samples = 20000;
    cfg.seed = 42;
    return cfg;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("generator hits the configured zero ratio") {
    for (double target : {0.336, 0.646, 0.458}) {
        GeneratorConfig cfg = small_cfg();
        cfg.n_samples = 100000;
        cfg.zero_ratio = target;
        const Dataset ds = generate(cfg);
        std::size_t zeros = 0;
        for (double y : ds.labels) zeros += y == 0.0 ? 1 : 0;
        const double ratio = static_cast<double>(zeros) / static_cast<double>(ds.size());
        CHECK(std::abs(ratio - target) < 0.01);
    }
}

TEST_CASE("generator is bitwise deterministic and thread-count invariant") {
    const GeneratorConfig cfg = small_cfg();
    const Dataset a = generate(cfg, 1);
    const Dataset b = generate(cfg, 1);
    CHECK(a == b);
    const Dataset c = generate(cfg, 4);
    CHECK(a == c);
}

TEST_CASE("zero signal correlation decouples features from labels") {
    GeneratorConfig cfg = small_cfg();
    cfg.n_samples = 100000;
    cfg.signal_corr = 0.0;
    const Dataset ds = generate(cfg);
    std::vector<double> feature(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) feature[i] = ds.numeric(i, 0);
    const double rho = spearman(feature, ds.labels);
    CHECK(std::abs(rho) < 0.02);
}

TEST_CASE("pareto tail fattens the top value share") {
    GeneratorConfig with_tail = small_cfg();
    with_tail.n_samples = 50000;
    with_tail.tail_prob = 0.02;
    with_tail.pareto_alpha = 1.5;
    GeneratorConfig no_tail = with_tail;
    no_tail.tail_prob = 0.0;

    const double share_tail = top_value_share(generate(with_tail).labels, 0.01);
    const double share_flat = top_value_share(generate(no_tail).labels, 0.01);
    CHECK(share_tail > share_flat);
}

TEST_CASE("generated data shows the zero spike, right skew, and heavy tail") {
    GeneratorConfig cfg = small_cfg();
    cfg.n_samples = 50000;
    const Dataset ds = generate(cfg);

    std::vector<double> nonzero;
    for (double y : ds.labels) {
        if (y > 0.0) nonzero.push_back(y);
    }
    std::sort(nonzero.begin(), nonzero.end());
    double mean = 0.0;
    for (double y : nonzero) mean += y;
    mean /= static_cast<double>(nonzero.size());
    const double median = quantile_sorted(nonzero, 0.5);
    CHECK(mean > median);  // right skew

    // log-value kurtosis rises when the whale factor is active
    auto log_kurtosis = [](const std::vector<double>& values) {
        double m = 0.0;
        std::vector<double> logs;
        logs.reserve(values.size());
        for (double v : values) {
            logs.push_back(std::log(v));
            m += logs.back();
        }
        m /= static_cast<double>(logs.size());
        double m2 = 0.0, m4 = 0.0;
        for (double l : logs) {
            const double d = l - m;
            m2 += d * d;
            m4 += d * d * d * d;
        }
        m2 /= static_cast<double>(logs.size());
        m4 /= static_cast<double>(logs.size());
        return m4 / (m2 * m2);
    };
    GeneratorConfig flat = cfg;
    flat.tail_prob = 0.0;
    std::vector<double> flat_nonzero;
    for (double y : generate(flat).labels) {
        if (y > 0.0) flat_nonzero.push_back(y);
    }
    CHECK(log_kurtosis(nonzero) > log_kurtosis(flat_nonzero));
}

TEST_CASE("generator rejects an empty sample count") {
    GeneratorConfig cfg = small_cfg();
    cfg.n_samples = 0;
    CHECK_THROWS_AS(generate(cfg), InputError);
}

TEST_CASE("csv round trip reproduces the dataset exactly") {
    GeneratorConfig cfg = small_cfg();
    cfg.n_samples = 500;
    const Dataset ds = generate(cfg);
    const std::string path = temp_path("ltvforge_roundtrip.csv");
    write_csv(ds, path);
    const Dataset loaded = load_csv(path);
    CHECK(ds == loaded);
    std::filesystem::remove(path);
}

TEST_CASE("csv parser applies the header prefix rules") {
    const std::string path = temp_path("ltvforge_parse.csv");
    {
        std::FILE* f = std::fopen(path.c_str(), "w");
        std::fputs("num_a,cat_b,label\n1.5,2,0.0\n", f);
        std::fclose(f);
    }
    const Dataset ds = load_csv(path);
    CHECK(ds.n_numeric() == 1);
    CHECK(ds.n_categorical() == 1);
    CHECK(ds.numeric(0, 0) == 1.5);
    CHECK(ds.cat(0, 0) == 2);
    CHECK(ds.labels[0] == 0.0);
    std::filesystem::remove(path);
}

TEST_CASE("csv parser rejects bad content") {
    auto write_and_load = [&](const char* text) {
        const std::string path = temp_path("ltvforge_bad.csv");
        std::FILE* f = std::fopen(path.c_str(), "w");
        std::fputs(text, f);
        std::fclose(f);
        Dataset ds;
        try {
            ds = load_csv(path);
        } catch (...) {
            std::filesystem::remove(path);
            throw;
        }
        std::filesystem::remove(path);
        return ds;
    };
    CHECK_THROWS_AS(write_and_load("num_a,label\n1.0,-1\n"), InputError);      // negative label
    CHECK_THROWS_AS(write_and_load("num_a,oops,label\n1,2,3\n"), ConfigError); // unknown prefix
    CHECK_THROWS_AS(write_and_load("num_a,cat_b,label\n1,2.5,3\n"), InputError);  // non-integer code
    CHECK_THROWS_AS(write_and_load("num_a,cat_b\n1,2\n"), ConfigError);        // missing label
}

TEST_CASE("bucket spec quantiles follow the (n+1)p interpolation") {
    const std::vector<double> labels = {1, 2, 3, 4, 5, 6, 7, 8};
    const BucketSpec spec = fit_bucket_spec(labels, 4);
    REQUIRE(spec.thresholds.size() == 3);
    CHECK(spec.thresholds[0] == doctest::Approx(1e-6));
    CHECK(spec.thresholds[1] == doctest::Approx(4.5));
    CHECK(spec.thresholds[2] == doctest::Approx(6.75));
}

TEST_CASE("bucket spec rejects degenerate inputs") {
    CHECK_THROWS_AS(fit_bucket_spec(std::vector<double>{5, 5, 5, 5}, 4), InputError);
    CHECK_THROWS_AS(fit_bucket_spec(std::vector<double>{0, 0, 0}, 4), InputError);
    CHECK_THROWS_AS(fit_bucket_spec(std::vector<double>{1, 2, 3}, 1), InputError);
}

TEST_CASE("zero bucket keeps its unit half-range floor") {
    const std::vector<double> labels = {0, 0, 10, 20, 30, 40, 50, 60, 70, 80};
    const BucketSpec spec = fit_bucket_spec(labels, 4);
    CHECK(spec.centers[0] == 0.0);
    CHECK(spec.half_ranges[0] == 1.0);
}

TEST_CASE("bucket assignment boundaries belong to the lower bucket") {
    BucketSpec spec;
    spec.k = 4;
    spec.thresholds = {1e-6, 10.0, 20.0};
    spec.centers = {0.0, 5.0, 15.0, 25.0};
    spec.half_ranges = {1.0, 5.0, 5.0, 5.0};
    spec.top_cap = 30.0;
    CHECK(assign_bucket(0.0, spec) == 1);
    CHECK(assign_bucket(1e-6, spec) == 1);
    CHECK(assign_bucket(10.0, spec) == 2);
    CHECK(assign_bucket(10.0 + 1e-9, spec) == 3);
    CHECK(assign_bucket(1e9, spec) == 4);
}

TEST_CASE("label normalization clamps to the unit interval") {
    BucketSpec spec;
    spec.k = 2;
    spec.thresholds = {1e-6};
    spec.centers = {0.0, 15.0};
    spec.half_ranges = {1.0, 10.0};
    spec.top_cap = 25.0;
    CHECK(normalize_label(15.0, spec, 2) == doctest::Approx(0.0));
    CHECK(normalize_label(25.0, spec, 2) == doctest::Approx(1.0));
    CHECK(normalize_label(50.0, spec, 2) == 1.0);  // winsorized above the cap
    CHECK(normalize_label(0.0, spec, 1) == 0.0);
}

TEST_CASE("every training label lands in exactly one bucket with ascending thresholds") {
    GeneratorConfig cfg = small_cfg();
    cfg.n_samples = 20000;
    const Dataset ds = generate(cfg);
    const BucketSpec spec = fit_bucket_spec(ds.labels, 4);
    for (std::size_t i = 1; i < spec.thresholds.size(); ++i) {
        CHECK(spec.thresholds[i] > spec.thresholds[i - 1]);
    }
    std::vector<std::size_t> counts(5, 0);
    std::size_t nonzero = 0;
    for (double y : ds.labels) {
        const int b = assign_bucket(y, spec);
        REQUIRE(b >= 1);
        REQUIRE(b <= 4);
        ++counts[static_cast<std::size_t>(b)];
        nonzero += y > kZeroBoundary ? 1 : 0;
    }
    // 50/25/25 of the non-zero mass within two points
    const double nz = static_cast<double>(nonzero);
    CHECK(std::abs(static_cast<double>(counts[2]) / nz - 0.50) < 0.02);
    CHECK(std::abs(static_cast<double>(counts[3]) / nz - 0.25) < 0.02);
    CHECK(std::abs(static_cast<double>(counts[4]) / nz - 0.25) < 0.02);
}

TEST_CASE("chronological split sizes and determinism") {
    GeneratorConfig cfg = small_cfg();
    cfg.n_samples = 10;
    const Dataset ds = generate(cfg);
    const Split split = chronological_split(ds, 0.4, 0.1);
    CHECK(split.train.size() == 5);
    CHECK(split.val.size() == 1);
    CHECK(split.test.size() == 4);
    // prefix/middle/suffix contiguity
    CHECK(split.train.labels[0] == ds.labels[0]);
    CHECK(split.val.labels[0] == ds.labels[5]);
    CHECK(split.test.labels[3] == ds.labels[9]);

    const Split again = chronological_split(ds, 0.4, 0.1);
    CHECK(split.train == again.train);
    CHECK(split.test == again.test);

    CHECK_THROWS_AS(chronological_split(ds, 0.0, 0.1), InputError);
    CHECK_THROWS_AS(chronological_split(ds, 0.7, 0.4), InputError);
}
