#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ltvforge/matrix.hpp"

namespace ltvforge {

struct GeneratorConfig {
    std::size_t n_samples = 100000;
    double zero_ratio = 0.336;
    double mu = 2.0;
    double sigma = 1.0;
    double tail_prob = 0.05;
    double pareto_alpha = 2.5;
    double signal_corr = 0.85;
    std::size_t n_numeric = 8;
    std::size_t n_categorical = 4;
    std::size_t cat_cardinality = 10;
    double noise_std = 0.4;
    std::uint64_t seed = 1;

    void validate() const;
};

struct DatasetSchema {
    std::vector<std::string> numeric_names;
    std::vector<std::string> categorical_names;
    // max observed code + 1 per categorical column
    std::vector<std::int32_t> categorical_cardinality;

    bool operator==(const DatasetSchema&) const = default;
};

// Feature rows with non-negative value labels. Row order is the chronology
// proxy for splitting.
class Dataset {
  public:
    DatasetSchema schema;
    Matrix numeric;                          // n x n_numeric
    std::vector<std::int32_t> categorical;   // row-major n x n_categorical
    std::vector<double> labels;

    std::size_t size() const { return labels.size(); }
    std::size_t n_numeric() const { return schema.numeric_names.size(); }
    std::size_t n_categorical() const { return schema.categorical_names.size(); }

    std::int32_t cat(std::size_t row, std::size_t col) const {
        return categorical[row * n_categorical() + col];
    }

    void recompute_cardinalities();
    void validate() const;

    bool operator==(const Dataset&) const = default;
};

// Mini-batch materialized from dataset rows; row_ids keep the original row
// indices so per-sample RNG streams stay reproducible under any batching.
struct Batch {
    Matrix numeric;
    std::vector<std::int32_t> categorical;
    std::vector<double> labels;
    std::vector<std::size_t> row_ids;

    std::size_t size() const { return labels.size(); }
};

Batch gather(const Dataset& ds, std::span<const std::size_t> rows);

// K ordered value strata. thresholds[0] is the zero boundary 1e-6; bucket 1
// is the zero bucket with center 0 and half-range 1.
struct BucketSpec {
    int k = 4;
    std::vector<double> thresholds;   // size k-1, strictly ascending
    std::vector<double> centers;      // size k
    std::vector<double> half_ranges;  // size k, all > 0
    double top_cap = 0.0;

    bool operator==(const BucketSpec&) const = default;
};

constexpr double kZeroBoundary = 1e-6;

// Zero-inflated lognormal draw with an optional Pareto whale factor; features
// carry the latent signal with configurable correlation. Fully reproducible:
// each row's draws come from an independent stream keyed by (seed, row).
Dataset generate(const GeneratorConfig& cfg, std::size_t threads = 1);

Dataset load_csv(const std::string& path);
void write_csv(const Dataset& ds, const std::string& path);

// Thresholds from non-zero label quantiles ((n+1)p linear interpolation);
// K=4 uses the 50th/75th percentiles. top_cap winsorizes bucket K at the
// 99.5th percentile of non-zero labels.
BucketSpec fit_bucket_spec(std::span<const double> train_labels, int k = 4);

// 1-based; smallest k with y <= threshold, boundary belongs to the lower bucket.
int assign_bucket(double y, const BucketSpec& spec);

// clamp((y - c_b) / r_b, -1, 1)
double normalize_label(double y, const BucketSpec& spec, int bucket);

struct Split {
    Dataset train;
    Dataset val;
    Dataset test;
};

Split chronological_split(const Dataset& ds, double test_frac = 0.4, double val_frac = 0.1);

// (n+1)p order-statistic interpolation on ascending data, clamped to the ends.
double quantile_sorted(std::span<const double> sorted_ascending, double p);

// Share of total label mass held by the top `frac` of rows by label.
double top_value_share(std::span<const double> labels, double frac);

}  // namespace ltvforge
