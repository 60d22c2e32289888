#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace ltvforge {

struct EvalPairs {
    std::vector<double> y_pred;
    std::vector<double> y_true;
    // Direct non-zero probability per sample when the model provides one;
    // absent for pure regression models (the 0.1 value rule applies instead).
    std::optional<std::vector<double>> nonzero_prob;
};

struct StrataSpec {
    double tau_low = 0.0;            // median of positive training values
    double prob_threshold = 0.5;     // zero rule when nonzero_prob present
    double value_threshold = 0.1;    // zero rule for pure regression outputs
};

struct MetricsReport {
    std::optional<double> gini, gini_nonzero;
    std::optional<double> spearman, spearman_nonzero;
    std::optional<double> nmae, mape, ambe, nrmse;
    std::optional<double> f1_zero, bucket_acc, sva;
    std::optional<double> recall_at_k;
    std::size_t recall_k = 0;
    // top-bucket (true bucket == K) slice used by the ablation analysis
    std::optional<double> top_bucket_ambe, top_bucket_nrmse, top_bucket_f1;
    // chi-squared distance between predicted and empirical bucket histograms
    std::optional<double> bucket_chi2;
};

// Lorenz-curve Gini over the descending-by-prediction ordering (stable ties);
// 2 * trapezoidal area - 1. Requires a positive total true value.
double gini(std::span<const double> y_pred, std::span<const double> y_true);

// Pearson correlation of average ranks (standard tie handling).
double spearman(std::span<const double> a, std::span<const double> b);

struct RegressionErrors {
    double nmae = 0.0;
    double nrmse = 0.0;
    double ambe = 0.0;
    std::optional<double> mape;  // over y > 0 only; absent when no positives
};

RegressionErrors regression_errors(std::span<const double> y_pred, std::span<const double> y_true);

struct ClassificationMetrics {
    double f1_nonzero = 0.0;
    double bucket_acc = 0.0;
    double sva = 0.0;
};

ClassificationMetrics classification_metrics(const EvalPairs& pairs, const StrataSpec& strata,
                                             std::span<const int> pred_buckets,
                                             std::span<const int> true_buckets);

// Fraction of true whales (is_whale != 0) captured by the top-k predictions
// (stable descending ties). Requires k <= n and at least one whale.
double recall_at_k(std::span<const double> y_pred, std::span<const std::uint8_t> is_whale,
                   std::size_t k);

// All metrics for one model on one split; component failures surface as
// absent fields rather than aborting the report. `top_bucket` is K.
MetricsReport full_report(const EvalPairs& pairs, std::span<const int> pred_buckets,
                          std::span<const int> true_buckets, const StrataSpec& strata,
                          std::size_t recall_k, int top_bucket);

}  // namespace ltvforge
