#include "ltvforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ltvforge/errors.hpp"

namespace ltvforge {

static std::vector<std::size_t> order_desc_stable(std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
    return idx;
}

double gini(std::span<const double> y_pred, std::span<const double> y_true) {
    if (y_pred.size() != y_true.size() || y_pred.empty()) throw InputError("gini: bad inputs");
    double total = 0.0;
    for (double y : y_true) total += y;
    if (total <= 0.0) throw InputError("gini: total true value must be positive");

    const auto order = order_desc_stable(y_pred);
    const double n = static_cast<double>(y_pred.size());
    double area = 0.0;
    double cum = 0.0;
    double prev = 0.0;  // Lorenz value at the previous grid point (origin first)
    for (std::size_t i = 0; i < order.size(); ++i) {
        cum += y_true[order[i]];
        const double lorenz = cum / total;
        area += (prev + lorenz) * 0.5 / n;
        prev = lorenz;
    }
    return 2.0 * area - 1.0;
}

static std::vector<double> average_ranks(std::span<const double> v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;  // ranks are 1-based
        for (std::size_t t = i; t <= j; ++t) ranks[idx[t]] = avg;
        i = j + 1;
    }
    return ranks;
}

double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw InputError("spearman: length mismatch");
    if (a.size() < 2) throw InputError("spearman: need at least two samples");
    const auto ra = average_ranks(a);
    const auto rb = average_ranks(b);
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = ra[i] - ma;
        const double db = rb[i] - mb;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if (va <= 0.0 || vb <= 0.0) throw InputError("spearman: zero rank variance");
    return cov / std::sqrt(va * vb);
}

RegressionErrors regression_errors(std::span<const double> y_pred, std::span<const double> y_true) {
    if (y_pred.size() != y_true.size() || y_pred.empty()) {
        throw InputError("regression_errors: bad inputs");
    }
    const double n = static_cast<double>(y_true.size());
    double mean_true = 0.0;
    for (double y : y_true) mean_true += y;
    mean_true /= n;
    if (mean_true <= 0.0) throw InputError("regression_errors: mean true value must be positive");

    double abs_err = 0.0, sq_err = 0.0, mean_pred = 0.0;
    double mape_acc = 0.0;
    std::size_t mape_n = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const double diff = y_pred[i] - y_true[i];
        abs_err += std::abs(diff);
        sq_err += diff * diff;
        mean_pred += y_pred[i];
        if (y_true[i] > 0.0) {
            mape_acc += std::abs(diff) / y_true[i];
            ++mape_n;
        }
    }
    RegressionErrors out;
    out.nmae = abs_err / n / mean_true;
    out.nrmse = std::sqrt(sq_err / n) / mean_true;
    out.ambe = std::abs(mean_pred / n - mean_true);
    if (mape_n > 0) out.mape = mape_acc / static_cast<double>(mape_n);
    return out;
}

// Unified zero rule: direct probability against 0.5 when available, else the
// 0.1 value threshold.
static bool predicted_nonzero(const EvalPairs& pairs, const StrataSpec& strata, std::size_t i) {
    if (pairs.nonzero_prob.has_value()) {
        return (*pairs.nonzero_prob)[i] > strata.prob_threshold;
    }
    return pairs.y_pred[i] > strata.value_threshold;
}

ClassificationMetrics classification_metrics(const EvalPairs& pairs, const StrataSpec& strata,
                                             std::span<const int> pred_buckets,
                                             std::span<const int> true_buckets) {
    const std::size_t n = pairs.y_true.size();
    if (pairs.y_pred.size() != n || pred_buckets.size() != n || true_buckets.size() != n) {
        throw InputError("classification_metrics: length mismatch");
    }
    if (pairs.nonzero_prob.has_value() && pairs.nonzero_prob->size() != n) {
        throw InputError("classification_metrics: nonzero_prob length mismatch");
    }
    std::size_t tp = 0, fp = 0, fn = 0;
    std::size_t bucket_hits = 0, strata_hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const bool true_nonzero = pairs.y_true[i] > 0.0;
        const bool pred_nonzero = predicted_nonzero(pairs, strata, i);
        if (pred_nonzero && true_nonzero) ++tp;
        if (pred_nonzero && !true_nonzero) ++fp;
        if (!pred_nonzero && true_nonzero) ++fn;

        if (pred_buckets[i] == true_buckets[i]) ++bucket_hits;

        // strata: 0 zero, 1 low, 2 high
        const int true_stratum = !true_nonzero ? 0 : (pairs.y_true[i] <= strata.tau_low ? 1 : 2);
        const int pred_stratum =
            !pred_nonzero ? 0 : (pairs.y_pred[i] <= strata.tau_low ? 1 : 2);
        if (true_stratum == pred_stratum) ++strata_hits;
    }
    ClassificationMetrics out;
    const double denom = 2.0 * static_cast<double>(tp) + static_cast<double>(fp + fn);
    out.f1_nonzero = denom > 0.0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
    out.bucket_acc = static_cast<double>(bucket_hits) / static_cast<double>(n);
    out.sva = static_cast<double>(strata_hits) / static_cast<double>(n);
    return out;
}

double recall_at_k(std::span<const double> y_pred, std::span<const std::uint8_t> is_whale,
                   std::size_t k) {
    const std::size_t n = y_pred.size();
    if (is_whale.size() != n) throw InputError("recall_at_k: length mismatch");
    if (k > n) throw InputError("recall_at_k: k exceeds sample count");
    std::size_t whales = 0;
    for (std::uint8_t w : is_whale) whales += w != 0 ? 1 : 0;
    if (whales == 0) throw InputError("recall_at_k: no true whales");
    const auto order = order_desc_stable(y_pred);
    std::size_t captured = 0;
    for (std::size_t i = 0; i < k; ++i) captured += is_whale[order[i]] != 0 ? 1 : 0;
    return static_cast<double>(captured) / static_cast<double>(whales);
}

MetricsReport full_report(const EvalPairs& pairs, std::span<const int> pred_buckets,
                          std::span<const int> true_buckets, const StrataSpec& strata,
                          std::size_t recall_k, int top_bucket) {
    MetricsReport report;
    report.recall_k = recall_k;
    const std::size_t n = pairs.y_true.size();

    auto guard = [](auto fn) -> std::optional<double> {
        try {
            return fn();
        } catch (const std::exception&) {
            return std::nullopt;
        }
    };

    report.gini = guard([&] { return gini(pairs.y_pred, pairs.y_true); });
    report.spearman = guard([&] { return spearman(pairs.y_pred, pairs.y_true); });

    std::vector<double> pred_pos, true_pos;
    for (std::size_t i = 0; i < n; ++i) {
        if (pairs.y_true[i] > 0.0) {
            pred_pos.push_back(pairs.y_pred[i]);
            true_pos.push_back(pairs.y_true[i]);
        }
    }
    report.gini_nonzero = guard([&] { return gini(pred_pos, true_pos); });
    report.spearman_nonzero = guard([&] { return spearman(pred_pos, true_pos); });

    try {
        const auto err = regression_errors(pairs.y_pred, pairs.y_true);
        report.nmae = err.nmae;
        report.nrmse = err.nrmse;
        report.ambe = err.ambe;
        report.mape = err.mape;
    } catch (const std::exception&) {
    }

    try {
        const auto cls = classification_metrics(pairs, strata, pred_buckets, true_buckets);
        report.f1_zero = cls.f1_nonzero;
        report.bucket_acc = cls.bucket_acc;
        report.sva = cls.sva;
    } catch (const std::exception&) {
    }

    std::vector<std::uint8_t> whale(n);
    for (std::size_t i = 0; i < n; ++i) whale[i] = true_buckets[i] == top_bucket ? 1 : 0;
    report.recall_at_k = guard([&] {
        return recall_at_k(pairs.y_pred, whale, std::min(recall_k, n));
    });

    // Top-bucket slice: regression bias/spread over true top-bucket rows plus
    // the F1 of top-bucket membership.
    try {
        std::vector<double> pred_top, true_top;
        for (std::size_t i = 0; i < n; ++i) {
            if (whale[i] != 0) {
                pred_top.push_back(pairs.y_pred[i]);
                true_top.push_back(pairs.y_true[i]);
            }
        }
        const auto err = regression_errors(pred_top, true_top);
        report.top_bucket_ambe = err.ambe;
        report.top_bucket_nrmse = err.nrmse;
    } catch (const std::exception&) {
    }
    {
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const bool pred_top = pred_buckets[i] == top_bucket;
            const bool true_top = whale[i] != 0;
            if (pred_top && true_top) ++tp;
            if (pred_top && !true_top) ++fp;
            if (!pred_top && true_top) ++fn;
        }
        const double denom = 2.0 * static_cast<double>(tp) + static_cast<double>(fp + fn);
        if (denom > 0.0) report.top_bucket_f1 = 2.0 * static_cast<double>(tp) / denom;
    }

    // Chi-squared distance between the predicted and empirical bucket
    // histograms (hard assignments); zero-mass true buckets are guarded.
    {
        std::vector<double> freq_pred(static_cast<std::size_t>(top_bucket), 0.0);
        std::vector<double> freq_true(static_cast<std::size_t>(top_bucket), 0.0);
        bool in_range = true;
        for (std::size_t i = 0; i < n; ++i) {
            if (pred_buckets[i] < 1 || pred_buckets[i] > top_bucket || true_buckets[i] < 1 ||
                true_buckets[i] > top_bucket) {
                in_range = false;
                break;
            }
            freq_pred[pred_buckets[i] - 1] += 1.0;
            freq_true[true_buckets[i] - 1] += 1.0;
        }
        if (in_range && n > 0) {
            double chi2 = 0.0;
            for (int b = 0; b < top_bucket; ++b) {
                const double p = freq_pred[b] / static_cast<double>(n);
                const double q = freq_true[b] / static_cast<double>(n);
                chi2 += (p - q) * (p - q) / std::max(q, 1e-12);
            }
            report.bucket_chi2 = chi2;
        }
    }

    return report;
}

}  // namespace ltvforge
