#include "ltvforge/cascade.hpp"

#include <cmath>

#include "ltvforge/errors.hpp"
#include "ltvforge/log.hpp"

namespace ltvforge {

void CascadeConfig::validate() const {
    if (k < 2) throw ConfigError("cascade: K must be at least 2");
    const auto levels = static_cast<std::size_t>(k - 1);
    if (head_depths.size() != levels || head_l2.size() != levels || head_dropout.size() != levels ||
        stage_weights.size() != levels || negative_upweights.size() != levels) {
        throw ConfigError(
            "cascade: per-level lists must have length K-1 (defaults cover K=4 only; other K "
            "require explicit configuration)");
    }
    if (decision_threshold <= 0.0 || decision_threshold >= 1.0) {
        throw ConfigError("cascade: decision threshold must lie in (0,1)");
    }
    for (int d : head_depths) {
        if (d < 0) throw ConfigError("cascade: head depth must be non-negative");
    }
    for (double w : stage_weights) {
        if (w <= 0.0) throw ConfigError("cascade: stage weights must be positive");
    }
    for (double l : negative_upweights) {
        if (l <= 0.0) throw ConfigError("cascade: negative up-weights must be positive");
    }
    for (double r : head_dropout) {
        if (r < 0.0 || r >= 1.0) throw ConfigError("cascade: dropout rate must be in [0,1)");
    }
}

std::vector<double> bucket_distribution(std::span<const double> marginals) {
    const std::size_t k = marginals.size() + 1;
    std::vector<double> dist(k);
    double survive = 1.0;  // prod of marginals passed so far
    for (std::size_t b = 0; b + 1 < k; ++b) {
        dist[b] = survive * (1.0 - marginals[b]);
        survive *= marginals[b];
    }
    dist[k - 1] = survive;
    return dist;
}

std::vector<double> bucket_distribution_backward(std::span<const double> marginals,
                                                 std::span<const double> d_dist) {
    const std::size_t m = marginals.size();
    if (d_dist.size() != m + 1) throw ConfigError("bucket_distribution_backward shape mismatch");
    std::vector<double> d_p(m, 0.0);
    // dP_b/dp_j assembled with explicit leave-one-out products; K is small.
    for (std::size_t b = 0; b < m + 1; ++b) {
        const double up = d_dist[b];
        if (up == 0.0) continue;
        if (b < m) {
            // P_b = (1 - p_b) * prod_{j<b} p_j
            for (std::size_t j = 0; j < b; ++j) {
                double prod = 1.0 - marginals[b];
                for (std::size_t l = 0; l < b; ++l) {
                    if (l != j) prod *= marginals[l];
                }
                d_p[j] += up * prod;
            }
            double prefix = 1.0;
            for (std::size_t l = 0; l < b; ++l) prefix *= marginals[l];
            d_p[b] += up * (-prefix);
        } else {
            // P_K = prod_{j<K} p_j
            for (std::size_t j = 0; j < m; ++j) {
                double prod = 1.0;
                for (std::size_t l = 0; l < m; ++l) {
                    if (l != j) prod *= marginals[l];
                }
                d_p[j] += up * prod;
            }
        }
    }
    return d_p;
}

int predict_bucket(std::span<const double> marginals, double threshold) {
    for (std::size_t j = 0; j < marginals.size(); ++j) {
        if (marginals[j] <= threshold) return static_cast<int>(j) + 1;
    }
    return static_cast<int>(marginals.size()) + 1;
}

double cascade_loss(const Matrix& logits, std::span<const double> labels, const BucketSpec& spec,
                    const CascadeConfig& cfg) {
    const std::size_t n = logits.rows();
    if (n == 0) throw InputError("cascade_loss: empty batch");
    if (logits.cols() != static_cast<std::size_t>(cfg.k - 1)) {
        throw ConfigError("cascade_loss: logits width must be K-1");
    }
    double total = 0.0;
    for (std::size_t level = 0; level + 1 < static_cast<std::size_t>(cfg.k); ++level) {
        const double tau = spec.thresholds[level];
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double target = labels[i] > tau ? 1.0 : 0.0;
            const double weight = target == 0.0 ? cfg.negative_upweights[level] : 1.0;
            acc += weight * bce_with_logit(target, logits(i, level));
        }
        total += cfg.stage_weights[level] * acc / static_cast<double>(n);
    }
    return total;
}

Matrix cascade_loss_backward(const Matrix& logits, std::span<const double> labels,
                             const BucketSpec& spec, const CascadeConfig& cfg) {
    const std::size_t n = logits.rows();
    Matrix d(n, logits.cols());
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t level = 0; level < logits.cols(); ++level) {
        const double tau = spec.thresholds[level];
        for (std::size_t i = 0; i < n; ++i) {
            const double target = labels[i] > tau ? 1.0 : 0.0;
            const double weight = target == 0.0 ? cfg.negative_upweights[level] : 1.0;
            d(i, level) = cfg.stage_weights[level] * weight *
                          (sigmoid_strict(logits(i, level)) - target) * inv_n;
        }
    }
    return d;
}

DistillStats distill_stats(const Matrix& logits, std::span<const int> true_buckets, int k,
                           double temperature) {
    const std::size_t n = logits.rows();
    if (n == 0) throw InputError("distill: empty batch");
    if (true_buckets.size() != n) throw ConfigError("distill: bucket/logit size mismatch");
    if (n < static_cast<std::size_t>(k)) {
        log::warn("distill: batch size " + std::to_string(n) + " below bucket count " +
                  std::to_string(k));
    }
    DistillStats stats;
    stats.temperature = temperature;
    stats.q_pred.assign(k, 0.0);
    stats.q_true.assign(k, 0.0);
    std::vector<double> p(logits.cols());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < logits.cols(); ++j) {
            p[j] = sigmoid_strict(logits(i, j) / temperature);
        }
        const auto dist = bucket_distribution(p);
        for (int b = 0; b < k; ++b) stats.q_pred[b] += dist[b];
        stats.q_true[true_buckets[i] - 1] += 1.0;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    for (int b = 0; b < k; ++b) {
        stats.q_pred[b] *= inv_n;
        stats.q_true[b] *= inv_n;
    }
    return stats;
}

double smoothed_kl(std::span<const double> q_true, std::span<const double> q_pred, double eps) {
    if (q_true.size() != q_pred.size()) throw ConfigError("smoothed_kl size mismatch");
    double st = 0.0, sp = 0.0;
    for (std::size_t b = 0; b < q_true.size(); ++b) {
        st += q_true[b] + eps;
        sp += q_pred[b] + eps;
    }
    double kl = 0.0;
    for (std::size_t b = 0; b < q_true.size(); ++b) {
        const double qt = (q_true[b] + eps) / st;
        const double qp = (q_pred[b] + eps) / sp;
        kl += qt * std::log(qt / qp);
    }
    return kl;
}

double distill_loss(const Matrix& logits, std::span<const int> true_buckets, int k,
                    double temperature, double eps) {
    const auto stats = distill_stats(logits, true_buckets, k, temperature);
    return smoothed_kl(stats.q_true, stats.q_pred, eps);
}

Matrix distill_loss_backward(const Matrix& logits, std::span<const int> true_buckets, int k,
                             double temperature, double eps) {
    const auto stats = distill_stats(logits, true_buckets, k, temperature);
    const std::size_t n = logits.rows();

    // dKL/dq_pred with both smoothed vectors renormalized.
    double st = 0.0, sp = 0.0;
    for (int b = 0; b < k; ++b) {
        st += stats.q_true[b] + eps;
        sp += stats.q_pred[b] + eps;
    }
    std::vector<double> d_qpred(k, 0.0);
    double dot = 0.0;  // sum_k dKL/dqp'_k * qp'_k
    std::vector<double> d_qp_norm(k, 0.0);
    for (int b = 0; b < k; ++b) {
        const double qt = (stats.q_true[b] + eps) / st;
        const double qp = (stats.q_pred[b] + eps) / sp;
        d_qp_norm[b] = -qt / qp;
        dot += d_qp_norm[b] * qp;
    }
    for (int b = 0; b < k; ++b) {
        d_qpred[b] = (d_qp_norm[b] - dot) / sp;
    }

    Matrix d_logits(n, logits.cols());
    const double inv_n = 1.0 / static_cast<double>(n);
    std::vector<double> p(logits.cols());
    std::vector<double> d_dist(k);
    for (int b = 0; b < k; ++b) d_dist[b] = d_qpred[b] * inv_n;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < logits.cols(); ++j) {
            p[j] = sigmoid_strict(logits(i, j) / temperature);
        }
        const auto d_p = bucket_distribution_backward(p, d_dist);
        for (std::size_t j = 0; j < logits.cols(); ++j) {
            d_logits(i, j) = d_p[j] * p[j] * (1.0 - p[j]) / temperature;
        }
    }
    return d_logits;
}

double temperature_schedule(std::uint64_t step, std::uint64_t total_steps, double t_start,
                            double t_end) {
    return linear_decay(step, total_steps, t_start, t_end);
}

void CascadeHeads::init(ParamSet& params, const CascadeConfig& cfg, std::size_t in_dim,
                        RngStream& rng) {
    cfg.validate();
    heads.resize(cfg.k - 1);
    for (std::size_t level = 0; level < heads.size(); ++level) {
        const std::vector<std::size_t> hidden(static_cast<std::size_t>(cfg.head_depths[level]),
                                              cfg.head_hidden);
        heads[level].init(params, "cascade.level" + std::to_string(level), in_dim, hidden,
                          /*head_dim=*/1, cfg.head_dropout[level], rng);
    }
}

Matrix CascadeHeads::forward(const Matrix& h, Mode mode, RngStream* dropout_rng) {
    Matrix logits(h.rows(), heads.size());
    for (std::size_t level = 0; level < heads.size(); ++level) {
        const Matrix z = heads[level].forward(h, mode, dropout_rng);
        for (std::size_t i = 0; i < h.rows(); ++i) logits(i, level) = z(i, 0);
    }
    return logits;
}

Matrix CascadeHeads::backward(const Matrix& d_logits) {
    Matrix d_h;
    for (std::size_t level = 0; level < heads.size(); ++level) {
        Matrix up(d_logits.rows(), 1);
        for (std::size_t i = 0; i < d_logits.rows(); ++i) up(i, 0) = d_logits(i, level);
        Matrix d = heads[level].backward(up);
        if (d_h.empty()) {
            d_h = std::move(d);
        } else {
            add_inplace(d_h, d);
        }
    }
    return d_h;
}

double CascadeHeads::l2_penalty(const CascadeConfig& cfg) const {
    double penalty = 0.0;
    for (std::size_t level = 0; level < heads.size(); ++level) {
        double sq = 0.0;
        for (const auto& dense : heads[level].layers) {
            for (std::size_t i = 0; i < dense.weight->value.size(); ++i) {
                const double w = dense.weight->value.data()[i];
                sq += w * w;
            }
        }
        for (std::size_t i = 0; i < heads[level].head.weight->value.size(); ++i) {
            const double w = heads[level].head.weight->value.data()[i];
            sq += w * w;
        }
        penalty += cfg.head_l2[level] * sq;
    }
    return penalty;
}

void CascadeHeads::accumulate_l2_grads(const CascadeConfig& cfg, double outer_weight) {
    if (outer_weight == 0.0) return;
    for (std::size_t level = 0; level < heads.size(); ++level) {
        const double coeff = 2.0 * cfg.head_l2[level] * outer_weight;
        if (coeff == 0.0) continue;
        for (auto& dense : heads[level].layers) {
            for (std::size_t i = 0; i < dense.weight->value.size(); ++i) {
                dense.weight->grad.data()[i] += coeff * dense.weight->value.data()[i];
            }
        }
        auto& head_w = heads[level].head;
        for (std::size_t i = 0; i < head_w.weight->value.size(); ++i) {
            head_w.weight->grad.data()[i] += coeff * head_w.weight->value.data()[i];
        }
    }
}

CascadeOutput cascade_output_from_logits(const Matrix& logits, double threshold) {
    CascadeOutput out;
    out.logits = logits;
    out.marginals = Matrix(logits.rows(), logits.cols());
    out.bucket_probs = Matrix(logits.rows(), logits.cols() + 1);
    out.predicted.resize(logits.rows());
    std::vector<double> p(logits.cols());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        for (std::size_t j = 0; j < logits.cols(); ++j) {
            p[j] = sigmoid_strict(logits(i, j));
            out.marginals(i, j) = p[j];
        }
        const auto dist = bucket_distribution(p);
        for (std::size_t b = 0; b < dist.size(); ++b) out.bucket_probs(i, b) = dist[b];
        out.predicted[i] = predict_bucket(p, threshold);
    }
    return out;
}

}  // namespace ltvforge
