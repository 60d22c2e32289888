#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ltvforge/data.hpp"
#include "ltvforge/matrix.hpp"
#include "ltvforge/nn.hpp"

namespace ltvforge {

struct CascadeConfig {
    int k = 4;
    std::size_t head_hidden = 32;
    // per-level classifier settings; list lengths must equal k-1
    std::vector<int> head_depths = {2, 1, 2};
    std::vector<double> head_l2 = {0.01, 0.01, 0.008};
    std::vector<double> head_dropout = {0.2, 0.1, 0.1};
    std::vector<double> stage_weights = {5.0, 2.5, 3.0};
    std::vector<double> negative_upweights = {3.0, 5.0, 8.0};
    double decision_threshold = 0.5;
    double temp_start = 2.0;
    double temp_end = 1.0;

    void validate() const;
};

// Chain-rule bucket distribution from marginal exceedance probabilities:
// P(1) = 1-p_1, P(k) = (1-p_k) * prod_{j<k} p_j, P(K) = prod_{j<K} p_j.
// Telescopes to 1 for any p in (0,1)^{K-1}.
std::vector<double> bucket_distribution(std::span<const double> marginals);

// Exact Jacobian-transpose product: given dL/dP returns dL/dp.
std::vector<double> bucket_distribution_backward(std::span<const double> marginals,
                                                 std::span<const double> d_dist);

// Sequential decision rule: the first level whose marginal fails the
// threshold stops the sample (<= counts as failure); surviving all levels
// lands in bucket K. 1-based.
int predict_bucket(std::span<const double> marginals, double threshold = 0.5);

// Weighted teacher-forced BCE over the full batch at every level (Eq. form:
// sum_k w_k * mean_i s_ik * BCE(t_ik, p_ik)), computed in logit space.
// Targets are t_ik = 1 when y_i exceeds threshold k; negatives are
// up-weighted by lambda_k.
double cascade_loss(const Matrix& logits, std::span<const double> labels, const BucketSpec& spec,
                    const CascadeConfig& cfg);

// dL/dz for the loss above.
Matrix cascade_loss_backward(const Matrix& logits, std::span<const double> labels,
                             const BucketSpec& spec, const CascadeConfig& cfg);

struct DistillStats {
    std::vector<double> q_pred;  // batch mean of temperature-scaled bucket distributions
    std::vector<double> q_true;  // empirical bucket frequencies
    double temperature = 1.0;
};

DistillStats distill_stats(const Matrix& logits, std::span<const int> true_buckets, int k,
                           double temperature);

// KL(smooth(q_true) || smooth(q_pred)) with additive smoothing eps and
// renormalization of both vectors.
double smoothed_kl(std::span<const double> q_true, std::span<const double> q_pred, double eps);

// Batch-level distillation loss; gradient w.r.t. the logits flows through the
// temperature-scaled sigmoid and the bucket distribution.
double distill_loss(const Matrix& logits, std::span<const int> true_buckets, int k,
                    double temperature, double eps = 1e-8);

Matrix distill_loss_backward(const Matrix& logits, std::span<const int> true_buckets, int k,
                             double temperature, double eps = 1e-8);

// Linear decay of the distillation temperature over training.
double temperature_schedule(std::uint64_t step, std::uint64_t total_steps, double t_start = 2.0,
                            double t_end = 1.0);

// The K-1 per-level classifier MLPs. Forward caches support repeated
// backward calls (the point-wise and distillation losses both propagate
// through the same heads).
struct CascadeHeads {
    std::vector<Mlp> heads;

    void init(ParamSet& params, const CascadeConfig& cfg, std::size_t in_dim, RngStream& rng);
    // n x (K-1) logits
    Matrix forward(const Matrix& h, Mode mode, RngStream* dropout_rng);
    // accumulates head parameter grads; returns dL/dh
    Matrix backward(const Matrix& d_logits);

    double l2_penalty(const CascadeConfig& cfg) const;
    void accumulate_l2_grads(const CascadeConfig& cfg, double outer_weight);
};

struct CascadeOutput {
    Matrix logits;
    Matrix marginals;
    Matrix bucket_probs;
    std::vector<int> predicted;  // 1-based
};

CascadeOutput cascade_output_from_logits(const Matrix& logits, double threshold);

}  // namespace ltvforge
