#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ltvforge/cascade.hpp"
#include "ltvforge/data.hpp"
#include "ltvforge/matrix.hpp"
#include "ltvforge/nn.hpp"
#include "ltvforge/rng.hpp"

namespace ltvforge {

struct AlignmentConfig {
    std::size_t bucket_embed_dim = 8;
    std::size_t aligned_dim = 32;
};

struct ResidualConfig {
    std::size_t proj_dim = 32;
    std::size_t block2_dim = 16;
};

// GLU-style gate over the enriched representation concat(h, marginals,
// bucket embedding). The marginal probabilities enter value-only: their
// gradient is dropped at this boundary. Bucket embedding rows are trainable.
struct AlignmentModule {
    EmbeddingTable bucket_embed;
    DenseLayer gate;
    DenseLayer content;

    void init(ParamSet& params, const AlignmentConfig& cfg, std::size_t h_dim, int k,
              RngStream& rng);
    Matrix forward(const Matrix& h, const Matrix& marginals, std::span<const int> pred_buckets);
    // returns dL/dh; accumulates gate/content/embedding grads, drops the
    // marginal slice per the stop-gradient contract
    Matrix backward(const Matrix& d_out);

  private:
    std::size_t h_dim_ = 0;
    Matrix gate_pre_, gate_act_, content_pre_, content_act_;
};

// Dual residual refinement: projection, a batch-normalized residual block
// with identity skip, a second block with a linear skip projection, and a
// tanh scalar head producing the normalized intra-bucket value.
struct ResidualModule {
    DenseLayer proj;
    DenseLayer block1;
    BatchNormLayer bn;
    DenseLayer block2;
    DenseLayer block2_skip;
    DenseLayer head;

    void init(ParamSet& params, const ResidualConfig& cfg, std::size_t in_dim, RngStream& rng);
    std::vector<double> forward(const Matrix& h_aligned, Mode mode);
    Matrix backward(std::span<const double> d_value);

  private:
    Matrix h0_, pre1_, h1_, pre2_, h2_;
    Matrix relu1_in_, relu2_in_;
    std::vector<double> head_pre_, value_;
};

// theta linearly decays 1.0 -> 0.1 over training, clamped to [0.1, 1.0].
double theta_schedule(std::uint64_t step, std::uint64_t total_steps);

// Zero-bucket targets are replaced by a uniform draw from [-theta, theta];
// other buckets pass through. Training-time only.
double smooth_target(double v_target, int true_bucket, double theta, RngStream& rng);

// Value-weighted MSE: mean of (v_hat - v)^2 * sigmoid(beta * v).
double residual_loss(std::span<const double> v_hat, std::span<const double> v_target, double beta);
std::vector<double> residual_loss_backward(std::span<const double> v_hat,
                                           std::span<const double> v_target, double beta);

// Bucket-specific denormalization; the zero bucket overrides to exactly 0,
// other buckets map v*r_b + c_b floored at 0.
double denormalize(double v_norm, const BucketSpec& spec, int bucket);

}  // namespace ltvforge
