#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ltvforge/matrix.hpp"
#include "ltvforge/nn.hpp"
#include "ltvforge/rng.hpp"

namespace ltvforge {

struct HighValueConfig {
    std::size_t attention_hidden = 32;
    std::vector<std::size_t> trunk_hidden = {48, 32};
    double noise_std = 0.1;
};

struct HighValueLossConfig {
    double beta_focal = 2.0;
    double lambda_reg = 0.5;
    double denom_floor = 1.0;
};

// Per-sample [mean, population std, max, min] over the feature dimension.
Matrix feature_stats(const Matrix& h);

// Whale predictor: attention-gated noise augmentation feeding two dedicated
// MLPs, a regression head (softplus) and a confidence head (sigmoid) with
// matching hidden sizes. The incoming features are treated as detached
// values; backward updates only this module's parameters.
struct HighValueModule {
    Mlp attention;  // [h; stats; bucket embedding] -> d_h gating logits
    Mlp reg_mlp;
    Mlp conf_mlp;

    void init(ParamSet& params, const HighValueConfig& cfg, std::size_t h_dim,
              std::size_t embed_dim, RngStream& rng);

    // Sets the regression-head bias so the initial output equals `value`.
    void center_output(double value);

    struct Output {
        Matrix weights;  // attention gates in (0,1)
        Matrix h_aug;
        std::vector<double> value;       // v >= 0
        std::vector<double> confidence;  // in (0,1)
    };

    // `noise` must be empty (inference identity) or match h's shape; it is
    // treated as a constant in the backward pass.
    Output forward(const Matrix& h, const Matrix& bucket_embed_rows, const Matrix& noise,
                   double noise_std);
    void backward(std::span<const double> d_value, std::span<const double> d_conf);

  private:
    Matrix att_pre_, weights_, scaled_noise_;
    std::vector<double> reg_pre_, conf_pre_, value_, confidence_;
};

// Attention gates for one batch: sigmoid(MLP(concat(h, stats, embed))).
Matrix attention_weights(const Matrix& h, const Matrix& stats, const Matrix& bucket_embed_rows,
                         Mlp& attention_mlp);

// h + noise_std * eps (.) w in train mode; identity when eps is empty.
Matrix augment(const Matrix& h, const Matrix& weights, const Matrix& noise, double noise_std);

// Focal confidence term plus floored relative regression error, averaged
// over the predicted-top-bucket set; empty sets contribute zero.
double high_value_loss(std::span<const double> value, std::span<const double> confidence,
                       std::span<const double> labels, const HighValueLossConfig& cfg);

struct HighValueLossGrads {
    std::vector<double> d_value;
    std::vector<double> d_conf;
};

HighValueLossGrads high_value_loss_backward(std::span<const double> value,
                                            std::span<const double> confidence,
                                            std::span<const double> labels,
                                            const HighValueLossConfig& cfg);

}  // namespace ltvforge
