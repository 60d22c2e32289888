#include "ltvforge/align_residual.hpp"

#include <cmath>

#include "ltvforge/errors.hpp"

namespace ltvforge {

void AlignmentModule::init(ParamSet& params, const AlignmentConfig& cfg, std::size_t h_dim, int k,
                           RngStream& rng) {
    h_dim_ = h_dim;
    bucket_embed.init(params, "align.bucket_embed", static_cast<std::size_t>(k),
                      cfg.bucket_embed_dim, rng);
    const std::size_t base_dim = h_dim + static_cast<std::size_t>(k - 1) + cfg.bucket_embed_dim;
    gate.init(params, "align.gate", base_dim, cfg.aligned_dim, rng);
    content.init(params, "align.content", base_dim, cfg.aligned_dim, rng);
}

Matrix AlignmentModule::forward(const Matrix& h, const Matrix& marginals,
                                std::span<const int> pred_buckets) {
    std::vector<std::int32_t> rows(pred_buckets.size());
    for (std::size_t i = 0; i < pred_buckets.size(); ++i) {
        rows[i] = pred_buckets[i] - 1;  // table is 0-based over buckets 1..K
    }
    const Matrix embedded = bucket_embed.forward(rows);
    const Matrix h_base = hcat({&h, &marginals, &embedded});

    gate_pre_ = gate.forward(h_base);
    gate_act_ = activate(gate_pre_, Activation::kSigmoid);
    content_pre_ = content.forward(h_base);
    content_act_ = activate(content_pre_, Activation::kRelu);
    return hadamard(gate_act_, content_act_);
}

Matrix AlignmentModule::backward(const Matrix& d_out) {
    const Matrix d_gate = activate_backward(gate_pre_, hadamard(d_out, content_act_),
                                            Activation::kSigmoid);
    const Matrix d_content = activate_backward(content_pre_, hadamard(d_out, gate_act_),
                                               Activation::kRelu);
    Matrix d_base = gate.backward(d_gate);
    add_inplace(d_base, content.backward(d_content));

    const std::size_t n = d_base.rows();
    const std::size_t marginal_dim = d_base.cols() - h_dim_ - bucket_embed.dim();
    Matrix d_h(n, h_dim_);
    Matrix d_embed(n, bucket_embed.dim());
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < h_dim_; ++c) d_h(r, c) = d_base(r, c);
        // the marginal slice is detached: its gradient stops here
        for (std::size_t c = 0; c < bucket_embed.dim(); ++c) {
            d_embed(r, c) = d_base(r, h_dim_ + marginal_dim + c);
        }
    }
    bucket_embed.backward(d_embed);
    return d_h;
}

void ResidualModule::init(ParamSet& params, const ResidualConfig& cfg, std::size_t in_dim,
                          RngStream& rng) {
    proj.init(params, "residual.proj", in_dim, cfg.proj_dim, rng);
    // no bias ahead of batch norm: the shift parameter subsumes it
    block1.init(params, "residual.block1", cfg.proj_dim, cfg.proj_dim, rng, /*with_bias=*/false);
    bn.init(params, "residual.bn", cfg.proj_dim);
    block2.init(params, "residual.block2", cfg.proj_dim, cfg.block2_dim, rng);
    block2_skip.init(params, "residual.block2_skip", cfg.proj_dim, cfg.block2_dim, rng);
    head.init(params, "residual.head", cfg.block2_dim, 1, rng);
}

std::vector<double> ResidualModule::forward(const Matrix& h_aligned, Mode mode) {
    h0_ = proj.forward(h_aligned);
    relu1_in_ = h0_;
    const Matrix a1 = activate(h0_, Activation::kRelu);
    const Matrix r1 = block1.forward(a1);
    Matrix b1 = bn.forward(r1, mode);
    add_inplace(b1, h0_);
    pre1_ = std::move(b1);
    h1_ = activate(pre1_, Activation::kRelu);

    relu2_in_ = h1_;
    const Matrix a2 = activate(h1_, Activation::kRelu);
    Matrix r2 = block2.forward(a2);
    add_inplace(r2, block2_skip.forward(h1_));
    pre2_ = std::move(r2);
    h2_ = activate(pre2_, Activation::kRelu);

    const Matrix z = head.forward(h2_);
    head_pre_.resize(z.rows());
    value_.resize(z.rows());
    for (std::size_t i = 0; i < z.rows(); ++i) {
        head_pre_[i] = z(i, 0);
        value_[i] = tanh_strict(z(i, 0));
    }
    return value_;
}

Matrix ResidualModule::backward(std::span<const double> d_value) {
    Matrix d_z(d_value.size(), 1);
    for (std::size_t i = 0; i < d_value.size(); ++i) {
        d_z(i, 0) = d_value[i] * (1.0 - value_[i] * value_[i]);
    }
    const Matrix d_h2 = head.backward(d_z);
    const Matrix d_pre2 = activate_backward(pre2_, d_h2, Activation::kRelu);

    const Matrix d_a2 = block2.backward(d_pre2);
    Matrix d_h1 = block2_skip.backward(d_pre2);
    add_inplace(d_h1, activate_backward(relu2_in_, d_a2, Activation::kRelu));

    const Matrix d_pre1 = activate_backward(pre1_, d_h1, Activation::kRelu);
    const Matrix d_r1 = bn.backward(d_pre1);
    const Matrix d_a1 = block1.backward(d_r1);
    Matrix d_h0 = activate_backward(relu1_in_, d_a1, Activation::kRelu);
    add_inplace(d_h0, d_pre1);  // identity skip around block 1
    return proj.backward(d_h0);
}

double theta_schedule(std::uint64_t step, std::uint64_t total_steps) {
    return linear_decay(step, total_steps, 1.0, 0.1);
}

double smooth_target(double v_target, int true_bucket, double theta, RngStream& rng) {
    if (true_bucket != 1) return v_target;
    return rng.uniform(-theta, theta);
}

double residual_loss(std::span<const double> v_hat, std::span<const double> v_target, double beta) {
    if (v_hat.size() != v_target.size()) throw ConfigError("residual_loss size mismatch");
    if (v_hat.empty()) throw InputError("residual_loss: empty batch");
    double acc = 0.0;
    for (std::size_t i = 0; i < v_hat.size(); ++i) {
        const double err = v_hat[i] - v_target[i];
        acc += err * err * sigmoid_strict(beta * v_target[i]);
    }
    return acc / static_cast<double>(v_hat.size());
}

std::vector<double> residual_loss_backward(std::span<const double> v_hat,
                                           std::span<const double> v_target, double beta) {
    std::vector<double> d(v_hat.size());
    const double inv_n = 1.0 / static_cast<double>(v_hat.size());
    for (std::size_t i = 0; i < v_hat.size(); ++i) {
        d[i] = 2.0 * (v_hat[i] - v_target[i]) * sigmoid_strict(beta * v_target[i]) * inv_n;
    }
    return d;
}

double denormalize(double v_norm, const BucketSpec& spec, int bucket) {
    if (bucket < 1 || bucket > spec.k) throw InputError("denormalize: bucket out of range");
    if (bucket == 1) return 0.0;
    const double v = v_norm * spec.half_ranges[bucket - 1] + spec.centers[bucket - 1];
    return v > 0.0 ? v : 0.0;
}

}  // namespace ltvforge
