#include "ltvforge/high_value.hpp"

#include <algorithm>
#include <cmath>

#include "ltvforge/errors.hpp"

namespace ltvforge {

Matrix feature_stats(const Matrix& h) {
    if (h.cols() == 0) throw InputError("feature_stats: feature dimension must be positive");
    Matrix stats(h.rows(), 4);
    for (std::size_t r = 0; r < h.rows(); ++r) {
        double mean = 0.0, mx = h(r, 0), mn = h(r, 0);
        for (std::size_t c = 0; c < h.cols(); ++c) {
            const double v = h(r, c);
            mean += v;
            mx = std::max(mx, v);
            mn = std::min(mn, v);
        }
        mean /= static_cast<double>(h.cols());
        double var = 0.0;
        for (std::size_t c = 0; c < h.cols(); ++c) {
            const double dev = h(r, c) - mean;
            var += dev * dev;
        }
        var /= static_cast<double>(h.cols());
        stats(r, 0) = mean;
        stats(r, 1) = std::sqrt(var);
        stats(r, 2) = mx;
        stats(r, 3) = mn;
    }
    return stats;
}

Matrix attention_weights(const Matrix& h, const Matrix& stats, const Matrix& bucket_embed_rows,
                         Mlp& attention_mlp) {
    const Matrix input = hcat({&h, &stats, &bucket_embed_rows});
    const Matrix pre = attention_mlp.forward(input, Mode::kInfer, nullptr);
    return activate(pre, Activation::kSigmoid);
}

Matrix augment(const Matrix& h, const Matrix& weights, const Matrix& noise, double noise_std) {
    if (noise.empty() || noise_std == 0.0) return h;
    if (noise.rows() != h.rows() || noise.cols() != h.cols()) {
        throw ConfigError("augment: noise shape mismatch");
    }
    Matrix out = h;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data()[i] += noise_std * noise.data()[i] * weights.data()[i];
    }
    return out;
}

void HighValueModule::init(ParamSet& params, const HighValueConfig& cfg, std::size_t h_dim,
                           std::size_t embed_dim, RngStream& rng) {
    const std::vector<std::size_t> att_hidden = {cfg.attention_hidden};
    attention.init(params, "whale.attention", h_dim + 4 + embed_dim, att_hidden, h_dim,
                   /*dropout_rate=*/0.0, rng);
    reg_mlp.init(params, "whale.reg", h_dim, cfg.trunk_hidden, /*head_dim=*/1,
                 /*dropout_rate=*/0.0, rng);
    conf_mlp.init(params, "whale.conf", h_dim, cfg.trunk_hidden, /*head_dim=*/1,
                  /*dropout_rate=*/0.0, rng);
}

void HighValueModule::center_output(double value) {
    // Start the raw-scale regression at the top bucket's center; a zero-bias
    // softplus otherwise needs tens of thousands of optimizer steps just to
    // traverse the value scale.
    if (value <= 0.0) return;
    const double pre = value > 30.0 ? value : std::log(std::expm1(value));
    reg_mlp.head.bias->value(0, 0) = pre;
}

HighValueModule::Output HighValueModule::forward(const Matrix& h, const Matrix& bucket_embed_rows,
                                                 const Matrix& noise, double noise_std) {
    const Matrix stats = feature_stats(h);
    const Matrix att_in = hcat({&h, &stats, &bucket_embed_rows});
    att_pre_ = attention.forward(att_in, Mode::kInfer, nullptr);
    weights_ = activate(att_pre_, Activation::kSigmoid);

    if (noise.empty() || noise_std == 0.0) {
        scaled_noise_ = Matrix();
    } else {
        scaled_noise_ = Matrix(noise.rows(), noise.cols());
        for (std::size_t i = 0; i < noise.size(); ++i) {
            scaled_noise_.data()[i] = noise_std * noise.data()[i];
        }
    }
    const Matrix h_aug = augment(h, weights_, noise, noise_std);

    const Matrix reg = reg_mlp.forward(h_aug, Mode::kInfer, nullptr);
    const Matrix conf = conf_mlp.forward(h_aug, Mode::kInfer, nullptr);

    Output out;
    out.weights = weights_;
    out.h_aug = h_aug;
    reg_pre_.resize(h.rows());
    conf_pre_.resize(h.rows());
    value_.resize(h.rows());
    confidence_.resize(h.rows());
    for (std::size_t i = 0; i < h.rows(); ++i) {
        reg_pre_[i] = reg(i, 0);
        conf_pre_[i] = conf(i, 0);
        value_[i] = softplus(reg(i, 0));
        confidence_[i] = sigmoid_strict(conf(i, 0));
    }
    out.value = value_;
    out.confidence = confidence_;
    return out;
}

void HighValueModule::backward(std::span<const double> d_value, std::span<const double> d_conf) {
    const std::size_t n = d_value.size();
    Matrix d_reg(n, 1), d_confpre(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        d_reg(i, 0) = d_value[i] * sigmoid_strict(reg_pre_[i]);
        const double s = confidence_[i];
        d_confpre(i, 0) = d_conf[i] * s * (1.0 - s);
    }
    Matrix d_haug = reg_mlp.backward(d_reg);
    add_inplace(d_haug, conf_mlp.backward(d_confpre));

    // h itself is detached; only the gating path carries gradient back into
    // the attention MLP (d_w = d_haug .* scaled noise).
    if (!scaled_noise_.empty()) {
        const Matrix d_w = hadamard(d_haug, scaled_noise_);
        const Matrix d_att_pre = activate_backward(att_pre_, d_w, Activation::kSigmoid);
        attention.backward(d_att_pre);
    }
}

double high_value_loss(std::span<const double> value, std::span<const double> confidence,
                       std::span<const double> labels, const HighValueLossConfig& cfg) {
    if (value.size() != confidence.size() || value.size() != labels.size()) {
        throw ConfigError("high_value_loss size mismatch");
    }
    if (value.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < value.size(); ++i) {
        const double conf_term =
            -std::pow(1.0 - confidence[i], cfg.beta_focal) * std::log(confidence[i]);
        const double rel_term =
            std::abs(value[i] - labels[i]) / std::max(labels[i], cfg.denom_floor);
        acc += conf_term + cfg.lambda_reg * rel_term;
    }
    return acc / static_cast<double>(value.size());
}

HighValueLossGrads high_value_loss_backward(std::span<const double> value,
                                            std::span<const double> confidence,
                                            std::span<const double> labels,
                                            const HighValueLossConfig& cfg) {
    HighValueLossGrads grads;
    const std::size_t n = value.size();
    grads.d_value.assign(n, 0.0);
    grads.d_conf.assign(n, 0.0);
    if (n == 0) return grads;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double c = confidence[i];
        const double one_minus = 1.0 - c;
        grads.d_conf[i] = inv_n * (cfg.beta_focal * std::pow(one_minus, cfg.beta_focal - 1.0) *
                                       std::log(c) -
                                   std::pow(one_minus, cfg.beta_focal) / c);
        const double diff = value[i] - labels[i];
        const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
        grads.d_value[i] = inv_n * cfg.lambda_reg * sign / std::max(labels[i], cfg.denom_floor);
    }
    return grads;
}

}  // namespace ltvforge
