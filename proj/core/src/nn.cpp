#include "ltvforge/nn.hpp"

#include <cmath>

#include "ltvforge/errors.hpp"

namespace ltvforge {

Tensor& ParamSet::create(const std::string& name, std::size_t rows, std::size_t cols, bool trainable) {
    if (index_.count(name) != 0) throw ConfigError("duplicate parameter name: " + name);
    auto t = std::make_unique<Tensor>();
    t->name = name;
    t->value = Matrix(rows, cols);
    t->grad = Matrix(rows, cols);
    t->moment1 = Matrix(rows, cols);
    t->moment2 = Matrix(rows, cols);
    t->trainable = trainable;
    index_[name] = tensors_.size();
    tensors_.push_back(std::move(t));
    return *tensors_.back();
}

Tensor* ParamSet::find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : tensors_[it->second].get();
}

const Tensor* ParamSet::find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : tensors_[it->second].get();
}

void ParamSet::zero_grads() {
    for (auto& t : tensors_) t->grad.fill(0.0);
}

std::size_t ParamSet::scalar_count(bool trainable_only) const {
    std::size_t n = 0;
    for (const auto& t : tensors_) {
        if (!trainable_only || t->trainable) n += t->value.size();
    }
    return n;
}

void adamw_step(ParamSet& params, const AdamWConfig& cfg) {
    params.bump_step();
    const auto t = static_cast<double>(params.step());
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (auto& tensor : params.tensors()) {
        if (!tensor->trainable) {
            tensor->grad.fill(0.0);
            continue;
        }
        double* theta = tensor->value.data();
        double* g = tensor->grad.data();
        double* m = tensor->moment1.data();
        double* v = tensor->moment2.data();
        const std::size_t n = tensor->value.size();
        for (std::size_t i = 0; i < n; ++i) {
            theta[i] -= cfg.lr * cfg.weight_decay * theta[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            theta[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
            g[i] = 0.0;
        }
    }
}

double cosine_lr(const ScheduleState& state) {
    if (state.total_steps == 0) throw ConfigError("cosine_lr: total_steps must be positive");
    const double frac = static_cast<double>(state.step) / static_cast<double>(state.total_steps);
    constexpr double kPi = 3.14159265358979323846;
    return state.lr_min + 0.5 * (state.lr0 - state.lr_min) * (1.0 + std::cos(kPi * frac));
}

double linear_decay(std::uint64_t step, std::uint64_t total, double start, double end) {
    if (total == 0) throw ConfigError("linear_decay: total steps must be positive");
    const double frac = static_cast<double>(step) / static_cast<double>(total);
    double v = start + (end - start) * frac;
    const double lo = std::min(start, end);
    const double hi = std::max(start, end);
    if (v < lo) v = lo;
    if (v > hi) v = hi;
    return v;
}

Matrix activate(const Matrix& x, Activation kind) {
    Matrix y(x.rows(), x.cols());
    const double* in = x.data();
    double* out = y.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
        switch (kind) {
            case Activation::kRelu: out[i] = in[i] > 0.0 ? in[i] : 0.0; break;
            case Activation::kSigmoid: out[i] = sigmoid_strict(in[i]); break;
            case Activation::kTanh: out[i] = tanh_strict(in[i]); break;
            case Activation::kSoftplus: out[i] = softplus(in[i]); break;
        }
    }
    return y;
}

Matrix activate_backward(const Matrix& x, const Matrix& d_out, Activation kind) {
    if (x.rows() != d_out.rows() || x.cols() != d_out.cols()) {
        throw ConfigError("activate_backward shape mismatch");
    }
    Matrix d_in(x.rows(), x.cols());
    const double* in = x.data();
    const double* dy = d_out.data();
    double* dx = d_in.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
        double slope = 0.0;
        switch (kind) {
            case Activation::kRelu: slope = in[i] > 0.0 ? 1.0 : 0.0; break;
            case Activation::kSigmoid: {
                const double s = sigmoid_strict(in[i]);
                slope = s * (1.0 - s);
                break;
            }
            case Activation::kTanh: {
                const double t = tanh_strict(in[i]);
                slope = 1.0 - t * t;
                break;
            }
            case Activation::kSoftplus: slope = sigmoid_strict(in[i]); break;
        }
        dx[i] = dy[i] * slope;
    }
    return d_in;
}

void DenseLayer::init(ParamSet& params, const std::string& name, std::size_t in_dim,
                      std::size_t out_dim, RngStream& rng, bool with_bias) {
    weight = &params.create(name + ".weight", in_dim, out_dim);
    bias = with_bias ? &params.create(name + ".bias", 1, out_dim) : nullptr;
    const double bound = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
    for (std::size_t i = 0; i < weight->value.size(); ++i) {
        weight->value.data()[i] = rng.uniform(-bound, bound);
    }
}

Matrix DenseLayer::forward(const Matrix& x) {
    if (x.cols() != weight->value.rows()) throw ConfigError("dense input dim mismatch: " + weight->name);
    input_ = x;
    Matrix y = matmul(x, weight->value);
    if (bias != nullptr) add_row_inplace(y, bias->value);
    return y;
}

Matrix DenseLayer::backward(const Matrix& d_out) {
    add_inplace(weight->grad, matmul_tn(input_, d_out));
    if (bias != nullptr) add_inplace(bias->grad, col_sums(d_out));
    return matmul_nt(d_out, weight->value);
}

Matrix ReluLayer::forward(const Matrix& x) {
    pre_ = x;
    return activate(x, Activation::kRelu);
}

Matrix ReluLayer::backward(const Matrix& d_out) const {
    return activate_backward(pre_, d_out, Activation::kRelu);
}

Matrix DropoutLayer::forward(const Matrix& x, Mode mode, RngStream* rng) {
    active_ = mode == Mode::kTrain && rate > 0.0 && rng != nullptr;
    if (!active_) return x;
    mask_ = Matrix(x.rows(), x.cols());
    const double keep = 1.0 - rate;
    for (std::size_t i = 0; i < mask_.size(); ++i) {
        mask_.data()[i] = rng->uniform01() >= rate ? 1.0 / keep : 0.0;
    }
    return hadamard(x, mask_);
}

Matrix DropoutLayer::backward(const Matrix& d_out) const {
    if (!active_) return d_out;
    return hadamard(d_out, mask_);
}

void BatchNormLayer::init(ParamSet& params, const std::string& name, std::size_t dim) {
    scale = &params.create(name + ".scale", 1, dim);
    shift = &params.create(name + ".shift", 1, dim);
    running_mean = &params.create(name + ".running_mean", 1, dim, /*trainable=*/false);
    running_var = &params.create(name + ".running_var", 1, dim, /*trainable=*/false);
    scale->value.fill(1.0);
    running_var->value.fill(1.0);
}

Matrix BatchNormLayer::forward(const Matrix& x, Mode mode) {
    const std::size_t n = x.rows(), d = x.cols();
    train_path_ = mode != Mode::kInfer;
    if (train_path_ && n < 2) throw InputError("batch_norm: train mode requires batch size >= 2");
    Matrix y(n, d);
    xhat_ = Matrix(n, d);
    inv_std_.assign(d, 0.0);
    for (std::size_t c = 0; c < d; ++c) {
        double mean, var;
        if (train_path_) {
            mean = 0.0;
            for (std::size_t r = 0; r < n; ++r) mean += x(r, c);
            mean /= static_cast<double>(n);
            var = 0.0;
            for (std::size_t r = 0; r < n; ++r) {
                const double dev = x(r, c) - mean;
                var += dev * dev;
            }
            var /= static_cast<double>(n);
            if (mode == Mode::kTrain) {
                running_mean->value(0, c) = momentum * running_mean->value(0, c) + (1.0 - momentum) * mean;
                running_var->value(0, c) = momentum * running_var->value(0, c) + (1.0 - momentum) * var;
            }
        } else {
            mean = running_mean->value(0, c);
            var = running_var->value(0, c);
        }
        const double inv = 1.0 / std::sqrt(var + epsilon);
        inv_std_[c] = inv;
        for (std::size_t r = 0; r < n; ++r) {
            xhat_(r, c) = (x(r, c) - mean) * inv;
            y(r, c) = scale->value(0, c) * xhat_(r, c) + shift->value(0, c);
        }
    }
    return y;
}

Matrix BatchNormLayer::backward(const Matrix& d_out) {
    const std::size_t n = d_out.rows(), d = d_out.cols();
    Matrix d_in(n, d);
    for (std::size_t c = 0; c < d; ++c) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            sum_dy += d_out(r, c);
            sum_dy_xhat += d_out(r, c) * xhat_(r, c);
        }
        scale->grad(0, c) += sum_dy_xhat;
        shift->grad(0, c) += sum_dy;
        const double g = scale->value(0, c);
        if (train_path_) {
            // Exact gradient through the batch statistics.
            const double inv_n = 1.0 / static_cast<double>(n);
            for (std::size_t r = 0; r < n; ++r) {
                d_in(r, c) = g * inv_std_[c] *
                             (d_out(r, c) - inv_n * sum_dy - xhat_(r, c) * inv_n * sum_dy_xhat);
            }
        } else {
            for (std::size_t r = 0; r < n; ++r) d_in(r, c) = g * inv_std_[c] * d_out(r, c);
        }
    }
    return d_in;
}

void EmbeddingTable::init(ParamSet& params, const std::string& name, std::size_t rows,
                          std::size_t dim, RngStream& rng) {
    table = &params.create(name + ".table", rows, dim);
    for (std::size_t i = 0; i < table->value.size(); ++i) {
        table->value.data()[i] = 0.01 * rng.normal();
    }
}

Matrix EmbeddingTable::forward(std::span<const std::int32_t> indices) {
    indices_.assign(indices.begin(), indices.end());
    Matrix out(indices.size(), dim());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const std::int32_t idx = indices[r];
        if (idx < 0 || static_cast<std::size_t>(idx) >= table_rows()) {
            throw InputError("embedding index out of range: " + std::to_string(idx) + " for " +
                             table->name);
        }
        for (std::size_t c = 0; c < dim(); ++c) out(r, c) = table->value(idx, c);
    }
    return out;
}

void EmbeddingTable::backward(const Matrix& d_out) {
    if (d_out.rows() != indices_.size()) throw ConfigError("embedding backward shape mismatch");
    for (std::size_t r = 0; r < indices_.size(); ++r) {
        const std::int32_t idx = indices_[r];
        for (std::size_t c = 0; c < dim(); ++c) table->grad(idx, c) += d_out(r, c);
    }
}

void Mlp::init(ParamSet& params, const std::string& prefix, std::size_t in_dim,
               std::span<const std::size_t> hidden, std::size_t head_dim, double dropout_rate,
               RngStream& rng) {
    layers.resize(hidden.size());
    relus.resize(hidden.size());
    dropouts.resize(hidden.size());
    std::size_t dim = in_dim;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
        layers[i].init(params, prefix + ".dense" + std::to_string(i), dim, hidden[i], rng);
        dropouts[i].rate = dropout_rate;
        dim = hidden[i];
    }
    has_head = head_dim > 0;
    if (has_head) head.init(params, prefix + ".head", dim, head_dim, rng);
}

Matrix Mlp::forward(const Matrix& x, Mode mode, RngStream* dropout_rng) {
    Matrix h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        h = layers[i].forward(h);
        h = relus[i].forward(h);
        h = dropouts[i].forward(h, mode, dropout_rng);
    }
    if (has_head) h = head.forward(h);
    return h;
}

Matrix Mlp::backward(const Matrix& d_out) {
    Matrix d = d_out;
    if (has_head) d = head.backward(d);
    for (std::size_t i = layers.size(); i-- > 0;) {
        d = dropouts[i].backward(d);
        d = relus[i].backward(d);
        d = layers[i].backward(d);
    }
    return d;
}

std::size_t Mlp::out_dim() const {
    if (has_head) return head.out_dim();
    return layers.empty() ? 0 : layers.back().out_dim();
}

GradCheckResult grad_check(ParamSet& params, const std::function<double()>& loss_fn,
                           const std::function<void()>& compute_grads, double epsilon,
                           std::size_t max_params) {
    const std::size_t count = params.scalar_count();
    if (count > max_params) {
        throw ConfigError("grad_check: parameter count " + std::to_string(count) +
                          " exceeds cap " + std::to_string(max_params));
    }
    const double base = loss_fn();
    if (!std::isfinite(base)) throw NumericError("grad_check: non-finite loss");
    compute_grads();

    GradCheckResult result;
    for (auto& tensor : params.tensors()) {
        if (!tensor->trainable) continue;
        for (std::size_t i = 0; i < tensor->value.size(); ++i) {
            double& theta = tensor->value.data()[i];
            const double saved = theta;
            theta = saved + epsilon;
            const double up = loss_fn();
            theta = saved - epsilon;
            const double down = loss_fn();
            theta = saved;
            if (!std::isfinite(up) || !std::isfinite(down)) {
                throw NumericError("grad_check: non-finite loss at " + tensor->name);
            }
            const double numeric = (up - down) / (2.0 * epsilon);
            const double analytic = tensor->grad.data()[i];
            const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
            const double rel = std::abs(analytic - numeric) / denom;
            if (rel > result.max_rel_error) {
                result.max_rel_error = rel;
                result.worst_param = tensor->name + "[" + std::to_string(i) + "]";
            }
            ++result.checked;
        }
    }
    return result;
}

}  // namespace ltvforge
