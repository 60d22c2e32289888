#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ltvforge/matrix.hpp"
#include "ltvforge/rng.hpp"

namespace ltvforge {

// kTrain mutates stateful layers (batch-norm running stats, dropout draws).
// kTrainFrozen keeps the train-mode math (batch statistics) but mutates
// nothing and disables dropout; the gradient checker re-evaluates losses in
// this mode. kInfer uses running statistics and is noise-free.
enum class Mode { kTrain, kTrainFrozen, kInfer };

struct Tensor {
    std::string name;
    Matrix value;
    Matrix grad;
    Matrix moment1;
    Matrix moment2;
    bool trainable = true;
};

// Named parameter tensors with parallel gradient buffers and Adam state.
// Registration order is fixed by model construction and defines both the
// checkpoint layout and the optimizer iteration order.
class ParamSet {
  public:
    Tensor& create(const std::string& name, std::size_t rows, std::size_t cols, bool trainable = true);

    Tensor* find(const std::string& name);
    const Tensor* find(const std::string& name) const;

    std::span<const std::unique_ptr<Tensor>> tensors() const { return tensors_; }
    std::span<std::unique_ptr<Tensor>> tensors() { return tensors_; }

    void zero_grads();
    std::size_t scalar_count(bool trainable_only = true) const;

    std::uint64_t step() const { return step_; }
    void bump_step() { ++step_; }

  private:
    std::vector<std::unique_ptr<Tensor>> tensors_;
    std::unordered_map<std::string, std::size_t> index_;
    std::uint64_t step_ = 0;
};

struct AdamWConfig {
    double lr = 5e-4;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Decoupled weight decay, bias-corrected moments; zeroes gradient buffers.
void adamw_step(ParamSet& params, const AdamWConfig& cfg);

struct ScheduleState {
    std::uint64_t step = 0;
    std::uint64_t total_steps = 1;
    double lr0 = 5e-4;
    double lr_min = 0.0;
};

double cosine_lr(const ScheduleState& state);

// start -> end as step goes 0 -> total; clamped to the [min,max] of the endpoints.
double linear_decay(std::uint64_t step, std::uint64_t total, double start, double end);

// --- scalar activations -----------------------------------------------------

// Numerically-guarded sigmoid; output clamped into the open interval (0,1)
// so downstream log/ratio code never sees an exact endpoint.
inline double sigmoid_strict(double x) {
    double s;
    if (x >= 0.0) {
        s = 1.0 / (1.0 + std::exp(-x));
    } else {
        const double e = std::exp(x);
        s = e / (1.0 + e);
    }
    const double lo = std::numeric_limits<double>::min();
    const double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
    if (s < lo) s = lo;
    if (s > hi) s = hi;
    return s;
}

inline double tanh_strict(double x) {
    double t = std::tanh(x);
    const double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
    if (t > hi) t = hi;
    if (t < -hi) t = -hi;
    return t;
}

inline double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// Stable BCE in logit space: softplus(z) - t*z.
inline double bce_with_logit(double target, double logit) {
    const double abs_z = std::abs(logit);
    return std::max(logit, 0.0) - target * logit + std::log1p(std::exp(-abs_z));
}

enum class Activation { kRelu, kSigmoid, kTanh, kSoftplus };

Matrix activate(const Matrix& x, Activation kind);
// d_in = d_out * f'(x); `x` is the pre-activation input.
Matrix activate_backward(const Matrix& x, const Matrix& d_out, Activation kind);

// --- layers ------------------------------------------------------------------

// y = x W + b. Caches its input; backward may be invoked repeatedly with
// different upstream gradients (parameter grads accumulate). Layers feeding
// batch norm skip the bias (it is not identifiable under mean subtraction).
struct DenseLayer {
    Tensor* weight = nullptr;
    Tensor* bias = nullptr;

    void init(ParamSet& params, const std::string& name, std::size_t in_dim, std::size_t out_dim,
              RngStream& rng, bool with_bias = true);
    Matrix forward(const Matrix& x);
    Matrix backward(const Matrix& d_out);
    std::size_t in_dim() const { return weight->value.rows(); }
    std::size_t out_dim() const { return weight->value.cols(); }

  private:
    Matrix input_;
};

struct ReluLayer {
    Matrix forward(const Matrix& x);
    Matrix backward(const Matrix& d_out) const;

  private:
    Matrix pre_;
};

// Inverted dropout; active only in kTrain, identity otherwise.
struct DropoutLayer {
    double rate = 0.0;

    Matrix forward(const Matrix& x, Mode mode, RngStream* rng);
    Matrix backward(const Matrix& d_out) const;

  private:
    Matrix mask_;
    bool active_ = false;
};

// Per-column batch normalization. Train modes use biased batch variance with
// epsilon 1e-5; kTrain additionally updates running stats with momentum 0.9.
struct BatchNormLayer {
    Tensor* scale = nullptr;
    Tensor* shift = nullptr;
    Tensor* running_mean = nullptr;
    Tensor* running_var = nullptr;
    double epsilon = 1e-5;
    double momentum = 0.9;

    void init(ParamSet& params, const std::string& name, std::size_t dim);
    Matrix forward(const Matrix& x, Mode mode);
    Matrix backward(const Matrix& d_out);

  private:
    Matrix xhat_;
    std::vector<double> inv_std_;
    bool train_path_ = false;
};

// Row-gather over a table with scatter-add backward.
struct EmbeddingTable {
    Tensor* table = nullptr;

    void init(ParamSet& params, const std::string& name, std::size_t rows, std::size_t dim,
              RngStream& rng);
    Matrix forward(std::span<const std::int32_t> indices);
    void backward(const Matrix& d_out);
    std::size_t dim() const { return table->value.cols(); }
    std::size_t table_rows() const { return table->value.rows(); }

  private:
    std::vector<std::int32_t> indices_;
};

// Dense->ReLU(->Dropout) stack plus an optional final linear layer. The
// output activation, when any, is applied by the caller.
struct Mlp {
    void init(ParamSet& params, const std::string& prefix, std::size_t in_dim,
              std::span<const std::size_t> hidden, std::size_t head_dim, double dropout_rate,
              RngStream& rng);
    Matrix forward(const Matrix& x, Mode mode, RngStream* dropout_rng);
    Matrix backward(const Matrix& d_out);
    std::size_t out_dim() const;

    std::vector<DenseLayer> layers;
    std::vector<ReluLayer> relus;
    std::vector<DropoutLayer> dropouts;
    DenseLayer head;
    bool has_head = false;
};

// --- verification harness ----------------------------------------------------

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t checked = 0;
};

// Central finite differences against analytic gradients. `compute_grads`
// must populate fresh gradients in `params` (it should zero them first);
// `loss_fn` must re-evaluate the loss without mutating any state.
GradCheckResult grad_check(ParamSet& params, const std::function<double()>& loss_fn,
                           const std::function<void()>& compute_grads, double epsilon = 1e-5,
                           std::size_t max_params = 100000);

}  // namespace ltvforge
