#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ltvforge/align_residual.hpp"
#include "ltvforge/cascade.hpp"
#include "ltvforge/data.hpp"
#include "ltvforge/high_value.hpp"
#include "ltvforge/matrix.hpp"
#include "ltvforge/nn.hpp"

namespace ltvforge {

// Ablation ladder: distillation and residual learning require the cascade;
// augmentation requires the residual path.
struct AblationFlags {
    bool cascade = true;
    bool distill = true;
    bool residual = true;
    bool augment = true;

    void validate() const;
};

struct LossWeights {
    double gamma = 0.8;
    double alpha_cascade = 3.0;
    double alpha_residual = 3.0;
    double alpha_distill = 0.2;
    double beta = 0.5;        // residual value-weight slope
    double beta_focal = 2.0;  // confidence focal exponent
    double lambda_reg = 0.5;  // relative-error weight in the whale loss
    double denom_floor = 1.0; // relative-error denominator clip
};

struct ModelConfig {
    std::vector<std::size_t> encoder_hidden = {64, 48, 32};
    // stand-in regression head used whenever the residual path is off
    std::vector<std::size_t> baseline_hidden = {32};
    int k_buckets = 4;
    CascadeConfig cascade;
    AlignmentConfig alignment;
    ResidualConfig residual;
    HighValueConfig high_value;
    LossWeights loss;
    double lr0 = 5e-4;
    double lr_min = 0.0;
    double weight_decay = 1e-4;
    std::size_t batch_size = 1024;
    std::size_t epochs = 10;
    std::uint64_t seed = 1;
    AblationFlags flags;
    bool whale_head_override = true;
    double theta_start = 1.0;
    double theta_end = 0.1;

    void validate() const;
};

// min(50, ceil(cardinality / 2)), at least 1
std::size_t embedding_dim_for(std::int32_t cardinality);

enum class Route : std::uint8_t { kZero, kResidual, kWhale };

struct PredictionBundle {
    Matrix h;
    Matrix marginals;     // empty when the cascade is off
    Matrix bucket_probs;  // empty when the cascade is off
    std::vector<int> pred_buckets;
    std::vector<double> norm_value;  // empty when the residual path is off
    std::vector<double> value;       // final prediction per sample, >= 0
    std::vector<std::size_t> whale_rows;
    std::vector<double> whale_value;  // aligned with whale_rows
    std::vector<double> whale_conf;
    std::vector<Route> route;
    std::vector<double> nonzero_prob;  // first-level marginal when cascade on

    void append(const PredictionBundle& other);
};

struct LossBreakdown {
    double cascade = 0.0;
    double distill = 0.0;
    // value-weighted MSE, or the stand-in head's plain MSE when residual off
    double residual = 0.0;
    double high_value = 0.0;  // mean over the predicted-top-bucket set
    double l2 = 0.0;          // per-level cascade head penalty
    double total = 0.0;

    bool finite() const;
    std::string first_non_finite() const;
};

// Effective weights applied to each component; total =
// cascade*c + residual*r + distill*d + l2_scale*l2 + high*h.
struct LossSelect {
    double cascade = 0.0;
    double residual = 0.0;
    double distill = 0.0;
    double l2 = 0.0;
    double high_value = 0.0;

    static LossSelect from_config(const ModelConfig& cfg);
    static LossSelect component(const std::string& name);  // unit weight on one part
};

struct EpochStats {
    double cascade = 0.0, distill = 0.0, residual = 0.0, high_value = 0.0, l2 = 0.0, total = 0.0;
    double val_total = 0.0;
    double lr = 0.0;
    double theta = 0.0;
    double temperature = 0.0;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
};

// Values captured at an unperturbed parameter point so the finite-difference
// harness sees every stop-gradient boundary as a constant, exactly matching
// the analytic semantics.
struct FrozenBoundary {
    Matrix h;
    Matrix marginals;
    std::vector<int> pred_buckets;
    Matrix whale_embed_row;  // 1 x d_e copy of the top-bucket embedding
};

struct StepContext {
    std::uint64_t step = 0;
    std::uint64_t total_steps = 1;
    double theta = 0.1;
    double temperature = 1.0;
    const FrozenBoundary* frozen = nullptr;
};

class CcorNet {
  public:
    CcorNet(ModelConfig cfg, DatasetSchema schema, BucketSpec spec);

    struct ForwardState {
        Mode mode = Mode::kInfer;
        Matrix h;
        Matrix logits;
        Matrix marginals;
        Matrix distill_logits;
        std::vector<int> pred_buckets;
        std::vector<int> true_buckets;
        Matrix h_aligned;
        std::vector<double> norm_value;
        std::vector<double> norm_targets;
        std::vector<double> aux_value;
        std::vector<double> aux_pre;
        std::vector<std::size_t> whale_rows;
        std::vector<double> whale_value;
        std::vector<double> whale_conf;
        std::vector<double> whale_labels;
        LossBreakdown losses;
    };

    ForwardState forward(const Batch& batch, Mode mode, const StepContext& ctx);
    LossBreakdown compute_loss(ForwardState& state, const Batch& batch, const LossSelect& sel,
                               const StepContext& ctx);
    // Must run immediately after forward + compute_loss on the same state.
    void backward(ForwardState& state, const Batch& batch, const LossSelect& sel,
                  const StepContext& ctx);

    // Forward-only loss evaluation for finite differences; honors ctx.frozen.
    double loss_value(const Batch& batch, Mode mode, const LossSelect& sel, const StepContext& ctx);
    FrozenBoundary capture(const Batch& batch, Mode mode, const StepContext& ctx);

    PredictionBundle predict_batch(const Batch& batch);

    // Calibrates the whale regression head's initial output level (no-op
    // when augmentation is off).
    void center_whale_head(double value);

    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }
    const ModelConfig& config() const { return cfg_; }
    const BucketSpec& spec() const { return spec_; }
    const DatasetSchema& schema() const { return schema_; }

  private:
    Matrix encoder_forward(const Batch& batch);
    void encoder_backward(const Matrix& d_h);

    ModelConfig cfg_;
    DatasetSchema schema_;
    BucketSpec spec_;
    ParamSet params_;

    std::vector<EmbeddingTable> embeddings_;
    Mlp encoder_;
    CascadeHeads heads_;
    AlignmentModule align_;
    ResidualModule residual_;
    HighValueModule whale_;
    Mlp aux_head_;
};

struct TrainedModel {
    ModelConfig cfg;
    DatasetSchema schema;
    BucketSpec spec;
    double tau_low = 0.0;  // median of positive training labels
    std::unique_ptr<CcorNet> net;
};

// Fits the bucket spec on the training labels, trains with per-step cosine
// learning rate and temperature/theta schedules, and logs one history row per
// epoch. History is appended as epochs finish so an abort preserves progress.
TrainedModel train(const Dataset& train_ds, const Dataset& val_ds, const ModelConfig& cfg,
                   TrainHistory* history);

PredictionBundle predict(CcorNet& net, const Dataset& ds, std::size_t batch_size);

std::string checkpoint_to_string(const TrainedModel& model);
void save_checkpoint(const TrainedModel& model, const std::string& path);
TrainedModel load_checkpoint(const std::string& path);

}  // namespace ltvforge
