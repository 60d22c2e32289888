#include "ltvforge/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ltvforge/errors.hpp"
#include "ltvforge/log.hpp"

namespace ltvforge {

namespace {
constexpr std::uint64_t kInitTag = 0x1a17b007ULL;
}

void AblationFlags::validate() const {
    if (distill && !cascade) throw ConfigError("flags: distillation requires the cascade");
    if (residual && !cascade) throw ConfigError("flags: residual learning requires the cascade");
    if (augment && !residual) throw ConfigError("flags: augmentation requires residual learning");
}

void ModelConfig::validate() const {
    if (encoder_hidden.empty()) throw ConfigError("model: encoder_hidden must be non-empty");
    if (k_buckets < 2) throw ConfigError("model: K must be at least 2");
    if (loss.gamma < 0.0 || loss.gamma > 1.0) throw ConfigError("model: gamma must be in [0,1]");
    if (loss.alpha_cascade < 0.0 || loss.alpha_residual < 0.0 || loss.alpha_distill < 0.0) {
        throw ConfigError("model: loss alphas must be non-negative");
    }
    if (loss.beta_focal < 0.0) throw ConfigError("model: beta_focal must be non-negative");
    if (loss.lambda_reg < 0.0) throw ConfigError("model: lambda_reg must be non-negative");
    if (lr0 <= lr_min || lr_min < 0.0) throw ConfigError("model: need lr0 > lr_min >= 0");
    if (batch_size < 2) throw ConfigError("model: batch size must be at least 2");
    if (epochs == 0) throw ConfigError("model: epochs must be positive");
    if (theta_start < theta_end || theta_end <= 0.0 || theta_start > 1.0) {
        throw ConfigError("model: theta schedule must decay within (0,1]");
    }
    flags.validate();
    if (flags.cascade) {
        if (cascade.k != k_buckets) throw ConfigError("model: cascade K differs from bucket K");
        cascade.validate();
    }
    if (!flags.residual && baseline_hidden.empty()) {
        throw ConfigError("model: baseline head needs at least one hidden layer");
    }
}

std::size_t embedding_dim_for(std::int32_t cardinality) {
    const std::size_t half_up = (static_cast<std::size_t>(std::max(cardinality, 1)) + 1) / 2;
    return std::max<std::size_t>(1, std::min<std::size_t>(50, half_up));
}

void PredictionBundle::append(const PredictionBundle& other) {
    auto cat_matrix = [](Matrix& dst, const Matrix& src) {
        if (src.empty()) return;
        if (dst.empty()) {
            dst = src;
            return;
        }
        Matrix merged(dst.rows() + src.rows(), dst.cols());
        std::copy(dst.data(), dst.data() + dst.size(), merged.data());
        std::copy(src.data(), src.data() + src.size(), merged.data() + dst.size());
        dst = std::move(merged);
    };
    const std::size_t offset = value.size();
    cat_matrix(h, other.h);
    cat_matrix(marginals, other.marginals);
    cat_matrix(bucket_probs, other.bucket_probs);
    pred_buckets.insert(pred_buckets.end(), other.pred_buckets.begin(), other.pred_buckets.end());
    norm_value.insert(norm_value.end(), other.norm_value.begin(), other.norm_value.end());
    value.insert(value.end(), other.value.begin(), other.value.end());
    for (std::size_t r : other.whale_rows) whale_rows.push_back(r + offset);
    whale_value.insert(whale_value.end(), other.whale_value.begin(), other.whale_value.end());
    whale_conf.insert(whale_conf.end(), other.whale_conf.begin(), other.whale_conf.end());
    route.insert(route.end(), other.route.begin(), other.route.end());
    nonzero_prob.insert(nonzero_prob.end(), other.nonzero_prob.begin(), other.nonzero_prob.end());
}

bool LossBreakdown::finite() const {
    return std::isfinite(cascade) && std::isfinite(distill) && std::isfinite(residual) &&
           std::isfinite(high_value) && std::isfinite(l2) && std::isfinite(total);
}

std::string LossBreakdown::first_non_finite() const {
    if (!std::isfinite(cascade)) return "cascade";
    if (!std::isfinite(distill)) return "distill";
    if (!std::isfinite(residual)) return "residual";
    if (!std::isfinite(high_value)) return "high_value";
    if (!std::isfinite(l2)) return "l2";
    return "total";
}

LossSelect LossSelect::from_config(const ModelConfig& cfg) {
    LossSelect sel;
    const double g = cfg.loss.gamma;
    sel.cascade = cfg.flags.cascade ? g * cfg.loss.alpha_cascade : 0.0;
    sel.distill = cfg.flags.cascade && cfg.flags.distill ? g * cfg.loss.alpha_distill : 0.0;
    sel.residual = g * cfg.loss.alpha_residual;
    sel.l2 = cfg.flags.cascade ? g : 0.0;
    sel.high_value = cfg.flags.augment ? 1.0 - g : 0.0;
    return sel;
}

LossSelect LossSelect::component(const std::string& name) {
    LossSelect sel;
    if (name == "cascade") {
        sel.cascade = 1.0;
    } else if (name == "distill") {
        sel.distill = 1.0;
    } else if (name == "residual") {
        sel.residual = 1.0;
    } else if (name == "high_value") {
        sel.high_value = 1.0;
    } else if (name == "l2") {
        sel.l2 = 1.0;
    } else {
        throw ConfigError("unknown loss component: " + name);
    }
    return sel;
}

CcorNet::CcorNet(ModelConfig cfg, DatasetSchema schema, BucketSpec spec)
    : cfg_(std::move(cfg)), schema_(std::move(schema)), spec_(std::move(spec)) {
    cfg_.validate();
    if (spec_.k != cfg_.k_buckets) throw ConfigError("model: bucket spec K differs from config K");

    RngStream init_rng(mix_key(cfg_.seed, kInitTag));
    std::size_t input_dim = schema_.numeric_names.size();
    embeddings_.resize(schema_.categorical_names.size());
    for (std::size_t c = 0; c < embeddings_.size(); ++c) {
        const std::size_t dim = embedding_dim_for(schema_.categorical_cardinality[c]);
        embeddings_[c].init(params_, "encoder.embed" + std::to_string(c),
                            static_cast<std::size_t>(schema_.categorical_cardinality[c]), dim,
                            init_rng);
        input_dim += dim;
    }
    encoder_.init(params_, "encoder.mlp", input_dim, cfg_.encoder_hidden, /*head_dim=*/0,
                  /*dropout_rate=*/0.0, init_rng);
    const std::size_t h_dim = cfg_.encoder_hidden.back();

    if (cfg_.flags.cascade) {
        heads_.init(params_, cfg_.cascade, h_dim, init_rng);
        if (cfg_.flags.residual) {
            align_.init(params_, cfg_.alignment, h_dim, cfg_.k_buckets, init_rng);
            residual_.init(params_, cfg_.residual, cfg_.alignment.aligned_dim, init_rng);
        }
        if (cfg_.flags.augment) {
            whale_.init(params_, cfg_.high_value, h_dim, cfg_.alignment.bucket_embed_dim, init_rng);
            // log-midpoint of the top bucket as a long-tail mean proxy; the
            // trainer re-centers on the actual top-bucket label mean
            const double lo = std::max(spec_.thresholds.back(), 1e-12);
            whale_.center_output(std::sqrt(lo * std::max(spec_.top_cap, lo)));
        }
    }
    if (!cfg_.flags.residual) {
        aux_head_.init(params_, "baseline", h_dim, cfg_.baseline_hidden, /*head_dim=*/1,
                       /*dropout_rate=*/0.0, init_rng);
    }
}

Matrix CcorNet::encoder_forward(const Batch& batch) {
    const std::size_t n_cat = schema_.categorical_names.size();
    std::vector<Matrix> embedded(n_cat);
    std::vector<const Matrix*> blocks;
    std::vector<std::int32_t> column(batch.size());
    for (std::size_t c = 0; c < n_cat; ++c) {
        for (std::size_t r = 0; r < batch.size(); ++r) column[r] = batch.categorical[r * n_cat + c];
        embedded[c] = embeddings_[c].forward(column);
        blocks.push_back(&embedded[c]);
    }
    blocks.push_back(&batch.numeric);
    const Matrix input = hcat(blocks);
    return encoder_.forward(input, Mode::kInfer, nullptr);
}

void CcorNet::encoder_backward(const Matrix& d_h) {
    const Matrix d_input = encoder_.backward(d_h);
    const std::size_t n = d_input.rows();
    std::size_t offset = 0;
    for (auto& table : embeddings_) {
        Matrix d_embed(n, table.dim());
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < table.dim(); ++c) d_embed(r, c) = d_input(r, offset + c);
        }
        table.backward(d_embed);
        offset += table.dim();
    }
    // numeric feature gradients stop at the data
}

namespace {
constexpr std::uint64_t kDropoutTag = 0xd70900aaULL;
constexpr std::uint64_t kSmoothTag = 0x53300a11ULL;
constexpr std::uint64_t kNoiseTag = 0xa06e0055ULL;
}  // namespace

CcorNet::ForwardState CcorNet::forward(const Batch& batch, Mode mode, const StepContext& ctx) {
    if (batch.size() == 0) throw InputError("forward: empty batch");
    ForwardState st;
    st.mode = mode;
    st.h = encoder_forward(batch);

    RngStream dropout_rng(mix_key(cfg_.seed, kDropoutTag, ctx.step));
    RngStream* drop = mode == Mode::kTrain ? &dropout_rng : nullptr;

    if (cfg_.flags.cascade) {
        st.logits = heads_.forward(st.h, mode, drop);
        st.marginals = activate(st.logits, Activation::kSigmoid);
        const Matrix& boundary_marginals = ctx.frozen ? ctx.frozen->marginals : st.marginals;
        if (ctx.frozen) {
            st.pred_buckets = ctx.frozen->pred_buckets;
        } else {
            st.pred_buckets.resize(batch.size());
            for (std::size_t i = 0; i < batch.size(); ++i) {
                st.pred_buckets[i] =
                    predict_bucket(boundary_marginals.row(i), cfg_.cascade.decision_threshold);
            }
        }

        if (cfg_.flags.residual) {
            st.h_aligned = align_.forward(st.h, boundary_marginals, st.pred_buckets);
            st.norm_value = residual_.forward(st.h_aligned, mode);
        }

        if (cfg_.flags.augment) {
            for (std::size_t i = 0; i < batch.size(); ++i) {
                if (st.pred_buckets[i] == cfg_.k_buckets) st.whale_rows.push_back(i);
            }
            if (!st.whale_rows.empty()) {
                const Matrix& boundary_h = ctx.frozen ? ctx.frozen->h : st.h;
                const std::size_t m = st.whale_rows.size();
                Matrix h_sub(m, boundary_h.cols());
                for (std::size_t i = 0; i < m; ++i) {
                    const auto src = boundary_h.row(st.whale_rows[i]);
                    std::copy(src.begin(), src.end(), h_sub.row(i).begin());
                }
                // top-bucket embedding row, detached (frozen under a boundary)
                Matrix embed_rows(m, align_.bucket_embed.dim());
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t c = 0; c < align_.bucket_embed.dim(); ++c) {
                        embed_rows(i, c) =
                            ctx.frozen ? ctx.frozen->whale_embed_row(0, c)
                                       : align_.bucket_embed.table->value(cfg_.k_buckets - 1, c);
                    }
                }
                Matrix noise;
                if (mode != Mode::kInfer && cfg_.high_value.noise_std > 0.0) {
                    noise = Matrix(m, boundary_h.cols());
                    for (std::size_t i = 0; i < m; ++i) {
                        RngStream row_rng(
                            mix_key(cfg_.seed ^ kNoiseTag, ctx.step, batch.row_ids[st.whale_rows[i]]));
                        for (std::size_t c = 0; c < boundary_h.cols(); ++c) {
                            noise(i, c) = row_rng.normal();
                        }
                    }
                }
                const auto out = whale_.forward(h_sub, embed_rows, noise, cfg_.high_value.noise_std);
                st.whale_value = out.value;
                st.whale_conf = out.confidence;
            }
        }
    }

    if (!cfg_.flags.residual) {
        const Matrix pre = aux_head_.forward(st.h, mode, drop);
        st.aux_pre.resize(batch.size());
        st.aux_value.resize(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
            st.aux_pre[i] = pre(i, 0);
            st.aux_value[i] = softplus(pre(i, 0));
        }
    }
    return st;
}

LossBreakdown CcorNet::compute_loss(ForwardState& st, const Batch& batch, const LossSelect& sel,
                                    const StepContext& ctx) {
    LossBreakdown bd;
    const std::size_t n = batch.size();
    st.true_buckets.resize(n);
    for (std::size_t i = 0; i < n; ++i) st.true_buckets[i] = assign_bucket(batch.labels[i], spec_);

    if (cfg_.flags.cascade) {
        bd.cascade = cascade_loss(st.logits, batch.labels, spec_, cfg_.cascade);
        bd.l2 = heads_.l2_penalty(cfg_.cascade);
        if (cfg_.flags.distill) {
            // The distillation path consumes a gradient-detached encoding:
            // under a frozen boundary the logits are recomputed from the
            // captured h so finite differences see the same constant.
            if (ctx.frozen) {
                st.distill_logits = heads_.forward(ctx.frozen->h, Mode::kTrainFrozen, nullptr);
            } else {
                st.distill_logits = st.logits;
            }
            bd.distill =
                distill_loss(st.distill_logits, st.true_buckets, cfg_.k_buckets, ctx.temperature);
        }
    }

    if (cfg_.flags.residual) {
        st.norm_targets.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            double target = normalize_label(batch.labels[i], spec_, st.true_buckets[i]);
            if (st.mode != Mode::kInfer && st.true_buckets[i] == 1) {
                RngStream row_rng(mix_key(cfg_.seed ^ kSmoothTag, ctx.step, batch.row_ids[i]));
                target = smooth_target(target, 1, ctx.theta, row_rng);
            }
            st.norm_targets[i] = target;
        }
        bd.residual = residual_loss(st.norm_value, st.norm_targets, cfg_.loss.beta);
    } else {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double diff = st.aux_value[i] - batch.labels[i];
            acc += diff * diff;
        }
        bd.residual = acc / static_cast<double>(n);
    }

    if (cfg_.flags.augment && !st.whale_rows.empty()) {
        st.whale_labels.resize(st.whale_rows.size());
        for (std::size_t i = 0; i < st.whale_rows.size(); ++i) {
            st.whale_labels[i] = batch.labels[st.whale_rows[i]];
        }
        const HighValueLossConfig hv{cfg_.loss.beta_focal, cfg_.loss.lambda_reg, cfg_.loss.denom_floor};
        bd.high_value = high_value_loss(st.whale_value, st.whale_conf, st.whale_labels, hv);
    }

    bd.total = sel.cascade * bd.cascade + sel.residual * bd.residual + sel.distill * bd.distill +
               sel.l2 * bd.l2 + sel.high_value * bd.high_value;
    st.losses = bd;
    return bd;
}

void CcorNet::backward(ForwardState& st, const Batch& batch, const LossSelect& sel,
                       const StepContext& ctx) {
    const std::size_t n = batch.size();

    // whale path: confined to augmentation + dual-head parameters
    if (cfg_.flags.augment && sel.high_value != 0.0 && !st.whale_rows.empty()) {
        const HighValueLossConfig hv{cfg_.loss.beta_focal, cfg_.loss.lambda_reg, cfg_.loss.denom_floor};
        auto grads = high_value_loss_backward(st.whale_value, st.whale_conf, st.whale_labels, hv);
        for (double& g : grads.d_value) g *= sel.high_value;
        for (double& g : grads.d_conf) g *= sel.high_value;
        whale_.backward(grads.d_value, grads.d_conf);
    }

    Matrix d_h(n, st.h.cols());

    if (cfg_.flags.residual) {
        if (sel.residual != 0.0) {
            auto d_v = residual_loss_backward(st.norm_value, st.norm_targets, cfg_.loss.beta);
            for (double& g : d_v) g *= sel.residual;
            const Matrix d_aligned = residual_.backward(d_v);
            add_inplace(d_h, align_.backward(d_aligned));
        }
    } else if (sel.residual != 0.0) {
        Matrix d_pre(n, 1);
        const double scale = sel.residual * 2.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            d_pre(i, 0) =
                scale * (st.aux_value[i] - batch.labels[i]) * sigmoid_strict(st.aux_pre[i]);
        }
        add_inplace(d_h, aux_head_.backward(d_pre));
    }

    if (cfg_.flags.cascade) {
        if (cfg_.flags.distill && sel.distill != 0.0) {
            Matrix d_zd = distill_loss_backward(st.distill_logits, st.true_buckets, cfg_.k_buckets,
                                                ctx.temperature);
            for (std::size_t i = 0; i < d_zd.size(); ++i) d_zd.data()[i] *= sel.distill;
            heads_.backward(d_zd);  // input gradient dropped: stop-gradient into the encoder
        }
        if (sel.cascade != 0.0) {
            Matrix d_z = cascade_loss_backward(st.logits, batch.labels, spec_, cfg_.cascade);
            for (std::size_t i = 0; i < d_z.size(); ++i) d_z.data()[i] *= sel.cascade;
            add_inplace(d_h, heads_.backward(d_z));
        }
        heads_.accumulate_l2_grads(cfg_.cascade, sel.l2);
    }

    encoder_backward(d_h);
}

double CcorNet::loss_value(const Batch& batch, Mode mode, const LossSelect& sel,
                           const StepContext& ctx) {
    ForwardState st = forward(batch, mode, ctx);
    return compute_loss(st, batch, sel, ctx).total;
}

FrozenBoundary CcorNet::capture(const Batch& batch, Mode mode, const StepContext& ctx) {
    StepContext plain = ctx;
    plain.frozen = nullptr;
    const ForwardState st = forward(batch, mode, plain);
    FrozenBoundary frozen;
    frozen.h = st.h;
    frozen.marginals = st.marginals;
    frozen.pred_buckets = st.pred_buckets;
    if (cfg_.flags.augment) {
        frozen.whale_embed_row = Matrix(1, align_.bucket_embed.dim());
        for (std::size_t c = 0; c < align_.bucket_embed.dim(); ++c) {
            frozen.whale_embed_row(0, c) = align_.bucket_embed.table->value(cfg_.k_buckets - 1, c);
        }
    }
    return frozen;
}

void CcorNet::center_whale_head(double value) {
    if (cfg_.flags.augment) whale_.center_output(value);
}

PredictionBundle CcorNet::predict_batch(const Batch& batch) {
    StepContext ctx;
    ForwardState st = forward(batch, Mode::kInfer, ctx);
    const std::size_t n = batch.size();

    PredictionBundle out;
    out.h = st.h;
    out.norm_value = st.norm_value;
    out.whale_rows = st.whale_rows;
    out.whale_value = st.whale_value;
    out.whale_conf = st.whale_conf;
    out.value.resize(n);
    out.route.resize(n);

    std::vector<std::size_t> whale_index(n, static_cast<std::size_t>(-1));
    for (std::size_t i = 0; i < st.whale_rows.size(); ++i) whale_index[st.whale_rows[i]] = i;

    if (cfg_.flags.cascade) {
        out.marginals = st.marginals;
        out.bucket_probs = Matrix(n, cfg_.k_buckets);
        out.nonzero_prob.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto dist = bucket_distribution(st.marginals.row(i));
            for (std::size_t b = 0; b < dist.size(); ++b) out.bucket_probs(i, b) = dist[b];
            out.nonzero_prob[i] = st.marginals(i, 0);
        }
        out.pred_buckets = st.pred_buckets;
        for (std::size_t i = 0; i < n; ++i) {
            const int b = st.pred_buckets[i];
            if (b == 1) {
                out.value[i] = 0.0;
                out.route[i] = Route::kZero;
            } else if (b == cfg_.k_buckets && cfg_.flags.augment && cfg_.whale_head_override &&
                       whale_index[i] != static_cast<std::size_t>(-1)) {
                out.value[i] = st.whale_value[whale_index[i]];
                out.route[i] = Route::kWhale;
            } else if (cfg_.flags.residual) {
                out.value[i] = denormalize(st.norm_value[i], spec_, b);
                out.route[i] = Route::kResidual;
            } else {
                out.value[i] = st.aux_value[i];
                out.route[i] = Route::kResidual;
            }
        }
    } else {
        out.pred_buckets.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            out.value[i] = st.aux_value[i];
            out.route[i] = Route::kResidual;
            out.pred_buckets[i] = assign_bucket(st.aux_value[i], spec_);
        }
    }
    return out;
}

namespace {
constexpr std::uint64_t kShuffleTag = 0x5f0ff1e0ULL;
}

TrainedModel train(const Dataset& train_ds, const Dataset& val_ds, const ModelConfig& cfg,
                   TrainHistory* history) {
    cfg.validate();
    if (train_ds.size() < 2) throw InputError("train: need at least two rows");

    TrainedModel model;
    model.cfg = cfg;
    model.schema = train_ds.schema;
    model.spec = fit_bucket_spec(train_ds.labels, cfg.k_buckets);
    {
        std::vector<double> nonzero;
        for (double y : train_ds.labels) {
            if (y > 0.0) nonzero.push_back(y);
        }
        std::sort(nonzero.begin(), nonzero.end());
        model.tau_low = nonzero.empty() ? 0.0 : quantile_sorted(nonzero, 0.5);
    }
    model.net = std::make_unique<CcorNet>(cfg, model.schema, model.spec);
    if (cfg.flags.augment) {
        // base-rate calibration: start the raw-scale whale regression at the
        // top bucket's training-label mean
        double acc = 0.0;
        std::size_t count = 0;
        for (double y : train_ds.labels) {
            if (assign_bucket(y, model.spec) == cfg.k_buckets) {
                acc += y;
                ++count;
            }
        }
        if (count > 0) model.net->center_whale_head(acc / static_cast<double>(count));
    }

    const LossSelect sel = LossSelect::from_config(cfg);
    const std::size_t n = train_ds.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    std::size_t batches_per_epoch = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
        if (std::min(n, start + cfg.batch_size) - start >= 2) ++batches_per_epoch;
    }
    if (batches_per_epoch == 0) throw InputError("train: no usable batches");
    const std::uint64_t total_steps = cfg.epochs * batches_per_epoch;

    // The whale head serves the predicted-top-bucket population, whose label
    // mean is only observable once the cascade routing has stabilized;
    // re-center the raw-scale regression on it partway through training.
    const std::size_t recenter_epoch = cfg.flags.augment ? std::max<std::size_t>(1, cfg.epochs / 2) : cfg.epochs + 1;

    std::uint64_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (epoch == recenter_epoch) {
            double acc = 0.0;
            std::size_t count = 0;
            for (std::size_t start = 0; start < n; start += cfg.batch_size) {
                const std::size_t end = std::min(n, start + cfg.batch_size);
                std::vector<std::size_t> rows(end - start);
                std::iota(rows.begin(), rows.end(), start);
                const Batch batch = gather(train_ds, rows);
                const PredictionBundle bundle = model.net->predict_batch(batch);
                for (std::size_t i = 0; i < batch.size(); ++i) {
                    if (bundle.pred_buckets[i] == cfg.k_buckets) {
                        acc += batch.labels[i];
                        ++count;
                    }
                }
            }
            // only trust a routing population of meaningful size
            if (count >= std::max<std::size_t>(32, n / 200)) {
                model.net->center_whale_head(acc / static_cast<double>(count));
                log::info("whale head re-centered at " + std::to_string(acc / static_cast<double>(count)) +
                          " over " + std::to_string(count) + " routed rows");
            } else {
                log::info("whale head re-centering skipped: only " + std::to_string(count) +
                          " routed rows");
            }
        }
        std::mt19937_64 shuffle_rng(mix_key(cfg.seed, kShuffleTag, epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        EpochStats stats;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t end = std::min(n, start + cfg.batch_size);
            if (end - start < 2) continue;  // batch norm floor
            const Batch batch =
                gather(train_ds, std::span<const std::size_t>(order.data() + start, end - start));

            StepContext ctx;
            ctx.step = step;
            ctx.total_steps = total_steps;
            ctx.theta = linear_decay(step, total_steps, cfg.theta_start, cfg.theta_end);
            ctx.temperature =
                temperature_schedule(step, total_steps, cfg.cascade.temp_start, cfg.cascade.temp_end);

            auto state = model.net->forward(batch, Mode::kTrain, ctx);
            const LossBreakdown bd = model.net->compute_loss(state, batch, sel, ctx);
            if (!bd.finite()) {
                throw NumericError("non-finite " + bd.first_non_finite() + " loss at epoch " +
                                   std::to_string(epoch + 1) + ", step " + std::to_string(step));
            }
            model.net->backward(state, batch, sel, ctx);

            AdamWConfig opt;
            opt.lr = cosine_lr({step, total_steps, cfg.lr0, cfg.lr_min});
            opt.weight_decay = cfg.weight_decay;
            adamw_step(model.net->params(), opt);

            const auto w = static_cast<double>(batch.size());
            stats.cascade += bd.cascade * w;
            stats.distill += bd.distill * w;
            stats.residual += bd.residual * w;
            stats.high_value += bd.high_value * w;
            stats.l2 += bd.l2 * w;
            stats.total += bd.total * w;
            stats.lr = opt.lr;
            stats.theta = ctx.theta;
            stats.temperature = ctx.temperature;
            seen += batch.size();
            ++step;
        }
        const double inv = 1.0 / static_cast<double>(seen);
        stats.cascade *= inv;
        stats.distill *= inv;
        stats.residual *= inv;
        stats.high_value *= inv;
        stats.l2 *= inv;
        stats.total *= inv;

        if (val_ds.size() > 0) {
            StepContext ctx;
            ctx.step = step == 0 ? 0 : step - 1;
            ctx.total_steps = total_steps;
            ctx.theta = linear_decay(ctx.step, total_steps, cfg.theta_start, cfg.theta_end);
            ctx.temperature = temperature_schedule(ctx.step, total_steps, cfg.cascade.temp_start,
                                                   cfg.cascade.temp_end);
            double val_acc = 0.0;
            std::size_t val_seen = 0;
            for (std::size_t start = 0; start < val_ds.size(); start += cfg.batch_size) {
                const std::size_t end = std::min(val_ds.size(), start + cfg.batch_size);
                std::vector<std::size_t> rows(end - start);
                std::iota(rows.begin(), rows.end(), start);
                const Batch batch = gather(val_ds, rows);
                auto state = model.net->forward(batch, Mode::kInfer, ctx);
                const LossBreakdown bd = model.net->compute_loss(state, batch, sel, ctx);
                val_acc += bd.total * static_cast<double>(batch.size());
                val_seen += batch.size();
            }
            stats.val_total = val_seen > 0 ? val_acc / static_cast<double>(val_seen) : 0.0;
        }

        log::info("epoch " + std::to_string(epoch + 1) + "/" + std::to_string(cfg.epochs) +
                  " total=" + std::to_string(stats.total) + " val=" + std::to_string(stats.val_total));
        if (history != nullptr) history->epochs.push_back(stats);
    }
    return model;
}

PredictionBundle predict(CcorNet& net, const Dataset& ds, std::size_t batch_size) {
    PredictionBundle all;
    const std::size_t bs = std::max<std::size_t>(1, batch_size);
    for (std::size_t start = 0; start < ds.size(); start += bs) {
        const std::size_t end = std::min(ds.size(), start + bs);
        std::vector<std::size_t> rows(end - start);
        std::iota(rows.begin(), rows.end(), start);
        all.append(net.predict_batch(gather(ds, rows)));
    }
    return all;
}

}  // namespace ltvforge
