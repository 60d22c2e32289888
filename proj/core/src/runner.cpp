#include "ltvforge/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <optional>

#include "ltvforge/align_residual.hpp"
#include "ltvforge/errors.hpp"
#include "ltvforge/log.hpp"
#include "serialize.hpp"

namespace ltvforge {

using detail::json;

static void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream file(path, std::ios::binary);
    if (!file) throw InputError("cannot open for write: " + path);
    file << text;
    if (!file) throw InputError("write failed: " + path);
}

std::string metrics_report_to_string(const MetricsReport& report, const RunConfig& cfg,
                                     std::size_t n_eval) {
    json j;
    j["format"] = "ltvforge-report-v1";
    j["build"] = build_id();
    j["seed"] = cfg.seed;
    j["n_eval"] = n_eval;
    j["config"] = detail::model_config_to_json(cfg.model);
    j["metrics"] = detail::metrics_to_json(report);
    return j.dump() + "\n";
}

int cmd_gen_data(const RunConfig& cfg) {
    if (cfg.paths.data_csv.empty()) throw ConfigError("gen-data: paths.data_csv is required");
    const Dataset ds = generate(cfg.generator, cfg.threads);
    write_csv(ds, cfg.paths.data_csv);

    if (!cfg.paths.stats_json.empty()) {
        std::vector<double> nonzero;
        std::size_t zeros = 0;
        for (double y : ds.labels) {
            if (y <= kZeroBoundary) {
                ++zeros;
            } else {
                nonzero.push_back(y);
            }
        }
        std::sort(nonzero.begin(), nonzero.end());
        json stats;
        stats["n"] = ds.size();
        stats["zero_ratio"] = static_cast<double>(zeros) / static_cast<double>(ds.size());
        if (!nonzero.empty()) {
            stats["nonzero_p50"] = quantile_sorted(nonzero, 0.50);
            stats["nonzero_p75"] = quantile_sorted(nonzero, 0.75);
            stats["nonzero_p995"] = quantile_sorted(nonzero, 0.995);
        }
        stats["top1pct_value_share"] = top_value_share(ds.labels, 0.01);
        write_text_file(cfg.paths.stats_json, stats.dump() + "\n");
    }
    log::info("gen-data: wrote " + std::to_string(ds.size()) + " rows to " + cfg.paths.data_csv);
    return kExitOk;
}

static std::string history_to_string(const TrainHistory& history) {
    std::string out;
    for (std::size_t e = 0; e < history.epochs.size(); ++e) {
        const EpochStats& s = history.epochs[e];
        json line{{"epoch", e + 1},        {"cascade", s.cascade}, {"distill", s.distill},
                  {"residual", s.residual}, {"high_value", s.high_value}, {"l2", s.l2},
                  {"total", s.total},      {"val_total", s.val_total},   {"lr", s.lr},
                  {"theta", s.theta},      {"temperature", s.temperature}};
        out += line.dump();
        out += '\n';
    }
    return out;
}

int cmd_train(const RunConfig& cfg) {
    if (cfg.paths.data_csv.empty()) throw ConfigError("train: paths.data_csv is required");
    if (cfg.paths.checkpoint.empty()) throw ConfigError("train: paths.checkpoint is required");
    const Dataset full = load_csv(cfg.paths.data_csv);
    const Split split = chronological_split(full, cfg.split.test_frac, cfg.split.val_frac);

    TrainHistory history;
    TrainedModel model;
    try {
        model = train(split.train, split.val, cfg.model, &history);
    } catch (const NumericError&) {
        if (!cfg.paths.history.empty()) {
            write_text_file(cfg.paths.history, history_to_string(history));
        }
        throw;
    }
    save_checkpoint(model, cfg.paths.checkpoint);
    if (!cfg.paths.history.empty()) {
        write_text_file(cfg.paths.history, history_to_string(history));
    }
    log::info("train: checkpoint written to " + cfg.paths.checkpoint);
    return kExitOk;
}

MetricsReport evaluate_model(TrainedModel& model, const Dataset& eval_ds, std::size_t recall_k) {
    if (eval_ds.schema.numeric_names != model.schema.numeric_names ||
        eval_ds.schema.categorical_names != model.schema.categorical_names) {
        throw MismatchError("eval: dataset schema differs from checkpoint schema");
    }
    for (std::size_t c = 0; c < eval_ds.schema.categorical_cardinality.size(); ++c) {
        if (eval_ds.schema.categorical_cardinality[c] > model.schema.categorical_cardinality[c]) {
            throw MismatchError("eval: unseen categorical codes in column " +
                                eval_ds.schema.categorical_names[c]);
        }
    }

    const PredictionBundle bundle = predict(*model.net, eval_ds, model.cfg.batch_size);
    EvalPairs pairs;
    pairs.y_pred = bundle.value;
    pairs.y_true = eval_ds.labels;
    if (!bundle.nonzero_prob.empty()) pairs.nonzero_prob = bundle.nonzero_prob;

    std::vector<int> true_buckets(eval_ds.size());
    for (std::size_t i = 0; i < eval_ds.size(); ++i) {
        true_buckets[i] = assign_bucket(eval_ds.labels[i], model.spec);
    }
    StrataSpec strata;
    strata.tau_low = model.tau_low;
    const std::size_t rk =
        recall_k > 0 ? recall_k : std::max<std::size_t>(1, eval_ds.size() / 20);
    return full_report(pairs, bundle.pred_buckets, true_buckets, strata, rk, model.cfg.k_buckets);
}

static Dataset eval_dataset(const RunConfig& cfg) {
    if (!cfg.paths.eval_csv.empty()) return load_csv(cfg.paths.eval_csv);
    if (cfg.paths.data_csv.empty()) {
        throw ConfigError("eval: set paths.eval_csv or paths.data_csv");
    }
    const Dataset full = load_csv(cfg.paths.data_csv);
    Split split = chronological_split(full, cfg.split.test_frac, cfg.split.val_frac);
    return std::move(split.test);
}

int cmd_eval(const RunConfig& cfg) {
    if (cfg.paths.checkpoint.empty()) throw ConfigError("eval: paths.checkpoint is required");
    TrainedModel model = load_checkpoint(cfg.paths.checkpoint);
    const Dataset ds = eval_dataset(cfg);
    const MetricsReport report = evaluate_model(model, ds, cfg.eval.recall_k);
    const std::string text = metrics_report_to_string(report, cfg, ds.size());
    if (cfg.paths.report.empty()) {
        std::fputs(text.c_str(), stdout);
    } else {
        write_text_file(cfg.paths.report, text);
        log::info("eval: report written to " + cfg.paths.report);
    }
    return kExitOk;
}

AblationFlags stage_flags(const std::string& stage) {
    if (stage == "baseline") return {false, false, false, false};
    if (stage == "+cascade") return {true, false, false, false};
    if (stage == "+distill") return {true, true, false, false};
    if (stage == "+residual") return {true, true, true, false};
    if (stage == "+aug") return {true, true, true, true};
    throw ConfigError("ablate: unknown stage '" + stage + "'");
}

std::vector<AblationRow> run_ablation_ladder(const Dataset& full, const RunConfig& cfg) {
    static const std::vector<std::string> ladder = {"baseline", "+cascade", "+distill",
                                                    "+residual", "+aug"};
    if (cfg.ablate.stages.empty()) throw ConfigError("ablate: no stages requested");
    std::size_t cursor = 0;
    for (const auto& stage : cfg.ablate.stages) {
        const auto it = std::find(ladder.begin() + static_cast<std::ptrdiff_t>(cursor),
                                  ladder.end(), stage);
        if (it == ladder.end()) {
            throw ConfigError("ablate: stage '" + stage + "' out of ladder order");
        }
        cursor = static_cast<std::size_t>(it - ladder.begin()) + 1;
    }

    const Split split = chronological_split(full, cfg.split.test_frac, cfg.split.val_frac);
    std::vector<AblationRow> rows;
    for (const auto& stage : cfg.ablate.stages) {
        ModelConfig mc = cfg.model;
        mc.flags = stage_flags(stage);
        TrainHistory history;
        TrainedModel model = train(split.train, split.val, mc, &history);
        AblationRow row;
        row.stage = stage;
        row.metrics = evaluate_model(model, split.test, cfg.eval.recall_k);
        rows.push_back(std::move(row));
        log::info("ablate: finished stage " + stage);
    }
    return rows;
}

static json ablation_to_json(const std::vector<AblationRow>& rows, const RunConfig& cfg) {
    json j;
    j["format"] = "ltvforge-ablation-v1";
    j["build"] = build_id();
    j["seed"] = cfg.seed;
    json out_rows = json::array();
    for (const auto& row : rows) {
        out_rows.push_back(json{{"stage", row.stage}, {"metrics", detail::metrics_to_json(row.metrics)}});
    }
    j["rows"] = std::move(out_rows);

    auto delta = [](const std::optional<double>& curr, const std::optional<double>& prev)
        -> std::optional<double> {
        if (!curr.has_value() || !prev.has_value()) return std::nullopt;
        return *curr - *prev;
    };
    json deltas = json::array();
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const MetricsReport& a = rows[i - 1].metrics;
        const MetricsReport& b = rows[i].metrics;
        json d;
        d["stage"] = rows[i].stage;
        d["vs"] = rows[i - 1].stage;
        auto put = [&](const char* name, std::optional<double> v) {
            if (v.has_value()) d[name] = *v;
        };
        put("gini", delta(b.gini, a.gini));
        put("spearman", delta(b.spearman, a.spearman));
        put("nmae", delta(b.nmae, a.nmae));
        put("ambe", delta(b.ambe, a.ambe));
        put("nrmse", delta(b.nrmse, a.nrmse));
        put("sva", delta(b.sva, a.sva));
        put("f1_zero", delta(b.f1_zero, a.f1_zero));
        put("bucket_acc", delta(b.bucket_acc, a.bucket_acc));
        put("top_bucket_ambe", delta(b.top_bucket_ambe, a.top_bucket_ambe));
        put("bucket_chi2", delta(b.bucket_chi2, a.bucket_chi2));
        deltas.push_back(std::move(d));
    }
    j["deltas"] = std::move(deltas);
    return j;
}

int cmd_ablate(const RunConfig& cfg) {
    if (cfg.paths.data_csv.empty()) throw ConfigError("ablate: paths.data_csv is required");
    const Dataset full = load_csv(cfg.paths.data_csv);
    const auto rows = run_ablation_ladder(full, cfg);
    const std::string text = ablation_to_json(rows, cfg).dump() + "\n";
    if (cfg.paths.ablate_report.empty()) {
        std::fputs(text.c_str(), stdout);
    } else {
        write_text_file(cfg.paths.ablate_report, text);
        log::info("ablate: report written to " + cfg.paths.ablate_report);
    }
    return kExitOk;
}

std::vector<GradCheckOutcome> run_grad_checks(const RunConfig& cfg) {
    GeneratorConfig gen = cfg.generator;
    gen.n_samples = std::max<std::size_t>(gen.n_samples, cfg.grad_check.batch * 8);
    const Dataset data = generate(gen, 1);
    const BucketSpec spec = fit_bucket_spec(data.labels, cfg.model.k_buckets);

    ModelConfig mc = cfg.model;
    mc.flags = {true, true, true, true};
    CcorNet net(mc, data.schema, spec);

    StepContext ctx;
    ctx.step = 25;
    ctx.total_steps = 100;
    ctx.theta = linear_decay(ctx.step, ctx.total_steps, mc.theta_start, mc.theta_end);
    ctx.temperature =
        temperature_schedule(ctx.step, ctx.total_steps, mc.cascade.temp_start, mc.cascade.temp_end);

    // The gradients are checked away from the zero-bias initialization:
    // freshly initialized nets sit exactly on relu kinks (dead rows) and on
    // the 0.5 decision boundary (zeroed logits), where finite differences
    // are undefined. Warm up until some window of `batch` consecutive rows
    // routes at least two samples through the whale head with all marginals
    // clear of the threshold, then freeze that point.
    const std::size_t bs = cfg.grad_check.batch;
    if (data.size() < bs) throw ConfigError("grad-check: generator produced too few rows");

    auto find_batch = [&]() -> std::optional<Batch> {
        for (std::size_t start = 0; start + bs <= data.size(); ++start) {
            std::vector<std::size_t> rows(bs);
            std::iota(rows.begin(), rows.end(), start);
            Batch candidate = gather(data, rows);
            const FrozenBoundary boundary = net.capture(candidate, Mode::kTrainFrozen, ctx);
            std::size_t whales = 0;
            double min_margin = 1.0;
            for (std::size_t i = 0; i < bs; ++i) {
                if (boundary.pred_buckets[i] == mc.k_buckets) ++whales;
                for (std::size_t j = 0; j < boundary.marginals.cols(); ++j) {
                    min_margin = std::min(min_margin, std::abs(boundary.marginals(i, j) -
                                                               mc.cascade.decision_threshold));
                }
            }
            if (whales >= 2 && bs - whales >= 2 && min_margin > 1e-3) return candidate;
        }
        return std::nullopt;
    };

    std::optional<Batch> batch;
    {
        const LossSelect warm_sel = LossSelect::from_config(mc);
        const std::size_t warm_batch = std::min<std::size_t>(std::max<std::size_t>(bs, 64), data.size());
        // at least 600 steps: the finite-difference noise floor scales with
        // the loss magnitude, so the check runs at a partially-trained point
        for (std::uint64_t warm = 0; warm < 2500; ++warm) {
            if (warm >= 600 && warm % 50 == 0) {
                batch = find_batch();
                if (batch.has_value()) break;
            }
            std::vector<std::size_t> rows(warm_batch);
            for (std::size_t i = 0; i < warm_batch; ++i) {
                rows[i] = (warm * (warm_batch / 2) + i) % data.size();
            }
            const Batch wb = gather(data, rows);
            StepContext wctx = ctx;
            wctx.step = warm;
            auto state = net.forward(wb, Mode::kTrain, wctx);
            net.compute_loss(state, wb, warm_sel, wctx);
            net.backward(state, wb, warm_sel, wctx);
            AdamWConfig opt;
            opt.lr = 5e-3;
            opt.weight_decay = mc.weight_decay;
            adamw_step(net.params(), opt);
        }
    }
    if (!batch.has_value()) {
        std::vector<std::size_t> rows(bs);
        std::iota(rows.begin(), rows.end(), 0);
        batch = gather(data, rows);
        log::warn("grad-check: no window routed whale samples; the high-value component check "
                  "may be vacuous");
    }

    const FrozenBoundary frozen = net.capture(*batch, Mode::kTrainFrozen, ctx);
    StepContext frozen_ctx = ctx;
    frozen_ctx.frozen = &frozen;

    const std::vector<std::string> components = {"cascade", "distill", "residual", "high_value",
                                                 "total"};
    std::vector<GradCheckOutcome> outcomes;
    for (const auto& component : components) {
        const LossSelect sel = component == "total" ? LossSelect::from_config(mc)
                                                    : LossSelect::component(component);
        auto loss_fn = [&]() {
            return net.loss_value(*batch, Mode::kTrainFrozen, sel, frozen_ctx);
        };
        auto compute_grads = [&]() {
            net.params().zero_grads();
            auto state = net.forward(*batch, Mode::kTrainFrozen, frozen_ctx);
            net.compute_loss(state, *batch, sel, frozen_ctx);
            net.backward(state, *batch, sel, frozen_ctx);
            if (cfg.grad_check.corrupt_gradient) {
                // plant-a-bug self-test: double the largest analytic entry
                Tensor* worst = nullptr;
                std::size_t worst_i = 0;
                double worst_abs = -1.0;
                for (auto& t : net.params().tensors()) {
                    if (!t->trainable) continue;
                    for (std::size_t i = 0; i < t->grad.size(); ++i) {
                        if (std::abs(t->grad.data()[i]) > worst_abs) {
                            worst_abs = std::abs(t->grad.data()[i]);
                            worst = t.get();
                            worst_i = i;
                        }
                    }
                }
                if (worst != nullptr) worst->grad.data()[worst_i] *= 2.0;
            }
        };
        const GradCheckResult res = grad_check(net.params(), loss_fn, compute_grads,
                                               cfg.grad_check.epsilon, cfg.grad_check.max_params);
        GradCheckOutcome outcome;
        outcome.component = component;
        outcome.max_rel_error = res.max_rel_error;
        outcome.worst_param = res.worst_param;
        outcome.passed = res.max_rel_error <= cfg.grad_check.tolerance;
        outcomes.push_back(std::move(outcome));
    }
    return outcomes;
}

int cmd_grad_check(const RunConfig& cfg) {
    const auto outcomes = run_grad_checks(cfg);
    bool all_passed = true;
    for (const auto& o : outcomes) {
        std::printf("component=%s max_rel_error=%.3e worst=%s status=%s\n", o.component.c_str(),
                    o.max_rel_error, o.worst_param.empty() ? "-" : o.worst_param.c_str(),
                    o.passed ? "pass" : "FAIL");
        all_passed = all_passed && o.passed;
    }
    std::printf("grad-check: %s (tolerance %.1e)\n", all_passed ? "all components pass" : "FAILED",
                cfg.grad_check.tolerance);
    return all_passed ? kExitOk : kExitVerification;
}

int dispatch(const std::string& command, const RunConfig& cfg) {
    try {
        if (command == "gen-data") return cmd_gen_data(cfg);
        if (command == "train") return cmd_train(cfg);
        if (command == "eval") return cmd_eval(cfg);
        if (command == "ablate") return cmd_ablate(cfg);
        if (command == "grad-check") return cmd_grad_check(cfg);
        log::error("unknown command: " + command);
        return kExitConfig;
    } catch (const ConfigError& e) {
        log::error(e.what());
        return kExitConfig;
    } catch (const InputError& e) {
        log::error(e.what());
        return kExitConfig;
    } catch (const NumericError& e) {
        log::error(e.what());
        return kExitNumeric;
    } catch (const MismatchError& e) {
        log::error(e.what());
        return kExitMismatch;
    } catch (const std::exception& e) {
        log::error(std::string("unexpected error: ") + e.what());
        return kExitConfig;
    }
}

}  // namespace ltvforge
