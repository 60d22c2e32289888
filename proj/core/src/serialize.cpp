#include "serialize.hpp"

#include "ltvforge/errors.hpp"

namespace ltvforge::detail {

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& scope) {
    if (!obj.is_object()) throw ConfigError(scope + ": expected an object");
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const char* key : allowed) {
            if (item.key() == key) {
                known = true;
                break;
            }
        }
        if (!known) throw ConfigError(scope + ": unknown key '" + item.key() + "'");
    }
}

template <typename T>
static void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) j.at(key).get_to(out);
}

json generator_to_json(const GeneratorConfig& cfg) {
    return json{{"n_samples", cfg.n_samples},
                {"zero_ratio", cfg.zero_ratio},
                {"mu", cfg.mu},
                {"sigma", cfg.sigma},
                {"tail_prob", cfg.tail_prob},
                {"pareto_alpha", cfg.pareto_alpha},
                {"signal_corr", cfg.signal_corr},
                {"n_numeric", cfg.n_numeric},
                {"n_categorical", cfg.n_categorical},
                {"cat_cardinality", cfg.cat_cardinality},
                {"noise_std", cfg.noise_std}};
}

void generator_from_json(const json& j, GeneratorConfig& cfg) {
    check_keys(j,
               {"n_samples", "zero_ratio", "mu", "sigma", "tail_prob", "pareto_alpha",
                "signal_corr", "n_numeric", "n_categorical", "cat_cardinality", "noise_std"},
               "generator");
    maybe(j, "n_samples", cfg.n_samples);
    maybe(j, "zero_ratio", cfg.zero_ratio);
    maybe(j, "mu", cfg.mu);
    maybe(j, "sigma", cfg.sigma);
    maybe(j, "tail_prob", cfg.tail_prob);
    maybe(j, "pareto_alpha", cfg.pareto_alpha);
    maybe(j, "signal_corr", cfg.signal_corr);
    maybe(j, "n_numeric", cfg.n_numeric);
    maybe(j, "n_categorical", cfg.n_categorical);
    maybe(j, "cat_cardinality", cfg.cat_cardinality);
    maybe(j, "noise_std", cfg.noise_std);
}

json model_config_to_json(const ModelConfig& cfg) {
    json j;
    j["encoder_hidden"] = cfg.encoder_hidden;
    j["baseline_hidden"] = cfg.baseline_hidden;
    j["k_buckets"] = cfg.k_buckets;
    j["cascade"] = json{{"head_hidden", cfg.cascade.head_hidden},
                        {"head_depths", cfg.cascade.head_depths},
                        {"head_l2", cfg.cascade.head_l2},
                        {"head_dropout", cfg.cascade.head_dropout},
                        {"stage_weights", cfg.cascade.stage_weights},
                        {"negative_upweights", cfg.cascade.negative_upweights},
                        {"decision_threshold", cfg.cascade.decision_threshold},
                        {"temp_start", cfg.cascade.temp_start},
                        {"temp_end", cfg.cascade.temp_end}};
    j["alignment"] = json{{"bucket_embed_dim", cfg.alignment.bucket_embed_dim},
                          {"aligned_dim", cfg.alignment.aligned_dim}};
    j["residual"] = json{{"proj_dim", cfg.residual.proj_dim},
                         {"block2_dim", cfg.residual.block2_dim}};
    j["high_value"] = json{{"attention_hidden", cfg.high_value.attention_hidden},
                           {"trunk_hidden", cfg.high_value.trunk_hidden},
                           {"noise_std", cfg.high_value.noise_std}};
    j["loss"] = json{{"gamma", cfg.loss.gamma},
                     {"alpha_cascade", cfg.loss.alpha_cascade},
                     {"alpha_residual", cfg.loss.alpha_residual},
                     {"alpha_distill", cfg.loss.alpha_distill},
                     {"beta", cfg.loss.beta},
                     {"beta_focal", cfg.loss.beta_focal},
                     {"lambda_reg", cfg.loss.lambda_reg},
                     {"denom_floor", cfg.loss.denom_floor}};
    j["lr0"] = cfg.lr0;
    j["lr_min"] = cfg.lr_min;
    j["weight_decay"] = cfg.weight_decay;
    j["batch_size"] = cfg.batch_size;
    j["epochs"] = cfg.epochs;
    j["seed"] = cfg.seed;
    j["flags"] = json{{"cascade", cfg.flags.cascade},
                      {"distill", cfg.flags.distill},
                      {"residual", cfg.flags.residual},
                      {"augment", cfg.flags.augment}};
    j["whale_head_override"] = cfg.whale_head_override;
    j["theta_start"] = cfg.theta_start;
    j["theta_end"] = cfg.theta_end;
    return j;
}

void model_config_from_json(const json& j, ModelConfig& cfg) {
    check_keys(j,
               {"encoder_hidden", "baseline_hidden", "k_buckets", "cascade", "alignment",
                "residual", "high_value", "loss", "lr0", "lr_min", "weight_decay", "batch_size",
                "epochs", "seed", "flags", "whale_head_override", "theta_start", "theta_end"},
               "model");
    maybe(j, "encoder_hidden", cfg.encoder_hidden);
    maybe(j, "baseline_hidden", cfg.baseline_hidden);
    maybe(j, "k_buckets", cfg.k_buckets);
    if (j.contains("cascade")) {
        const json& c = j.at("cascade");
        check_keys(c,
                   {"head_hidden", "head_depths", "head_l2", "head_dropout", "stage_weights",
                    "negative_upweights", "decision_threshold", "temp_start", "temp_end"},
                   "model.cascade");
        maybe(c, "head_hidden", cfg.cascade.head_hidden);
        maybe(c, "head_depths", cfg.cascade.head_depths);
        maybe(c, "head_l2", cfg.cascade.head_l2);
        maybe(c, "head_dropout", cfg.cascade.head_dropout);
        maybe(c, "stage_weights", cfg.cascade.stage_weights);
        maybe(c, "negative_upweights", cfg.cascade.negative_upweights);
        maybe(c, "decision_threshold", cfg.cascade.decision_threshold);
        maybe(c, "temp_start", cfg.cascade.temp_start);
        maybe(c, "temp_end", cfg.cascade.temp_end);
    }
    if (j.contains("alignment")) {
        const json& a = j.at("alignment");
        check_keys(a, {"bucket_embed_dim", "aligned_dim"}, "model.alignment");
        maybe(a, "bucket_embed_dim", cfg.alignment.bucket_embed_dim);
        maybe(a, "aligned_dim", cfg.alignment.aligned_dim);
    }
    if (j.contains("residual")) {
        const json& r = j.at("residual");
        check_keys(r, {"proj_dim", "block2_dim"}, "model.residual");
        maybe(r, "proj_dim", cfg.residual.proj_dim);
        maybe(r, "block2_dim", cfg.residual.block2_dim);
    }
    if (j.contains("high_value")) {
        const json& h = j.at("high_value");
        check_keys(h, {"attention_hidden", "trunk_hidden", "noise_std"}, "model.high_value");
        maybe(h, "attention_hidden", cfg.high_value.attention_hidden);
        maybe(h, "trunk_hidden", cfg.high_value.trunk_hidden);
        maybe(h, "noise_std", cfg.high_value.noise_std);
    }
    if (j.contains("loss")) {
        const json& l = j.at("loss");
        check_keys(l,
                   {"gamma", "alpha_cascade", "alpha_residual", "alpha_distill", "beta",
                    "beta_focal", "lambda_reg", "denom_floor"},
                   "model.loss");
        maybe(l, "gamma", cfg.loss.gamma);
        maybe(l, "alpha_cascade", cfg.loss.alpha_cascade);
        maybe(l, "alpha_residual", cfg.loss.alpha_residual);
        maybe(l, "alpha_distill", cfg.loss.alpha_distill);
        maybe(l, "beta", cfg.loss.beta);
        maybe(l, "beta_focal", cfg.loss.beta_focal);
        maybe(l, "lambda_reg", cfg.loss.lambda_reg);
        maybe(l, "denom_floor", cfg.loss.denom_floor);
    }
    maybe(j, "lr0", cfg.lr0);
    maybe(j, "lr_min", cfg.lr_min);
    maybe(j, "weight_decay", cfg.weight_decay);
    maybe(j, "batch_size", cfg.batch_size);
    maybe(j, "epochs", cfg.epochs);
    maybe(j, "seed", cfg.seed);
    if (j.contains("flags")) {
        const json& f = j.at("flags");
        check_keys(f, {"cascade", "distill", "residual", "augment"}, "model.flags");
        maybe(f, "cascade", cfg.flags.cascade);
        maybe(f, "distill", cfg.flags.distill);
        maybe(f, "residual", cfg.flags.residual);
        maybe(f, "augment", cfg.flags.augment);
    }
    maybe(j, "whale_head_override", cfg.whale_head_override);
    maybe(j, "theta_start", cfg.theta_start);
    maybe(j, "theta_end", cfg.theta_end);
}

json schema_to_json(const DatasetSchema& schema) {
    json cats = json::array();
    for (std::size_t c = 0; c < schema.categorical_names.size(); ++c) {
        cats.push_back(json{{"name", schema.categorical_names[c]},
                            {"cardinality", schema.categorical_cardinality[c]}});
    }
    return json{{"numeric", schema.numeric_names}, {"categorical", cats}};
}

DatasetSchema schema_from_json(const json& j) {
    check_keys(j, {"numeric", "categorical"}, "schema");
    DatasetSchema schema;
    j.at("numeric").get_to(schema.numeric_names);
    for (const auto& cat : j.at("categorical")) {
        check_keys(cat, {"name", "cardinality"}, "schema.categorical");
        schema.categorical_names.push_back(cat.at("name").get<std::string>());
        schema.categorical_cardinality.push_back(cat.at("cardinality").get<std::int32_t>());
    }
    return schema;
}

json bucket_spec_to_json(const BucketSpec& spec) {
    return json{{"k", spec.k},
                {"thresholds", spec.thresholds},
                {"centers", spec.centers},
                {"half_ranges", spec.half_ranges},
                {"top_cap", spec.top_cap}};
}

BucketSpec bucket_spec_from_json(const json& j) {
    check_keys(j, {"k", "thresholds", "centers", "half_ranges", "top_cap"}, "bucket_spec");
    BucketSpec spec;
    j.at("k").get_to(spec.k);
    j.at("thresholds").get_to(spec.thresholds);
    j.at("centers").get_to(spec.centers);
    j.at("half_ranges").get_to(spec.half_ranges);
    j.at("top_cap").get_to(spec.top_cap);
    return spec;
}

json metrics_to_json(const MetricsReport& report) {
    json j;
    std::vector<std::string> undefined;
    auto put = [&](const char* name, const std::optional<double>& v) {
        if (v.has_value()) {
            j[name] = *v;
        } else {
            undefined.push_back(name);
        }
    };
    put("gini", report.gini);
    put("gini_nonzero", report.gini_nonzero);
    put("spearman", report.spearman);
    put("spearman_nonzero", report.spearman_nonzero);
    put("nmae", report.nmae);
    put("mape", report.mape);
    put("ambe", report.ambe);
    put("nrmse", report.nrmse);
    put("f1_zero", report.f1_zero);
    put("bucket_acc", report.bucket_acc);
    put("sva", report.sva);
    put("recall_at_k", report.recall_at_k);
    j["recall_k"] = report.recall_k;
    put("top_bucket_ambe", report.top_bucket_ambe);
    put("top_bucket_nrmse", report.top_bucket_nrmse);
    put("top_bucket_f1", report.top_bucket_f1);
    put("bucket_chi2", report.bucket_chi2);
    j["undefined"] = undefined;
    return j;
}

}  // namespace ltvforge::detail
