#include "ltvforge/config.hpp"

#include <fstream>
#include <sstream>

#include "ltvforge/errors.hpp"
#include "ltvforge/version.hpp"
#include "serialize.hpp"

namespace ltvforge {

using detail::check_keys;
using detail::json;

void apply_paper_defaults(ModelConfig& cfg) {
    cfg.encoder_hidden = {400, 300, 200};
    cfg.residual.proj_dim = 200;
    cfg.residual.block2_dim = 100;
    cfg.high_value.attention_hidden = 100;
    cfg.high_value.trunk_hidden = {300, 200};
    cfg.batch_size = 100000;
}

RunConfig parse_run_config(const std::string& json_text, bool paper_defaults) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    check_keys(j,
               {"seed", "threads", "generator", "model", "split", "paths", "eval", "ablate",
                "grad_check"},
               "config");

    RunConfig cfg;
    if (paper_defaults) apply_paper_defaults(cfg.model);
    if (j.contains("seed")) j.at("seed").get_to(cfg.seed);
    if (j.contains("threads")) j.at("threads").get_to(cfg.threads);
    if (j.contains("generator")) detail::generator_from_json(j.at("generator"), cfg.generator);
    if (j.contains("model")) detail::model_config_from_json(j.at("model"), cfg.model);
    if (j.contains("split")) {
        const json& s = j.at("split");
        check_keys(s, {"test_frac", "val_frac"}, "split");
        if (s.contains("test_frac")) s.at("test_frac").get_to(cfg.split.test_frac);
        if (s.contains("val_frac")) s.at("val_frac").get_to(cfg.split.val_frac);
    }
    if (j.contains("paths")) {
        const json& p = j.at("paths");
        check_keys(p,
                   {"data_csv", "stats_json", "checkpoint", "history", "report", "eval_csv",
                    "ablate_report"},
                   "paths");
        if (p.contains("data_csv")) p.at("data_csv").get_to(cfg.paths.data_csv);
        if (p.contains("stats_json")) p.at("stats_json").get_to(cfg.paths.stats_json);
        if (p.contains("checkpoint")) p.at("checkpoint").get_to(cfg.paths.checkpoint);
        if (p.contains("history")) p.at("history").get_to(cfg.paths.history);
        if (p.contains("report")) p.at("report").get_to(cfg.paths.report);
        if (p.contains("eval_csv")) p.at("eval_csv").get_to(cfg.paths.eval_csv);
        if (p.contains("ablate_report")) p.at("ablate_report").get_to(cfg.paths.ablate_report);
    }
    if (j.contains("eval")) {
        const json& e = j.at("eval");
        check_keys(e, {"recall_k"}, "eval");
        if (e.contains("recall_k")) e.at("recall_k").get_to(cfg.eval.recall_k);
    }
    if (j.contains("ablate")) {
        const json& a = j.at("ablate");
        check_keys(a, {"stages"}, "ablate");
        if (a.contains("stages")) a.at("stages").get_to(cfg.ablate.stages);
    }
    if (j.contains("grad_check")) {
        const json& g = j.at("grad_check");
        check_keys(g, {"max_params", "epsilon", "batch", "tolerance", "corrupt_gradient"},
                   "grad_check");
        if (g.contains("max_params")) g.at("max_params").get_to(cfg.grad_check.max_params);
        if (g.contains("epsilon")) g.at("epsilon").get_to(cfg.grad_check.epsilon);
        if (g.contains("batch")) g.at("batch").get_to(cfg.grad_check.batch);
        if (g.contains("tolerance")) g.at("tolerance").get_to(cfg.grad_check.tolerance);
        if (g.contains("corrupt_gradient")) {
            g.at("corrupt_gradient").get_to(cfg.grad_check.corrupt_gradient);
        }
    }
    // the generator and model share the run seed
    cfg.generator.seed = cfg.seed;
    cfg.model.seed = cfg.seed;
    return cfg;
}

RunConfig load_run_config(const std::string& path, bool paper_defaults) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw ConfigError("config: cannot open " + path);
    std::ostringstream buffer;
    buffer << file.rdbuf();
    return parse_run_config(buffer.str(), paper_defaults);
}

std::string build_id() { return LTVFORGE_BUILD_ID; }

}  // namespace ltvforge
