#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ltvforge/data.hpp"
#include "ltvforge/model.hpp"

namespace ltvforge {

struct SplitConfig {
    double test_frac = 0.4;
    double val_frac = 0.1;
};

struct PathsConfig {
    std::string data_csv;
    std::string stats_json;
    std::string checkpoint;
    std::string history;
    std::string report;
    std::string eval_csv;       // optional; falls back to the test split of data_csv
    std::string ablate_report;
};

struct EvalOptions {
    std::size_t recall_k = 0;  // 0 -> max(1, n/20)
};

struct AblateOptions {
    std::vector<std::string> stages = {"baseline", "+cascade", "+distill", "+residual", "+aug"};
};

struct GradCheckOptions {
    std::size_t max_params = 5000;
    double epsilon = 1e-5;
    std::size_t batch = 8;
    double tolerance = 1e-4;
    bool corrupt_gradient = false;
};

struct RunConfig {
    std::uint64_t seed = 1;
    std::size_t threads = 1;
    GeneratorConfig generator;
    ModelConfig model;
    SplitConfig split;
    PathsConfig paths;
    EvalOptions eval;
    AblateOptions ablate;
    GradCheckOptions grad_check;
};

// Strict parse: unknown keys are hard errors. `paper_defaults` loads the
// full-scale architecture values before applying the file's overrides.
RunConfig load_run_config(const std::string& path, bool paper_defaults = false);
RunConfig parse_run_config(const std::string& json_text, bool paper_defaults = false);

// Full-scale architecture defaults (encoder [400,300,200], residual blocks
// [200,100], attention hidden 100, whale trunk [300,200], batch 100000).
void apply_paper_defaults(ModelConfig& cfg);

// Short VCS id baked at configure time, "unknown" outside a checkout.
std::string build_id();

}  // namespace ltvforge
