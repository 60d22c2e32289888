#pragma once

#include <string>
#include <vector>

#include "ltvforge/config.hpp"
#include "ltvforge/data.hpp"
#include "ltvforge/metrics.hpp"
#include "ltvforge/model.hpp"

namespace ltvforge {

// Exit codes shared by the CLI and the command implementations.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitMismatch = 4;
inline constexpr int kExitVerification = 5;

int cmd_gen_data(const RunConfig& cfg);
int cmd_train(const RunConfig& cfg);
int cmd_eval(const RunConfig& cfg);
int cmd_ablate(const RunConfig& cfg);
int cmd_grad_check(const RunConfig& cfg);

// Maps thrown errors onto the exit-code taxonomy.
int dispatch(const std::string& command, const RunConfig& cfg);

// --- shared pieces (also used by the acceptance suite) -----------------------

// Schema compatibility plus prediction and the full metric report.
MetricsReport evaluate_model(TrainedModel& model, const Dataset& eval_ds, std::size_t recall_k);

struct AblationRow {
    std::string stage;
    MetricsReport metrics;
};

// Trains each requested stage on a shared split/seed and evaluates on the
// test split. Stages must be a subset of the ladder, in ladder order.
std::vector<AblationRow> run_ablation_ladder(const Dataset& full, const RunConfig& cfg);

AblationFlags stage_flags(const std::string& stage);

struct GradCheckOutcome {
    std::string component;
    double max_rel_error = 0.0;
    std::string worst_param;
    bool passed = false;
};

std::vector<GradCheckOutcome> run_grad_checks(const RunConfig& cfg);

std::string metrics_report_to_string(const MetricsReport& report, const RunConfig& cfg,
                                     std::size_t n_eval);

}  // namespace ltvforge
