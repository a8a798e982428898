#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ovt/config.hpp"

namespace ovt {

/// The three generated splits of one experiment: shared category prototypes,
/// independent noise streams.
struct ExperimentSets {
    MultiViewDataset multiview, clean, eval;
};

ExperimentSets generate_experiment_sets(const ExperimentConfig& cfg);

/// Model for the experiment: fresh state, with the frozen base aligned on the
/// training categories when the config asks for a pretrained starting point.
ModelState prepare_model(const ExperimentConfig& cfg, const MultiViewDataset& multiview);

struct CompareRow {
    std::string mode;
    std::uint64_t seed = 0;
    double invariance = 0.0;
    double outlier_mean = 0.0;
    double zero_shot = 0.0;
};

struct CompareResult {
    std::vector<CompareRow> rows;
    std::map<std::string, double> median_invariance;  // mode -> median
    std::string csv;
};

/// ovt/ros/raos under identical budgets for each seed.
CompareResult run_mode_comparison(const ExperimentConfig& cfg,
                                  const std::vector<std::uint64_t>& seeds);

/// Writes multiview.jsonl, clean.jsonl and eval.jsonl (shared category
/// prototypes, independent noise streams) into the data directory.
int cmd_gen(const ExperimentConfig& cfg);

/// Trains per the config and writes metrics.csv, checkpoint.bin and
/// config_resolved.json into out_dir.
int cmd_train(const ExperimentConfig& cfg);

/// Scores a checkpoint on a dataset: zero-shot accuracy, the invariance
/// report at the configured epsilon, and description accuracy at the
/// configured betas plus the adaptive threshold. Writes a JSON report.
int cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint_path,
             const std::string& eval_data_path, const std::string& report_path);

/// Finite-difference checks for the contrastive loss, the consistency loss
/// and the full composite forward. Nonzero exit on any failure;
/// corrupt_gradient deliberately breaks one entry as a negative control.
int cmd_gradcheck(const ExperimentConfig& cfg, bool corrupt_gradient);

/// Runs ovt/ros/raos under identical budgets for each seed and writes
/// per-run rows plus per-mode medians.
int cmd_compare(const ExperimentConfig& cfg, const std::vector<std::uint64_t>& seeds,
                const std::string& report_path);

}  // namespace ovt
