#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ovt/model.hpp"
#include "ovt/synthdata.hpp"
#include "ovt/trainer.hpp"

namespace ovt {

struct EvalSettings {
    double epsilon = 0.5;
    std::vector<double> betas{1.0, 0.5};
    std::vector<std::size_t> top_k{1, 5};
};

/// One experiment manifest: generation, model, training and evaluation knobs
/// plus output locations. Every run is a pure function of (config, seed).
struct ExperimentConfig {
    std::uint64_t seed = 42;
    std::string out_dir = "out";
    std::string data_dir;  // empty: use out_dir

    GenSpec gen;  // gen.seed derived from the top-level seed unless set
    std::size_t clean_objects_per_category = 5;
    std::size_t clean_views_per_object = 1;
    std::size_t eval_objects_per_category = 5;
    std::size_t eval_views_per_object = 2;

    EncoderConfig model;  // model.input_dim always mirrors gen.input_dim
    double temperature = 0.07;
    std::uint64_t model_seed = 0;
    bool pretrained_base = true;  // align the frozen base on the data's categories

    TrainConfig train;
    EvalSettings eval;
    bool log_timing = false;

    /// Rejects unknown keys anywhere in the document, naming the key.
    static ExperimentConfig from_json(const nlohmann::json& j);

    /// Loads the file (or built-in defaults when path is empty), applies
    /// --set overrides (dotted paths, values parsed as JSON when possible),
    /// then the --seed / --out flags.
    static ExperimentConfig load(const std::string& path,
                                 const std::vector<std::string>& overrides,
                                 std::optional<std::uint64_t> seed_override,
                                 std::optional<std::string> out_override);

    nlohmann::json to_json() const;

    std::string resolved_data_dir() const { return data_dir.empty() ? out_dir : data_dir; }
    std::string multiview_path() const { return resolved_data_dir() + "/multiview.jsonl"; }
    std::string clean_path() const { return resolved_data_dir() + "/clean.jsonl"; }
    std::string eval_path() const { return resolved_data_dir() + "/eval.jsonl"; }

    ModelState make_model() const;
};

}  // namespace ovt
