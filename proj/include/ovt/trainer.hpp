#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ovt/eval.hpp"
#include "ovt/losses.hpp"
#include "ovt/model.hpp"
#include "ovt/synthdata.hpp"
#include "ovt/viewpoints.hpp"

namespace ovt {

enum class SamplingMode {
    Ovt,   // weighted anchors + top-K farthest outliers
    Ros,   // weighted anchors + uniformly random outliers
    Raos,  // random view as anchor + uniformly random outliers
};

std::string to_string(SamplingMode mode);
SamplingMode sampling_mode_from_string(const std::string& s);

struct TrainConfig {
    double lambda = 1.0;           // balance of the viewpoint-consistency term
    double alpha = 0.1;            // residual ratio
    std::size_t k_outliers = 5;    // outliers per object
    double margin = 0.0;
    MarginMode margin_mode = MarginMode::Additive;
    std::size_t lora_rank = 8;
    double learning_rate = 0.05;
    double momentum = 0.95;
    std::size_t batch_size = 16;
    std::size_t epochs = 30;
    std::uint64_t seed = 42;
    SamplingMode sampling_mode = SamplingMode::Ovt;
    bool train_temperature = false;
    double clean_mix_ratio = 0.5;  // fraction of each batch drawn from the clean set

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double itc_loss = 0.0;                  // mean over the epoch's batches
    double vc_loss = 0.0;
    double total_loss = 0.0;
    double mean_intra_object_distance = 0.0;  // mean per-object max pairwise cosine distance
    double outlier_mean_distance = 0.0;       // mean distance of the top-K views to the anchor
    double zero_shot_top1 = 0.0;              // NaN when no eval set is attached
    double seconds = 0.0;                     // wall time; CSV writes 0 unless timing enabled
};

struct TrainLog {
    std::vector<EpochRecord> records;

    /// Fixed columns: epoch,itc_loss,vc_loss,total_loss,
    /// mean_intra_object_distance,outlier_mean_distance,zero_shot_top1,seconds.
    /// With include_timing false the seconds column is written as 0 so that
    /// reruns of the same seed are byte-identical.
    std::string to_csv(bool include_timing = false) const;
    void write_csv(const std::string& path, bool include_timing = false) const;
};

/// params <- params - learning_rate * grads. Throws on a non-finite gradient.
void sgd_step(std::span<double> params, std::span<const double> grads, double learning_rate);

/// One sample of a training mini-batch. `anchor` is non-null only for
/// multi-view records in the epoch's outlier set; gradients never flow into
/// the anchor (it is a snapshot constant).
struct BatchItem {
    const ViewRecord* record = nullptr;
    Vec text_embedding;
    const Vec* anchor = nullptr;
};

struct BatchLoss {
    double itc = 0.0;
    double vc = 0.0;
    double total = 0.0;
    ModelGrads grads;
};

/// Forward + backward over one mini-batch: symmetric contrastive loss over
/// all items plus the margin loss for items with an anchor attached.
BatchLoss batch_loss_and_grads(const ModelState& state, const std::vector<BatchItem>& batch,
                               double lambda, double margin, MarginMode mode);

/// Fused embeddings for every record, one row per record (parallelizable via
/// OVT_THREADS; output is identical at any width).
Matrix embed_dataset(const ModelState& state, const MultiViewDataset& dataset);

/// Fused embeddings grouped per object, in first-appearance order.
std::vector<ObjectEmbeddings> embed_dataset_by_object(const ModelState& state,
                                                      const MultiViewDataset& dataset);

/// Anchors/outliers per the sampling mode (rng is consumed only by ros/raos).
EpochPlan build_plan_for_mode(const std::vector<ObjectEmbeddings>& objects, SamplingMode mode,
                              std::size_t k, Rng& rng);

/// Held-out data prepared for per-epoch zero-shot scoring. The class bank is
/// built once from the frozen text encoder.
struct EvalContext {
    ClassBank bank;
    MultiViewDataset data;
    std::vector<std::string> truths;
};

EvalContext make_eval_context(const ModelState& state, const MultiViewDataset& eval_set);

/// One full pass of the algorithm: recompute embeddings, snapshot anchors and
/// outliers, then descend over shuffled mini-batches (updates disabled give a
/// pure evaluation pass). Metrics in the record describe the state after the
/// pass. Throws with the offending epoch/batch on any non-finite loss.
EpochRecord run_epoch(ModelState& state, const MultiViewDataset& multiview,
                      const MultiViewDataset& clean, const TrainConfig& cfg,
                      std::size_t epoch_index, bool update_params, const EvalContext* eval,
                      std::vector<Vec>* velocity);

/// Standalone single epoch with the config's seed.
EpochRecord run_epoch(ModelState& state, const MultiViewDataset& multiview,
                      const MultiViewDataset& clean, const TrainConfig& cfg);

struct FitResult {
    ModelState state;
    TrainLog log;
};

/// Whole training run. Record 0 is a no-update evaluation pass of the initial
/// model; records 1..epochs follow one training epoch each. The eval set, when
/// given, supplies the per-epoch zero-shot column.
FitResult fit(ModelState state, const MultiViewDataset& multiview, const MultiViewDataset& clean,
              const TrainConfig& cfg, const MultiViewDataset* eval_set = nullptr);

}  // namespace ovt
