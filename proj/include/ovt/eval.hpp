#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ovt/matrix.hpp"
#include "ovt/model.hpp"
#include "ovt/viewpoints.hpp"

namespace ovt {

/// Deterministic map from text to an embedding vector.
using TextEmbedder = std::function<Vec(const std::string&)>;

/// The frozen toy text encoder of a model state, usable wherever a
/// TextEmbedder is expected.
TextEmbedder model_text_embedder(const ModelState& state);

/// One text embedding per category label (labels unique, same order).
struct ClassBank {
    std::vector<std::string> labels;
    Matrix embeddings;  // |labels| x d
};

/// Builds the bank from zero-shot prompts over the given labels.
ClassBank build_class_bank(const std::vector<std::string>& labels, const TextEmbedder& embedder);

struct Prediction {
    std::vector<std::size_t> ranking;  // label indices, best first
    Vec confidences;                   // softmax over similarities / temperature
};

struct ZeroShotResult {
    std::vector<Prediction> predictions;
    std::map<std::size_t, double> topk_accuracy;  // k -> accuracy

    double top1() const { return topk_accuracy.at(1); }
};

/// Ranks bank categories by cosine similarity for each image embedding and
/// scores top-k accuracy against the true labels.
ZeroShotResult zero_shot_classify(const Matrix& image_embeddings,
                                  const std::vector<std::string>& true_labels,
                                  const ClassBank& bank, const std::vector<std::size_t>& ks,
                                  double temperature = 0.07);

struct InvarianceReport {
    std::vector<double> per_object_max;  // max pairwise cosine distance per object
    double fraction_within = 0.0;        // objects with max distance <= epsilon
    double mean_max_distance = 0.0;      // mean over objects of the per-object max
    double mean_pairwise_distance = 0.0; // mean over all intra-object pairs
    double epsilon = 0.0;
};

/// Per-object worst-case view disagreement; singleton objects report 0.
InvarianceReport invariance_report(const std::vector<ObjectEmbeddings>& objects, double epsilon);

/// Fraction of generated texts whose embedding similarity to the matching
/// truth reaches beta.
double description_accuracy(const std::vector<std::string>& generated,
                            const std::vector<std::string>& truths,
                            const TextEmbedder& embedder, double beta);

/// Mean of the clean-distribution similarities, used as the adaptive beta.
double adaptive_threshold(const Vec& clean_similarities);

}  // namespace ovt
