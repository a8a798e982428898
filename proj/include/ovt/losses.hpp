#pragma once

#include <vector>

#include "ovt/matrix.hpp"

namespace ovt {

/// Image-text contrastive batch. Rows are raw (un-normalized) embeddings;
/// the loss normalizes internally so cosine semantics hold regardless of the
/// encoder's output scale.
struct ItcBatch {
    Matrix image_embeddings;  // N x d
    Matrix text_embeddings;   // N x d
    double temperature = 0.07;
};

struct ItcResult {
    double loss = 0.0;
    Matrix d_image;           // dL/d(image embeddings), N x d
    Matrix d_text;            // dL/d(text embeddings), N x d
    double d_temperature = 0.0;
};

/// Symmetric InfoNCE over in-batch negatives:
/// L = 1/2 (L_img_to_text + L_text_to_img), cosine similarities scaled by
/// 1/temperature. Throws on N = 0, a zero-norm row, or temperature <= 0.
ItcResult itc_loss(const ItcBatch& batch);

enum class MarginMode {
    Additive,  // max(distance + margin, 0) -- the default form
    Hinge,     // max(distance - margin, 0)
};

/// Margin-thresholded cosine distance between an outlier embedding and its
/// (constant) anchor.
double vc_pair_loss(const Vec& z, const Vec& anchor, double margin,
                    MarginMode mode = MarginMode::Additive);

struct VcBatch {
    std::vector<Vec> outliers;  // trainable embeddings
    std::vector<Vec> anchors;   // snapshot constants; no gradient flows here
    double margin = 0.0;
    MarginMode mode = MarginMode::Additive;
};

struct VcResult {
    double loss = 0.0;
    std::vector<Vec> d_outliers;  // one gradient per outlier; anchors get none
};

/// Sum of vc_pair_loss over all pairs; an empty batch gives exactly 0.
VcResult vc_loss(const VcBatch& batch);

/// itc + lambda * vc; lambda must be >= 0.
double total_loss(double itc, double vc, double lambda);

}  // namespace ovt
