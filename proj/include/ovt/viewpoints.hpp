#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ovt/matrix.hpp"
#include "ovt/rng.hpp"

namespace ovt {

/// All viewpoint embeddings of one object, one row per view.
struct ObjectEmbeddings {
    std::string object_id;
    Matrix embeddings;  // M x d, rows nonzero
    std::vector<std::int64_t> view_ids;
};

struct AnchorResult {
    Vec anchor;       // convex combination of the rows
    Vec weights;      // normalized, sums to 1
    Vec raw_weights;  // 1 / (sum of neighbor distances), before normalization
};

struct OutlierPick {
    std::size_t view_index = 0;  // row into ObjectEmbeddings
    double distance = 0.0;       // cosine distance to the anchor
};

struct OutlierSet {
    std::map<std::string, std::vector<OutlierPick>> by_object;
};

/// Per-epoch snapshot of the maximization step.
struct EpochPlan {
    std::map<std::string, Vec> anchors;
    OutlierSet outliers;

    std::string to_json() const;  // debugging dump
    std::uint64_t hash() const;
};

/// Indices of the min(k, M-1) other views closest to view j in cosine
/// distance, self excluded, ties to the lower index. A single-view object
/// yields an empty set.
std::vector<std::size_t> nearest_neighbors(const ObjectEmbeddings& obj, std::size_t j,
                                           std::size_t k);

/// Nearest-neighbor weighted centroid: w_j = 1 / max(sum of distances to the
/// top-5 neighbors, 1e-8), normalized to sum 1.
AnchorResult anchor_embedding(const ObjectEmbeddings& obj);

/// min(k, M) view indices sorted by descending cosine distance to the anchor,
/// ties to the lower index.
std::vector<OutlierPick> select_outliers(const ObjectEmbeddings& obj, const Vec& anchor,
                                         std::size_t k);

/// k outlier indices sampled uniformly without replacement (distances still
/// reported against the provided anchor).
std::vector<OutlierPick> random_outliers(const ObjectEmbeddings& obj, const Vec& anchor,
                                         std::size_t k, Rng& rng);

/// A uniformly random view used as the anchor (weight 1 on that view).
AnchorResult random_anchor(const ObjectEmbeddings& obj, Rng& rng);

/// Deterministic anchors + top-K outliers for every object.
EpochPlan build_epoch_plan(const std::vector<ObjectEmbeddings>& objects, std::size_t k);

/// Anchors as in build_epoch_plan, outliers sampled uniformly.
EpochPlan build_ros_plan(const std::vector<ObjectEmbeddings>& objects, std::size_t k, Rng& rng);

/// Both anchors and outliers sampled uniformly.
EpochPlan build_raos_plan(const std::vector<ObjectEmbeddings>& objects, std::size_t k, Rng& rng);

}  // namespace ovt
