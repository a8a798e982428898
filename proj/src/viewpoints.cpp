#include "ovt/viewpoints.hpp"

#include <algorithm>
#include <stdexcept>

#include <json.hpp>

namespace ovt {

namespace {

constexpr std::size_t kNeighborCount = 5;
constexpr double kWeightEps = 1e-8;

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

void require_views(const ObjectEmbeddings& obj) {
    if (obj.embeddings.rows() == 0) {
        throw std::invalid_argument("object '" + obj.object_id + "' has no views");
    }
}

}  // namespace

std::vector<std::size_t> nearest_neighbors(const ObjectEmbeddings& obj, std::size_t j,
                                           std::size_t k) {
    require_views(obj);
    if (k < 1) {
        throw std::invalid_argument("nearest_neighbors: k must be >= 1");
    }
    const std::size_t m = obj.embeddings.rows();
    if (j >= m) {
        throw std::invalid_argument("nearest_neighbors: view index out of range");
    }
    std::vector<std::pair<double, std::size_t>> candidates;
    candidates.reserve(m - 1);
    for (std::size_t h = 0; h < m; ++h) {
        if (h == j) continue;
        candidates.push_back({cosine_distance(obj.embeddings.row(j), obj.embeddings.row(h)), h});
    }
    std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first < b.first;
        return a.second < b.second;
    });
    const std::size_t take = std::min(k, candidates.size());
    std::vector<std::size_t> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) out.push_back(candidates[i].second);
    return out;
}

AnchorResult anchor_embedding(const ObjectEmbeddings& obj) {
    require_views(obj);
    const std::size_t m = obj.embeddings.rows();
    const std::size_t d = obj.embeddings.cols();

    AnchorResult result;
    result.raw_weights.assign(m, 0.0);
    if (m == 1) {
        result.raw_weights[0] = 1.0;
    } else {
        for (std::size_t j = 0; j < m; ++j) {
            double dist_sum = 0.0;
            for (std::size_t h : nearest_neighbors(obj, j, kNeighborCount)) {
                dist_sum += cosine_distance(obj.embeddings.row(j), obj.embeddings.row(h));
            }
            result.raw_weights[j] = 1.0 / std::max(dist_sum, kWeightEps);
        }
    }

    double total = 0.0;
    for (double w : result.raw_weights) total += w;
    result.weights.resize(m);
    result.anchor.assign(d, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
        result.weights[j] = result.raw_weights[j] / total;
        for (std::size_t c = 0; c < d; ++c) {
            result.anchor[c] += result.weights[j] * obj.embeddings(j, c);
        }
    }
    return result;
}

std::vector<OutlierPick> select_outliers(const ObjectEmbeddings& obj, const Vec& anchor,
                                         std::size_t k) {
    require_views(obj);
    if (k < 1) {
        throw std::invalid_argument("select_outliers: k must be >= 1");
    }
    const std::size_t m = obj.embeddings.rows();
    std::vector<OutlierPick> all(m);
    for (std::size_t j = 0; j < m; ++j) {
        all[j] = {j, cosine_distance(obj.embeddings.row(j), anchor)};
    }
    std::sort(all.begin(), all.end(), [](const OutlierPick& a, const OutlierPick& b) {
        if (a.distance != b.distance) return a.distance > b.distance;
        return a.view_index < b.view_index;
    });
    all.resize(std::min(k, m));
    return all;
}

std::vector<OutlierPick> random_outliers(const ObjectEmbeddings& obj, const Vec& anchor,
                                         std::size_t k, Rng& rng) {
    require_views(obj);
    if (k < 1) {
        throw std::invalid_argument("random_outliers: k must be >= 1");
    }
    const std::size_t m = obj.embeddings.rows();
    auto picks = rng.sample_without_replacement(m, std::min(k, m));
    std::vector<OutlierPick> out;
    out.reserve(picks.size());
    for (std::size_t j : picks) {
        out.push_back({j, cosine_distance(obj.embeddings.row(j), anchor)});
    }
    return out;
}

AnchorResult random_anchor(const ObjectEmbeddings& obj, Rng& rng) {
    require_views(obj);
    const std::size_t m = obj.embeddings.rows();
    const std::size_t pick = static_cast<std::size_t>(rng.uniform_index(m));
    AnchorResult result;
    result.anchor = obj.embeddings.row_vec(pick);
    result.weights.assign(m, 0.0);
    result.weights[pick] = 1.0;
    result.raw_weights = result.weights;
    return result;
}

namespace {

template <typename AnchorFn, typename OutlierFn>
EpochPlan build_plan(const std::vector<ObjectEmbeddings>& objects, AnchorFn&& make_anchor,
                     OutlierFn&& make_outliers) {
    EpochPlan plan;
    for (const auto& obj : objects) {
        AnchorResult anchor = make_anchor(obj);
        auto picks = make_outliers(obj, anchor.anchor);
        plan.anchors[obj.object_id] = std::move(anchor.anchor);
        plan.outliers.by_object[obj.object_id] = std::move(picks);
    }
    return plan;
}

}  // namespace

EpochPlan build_epoch_plan(const std::vector<ObjectEmbeddings>& objects, std::size_t k) {
    return build_plan(
        objects, [](const ObjectEmbeddings& obj) { return anchor_embedding(obj); },
        [k](const ObjectEmbeddings& obj, const Vec& anchor) {
            return select_outliers(obj, anchor, k);
        });
}

EpochPlan build_ros_plan(const std::vector<ObjectEmbeddings>& objects, std::size_t k, Rng& rng) {
    return build_plan(
        objects, [](const ObjectEmbeddings& obj) { return anchor_embedding(obj); },
        [k, &rng](const ObjectEmbeddings& obj, const Vec& anchor) {
            return random_outliers(obj, anchor, k, rng);
        });
}

EpochPlan build_raos_plan(const std::vector<ObjectEmbeddings>& objects, std::size_t k, Rng& rng) {
    return build_plan(
        objects, [&rng](const ObjectEmbeddings& obj) { return random_anchor(obj, rng); },
        [k, &rng](const ObjectEmbeddings& obj, const Vec& anchor) {
            return random_outliers(obj, anchor, k, rng);
        });
}

std::string EpochPlan::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [object_id, anchor] : anchors) {
        nlohmann::json entry;
        entry["anchor"] = anchor;
        nlohmann::json idx = nlohmann::json::array();
        nlohmann::json dist = nlohmann::json::array();
        auto it = outliers.by_object.find(object_id);
        if (it != outliers.by_object.end()) {
            for (const auto& pick : it->second) {
                idx.push_back(pick.view_index);
                dist.push_back(pick.distance);
            }
        }
        entry["outlier_indices"] = idx;
        entry["outlier_distances"] = dist;
        j[object_id] = entry;
    }
    return j.dump();
}

std::uint64_t EpochPlan::hash() const {
    return fnv1a(to_json());
}

}  // namespace ovt
