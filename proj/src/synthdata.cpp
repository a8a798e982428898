#include "ovt/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace ovt {

namespace {

constexpr double kMinAngleDeg = 30.0;
constexpr int kMaxRetries = 1000;
constexpr double kObjectOffsetStd = 0.1;

const char* kCategoryWords[] = {
    "airplane", "bicycle", "car",    "chair",  "dog",    "guitar", "hammer", "lamp",
    "mug",      "piano",   "robot",  "shoe",   "table",  "tent",   "violin", "whale",
    "kettle",   "laptop",  "helmet", "wallet", "banana", "candle", "drone",  "anchor",
};

}  // namespace

std::vector<std::pair<std::string, std::vector<std::size_t>>> MultiViewDataset::group_by_object()
    const {
    std::vector<std::pair<std::string, std::vector<std::size_t>>> groups;
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < records.size(); ++i) {
        auto it = index.find(records[i].object_id);
        if (it == index.end()) {
            index.emplace(records[i].object_id, groups.size());
            groups.push_back({records[i].object_id, {i}});
        } else {
            groups[it->second].second.push_back(i);
        }
    }
    return groups;
}

std::vector<std::string> MultiViewDataset::categories() const {
    std::set<std::string> unique;
    for (const auto& r : records) unique.insert(r.category);
    return {unique.begin(), unique.end()};
}

void GenSpec::validate() const {
    if (num_categories == 0 || objects_per_category == 0 || views_per_object == 0) {
        throw std::invalid_argument("generation spec: all counts must be positive");
    }
    if (input_dim < 2) {
        throw std::invalid_argument("generation spec: input_dim must be >= 2");
    }
    if (!(base_view_noise >= 0.0)) {
        throw std::invalid_argument("generation spec: base_view_noise must be >= 0");
    }
    if (!(hard_view_noise > base_view_noise)) {
        throw std::invalid_argument("generation spec: hard_view_noise must exceed base_view_noise");
    }
    if (!(hard_view_fraction >= 0.0 && hard_view_fraction <= 1.0)) {
        throw std::invalid_argument("generation spec: hard_view_fraction must lie in [0, 1]");
    }
}

std::string category_label(std::size_t index) {
    constexpr std::size_t n = sizeof(kCategoryWords) / sizeof(kCategoryWords[0]);
    if (index < n) return kCategoryWords[index];
    return "category" + std::to_string(index);
}

std::string prompt_for_category(const std::string& category) {
    if (category.empty()) {
        throw std::invalid_argument("prompt_for_category: empty category");
    }
    return "Write a short description for the image, noting that the main instance of the "
           "image is a " +
           category + ".";
}

std::string zero_shot_prompt(const std::string& category) {
    if (category.empty()) {
        throw std::invalid_argument("zero_shot_prompt: empty category");
    }
    return "a photo of " + category;
}

Captioner default_mock_captioner() {
    return [](const ViewRecord& view, const std::string& /*prompt*/) {
        return "a photo of a " + view.category + ", seen from viewpoint " +
               std::to_string(view.view_id);
    };
}

std::string mock_caption(const ViewRecord& view, const Captioner& captioner) {
    if (view.category.empty()) {
        throw std::invalid_argument("mock_caption: view has no category");
    }
    return captioner(view, prompt_for_category(view.category));
}

Matrix draw_category_prototypes(std::size_t num_categories, std::size_t dim, Rng& rng) {
    const double cos_limit = std::cos(kMinAngleDeg * std::numbers::pi / 180.0);
    Matrix prototypes(num_categories, dim);
    for (std::size_t c = 0; c < num_categories; ++c) {
        bool placed = false;
        for (int attempt = 0; attempt < kMaxRetries && !placed; ++attempt) {
            Vec candidate = l2_normalize(rng.gaussian_vec(dim, 0.0, 1.0));
            bool separated = true;
            for (std::size_t prev = 0; prev < c && separated; ++prev) {
                separated = dot(candidate, prototypes.row(prev)) <= cos_limit;
            }
            if (separated) {
                prototypes.set_row(c, candidate);
                placed = true;
            }
        }
        if (!placed) {
            throw std::runtime_error(
                "could not place category prototype " + std::to_string(c) +
                " with 30 degree separation after 1000 retries; use fewer categories, a larger "
                "input_dim, or a lower minimum angle");
        }
    }
    return prototypes;
}

MultiViewDataset generate_from_prototypes(const GenSpec& spec, const Matrix& prototypes,
                                          Rng& rng, const Captioner& captioner,
                                          const std::string& object_prefix) {
    spec.validate();
    if (prototypes.rows() != spec.num_categories || prototypes.cols() != spec.input_dim) {
        throw std::invalid_argument("prototype matrix shape does not match spec");
    }
    const std::size_t m = spec.views_per_object;
    const auto hard_count = static_cast<std::size_t>(
        std::ceil(spec.hard_view_fraction * static_cast<double>(m) - 1e-12));

    MultiViewDataset dataset;
    dataset.records.reserve(spec.num_categories * spec.objects_per_category * m);
    for (std::size_t c = 0; c < spec.num_categories; ++c) {
        const std::string label = category_label(c);
        for (std::size_t o = 0; o < spec.objects_per_category; ++o) {
            Vec object_vec = prototypes.row_vec(c);
            for (double& x : object_vec) x += rng.gaussian(0.0, kObjectOffsetStd);

            std::set<std::size_t> hard(
                [&] {
                    auto picks = rng.sample_without_replacement(m, hard_count);
                    return std::set<std::size_t>(picks.begin(), picks.end());
                }());

            const std::string object_id =
                object_prefix + "_c" + std::to_string(c) + "_o" + std::to_string(o);
            for (std::size_t v = 0; v < m; ++v) {
                ViewRecord rec;
                rec.object_id = object_id;
                rec.view_id = static_cast<std::int64_t>(v);
                rec.category = label;
                rec.is_hard_view = hard.count(v) > 0;
                const double sigma = rec.is_hard_view ? spec.hard_view_noise : spec.base_view_noise;
                rec.x = object_vec;
                for (double& x : rec.x) x += sigma * rng.gaussian();
                rec.caption = mock_caption(rec, captioner);
                dataset.records.push_back(std::move(rec));
            }
        }
    }
    return dataset;
}

MultiViewDataset generate(const GenSpec& spec, const Captioner& captioner) {
    spec.validate();
    Rng rng(spec.seed);
    Matrix prototypes = draw_category_prototypes(spec.num_categories, spec.input_dim, rng);
    return generate_from_prototypes(spec, prototypes, rng, captioner);
}

MultiViewDataset generate(const GenSpec& spec) {
    return generate(spec, default_mock_captioner());
}

void write_jsonl(const MultiViewDataset& dataset, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot open for writing: " + path);
    }
    for (const auto& r : dataset.records) {
        nlohmann::json j;
        j["object_id"] = r.object_id;
        j["view_id"] = r.view_id;
        j["category"] = r.category;
        j["caption"] = r.caption;
        j["hard"] = r.is_hard_view;
        j["x"] = r.x;
        out << j.dump() << '\n';
    }
    if (!out) {
        throw std::runtime_error("failed writing dataset to " + path);
    }
}

MultiViewDataset read_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open dataset file: " + path);
    }
    MultiViewDataset dataset;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_number) +
                                     ": malformed record: " + e.what());
        }
        try {
            ViewRecord r;
            r.object_id = j.at("object_id").get<std::string>();
            r.view_id = j.at("view_id").get<std::int64_t>();
            r.category = j.at("category").get<std::string>();
            r.caption = j.at("caption").get<std::string>();
            r.is_hard_view = j.at("hard").get<bool>();
            r.x = j.at("x").get<Vec>();
            dataset.records.push_back(std::move(r));
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_number) +
                                     ": missing or mistyped field: " + e.what());
        }
    }
    return dataset;
}

}  // namespace ovt
