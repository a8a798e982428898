#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ovt/matrix.hpp"
#include "ovt/rng.hpp"

namespace ovt {

/// One captioned view of one object.
struct ViewRecord {
    std::string object_id;
    std::int64_t view_id = 0;
    std::string category;
    Vec x;  // raw input vector
    std::string caption;
    bool is_hard_view = false;
};

struct MultiViewDataset {
    std::vector<ViewRecord> records;

    std::size_t input_dim() const { return records.empty() ? 0 : records[0].x.size(); }
    bool empty() const { return records.empty(); }

    /// Object ids with their record indices, in first-appearance order.
    std::vector<std::pair<std::string, std::vector<std::size_t>>> group_by_object() const;
    /// Sorted unique category labels.
    std::vector<std::string> categories() const;
};

struct GenSpec {
    std::size_t num_categories = 10;
    std::size_t objects_per_category = 5;
    std::size_t views_per_object = 20;
    std::size_t input_dim = 16;
    double base_view_noise = 0.0125;  // sigma_v, per coordinate
    double hard_view_fraction = 0.2;  // p
    double hard_view_noise = 0.15;    // sigma_h, must exceed sigma_v
    std::uint64_t seed = 42;

    void validate() const;
};

/// Deterministic caption source: same (view, prompt) always gives the same
/// caption. Stands in for a vision-language captioning model.
using Captioner = std::function<std::string(const ViewRecord& view, const std::string& prompt)>;

/// "a photo of a <category>, seen from viewpoint <view_id>" -- category
/// consistent across all views of an object by construction.
Captioner default_mock_captioner();

/// The category-guided captioning prompt with the label substituted in.
std::string prompt_for_category(const std::string& category);

/// "a photo of <category>", the zero-shot classification prompt.
std::string zero_shot_prompt(const std::string& category);

/// Runs the captioner on the view with the category-guided prompt.
std::string mock_caption(const ViewRecord& view, const Captioner& captioner);

/// Human-readable deterministic label for category index i.
std::string category_label(std::size_t index);

/// Unit vectors with pairwise angular separation of at least 30 degrees,
/// drawn by rejection (up to 1000 retries per category).
Matrix draw_category_prototypes(std::size_t num_categories, std::size_t dim, Rng& rng);

/// Builds objects and views around the given prototypes. `object_prefix`
/// namespaces the object ids so several generated sets can coexist.
MultiViewDataset generate_from_prototypes(const GenSpec& spec, const Matrix& prototypes,
                                          Rng& rng, const Captioner& captioner,
                                          const std::string& object_prefix = "obj");

MultiViewDataset generate(const GenSpec& spec, const Captioner& captioner);
MultiViewDataset generate(const GenSpec& spec);

// One JSON object per line; floats survive a round trip exactly.
void write_jsonl(const MultiViewDataset& dataset, const std::string& path);
MultiViewDataset read_jsonl(const std::string& path);

}  // namespace ovt
