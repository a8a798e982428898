#include "ovt/eval.hpp"

#include "ovt/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace ovt {

TextEmbedder model_text_embedder(const ModelState& state) {
    // the text path is frozen, so capturing a copy pins the embedder forever
    return [state](const std::string& text) { return encode_text(text, state); };
}

ClassBank build_class_bank(const std::vector<std::string>& labels, const TextEmbedder& embedder) {
    if (labels.empty()) {
        throw std::invalid_argument("build_class_bank: no labels");
    }
    std::set<std::string> unique(labels.begin(), labels.end());
    if (unique.size() != labels.size()) {
        throw std::invalid_argument("build_class_bank: duplicate labels");
    }
    ClassBank bank;
    bank.labels = labels;
    Vec first = embedder(zero_shot_prompt(labels[0]));
    bank.embeddings = Matrix(labels.size(), first.size());
    bank.embeddings.set_row(0, first);
    for (std::size_t i = 1; i < labels.size(); ++i) {
        bank.embeddings.set_row(i, embedder(zero_shot_prompt(labels[i])));
    }
    return bank;
}

ZeroShotResult zero_shot_classify(const Matrix& image_embeddings,
                                  const std::vector<std::string>& true_labels,
                                  const ClassBank& bank, const std::vector<std::size_t>& ks,
                                  double temperature) {
    if (bank.labels.empty()) {
        throw std::invalid_argument("zero_shot_classify: empty class bank");
    }
    if (image_embeddings.rows() != true_labels.size()) {
        throw std::invalid_argument("zero_shot_classify: embeddings/labels count mismatch");
    }
    if (image_embeddings.cols() != bank.embeddings.cols()) {
        throw std::invalid_argument("zero_shot_classify: embedding dim mismatch with bank");
    }
    for (std::size_t k : ks) {
        if (k < 1 || k > bank.labels.size()) {
            throw std::invalid_argument("zero_shot_classify: k out of range");
        }
    }

    const std::size_t n = image_embeddings.rows();
    const std::size_t c = bank.labels.size();
    ZeroShotResult result;
    result.predictions.reserve(n);

    std::vector<std::size_t> correct_at(ks.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
        Vec sims(c);
        for (std::size_t j = 0; j < c; ++j) {
            sims[j] = cosine_similarity(image_embeddings.row(i), bank.embeddings.row(j));
        }
        Prediction pred;
        pred.ranking.resize(c);
        std::iota(pred.ranking.begin(), pred.ranking.end(), std::size_t{0});
        std::sort(pred.ranking.begin(), pred.ranking.end(), [&sims](std::size_t a, std::size_t b) {
            if (sims[a] != sims[b]) return sims[a] > sims[b];
            return a < b;
        });

        Matrix scaled(1, c);
        for (std::size_t j = 0; j < c; ++j) scaled(0, j) = sims[j] / temperature;
        pred.confidences = softmax_rows(scaled).row_vec(0);

        std::size_t truth_rank = c;
        for (std::size_t r = 0; r < c; ++r) {
            if (bank.labels[pred.ranking[r]] == true_labels[i]) {
                truth_rank = r;
                break;
            }
        }
        for (std::size_t t = 0; t < ks.size(); ++t) {
            if (truth_rank < ks[t]) correct_at[t]++;
        }
        result.predictions.push_back(std::move(pred));
    }
    for (std::size_t t = 0; t < ks.size(); ++t) {
        result.topk_accuracy[ks[t]] = static_cast<double>(correct_at[t]) / static_cast<double>(n);
    }
    return result;
}

InvarianceReport invariance_report(const std::vector<ObjectEmbeddings>& objects, double epsilon) {
    InvarianceReport report;
    report.epsilon = epsilon;
    report.per_object_max.reserve(objects.size());

    double pair_sum = 0.0;
    std::size_t pair_count = 0;
    std::size_t within = 0;
    for (const auto& obj : objects) {
        const std::size_t m = obj.embeddings.rows();
        double max_dist = 0.0;
        for (std::size_t a = 0; a < m; ++a) {
            for (std::size_t b = a + 1; b < m; ++b) {
                const double dist = cosine_distance(obj.embeddings.row(a), obj.embeddings.row(b));
                max_dist = std::max(max_dist, dist);
                pair_sum += dist;
                pair_count += 1;
            }
        }
        report.per_object_max.push_back(max_dist);
        if (max_dist <= epsilon) within += 1;
    }
    if (!objects.empty()) {
        report.fraction_within = static_cast<double>(within) / static_cast<double>(objects.size());
        report.mean_max_distance =
            std::accumulate(report.per_object_max.begin(), report.per_object_max.end(), 0.0) /
            static_cast<double>(objects.size());
    }
    if (pair_count > 0) {
        report.mean_pairwise_distance = pair_sum / static_cast<double>(pair_count);
    }
    return report;
}

double description_accuracy(const std::vector<std::string>& generated,
                            const std::vector<std::string>& truths,
                            const TextEmbedder& embedder, double beta) {
    if (generated.empty() || generated.size() != truths.size()) {
        throw std::invalid_argument("description_accuracy: lists must be non-empty and equal length");
    }
    if (!(beta >= -1.0 && beta <= 1.0)) {
        throw std::invalid_argument("description_accuracy: beta outside [-1, 1]");
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < generated.size(); ++i) {
        const double sim = cosine_similarity(embedder(generated[i]), embedder(truths[i]));
        if (sim >= beta) hits += 1;
    }
    return static_cast<double>(hits) / static_cast<double>(generated.size());
}

double adaptive_threshold(const Vec& clean_similarities) {
    if (clean_similarities.empty()) {
        throw std::invalid_argument("adaptive_threshold: empty similarity list");
    }
    double sum = 0.0;
    for (double s : clean_similarities) sum += s;
    return sum / static_cast<double>(clean_similarities.size());
}

}  // namespace ovt
