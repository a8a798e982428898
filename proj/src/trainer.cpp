#include "ovt/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "ovt/parallel.hpp"

namespace ovt {

namespace {

constexpr std::uint64_t kPlanStream = 0x504c414e;     // per-epoch plan sampling
constexpr std::uint64_t kShuffleStream = 0x42415443;  // per-epoch batch shuffling

double mean_or_zero(double sum, std::size_t n) {
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

}  // namespace

std::string to_string(SamplingMode mode) {
    switch (mode) {
        case SamplingMode::Ovt: return "ovt";
        case SamplingMode::Ros: return "ros";
        case SamplingMode::Raos: return "raos";
    }
    return "ovt";
}

SamplingMode sampling_mode_from_string(const std::string& s) {
    if (s == "ovt") return SamplingMode::Ovt;
    if (s == "ros") return SamplingMode::Ros;
    if (s == "raos") return SamplingMode::Raos;
    throw std::invalid_argument("unknown sampling_mode '" + s + "' (expected ovt, ros or raos)");
}

void TrainConfig::validate() const {
    if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
    if (k_outliers < 1) throw std::invalid_argument("k_outliers must be >= 1");
    if (!(margin >= 0.0)) throw std::invalid_argument("margin must be >= 0");
    if (lora_rank < 1) throw std::invalid_argument("lora_rank must be >= 1");
    // learning_rate == 0 turns an epoch into an evaluation pass
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning_rate must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (!(clean_mix_ratio >= 0.0 && clean_mix_ratio <= 1.0)) {
        throw std::invalid_argument("clean_mix_ratio must lie in [0, 1]");
    }
}

std::string TrainLog::to_csv(bool include_timing) const {
    std::string out =
        "epoch,itc_loss,vc_loss,total_loss,mean_intra_object_distance,"
        "outlier_mean_distance,zero_shot_top1,seconds\n";
    char buf[64];
    auto fmt = [&buf](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    for (const auto& r : records) {
        out += std::to_string(r.epoch);
        out += ',';
        out += fmt(r.itc_loss);
        out += ',';
        out += fmt(r.vc_loss);
        out += ',';
        out += fmt(r.total_loss);
        out += ',';
        out += fmt(r.mean_intra_object_distance);
        out += ',';
        out += fmt(r.outlier_mean_distance);
        out += ',';
        out += fmt(r.zero_shot_top1);
        out += ',';
        out += fmt(include_timing ? r.seconds : 0.0);
        out += '\n';
    }
    return out;
}

void TrainLog::write_csv(const std::string& path, bool include_timing) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot open for writing: " + path);
    }
    out << to_csv(include_timing);
}

void sgd_step(std::span<double> params, std::span<const double> grads, double learning_rate) {
    if (params.size() != grads.size()) {
        throw std::invalid_argument("sgd_step: parameter/gradient length mismatch");
    }
    for (double g : grads) {
        if (!std::isfinite(g)) {
            throw std::runtime_error("sgd_step: non-finite gradient");
        }
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        params[i] -= learning_rate * grads[i];
    }
}

BatchLoss batch_loss_and_grads(const ModelState& state, const std::vector<BatchItem>& batch,
                               double lambda, double margin, MarginMode mode) {
    if (batch.empty()) {
        throw std::invalid_argument("batch_loss_and_grads: empty batch");
    }
    const std::size_t n = batch.size();
    const std::size_t d = state.config.embed_dim;
    const ComposedWeights weights = compose_weights(state);

    std::vector<EncodeCache> caches(n);
    Matrix fused(n, d), texts(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        fused.set_row(i, encode_image(batch[i].record->x, state, weights, caches[i]));
        texts.set_row(i, batch[i].text_embedding);
    }

    ItcResult itc = itc_loss({fused, texts, state.temperature()});

    VcBatch vc_batch;
    vc_batch.margin = margin;
    vc_batch.mode = mode;
    std::vector<std::size_t> vc_rows;
    for (std::size_t i = 0; i < n; ++i) {
        if (batch[i].anchor != nullptr) {
            vc_batch.outliers.push_back(fused.row_vec(i));
            vc_batch.anchors.push_back(*batch[i].anchor);
            vc_rows.push_back(i);
        }
    }
    VcResult vc = vc_loss(vc_batch);

    BatchLoss result;
    result.itc = itc.loss;
    result.vc = vc.loss;
    result.total = total_loss(itc.loss, vc.loss, lambda);
    result.grads = ModelGrads::zeros_like(state);

    Matrix d_fused = itc.d_image;
    for (std::size_t t = 0; t < vc_rows.size(); ++t) {
        const std::size_t row = vc_rows[t];
        for (std::size_t c = 0; c < d; ++c) {
            d_fused(row, c) += lambda * vc.d_outliers[t][c];
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        encode_image_backward(caches[i], state, weights, d_fused.row_vec(i), result.grads);
    }
    if (state.train_temperature) {
        // through tau = clamp(exp(log_tau), ...): zero slope while clamped
        const double raw = std::exp(state.log_tau);
        result.grads.log_tau = raw == state.temperature() ? itc.d_temperature * raw : 0.0;
    }
    return result;
}

Matrix embed_dataset(const ModelState& state, const MultiViewDataset& dataset) {
    const ComposedWeights weights = compose_weights(state);
    Matrix out(dataset.records.size(), state.config.embed_dim);
    parallel_for(dataset.records.size(), [&](std::size_t i) {
        EncodeCache cache;
        out.set_row(i, encode_image(dataset.records[i].x, state, weights, cache));
    });
    return out;
}

std::vector<ObjectEmbeddings> embed_dataset_by_object(const ModelState& state,
                                                      const MultiViewDataset& dataset) {
    Matrix rows = embed_dataset(state, dataset);
    std::vector<ObjectEmbeddings> objects;
    for (const auto& [object_id, indices] : dataset.group_by_object()) {
        ObjectEmbeddings obj;
        obj.object_id = object_id;
        obj.embeddings = Matrix(indices.size(), rows.cols());
        obj.view_ids.reserve(indices.size());
        for (std::size_t r = 0; r < indices.size(); ++r) {
            obj.embeddings.set_row(r, rows.row(indices[r]));
            obj.view_ids.push_back(dataset.records[indices[r]].view_id);
        }
        objects.push_back(std::move(obj));
    }
    return objects;
}

EpochPlan build_plan_for_mode(const std::vector<ObjectEmbeddings>& objects, SamplingMode mode,
                              std::size_t k, Rng& rng) {
    switch (mode) {
        case SamplingMode::Ovt: return build_epoch_plan(objects, k);
        case SamplingMode::Ros: return build_ros_plan(objects, k, rng);
        case SamplingMode::Raos: return build_raos_plan(objects, k, rng);
    }
    throw std::logic_error("unreachable sampling mode");
}

EvalContext make_eval_context(const ModelState& state, const MultiViewDataset& eval_set) {
    if (eval_set.empty()) {
        throw std::invalid_argument("make_eval_context: empty eval set");
    }
    EvalContext ctx;
    ctx.data = eval_set;
    ctx.bank = build_class_bank(eval_set.categories(), model_text_embedder(state));
    ctx.truths.reserve(eval_set.records.size());
    for (const auto& r : eval_set.records) ctx.truths.push_back(r.category);
    return ctx;
}

EpochRecord run_epoch(ModelState& state, const MultiViewDataset& multiview,
                      const MultiViewDataset& clean, const TrainConfig& cfg,
                      std::size_t epoch_index, bool update_params, const EvalContext* eval,
                      std::vector<Vec>* velocity) {
    const auto start = std::chrono::steady_clock::now();
    cfg.validate();

    // maximization: snapshot embeddings, anchors and the outlier set
    auto objects = embed_dataset_by_object(state, multiview);
    Rng plan_rng(Rng::derive_seed(cfg.seed, kPlanStream + epoch_index));
    const EpochPlan plan = build_plan_for_mode(objects, cfg.sampling_mode, cfg.k_outliers, plan_rng);

    // record index -> snapshot anchor, for members of the outlier set
    const auto groups = multiview.group_by_object();
    std::vector<const Vec*> anchor_of(multiview.records.size(), nullptr);
    for (const auto& [object_id, indices] : groups) {
        const auto& picks = plan.outliers.by_object.at(object_id);
        const Vec& anchor = plan.anchors.at(object_id);
        for (const auto& pick : picks) {
            anchor_of[indices[pick.view_index]] = &anchor;
        }
    }

    // frozen text path: embed captions once per epoch
    std::vector<Vec> mv_text(multiview.records.size());
    parallel_for(multiview.records.size(), [&](std::size_t i) {
        mv_text[i] = encode_text(multiview.records[i].caption, state);
    });
    std::vector<Vec> clean_text(clean.records.size());
    parallel_for(clean.records.size(), [&](std::size_t i) {
        clean_text[i] = encode_text(clean.records[i].caption, state);
    });

    // batch composition: clean_mix_ratio of each batch comes from the clean set
    std::size_t n_clean =
        static_cast<std::size_t>(std::llround(cfg.clean_mix_ratio * double(cfg.batch_size)));
    if (clean.records.empty()) n_clean = 0;
    if (n_clean >= cfg.batch_size && !multiview.records.empty()) {
        throw std::invalid_argument(
            "clean_mix_ratio leaves no multi-view slots in a batch of size " +
            std::to_string(cfg.batch_size));
    }
    const std::size_t n_mv = cfg.batch_size - n_clean;

    Rng shuffle_rng(Rng::derive_seed(cfg.seed, kShuffleStream + epoch_index));
    std::vector<std::size_t> mv_order(multiview.records.size());
    for (std::size_t i = 0; i < mv_order.size(); ++i) mv_order[i] = i;
    shuffle_rng.shuffle(mv_order);
    std::vector<std::size_t> clean_order(clean.records.size());
    for (std::size_t i = 0; i < clean_order.size(); ++i) clean_order[i] = i;
    shuffle_rng.shuffle(clean_order);

    double sum_itc = 0.0, sum_vc = 0.0, sum_total = 0.0;
    std::size_t batches = 0;
    std::size_t clean_cursor = 0;

    for (std::size_t begin = 0; begin < mv_order.size(); begin += n_mv) {
        const std::size_t end = std::min(begin + n_mv, mv_order.size());
        std::vector<BatchItem> batch;
        batch.reserve(end - begin + n_clean);
        for (std::size_t i = begin; i < end; ++i) {
            const std::size_t rec = mv_order[i];
            batch.push_back({&multiview.records[rec], mv_text[rec], anchor_of[rec]});
        }
        for (std::size_t c = 0; c < n_clean && !clean_order.empty(); ++c) {
            const std::size_t rec = clean_order[clean_cursor % clean_order.size()];
            ++clean_cursor;
            batch.push_back({&clean.records[rec], clean_text[rec], nullptr});
        }

        BatchLoss loss;
        try {
            loss = batch_loss_and_grads(state, batch, cfg.lambda, cfg.margin, cfg.margin_mode);
        } catch (const std::runtime_error& e) {
            throw std::runtime_error("epoch " + std::to_string(epoch_index) + " batch " +
                                     std::to_string(batches) + ": " + e.what());
        }
        if (!std::isfinite(loss.total)) {
            throw std::runtime_error("epoch " + std::to_string(epoch_index) + " batch " +
                                     std::to_string(batches) + ": non-finite loss");
        }
        sum_itc += loss.itc;
        sum_vc += loss.vc;
        sum_total += loss.total;
        ++batches;

        if (update_params) {
            auto p_refs = trainable_params(state);
            auto g_refs = trainable_params(state, loss.grads);
            for (std::size_t i = 0; i < p_refs.size(); ++i) {
                std::span<double> p{p_refs[i].data, p_refs[i].size};
                std::span<double> g{g_refs[i].data, g_refs[i].size};
                if (cfg.momentum != 0.0 && velocity != nullptr) {
                    Vec& v = (*velocity)[i];
                    for (std::size_t j = 0; j < v.size(); ++j) {
                        v[j] = cfg.momentum * v[j] + g[j];
                    }
                    sgd_step(p, v, cfg.learning_rate);
                } else {
                    sgd_step(p, g, cfg.learning_rate);
                }
            }
        }
    }

    // metrics of the resulting state
    auto post_objects = update_params ? embed_dataset_by_object(state, multiview)
                                      : std::move(objects);
    const InvarianceReport inv = invariance_report(post_objects, 0.0);
    const EpochPlan metric_plan = build_epoch_plan(post_objects, cfg.k_outliers);
    double outlier_sum = 0.0;
    std::size_t outlier_objects = 0;
    for (const auto& [object_id, picks] : metric_plan.outliers.by_object) {
        double s = 0.0;
        for (const auto& p : picks) s += p.distance;
        outlier_sum += mean_or_zero(s, picks.size());
        ++outlier_objects;
    }

    EpochRecord rec;
    rec.epoch = epoch_index;
    rec.itc_loss = mean_or_zero(sum_itc, batches);
    rec.vc_loss = mean_or_zero(sum_vc, batches);
    rec.total_loss = mean_or_zero(sum_total, batches);
    rec.mean_intra_object_distance = inv.mean_max_distance;
    rec.outlier_mean_distance = mean_or_zero(outlier_sum, outlier_objects);
    if (eval != nullptr) {
        Matrix eval_embeddings = embed_dataset(state, eval->data);
        rec.zero_shot_top1 =
            zero_shot_classify(eval_embeddings, eval->truths, eval->bank, {1}, state.temperature())
                .top1();
    } else {
        rec.zero_shot_top1 = std::nan("");
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rec;
}

EpochRecord run_epoch(ModelState& state, const MultiViewDataset& multiview,
                      const MultiViewDataset& clean, const TrainConfig& cfg) {
    return run_epoch(state, multiview, clean, cfg, 1, true, nullptr, nullptr);
}

FitResult fit(ModelState state, const MultiViewDataset& multiview, const MultiViewDataset& clean,
              const TrainConfig& cfg, const MultiViewDataset* eval_set) {
    cfg.validate();
    if (cfg.epochs < 1) {
        throw std::invalid_argument("fit: epochs must be >= 1");
    }
    if (multiview.empty()) {
        throw std::invalid_argument("fit: empty multi-view dataset");
    }
    if (cfg.clean_mix_ratio > 0.0 && clean.empty()) {
        throw std::invalid_argument("fit: clean_mix_ratio > 0 but the clean dataset is empty");
    }
    if (multiview.input_dim() != state.config.input_dim) {
        throw std::invalid_argument("fit: multi-view dataset dim " +
                                    std::to_string(multiview.input_dim()) +
                                    " does not match model input_dim " +
                                    std::to_string(state.config.input_dim));
    }
    if (!clean.empty() && clean.input_dim() != state.config.input_dim) {
        throw std::invalid_argument("fit: clean dataset dim does not match model input_dim");
    }
    if (eval_set != nullptr && !eval_set->empty() &&
        eval_set->input_dim() != state.config.input_dim) {
        throw std::invalid_argument("fit: eval dataset dim does not match model input_dim");
    }
    if (state.adapters.empty() || state.adapters[0].rank != cfg.lora_rank) {
        throw std::invalid_argument("fit: model was built with a different lora_rank");
    }
    // the config is authoritative for the knobs the model state mirrors
    state.alpha = cfg.alpha;
    state.train_temperature = cfg.train_temperature;

    EvalContext eval_ctx;
    const EvalContext* eval = nullptr;
    if (eval_set != nullptr && !eval_set->empty()) {
        eval_ctx = make_eval_context(state, *eval_set);
        eval = &eval_ctx;
    }

    std::vector<Vec> velocity;
    for (const auto& ref : trainable_params(state)) {
        velocity.emplace_back(ref.size, 0.0);
    }

    FitResult result;
    result.log.records.push_back(
        run_epoch(state, multiview, clean, cfg, 0, /*update_params=*/false, eval, &velocity));
    for (std::size_t e = 1; e <= cfg.epochs; ++e) {
        result.log.records.push_back(
            run_epoch(state, multiview, clean, cfg, e, /*update_params=*/true, eval, &velocity));
    }
    result.state = std::move(state);
    return result;
}

}  // namespace ovt
