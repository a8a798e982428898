#include "ovt/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "ovt/gradcheck.hpp"

namespace ovt {

namespace {

namespace fs = std::filesystem;

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double median(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n == 0) return std::nan("");
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

ExperimentSets generate_experiment_sets(const ExperimentConfig& cfg) {
    Rng proto_rng(Rng::derive_seed(cfg.gen.seed, 1));
    Matrix prototypes =
        draw_category_prototypes(cfg.gen.num_categories, cfg.gen.input_dim, proto_rng);
    auto captioner = default_mock_captioner();

    ExperimentSets sets;
    {
        Rng rng(Rng::derive_seed(cfg.gen.seed, 2));
        sets.multiview = generate_from_prototypes(cfg.gen, prototypes, rng, captioner, "mv");
    }
    {
        GenSpec spec = cfg.gen;
        spec.objects_per_category = cfg.clean_objects_per_category;
        spec.views_per_object = cfg.clean_views_per_object;
        spec.hard_view_fraction = 0.0;
        Rng rng(Rng::derive_seed(cfg.gen.seed, 3));
        sets.clean = generate_from_prototypes(spec, prototypes, rng, captioner, "clean");
    }
    {
        GenSpec spec = cfg.gen;
        spec.objects_per_category = cfg.eval_objects_per_category;
        spec.views_per_object = cfg.eval_views_per_object;
        spec.hard_view_fraction = 0.0;
        Rng rng(Rng::derive_seed(cfg.gen.seed, 4));
        sets.eval = generate_from_prototypes(spec, prototypes, rng, captioner, "eval");
    }
    return sets;
}

ModelState prepare_model(const ExperimentConfig& cfg, const MultiViewDataset& multiview) {
    ModelState state = cfg.make_model();
    if (!cfg.pretrained_base) return state;
    if (cfg.model.architecture != EncoderArch::Linear) {
        throw std::invalid_argument(
            "the aligned pretrained base supports the linear architecture only; set "
            "model.pretrained_base=false for attention mode");
    }

    // per-category mean input and prompt features drive the aligned base
    const auto labels = multiview.categories();
    Matrix directions(labels.size(), multiview.input_dim());
    Matrix features(labels.size(), state.config.text_buckets);
    for (std::size_t c = 0; c < labels.size(); ++c) {
        Vec mean(multiview.input_dim(), 0.0);
        std::size_t count = 0;
        for (const auto& r : multiview.records) {
            if (r.category != labels[c]) continue;
            for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += r.x[i];
            ++count;
        }
        for (double& m : mean) m /= static_cast<double>(count);
        directions.set_row(c, mean);
        features.set_row(c, text_features(zero_shot_prompt(labels[c]), state.config.text_buckets));
    }
    Rng rng(Rng::derive_seed(cfg.model_seed, 99));
    install_aligned_base(state, directions, features, 0.02, rng);
    return state;
}

CompareResult run_mode_comparison(const ExperimentConfig& cfg,
                                  const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) {
        throw std::invalid_argument("compare needs at least one seed");
    }
    CompareResult result;
    const SamplingMode modes[] = {SamplingMode::Ovt, SamplingMode::Ros, SamplingMode::Raos};

    for (std::uint64_t seed : seeds) {
        ExperimentConfig run = cfg;
        run.seed = seed;
        run.gen.seed = Rng::derive_seed(seed, 11);
        run.model_seed = Rng::derive_seed(seed, 12);
        run.train.seed = Rng::derive_seed(seed, 13);
        ExperimentSets sets = generate_experiment_sets(run);
        ModelState base_model = prepare_model(run, sets.multiview);
        for (SamplingMode mode : modes) {
            TrainConfig tc = run.train;
            tc.sampling_mode = mode;
            FitResult fitted = fit(base_model, sets.multiview, sets.clean, tc, &sets.eval);
            const auto& last = fitted.log.records.back();
            result.rows.push_back({to_string(mode), seed, last.mean_intra_object_distance,
                                   last.outlier_mean_distance, last.zero_shot_top1});
        }
    }

    std::string csv =
        "mode,seed,final_intra_object_distance,final_outlier_mean_distance,final_zero_shot_top1\n";
    for (const auto& row : result.rows) {
        csv += row.mode + "," + std::to_string(row.seed) + "," + fmt(row.invariance) + "," +
               fmt(row.outlier_mean) + "," + fmt(row.zero_shot) + "\n";
    }
    for (SamplingMode mode : modes) {
        std::vector<double> inv, out, zs;
        for (const auto& row : result.rows) {
            if (row.mode == to_string(mode)) {
                inv.push_back(row.invariance);
                out.push_back(row.outlier_mean);
                zs.push_back(row.zero_shot);
            }
        }
        result.median_invariance[to_string(mode)] = median(inv);
        csv += to_string(mode) + ",median," + fmt(median(inv)) + "," + fmt(median(out)) + "," +
               fmt(median(zs)) + "\n";
    }
    result.csv = std::move(csv);
    return result;
}

int cmd_gen(const ExperimentConfig& cfg) {
    fs::create_directories(cfg.resolved_data_dir());
    ExperimentSets sets = generate_experiment_sets(cfg);
    write_jsonl(sets.multiview, cfg.multiview_path());
    write_jsonl(sets.clean, cfg.clean_path());
    write_jsonl(sets.eval, cfg.eval_path());
    std::printf("wrote %zu multi-view records to %s\n", sets.multiview.records.size(),
                cfg.multiview_path().c_str());
    std::printf("wrote %zu clean records to %s\n", sets.clean.records.size(),
                cfg.clean_path().c_str());
    std::printf("wrote %zu eval records to %s\n", sets.eval.records.size(),
                cfg.eval_path().c_str());
    return 0;
}

int cmd_train(const ExperimentConfig& cfg) {
    const MultiViewDataset multiview = read_jsonl(cfg.multiview_path());
    MultiViewDataset clean;
    if (fs::exists(cfg.clean_path())) {
        clean = read_jsonl(cfg.clean_path());
    } else if (cfg.train.clean_mix_ratio > 0.0) {
        throw std::runtime_error("clean dataset missing (" + cfg.clean_path() +
                                 ") but clean_mix_ratio > 0; run the gen command first");
    }
    MultiViewDataset eval_set;
    if (fs::exists(cfg.eval_path())) {
        eval_set = read_jsonl(cfg.eval_path());
    }

    ModelState model = prepare_model(cfg, multiview);
    std::printf("total parameters: %zu, trainable: %zu (%s)\n", model.total_parameter_count(),
                model.trainable_parameter_count(), to_string(cfg.model.architecture).c_str());

    FitResult result =
        fit(std::move(model), multiview, clean, cfg.train, eval_set.empty() ? nullptr : &eval_set);

    fs::create_directories(cfg.out_dir);
    const std::string metrics_path = cfg.out_dir + "/metrics.csv";
    const std::string checkpoint_path = cfg.out_dir + "/checkpoint.bin";
    result.log.write_csv(metrics_path, cfg.log_timing);
    save_checkpoint(result.state, checkpoint_path);
    {
        std::ofstream out(cfg.out_dir + "/config_resolved.json");
        out << cfg.to_json().dump(2) << '\n';
    }

    const auto& first = result.log.records.front();
    const auto& last = result.log.records.back();
    std::printf("epochs: %zu, metrics: %s\n", cfg.train.epochs, metrics_path.c_str());
    std::printf("intra-object max distance: %s -> %s\n",
                fmt(first.mean_intra_object_distance).c_str(),
                fmt(last.mean_intra_object_distance).c_str());
    if (!std::isnan(last.zero_shot_top1)) {
        std::printf("zero-shot top-1: %s -> %s\n", fmt(first.zero_shot_top1).c_str(),
                    fmt(last.zero_shot_top1).c_str());
    }
    std::printf("checkpoint: %s\n", checkpoint_path.c_str());
    return 0;
}

int cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint_path,
             const std::string& eval_data_path, const std::string& report_path) {
    if (!fs::exists(checkpoint_path)) {
        throw std::runtime_error("checkpoint not found: " + checkpoint_path);
    }
    const ModelState state = load_checkpoint(checkpoint_path);
    const MultiViewDataset data = read_jsonl(eval_data_path);
    if (data.empty()) {
        throw std::runtime_error("eval dataset is empty: " + eval_data_path);
    }

    nlohmann::json report;
    report["checkpoint"] = checkpoint_path;
    report["dataset"] = eval_data_path;
    report["records"] = data.records.size();

    // zero-shot classification over the dataset's own categories
    {
        const auto labels = data.categories();
        const ClassBank bank = build_class_bank(labels, model_text_embedder(state));
        std::vector<std::string> truths;
        truths.reserve(data.records.size());
        for (const auto& r : data.records) truths.push_back(r.category);
        std::vector<std::size_t> ks;
        for (std::size_t k : cfg.eval.top_k) {
            if (k >= 1 && k <= labels.size()) ks.push_back(k);
        }
        if (ks.empty()) ks.push_back(1);
        const Matrix embeddings = embed_dataset(state, data);
        const auto zs = zero_shot_classify(embeddings, truths, bank, ks, state.temperature());
        nlohmann::json jz;
        for (const auto& [k, acc] : zs.topk_accuracy) {
            jz["top" + std::to_string(k)] = acc;
        }
        report["zero_shot"] = jz;
    }

    // worst-case view disagreement per object
    {
        const auto inv = invariance_report(embed_dataset_by_object(state, data), cfg.eval.epsilon);
        report["invariance"] = {
            {"epsilon", inv.epsilon},
            {"fraction_within_epsilon", inv.fraction_within},
            {"mean_max_distance", inv.mean_max_distance},
            {"mean_pairwise_distance", inv.mean_pairwise_distance},
        };
    }

    // description accuracy of the stored captions against the labels
    {
        auto embedder = model_text_embedder(state);
        std::vector<std::string> generated, truths;
        Vec sims;
        for (const auto& r : data.records) {
            generated.push_back(r.caption);
            truths.push_back(r.category);
            sims.push_back(cosine_similarity(embedder(r.caption), embedder(r.category)));
        }
        nlohmann::json jacc;
        for (double beta : cfg.eval.betas) {
            jacc[fmt(beta)] = description_accuracy(generated, truths, embedder, beta);
        }
        const double adaptive = adaptive_threshold(sims);
        jacc["adaptive_beta"] = adaptive;
        jacc["adaptive"] = description_accuracy(generated, truths, embedder, adaptive);
        report["description_accuracy"] = jacc;
    }

    const std::string dump = report.dump(2);
    if (!report_path.empty()) {
        fs::path parent = fs::path(report_path).parent_path();
        if (!parent.empty()) fs::create_directories(parent);
        std::ofstream out(report_path);
        if (!out) {
            throw std::runtime_error("cannot write report: " + report_path);
        }
        out << dump << '\n';
    }
    std::printf("%s\n", dump.c_str());
    return 0;
}

int cmd_gradcheck(const ExperimentConfig& cfg, bool corrupt_gradient) {
    constexpr double kTolerance = 1e-4;
    struct Row {
        std::string group;
        double max_error;
    };
    std::vector<Row> rows;

    // two steps bracket the truncation/round-off tradeoff; a coordinate is as
    // good as its better estimate
    auto check = [](const std::function<double(std::span<const double>)>& f,
                    std::span<const double> params, std::span<const double> grads) {
        auto coarse = finite_difference_check(f, params, grads, 1e-3);
        auto fine = finite_difference_check(f, params, grads, 1e-4);
        GradCheckReport merged = coarse;
        merged.max_relative_error = 0.0;
        for (std::size_t i = 0; i < merged.per_parameter.size(); ++i) {
            if (fine.per_parameter[i].relative_error < merged.per_parameter[i].relative_error) {
                merged.per_parameter[i] = fine.per_parameter[i];
            }
            merged.max_relative_error =
                std::max(merged.max_relative_error, merged.per_parameter[i].relative_error);
        }
        return merged;
    };

    {  // contrastive loss on a random batch
        Rng rng(Rng::derive_seed(cfg.seed, 21));
        const std::size_t n = 4, d = 8;
        Matrix zi(n, d, rng.gaussian_vec(n * d, 0.0, 1.0));
        Matrix zt(n, d, rng.gaussian_vec(n * d, 0.0, 1.0));
        const double tau = 0.35;
        Vec params;
        params.insert(params.end(), zi.values().begin(), zi.values().end());
        params.insert(params.end(), zt.values().begin(), zt.values().end());
        params.push_back(tau);
        auto f = [n, d](std::span<const double> p) {
            ItcBatch b;
            b.image_embeddings = Matrix(n, d, Vec(p.begin(), p.begin() + n * d));
            b.text_embeddings = Matrix(n, d, Vec(p.begin() + n * d, p.begin() + 2 * n * d));
            b.temperature = p[2 * n * d];
            return itc_loss(b).loss;
        };
        auto res = itc_loss({zi, zt, tau});
        Vec grads;
        grads.insert(grads.end(), res.d_image.values().begin(), res.d_image.values().end());
        grads.insert(grads.end(), res.d_text.values().begin(), res.d_text.values().end());
        grads.push_back(res.d_temperature);
        auto report = check(f, params, grads);
        rows.push_back({"itc_loss", report.max_relative_error});
    }

    {  // consistency loss on random pairs
        Rng rng(Rng::derive_seed(cfg.seed, 22));
        VcBatch batch;
        batch.margin = cfg.train.margin;
        batch.mode = cfg.train.margin_mode;
        const std::size_t d = 6, pairs = 5;
        for (std::size_t i = 0; i < pairs; ++i) {
            batch.outliers.push_back(rng.gaussian_vec(d, 0.0, 1.0));
            batch.anchors.push_back(rng.gaussian_vec(d, 0.0, 1.0));
        }
        Vec params;
        for (const auto& z : batch.outliers) params.insert(params.end(), z.begin(), z.end());
        auto f = [&batch, d, pairs](std::span<const double> p) {
            VcBatch b = batch;
            for (std::size_t i = 0; i < pairs; ++i) {
                b.outliers[i] = Vec(p.begin() + i * d, p.begin() + (i + 1) * d);
            }
            return vc_loss(b).loss;
        };
        auto res = vc_loss(batch);
        Vec grads;
        for (const auto& g : res.d_outliers) grads.insert(grads.end(), g.begin(), g.end());
        auto report = check(f, params, grads);
        rows.push_back({"vc_loss", report.max_relative_error});
    }

    {  // full composite: encoder with adapters -> transform -> fusion -> losses
        ExperimentConfig small = cfg;
        small.gen.num_categories = 3;
        small.gen.objects_per_category = 2;
        small.gen.views_per_object = 4;
        ExperimentSets sets = generate_experiment_sets(small);
        ModelState state = small.make_model();
        state.train_temperature = true;

        auto objects = embed_dataset_by_object(state, sets.multiview);
        auto plan = build_epoch_plan(objects, 2);
        auto groups = sets.multiview.group_by_object();
        std::vector<BatchItem> batch;
        for (std::size_t g = 0; g < std::min<std::size_t>(2, groups.size()); ++g) {
            const auto& [object_id, indices] = groups[g];
            const Vec& anchor = plan.anchors.at(object_id);
            for (std::size_t r = 0; r < std::min<std::size_t>(3, indices.size()); ++r) {
                const auto& rec = sets.multiview.records[indices[r]];
                const Vec* a = nullptr;
                for (const auto& pick : plan.outliers.by_object.at(object_id)) {
                    if (pick.view_index == r) a = &anchor;
                }
                batch.push_back({&rec, encode_text(rec.caption, state), a});
            }
        }
        auto f = [&](std::span<const double> p) {
            ModelState s = state;
            unflatten_trainable(s, p);
            return batch_loss_and_grads(s, batch, cfg.train.lambda, cfg.train.margin,
                                        cfg.train.margin_mode)
                .total;
        };
        auto loss = batch_loss_and_grads(state, batch, cfg.train.lambda, cfg.train.margin,
                                         cfg.train.margin_mode);
        Vec params = flatten_trainable(state);
        struct Segment {
            std::string name;
            std::size_t begin, end;
        };
        std::vector<Segment> segments;
        Vec grads;
        for (const auto& ref : trainable_params(state, loss.grads)) {
            segments.push_back({ref.name, grads.size(), grads.size() + ref.size});
            grads.insert(grads.end(), ref.data, ref.data + ref.size);
        }
        if (corrupt_gradient && !grads.empty()) {
            grads[0] += 0.5;  // negative-control hook
        }
        auto report = check(f, params, grads);
        for (const auto& seg : segments) {
            double worst = 0.0;
            for (std::size_t i = seg.begin; i < seg.end; ++i) {
                worst = std::max(worst, report.per_parameter[i].relative_error);
            }
            rows.push_back({"composite." + seg.name, worst});
        }
    }

    bool all_pass = true;
    std::printf("%-28s %-14s %s\n", "parameter group", "max rel err", "status");
    for (const auto& row : rows) {
        const bool pass = row.max_error < kTolerance;
        all_pass = all_pass && pass;
        std::printf("%-28s %-14.3e %s\n", row.group.c_str(), row.max_error,
                    pass ? "PASS" : "FAIL");
    }
    std::printf("gradcheck %s (tolerance %.1e)\n", all_pass ? "PASS" : "FAIL", kTolerance);
    return all_pass ? 0 : 1;
}

int cmd_compare(const ExperimentConfig& cfg, const std::vector<std::uint64_t>& seeds,
                const std::string& report_path) {
    CompareResult result = run_mode_comparison(cfg, seeds);
    for (const auto& row : result.rows) {
        std::printf("mode=%-4s seed=%llu final_invariance=%s zero_shot=%s\n", row.mode.c_str(),
                    static_cast<unsigned long long>(row.seed), fmt(row.invariance).c_str(),
                    fmt(row.zero_shot).c_str());
    }
    for (const auto& [mode, med] : result.median_invariance) {
        std::printf("mode=%-4s median final_invariance=%s\n", mode.c_str(), fmt(med).c_str());
    }
    if (!report_path.empty()) {
        fs::path parent = fs::path(report_path).parent_path();
        if (!parent.empty()) fs::create_directories(parent);
        std::ofstream out(report_path, std::ios::binary);
        if (!out) {
            throw std::runtime_error("cannot write compare report: " + report_path);
        }
        out << result.csv;
        std::printf("wrote %s\n", report_path.c_str());
    }
    return 0;
}

}  // namespace ovt
