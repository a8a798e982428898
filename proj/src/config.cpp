#include "ovt/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace ovt {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& section,
                const std::set<std::string>& allowed) {
    if (!j.is_object()) {
        throw std::invalid_argument("config section '" + section + "' must be an object");
    }
    for (const auto& [key, value] : j.items()) {
        if (allowed.count(key) == 0) {
            throw std::invalid_argument("unknown config key '" +
                                        (section.empty() ? key : section + "." + key) + "'");
        }
    }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    return j.at(key).get<T>();
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    check_keys(j, "", {"seed", "out_dir", "data_dir", "gen", "model", "train", "eval"});

    ExperimentConfig cfg;
    cfg.seed = get_or<std::uint64_t>(j, "seed", 42);
    cfg.out_dir = get_or<std::string>(j, "out_dir", "out");
    cfg.data_dir = get_or<std::string>(j, "data_dir", "");

    const json jg = j.contains("gen") ? j.at("gen") : json::object();
    check_keys(jg, "gen",
               {"num_categories", "objects_per_category", "views_per_object", "input_dim",
                "base_view_noise", "hard_view_fraction", "hard_view_noise", "seed",
                "clean_objects_per_category", "clean_views_per_object",
                "eval_objects_per_category", "eval_views_per_object"});
    cfg.gen.num_categories = get_or<std::size_t>(jg, "num_categories", 10);
    cfg.gen.objects_per_category = get_or<std::size_t>(jg, "objects_per_category", 5);
    cfg.gen.views_per_object = get_or<std::size_t>(jg, "views_per_object", 20);
    cfg.gen.input_dim = get_or<std::size_t>(jg, "input_dim", 16);
    cfg.gen.base_view_noise = get_or<double>(jg, "base_view_noise", 0.0125);
    cfg.gen.hard_view_fraction = get_or<double>(jg, "hard_view_fraction", 0.2);
    cfg.gen.hard_view_noise = get_or<double>(jg, "hard_view_noise", 0.15);
    cfg.gen.seed = get_or<std::uint64_t>(jg, "seed", Rng::derive_seed(cfg.seed, 11));
    cfg.clean_objects_per_category =
        get_or<std::size_t>(jg, "clean_objects_per_category", cfg.gen.objects_per_category);
    cfg.clean_views_per_object = get_or<std::size_t>(jg, "clean_views_per_object", 1);
    cfg.eval_objects_per_category =
        get_or<std::size_t>(jg, "eval_objects_per_category", cfg.gen.objects_per_category);
    cfg.eval_views_per_object = get_or<std::size_t>(jg, "eval_views_per_object", 2);

    const json jm = j.contains("model") ? j.at("model") : json::object();
    check_keys(jm, "model",
               {"embed_dim", "architecture", "token_count", "token_dim", "text_buckets",
                "temperature", "seed", "pretrained_base"});
    cfg.model.input_dim = cfg.gen.input_dim;
    cfg.model.embed_dim = get_or<std::size_t>(jm, "embed_dim", 16);
    cfg.model.architecture =
        encoder_arch_from_string(get_or<std::string>(jm, "architecture", "linear"));
    cfg.model.token_count = get_or<std::size_t>(jm, "token_count", 0);
    cfg.model.token_dim = get_or<std::size_t>(jm, "token_dim", 0);
    cfg.model.text_buckets = get_or<std::size_t>(jm, "text_buckets", 64);
    cfg.temperature = get_or<double>(jm, "temperature", 0.07);
    cfg.model_seed = get_or<std::uint64_t>(jm, "seed", Rng::derive_seed(cfg.seed, 12));
    cfg.pretrained_base = get_or<bool>(jm, "pretrained_base", true);

    const json jt = j.contains("train") ? j.at("train") : json::object();
    check_keys(jt, "train",
               {"lambda", "alpha", "k_outliers", "margin", "margin_mode", "lora_rank",
                "learning_rate", "momentum", "batch_size", "epochs", "seed", "sampling_mode",
                "train_temperature", "clean_mix_ratio", "log_timing"});
    cfg.train.lambda = get_or<double>(jt, "lambda", 1.0);
    cfg.train.alpha = get_or<double>(jt, "alpha", 0.1);
    cfg.train.k_outliers = get_or<std::size_t>(jt, "k_outliers", 5);
    cfg.train.margin = get_or<double>(jt, "margin", 0.0);
    const std::string mm = get_or<std::string>(jt, "margin_mode", "additive");
    if (mm == "additive") {
        cfg.train.margin_mode = MarginMode::Additive;
    } else if (mm == "hinge") {
        cfg.train.margin_mode = MarginMode::Hinge;
    } else {
        throw std::invalid_argument("unknown margin_mode '" + mm + "'");
    }
    cfg.train.lora_rank = get_or<std::size_t>(jt, "lora_rank", 8);
    cfg.train.learning_rate = get_or<double>(jt, "learning_rate", 0.05);
    cfg.train.momentum = get_or<double>(jt, "momentum", 0.95);
    cfg.train.batch_size = get_or<std::size_t>(jt, "batch_size", 16);
    cfg.train.epochs = get_or<std::size_t>(jt, "epochs", 30);
    cfg.train.seed = get_or<std::uint64_t>(jt, "seed", Rng::derive_seed(cfg.seed, 13));
    cfg.train.sampling_mode =
        sampling_mode_from_string(get_or<std::string>(jt, "sampling_mode", "ovt"));
    cfg.train.train_temperature = get_or<bool>(jt, "train_temperature", false);
    cfg.train.clean_mix_ratio = get_or<double>(jt, "clean_mix_ratio", 0.5);
    cfg.log_timing = get_or<bool>(jt, "log_timing", false);

    const json je = j.contains("eval") ? j.at("eval") : json::object();
    check_keys(je, "eval", {"epsilon", "betas", "top_k"});
    cfg.eval.epsilon = get_or<double>(je, "epsilon", 0.5);
    cfg.eval.betas = get_or<std::vector<double>>(je, "betas", {1.0, 0.5});
    cfg.eval.top_k = get_or<std::vector<std::size_t>>(je, "top_k", {1, 5});

    cfg.gen.validate();
    cfg.model.validate();
    cfg.train.validate();
    if (!(cfg.temperature > 0.0)) {
        throw std::invalid_argument("model.temperature must be positive");
    }
    for (double beta : cfg.eval.betas) {
        if (!(beta >= -1.0 && beta <= 1.0)) {
            throw std::invalid_argument("eval.betas entries must lie in [-1, 1]");
        }
    }
    return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path,
                                        const std::vector<std::string>& overrides,
                                        std::optional<std::uint64_t> seed_override,
                                        std::optional<std::string> out_override) {
    json j = json::object();
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) {
            throw std::runtime_error("cannot open config file: " + path);
        }
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw std::runtime_error("config file " + path + " is not valid JSON: " + e.what());
        }
    }

    for (const std::string& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
        }
        const std::string key = kv.substr(0, eq);
        const std::string raw = kv.substr(eq + 1);
        json value;
        try {
            value = json::parse(raw);
        } catch (const json::exception&) {
            value = raw;  // bare strings are fine unquoted
        }
        // dotted path into nested objects
        json* node = &j;
        std::size_t begin = 0;
        while (true) {
            const auto dot = key.find('.', begin);
            const std::string part = key.substr(begin, dot - begin);
            if (part.empty()) {
                throw std::invalid_argument("--set has an empty path segment in '" + key + "'");
            }
            if (dot == std::string::npos) {
                (*node)[part] = value;
                break;
            }
            node = &(*node)[part];
            begin = dot + 1;
        }
    }

    if (seed_override.has_value()) {
        j["seed"] = *seed_override;
        // a fresh top-level seed re-derives every section stream
        for (const char* section : {"gen", "model", "train"}) {
            if (j.contains(section) && j[section].is_object()) {
                j[section].erase("seed");
            }
        }
    }
    if (out_override.has_value()) {
        j["out_dir"] = *out_override;
    }
    return from_json(j);
}

nlohmann::json ExperimentConfig::to_json() const {
    json j;
    j["seed"] = seed;
    j["out_dir"] = out_dir;
    j["data_dir"] = data_dir;
    j["gen"] = {
        {"num_categories", gen.num_categories},
        {"objects_per_category", gen.objects_per_category},
        {"views_per_object", gen.views_per_object},
        {"input_dim", gen.input_dim},
        {"base_view_noise", gen.base_view_noise},
        {"hard_view_fraction", gen.hard_view_fraction},
        {"hard_view_noise", gen.hard_view_noise},
        {"seed", gen.seed},
        {"clean_objects_per_category", clean_objects_per_category},
        {"clean_views_per_object", clean_views_per_object},
        {"eval_objects_per_category", eval_objects_per_category},
        {"eval_views_per_object", eval_views_per_object},
    };
    j["model"] = {
        {"embed_dim", model.embed_dim},
        {"architecture", to_string(model.architecture)},
        {"token_count", model.token_count},
        {"token_dim", model.token_dim},
        {"text_buckets", model.text_buckets},
        {"temperature", temperature},
        {"seed", model_seed},
        {"pretrained_base", pretrained_base},
    };
    j["train"] = {
        {"lambda", train.lambda},
        {"alpha", train.alpha},
        {"k_outliers", train.k_outliers},
        {"margin", train.margin},
        {"margin_mode", train.margin_mode == MarginMode::Additive ? "additive" : "hinge"},
        {"lora_rank", train.lora_rank},
        {"learning_rate", train.learning_rate},
        {"momentum", train.momentum},
        {"batch_size", train.batch_size},
        {"epochs", train.epochs},
        {"seed", train.seed},
        {"sampling_mode", to_string(train.sampling_mode)},
        {"train_temperature", train.train_temperature},
        {"clean_mix_ratio", train.clean_mix_ratio},
        {"log_timing", log_timing},
    };
    j["eval"] = {
        {"epsilon", eval.epsilon},
        {"betas", eval.betas},
        {"top_k", eval.top_k},
    };
    return j;
}

ModelState ExperimentConfig::make_model() const {
    return ModelState::init(model, train.lora_rank, train.alpha, temperature,
                            train.train_temperature, model_seed);
}

}  // namespace ovt
