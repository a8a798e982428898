#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ovt/config.hpp"

using nlohmann::json;
using ovt::ExperimentConfig;

TEST_CASE("empty config resolves to the default experiment") {
    auto cfg = ExperimentConfig::from_json(json::object());
    CHECK(cfg.seed == 42);
    CHECK(cfg.gen.num_categories == 10);
    CHECK(cfg.gen.objects_per_category == 5);
    CHECK(cfg.gen.views_per_object == 20);
    CHECK(cfg.gen.input_dim == 16);
    CHECK(cfg.model.embed_dim == 16);
    CHECK(cfg.model.input_dim == 16);
    CHECK(cfg.train.lambda == 1.0);
    CHECK(cfg.train.alpha == 0.1);
    CHECK(cfg.train.k_outliers == 5);
    CHECK(cfg.train.lora_rank == 8);
    CHECK(cfg.train.epochs == 30);
    CHECK(cfg.pretrained_base);
    // section seeds derive deterministically from the master seed
    auto again = ExperimentConfig::from_json(json::object());
    CHECK(cfg.gen.seed == again.gen.seed);
    CHECK(cfg.train.seed == again.train.seed);
    CHECK(cfg.model_seed == again.model_seed);
    CHECK(cfg.gen.seed != cfg.train.seed);
}

TEST_CASE("unknown keys are rejected by name") {
    CHECK_THROWS_WITH_AS(ExperimentConfig::from_json(json::parse(R"({"bogus": 1})")),
                         doctest::Contains("bogus"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(
        ExperimentConfig::from_json(json::parse(R"({"train": {"learning_rte": 0.1}})")),
        doctest::Contains("train.learning_rte"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(ExperimentConfig::from_json(json::parse(R"({"gen": {"sigma": 0.1}})")),
                         doctest::Contains("gen.sigma"), std::invalid_argument);
}

TEST_CASE("set overrides apply by dotted path and are validated") {
    auto cfg = ExperimentConfig::load("", {"train.epochs=3", "gen.num_categories=4",
                                           "model.architecture=linear", "train.lambda=0.5"},
                                      std::nullopt, std::nullopt);
    CHECK(cfg.train.epochs == 3);
    CHECK(cfg.gen.num_categories == 4);
    CHECK(cfg.train.lambda == 0.5);

    CHECK_THROWS_WITH_AS(
        ExperimentConfig::load("", {"train.bogus_knob=1"}, std::nullopt, std::nullopt),
        doctest::Contains("bogus_knob"), std::invalid_argument);
    CHECK_THROWS_AS(ExperimentConfig::load("", {"no_equals_sign"}, std::nullopt, std::nullopt),
                    std::invalid_argument);
}

TEST_CASE("seed override re-derives section seeds") {
    auto base = ExperimentConfig::load("", {}, std::nullopt, std::nullopt);
    auto reseeded = ExperimentConfig::load("", {}, 7, std::nullopt);
    CHECK(reseeded.seed == 7);
    CHECK(reseeded.gen.seed != base.gen.seed);

    // an explicit section seed in the overrides is also replaced by --seed
    auto forced = ExperimentConfig::load("", {"gen.seed=123"}, 7, std::nullopt);
    CHECK(forced.gen.seed != 123);
    CHECK(forced.gen.seed == reseeded.gen.seed);

    auto kept = ExperimentConfig::load("", {"gen.seed=123"}, std::nullopt, std::nullopt);
    CHECK(kept.gen.seed == 123);
}

TEST_CASE("config files load and invalid values are caught") {
    namespace fs = std::filesystem;
    auto path = fs::temp_directory_path() / "ovt_cfg_test.json";
    {
        std::ofstream out(path);
        out << R"({"seed": 9, "train": {"epochs": 2, "margin_mode": "hinge"}})";
    }
    auto cfg = ExperimentConfig::load(path.string(), {}, std::nullopt, std::string("odir"));
    CHECK(cfg.seed == 9);
    CHECK(cfg.train.epochs == 2);
    CHECK(cfg.train.margin_mode == ovt::MarginMode::Hinge);
    CHECK(cfg.out_dir == "odir");
    fs::remove(path);

    CHECK_THROWS_AS(ExperimentConfig::load("/nonexistent/cfg.json", {}, std::nullopt, std::nullopt),
                    std::runtime_error);
    CHECK_THROWS_WITH_AS(
        ExperimentConfig::from_json(json::parse(R"({"train": {"margin_mode": "weird"}})")),
        doctest::Contains("margin_mode"), std::invalid_argument);
    CHECK_THROWS_AS(ExperimentConfig::from_json(json::parse(R"({"train": {"alpha": 3.0}})")),
                    std::invalid_argument);
    CHECK_THROWS_AS(ExperimentConfig::from_json(json::parse(R"({"eval": {"betas": [2.0]}})")),
                    std::invalid_argument);
}

TEST_CASE("config round trips through json") {
    auto cfg = ExperimentConfig::load("", {"train.epochs=4", "gen.input_dim=8"}, 3, std::nullopt);
    auto back = ExperimentConfig::from_json(cfg.to_json());
    CHECK(back.train.epochs == 4);
    CHECK(back.gen.input_dim == 8);
    CHECK(back.model.input_dim == 8);
    CHECK(back.seed == 3);
    CHECK(back.gen.seed == cfg.gen.seed);
    CHECK(back.to_json() == cfg.to_json());
}
