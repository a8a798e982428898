#include <cstdio>
#include <exception>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ovt/commands.hpp"

namespace {

struct CommonArgs {
    std::string config;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
};

void add_common(CLI::App* sub, CommonArgs& args) {
    sub->add_option("--config", args.config, "JSON experiment config; defaults when omitted");
    sub->add_option("--set", args.sets,
                    "override one config key by dotted path, e.g. --set train.epochs=5")
        ->take_all();
    sub->add_option("--seed", args.seed,
                    "master seed; re-derives every per-section seed for the run");
    sub->add_option("--out", args.out, "output directory (overrides out_dir)");
}

ovt::ExperimentConfig resolve(const CommonArgs& args) {
    return ovt::ExperimentConfig::load(args.config, args.sets, args.seed, args.out);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "ovt: viewpoint-invariance fine-tuning lab for a dual-stream contrastive model.\n"
        "Deterministic given (config, seed). OVT_THREADS caps the embedding-pass\n"
        "parallelism (default 1; results are identical at any width).\n"
        "metrics.csv columns: epoch,itc_loss,vc_loss,total_loss,\n"
        "mean_intra_object_distance,outlier_mean_distance,zero_shot_top1,seconds"};
    app.require_subcommand(1);

    CommonArgs gen_args, train_args, eval_args, grad_args, compare_args;

    CLI::App* gen = app.add_subcommand(
        "gen", "generate multiview.jsonl, clean.jsonl and eval.jsonl into the data dir");
    add_common(gen, gen_args);

    CLI::App* train = app.add_subcommand(
        "train", "run the fine-tuning loop; writes metrics.csv and checkpoint.bin");
    add_common(train, train_args);

    CLI::App* eval = app.add_subcommand("eval", "score a checkpoint on a dataset");
    add_common(eval, eval_args);
    std::string checkpoint_path, eval_data_path, eval_report_path;
    eval->add_option("--checkpoint", checkpoint_path, "model checkpoint to score")->required();
    eval->add_option("--data", eval_data_path, "dataset to score (default: the eval split)");
    eval->add_option("--report", eval_report_path,
                     "JSON report path (default: <out_dir>/eval_report.json)");

    CLI::App* gradcheck = app.add_subcommand(
        "gradcheck", "verify analytic gradients against central finite differences");
    add_common(gradcheck, grad_args);
    bool corrupt = false;
    gradcheck->add_flag("--corrupt-gradient", corrupt, "negative control: break one entry")
        ->group("");

    CLI::App* compare = app.add_subcommand(
        "compare", "train ovt/ros/raos with identical budgets across seeds");
    add_common(compare, compare_args);
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    std::string compare_report;
    compare->add_option("--seeds", seeds, "seeds to sweep (comma separated)")
        ->delimiter(',');
    compare->add_option("--report", compare_report,
                        "CSV output path (default: <out_dir>/compare.csv)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            return ovt::cmd_gen(resolve(gen_args));
        }
        if (train->parsed()) {
            return ovt::cmd_train(resolve(train_args));
        }
        if (eval->parsed()) {
            auto cfg = resolve(eval_args);
            if (eval_data_path.empty()) eval_data_path = cfg.eval_path();
            if (eval_report_path.empty()) eval_report_path = cfg.out_dir + "/eval_report.json";
            return ovt::cmd_eval(cfg, checkpoint_path, eval_data_path, eval_report_path);
        }
        if (gradcheck->parsed()) {
            return ovt::cmd_gradcheck(resolve(grad_args), corrupt);
        }
        if (compare->parsed()) {
            auto cfg = resolve(compare_args);
            if (compare_report.empty()) compare_report = cfg.out_dir + "/compare.csv";
            return ovt::cmd_compare(cfg, seeds, compare_report);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
