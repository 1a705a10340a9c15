#include <functional>
#include <iostream>
#include <memory>

#include "CLI11.hpp"
#include "bundleseg/error.hpp"
#include "commands.hpp"

using namespace bundleseg;
using namespace bundleseg::cli;

namespace {

// Flags are parsed into holders and copied over the config only when given,
// so a flag beats the config file, which beats the built-in default.
class Overrides {
 public:
  template <typename T, typename Field>
  CLI::Option* add(CLI::App* app, const std::string& name, Field field, const std::string& help) {
    auto holder = std::make_shared<T>();
    CLI::Option* opt = app->add_option(name, *holder, help);
    apply_.push_back([holder, opt, field](PipelineConfig& c) {
      if (opt->count() > 0) field(c) = *holder;
    });
    return opt;
  }
  void apply(PipelineConfig& c) const {
    for (const auto& f : apply_) f(c);
  }

 private:
  std::vector<std::function<void(PipelineConfig&)>> apply_;
};

#define FIELD(type, expr) [](PipelineConfig& c) -> type& { return c.expr; }

void add_model_flags(CLI::App* app, Overrides& o) {
  o.add<int>(app, "--base-width", FIELD(int, model.base_width), "channels of the first encoder block");
  o.add<int>(app, "--out-channels", FIELD(int, model.out_channels), "bundle count (0: from the data)");
  o.add<std::uint64_t>(app, "--model-seed", FIELD(std::uint64_t, model.seed), "weight initialisation seed");
}

void add_training_flags(CLI::App* app, Overrides& o) {
  o.add<int>(app, "--k", FIELD(int, training.k), "cross-validation folds");
  o.add<std::uint64_t>(app, "--fold-seed", FIELD(std::uint64_t, training.fold_seed), "fold assignment seed");
  o.add<std::uint64_t>(app, "--shuffle-seed", FIELD(std::uint64_t, training.hyper.shuffle_seed), "slice order seed");
  o.add<int>(app, "--epochs", FIELD(int, training.hyper.max_epochs), "maximum epochs");
  o.add<int>(app, "--patience", FIELD(int, training.hyper.patience), "epochs without loss improvement before stopping");
  o.add<int>(app, "--batch-size", FIELD(int, training.hyper.batch_size), "slices per batch");
  o.add<double>(app, "--lr", FIELD(double, training.hyper.learning_rate), "Adamax learning rate");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"White-matter bundle segmentation from FODF peaks"};
  app.require_subcommand(1);
  app.fallthrough();
  Overrides o;
  std::string config_path;
  app.add_option("-c,--config", config_path, "sectioned key = value configuration file");
  o.add<std::string>(&app, "--data-root", FIELD(std::string, paths.data_root), "input cohort directory");
  o.add<std::string>(&app, "--output-root", FIELD(std::string, paths.output_root), "output directory");

  auto* gen = app.add_subcommand("generate-phantom", "write a synthetic tube-bundle cohort");
  o.add<int>(gen, "-n,--subjects", FIELD(int, phantom.n_subjects), "number of subjects");
  o.add<std::uint64_t>(gen, "--seed", FIELD(std::uint64_t, phantom.seed), "generator seed");
  o.add<std::string>(gen, "--layout", FIELD(std::string, phantom.layout), "default (3 tubes) or expert16");
  o.add<std::string>(gen, "--drop-bundle", FIELD(std::string, phantom.drop_bundle), "bundle to remove at random");
  o.add<double>(gen, "--drop-probability", FIELD(double, phantom.drop_probability), "per-subject drop chance");
  o.add<int>(gen, "--streamlines", FIELD(int, phantom.streamlines), "streamlines per bundle (0: none)");

  auto* pre = app.add_subcommand("preprocess", "resample, normalise and binarise a cohort");
  o.add<double>(pre, "--voxel-size", FIELD(double, preprocess.voxel_size), "isotropic target voxel size, mm");
  o.add<double>(pre, "--threshold", FIELD(double, preprocess.threshold), "mask binarisation threshold");

  auto* tr = app.add_subcommand("train", "subject-level k-fold cross-validation");
  add_model_flags(tr, o);
  add_training_flags(tr, o);

  InferArgs infer_args;
  auto* inf = app.add_subcommand("infer", "predict bundle masks");
  inf->add_option("--checkpoint", infer_args.checkpoint, "single checkpoint; default uses each subject's fold");
  o.add<int>(inf, "--batch-size", FIELD(int, training.hyper.batch_size), "slices per batch");

  EvaluateArgs eval_args;
  auto* ev = app.add_subcommand("evaluate", "mask metrics against the references in the data root");
  ev->add_option("--predictions", eval_args.predictions, "predicted cohort directory")->required();
  ev->add_option("--baseline", eval_args.baseline, "second method to compare against");
  ev->add_flag("--shapes", eval_args.shapes, "also write shape metrics where streamlines exist");
  o.add<double>(ev, "--alpha", FIELD(double, evaluation.alpha), "FDR level");
  o.add<int>(ev, "--adjacency-radius", FIELD(int, evaluation.adjacency_radius), "adjacency shell, voxels");
  o.add<double>(ev, "--exclusion-threshold", FIELD(double, evaluation.exclusion_threshold),
                "exclude bundles missing in more than this fraction of subjects");
  std::string family;
  auto* family_opt = ev->add_option("--fdr-family", family, "per_metric or global");

  MergeArgs merge_args;
  auto* mg = app.add_subcommand("merge", "merge fine-grained baseline masks into the expert catalog");
  mg->add_option("--rules", merge_args.rules, "catalog JSON with merge rules");
  mg->add_option("--expert-root", merge_args.expert_root, "append to expert masks as a 60-channel cohort");

  CompareArgs cmp_args;
  auto* cs = app.add_subcommand("compare-stats", "paired Wilcoxon tests with BH-FDR between two metric tables");
  cs->add_option("--a", cmp_args.method_a, "metrics of method A")->required();
  cs->add_option("--b", cmp_args.method_b, "metrics of method B")->required();
  cs->add_option("--out", cmp_args.out, "output CSV");
  o.add<double>(cs, "--alpha", FIELD(double, evaluation.alpha), "FDR level");

  ReportArgs rep_args;
  auto* rp = app.add_subcommand("report", "box plots and effect-size heatmap as SVG");
  rp->add_option("--metrics", rep_args.metrics, "metrics.csv of the model")->required();
  rp->add_option("--baseline-metrics", rep_args.baseline_metrics, "metrics of the baseline");
  rp->add_option("--stats", rep_args.stats, "stats.csv for significance stars");
  rp->add_option("--shapes", rep_args.shapes, "shapes.csv for the effect-size heatmap");
  o.add<std::string>(rp, "--metric", FIELD(std::string, report.metric), "metric to plot");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << '\n';
    return 2;
  }

  try {
    PipelineConfig cfg;
    if (!config_path.empty()) apply_config(cfg, config_path);
    apply_environment(cfg);
    o.apply(cfg);
    if (family_opt->count() > 0) cfg.evaluation.family = parse_family(family);
    cfg.validate();

    if (gen->parsed()) generate_phantom(cfg, std::cout);
    if (pre->parsed()) preprocess(cfg, std::cout);
    if (tr->parsed()) train(cfg, std::cout);
    if (inf->parsed()) infer(cfg, infer_args, std::cout);
    if (ev->parsed()) evaluate(cfg, eval_args, std::cout);
    if (mg->parsed()) merge(cfg, merge_args, std::cout);
    if (cs->parsed()) compare_stats(cfg, cmp_args, std::cout);
    if (rp->parsed()) report(cfg, rep_args, std::cout);
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.kind()) << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
