#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "bundleseg/bundles.hpp"
#include "bundleseg/csv.hpp"
#include "bundleseg/error.hpp"
#include "bundleseg/metrics.hpp"
#include "bundleseg/nifti_io.hpp"
#include "bundleseg/phantom.hpp"
#include "bundleseg/tractometry.hpp"
#include "cohort.hpp"
#include "json.hpp"
#include "report.hpp"

namespace bundleseg::cli {
namespace {

using nlohmann::json;

fs::path output_root(const PipelineConfig& cfg) {
  if (cfg.paths.output_root.empty()) throw Error(ErrorKind::config, "output root is not set");
  fs::path root(cfg.paths.output_root);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec || !fs::is_directory(root)) throw Error(ErrorKind::io, "cannot create output root " + root.string());
  return root;
}

fs::path data_root(const PipelineConfig& cfg) {
  fs::path root(cfg.paths.data_root);
  require_directory(root, "data root");
  return root;
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::format, path.string() + ": " + e.what());
  }
}

void copy_streamlines(const fs::path& from, const fs::path& to) {
  if (!fs::is_directory(from / kStreamlineDir)) return;
  fs::create_directories(to / kStreamlineDir);
  fs::copy(from / kStreamlineDir, to / kStreamlineDir,
           fs::copy_options::recursive | fs::copy_options::overwrite_existing);
}

void save_predictions(const std::map<std::string, BundleMaskSet>& preds, const fs::path& dir) {
  for (const auto& [id, masks] : preds) {
    fs::create_directories(dir / id);
    save_volume(masks, dir / id / kBundlesFile);
  }
}

std::vector<std::string> read_channel_names(const fs::path& path) {
  try {
    return read_json(path).get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::format, path.string() + ": " + e.what());
  }
}

// Ordered union of channel names over a cohort.
std::vector<std::string> cohort_bundles(const std::map<std::string, BundleMaskSet>& sets) {
  std::vector<std::string> out;
  for (const auto& [id, m] : sets) {
    for (const auto& name : m.channels) {
      if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
    }
  }
  return out;
}

}  // namespace

void persist_config(const PipelineConfig& cfg, const std::string& command) {
  save_config(cfg, output_root(cfg) / ("config." + command + ".ini"));
}

void generate_phantom(const PipelineConfig& cfg, std::ostream& log) {
  const auto& p = cfg.phantom;
  if (p.n_subjects < 1) throw Error(ErrorKind::invalid_argument, "phantom cohort needs at least one subject");
  const fs::path root = output_root(cfg);
  const phantom::PhantomSpec base =
      p.layout == "expert16" ? phantom::expert16_spec(p.seed) : phantom::default_spec(p.seed);
  phantom::CohortOptions opts;
  opts.n_subjects = p.n_subjects;
  opts.seed = p.seed;
  if (!p.drop_bundle.empty()) {
    const bool known = std::any_of(base.bundles.begin(), base.bundles.end(),
                                   [&](const phantom::TubeBundle& b) { return b.name == p.drop_bundle; });
    if (!known) throw Error(ErrorKind::config, "phantom has no bundle named '" + p.drop_bundle + "'");
    opts.drop_probability[p.drop_bundle] = p.drop_probability;
  }
  const auto cohort = phantom::generate_cohort(base, opts);
  json manifest;
  manifest["layout"] = p.layout;
  manifest["seed"] = p.seed;
  manifest["subjects"] = json::array();
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const auto& m = cohort[i];
    const fs::path dir = root / m.record.subject_id;
    save_subject(m.record, dir);
    json entry{{"id", m.record.subject_id}, {"missing", json::array()}};
    for (int c = 0; c < m.record.masks.channel_count(); ++c) {
      if (!m.record.masks.valid[c]) entry["missing"].push_back(m.record.masks.channels[c]);
    }
    if (p.streamlines > 0) {
      fs::create_directories(dir / kStreamlineDir);
      for (const auto& b : m.spec.bundles) {
        write_streamlines(dir / kStreamlineDir / (b.name + ".txt"),
                          phantom::generate_streamlines(m.spec, b.name, p.streamlines, 0.5, p.seed + 1000 + i));
      }
    }
    manifest["subjects"].push_back(entry);
    log << m.record.subject_id << '\t' << (dir / kPeaksFile).string() << '\t' << (dir / kBundlesFile).string()
        << '\n';
  }
  write_json(root / "manifest.json", manifest);
  persist_config(cfg, "generate-phantom");
}

void preprocess(const PipelineConfig& cfg, std::ostream& log) {
  const fs::path in = data_root(cfg);
  const fs::path out = output_root(cfg);
  const auto ids = list_subjects(in, kPeaksFile);
  if (ids.empty()) throw Error(ErrorKind::data, "no subjects with " + std::string(kPeaksFile) + " under " + in.string());
  for (const auto& id : ids) {
    const PeakVolume peaks = load_peaks(in / id / kPeaksFile);
    BundleMaskSet masks = fs::exists(in / id / kBundlesFile) ? load_masks(in / id / kBundlesFile)
                                                              : BundleMaskSet(peaks.grid, {});
    const SubjectRecord s =
        preprocess_subject(id, peaks, masks, cfg.preprocess.voxel_size, cfg.preprocess.threshold);
    save_subject(s, out / id);
    copy_streamlines(in / id, out / id);
    const auto& sh = s.peaks.grid.shape;
    log << id << '\t' << sh[0] << 'x' << sh[1] << 'x' << sh[2] << '\n';
  }
  persist_config(cfg, "preprocess");
}

CrossValidationResult train(PipelineConfig cfg, std::ostream& log) {
  const fs::path in = data_root(cfg);
  const auto ids = list_subjects(in, kPeaksFile);
  if (ids.empty()) throw Error(ErrorKind::data, "no subjects under " + in.string());
  if (static_cast<int>(ids.size()) < cfg.training.k) {
    throw Error(ErrorKind::config, "need at least k=" + std::to_string(cfg.training.k) + " subjects, found " +
                                       std::to_string(ids.size()));
  }
  std::vector<SubjectRecord> subjects;
  for (const auto& id : ids) {
    subjects.push_back(load_subject(in / id, id, cfg.preprocess.threshold));
    const auto& vs = subjects.back().peaks.grid.voxel_size;
    for (double v : vs) {
      if (std::abs(v - cfg.preprocess.voxel_size) > 1e-3) {
        throw Error(ErrorKind::data, "subject " + id + " is not on the " + std::to_string(cfg.preprocess.voxel_size) +
                                         " mm grid; run preprocess first");
      }
    }
  }
  const auto& names = subjects.front().masks.channels;
  if (cfg.model.out_channels == 0) cfg.model.out_channels = static_cast<int>(names.size());
  if (cfg.model.out_channels != static_cast<int>(names.size())) {
    throw Error(ErrorKind::config, "model.out_channels=" + std::to_string(cfg.model.out_channels) +
                                       " but the cohort has " + std::to_string(names.size()) + " bundles");
  }
  const fs::path out = output_root(cfg);
  persist_config(cfg, "train");
  write_json(out / "channels.json", names);

  CrossValidationOptions opts;
  opts.k = cfg.training.k;
  opts.seed = cfg.training.fold_seed;
  opts.output_dir = out;
  opts.log = [&](const std::string& line) { log << line << '\n' << std::flush; };
  auto result = run_cross_validation(subjects, cfg.model, cfg.training.hyper, opts);
  save_predictions(result.predictions, out / "predictions");

  std::vector<const SubjectRecord*> refs;
  std::vector<BundleMaskSet> preds;
  for (const auto& s : subjects) {
    refs.push_back(&s);
    preds.push_back(result.predictions.at(s.subject_id));
  }
  const auto md = mean_dice(refs, preds);
  json summary;
  summary["mean_dice"] = md ? json(*md) : json();
  summary["folds"] = json::array();
  for (std::size_t f = 0; f < result.records.size(); ++f) {
    const auto& r = result.records[f];
    summary["folds"].push_back({{"fold", f},
                                {"best_epoch", r.best_epoch},
                                {"stopped_epoch", r.stopped_epoch},
                                {"best_val_dice", r.best_val_dice ? json(*r.best_val_dice) : json()}});
  }
  write_json(out / "cv_summary.json", summary);
  log << "cross-validated mean dice: " << (md ? std::to_string(*md) : std::string("undefined")) << '\n';
  return result;
}

void infer(const PipelineConfig& cfg, const InferArgs& args, std::ostream& log) {
  const fs::path in = data_root(cfg);
  const fs::path out = output_root(cfg);
  const auto ids = list_subjects(in, kPeaksFile);
  if (ids.empty()) throw Error(ErrorKind::data, "no subjects under " + in.string());
  const int batch = cfg.training.hyper.batch_size;
  const double cut = cfg.training.hyper.threshold;
  std::map<std::string, BundleMaskSet> preds;

  auto run = [&](const fs::path& checkpoint, const std::vector<std::string>& names,
                 const std::vector<std::string>& subjects) {
    CheckpointInfo info;
    const ModelWeights w = load_checkpoint(checkpoint, &info);
    UNet model(info.config);
    model.load(w);
    for (const auto& id : subjects) {
      const SubjectRecord s = load_subject(in / id, id, cfg.preprocess.threshold, false);
      preds.emplace(id, infer_subject(model, s, names, batch, cut));
      log << id << '\t' << checkpoint.string() << '\n';
    }
  };

  if (!args.checkpoint.empty()) {
    const fs::path ckpt(args.checkpoint);
    std::vector<std::string> names;
    for (const fs::path& dir : {ckpt.parent_path(), ckpt.parent_path().parent_path(), out}) {
      if (fs::exists(dir / "channels.json")) {
        names = read_channel_names(dir / "channels.json");
        break;
      }
    }
    if (names.empty()) throw Error(ErrorKind::io, "no channels.json next to " + ckpt.string());
    run(ckpt, names, ids);
  } else {
    // leakage-free: each subject goes through the fold that held it out
    const FoldPlan plan = FoldPlan::load(out / "folds.json");
    const auto names = read_channel_names(out / "channels.json");
    for (const auto& id : ids) {
      if (!plan.assignments.contains(id)) {
        throw Error(ErrorKind::data, "subject " + id + " is not in the fold plan; pass --checkpoint");
      }
    }
    for (int f = 0; f < plan.k; ++f) {
      std::vector<std::string> members;
      for (const auto& id : ids) {
        if (plan.assignments.at(id) == f) members.push_back(id);
      }
      if (!members.empty()) run(out / ("fold_" + std::to_string(f)) / "checkpoint.bseg", names, members);
    }
  }
  save_predictions(preds, out / "predictions");
  persist_config(cfg, "infer");
}

void evaluate(const PipelineConfig& cfg, const EvaluateArgs& args, std::ostream& log) {
  if (args.predictions.empty()) throw Error(ErrorKind::config, "--predictions is required");
  const fs::path ref_root = data_root(cfg);
  const fs::path out = output_root(cfg);
  auto refs = load_mask_sets(ref_root);
  if (refs.empty()) throw Error(ErrorKind::data, "no reference masks under " + ref_root.string());
  for (auto& [id, m] : refs) {
    m = binarize_masks(std::move(m), cfg.preprocess.threshold);
    mark_missing_invalid(m);
  }
  const auto preds = load_mask_sets(args.predictions);
  std::map<std::string, BundleMaskSet> baseline;
  if (!args.baseline.empty()) baseline = load_mask_sets(args.baseline);

  const auto bundles = cohort_bundles(refs);
  std::vector<std::string> comparable;
  if (!args.baseline.empty()) {
    // bundles the baseline produces for every subject
    for (const auto& b : bundles) {
      const bool everywhere = !baseline.empty() && std::all_of(baseline.begin(), baseline.end(), [&](const auto& kv) {
        return kv.second.find(b) >= 0;
      });
      if (everywhere) comparable.push_back(b);
    }
  }
  const auto excl = exclusion_filter(refs, bundles, comparable, cfg.evaluation.exclusion_threshold);
  std::vector<std::string> kept;
  for (const auto& b : bundles) {
    if (!excl.cohort_excluded.contains(b) && !excl.comparison_excluded.contains(b)) kept.push_back(b);
  }

  json ex;
  ex["threshold"] = cfg.evaluation.exclusion_threshold;
  ex["subjects"] = refs.size();
  ex["missing_count"] = excl.missing_count;
  ex["cohort_excluded"] = excl.cohort_excluded;
  ex["comparison_excluded"] = excl.comparison_excluded;
  ex["evaluated"] = kept;
  ex["missing"] = json::array();
  for (const auto& [s, b] : excl.missing) ex["missing"].push_back({{"subject", s}, {"bundle", b}});
  write_json(out / "exclusions.json", ex);
  for (const auto& b : excl.cohort_excluded) {
    log << "excluded " << b << ": missing in " << excl.missing_count.at(b) << " of " << refs.size() << " subjects\n";
  }
  for (const auto& b : excl.comparison_excluded) log << "excluded " << b << ": not produced by the baseline\n";

  const auto rows = evaluate_cohort(preds, refs, kept, cfg.evaluation.adjacency_radius);
  write_comparisons_csv(out / "metrics.csv", rows);
  log << "metrics.csv: " << rows.size() << " rows\n";
  if (!args.baseline.empty()) {
    const auto base_rows = evaluate_cohort(baseline, refs, kept, cfg.evaluation.adjacency_radius);
    write_comparisons_csv(out / "baseline_metrics.csv", base_rows);
    const auto cmp = stats::compare_methods(base_rows, rows, metric_names(), cfg.evaluation.alpha, cfg.evaluation.family);
    stats::write_comparison_csv(out / "stats.csv", cmp);
    const auto significant = std::count_if(cmp.begin(), cmp.end(), [](const auto& r) { return r.significant; });
    log << "stats.csv: " << significant << " of " << cmp.size() << " tests significant\n";
  }

  if (args.shapes) {
    csv::Table t;
    t.header = {"subject", "bundle", "source", "surface_area", "volume", "mean_length", "curl"};
    auto add = [&](const std::map<std::string, BundleMaskSet>& sets, const fs::path& root, const std::string& source) {
      for (const auto& [id, m] : sets) {
        for (const auto& b : kept) {
          const fs::path file = root / id / kStreamlineDir / (b + ".txt");
          const int c = m.find(b);
          if (c < 0 || !fs::exists(file)) continue;
          const auto lines = read_streamlines(file);
          if (lines.empty()) continue;
          const BundleShape s = bundle_shape(MaskView::of(m, c), lines);
          t.rows.push_back({id, b, source, csv::format_optional(s.surface_area), csv::format_optional(s.volume),
                            csv::format_optional(s.mean_length), csv::format_optional(s.curl)});
        }
      }
    };
    add(refs, ref_root, "reference");
    add(preds, args.predictions, "prediction");
    if (!args.baseline.empty()) add(baseline, args.baseline, "baseline");
    csv::write(out / "shapes.csv", t);
    log << "shapes.csv: " << t.rows.size() << " rows\n";
  }
  persist_config(cfg, "evaluate");
}

void merge(const PipelineConfig& cfg, const MergeArgs& args, std::ostream& log) {
  const fs::path in = data_root(cfg);
  const fs::path out = output_root(cfg);
  const BundleCatalog catalog = args.rules.empty() ? default_catalog() : load_catalog(args.rules);
  const auto ids = list_subjects(in, kBundlesFile);
  if (ids.empty()) throw Error(ErrorKind::data, "no mask sets under " + in.string());
  for (const auto& id : ids) {
    const BundleMaskSet source = binarize_masks(load_masks(in / id / kBundlesFile), cfg.preprocess.threshold);
    fs::create_directories(out / id);
    if (args.expert_root.empty()) {
      const BundleMaskSet merged = merge_tractseg_masks(source, catalog.merge_rules);
      save_volume(merged, out / id / kBundlesFile);
      log << id << '\t' << merged.channel_count() << " channels\n";
    } else {
      const fs::path expert_dir = fs::path(args.expert_root) / id;
      const BundleMaskSet expert = load_masks(expert_dir / kBundlesFile);
      const BundleMaskSet all = assemble_60(expert, source, catalog);
      save_volume(all, out / id / kBundlesFile);
      for (const char* f : {kPeaksFile, kBrainFile}) {
        if (fs::exists(expert_dir / f)) fs::copy_file(expert_dir / f, out / id / f, fs::copy_options::overwrite_existing);
      }
      log << id << '\t' << all.channel_count() << " channels\n";
    }
  }
  persist_config(cfg, "merge");
}

void compare_stats(const PipelineConfig& cfg, const CompareArgs& args, std::ostream& log) {
  if (args.method_a.empty() || args.method_b.empty()) {
    throw Error(ErrorKind::config, "compare-stats needs --a and --b metric tables");
  }
  const auto a = read_comparisons_csv(args.method_a);
  const auto b = read_comparisons_csv(args.method_b);
  const auto cmp = stats::compare_methods(a, b, metric_names(), cfg.evaluation.alpha, cfg.evaluation.family);
  const fs::path path = args.out.empty() ? output_root(cfg) / "stats.csv" : fs::path(args.out);
  stats::write_comparison_csv(path, cmp);
  for (const auto& r : cmp) {
    log << r.bundle << '\t' << r.metric << '\t' << r.status << '\t'
        << (r.p_adjusted ? std::to_string(*r.p_adjusted) : std::string("-")) << (r.significant ? "\t*" : "") << '\n';
  }
  if (!cfg.paths.output_root.empty()) persist_config(cfg, "compare-stats");
}

void report(const PipelineConfig& cfg, const ReportArgs& args, std::ostream& log) {
  if (args.metrics.empty()) throw Error(ErrorKind::config, "--metrics is required");
  const fs::path out = output_root(cfg);
  const std::string& metric = cfg.report.metric;
  const auto rows = read_comparisons_csv(args.metrics);
  if (rows.empty()) throw Error(ErrorKind::data, "metrics table " + args.metrics + " is empty");
  std::vector<MaskComparison> base;
  if (!args.baseline_metrics.empty()) base = read_comparisons_csv(args.baseline_metrics);

  std::vector<std::string> order;
  for (const auto& r : rows) {
    if (std::find(order.begin(), order.end(), r.bundle) == order.end()) order.push_back(r.bundle);
  }
  std::set<std::string> starred;
  if (!args.stats.empty()) {
    const auto t = csv::read(args.stats);
    const auto cb = t.column("bundle"), cm = t.column("metric"), cp = t.column("p_adjusted");
    for (const auto& r : t.rows) {
      const auto p = csv::parse_optional(r.at(cp));
      if (r.at(cm) == metric && p && *p < cfg.evaluation.alpha) starred.insert(r.at(cb));
    }
  }
  auto series = [&](const std::vector<MaskComparison>& table, const std::string& bundle) {
    std::vector<double> v;
    for (const auto& r : table) {
      if (r.bundle != bundle) continue;
      if (auto x = metric_value(r, metric)) v.push_back(*x);
    }
    return v;
  };
  std::vector<BoxGroup> groups;
  for (const auto& b : order) {
    BoxGroup g;
    g.bundle = b;
    if (!base.empty()) g.series.push_back(series(base, b));
    g.series.push_back(series(rows, b));
    g.significant = starred.contains(b);
    groups.push_back(std::move(g));
  }
  std::vector<std::string> methods = base.empty() ? std::vector<std::string>{"model"}
                                                   : std::vector<std::string>{"baseline", "model"};
  const fs::path box = out / (metric + "_boxplot.svg");
  write_box_plot(box, methods, groups, metric, cfg.report.width);
  log << box.string() << '\n';

  if (!args.shapes.empty()) {
    const auto t = csv::read(args.shapes);
    const auto cb = t.column("bundle"), cs = t.column("source");
    std::vector<std::string> bundles;
    for (const auto& r : t.rows) {
      if (std::find(bundles.begin(), bundles.end(), r.at(cb)) == bundles.end()) bundles.push_back(r.at(cb));
    }
    if (bundles.empty()) throw Error(ErrorKind::data, "shape table " + args.shapes + " is empty");
    const auto& metrics = shape_metric_names();
    std::vector<std::vector<std::optional<double>>> cells(bundles.size(),
                                                          std::vector<std::optional<double>>(metrics.size()));
    for (std::size_t bi = 0; bi < bundles.size(); ++bi) {
      for (std::size_t mi = 0; mi < metrics.size(); ++mi) {
        const auto cm = t.column(metrics[mi]);
        std::vector<double> pred, ref;
        for (const auto& r : t.rows) {
          if (r.at(cb) != bundles[bi]) continue;
          const auto v = csv::parse_optional(r.at(cm));
          if (!v) continue;
          if (r.at(cs) == "prediction") pred.push_back(*v);
          if (r.at(cs) == "reference") ref.push_back(*v);
        }
        if (pred.size() >= 2 && ref.size() >= 2) {
          if (auto d = stats::cohens_d(pred, ref)) cells[bi][mi] = std::abs(*d);
        }
      }
    }
    const fs::path heat = out / "effect_size_heatmap.svg";
    write_heatmap(heat, bundles, metrics, cells, cfg.report.width);
    log << heat.string() << '\n';
  }
  persist_config(cfg, "report");
}

}  // namespace bundleseg::cli
