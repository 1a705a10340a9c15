// One PASS/FAIL line per acceptance criterion. Exit status is the number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "bundleseg/bundles.hpp"
#include "bundleseg/csv.hpp"
#include "bundleseg/dice_loss.hpp"
#include "bundleseg/metrics.hpp"
#include "bundleseg/nifti_io.hpp"
#include "bundleseg/phantom.hpp"
#include "bundleseg/stats.hpp"
#include "bundleseg/trainer.hpp"
#include "bundleseg/tractometry.hpp"
#include "cohort.hpp"
#include "commands.hpp"
#include "json.hpp"
#include "oracles.hpp"
#include "stat_oracles.hpp"
#include "test_util.hpp"

using namespace bundleseg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects the first few mismatches for the report line.
struct Checker {
  Outcome out;
  int failures = 0;
  void require(bool ok, const std::string& what) {
    if (ok) return;
    if (failures++ < 3) out.detail += (out.detail.empty() ? "" : "; ") + what;
    out.pass = false;
  }
  Outcome done(const std::string& summary) {
    if (out.pass) out.detail = summary;
    else if (failures > 3) out.detail += "; " + std::to_string(failures - 3) + " more";
    return out;
  }
};

bool same(const std::optional<double>& a, const std::optional<double>& b) {
  return a.has_value() == b.has_value() && (!a || *a == *b);
}

std::vector<SubjectRecord> phantom_cohort(int n, std::uint64_t seed) {
  phantom::CohortOptions opt;
  opt.n_subjects = n;
  opt.seed = seed;
  std::vector<SubjectRecord> out;
  for (auto& m : phantom::generate_cohort(phantom::default_spec(seed), opt)) out.push_back(std::move(m.record));
  return out;
}

// --- 1 -------------------------------------------------------------------
Outcome metric_oracles() {
  Checker c;
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> density(0.0, 0.6);
  const VoxelGrid g({6, 6, 6}, {1, 1, 1});
  for (int t = 0; t < 200; ++t) {
    const auto P = testutil::random_mask(g, t % 25 == 0 ? 0.0 : density(rng), rng);
    const auto G = testutil::random_mask(g, t % 40 == 1 ? 0.0 : density(rng), rng);
    const auto p = oracle::voxels_of(P), q = oracle::voxels_of(G);
    const auto mp = MaskView::of(P), mg = MaskView::of(G);
    const std::string at = " mismatch at pair " + std::to_string(t);
    c.require(same(dice(mp, mg), oracle::dice(p, q)), "dice" + at);
    c.require(same(volume_overlap(mp, mg), oracle::overlap(p, q)), "overlap" + at);
    c.require(same(volume_overreach(mp, mg), oracle::overreach(p, q)), "overreach" + at);
    c.require(same(adjacency(mp, mg), oracle::adjacency(p, q)), "adjacency" + at);
    c.require(mask_surface_area(mp) == oracle::surface_area(P), "surface area" + at);
    c.require(mask_surface_area(mg) == oracle::surface_area(G), "surface area" + at);
  }
  return c.done("200 random 6x6x6 pairs, 5 metrics exact");
}

// --- 2 -------------------------------------------------------------------
double loss_oracle(const std::vector<double>& p, const std::vector<double>& g, const std::vector<double>& m, int C) {
  const std::size_t per = p.size() / C;
  double total = 0;
  for (int c = 0; c < C; ++c) {
    double a = 0, b = 0, d = 0;
    for (std::size_t i = c * per; i < (c + 1) * per; ++i) {
      a += m[i] * p[i] * g[i];
      b += m[i] * p[i];
      d += m[i] * g[i];
    }
    total += 1.0 - (2 * a + 1e-5) / (b + d + 1e-5);
  }
  return total / C;
}

Outcome loss_gradient() {
  Checker c;
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<float> u(0.02f, 0.98f);
  std::bernoulli_distribution bit(0.4), keep(0.7);
  double worst = 0;
  for (int t = 0; t < 20; ++t) {
    Tensor pred(1, 2, 8, 8), target(1, 2, 8, 8), mask(1, 2, 8, 8), grad;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      pred.data[i] = u(rng);
      target.data[i] = bit(rng);
      mask.data[i] = keep(rng);
    }
    masked_dice_loss(pred, target, mask, &grad);
    std::vector<double> p(pred.data.begin(), pred.data.end()), g(target.data.begin(), target.data.end()),
        m(mask.data.begin(), mask.data.end());
    const double h = 1e-5;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (m[i] == 0.0) {
        c.require(grad.data[i] == 0.0f, "non-zero gradient at a masked-out voxel");
        continue;
      }
      auto up = p, dn = p;
      up[i] += h;
      dn[i] -= h;
      const double fd = (loss_oracle(up, g, m, 2) - loss_oracle(dn, g, m, 2)) / (2 * h);
      const double rel = std::abs(grad.data[i] - fd) / std::max(std::abs(fd), 1e-12);
      worst = std::max(worst, rel);
      c.require(rel <= 1e-3, "relative gradient error " + std::to_string(rel) + " in instance " + std::to_string(t));
    }
  }
  std::ostringstream s;
  s << "20 instances of 8x8x2, worst relative error " << worst << ", masked-out gradients exactly 0";
  return c.done(s.str());
}

// --- 3 -------------------------------------------------------------------
Outcome statistics() {
  Checker c;
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<int> len(1, 12), small(-3, 3);
  std::normal_distribution<double> n(0, 1);
  int compared = 0;
  for (int t = 0; t < 400; ++t) {
    const int m = len(rng);
    std::vector<double> a(m), b(m);
    for (int i = 0; i < m; ++i) {
      a[i] = t % 2 ? small(rng) : n(rng) + 0.4;
      b[i] = t % 2 ? small(rng) : n(rng);
    }
    for (auto alt : {stats::Alternative::two_sided, stats::Alternative::greater, stats::Alternative::less}) {
      const auto r = stats::wilcoxon_signed_rank(a, b, alt);
      const auto o = statoracle::enumerate_wilcoxon(a, b, alt);
      c.require(r.has_value() == o.has_value(), "definedness differs from enumeration");
      if (r && o) {
        ++compared;
        c.require(std::abs(r->p_value - *o) <= 1e-12, "exact p differs from enumeration");
        c.require(r->method == stats::TestMethod::exact, "n <= 12 not tested exactly");
      }
    }
  }
  std::uniform_int_distribution<int> plen(1, 40);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> p(plen(rng));
    for (auto& v : p) v = t % 2 ? std::pow(u(rng), 5) : u(rng);
    c.require(stats::fdr_bh(p, 0.05).rejected == statoracle::step_up(p, 0.05), "BH rejected set differs");
  }
  const std::vector<double> pos{0.3, 1.1, 2.5, 0.7, 4.2, 1.9}, zero(6, 0.0);
  const auto r6 = stats::wilcoxon_signed_rank(pos, zero);
  c.require(r6 && r6->p_value == 0.03125, "n=6 all-positive p is not 0.03125");
  return c.done(std::to_string(compared) + " exact tests match 2^n enumeration, 100 BH vectors, n=6 p = 0.03125");
}

// --- 4 -------------------------------------------------------------------
std::size_t count_nonzero(const float* v, std::size_t n) {
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) k += v[i] != 0.0f;
  return k;
}

Outcome phantom_cv() {
  Checker c;
  const auto t0 = std::chrono::steady_clock::now();
  const auto cohort = phantom_cohort(10, 7);
  const UNetConfig cfg{.out_channels = 3, .base_width = 8, .seed = 7};
  TrainHyper hyper;
  hyper.max_epochs = 20;
  hyper.batch_size = 8;
  hyper.shuffle_seed = 7;
  CrossValidationOptions opt;
  opt.k = 5;
  opt.seed = 7;
  opt.log = [](const std::string& s) { std::cerr << "  " << s << '\n'; };
  const auto res = run_cross_validation(cohort, cfg, hyper, opt);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  // leakage and coverage, checked independently of the trainer's own guard
  c.require(res.predictions.size() == cohort.size(), "not every subject was predicted");
  for (const auto& s : cohort) {
    const auto it = res.predicted_by_fold.find(s.subject_id);
    if (it == res.predicted_by_fold.end()) continue;
    const auto& trained = res.training_subjects.at(it->second);
    c.require(std::find(trained.begin(), trained.end(), s.subject_id) == trained.end(),
              s.subject_id + " predicted by a model trained on it");
  }

  double sum = 0;
  int pairs = 0;
  for (const auto& s : cohort) {
    const auto& pred = res.predictions.at(s.subject_id);
    const std::size_t nv = s.masks.grid.voxel_count();
    for (int ch = 0; ch < s.masks.channel_count(); ++ch) {
      if (!s.masks.valid[ch]) continue;
      const float* g = s.masks.channel(ch);
      const float* p = pred.channel(pred.find(s.masks.channels[ch]));
      std::size_t inter = 0;
      for (std::size_t i = 0; i < nv; ++i) inter += (g[i] != 0.0f && p[i] != 0.0f);
      const std::size_t denom = count_nonzero(g, nv) + count_nonzero(p, nv);
      if (denom == 0) continue;
      sum += 2.0 * double(inter) / double(denom);
      ++pairs;
    }
  }
  const double mean = pairs ? sum / pairs : 0.0;
  c.require(mean >= 0.80, "mean cross-validated Dice " + std::to_string(mean) + " < 0.80");
  c.require(seconds <= 20 * 60, "run took " + std::to_string(seconds) + " s");
  std::ostringstream s;
  s << "mean Dice " << mean << " over " << pairs << " pairs, no leakage, " << seconds << " s";
  return c.done(s.str());
}

// --- 5 -------------------------------------------------------------------
Outcome missing_bundles() {
  Checker c;
  testutil::TempDir dir("acc5");
  phantom::CohortOptions opt;
  opt.n_subjects = 10;
  opt.seed = 5;
  auto cohort = phantom::generate_cohort(phantom::default_spec(5), opt);
  const fs::path refs = dir.path / "refs", preds = dir.path / "preds", base = dir.path / "base";
  std::map<std::string, BundleMaskSet> pred_sets;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    auto& r = cohort[i].record;
    const int fx = r.masks.find("Fornix");
    if (i < 4) {  // 40% of the cohort
      std::fill(r.masks.channel(fx), r.masks.channel(fx) + r.masks.grid.voxel_count(), 0.0f);
      r.masks.valid[fx] = 0;
    }
    cli::save_subject(r, refs / r.subject_id);

    BundleMaskSet p = cohort[i].record.masks;
    std::fill(p.valid.begin(), p.valid.end(), 1);
    const int cc = p.find("CC_Body");
    if (i % 3 == 0) {
      std::fill(p.channel(cc), p.channel(cc) + p.grid.voxel_count(), 0.0f);  // empty prediction
    } else {
      for (std::size_t v = 0; v < p.grid.voxel_count(); v += 7) p.channel(cc)[v] = 0.0f;
    }
    fs::create_directories(preds / r.subject_id);
    save_volume(p, preds / r.subject_id / cli::kBundlesFile);
    pred_sets[r.subject_id] = p;
    fs::create_directories(base / r.subject_id);
    save_volume(cohort[i].record.masks, base / r.subject_id / cli::kBundlesFile);
  }

  cli::PipelineConfig cfg;
  cfg.paths.data_root = refs.string();
  cfg.paths.output_root = (dir.path / "eval").string();
  std::ostringstream log;
  cli::evaluate(cfg, {preds.string(), base.string(), false}, log);

  std::ifstream ex_in(dir.path / "eval" / "exclusions.json");
  const auto ex = nlohmann::json::parse(ex_in);
  const auto excluded = ex.at("cohort_excluded").get<std::set<std::string>>();
  c.require(excluded.contains("Fornix"), "Fornix missing in 4/10 subjects was not cohort-excluded");
  c.require(excluded.size() == 1, "unexpected cohort exclusions");

  // every cell must agree with the oracle on whether it is defined
  int empty_cells = 0, scanned = 0;
  const auto table = csv::read(dir.path / "eval" / "metrics.csv");
  for (const auto& row : table.rows) {
    const auto& subject = row.at(table.column("subject"));
    const auto& bundle = row.at(table.column("bundle"));
    c.require(bundle != "Fornix", "excluded bundle evaluated");
    const auto& ref = cohort.at(std::stoi(subject.substr(4)) - 1).record.masks;
    const auto& pred = pred_sets.at(subject);
    ScalarVolume pv(ref.grid), gv(ref.grid);
    std::copy_n(pred.channel(pred.find(bundle)), ref.grid.voxel_count(), pv.values.begin());
    std::copy_n(ref.channel(ref.find(bundle)), ref.grid.voxel_count(), gv.values.begin());
    const auto p = oracle::voxels_of(pv), g = oracle::voxels_of(gv);
    const std::optional<double> expected[4] = {oracle::dice(p, g), oracle::overlap(p, g), oracle::overreach(p, g),
                                                p.empty() ? std::nullopt : std::optional<double>(0.0)};
    for (int m = 0; m < 4; ++m) {
      const auto& cell = row.at(table.column(metric_names()[m]));
      ++scanned;
      if (!expected[m]) {
        ++empty_cells;
        c.require(cell.empty(), "undefined " + metric_names()[m] + " for " + subject + "/" + bundle +
                                    " written as '" + cell + "'");
      } else {
        c.require(!cell.empty(), "defined value left empty");
        if (m < 3) c.require(std::abs(std::stod(cell) - *expected[m]) < 1e-9, "metric value differs from oracle");
      }
    }
  }
  const auto st = csv::read(dir.path / "eval" / "stats.csv");
  for (const auto& row : st.rows) {
    const bool tested = row.at(st.column("status")) == "tested";
    for (const char* col : {"W", "p_raw", "p_adjusted"}) {
      ++scanned;
      const auto& cell = row.at(st.column(col));
      if (!tested) ++empty_cells;
      c.require(tested != cell.empty(), std::string(col) + " of an untested comparison is '" + cell + "'");
    }
  }
  c.require(empty_cells > 0, "scenario produced no undefined values");
  return c.done("Fornix excluded (4/10 missing); " + std::to_string(scanned) + " CSV cells scanned, " +
                std::to_string(empty_cells) + " undefined left empty");
}

// --- 6 -------------------------------------------------------------------
Outcome method_comparison() {
  Checker c;
  std::mt19937_64 rng(606);
  std::uniform_real_distribution<double> u(0.2, 0.7);
  std::vector<MaskComparison> A, B;
  const auto& bundles = default_catalog().expert_16;
  for (const auto& b : bundles)
    for (int s = 0; s < 20; ++s) {
      MaskComparison r{"s" + std::to_string(s), b, u(rng), u(rng), u(rng), u(rng)};
      A.push_back(r);
      for (auto* v : {&r.dice, &r.overlap, &r.overreach, &r.adjacency}) **v += 0.2;
      B.push_back(r);
    }
  const auto shifted = stats::compare_methods(A, B, metric_names());
  c.require(shifted.size() == bundles.size() * 4, "wrong number of tests");
  double worst = 0;
  for (const auto& r : shifted) {
    c.require(r.p_adjusted && *r.p_adjusted < 0.05 && r.significant, r.bundle + "/" + r.metric + " not significant");
    if (r.p_adjusted) worst = std::max(worst, *r.p_adjusted);
  }
  const auto same = stats::compare_methods(A, A, metric_names());
  for (const auto& r : same) c.require(!r.significant, "identical tables rejected " + r.bundle);
  std::ostringstream s;
  s << shifted.size() << " shifted tests all significant (max adjusted p " << worst << "), identical tables 0 rejections";
  return c.done(s.str());
}

// --- 7 -------------------------------------------------------------------
Outcome sixty_channels() {
  Checker c;
  const auto& cat = default_catalog();
  phantom::CohortOptions opt;
  opt.n_subjects = 2;
  opt.seed = 8;
  auto cohort = phantom::generate_cohort(phantom::expert16_spec(8), opt);
  std::mt19937_64 rng(707);
  std::vector<SubjectRecord> subjects;
  for (auto& m : cohort) {
    BundleMaskSet extra(m.record.masks.grid, cat.tractseg_44);
    std::bernoulli_distribution bit(0.02);
    for (int ch = 1; ch < extra.channel_count(); ++ch)  // the first stays empty
      for (std::size_t v = 0; v < extra.grid.voxel_count(); ++v) extra.channel(ch)[v] = bit(rng);
    SubjectRecord r = m.record;
    r.masks = assemble_60(m.record.masks, extra);
    c.require(r.masks.channel_count() == 60, "assembled set does not have 60 channels");
    c.require(r.masks.channels == cat.merged_catalog_60(), "assembled channel order is wrong");
    c.require(!r.masks.valid[16], "empty appended channel still valid");
    subjects.push_back(std::move(r));
  }
  TrainHyper hyper;
  hyper.max_epochs = 1;
  hyper.batch_size = 8;
  const UNetConfig cfg{.out_channels = 60, .base_width = 8, .seed = 1};
  const auto res = train_fold({&subjects[0]}, {&subjects[1]}, cfg, hyper);
  c.require(res.record.train_loss.size() == 1 && std::isfinite(res.record.train_loss[0]), "epoch did not complete");
  UNet model(cfg);
  model.load(res.best_weights);
  const auto& g = subjects[0].peaks.grid;
  Tensor batch(4, 9, g.shape[1], g.shape[0]);
  const auto out = model.forward(batch, Mode::eval);
  c.require(out.batch == 4 && out.channels == 60 && out.height == g.shape[1] && out.width == g.shape[0],
            "output shape is not 4x64x64x60");
  return c.done("60 ordered channels, one epoch at loss " + std::to_string(res.record.train_loss[0]) +
                ", output 4x" + std::to_string(out.height) + "x" + std::to_string(out.width) + "x60");
}

// --- 8 -------------------------------------------------------------------
Outcome determinism() {
  Checker c;
  testutil::TempDir dir("acc8");
  const auto cohort = phantom_cohort(10, 9);
  TrainHyper hyper;
  hyper.max_epochs = 2;
  hyper.batch_size = 8;
  hyper.shuffle_seed = 9;
  const UNetConfig cfg{.out_channels = 3, .base_width = 8, .seed = 9};
  std::vector<CrossValidationResult> runs;
  for (const char* name : {"a", "b"}) {
    CrossValidationOptions opt;
    opt.k = 5;
    opt.seed = 9;
    opt.output_dir = dir.path / name;
    runs.push_back(run_cross_validation(cohort, cfg, hyper, opt));
  }
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  c.require(slurp(dir.path / "a" / "folds.json") == slurp(dir.path / "b" / "folds.json"), "folds.json differs");
  c.require(!slurp(dir.path / "a" / "folds.json").empty(), "folds.json not written");
  double worst = 0;
  int epochs = 0;
  for (int f = 0; f < 5; ++f) {
    const auto& la = runs[0].records[f].train_loss;
    const auto& lb = runs[1].records[f].train_loss;
    c.require(la.size() == lb.size(), "loss sequence lengths differ");
    for (std::size_t e = 0; e < std::min(la.size(), lb.size()); ++e) {
      worst = std::max(worst, std::abs(la[e] - lb[e]));
      ++epochs;
    }
  }
  c.require(worst <= 1e-6, "train losses differ by " + std::to_string(worst));
  std::ostringstream s;
  s << "identical folds.json, " << epochs << " epoch losses, max difference " << worst;
  return c.done(s.str());
}

// --- 9 -------------------------------------------------------------------
Outcome shape_metrics() {
  Checker c;
  const auto straight = streamline_curl({{{0, 0, 0}, {1, 2, 3}, {2, 4, 6}, {5, 10, 15}}});
  c.require(straight && *straight == 1.0, "straight-line curl is not exactly 1");
  Streamline semi;
  for (int i = 0; i < 100; ++i) {
    const double t = std::numbers::pi * i / 99;
    semi.points.push_back({10 * std::cos(t), 10 * std::sin(t), 0});
  }
  const auto curl = streamline_curl(semi);
  const double rel = curl ? std::abs(*curl - std::numbers::pi / 2) / (std::numbers::pi / 2) : 1.0;
  c.require(rel < 0.01, "semicircle curl off by " + std::to_string(rel));
  for (const Vec3& vs : {Vec3{1, 1, 1}, Vec3{0.78, 0.78, 2.22}, Vec3{0.5, 2, 3}}) {
    ScalarVolume v(VoxelGrid({3, 3, 3}, vs));
    v.at(1, 1, 1) = 1;
    const double expected = 2 * (vs[0] * vs[1] + vs[1] * vs[2] + vs[0] * vs[2]);
    c.require(mask_surface_area(MaskView::of(v)) == expected, "single-voxel area wrong");
  }
  c.require(mask_surface_area(MaskView::of([] {
              ScalarVolume v(VoxelGrid({1, 1, 1}, {1, 1, 1}), 1.0f);
              return v;
            }())) == 6.0,
            "voxel on the grid boundary");
  std::ostringstream s;
  s << "straight curl 1, semicircle relative error " << rel << ", single voxel area 6 face areas";
  return c.done(s.str());
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"metric oracle suite", metric_oracles},
      {"loss gradient", loss_gradient},
      {"statistics", statistics},
      {"phantom cross-validation", phantom_cv},
      {"missing-bundle handling", missing_bundles},
      {"method comparison", method_comparison},
      {"60-channel assembly", sixty_channels},
      {"determinism", determinism},
      {"shape metrics", shape_metrics},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::printf("%s %zu %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str(), s);
    std::fflush(stdout);
  }
  return failed;
}
