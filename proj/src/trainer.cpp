#include "bundleseg/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "bundleseg/csv.hpp"
#include "bundleseg/dice_loss.hpp"
#include "bundleseg/error.hpp"
#include "bundleseg/metrics.hpp"
#include "json.hpp"

namespace bundleseg {
namespace {

int padded(int n) { return (n + kSpatialMultiple - 1) / kSpatialMultiple * kSpatialMultiple; }

// Copies a channel-major slice into sample `n` of a channel-major batch,
// offset by the zero padding.
void place(const Slice2D& s, Tensor& t, int n, int top, int left) {
  for (int c = 0; c < s.channels; ++c) {
    for (int y = 0; y < s.height; ++y) {
      const float* src = &s.data[(static_cast<std::size_t>(c) * s.height + y) * s.width];
      std::copy(src, src + s.width, &t.at(n, c, y + top, left));
    }
  }
}

const std::vector<std::string>& channel_names_of(const std::vector<const SubjectRecord*>& subjects) {
  const auto& names = subjects.front()->masks.channels;
  for (const auto* s : subjects) {
    if (s->masks.channels != names) {
      throw Error(ErrorKind::data, "subject " + s->subject_id + " has a different bundle channel list");
    }
  }
  return names;
}

}  // namespace

std::vector<std::string> FoldPlan::members(int fold) const {
  std::vector<std::string> out;
  for (const auto& [id, f] : assignments) {
    if (f == fold) out.push_back(id);
  }
  return out;
}

std::vector<std::string> FoldPlan::complement(int fold) const {
  std::vector<std::string> out;
  for (const auto& [id, f] : assignments) {
    if (f != fold) out.push_back(id);
  }
  return out;
}

void FoldPlan::save(const std::filesystem::path& json_path) const {
  nlohmann::json doc;
  doc["seed"] = seed;
  doc["k"] = k;
  auto& folds = doc["folds"] = nlohmann::json::array();
  for (int f = 0; f < k; ++f) folds.push_back(members(f));
  if (json_path.has_parent_path()) std::filesystem::create_directories(json_path.parent_path());
  std::ofstream out(json_path);
  if (!out) throw Error(ErrorKind::io, "cannot write " + json_path.string());
  out << doc.dump(2) << '\n';
}

FoldPlan FoldPlan::load(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + json_path.string());
  FoldPlan plan;
  try {
    nlohmann::json doc;
    in >> doc;
    plan.seed = doc.at("seed").get<std::uint64_t>();
    plan.k = doc.at("k").get<int>();
    const auto& folds = doc.at("folds");
    for (int f = 0; f < static_cast<int>(folds.size()); ++f) {
      for (const auto& id : folds[f]) plan.assignments[id.get<std::string>()] = f;
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::format, json_path.string() + ": " + e.what());
  }
  return plan;
}

FoldPlan make_folds(std::vector<std::string> subject_ids, int k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorKind::invalid_argument, "cross-validation needs k >= 2");
  if (static_cast<int>(subject_ids.size()) < k) {
    throw Error(ErrorKind::invalid_argument, "need at least k=" + std::to_string(k) + " subjects, got " +
                                                 std::to_string(subject_ids.size()));
  }
  std::sort(subject_ids.begin(), subject_ids.end());
  if (std::adjacent_find(subject_ids.begin(), subject_ids.end()) != subject_ids.end()) {
    throw Error(ErrorKind::invalid_argument, "duplicate subject ids");
  }
  // Explicit Fisher-Yates so the plan does not depend on the standard library's shuffle.
  std::mt19937_64 rng(seed);
  for (std::size_t i = subject_ids.size() - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(subject_ids[i], subject_ids[j]);
  }
  FoldPlan plan;
  plan.seed = seed;
  plan.k = k;
  for (std::size_t i = 0; i < subject_ids.size(); ++i) {
    plan.assignments[subject_ids[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  }
  return plan;
}

bool EarlyStopping::update(int epoch, double loss) {
  if (!has_best_ || loss < best_ - min_delta_) {
    best_ = loss;
    has_best_ = true;
    last_improvement_ = epoch;
    return false;
  }
  return epoch - last_improvement_ >= patience_;
}

BundleMaskSet infer_subject(UNet& model, const SubjectRecord& subject,
                            const std::vector<std::string>& channel_names, int batch_size,
                            double threshold) {
  const auto& cfg = model.config();
  if (static_cast<int>(channel_names.size()) != cfg.out_channels) {
    throw Error(ErrorKind::shape_mismatch, "model has " + std::to_string(cfg.out_channels) +
                                               " outputs but " + std::to_string(channel_names.size()) +
                                               " channel names were given");
  }
  if (cfg.in_channels != kPeakChannels) {
    throw Error(ErrorKind::shape_mismatch, "model input width is not the 9 peak channels");
  }
  const VoxelGrid& g = subject.peaks.grid;
  const int nx = g.shape[0], ny = g.shape[1], nz = g.shape[2];
  const int H = padded(ny), W = padded(nx);
  const int top = (H - ny) / 2, left = (W - nx) / 2;
  const std::size_t plane = static_cast<std::size_t>(nx) * ny;

  BundleMaskSet out(g, channel_names);
  out.validate();
  const float cut = static_cast<float>(threshold);
  // the loss never sees voxels outside the brain, so predictions there carry no information
  const float* brain = subject.brain_mask.values.size() == g.voxel_count() ? subject.brain_mask.values.data() : nullptr;
  batch_size = std::max(1, batch_size);
  for (int k0 = 0; k0 < nz; k0 += batch_size) {
    const int count = std::min(batch_size, nz - k0);
    Tensor x(count, kPeakChannels, H, W);
    for (int n = 0; n < count; ++n) {
      const std::size_t base = static_cast<std::size_t>(k0 + n) * plane;
      for (int c = 0; c < kPeakChannels; ++c) {
        const float* src = subject.peaks.channel(c) + base;
        for (int y = 0; y < ny; ++y) {
          for (int xx = 0; xx < nx; ++xx) {
            const float v = src[static_cast<std::size_t>(y) * nx + xx];
            x.at(n, c, y + top, xx + left) = std::isnan(v) ? 0.0f : v;
          }
        }
      }
    }
    const Tensor prob = model.forward(x, Mode::eval);
    for (int n = 0; n < count; ++n) {
      const std::size_t base = static_cast<std::size_t>(k0 + n) * plane;
      for (int c = 0; c < cfg.out_channels; ++c) {
        float* dst = out.channel(c) + base;
        for (int y = 0; y < ny; ++y) {
          for (int xx = 0; xx < nx; ++xx) {
            const std::size_t v = static_cast<std::size_t>(y) * nx + xx;
            const bool inside = !brain || brain[base + v] > 0.0f;
            dst[v] = inside && prob.at(n, c, y + top, xx + left) >= cut ? 1.0f : 0.0f;
          }
        }
      }
    }
  }
  return out;
}

std::optional<double> mean_dice(const std::vector<const SubjectRecord*>& subjects,
                                const std::vector<BundleMaskSet>& predictions) {
  double sum = 0.0;
  int n = 0;
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    const auto& ref = subjects[s]->masks;
    for (int c = 0; c < ref.channel_count(); ++c) {
      if (!ref.valid[c]) continue;
      const int pc = predictions[s].find(ref.channels[c]);
      if (pc < 0) continue;
      if (auto d = dice(MaskView::of(predictions[s], pc), MaskView::of(ref, c))) {
        sum += *d;
        ++n;
      }
    }
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

TrainResult train_fold(const std::vector<const SubjectRecord*>& train,
                       const std::vector<const SubjectRecord*>& val, const UNetConfig& config,
                       const TrainHyper& hyper, const TrainCallbacks& callbacks) {
  if (train.empty()) throw Error(ErrorKind::invalid_argument, "no training subjects");
  std::set<std::string> train_ids;
  for (const auto* s : train) train_ids.insert(s->subject_id);
  for (const auto* s : val) {
    if (train_ids.contains(s->subject_id)) {
      throw Error(ErrorKind::invalid_argument, "subject " + s->subject_id + " is in both training and validation");
    }
  }
  if (hyper.max_epochs < 1 || hyper.batch_size < 1 || hyper.patience < 1) {
    throw Error(ErrorKind::config, "max_epochs, batch_size and patience must be >= 1");
  }
  std::vector<const SubjectRecord*> all = train;
  all.insert(all.end(), val.begin(), val.end());
  const auto& names = channel_names_of(all);
  if (static_cast<int>(names.size()) != config.out_channels) {
    throw Error(ErrorKind::config, "model out_channels=" + std::to_string(config.out_channels) +
                                       " but subjects carry " + std::to_string(names.size()) + " bundles");
  }

  std::vector<SliceSample> samples;
  for (const auto* s : train) {
    for (auto& slice : extract_slices(*s)) {
      if (slice.used_in_training) samples.push_back(std::move(slice));
    }
  }
  if (samples.empty()) throw Error(ErrorKind::data, "no training-eligible slices (all targets empty)");
  const int sh = samples.front().input.height, sw = samples.front().input.width;
  for (const auto& s : samples) {
    if (s.input.height != sh || s.input.width != sw) {
      throw Error(ErrorKind::shape_mismatch, "training subjects have different in-plane sizes");
    }
  }
  const int H = padded(sh), W = padded(sw);
  const int top = (H - sh) / 2, left = (W - sw) / 2;
  const int C = config.out_channels;

  UNet model(config);
  Adamax optimizer(hyper.learning_rate);
  std::mt19937_64 rng(hyper.shuffle_seed);
  EarlyStopping stopper(hyper.patience, hyper.min_improvement);
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult result;
  TrainRecord& rec = result.record;
  double best_dice = -1.0;
  for (int epoch = 1; epoch <= hyper.max_epochs; ++epoch) {
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      std::swap(order[i], order[static_cast<std::size_t>(rng() % (i + 1))]);
    }
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(hyper.batch_size)) {
      const int count = static_cast<int>(std::min<std::size_t>(hyper.batch_size, order.size() - b0));
      Tensor x(count, kPeakChannels, H, W), target(count, C, H, W), mask(count, C, H, W);
      for (int n = 0; n < count; ++n) {
        const SliceSample& s = samples[order[b0 + n]];
        place(s.input, x, n, top, left);
        place(s.target, target, n, top, left);
        place(s.loss_mask, mask, n, top, left);
      }
      const Tensor prob = model.forward(x, Mode::train);
      Tensor grad;
      loss_sum += masked_dice_loss(prob, target, mask, &grad);
      ++batches;
      model.backward(grad);
      optimizer.step(model.parameters());
    }
    const double epoch_loss = loss_sum / batches;
    rec.train_loss.push_back(epoch_loss);

    std::vector<BundleMaskSet> preds;
    for (const auto* s : val) preds.push_back(infer_subject(model, *s, names, hyper.batch_size, hyper.threshold));
    const auto vd = val.empty() ? std::nullopt : mean_dice(val, preds);
    rec.val_dice.push_back(vd);
    if (vd && *vd > best_dice) {
      best_dice = *vd;
      rec.best_epoch = epoch;
      rec.best_val_dice = vd;
      result.best_weights = model.weights();
      if (callbacks.on_checkpoint) callbacks.on_checkpoint(result.best_weights, epoch, *vd);
    }
    rec.stopped_epoch = epoch;
    if (callbacks.on_epoch) callbacks.on_epoch(epoch, epoch_loss, vd);
    if (stopper.update(epoch, epoch_loss)) break;
  }
  // No defined validation Dice at any epoch: keep the final weights.
  if (rec.best_epoch == 0) result.best_weights = model.weights();
  return result;
}

void write_train_log(const std::filesystem::path& path, const TrainRecord& record) {
  csv::Table t;
  t.header = {"epoch", "loss", "val_dice"};
  for (std::size_t e = 0; e < record.train_loss.size(); ++e) {
    t.rows.push_back({std::to_string(e + 1), csv::format_optional(record.train_loss[e]),
                      csv::format_optional(record.val_dice[e])});
  }
  csv::write(path, t);
}

namespace {

void save_record(const std::filesystem::path& path, const TrainRecord& r) {
  nlohmann::json doc;
  doc["best_epoch"] = r.best_epoch;
  doc["stopped_epoch"] = r.stopped_epoch;
  doc["best_val_dice"] = r.best_val_dice ? nlohmann::json(*r.best_val_dice) : nlohmann::json();
  doc["train_loss"] = r.train_loss;
  auto& vd = doc["val_dice"] = nlohmann::json::array();
  for (const auto& v : r.val_dice) vd.push_back(v ? nlohmann::json(*v) : nlohmann::json());
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

TrainRecord load_record(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  TrainRecord r;
  try {
    nlohmann::json doc;
    in >> doc;
    r.best_epoch = doc.at("best_epoch").get<int>();
    r.stopped_epoch = doc.at("stopped_epoch").get<int>();
    if (!doc.at("best_val_dice").is_null()) r.best_val_dice = doc.at("best_val_dice").get<double>();
    r.train_loss = doc.at("train_loss").get<std::vector<double>>();
    for (const auto& v : doc.at("val_dice")) {
      r.val_dice.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::format, path.string() + ": " + e.what());
  }
  return r;
}

}  // namespace

CrossValidationResult run_cross_validation(const std::vector<SubjectRecord>& subjects,
                                           const UNetConfig& config, const TrainHyper& hyper,
                                           const CrossValidationOptions& options) {
  std::vector<std::string> ids;
  std::map<std::string, const SubjectRecord*> by_id;
  for (const auto& s : subjects) {
    ids.push_back(s.subject_id);
    by_id[s.subject_id] = &s;
  }
  CrossValidationResult result;
  result.plan = make_folds(ids, options.k, options.seed);
  auto log = [&](const std::string& msg) {
    if (options.log) options.log(msg);
  };

  if (options.output_dir) {
    const auto plan_path = *options.output_dir / "folds.json";
    if (std::filesystem::exists(plan_path)) {
      if (!(FoldPlan::load(plan_path) == result.plan)) {
        throw Error(ErrorKind::config, plan_path.string() + " holds a different fold plan; use a fresh output directory");
      }
    } else {
      result.plan.save(plan_path);
    }
  }

  std::vector<std::string> channel_names;
  for (int fold = 0; fold < options.k; ++fold) {
    const auto val_ids = result.plan.members(fold);
    const auto train_ids = result.plan.complement(fold);
    std::vector<const SubjectRecord*> train, val;
    for (const auto& id : train_ids) train.push_back(by_id.at(id));
    for (const auto& id : val_ids) val.push_back(by_id.at(id));
    channel_names = channel_names_of(train);

    UNetConfig fold_cfg = config;
    fold_cfg.seed = config.seed + static_cast<std::uint64_t>(fold);
    TrainHyper fold_hyper = hyper;
    fold_hyper.shuffle_seed = hyper.shuffle_seed + static_cast<std::uint64_t>(fold);

    std::optional<std::filesystem::path> fold_dir;
    if (options.output_dir) fold_dir = *options.output_dir / ("fold_" + std::to_string(fold));

    TrainResult trained;
    const bool finished = fold_dir && std::filesystem::exists(*fold_dir / "record.json") &&
                          std::filesystem::exists(*fold_dir / "checkpoint.bseg");
    if (finished) {
      log("fold " + std::to_string(fold) + ": reusing finished run in " + fold_dir->string());
      trained.record = load_record(*fold_dir / "record.json");
      trained.best_weights = load_checkpoint(*fold_dir / "checkpoint.bseg");
    } else {
      TrainCallbacks cb;
      const auto start = std::chrono::steady_clock::now();
      cb.on_epoch = [&](int epoch, double loss, std::optional<double> vd) {
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::ostringstream ss;
        ss << "fold " << fold << " epoch " << epoch << " loss " << loss << " val_dice "
           << (vd ? std::to_string(*vd) : std::string("undefined")) << " (" << secs << " s)";
        log(ss.str());
      };
      if (fold_dir) {
        cb.on_checkpoint = [&](const ModelWeights& w, int epoch, double vd) {
          save_checkpoint(*fold_dir / "checkpoint.bseg", w, {w.fingerprint, epoch, vd, fold_cfg});
        };
      }
      trained = train_fold(train, val, fold_cfg, fold_hyper, cb);
      if (fold_dir) {
        std::filesystem::create_directories(*fold_dir);
        if (trained.record.best_epoch == 0) {
          save_checkpoint(*fold_dir / "checkpoint.bseg", trained.best_weights,
                          {trained.best_weights.fingerprint, trained.record.stopped_epoch, 0.0, fold_cfg});
        }
        write_train_log(*fold_dir / "train_log.csv", trained.record);
        save_record(*fold_dir / "record.json", trained.record);
      }
    }

    UNet model(fold_cfg);
    model.load(trained.best_weights);
    const std::set<std::string> train_set(train_ids.begin(), train_ids.end());
    for (const auto* s : val) {
      if (train_set.contains(s->subject_id)) {
        throw std::logic_error("leakage: subject " + s->subject_id + " was used to train fold " +
                               std::to_string(fold));
      }
      if (result.predictions.contains(s->subject_id)) {
        throw std::logic_error("subject " + s->subject_id + " predicted by two folds");
      }
      result.predictions.emplace(s->subject_id,
                                 infer_subject(model, *s, channel_names, hyper.batch_size, hyper.threshold));
      result.predicted_by_fold[s->subject_id] = fold;
    }
    result.records.push_back(std::move(trained.record));
    result.training_subjects.push_back(train_ids);
  }
  return result;
}

}  // namespace bundleseg
