#include "config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "bundleseg/error.hpp"

namespace bundleseg::cli {
namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw Error(ErrorKind::config, "bad value for " + key + ": '" + text + "'");
  }
  return value;
}

using Setter = std::function<void(PipelineConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto str = [&](const std::string& key, auto getter) {
      t[key] = [getter](PipelineConfig& c, const std::string& v) { getter(c) = v; };
    };
    auto num = [&](const std::string& key, auto getter) {
      t[key] = [key, getter](PipelineConfig& c, const std::string& v) {
        auto& field = getter(c);
        field = parse_number<std::remove_reference_t<decltype(field)>>(key, v);
      };
    };
    str("paths.data_root", [](PipelineConfig& c) -> std::string& { return c.paths.data_root; });
    str("paths.output_root", [](PipelineConfig& c) -> std::string& { return c.paths.output_root; });
    num("preprocess.voxel_size", [](PipelineConfig& c) -> double& { return c.preprocess.voxel_size; });
    num("preprocess.threshold", [](PipelineConfig& c) -> double& { return c.preprocess.threshold; });
    num("model.in_channels", [](PipelineConfig& c) -> int& { return c.model.in_channels; });
    num("model.out_channels", [](PipelineConfig& c) -> int& { return c.model.out_channels; });
    num("model.base_width", [](PipelineConfig& c) -> int& { return c.model.base_width; });
    num("model.seed", [](PipelineConfig& c) -> std::uint64_t& { return c.model.seed; });
    num("training.learning_rate", [](PipelineConfig& c) -> double& { return c.training.hyper.learning_rate; });
    num("training.max_epochs", [](PipelineConfig& c) -> int& { return c.training.hyper.max_epochs; });
    num("training.patience", [](PipelineConfig& c) -> int& { return c.training.hyper.patience; });
    num("training.batch_size", [](PipelineConfig& c) -> int& { return c.training.hyper.batch_size; });
    num("training.min_improvement", [](PipelineConfig& c) -> double& { return c.training.hyper.min_improvement; });
    num("training.threshold", [](PipelineConfig& c) -> double& { return c.training.hyper.threshold; });
    num("training.shuffle_seed", [](PipelineConfig& c) -> std::uint64_t& { return c.training.hyper.shuffle_seed; });
    num("training.k", [](PipelineConfig& c) -> int& { return c.training.k; });
    num("training.fold_seed", [](PipelineConfig& c) -> std::uint64_t& { return c.training.fold_seed; });
    num("evaluation.alpha", [](PipelineConfig& c) -> double& { return c.evaluation.alpha; });
    t["evaluation.fdr_family"] = [](PipelineConfig& c, const std::string& v) { c.evaluation.family = parse_family(v); };
    num("evaluation.adjacency_radius", [](PipelineConfig& c) -> int& { return c.evaluation.adjacency_radius; });
    num("evaluation.exclusion_threshold", [](PipelineConfig& c) -> double& { return c.evaluation.exclusion_threshold; });
    num("phantom.n_subjects", [](PipelineConfig& c) -> int& { return c.phantom.n_subjects; });
    num("phantom.seed", [](PipelineConfig& c) -> std::uint64_t& { return c.phantom.seed; });
    str("phantom.layout", [](PipelineConfig& c) -> std::string& { return c.phantom.layout; });
    str("phantom.drop_bundle", [](PipelineConfig& c) -> std::string& { return c.phantom.drop_bundle; });
    num("phantom.drop_probability", [](PipelineConfig& c) -> double& { return c.phantom.drop_probability; });
    num("phantom.streamlines", [](PipelineConfig& c) -> int& { return c.phantom.streamlines; });
    str("report.metric", [](PipelineConfig& c) -> std::string& { return c.report.metric; });
    num("report.width", [](PipelineConfig& c) -> int& { return c.report.width; });
    return t;
  }();
  return table;
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

}  // namespace

stats::FdrFamily parse_family(const std::string& s) {
  if (s == "per_metric") return stats::FdrFamily::per_metric;
  if (s == "global") return stats::FdrFamily::global;
  throw Error(ErrorKind::config, "fdr_family must be per_metric or global, got '" + s + "'");
}

std::string to_string(stats::FdrFamily f) { return f == stats::FdrFamily::global ? "global" : "per_metric"; }

void PipelineConfig::validate() const {
  if (!(preprocess.voxel_size > 0.0)) throw Error(ErrorKind::config, "preprocess.voxel_size must be > 0");
  if (!(preprocess.threshold > 0.0 && preprocess.threshold <= 1.0)) {
    throw Error(ErrorKind::config, "preprocess.threshold must be in (0, 1]");
  }
  if (model.in_channels < 1 || model.out_channels < 0 || model.base_width < 1) {
    throw Error(ErrorKind::config, "model channel counts and base width must be positive");
  }
  if (training.k < 2) throw Error(ErrorKind::config, "training.k must be >= 2");
  if (training.hyper.max_epochs < 1 || training.hyper.patience < 1 || training.hyper.batch_size < 1) {
    throw Error(ErrorKind::config, "training.max_epochs, patience and batch_size must be >= 1");
  }
  if (!(training.hyper.learning_rate > 0.0)) throw Error(ErrorKind::config, "training.learning_rate must be > 0");
  if (!(evaluation.alpha > 0.0 && evaluation.alpha < 1.0)) throw Error(ErrorKind::config, "evaluation.alpha must be in (0, 1)");
  if (evaluation.adjacency_radius < 0) throw Error(ErrorKind::config, "evaluation.adjacency_radius must be >= 0");
  if (phantom.layout != "default" && phantom.layout != "expert16") {
    throw Error(ErrorKind::config, "phantom.layout must be default or expert16");
  }
  if (!(phantom.drop_probability >= 0.0 && phantom.drop_probability <= 1.0)) {
    throw Error(ErrorKind::config, "phantom.drop_probability must be in [0, 1]");
  }
}

void apply_config(PipelineConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open config " + path.string());
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_config(in);
  } catch (const CLI::Error& e) {
    throw Error(ErrorKind::config, path.string() + ": " + e.what());
  }
  const auto& table = setters();
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;  // section markers
    const std::string key = item.fullname();
    auto it = table.find(key);
    if (it == table.end()) throw Error(ErrorKind::config, path.string() + ": unknown key '" + key + "'");
    if (item.inputs.size() != 1) throw Error(ErrorKind::config, path.string() + ": '" + key + "' needs one value");
    it->second(cfg, item.inputs.front());
  }
}

PipelineConfig load_config(const std::filesystem::path& path) {
  PipelineConfig cfg;
  apply_config(cfg, path);
  return cfg;
}

std::string to_ini(const PipelineConfig& c) {
  std::ostringstream o;
  o << "[paths]\n"
    << "data_root = \"" << c.paths.data_root << "\"\n"
    << "output_root = \"" << c.paths.output_root << "\"\n\n"
    << "[preprocess]\n"
    << "voxel_size = " << fmt(c.preprocess.voxel_size) << "\n"
    << "threshold = " << fmt(c.preprocess.threshold) << "\n\n"
    << "[model]\n"
    << "in_channels = " << c.model.in_channels << "\n"
    << "out_channels = " << c.model.out_channels << "\n"
    << "base_width = " << c.model.base_width << "\n"
    << "seed = " << c.model.seed << "\n\n"
    << "[training]\n"
    << "learning_rate = " << fmt(c.training.hyper.learning_rate) << "\n"
    << "max_epochs = " << c.training.hyper.max_epochs << "\n"
    << "patience = " << c.training.hyper.patience << "\n"
    << "batch_size = " << c.training.hyper.batch_size << "\n"
    << "min_improvement = " << fmt(c.training.hyper.min_improvement) << "\n"
    << "threshold = " << fmt(c.training.hyper.threshold) << "\n"
    << "shuffle_seed = " << c.training.hyper.shuffle_seed << "\n"
    << "k = " << c.training.k << "\n"
    << "fold_seed = " << c.training.fold_seed << "\n\n"
    << "[evaluation]\n"
    << "alpha = " << fmt(c.evaluation.alpha) << "\n"
    << "fdr_family = " << to_string(c.evaluation.family) << "\n"
    << "adjacency_radius = " << c.evaluation.adjacency_radius << "\n"
    << "exclusion_threshold = " << fmt(c.evaluation.exclusion_threshold) << "\n\n"
    << "[phantom]\n"
    << "n_subjects = " << c.phantom.n_subjects << "\n"
    << "seed = " << c.phantom.seed << "\n"
    << "layout = " << c.phantom.layout << "\n"
    << "drop_bundle = \"" << c.phantom.drop_bundle << "\"\n"
    << "drop_probability = " << fmt(c.phantom.drop_probability) << "\n"
    << "streamlines = " << c.phantom.streamlines << "\n\n"
    << "[report]\n"
    << "metric = " << c.report.metric << "\n"
    << "width = " << c.report.width << "\n";
  return o.str();
}

void save_config(const PipelineConfig& cfg, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out << to_ini(cfg);
}

void apply_environment(PipelineConfig& cfg) {
  if (const char* v = std::getenv("BUNDLESEG_DATA_ROOT"); v && *v) cfg.paths.data_root = v;
  if (const char* v = std::getenv("BUNDLESEG_OUTPUT_ROOT"); v && *v) cfg.paths.output_root = v;
}

}  // namespace bundleseg::cli
