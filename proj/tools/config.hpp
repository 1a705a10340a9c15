#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "bundleseg/stats.hpp"
#include "bundleseg/trainer.hpp"
#include "bundleseg/unet.hpp"

namespace bundleseg::cli {

struct PipelineConfig {
  struct Paths {
    std::string data_root;
    std::string output_root;
  } paths;
  struct Preprocess {
    double voxel_size = 1.0;
    double threshold = 0.5;
  } preprocess;
  UNetConfig model{.out_channels = 0};  // 0: taken from the cohort's bundle count
  struct Training {
    TrainHyper hyper;
    int k = 5;
    std::uint64_t fold_seed = 0;
  } training;
  struct Evaluation {
    double alpha = 0.05;
    stats::FdrFamily family = stats::FdrFamily::per_metric;
    int adjacency_radius = 1;
    double exclusion_threshold = 1.0 / 3.0;
  } evaluation;
  struct Phantom {
    int n_subjects = 10;
    std::uint64_t seed = 0;
    std::string layout = "default";  // default | expert16
    std::string drop_bundle;
    double drop_probability = 0.0;
    int streamlines = 50;
  } phantom;
  struct Report {
    std::string metric = "dice";
    int width = 900;
  } report;

  void validate() const;
};

/// Sectioned key/value text ([section] then key = value lines). Unknown keys
/// are a config error so typos do not pass silently.
PipelineConfig load_config(const std::filesystem::path& path);
void apply_config(PipelineConfig& cfg, const std::filesystem::path& path);
std::string to_ini(const PipelineConfig& cfg);
void save_config(const PipelineConfig& cfg, const std::filesystem::path& path);

/// BUNDLESEG_DATA_ROOT / BUNDLESEG_OUTPUT_ROOT, when set and non-empty.
void apply_environment(PipelineConfig& cfg);

stats::FdrFamily parse_family(const std::string& s);
std::string to_string(stats::FdrFamily f);

}  // namespace bundleseg::cli
