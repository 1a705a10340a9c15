#pragma once

#include <ostream>
#include <string>

#include "config.hpp"

namespace bundleseg::cli {

void generate_phantom(const PipelineConfig& cfg, std::ostream& log);
void preprocess(const PipelineConfig& cfg, std::ostream& log);
CrossValidationResult train(PipelineConfig cfg, std::ostream& log);

struct InferArgs {
  std::string checkpoint;  // empty: per-fold checkpoints under the output root
};
void infer(const PipelineConfig& cfg, const InferArgs& args, std::ostream& log);

struct EvaluateArgs {
  std::string predictions;
  std::string baseline;  // optional second method
  bool shapes = false;
};
void evaluate(const PipelineConfig& cfg, const EvaluateArgs& args, std::ostream& log);

struct MergeArgs {
  std::string rules;        // catalog JSON; empty uses the built-in catalog
  std::string expert_root;  // when set, write 60-channel training subjects
};
void merge(const PipelineConfig& cfg, const MergeArgs& args, std::ostream& log);

struct CompareArgs {
  std::string method_a;
  std::string method_b;
  std::string out;
};
void compare_stats(const PipelineConfig& cfg, const CompareArgs& args, std::ostream& log);

struct ReportArgs {
  std::string metrics;
  std::string baseline_metrics;
  std::string stats;
  std::string shapes;
};
void report(const PipelineConfig& cfg, const ReportArgs& args, std::ostream& log);

/// The effective configuration of `command`, written next to its outputs.
void persist_config(const PipelineConfig& cfg, const std::string& command);

}  // namespace bundleseg::cli
