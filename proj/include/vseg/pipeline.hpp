#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "vseg/fusion.hpp"
#include "vseg/nn.hpp"
#include "vseg/sampler.hpp"
#include "vseg/volume.hpp"

namespace vseg {

struct TrainSettings {
  int stage1_epochs = 10;
  int stage2_epochs = 10;
  double base_lr = 0.001;
  // The weight-balanced loss is an unnormalized sum, so its schedule gets its
  // own base rate.
  double stage2_base_lr = 1e-5;
  double momentum = 0.99;
  double weight_decay = 1e-8;
  double gamma = 0.1;
  int step_size = 20;
  double val_threshold = 0.25;
};

// Configuration file grammar: one `key = value` per line, '#' starts a
// comment, blank lines ignored, keys are dotted identifiers. Case lists are
// comma-separated paths. Relative paths resolve against the directory that
// holds the configuration file.
//
//   seed                    run seed (init, shuffling)
//   radius                  slice radius; input channels = 2 * radius + 1
//   model.depth, model.base_channels, model.max_channels
//   train.stage1_epochs, train.stage2_epochs, train.base_lr,
//   train.stage2_base_lr, train.momentum, train.weight_decay, train.gamma,
//   train.step_size, train.val_threshold
//   fusion.method           union | intersection | average
//   eval.grid               lo:hi:step
//   refine.min_nodes
//   data.raw                HU image inside each case directory (preprocess input)
//   data.image, data.label  file names inside each case directory
//   data.train, data.val, data.test
//   output.checkpoints, output.predictions, output.log, output.report
struct PipelineConfig {
  std::uint64_t seed = 7;
  ModelConfig model;
  TrainSettings train;
  FusionMethod fusion = FusionMethod::average;
  ThresholdGrid threshold_grid;
  int min_nodes = 10;
  std::string raw_name = "image.mhd";
  std::string image_name = "norm.mhd";
  std::string label_name = "gt.mhd";
  std::vector<std::filesystem::path> train_cases;
  std::vector<std::filesystem::path> val_cases;
  std::vector<std::filesystem::path> test_cases;
  std::filesystem::path checkpoint_dir = "checkpoints";
  std::filesystem::path prediction_dir = "predictions";
  std::filesystem::path log_path = "train.log";
  std::filesystem::path report_path = "report.json";

  static PipelineConfig parse(const std::string& text,
                              const std::filesystem::path& base_dir = {});
  static PipelineConfig load(const std::filesystem::path& path);
  void validate() const;
};

std::filesystem::path checkpoint_path(const PipelineConfig& cfg, Axis axis, int stage);

enum class TrainStages { both, stage1_only, stage2_only };

struct TrainOptions {
  std::vector<Axis> axes{kAllAxes.begin(), kAllAxes.end()};
  TrainStages stages = TrainStages::both;
};

struct EpochRecord {
  Axis axis = Axis::axial;
  int stage = 1;
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;  // mean per-step loss over non-skipped steps
  std::size_t steps = 0;
  std::size_t skipped = 0;
  double val_dice = 0.0;
  std::uint64_t shuffle_seed = 0;

  nlohmann::ordered_json to_json() const;
};

struct TrainResult {
  std::vector<std::filesystem::path> checkpoints;
  std::vector<EpochRecord> log;
};

// Two-stage training for each requested axis. Stage 1 minimizes the mean NLL,
// stage 2 resumes the stage-1 checkpoint and minimizes the weight-balanced
// loss. Writes <checkpoints>/<axis>.stage1.ckpt and <checkpoints>/<axis>.ckpt,
// and one JSON line per epoch to the log file (and `log_stream`, if given).
TrainResult train(const PipelineConfig& cfg, const TrainOptions& options = {},
                  std::ostream* log_stream = nullptr);

// Slice-by-slice prediction along one axis, reassembled into a volume.
Volume predict_axis(const NestedUNet<float>& model, const Volume& image, Axis axis);

struct Prediction {
  Volume axial;
  Volume sagittal;
  Volume coronal;
  Volume fused;
};

// Loads the three axis checkpoints and checks they match cfg.model.
std::array<NestedUNet<float>, 3> load_axis_models(const PipelineConfig& cfg);

Prediction predict_case(const PipelineConfig& cfg, std::span<const NestedUNet<float>, 3> models,
                        const Volume& image);

// Predicts every case and writes <predictions>/<case>/{axial,sagittal,
// coronal,fused}.mhd. Defaults to the test cases.
std::vector<std::filesystem::path> predict(const PipelineConfig& cfg,
                                           std::span<const std::filesystem::path> cases);

struct CaseVolumes {
  std::string id;
  std::optional<Volume> axial;
  std::optional<Volume> sagittal;
  std::optional<Volume> coronal;
  Volume fused;
  Volume truth;
};

struct EvaluationReport {
  // Axial, Sagittal, Coronal, Union, Intersection, Average (when the axis
  // volumes are available), each at its own grid-searched threshold.
  std::vector<std::pair<std::string, MetricsReport>> methods;
  std::string fusion_name;
  MetricsReport fused;    // configured fusion at its best threshold
  MetricsReport refined;  // the same masks after graph refinement
  ThresholdGrid grid;
  int min_nodes = 10;

  std::string table() const;
  nlohmann::ordered_json to_json() const;
};

EvaluationReport evaluate_volumes(std::span<const CaseVolumes> cases, FusionMethod fusion,
                                  const ThresholdGrid& grid, int min_nodes);

// Reads predictions written by predict() plus each case's label volume.
EvaluationReport evaluate(const PipelineConfig& cfg,
                          std::span<const std::filesystem::path> cases);

// Writes the report JSON (stable key order, two-space indent).
void write_report(const EvaluationReport& report, const std::filesystem::path& path);

}  // namespace vseg
