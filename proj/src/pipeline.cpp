#include "vseg/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "vseg/error.hpp"
#include "vseg/loss.hpp"
#include "vseg/vessel_graph.hpp"

namespace vseg {
namespace fs = std::filesystem;

// ---- configuration --------------------------------------------------------

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
  T v{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ParseError("config key " + key + ": cannot parse '" + text + "'");
  }
  return v;
}

std::vector<fs::path> parse_cases(const std::string& text, const fs::path& base) {
  std::vector<fs::path> out;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    item = trim(item);
    if (item.empty()) continue;
    const fs::path p(item);
    out.push_back(p.is_absolute() || base.empty() ? p : base / p);
  }
  return out;
}

fs::path resolve(const std::string& text, const fs::path& base) {
  const fs::path p(text);
  return p.is_absolute() || base.empty() ? p : base / p;
}

std::string case_id(const fs::path& case_dir) {
  const fs::path normal = case_dir.lexically_normal();
  const std::string name = normal.filename().string();
  return name.empty() ? normal.parent_path().filename().string() : name;
}

}  // namespace

PipelineConfig PipelineConfig::parse(const std::string& text, const fs::path& base_dir) {
  PipelineConfig cfg;
  cfg.checkpoint_dir = resolve("checkpoints", base_dir);
  cfg.prediction_dir = resolve("predictions", base_dir);
  cfg.log_path = resolve("train.log", base_dir);
  cfg.report_path = resolve("report.json", base_dir);

  std::istringstream in(text);
  int line_no = 0;
  std::set<std::string> seen;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (!seen.insert(key).second) throw ParseError("config key " + key + ": duplicated");

    if (key == "seed") cfg.seed = parse_value<std::uint64_t>(key, value);
    else if (key == "radius") {
      cfg.model.radius = parse_value<int>(key, value);
      cfg.model.in_channels = 2 * cfg.model.radius + 1;
    }
    else if (key == "model.depth") cfg.model.depth = parse_value<int>(key, value);
    else if (key == "model.base_channels") cfg.model.base_channels = parse_value<int>(key, value);
    else if (key == "model.max_channels") cfg.model.max_channels = parse_value<int>(key, value);
    else if (key == "train.stage1_epochs") cfg.train.stage1_epochs = parse_value<int>(key, value);
    else if (key == "train.stage2_epochs") cfg.train.stage2_epochs = parse_value<int>(key, value);
    else if (key == "train.base_lr") cfg.train.base_lr = parse_value<double>(key, value);
    else if (key == "train.stage2_base_lr") cfg.train.stage2_base_lr = parse_value<double>(key, value);
    else if (key == "train.momentum") cfg.train.momentum = parse_value<double>(key, value);
    else if (key == "train.weight_decay") cfg.train.weight_decay = parse_value<double>(key, value);
    else if (key == "train.gamma") cfg.train.gamma = parse_value<double>(key, value);
    else if (key == "train.step_size") cfg.train.step_size = parse_value<int>(key, value);
    else if (key == "train.val_threshold") cfg.train.val_threshold = parse_value<double>(key, value);
    else if (key == "fusion.method") cfg.fusion = parse_fusion_method(value);
    else if (key == "eval.grid") cfg.threshold_grid = ThresholdGrid::parse(value);
    else if (key == "refine.min_nodes") cfg.min_nodes = parse_value<int>(key, value);
    else if (key == "data.raw") cfg.raw_name = value;
    else if (key == "data.image") cfg.image_name = value;
    else if (key == "data.label") cfg.label_name = value;
    else if (key == "data.train") cfg.train_cases = parse_cases(value, base_dir);
    else if (key == "data.val") cfg.val_cases = parse_cases(value, base_dir);
    else if (key == "data.test") cfg.test_cases = parse_cases(value, base_dir);
    else if (key == "output.checkpoints") cfg.checkpoint_dir = resolve(value, base_dir);
    else if (key == "output.predictions") cfg.prediction_dir = resolve(value, base_dir);
    else if (key == "output.log") cfg.log_path = resolve(value, base_dir);
    else if (key == "output.report") cfg.report_path = resolve(value, base_dir);
    else throw ParseError("config key " + key + ": unknown");
  }
  cfg.validate();
  return cfg;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.parent_path());
}

void PipelineConfig::validate() const {
  model.validate();
  const auto& t = train;
  if (t.stage1_epochs < 0 || t.stage2_epochs < 0)
    throw ArgumentError("epoch counts must be non-negative");
  if (!(t.base_lr > 0.0) || !(t.stage2_base_lr > 0.0))
    throw ArgumentError("learning rates must be positive");
  if (!(t.momentum >= 0.0 && t.momentum < 1.0)) throw ArgumentError("momentum must lie in [0, 1)");
  if (!(t.weight_decay >= 0.0)) throw ArgumentError("weight decay must be non-negative");
  if (!(t.gamma > 0.0 && t.gamma <= 1.0)) throw ArgumentError("gamma must lie in (0, 1]");
  if (t.step_size < 1) throw ArgumentError("scheduler step size must be positive");
  if (!(t.val_threshold >= 0.0 && t.val_threshold <= 1.0))
    throw ArgumentError("validation threshold must lie in [0, 1]");
  if (min_nodes < 0) throw ArgumentError("refine.min_nodes must be non-negative");
  threshold_grid.points();

  std::set<fs::path> all;
  for (const auto* list : {&train_cases, &val_cases, &test_cases}) {
    for (const auto& p : *list) {
      if (!all.insert(p.lexically_normal()).second) {
        throw ArgumentError("case " + p.string() + " appears in more than one list");
      }
    }
  }
}

fs::path checkpoint_path(const PipelineConfig& cfg, Axis axis, int stage) {
  const std::string name = std::string(to_string(axis)) + (stage == 1 ? ".stage1.ckpt" : ".ckpt");
  return cfg.checkpoint_dir / name;
}

nlohmann::ordered_json EpochRecord::to_json() const {
  return {{"axis", to_string(axis)}, {"stage", stage},       {"epoch", epoch},
          {"lr", lr},                {"loss", loss},         {"steps", steps},
          {"skipped", skipped},      {"val_dice", val_dice}, {"shuffle_seed", shuffle_seed}};
}

// ---- training -------------------------------------------------------------

namespace {

struct CaseData {
  std::string id;
  Volume image;
  Volume label;
};

CaseData load_case(const PipelineConfig& cfg, const fs::path& dir) {
  const fs::path image_path = dir / cfg.image_name;
  const fs::path label_path = dir / cfg.label_name;
  if (!fs::exists(image_path)) throw DataError("missing case image " + image_path.string());
  if (!fs::exists(label_path)) throw DataError("missing case label " + label_path.string());
  Volume image = read_metaimage(image_path);
  Volume label = read_metaimage(label_path);
  if (image.kind() != VolumeKind::normalized) {
    throw DataError("case image " + image_path.string() + " is " +
                    std::string(to_string(image.kind())) + ", expected a preprocessed NORMALIZED volume");
  }
  if (label.kind() != VolumeKind::binary) {
    throw DataError("case label " + label_path.string() + " is not BINARY");
  }
  if (!image.same_geometry(label)) {
    throw DataError("case " + dir.string() + ": image and label geometry differ");
  }
  return {case_id(dir), std::move(image), std::move(label)};
}

std::vector<CaseData> load_cases(const PipelineConfig& cfg, std::span<const fs::path> dirs) {
  std::vector<CaseData> out;
  out.reserve(dirs.size());
  for (const auto& d : dirs) out.push_back(load_case(cfg, d));
  return out;
}

std::uint64_t init_seed(std::uint64_t seed, Axis axis) {
  return seed * 0x9E3779B97F4A7C15ull + 101 * (static_cast<std::uint64_t>(axis) + 1);
}

std::uint64_t shuffle_seed(std::uint64_t seed, Axis axis, int epoch) {
  return seed * 1000003ull + 1009ull * static_cast<std::uint64_t>(axis) +
         static_cast<std::uint64_t>(epoch);
}

double validation_dice(const NestedUNet<float>& model, const std::vector<CaseData>& val,
                       Axis axis, double t) {
  if (val.empty()) return std::nan("");
  double sum = 0.0;
  for (const auto& c : val) sum += dice(threshold(predict_axis(model, c.image, axis), t), c.label);
  return sum / static_cast<double>(val.size());
}

void run_stage(NestedUNet<float>& model, int stage, int first_epoch, int epochs, Axis axis,
               const PipelineConfig& cfg, const std::vector<CaseData>& train_set,
               const std::vector<CaseData>& val_set, std::vector<EpochRecord>& log,
               std::ostream* log_file, std::ostream* log_stream) {
  struct Sample {
    std::size_t case_index;
    int slice;
  };
  std::vector<Sample> samples;
  for (std::size_t c = 0; c < train_set.size(); ++c) {
    const int n = slice_count(train_set[c].image.dims(), axis);
    for (int s = 0; s < n; ++s) samples.push_back({c, s});
  }
  const int multiple = cfg.model.input_multiple();
  const double base_lr = stage == 1 ? cfg.train.base_lr : cfg.train.stage2_base_lr;

  for (int epoch = first_epoch; epoch < first_epoch + epochs; ++epoch) {
    EpochRecord rec;
    rec.axis = axis;
    rec.stage = stage;
    rec.epoch = epoch;
    rec.lr = step_lr(epoch, base_lr, cfg.train.gamma, cfg.train.step_size);
    rec.shuffle_seed = shuffle_seed(cfg.seed, axis, epoch);

    std::mt19937_64 rng(rec.shuffle_seed);
    std::shuffle(samples.begin(), samples.end(), rng);

    double loss_sum = 0.0;
    for (std::size_t k = 0; k < samples.size(); ++k) {
      const CaseData& c = train_set[samples[k].case_index];
      const SliceStack stack =
          pad_stack(extract_stack(c.image, axis, samples[k].slice, cfg.model.radius), multiple);
      const Map2D label = pad_map(extract_slice(c.label, axis, samples[k].slice), stack.pad);
      if (stage == 2 &&
          std::none_of(label.data.begin(), label.data.end(), [](float v) { return v != 0.0f; })) {
        ++rec.skipped;
        continue;
      }
      const ProbMap<float> prob = model.forward(stack);
      const LossResult<float> loss =
          stage == 1 ? nll_loss(prob, label.data) : weight_balanced_loss(prob, label.data);
      if (!std::isfinite(loss.loss)) {
        throw TrainingError("axis " + std::string(to_string(axis)) + " stage " +
                            std::to_string(stage) + " epoch " + std::to_string(epoch) +
                            " step " + std::to_string(k) + ": loss is not finite");
      }
      model.backward_logits(loss.logit_grad);
      sgd_step(model, rec.lr, cfg.train.momentum, cfg.train.weight_decay);
      loss_sum += loss.loss;
      ++rec.steps;
    }
    rec.loss = rec.steps ? loss_sum / static_cast<double>(rec.steps) : 0.0;
    rec.val_dice = validation_dice(model, val_set, axis, cfg.train.val_threshold);
    const std::string line = rec.to_json().dump();
    if (log_file) *log_file << line << '\n' << std::flush;
    if (log_stream) *log_stream << line << '\n' << std::flush;
    log.push_back(rec);
  }
}

}  // namespace

TrainResult train(const PipelineConfig& cfg, const TrainOptions& options, std::ostream* log_stream) {
  cfg.validate();
  if (cfg.train_cases.empty()) throw DataError("no training cases configured");
  const auto train_set = load_cases(cfg, cfg.train_cases);
  const auto val_set = load_cases(cfg, cfg.val_cases);

  fs::create_directories(cfg.checkpoint_dir);
  if (cfg.log_path.has_parent_path()) fs::create_directories(cfg.log_path.parent_path());
  std::ofstream log_file(cfg.log_path, std::ios::app);
  if (!log_file) throw IoError("cannot open log " + cfg.log_path.string());

  TrainResult result;
  for (Axis axis : options.axes) {
    const fs::path stage1_path = checkpoint_path(cfg, axis, 1);
    const fs::path final_path = checkpoint_path(cfg, axis, 2);
    NestedUNet<float> model(cfg.model, init_seed(cfg.seed, axis));
    const int e1 = cfg.train.stage1_epochs;

    if (options.stages != TrainStages::stage2_only) {
      run_stage(model, 1, 0, e1, axis, cfg, train_set, val_set, result.log, &log_file, log_stream);
      save_checkpoint(stage1_path, model, {e1, 1});
      result.checkpoints.push_back(stage1_path);
      if (options.stages == TrainStages::stage1_only) continue;
    }

    // Stage 2 always resumes from the stage-1 checkpoint on disk.
    if (!fs::exists(stage1_path)) {
      throw ResumeError("stage 2 for axis " + std::string(to_string(axis)) +
                        " needs the stage-1 checkpoint " + stage1_path.string());
    }
    Checkpoint coarse = load_checkpoint(stage1_path);
    if (coarse.meta.stage != 1 || !(coarse.model.config() == cfg.model)) {
      throw ResumeError("checkpoint " + stage1_path.string() +
                        " is not a stage-1 checkpoint for this model configuration");
    }
    model = std::move(coarse.model);
    run_stage(model, 2, coarse.meta.epoch, cfg.train.stage2_epochs, axis, cfg, train_set, val_set,
              result.log, &log_file, log_stream);
    save_checkpoint(final_path, model, {coarse.meta.epoch + cfg.train.stage2_epochs, 2});
    result.checkpoints.push_back(final_path);
  }
  return result;
}

// ---- prediction -----------------------------------------------------------

Volume predict_axis(const NestedUNet<float>& model, const Volume& image, Axis axis) {
  const int n = slice_count(image.dims(), axis);
  const int radius = model.config().radius;
  const int multiple = model.config().input_multiple();
  std::vector<Map2D> maps;
  maps.reserve(n);
  PadSpec pad;
  for (int s = 0; s < n; ++s) {
    const SliceStack stack = pad_stack(extract_stack(image, axis, s, radius), multiple);
    pad = stack.pad;
    maps.push_back(foreground_map(model.infer(to_tensor<float>(stack))));
  }
  return assemble_volume(maps, axis, image.dims(), pad, image.spacing(), image.origin());
}

std::array<NestedUNet<float>, 3> load_axis_models(const PipelineConfig& cfg) {
  auto load = [&](Axis axis) {
    const fs::path path = checkpoint_path(cfg, axis, 2);
    if (!fs::exists(path)) {
      throw DataError("missing checkpoint for axis " + std::string(to_string(axis)) + ": " +
                      path.string());
    }
    Checkpoint ckpt = load_checkpoint(path);
    const ModelConfig& m = ckpt.model.config();
    if (!(m == cfg.model)) {
      throw CompatibilityError(
          "checkpoint " + path.string() + " (radius " + std::to_string(m.radius) + ", depth " +
          std::to_string(m.depth) + ", base " + std::to_string(m.base_channels) +
          ") does not match the configured model (radius " + std::to_string(cfg.model.radius) +
          ", depth " + std::to_string(cfg.model.depth) + ", base " +
          std::to_string(cfg.model.base_channels) + ")");
    }
    return std::move(ckpt.model);
  };
  return {load(Axis::axial), load(Axis::sagittal), load(Axis::coronal)};
}

Prediction predict_case(const PipelineConfig& cfg, std::span<const NestedUNet<float>, 3> models,
                        const Volume& image) {
  Volume a = predict_axis(models[0], image, Axis::axial);
  Volume s = predict_axis(models[1], image, Axis::sagittal);
  Volume c = predict_axis(models[2], image, Axis::coronal);
  Volume f = fuse(a, s, c, cfg.fusion);
  return {std::move(a), std::move(s), std::move(c), std::move(f)};
}

std::vector<fs::path> predict(const PipelineConfig& cfg, std::span<const fs::path> cases) {
  const auto models = load_axis_models(cfg);
  std::vector<fs::path> written;
  for (const auto& dir : cases) {
    const fs::path image_path = dir / cfg.image_name;
    if (!fs::exists(image_path)) throw DataError("missing case image " + image_path.string());
    const Volume image = read_metaimage(image_path);
    if (image.kind() != VolumeKind::normalized) {
      throw DataError("case image " + image_path.string() + " is not NORMALIZED");
    }
    const Prediction p = predict_case(cfg, models, image);
    const fs::path out = cfg.prediction_dir / case_id(dir);
    fs::create_directories(out);
    write_metaimage(p.axial, out / "axial.mhd");
    write_metaimage(p.sagittal, out / "sagittal.mhd");
    write_metaimage(p.coronal, out / "coronal.mhd");
    write_metaimage(p.fused, out / "fused.mhd");
    written.push_back(out);
  }
  return written;
}

// ---- evaluation -----------------------------------------------------------

namespace {

std::string display_name(FusionMethod m) {
  switch (m) {
    case FusionMethod::union_of: return "Union";
    case FusionMethod::intersection: return "Intersection";
    case FusionMethod::average: return "Average";
  }
  return "Average";
}

MetricsReport search(const std::vector<std::string>& ids, const std::vector<const Volume*>& probs,
                     std::span<const CaseVolumes> cases, const ThresholdGrid& grid) {
  std::vector<EvalCase> eval;
  for (std::size_t i = 0; i < ids.size(); ++i) eval.push_back({ids[i], probs[i], &cases[i].truth});
  return grid_search_threshold(eval, grid).report;
}

}  // namespace

EvaluationReport evaluate_volumes(std::span<const CaseVolumes> cases, FusionMethod fusion,
                                  const ThresholdGrid& grid, int min_nodes) {
  if (cases.empty()) throw ArgumentError("evaluation needs at least one case");
  EvaluationReport r;
  r.grid = grid;
  r.min_nodes = min_nodes;
  r.fusion_name = display_name(fusion);

  std::vector<std::string> ids;
  for (const auto& c : cases) ids.push_back(c.id);

  const bool have_axes = std::all_of(cases.begin(), cases.end(), [](const CaseVolumes& c) {
    return c.axial && c.sagittal && c.coronal;
  });
  if (have_axes) {
    std::vector<const Volume*> a, s, c;
    for (const auto& cv : cases) {
      a.push_back(&*cv.axial);
      s.push_back(&*cv.sagittal);
      c.push_back(&*cv.coronal);
    }
    r.methods.emplace_back("Axial", search(ids, a, cases, grid));
    r.methods.emplace_back("Sagittal", search(ids, s, cases, grid));
    r.methods.emplace_back("Coronal", search(ids, c, cases, grid));
    for (FusionMethod m :
         {FusionMethod::union_of, FusionMethod::intersection, FusionMethod::average}) {
      std::vector<Volume> fused;
      fused.reserve(cases.size());
      for (const auto& cv : cases) fused.push_back(fuse(*cv.axial, *cv.sagittal, *cv.coronal, m));
      std::vector<const Volume*> ptrs;
      for (const auto& v : fused) ptrs.push_back(&v);
      r.methods.emplace_back(display_name(m), search(ids, ptrs, cases, grid));
    }
  }

  std::vector<const Volume*> fused;
  for (const auto& cv : cases) fused.push_back(&cv.fused);
  r.fused = search(ids, fused, cases, grid);

  std::vector<CaseMetrics> refined;
  for (const auto& cv : cases) {
    const Volume mask = refine(threshold(cv.fused, r.fused.threshold), min_nodes);
    const Confusion cm = confusion(mask, cv.truth);
    refined.push_back({cv.id, dice(cm), precision(cm), recall(cm)});
  }
  r.refined = make_report(std::move(refined), r.fused.threshold);
  return r;
}

EvaluationReport evaluate(const PipelineConfig& cfg, std::span<const fs::path> cases) {
  if (cases.empty()) throw ArgumentError("evaluation needs at least one case");
  std::vector<CaseVolumes> volumes;
  for (const auto& dir : cases) {
    const std::string id = case_id(dir);
    const fs::path pred = cfg.prediction_dir / id;
    auto optional_read = [&](const char* name) -> std::optional<Volume> {
      const fs::path p = pred / name;
      if (!fs::exists(p)) return std::nullopt;
      return read_metaimage(p);
    };
    const fs::path fused_path = pred / "fused.mhd";
    if (!fs::exists(fused_path)) throw DataError("missing prediction " + fused_path.string());
    const fs::path label_path = dir / cfg.label_name;
    if (!fs::exists(label_path)) throw DataError("missing case label " + label_path.string());
    volumes.push_back({id, optional_read("axial.mhd"), optional_read("sagittal.mhd"),
                       optional_read("coronal.mhd"), read_metaimage(fused_path),
                       read_metaimage(label_path)});
  }
  return evaluate_volumes(volumes, cfg.fusion, cfg.threshold_grid, cfg.min_nodes);
}

std::string EvaluationReport::table() const {
  std::vector<std::pair<std::string, MetricsReport>> rows = methods;
  rows.emplace_back("Fused (" + fusion_name + ")", fused);
  rows.emplace_back("Refined (" + fusion_name + ")", refined);
  return report_table(rows);
}

nlohmann::ordered_json EvaluationReport::to_json() const {
  nlohmann::ordered_json j;
  j["grid"] = {{"lo", grid.lo}, {"hi", grid.hi}, {"step", grid.step}};
  j["fusion"] = fusion_name;
  j["min_nodes"] = min_nodes;
  j["methods"] = nlohmann::ordered_json::array();
  for (const auto& [name, report] : methods) {
    nlohmann::ordered_json row;
    row["name"] = name;
    const auto metrics = vseg::to_json(report);
    for (const auto& [k, v] : metrics.items()) row[k] = v;
    j["methods"].push_back(row);
  }
  j["fused"] = vseg::to_json(fused);
  j["refined"] = vseg::to_json(refined);
  return j;
}

void write_report(const EvaluationReport& report, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write report " + path.string());
  out << report.to_json().dump(2) << '\n';
  if (!out) throw IoError("write failed for report " + path.string());
}

}  // namespace vseg
