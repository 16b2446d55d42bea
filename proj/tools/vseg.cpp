#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "vseg/error.hpp"
#include "vseg/fusion.hpp"
#include "vseg/phantom.hpp"
#include "vseg/pipeline.hpp"
#include "vseg/preprocess.hpp"
#include "vseg/vessel_graph.hpp"

namespace fs = std::filesystem;
using namespace vseg;

namespace {

PipelineConfig load_config(const std::string& path) {
  return path.empty() ? PipelineConfig{} : PipelineConfig::load(path);
}

std::string case_name(std::uint64_t seed) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "case_%03llu", static_cast<unsigned long long>(seed));
  return buf;
}

Volume preprocess_volume(const Volume& in, double target_mm, const WindowSpec& window) {
  switch (in.kind()) {
    case VolumeKind::hu: return normalize_hu(resample_isotropic(in, target_mm), window);
    case VolumeKind::binary: return resample_isotropic_nearest(in, target_mm);
    case VolumeKind::normalized: return resample_isotropic(in, target_mm);
    case VolumeKind::probability: break;
  }
  throw DataError("preprocess expects an HU, NORMALIZED or BINARY volume, got " +
                  std::string(to_string(in.kind())));
}

void write_json(const nlohmann::ordered_json& j, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::vector<fs::path> as_paths(const std::vector<std::string>& v) {
  return {v.begin(), v.end()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"2.5D pulmonary vessel segmentation: three-axis slice networks, fusion, graph refinement"};
  app.require_subcommand(1);
  std::string config_path;

  // phantom
  auto* phantom = app.add_subcommand("phantom", "generate synthetic vessel phantoms");
  std::uint64_t ph_seed = 0;
  int ph_dims = 64, ph_count = 1;
  std::string ph_out = "cases";
  phantom->add_option("--config", config_path, "pipeline config (unused)");
  phantom->add_option("--seed", ph_seed, "seed of the first case");
  phantom->add_option("--dims", ph_dims, "edge length of the cube")->check(CLI::Range(16, 1024));
  phantom->add_option("--count", ph_count, "number of cases, seeds seed .. seed+count-1")
      ->check(CLI::PositiveNumber);
  phantom->add_option("--out-dir", ph_out, "output directory");

  // preprocess
  auto* prep = app.add_subcommand("preprocess", "resample to isotropic spacing and window/normalize");
  std::string pp_in, pp_out, pp_window = "-1200:600";
  double pp_target = 1.0;
  prep->add_option("--config", config_path, "preprocess every case in the config");
  prep->add_option("--in", pp_in, "input volume");
  prep->add_option("--out", pp_out, "output volume");
  prep->add_option("--target-mm", pp_target, "isotropic spacing")->check(CLI::PositiveNumber);
  prep->add_option("--window", pp_window, "HU window lo:hi");

  // train
  auto* trn = app.add_subcommand("train", "two-stage training of the per-axis networks");
  std::string tr_axis = "all", tr_stage = "both";
  trn->add_option("--config", config_path, "pipeline config")->required();
  trn->add_option("--axis", tr_axis, "axial | sagittal | coronal | all");
  trn->add_option("--stage", tr_stage, "1 | 2 | both");

  // predict
  auto* pred = app.add_subcommand("predict", "per-axis prediction and fusion");
  std::vector<std::string> pr_cases;
  pred->add_option("--config", config_path, "pipeline config")->required();
  pred->add_option("--case", pr_cases, "case directory (repeatable; defaults to data.test)");

  // fuse
  auto* fus = app.add_subcommand("fuse", "fuse three per-axis probability volumes");
  std::string fu_a, fu_s, fu_c, fu_method, fu_out;
  fus->add_option("--config", config_path, "pipeline config (fusion.method default)");
  fus->add_option("--axial", fu_a, "axial probabilities")->required();
  fus->add_option("--sagittal", fu_s, "sagittal probabilities")->required();
  fus->add_option("--coronal", fu_c, "coronal probabilities")->required();
  fus->add_option("--method", fu_method, "union | intersection | average");
  fus->add_option("--out", fu_out, "output volume")->required();

  // refine
  auto* ref = app.add_subcommand("refine", "skeleton-graph refinement of a segmentation");
  std::string rf_in, rf_out, rf_stats;
  std::optional<int> rf_min_nodes;
  double rf_threshold = 0.5;
  ref->add_option("--config", config_path, "pipeline config (refine.min_nodes default)");
  ref->add_option("--in", rf_in, "BINARY mask or PROBABILITY volume")->required();
  ref->add_option("--out", rf_out, "refined BINARY mask")->required();
  ref->add_option("--min-nodes", rf_min_nodes, "smallest skeleton component kept");
  ref->add_option("--stats", rf_stats, "write skeleton graph statistics JSON");
  ref->add_option("--threshold", rf_threshold, "threshold applied to PROBABILITY input");

  // eval
  auto* evl = app.add_subcommand("eval", "grid-searched evaluation before and after refinement");
  std::string ev_pred, ev_gt, ev_grid, ev_report;
  evl->add_option("--config", config_path, "pipeline config");
  evl->add_option("--pred-dir", ev_pred, "directory of <case>/{axial,sagittal,coronal,fused}.mhd");
  evl->add_option("--gt-dir", ev_gt, "directory of <case>/<label>");
  evl->add_option("--grid", ev_grid, "threshold grid lo:hi:step");
  evl->add_option("--report", ev_report, "report JSON path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "error: argument: " << e.what() << '\n';
    return 1;
  }

  try {
    PipelineConfig cfg = load_config(config_path);

    if (*phantom) {
      PhantomConfig pc;
      pc.dims = {ph_dims, ph_dims, ph_dims};
      for (int k = 0; k < ph_count; ++k) {
        pc.seed = ph_seed + static_cast<std::uint64_t>(k);
        const Phantom p = generate_phantom(pc);
        const fs::path dir = fs::path(ph_out) / case_name(pc.seed);
        fs::create_directories(dir);
        write_metaimage(p.image, dir / "image.mhd");
        write_metaimage(p.truth, dir / "gt.mhd");
        write_metaimage(p.specks, dir / "specks.mhd");
        std::cout << dir.string() << '\n';
      }
    } else if (*prep) {
      const WindowSpec window = WindowSpec::parse(pp_window);
      if (!pp_in.empty() || !pp_out.empty()) {
        if (pp_in.empty() || pp_out.empty()) throw ArgumentError("--in and --out go together");
        write_metaimage(preprocess_volume(read_metaimage(pp_in), pp_target, window), pp_out);
      } else {
        if (config_path.empty()) throw ArgumentError("give --in/--out or --config");
        for (const auto* list : {&cfg.train_cases, &cfg.val_cases, &cfg.test_cases})
          for (const auto& dir : *list) {
            const fs::path in = dir / cfg.raw_name;
            if (!fs::exists(in)) throw DataError("missing case image " + in.string());
            write_metaimage(preprocess_volume(read_metaimage(in), pp_target, window),
                            dir / cfg.image_name);
          }
      }
    } else if (*trn) {
      TrainOptions opts;
      if (tr_axis != "all") opts.axes = {parse_axis(tr_axis)};
      if (tr_stage == "1") opts.stages = TrainStages::stage1_only;
      else if (tr_stage == "2") opts.stages = TrainStages::stage2_only;
      else if (tr_stage != "both") throw ArgumentError("--stage must be 1, 2 or both");
      const TrainResult r = train(cfg, opts, &std::cout);
      for (const auto& p : r.checkpoints) std::cerr << "wrote " << p.string() << '\n';
    } else if (*pred) {
      const auto cases = pr_cases.empty() ? cfg.test_cases : as_paths(pr_cases);
      if (cases.empty()) throw ArgumentError("no cases to predict");
      for (const auto& p : predict(cfg, cases)) std::cout << p.string() << '\n';
    } else if (*fus) {
      const FusionMethod m = fu_method.empty() ? cfg.fusion : parse_fusion_method(fu_method);
      write_metaimage(fuse(read_metaimage(fu_a), read_metaimage(fu_s), read_metaimage(fu_c), m),
                      fu_out);
    } else if (*ref) {
      Volume in = read_metaimage(rf_in);
      if (in.kind() == VolumeKind::probability) in = threshold(in, rf_threshold);
      if (in.kind() != VolumeKind::binary) {
        throw DataError("refine expects a BINARY or PROBABILITY volume, got " +
                        std::string(to_string(in.kind())));
      }
      const int min_nodes = rf_min_nodes.value_or(cfg.min_nodes);
      if (min_nodes < 0) throw ArgumentError("--min-nodes must be non-negative");
      const SkeletonGraph graph = build_graph(skeletonize(in));
      const SkeletonGraph pruned = prune_components(graph, min_nodes);
      write_metaimage(refine_segmentation(in, pruned), rf_out);
      if (!rf_stats.empty()) {
        nlohmann::ordered_json j;
        j["min_nodes"] = min_nodes;
        j["before"] = to_json(graph_stats(graph));
        j["after"] = to_json(graph_stats(pruned));
        write_json(j, rf_stats);
      }
    } else if (*evl) {
      if (!ev_grid.empty()) cfg.threshold_grid = ThresholdGrid::parse(ev_grid);
      std::vector<fs::path> cases;
      if (!ev_pred.empty()) {
        cfg.prediction_dir = ev_pred;
        const fs::path gt_root = ev_gt.empty() ? fs::path(ev_pred) : fs::path(ev_gt);
        if (!fs::is_directory(ev_pred)) throw DataError("no prediction directory " + ev_pred);
        for (const auto& e : fs::directory_iterator(ev_pred))
          if (e.is_directory()) cases.push_back(gt_root / e.path().filename());
        std::sort(cases.begin(), cases.end());
      } else {
        if (config_path.empty()) throw ArgumentError("give --pred-dir or --config");
        cases = cfg.test_cases;
      }
      const EvaluationReport report = evaluate(cfg, cases);
      std::cout << report.table();
      write_report(report, ev_report.empty() ? cfg.report_path : fs::path(ev_report));
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.category() << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
