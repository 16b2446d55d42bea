#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "support.hpp"
#include "vseg/error.hpp"
#include "vseg/phantom.hpp"
#include "vseg/pipeline.hpp"
#include "vseg/preprocess.hpp"
#include "vseg/vessel_graph.hpp"

using namespace vseg;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::trunc);
  out << text;
}

// Small phantom cases (32^3) under `root`, preprocessed like the CLI does.
void write_cases(const fs::path& root, int count) {
  for (int k = 1; k <= count; ++k) {
    PhantomConfig pc;
    pc.dims = {32, 32, 32};
    pc.seed = static_cast<std::uint64_t>(k);
    pc.root_radius = 2.0;
    const Phantom p = generate_phantom(pc);
    const fs::path dir = root / ("case_" + std::to_string(k));
    fs::create_directories(dir);
    write_metaimage(p.image, dir / "image.mhd");
    write_metaimage(normalize_hu(resample_isotropic(p.image)), dir / "norm.mhd");
    write_metaimage(p.truth, dir / "gt.mhd");
  }
}

const char* kSmallConfig =
    "# tiny run\n"
    "seed = 3\n"
    "model.base_channels = 4\n"
    "train.stage1_epochs = 1\n"
    "train.stage2_epochs = 1\n"
    "data.train = cases/case_1\n"
    "data.val = cases/case_2\n"
    "data.test = cases/case_3\n";

PipelineConfig small_run(const testing::TempDir& dir) {
  write_cases(dir.path() / "cases", 3);
  spit(dir / "run.cfg", kSmallConfig);
  return PipelineConfig::load(dir / "run.cfg");
}

}  // namespace

TEST_CASE("config grammar") {
  const auto cfg = PipelineConfig::parse(
      "  seed = 11   # trailing comment\n"
      "\n"
      "radius = 2\n"
      "model.depth = 2\n"
      "train.base_lr = 0.01\n"
      "fusion.method = union\n"
      "eval.grid = 0.1:0.3:0.1\n"
      "refine.min_nodes = 5\n"
      "data.train = a, b\n"
      "data.val = c\n"
      "data.test = /abs/d\n"
      "output.report = out/r.json\n",
      "/base");
  CHECK(cfg.seed == 11);
  CHECK(cfg.model.radius == 2);
  CHECK(cfg.model.in_channels == 5);
  CHECK(cfg.model.depth == 2);
  CHECK(cfg.train.base_lr == 0.01);
  CHECK(cfg.fusion == FusionMethod::union_of);
  CHECK(cfg.threshold_grid.points().size() == 3);
  CHECK(cfg.min_nodes == 5);
  CHECK(cfg.train_cases == std::vector<fs::path>{"/base/a", "/base/b"});
  CHECK(cfg.test_cases == std::vector<fs::path>{"/abs/d"});
  CHECK(cfg.report_path == fs::path("/base/out/r.json"));
  CHECK(cfg.checkpoint_dir == fs::path("/base/checkpoints"));

  const PipelineConfig d;
  CHECK(d.model.radius == 4);
  CHECK(d.train.base_lr == 0.001);
  CHECK(d.train.momentum == 0.99);
  CHECK(d.train.weight_decay == 1e-8);
  CHECK(d.fusion == FusionMethod::average);
  CHECK(d.min_nodes == 10);
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(PipelineConfig::parse("seed 3\n"), ParseError);
  CHECK_THROWS_AS(PipelineConfig::parse("seed = 3\nseed = 4\n"), ParseError);
  CHECK_THROWS_AS(PipelineConfig::parse("model.width = 3\n"), ParseError);
  CHECK_THROWS_AS(PipelineConfig::parse("model.depth = three\n"), ParseError);
  CHECK_THROWS_AS(PipelineConfig::parse("train.momentum = 1.5\n"), ArgumentError);
  CHECK_THROWS_AS(PipelineConfig::parse("fusion.method = max\n"), ArgumentError);
  CHECK_THROWS_AS(PipelineConfig::parse("data.train = a,b\ndata.test = b\n"), ArgumentError);
  CHECK_THROWS_AS(PipelineConfig::load("/nonexistent/run.cfg"), IoError);
}

TEST_CASE("checkpoint naming") {
  PipelineConfig cfg;
  cfg.checkpoint_dir = "ck";
  CHECK(checkpoint_path(cfg, Axis::sagittal, 1) == fs::path("ck/sagittal.stage1.ckpt"));
  CHECK(checkpoint_path(cfg, Axis::coronal, 2) == fs::path("ck/coronal.ckpt"));
}

TEST_CASE("stage two needs a stage one checkpoint") {
  testing::TempDir dir("vseg_resume");
  const auto cfg = small_run(dir);
  TrainOptions opts;
  opts.stages = TrainStages::stage2_only;
  CHECK_THROWS_AS(train(cfg, opts), ResumeError);
}

TEST_CASE("missing and mismatched data") {
  testing::TempDir dir("vseg_data");
  auto cfg = small_run(dir);
  cfg.train_cases = {dir / "cases" / "nope"};
  CHECK_THROWS_AS(train(cfg), DataError);
  cfg.train_cases.clear();
  CHECK_THROWS_AS(train(cfg), DataError);
  CHECK_THROWS_AS(load_axis_models(cfg), DataError);
}

TEST_CASE("diverging training names the step") {
  testing::TempDir dir("vseg_nan");
  auto cfg = small_run(dir);
  cfg.train.base_lr = 1e30;
  cfg.train.momentum = 0.0;
  TrainOptions opts;
  opts.axes = {Axis::axial};
  try {
    train(cfg, opts);
    FAIL("training with lr 1e30 did not diverge");
  } catch (const TrainingError& e) {
    const std::string what = e.what();
    CHECK(what.find("axial") != std::string::npos);
    CHECK(what.find("step") != std::string::npos);
  }
}

TEST_CASE("small run end to end") {
  testing::TempDir a("vseg_run_a"), b("vseg_run_b");
  const auto ca = small_run(a), cb = small_run(b);

  std::ostringstream log;
  const auto ra = train(ca, {}, &log);
  train(cb);
  REQUIRE(ra.checkpoints.size() == 6);
  CHECK(ra.log.size() == 6);  // 3 axes x (1 + 1) epochs

  SUBCASE("checkpoints are byte-identical across runs") {
    for (Axis axis : kAllAxes)
      for (int stage : {1, 2}) {
        const std::string x = slurp(checkpoint_path(ca, axis, stage));
        REQUIRE(!x.empty());
        CHECK(x == slurp(checkpoint_path(cb, axis, stage)));
      }
    CHECK(slurp(ca.log_path) == slurp(cb.log_path));
  }

  SUBCASE("log records") {
    std::istringstream lines(log.str());
    int count = 0;
    for (std::string line; std::getline(lines, line); ++count) {
      const auto j = nlohmann::json::parse(line);
      for (const char* key : {"axis", "stage", "epoch", "loss", "val_dice", "shuffle_seed"})
        CHECK(j.contains(key));
    }
    CHECK(count == 6);
    CHECK(ra.log.back().stage == 2);
    CHECK(ra.log.back().epoch == 1);
    CHECK(ra.log.back().skipped > 0);  // slices without vessel are skipped in stage 2
  }

  SUBCASE("prediction invariants") {
    const auto written = predict(ca, ca.test_cases);
    REQUIRE(written.size() == 1);
    const Volume image = read_metaimage(ca.test_cases[0] / "norm.mhd");
    const fs::path out = ca.prediction_dir / "case_3";
    const Volume ax = read_metaimage(out / "axial.mhd");
    const Volume sa = read_metaimage(out / "sagittal.mhd");
    const Volume co = read_metaimage(out / "coronal.mhd");
    const Volume fu = read_metaimage(out / "fused.mhd");
    for (const Volume* v : {&ax, &sa, &co, &fu}) {
      CHECK(v->dims() == image.dims());
      CHECK(v->kind() == VolumeKind::probability);
      for (float x : v->data()) {
        REQUIRE(x >= 0.0f);
        REQUIRE(x <= 1.0f);
      }
    }
    for (std::size_t i = 0; i < fu.size(); ++i) {
      const double mean = (static_cast<double>(ax[i]) + sa[i] + co[i]) / 3.0;
      REQUIRE(std::abs(fu[i] - mean) <= 1e-6);
    }

    const auto report = evaluate(ca, ca.test_cases);
    const std::string table = report.table();
    CHECK(table.find("Fused (Average)") != std::string::npos);
    CHECK(table.find("Refined (Average)") != std::string::npos);
    CHECK(report.methods.size() == 6);
    const auto j = report.to_json();
    CHECK(j.contains("fused"));
    CHECK(j.contains("refined"));

    // Same pipeline on the second run gives the same report.
    predict(cb, cb.test_cases);
    CHECK(evaluate(cb, cb.test_cases).to_json().dump() == j.dump());
  }

  SUBCASE("a missing axis checkpoint fails predict but not the other axes") {
    fs::remove(checkpoint_path(ca, Axis::sagittal, 2));
    CHECK_THROWS_AS(load_axis_models(ca), DataError);
    CHECK_THROWS_AS(predict(ca, ca.test_cases), DataError);
    TrainOptions opts;
    opts.axes = {Axis::axial};
    CHECK_NOTHROW(train(ca, opts));
  }

  SUBCASE("checkpoint and config must agree") {
    auto other = ca;
    other.model.radius = 2;
    other.model.in_channels = 5;
    CHECK_THROWS_AS(load_axis_models(other), CompatibilityError);
  }
}

TEST_CASE("refinement removes speck false positives") {
  std::vector<CaseVolumes> cases;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    PhantomConfig pc;
    pc.seed = seed;
    pc.dims = {48, 48, 48};
    const Phantom p = generate_phantom(pc);
    std::vector<float> prob(p.truth.size());
    for (std::size_t i = 0; i < prob.size(); ++i)
      prob[i] = p.truth[i] == 1.0f ? 0.9f : (p.specks[i] == 1.0f ? 0.8f : 0.02f);
    const Volume fused = p.truth.with_data(std::move(prob), VolumeKind::probability);
    cases.push_back({"case_" + std::to_string(seed), std::nullopt, std::nullopt, std::nullopt,
                     fused, p.truth});
  }
  const auto report = evaluate_volumes(cases, FusionMethod::average, {}, 10);
  CHECK(report.fused.aggregate.avg_precision < 1.0);
  CHECK(report.refined.aggregate.avg_precision >= report.fused.aggregate.avg_precision);
  CHECK(report.refined.aggregate.avg_precision == 1.0);
  CHECK(report.refined.aggregate.avg_recall == report.fused.aggregate.avg_recall);
  CHECK(report.methods.empty());  // no axis volumes: only fused and refined

  for (const auto& c : cases) {
    const Volume mask = threshold(c.fused, report.fused.threshold);
    const Volume refined = refine(mask, 10);
    for (std::size_t i = 0; i < mask.size(); ++i) REQUIRE(refined[i] <= mask[i]);
  }
  CHECK_THROWS_AS(evaluate_volumes(std::span<const CaseVolumes>(), FusionMethod::average, {}, 10),
                  ArgumentError);
}

TEST_CASE("command line error lines") {
  testing::TempDir dir("vseg_cli");
  const fs::path err = dir / "err.txt";
  auto run = [&](const std::string& args) {
    const std::string cmd = std::string(VSEG_CLI) + " " + args + " 2> " + err.string() + " > /dev/null";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  };
  CHECK(run("train --config " + (dir / "missing.cfg").string()) == 1);
  CHECK(slurp(err).rfind("error: io: ", 0) == 0);

  spit(dir / "bad.cfg", "model.depth = 0\n");
  CHECK(run("predict --config " + (dir / "bad.cfg").string()) == 1);
  CHECK(slurp(err).rfind("error: argument: ", 0) == 0);

  CHECK(run("fuse --axial a --sagittal s") == 1);
  CHECK(slurp(err).rfind("error: argument: ", 0) == 0);

  CHECK(run("fuse --axial " + (dir / "none.mhd").string() + " --sagittal x --coronal y --out z") == 1);
  CHECK(slurp(err).rfind("error: io: ", 0) == 0);

  // One error line, no trailing noise.
  const std::string text = slurp(err);
  CHECK(std::count(text.begin(), text.end(), '\n') == 1);
}
