#pragma once

#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vseg/volume.hpp"

namespace vseg {

enum class FusionMethod { union_of, intersection, average };

std::string_view to_string(FusionMethod method);
FusionMethod parse_fusion_method(std::string_view text);

// Voxelwise max (union), min (intersection) or mean (average) of three
// PROBABILITY volumes with identical geometry. The mean is computed from the
// sorted triple, so the result does not depend on argument order.
Volume fuse(const Volume& axial, const Volume& sagittal, const Volume& coronal,
            FusionMethod method);

// BINARY volume: 1 where p >= t.
Volume threshold(const Volume& prob, double t);

struct Confusion {
  std::size_t true_positive = 0;
  std::size_t false_positive = 0;
  std::size_t false_negative = 0;
};

Confusion confusion(const Volume& pred, const Volume& gt);

// Two empty masks have dice 1. Precision (recall) is 1 when both masks are
// empty and 0 when only its denominator is.
double dice(const Volume& a, const Volume& b);
double precision(const Volume& pred, const Volume& gt);
double recall(const Volume& pred, const Volume& gt);

double dice(const Confusion& c);
double precision(const Confusion& c);
double recall(const Confusion& c);

struct CaseMetrics {
  std::string case_id;
  double dice = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

struct AggregateMetrics {
  double min_dice = 0.0;
  double max_dice = 0.0;
  double avg_dice = 0.0;
  double avg_precision = 0.0;
  double avg_recall = 0.0;
};

struct MetricsReport {
  std::vector<CaseMetrics> per_case;
  AggregateMetrics aggregate;
  double threshold = 0.0;
};

MetricsReport make_report(std::vector<CaseMetrics> per_case, double threshold);

// Inclusive grid lo, lo + step, ..., hi.
struct ThresholdGrid {
  double lo = 0.05;
  double hi = 0.5;
  double step = 0.05;

  // "lo:hi:step"
  static ThresholdGrid parse(std::string_view text);
  std::vector<double> points() const;
};

struct EvalCase {
  std::string id;
  const Volume* prob = nullptr;
  const Volume* gt = nullptr;
};

struct GridSearchResult {
  double threshold = 0.0;
  MetricsReport report;
  std::vector<std::pair<double, double>> avg_dice_by_threshold;
};

// Picks the grid point with the highest average dice; ties go to the smaller
// threshold.
GridSearchResult grid_search_threshold(std::span<const EvalCase> cases,
                                       const ThresholdGrid& grid = {});

// Table with columns Methods | Min Dice | Max Dice | Avg. Dice |
// Precision/Recall, four decimals per value.
std::string report_table(std::span<const std::pair<std::string, MetricsReport>> rows);

// Single row of report_table, columns separated by single spaces.
std::string report_row(const std::string& name, const AggregateMetrics& aggregate);

nlohmann::ordered_json to_json(const MetricsReport& report);

}  // namespace vseg
