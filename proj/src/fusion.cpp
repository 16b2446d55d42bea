#include "vseg/fusion.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "vseg/error.hpp"

namespace vseg {

std::string_view to_string(FusionMethod method) {
  switch (method) {
    case FusionMethod::union_of: return "union";
    case FusionMethod::intersection: return "intersection";
    case FusionMethod::average: return "average";
  }
  return "average";
}

FusionMethod parse_fusion_method(std::string_view text) {
  if (text == "union") return FusionMethod::union_of;
  if (text == "intersection") return FusionMethod::intersection;
  if (text == "average") return FusionMethod::average;
  throw ArgumentError("unknown fusion method '" + std::string(text) +
                      "' (expected union, intersection or average)");
}

Volume fuse(const Volume& axial, const Volume& sagittal, const Volume& coronal,
            FusionMethod method) {
  for (const Volume* v : {&axial, &sagittal, &coronal}) {
    if (v->kind() != VolumeKind::probability) {
      throw FusionError("fusion inputs must be PROBABILITY volumes");
    }
  }
  if (!axial.same_geometry(sagittal) || !axial.same_geometry(coronal)) {
    throw FusionError("fusion inputs differ in dims, spacing or origin");
  }
  const auto a = axial.data(), s = sagittal.data(), c = coronal.data();
  std::vector<float> out(axial.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    float v[3] = {a[i], s[i], c[i]};
    std::sort(v, v + 3);
    switch (method) {
      case FusionMethod::union_of: out[i] = v[2]; break;
      case FusionMethod::intersection: out[i] = v[0]; break;
      case FusionMethod::average:
        out[i] = static_cast<float>(
            (static_cast<double>(v[0]) + static_cast<double>(v[1]) + static_cast<double>(v[2])) /
            3.0);
        break;
    }
  }
  return axial.with_data(std::move(out), VolumeKind::probability);
}

Volume threshold(const Volume& prob, double t) {
  std::vector<float> out(prob.size());
  const auto p = prob.data();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<double>(p[i]) >= t ? 1.0f : 0.0f;
  return prob.with_data(std::move(out), VolumeKind::binary);
}

Confusion confusion(const Volume& pred, const Volume& gt) {
  if (pred.dims() != gt.dims()) throw MetricError("metric inputs differ in dims");
  Confusion c;
  const auto a = pred.data(), b = gt.data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool p = a[i] != 0.0f, g = b[i] != 0.0f;
    c.true_positive += p && g;
    c.false_positive += p && !g;
    c.false_negative += !p && g;
  }
  return c;
}

double dice(const Confusion& c) {
  const double denom = 2.0 * c.true_positive + c.false_positive + c.false_negative;
  return denom == 0.0 ? 1.0 : 2.0 * c.true_positive / denom;
}

double precision(const Confusion& c) {
  const double predicted = static_cast<double>(c.true_positive + c.false_positive);
  if (predicted == 0.0) return c.false_negative == 0 ? 1.0 : 0.0;
  return c.true_positive / predicted;
}

double recall(const Confusion& c) {
  const double actual = static_cast<double>(c.true_positive + c.false_negative);
  if (actual == 0.0) return c.false_positive == 0 ? 1.0 : 0.0;
  return c.true_positive / actual;
}

double dice(const Volume& a, const Volume& b) { return dice(confusion(a, b)); }
double precision(const Volume& pred, const Volume& gt) { return precision(confusion(pred, gt)); }
double recall(const Volume& pred, const Volume& gt) { return recall(confusion(pred, gt)); }

MetricsReport make_report(std::vector<CaseMetrics> per_case, double t) {
  if (per_case.empty()) throw ArgumentError("metrics report needs at least one case");
  MetricsReport r;
  r.threshold = t;
  r.per_case = std::move(per_case);
  auto& agg = r.aggregate;
  agg.min_dice = r.per_case.front().dice;
  agg.max_dice = r.per_case.front().dice;
  double dsum = 0.0, psum = 0.0, rsum = 0.0;
  for (const auto& c : r.per_case) {
    agg.min_dice = std::min(agg.min_dice, c.dice);
    agg.max_dice = std::max(agg.max_dice, c.dice);
    dsum += c.dice;
    psum += c.precision;
    rsum += c.recall;
  }
  const double n = static_cast<double>(r.per_case.size());
  // Clamp tiny rounding above max / below min from the summation.
  agg.avg_dice = std::clamp(dsum / n, agg.min_dice, agg.max_dice);
  agg.avg_precision = psum / n;
  agg.avg_recall = rsum / n;
  return r;
}

ThresholdGrid ThresholdGrid::parse(std::string_view text) {
  ThresholdGrid g;
  double* fields[3] = {&g.lo, &g.hi, &g.step};
  std::size_t pos = 0;
  for (int k = 0; k < 3; ++k) {
    const std::size_t end = k < 2 ? text.find(':', pos) : text.size();
    if (end == std::string_view::npos) {
      throw ArgumentError("threshold grid must be lo:hi:step, got '" + std::string(text) + "'");
    }
    const auto part = text.substr(pos, end - pos);
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), *fields[k]);
    if (ec != std::errc() || ptr != part.data() + part.size()) {
      throw ArgumentError("threshold grid must be lo:hi:step, got '" + std::string(text) + "'");
    }
    pos = end + 1;
  }
  if (!(g.lo < g.hi) || !(g.step > 0.0) || g.lo < 0.0 || g.hi > 1.0) {
    throw ArgumentError("threshold grid needs 0 <= lo < hi <= 1 and step > 0, got '" +
                        std::string(text) + "'");
  }
  return g;
}

std::vector<double> ThresholdGrid::points() const {
  if (!(lo < hi) || !(step > 0.0)) throw ArgumentError("invalid threshold grid");
  const int n = static_cast<int>(std::floor((hi - lo) / step + 1e-9));
  std::vector<double> pts;
  for (int k = 0; k <= n; ++k) {
    // Snap to 1e-9 so 0.05 + 2 * 0.05 prints as 0.15.
    pts.push_back(std::round((lo + k * step) * 1e9) / 1e9);
  }
  return pts;
}

GridSearchResult grid_search_threshold(std::span<const EvalCase> cases,
                                       const ThresholdGrid& grid) {
  if (cases.empty()) throw ArgumentError("grid search needs at least one case");
  GridSearchResult best;
  double best_dice = -1.0;
  for (double t : grid.points()) {
    std::vector<CaseMetrics> per_case;
    for (const auto& c : cases) {
      const Confusion cm = confusion(threshold(*c.prob, t), *c.gt);
      per_case.push_back({c.id, dice(cm), precision(cm), recall(cm)});
    }
    MetricsReport report = make_report(std::move(per_case), t);
    const double avg = report.aggregate.avg_dice;
    best.avg_dice_by_threshold.emplace_back(t, avg);
    if (avg > best_dice) {
      best_dice = avg;
      best.threshold = t;
      best.report = std::move(report);
    }
  }
  return best;
}

namespace {

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

std::string report_row(const std::string& name, const AggregateMetrics& a) {
  return name + " " + fixed4(a.min_dice) + " " + fixed4(a.max_dice) + " " +
         fixed4(a.avg_dice) + " " + fixed4(a.avg_precision) + "/" + fixed4(a.avg_recall);
}

std::string report_table(std::span<const std::pair<std::string, MetricsReport>> rows) {
  if (rows.empty()) throw ArgumentError("report table needs at least one row");
  std::size_t name_width = std::string("Methods").size();
  for (const auto& [name, _] : rows) name_width = std::max(name_width, name.size());
  auto pad = [](const std::string& s, std::size_t w) {
    return s + std::string(w > s.size() ? w - s.size() : 0, ' ');
  };
  std::ostringstream out;
  out << pad("Methods", name_width) << "  " << pad("Min Dice", 9) << pad("Max Dice", 9)
      << pad("Avg. Dice", 10) << "Precision/Recall\n";
  for (const auto& [name, report] : rows) {
    const auto& a = report.aggregate;
    out << pad(name, name_width) << "  " << pad(fixed4(a.min_dice), 9)
        << pad(fixed4(a.max_dice), 9) << pad(fixed4(a.avg_dice), 10)
        << fixed4(a.avg_precision) << "/" << fixed4(a.avg_recall) << "\n";
  }
  return out.str();
}

nlohmann::ordered_json to_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["threshold"] = report.threshold;
  j["per_case"] = nlohmann::ordered_json::array();
  for (const auto& c : report.per_case) {
    j["per_case"].push_back(
        {{"case", c.case_id}, {"dice", c.dice}, {"precision", c.precision}, {"recall", c.recall}});
  }
  const auto& a = report.aggregate;
  j["aggregate"] = {{"min_dice", a.min_dice},
                    {"max_dice", a.max_dice},
                    {"avg_dice", a.avg_dice},
                    {"avg_precision", a.avg_precision},
                    {"avg_recall", a.avg_recall}};
  return j;
}

}  // namespace vseg
