#include "vseg/loss.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "vseg/error.hpp"

namespace vseg {
namespace {

template <typename T>
void check_batch(const ProbMap<T>& prob, std::span<const float> labels) {
  if (prob.data.size() != 2 * prob.pixels() || labels.size() != prob.pixels()) {
    throw ShapeError("loss: " + std::to_string(labels.size()) + " labels for a " +
                     std::to_string(prob.height) + "x" + std::to_string(prob.width) +
                     " probability map");
  }
  for (float l : labels) {
    if (l != 0.0f && l != 1.0f) throw ShapeError("loss: labels must be 0 or 1");
  }
}

template <typename T>
double true_prob(const ProbMap<T>& prob, std::span<const float> labels, std::size_t p) {
  return static_cast<double>(labels[p] == 1.0f ? prob.foreground(p) : prob.background(p));
}

// d/dp of -log(max(p, floor)).
double log_grad(double p) { return p > kProbabilityFloor ? -1.0 / p : 0.0; }

template <typename T>
void set_grad(ProbMap<T>& grad, std::span<const float> labels, std::size_t p, double g) {
  const std::size_t channel = labels[p] == 1.0f ? 1 : 0;
  grad.data[channel * grad.pixels() + p] = static_cast<T>(g);
}

template <typename T>
void set_logit_grad(ProbMap<T>& grad, const ProbMap<T>& prob, std::span<const float> labels,
                    std::size_t p, double weight) {
  const double fg = static_cast<double>(prob.foreground(p));
  const double target = labels[p] == 1.0f ? 1.0 : 0.0;
  // Two channels: d/dz1 = -(d/dz0).
  grad.data[grad.pixels() + p] = static_cast<T>(weight * (fg - target));
  grad.data[p] = static_cast<T>(-weight * (fg - target));
}

template <typename T>
ProbMap<T> zero_like(const ProbMap<T>& prob) {
  return ProbMap<T>{prob.height, prob.width, std::vector<T>(prob.data.size(), T(0))};
}

}  // namespace

template <typename T>
std::vector<double> pixel_losses(const ProbMap<T>& prob, std::span<const float> labels) {
  check_batch(prob, labels);
  std::vector<double> out(prob.pixels());
  for (std::size_t p = 0; p < out.size(); ++p) {
    out[p] = -std::log(std::max(true_prob(prob, labels, p), kProbabilityFloor));
  }
  return out;
}

template <typename T>
LossResult<T> nll_loss(const ProbMap<T>& prob, std::span<const float> labels) {
  const auto losses = pixel_losses(prob, labels);
  LossResult<T> r;
  r.grad = zero_like(prob);
  r.logit_grad = zero_like(prob);
  const double n = static_cast<double>(losses.size());
  double sum = 0.0;
  for (std::size_t p = 0; p < losses.size(); ++p) {
    sum += losses[p];
    set_grad(r.grad, labels, p, log_grad(true_prob(prob, labels, p)) / n);
    set_logit_grad(r.logit_grad, prob, labels, p, 1.0 / n);
    if (labels[p] == 1.0f) ++r.positives;
  }
  r.loss = sum / n;
  return r;
}

std::vector<std::size_t> select_hard_negatives(std::span<const double> losses,
                                               std::span<const float> labels,
                                               std::size_t count) {
  std::vector<std::size_t> negatives;
  for (std::size_t p = 0; p < labels.size(); ++p)
    if (labels[p] != 1.0f) negatives.push_back(p);
  count = std::min(count, negatives.size());
  auto harder = [&](std::size_t a, std::size_t b) {
    if (losses[a] != losses[b]) return losses[a] > losses[b];
    return a < b;
  };
  std::partial_sort(negatives.begin(), negatives.begin() + static_cast<std::ptrdiff_t>(count),
                    negatives.end(), harder);
  negatives.resize(count);
  return negatives;
}

template <typename T>
LossResult<T> weight_balanced_loss(const ProbMap<T>& prob, std::span<const float> labels) {
  const auto losses = pixel_losses(prob, labels);
  LossResult<T> r;
  r.grad = zero_like(prob);
  r.logit_grad = zero_like(prob);
  for (float l : labels)
    if (l == 1.0f) ++r.positives;
  if (r.positives == 0) {
    r.skipped = true;
    return r;
  }
  double positive_sum = 0.0;
  for (std::size_t p = 0; p < losses.size(); ++p) {
    if (labels[p] != 1.0f) continue;
    positive_sum += losses[p];
    set_grad(r.grad, labels, p, log_grad(true_prob(prob, labels, p)));
    set_logit_grad(r.logit_grad, prob, labels, p, 1.0);
  }
  const auto selected = select_hard_negatives(losses, labels, r.positives);
  double negative_sum = 0.0;
  for (std::size_t p : selected) {
    negative_sum += losses[p];
    set_grad(r.grad, labels, p, log_grad(true_prob(prob, labels, p)));
    set_logit_grad(r.logit_grad, prob, labels, p, 1.0);
  }
  r.selected_negatives = selected.size();
  r.loss = positive_sum + negative_sum;
  return r;
}

template std::vector<double> pixel_losses<float>(const ProbMap<float>&, std::span<const float>);
template std::vector<double> pixel_losses<double>(const ProbMap<double>&, std::span<const float>);
template LossResult<float> nll_loss<float>(const ProbMap<float>&, std::span<const float>);
template LossResult<double> nll_loss<double>(const ProbMap<double>&, std::span<const float>);
template LossResult<float> weight_balanced_loss<float>(const ProbMap<float>&,
                                                       std::span<const float>);
template LossResult<double> weight_balanced_loss<double>(const ProbMap<double>&,
                                                         std::span<const float>);

}  // namespace vseg
