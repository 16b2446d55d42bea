#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vseg/nn.hpp"

namespace vseg {

// Probabilities are clamped from below at this value before the log.
inline constexpr double kProbabilityFloor = 1e-7;

template <typename T>
struct LossResult {
  double loss = 0.0;
  ProbMap<T> grad;  // d(loss)/d(prob), same layout as the forward output
  // d(loss)/d(logits) through the softmax, w * (p - onehot) per selected
  // pixel. Equals the chain rule applied to `grad` wherever p > floor, but
  // keeps pulling on pixels whose probability has fallen under the clamp.
  ProbMap<T> logit_grad;
  std::size_t positives = 0;
  std::size_t selected_negatives = 0;
  bool skipped = false;  // no positive pixel: nothing to balance against
};

// Per-pixel -log p(true class), after the clamp. `labels` holds {0, 1}.
template <typename T>
std::vector<double> pixel_losses(const ProbMap<T>& prob, std::span<const float> labels);

// Mean over all pixels of -log p(true class).
template <typename T>
LossResult<T> nll_loss(const ProbMap<T>& prob, std::span<const float> labels);

// Sum of the positive-pixel losses plus the N largest negative-pixel losses,
// N = number of positive pixels. Negatives are ranked by loss (descending) and
// ties go to the lowest pixel index. Unselected negatives get zero gradient.
// A map with no positive pixel is skipped: zero loss, zero gradient.
template <typename T>
LossResult<T> weight_balanced_loss(const ProbMap<T>& prob, std::span<const float> labels);

// Indices of the negatives chosen by weight_balanced_loss, in rank order.
std::vector<std::size_t> select_hard_negatives(std::span<const double> losses,
                                               std::span<const float> labels,
                                               std::size_t count);

}  // namespace vseg
