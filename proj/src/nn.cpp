#include "vseg/nn.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "vseg/error.hpp"

namespace vseg {

void ModelConfig::validate() const {
  if (depth < 1) throw ArgumentError("model depth must be >= 1");
  if (base_channels < 1) throw ArgumentError("model base_channels must be >= 1");
  if (max_channels < base_channels)
    throw ArgumentError("model max_channels must be >= base_channels");
  if (radius < 0) throw ArgumentError("slice radius must be >= 0");
  if (in_channels != 2 * radius + 1)
    throw ArgumentError("in_channels must equal 2 * radius + 1 (" +
                        std::to_string(2 * radius + 1) + "), got " +
                        std::to_string(in_channels));
  if (out_channels != 2) throw ArgumentError("out_channels must be 2");
}

int ModelConfig::channels_at(int level) const {
  long c = base_channels;
  for (int i = 0; i < level && c < max_channels; ++i) c *= 2;
  return static_cast<int>(std::min<long>(c, max_channels));
}

int ModelConfig::node_inputs(int level, int column) const {
  if (column == 0) return level == 0 ? in_channels : channels_at(level - 1);
  return channels_at(level + 1) + column * channels_at(level);
}

std::size_t parameter_count(const ModelConfig& config) {
  config.validate();
  std::size_t total = 0;
  for (int i = 0; i < config.depth; ++i) {
    for (int j = 0; i + j < config.depth; ++j) {
      const std::size_t in = config.node_inputs(i, j);
      const std::size_t c = config.channels_at(i);
      total += in * c * 9 + c + c * c * 9 + c;
    }
  }
  const std::size_t c0 = config.channels_at(0);
  return total + c0 * 2 + 2;
}

template <typename T>
Tensor3<T> to_tensor(const SliceStack& stack) {
  Tensor3<T> t{stack.channels(), stack.height, stack.width, {}};
  t.data.assign(stack.data.begin(), stack.data.end());
  return t;
}

Map2D foreground_map(const ProbMap<float>& prob) {
  Map2D map{prob.height, prob.width, {}};
  map.data.assign(prob.data.begin() + static_cast<std::ptrdiff_t>(prob.pixels()),
                  prob.data.end());
  return map;
}

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <typename T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;

// 3x3, zero padding 1: cols[(c*9 + ky*3 + kx), y*W + x] = in[c, y+ky-1, x+kx-1].
template <typename T>
void im2col3(const Tensor3<T>& in, std::vector<T>& cols) {
  const int H = in.height, W = in.width;
  const std::size_t hw = in.plane();
  cols.resize(static_cast<std::size_t>(in.channels) * 9 * hw);
  T* dst = cols.data();
  for (int c = 0; c < in.channels; ++c) {
    const T* src = in.data.data() + c * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx, dst += hw) {
        const int dy = ky - 1, dx = kx - 1;
        for (int y = 0; y < H; ++y) {
          T* row = dst + static_cast<std::size_t>(y) * W;
          const int sy = y + dy;
          if (sy < 0 || sy >= H) {
            std::fill_n(row, W, T(0));
            continue;
          }
          const T* srow = src + static_cast<std::size_t>(sy) * W;
          const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
          for (int x = 0; x < x0; ++x) row[x] = T(0);
          for (int x = x0; x < x1; ++x) row[x] = srow[x + dx];
          for (int x = x1; x < W; ++x) row[x] = T(0);
        }
      }
    }
  }
}

template <typename T>
void col2im3_add(const std::vector<T>& cols, Tensor3<T>& out) {
  const int H = out.height, W = out.width;
  const std::size_t hw = out.plane();
  const T* src = cols.data();
  for (int c = 0; c < out.channels; ++c) {
    T* dst = out.data.data() + c * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx, src += hw) {
        const int dy = ky - 1, dx = kx - 1;
        for (int y = 0; y < H; ++y) {
          const int sy = y + dy;
          if (sy < 0 || sy >= H) continue;
          const T* row = src + static_cast<std::size_t>(y) * W;
          T* drow = dst + static_cast<std::size_t>(sy) * W;
          const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
          for (int x = x0; x < x1; ++x) drow[x + dx] += row[x];
        }
      }
    }
  }
}

template <typename T>
Tensor3<T> conv_forward(const Tensor3<T>& in, const std::vector<T>& weight,
                        const std::vector<T>& bias, int out_channels, int kernel) {
  Tensor3<T> out{out_channels, in.height, in.width, {}};
  out.data.resize(static_cast<std::size_t>(out_channels) * in.plane());
  const Eigen::Index hw = static_cast<Eigen::Index>(in.plane());
  const Eigen::Index k = static_cast<Eigen::Index>(in.channels) * kernel * kernel;
  MatMap<T> y(out.data.data(), out_channels, hw);
  ConstMatMap<T> w(weight.data(), out_channels, k);
  if (kernel == 1) {
    y.noalias() = w * ConstMatMap<T>(in.data.data(), k, hw);
  } else {
    std::vector<T> cols;
    im2col3(in, cols);
    y.noalias() = w * ConstMatMap<T>(cols.data(), k, hw);
  }
  y.colwise() += ConstVecMap<T>(bias.data(), out_channels);
  return out;
}

// Accumulates weight/bias gradients; writes the input gradient when asked.
template <typename T>
void conv_backward(const Tensor3<T>& in, const std::vector<T>& weight, int out_channels,
                   int kernel, const Tensor3<T>& grad_out, std::vector<T>& grad_weight,
                   std::vector<T>& grad_bias, Tensor3<T>* grad_in) {
  const Eigen::Index hw = static_cast<Eigen::Index>(in.plane());
  const Eigen::Index k = static_cast<Eigen::Index>(in.channels) * kernel * kernel;
  ConstMatMap<T> dy(grad_out.data.data(), out_channels, hw);
  ConstMatMap<T> w(weight.data(), out_channels, k);
  MatMap<T> dw(grad_weight.data(), out_channels, k);
  // Plain loop: Eigen's vectorized redux peels to the buffer alignment, so its
  // sum order (and result) would depend on where the allocator put the data.
  for (int o = 0; o < out_channels; ++o) {
    const T* row = grad_out.data.data() + static_cast<std::size_t>(o) * hw;
    T acc = 0;
    for (Eigen::Index i = 0; i < hw; ++i) acc += row[i];
    grad_bias[o] += acc;
  }
  if (kernel == 1) {
    dw.noalias() += dy * ConstMatMap<T>(in.data.data(), k, hw).transpose();
    if (grad_in) {
      *grad_in = Tensor3<T>{in.channels, in.height, in.width,
                            std::vector<T>(in.data.size())};
      MatMap<T>(grad_in->data.data(), k, hw).noalias() = w.transpose() * dy;
    }
    return;
  }
  std::vector<T> cols;
  im2col3(in, cols);
  dw.noalias() += dy * ConstMatMap<T>(cols.data(), k, hw).transpose();
  if (grad_in) {
    MatMap<T>(cols.data(), k, hw).noalias() = w.transpose() * dy;
    *grad_in = Tensor3<T>{in.channels, in.height, in.width,
                          std::vector<T>(in.data.size(), T(0))};
    col2im3_add(cols, *grad_in);
  }
}

template <typename T>
void relu_inplace(Tensor3<T>& t) {
  for (auto& v : t.data) v = v > T(0) ? v : T(0);
}

// Zeroes gradient entries where the rectifier output was not positive.
template <typename T>
void relu_mask(const Tensor3<T>& activated, Tensor3<T>& grad) {
  for (std::size_t i = 0; i < grad.data.size(); ++i)
    if (!(activated.data[i] > T(0))) grad.data[i] = T(0);
}

template <typename T>
Tensor3<T> maxpool2(const Tensor3<T>& in) {
  Tensor3<T> out{in.channels, in.height / 2, in.width / 2, {}};
  out.data.resize(static_cast<std::size_t>(out.channels) * out.plane());
  for (int c = 0; c < in.channels; ++c) {
    const T* src = in.data.data() + c * in.plane();
    T* dst = out.data.data() + c * out.plane();
    for (int y = 0; y < out.height; ++y) {
      const T* r0 = src + static_cast<std::size_t>(2 * y) * in.width;
      const T* r1 = r0 + in.width;
      for (int x = 0; x < out.width; ++x) {
        dst[y * out.width + x] =
            std::max(std::max(r0[2 * x], r0[2 * x + 1]), std::max(r1[2 * x], r1[2 * x + 1]));
      }
    }
  }
  return out;
}

// Routes each pooled gradient to the first maximal element of its 2x2 window
// (scan order: top-left, top-right, bottom-left, bottom-right).
template <typename T>
void maxpool2_backward_add(const Tensor3<T>& in, const Tensor3<T>& grad_out,
                           Tensor3<T>& grad_in) {
  for (int c = 0; c < in.channels; ++c) {
    const T* src = in.data.data() + c * in.plane();
    const T* g = grad_out.data.data() + c * grad_out.plane();
    T* dst = grad_in.data.data() + c * in.plane();
    for (int y = 0; y < grad_out.height; ++y) {
      for (int x = 0; x < grad_out.width; ++x) {
        const std::array<std::size_t, 4> idx{
            static_cast<std::size_t>(2 * y) * in.width + 2 * x,
            static_cast<std::size_t>(2 * y) * in.width + 2 * x + 1,
            static_cast<std::size_t>(2 * y + 1) * in.width + 2 * x,
            static_cast<std::size_t>(2 * y + 1) * in.width + 2 * x + 1};
        std::size_t best = idx[0];
        for (int q = 1; q < 4; ++q)
          if (src[idx[q]] > src[best]) best = idx[q];
        dst[best] += g[y * grad_out.width + x];
      }
    }
  }
}

template <typename T>
void upsample2_into(const Tensor3<T>& in, T* dst) {
  const int H = in.height * 2, W = in.width * 2;
  for (int c = 0; c < in.channels; ++c) {
    const T* src = in.data.data() + c * in.plane();
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) *dst++ = src[(y / 2) * in.width + x / 2];
  }
}

template <typename T>
void upsample2_backward_add(const T* grad, Tensor3<T>& grad_in) {
  const int H = grad_in.height * 2, W = grad_in.width * 2;
  for (int c = 0; c < grad_in.channels; ++c) {
    T* dst = grad_in.data.data() + c * grad_in.plane();
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) dst[(y / 2) * grad_in.width + x / 2] += *grad++;
  }
}

template <typename T>
void add_into(Tensor3<T>& acc, const T* src, std::size_t n) {
  if (acc.data.empty()) {
    acc.data.assign(src, src + n);
    return;
  }
  for (std::size_t i = 0; i < n; ++i) acc.data[i] += src[i];
}

}  // namespace

template <typename T>
NestedUNet<T>::NestedUNet(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const int L = config_.depth;
  slots_.assign(static_cast<std::size_t>(L) * L, 0);
  for (int j = 0; j < L; ++j) {
    for (int i = 0; i + j < L; ++i) {
      Node node;
      node.level = i;
      node.column = j;
      node.in_channels = config_.node_inputs(i, j);
      node.channels = config_.channels_at(i);
      const std::string prefix = "x" + std::to_string(i) + "_" + std::to_string(j);
      node.conv1 = add_conv(prefix + ".conv1", node.in_channels, node.channels, 3);
      node.conv2 = add_conv(prefix + ".conv2", node.channels, node.channels, 3);
      slots_[static_cast<std::size_t>(i) * L + j] = nodes_.size();
      nodes_.push_back(node);
    }
  }
  head_ = add_conv("head", config_.channels_at(0), config_.out_channels, 1);

  // Kaiming-style uniform init, bound sqrt(6 / fan_in); biases start at zero.
  std::mt19937_64 rng(seed);
  for (auto& p : params_) {
    if (p.shape.size() != 4) continue;
    const double fan_in = static_cast<double>(p.shape[1]) * p.shape[2] * p.shape[3];
    std::uniform_real_distribution<double> dist(-std::sqrt(6.0 / fan_in),
                                                std::sqrt(6.0 / fan_in));
    for (auto& v : p.value) v = static_cast<T>(dist(rng));
  }
}

template <typename T>
typename NestedUNet<T>::Conv NestedUNet<T>::add_conv(const std::string& name, int in,
                                                     int out, int kernel) {
  Conv conv{in, out, kernel, params_.size(), params_.size() + 1};
  const std::size_t nw = static_cast<std::size_t>(out) * in * kernel * kernel;
  params_.push_back({name + ".weight", {out, in, kernel, kernel}, std::vector<T>(nw),
                     std::vector<T>(nw), std::vector<T>(nw)});
  params_.push_back({name + ".bias", {out}, std::vector<T>(out), std::vector<T>(out),
                     std::vector<T>(out)});
  return conv;
}

template <typename T>
Parameter<T>& NestedUNet<T>::parameter(std::string_view name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw ArgumentError("no parameter named '" + std::string(name) + "'");
}

template <typename T>
std::size_t NestedUNet<T>::node_slot(int level, int column) const {
  return slots_[static_cast<std::size_t>(level) * config_.depth + column];
}

template <typename T>
void NestedUNet<T>::check_input(const Tensor3<T>& input) const {
  if (input.channels != config_.in_channels) {
    throw ShapeError("node x0_0: expected " + std::to_string(config_.in_channels) +
                     " input channels, got " + std::to_string(input.channels));
  }
  const int m = config_.input_multiple();
  if (input.height < 1 || input.width < 1 || input.height % m != 0 || input.width % m != 0) {
    throw ShapeError("node x" + std::to_string(config_.depth - 1) +
                     "_0: input " + std::to_string(input.height) + "x" +
                     std::to_string(input.width) + " is not a multiple of " +
                     std::to_string(m));
  }
  if (input.data.size() != static_cast<std::size_t>(input.channels) * input.plane()) {
    throw ShapeError("node x0_0: input data length does not match its shape");
  }
}

template <typename T>
std::vector<typename NestedUNet<T>::Activations> NestedUNet<T>::run(
    const Tensor3<T>& input, ProbMap<T>& prob) const {
  check_input(input);
  std::vector<Activations> acts(nodes_.size());
  for (std::size_t n = 0; n < nodes_.size(); ++n) {
    const Node& node = nodes_[n];
    Activations& a = acts[n];
    const int i = node.level, j = node.column;
    if (j == 0) {
      a.input = i == 0 ? input : maxpool2(acts[node_slot(i - 1, 0)].output);
    } else {
      const Tensor3<T>& below = acts[node_slot(i + 1, j - 1)].output;
      a.input.channels = node.in_channels;
      a.input.height = below.height * 2;
      a.input.width = below.width * 2;
      a.input.data.resize(static_cast<std::size_t>(node.in_channels) * a.input.plane());
      T* dst = a.input.data.data();
      upsample2_into(below, dst);
      dst += static_cast<std::size_t>(below.channels) * a.input.plane();
      for (int k = 0; k < j; ++k) {
        const auto& skip = acts[node_slot(i, k)].output.data;
        dst = std::copy(skip.begin(), skip.end(), dst);
      }
    }
    a.mid = conv_forward(a.input, params_[node.conv1.weight].value,
                         params_[node.conv1.bias].value, node.channels, 3);
    relu_inplace(a.mid);
    a.output = conv_forward(a.mid, params_[node.conv2.weight].value,
                            params_[node.conv2.bias].value, node.channels, 3);
    relu_inplace(a.output);
  }

  const Tensor3<T>& top = acts[node_slot(0, config_.depth - 1)].output;
  const Tensor3<T> logits =
      conv_forward(top, params_[head_.weight].value, params_[head_.bias].value, 2, 1);
  const std::size_t hw = logits.plane();
  prob.height = logits.height;
  prob.width = logits.width;
  prob.data.resize(2 * hw);
  for (std::size_t p = 0; p < hw; ++p) {
    const T z0 = logits.data[p], z1 = logits.data[hw + p];
    const T m = std::max(z0, z1);
    const T e0 = std::exp(z0 - m), e1 = std::exp(z1 - m);
    const T s = e0 + e1;
    prob.data[p] = e0 / s;
    prob.data[hw + p] = e1 / s;
  }
  return acts;
}

template <typename T>
ProbMap<T> NestedUNet<T>::forward(const Tensor3<T>& input) {
  ProbMap<T> prob;
  cache_ = run(input, prob);
  cached_prob_ = prob;
  has_forward_ = true;
  return prob;
}

template <typename T>
ProbMap<T> NestedUNet<T>::infer(const Tensor3<T>& input) const {
  ProbMap<T> prob;
  run(input, prob);
  return prob;
}

template <typename T>
std::vector<std::uint8_t> NestedUNet<T>::activation_pattern(const Tensor3<T>& input) const {
  ProbMap<T> prob;
  const auto acts = run(input, prob);
  std::vector<std::uint8_t> pattern;
  for (std::size_t n = 0; n < nodes_.size(); ++n) {
    const Node& node = nodes_[n];
    for (T v : acts[n].mid.data) pattern.push_back(v > T(0));
    for (T v : acts[n].output.data) pattern.push_back(v > T(0));
    if (node.column != 0 || node.level == 0) continue;
    const Tensor3<T>& in = acts[node_slot(node.level - 1, 0)].output;
    for (int c = 0; c < in.channels; ++c) {
      const T* src = in.data.data() + c * in.plane();
      for (int y = 0; y < in.height / 2; ++y)
        for (int x = 0; x < in.width / 2; ++x) {
          const std::size_t base = static_cast<std::size_t>(2 * y) * in.width + 2 * x;
          const T w[4] = {src[base], src[base + 1], src[base + in.width],
                          src[base + in.width + 1]};
          pattern.push_back(static_cast<std::uint8_t>(std::max_element(w, w + 4) - w));
        }
    }
  }
  return pattern;
}

template <typename T>
void NestedUNet<T>::backward(const ProbMap<T>& prob_grad) {
  if (!has_forward_) throw StateError("backward called before forward");
  if (prob_grad.height != cached_prob_.height || prob_grad.width != cached_prob_.width ||
      prob_grad.data.size() != cached_prob_.data.size()) {
    throw ShapeError("head: probability gradient shape does not match the forward output");
  }
  const std::size_t hw = cached_prob_.pixels();

  // Softmax: dz_c = p_c * (g_c - sum_k p_k g_k).
  Tensor3<T> grad_logits{2, cached_prob_.height, cached_prob_.width,
                         std::vector<T>(2 * hw)};
  for (std::size_t p = 0; p < hw; ++p) {
    const T p0 = cached_prob_.data[p], p1 = cached_prob_.data[hw + p];
    const T g0 = prob_grad.data[p], g1 = prob_grad.data[hw + p];
    const T dot = p0 * g0 + p1 * g1;
    grad_logits.data[p] = p0 * (g0 - dot);
    grad_logits.data[hw + p] = p1 * (g1 - dot);
  }
  backward_head(std::move(grad_logits));
}

template <typename T>
void NestedUNet<T>::backward_logits(const ProbMap<T>& logit_grad) {
  if (!has_forward_) throw StateError("backward called before forward");
  if (logit_grad.height != cached_prob_.height || logit_grad.width != cached_prob_.width ||
      logit_grad.data.size() != cached_prob_.data.size()) {
    throw ShapeError("head: logit gradient shape does not match the forward output");
  }
  backward_head(Tensor3<T>{2, logit_grad.height, logit_grad.width, logit_grad.data});
}

template <typename T>
void NestedUNet<T>::backward_head(Tensor3<T> grad_logits) {
  std::vector<Tensor3<T>> grads(nodes_.size());
  for (std::size_t n = 0; n < nodes_.size(); ++n) {
    const auto& out = cache_[n].output;
    grads[n] = Tensor3<T>{out.channels, out.height, out.width, {}};
  }

  const std::size_t top = node_slot(0, config_.depth - 1);
  {
    Tensor3<T> grad_top;
    conv_backward(cache_[top].output, params_[head_.weight].value, 2, 1, grad_logits,
                  params_[head_.weight].grad, params_[head_.bias].grad, &grad_top);
    add_into(grads[top], grad_top.data.data(), grad_top.data.size());
  }

  for (std::size_t n = nodes_.size(); n-- > 0;) {
    const Node& node = nodes_[n];
    const Activations& a = cache_[n];
    Tensor3<T>& g = grads[n];
    if (g.data.empty()) continue;  // no consumer reached this node
    relu_mask(a.output, g);
    Tensor3<T> grad_mid;
    conv_backward(a.mid, params_[node.conv2.weight].value, node.channels, 3, g,
                  params_[node.conv2.weight].grad, params_[node.conv2.bias].grad, &grad_mid);
    relu_mask(a.mid, grad_mid);
    const int i = node.level, j = node.column;
    const bool needs_input_grad = !(i == 0 && j == 0);
    Tensor3<T> grad_in;
    conv_backward(a.input, params_[node.conv1.weight].value, node.channels, 3, grad_mid,
                  params_[node.conv1.weight].grad, params_[node.conv1.bias].grad,
                  needs_input_grad ? &grad_in : nullptr);
    if (!needs_input_grad) continue;

    if (j == 0) {
      const std::size_t src = node_slot(i - 1, 0);
      Tensor3<T>& gs = grads[src];
      if (gs.data.empty()) gs.data.assign(cache_[src].output.data.size(), T(0));
      maxpool2_backward_add(cache_[src].output, grad_in, gs);
      continue;
    }
    const std::size_t plane = grad_in.plane();
    const T* gp = grad_in.data.data();
    const std::size_t below = node_slot(i + 1, j - 1);
    {
      Tensor3<T>& gb = grads[below];
      if (gb.data.empty()) gb.data.assign(cache_[below].output.data.size(), T(0));
      upsample2_backward_add(gp, gb);
      gp += static_cast<std::size_t>(cache_[below].output.channels) * plane;
    }
    for (int k = 0; k < j; ++k) {
      const std::size_t skip = node_slot(i, k);
      const std::size_t len = cache_[skip].output.data.size();
      add_into(grads[skip], gp, len);
      gp += len;
    }
  }
  has_gradients_ = true;
}

template <typename T>
void NestedUNet<T>::zero_grad() {
  for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), T(0));
  has_gradients_ = false;
}

template <typename T>
void sgd_step(NestedUNet<T>& model, double lr, double momentum, double weight_decay) {
  if (!model.has_gradients()) throw StateError("sgd_step called without gradients");
  for (auto& p : model.parameters()) {
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double buf = momentum * static_cast<double>(p.momentum[k]) +
                         (static_cast<double>(p.grad[k]) +
                          weight_decay * static_cast<double>(p.value[k]));
      p.momentum[k] = static_cast<T>(buf);
      p.value[k] = static_cast<T>(static_cast<double>(p.value[k]) - lr * buf);
    }
  }
  model.zero_grad();
}

double step_lr(int epoch, double base_lr, double gamma, int step_size) {
  if (epoch < 0) throw ArgumentError("epoch must be non-negative");
  if (step_size < 1) throw ArgumentError("scheduler step size must be positive");
  return base_lr * std::pow(gamma, epoch / step_size);
}

template class NestedUNet<float>;
template class NestedUNet<double>;
template Tensor3<float> to_tensor<float>(const SliceStack&);
template Tensor3<double> to_tensor<double>(const SliceStack&);
template void sgd_step<float>(NestedUNet<float>&, double, double, double);
template void sgd_step<double>(NestedUNet<double>&, double, double, double);

// ---- checkpoints ----------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'V', 'S', 'E', 'G', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename U>
void put(std::ostream& out, U v) {
  static_assert(std::endian::native == std::endian::little,
                "checkpoint I/O assumes a little-endian host");
  out.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <typename U>
U get(std::istream& in, const std::filesystem::path& path) {
  U v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(U));
  if (!in) throw ParseError("checkpoint " + path.string() + " is truncated");
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const NestedUNet<float>& model,
                     const CheckpointMeta& meta) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  const ModelConfig& c = model.config();
  for (int v : {c.depth, c.base_channels, c.max_channels, c.radius, c.in_channels,
                c.out_channels, meta.epoch, meta.stage}) {
    put<std::int32_t>(out, v);
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.parameters().size()));
  for (const auto& p : model.parameters()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.shape.size()));
    for (int d : p.shape) put<std::int32_t>(out, d);
    out.write(reinterpret_cast<const char*>(p.value.data()),
              static_cast<std::streamsize>(p.value.size() * sizeof(float)));
    out.write(reinterpret_cast<const char*>(p.momentum.data()),
              static_cast<std::streamsize>(p.momentum.size() * sizeof(float)));
  }
  if (!out) throw IoError("write failed for checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ParseError(path.string() + " is not a checkpoint");
  }
  const auto version = get<std::uint32_t>(in, path);
  if (version != kVersion) {
    throw ParseError("checkpoint " + path.string() + " has unsupported version " +
                     std::to_string(version));
  }
  ModelConfig config;
  config.depth = get<std::int32_t>(in, path);
  config.base_channels = get<std::int32_t>(in, path);
  config.max_channels = get<std::int32_t>(in, path);
  config.radius = get<std::int32_t>(in, path);
  config.in_channels = get<std::int32_t>(in, path);
  config.out_channels = get<std::int32_t>(in, path);
  CheckpointMeta meta;
  meta.epoch = get<std::int32_t>(in, path);
  meta.stage = get<std::int32_t>(in, path);

  Checkpoint ckpt{NestedUNet<float>(config, 0), meta};
  auto& params = ckpt.model.parameters();
  const auto count = get<std::uint32_t>(in, path);
  if (count != params.size()) {
    throw ParseError("checkpoint " + path.string() + " holds " + std::to_string(count) +
                     " parameters, config implies " + std::to_string(params.size()));
  }
  for (auto& p : params) {
    const auto len = get<std::uint32_t>(in, path);
    std::string name(len, '\0');
    in.read(name.data(), len);
    const auto rank = get<std::uint32_t>(in, path);
    std::vector<int> shape(rank);
    for (auto& d : shape) d = get<std::int32_t>(in, path);
    if (!in || name != p.name || shape != p.shape) {
      throw ParseError("checkpoint " + path.string() + ": parameter '" + name +
                       "' does not match expected '" + p.name + "'");
    }
    in.read(reinterpret_cast<char*>(p.value.data()),
            static_cast<std::streamsize>(p.value.size() * sizeof(float)));
    in.read(reinterpret_cast<char*>(p.momentum.data()),
            static_cast<std::streamsize>(p.momentum.size() * sizeof(float)));
    if (!in) throw ParseError("checkpoint " + path.string() + " is truncated");
  }
  return ckpt;
}

}  // namespace vseg
