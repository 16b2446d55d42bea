#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vseg/sampler.hpp"

namespace vseg {

// Shape of the nested-skip encoder-decoder.
//
// The network is a triangular grid of nodes X(i, j), i = level (resolution
// 2^-i), j = column, i + j < depth. Every node is a VGG block (two 3x3
// convolutions + ReLU, "same" padding) with C_i = min(base * 2^i, max)
// output channels.
//   X(0, 0) reads the input stack.
//   X(i, 0) reads 2x2 max-pooled X(i-1, 0).
//   X(i, j) reads concat(upsample2x(X(i+1, j-1)), X(i, 0), ..., X(i, j-1)).
// A 1x1 convolution on X(0, depth-1) yields two logits per pixel
// (channel 0 background, channel 1 foreground), followed by a softmax.
//
// Parameter count:
//   sum over nodes of  in(i,j)*C_i*9 + C_i + C_i*C_i*9 + C_i,  plus 2*C_0 + 2
//   where in(0,0) = in_channels, in(i,0) = C_{i-1}, in(i,j) = C_{i+1} + j*C_i.
// depth 3, base 8, 9 input channels: 33098 parameters.
struct ModelConfig {
  int depth = 3;
  int base_channels = 8;
  int max_channels = 64;
  int radius = 4;
  int in_channels = 9;
  int out_channels = 2;

  void validate() const;
  int channels_at(int level) const;
  int node_inputs(int level, int column) const;
  // In-plane sizes must be multiples of this.
  int input_multiple() const { return 1 << (depth - 1); }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

std::size_t parameter_count(const ModelConfig& config);

template <typename T>
struct Parameter {
  std::string name;
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;
  std::vector<T> momentum;
};

// channels x height x width, row-major.
template <typename T>
struct Tensor3 {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<T> data;

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
};

// Per-pixel two-class distribution (or its gradient): data[c * H * W + p],
// c = 0 background, c = 1 foreground.
template <typename T>
struct ProbMap {
  int height = 0;
  int width = 0;
  std::vector<T> data;

  std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }
  T background(std::size_t p) const { return data[p]; }
  T foreground(std::size_t p) const { return data[pixels() + p]; }
};

template <typename T>
Tensor3<T> to_tensor(const SliceStack& stack);

// Foreground channel as a map.
Map2D foreground_map(const ProbMap<float>& prob);

template <typename T>
class NestedUNet {
 public:
  NestedUNet(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  std::vector<Parameter<T>>& parameters() { return params_; }
  const std::vector<Parameter<T>>& parameters() const { return params_; }
  Parameter<T>& parameter(std::string_view name);

  // Training forward pass; keeps the activations needed by backward().
  ProbMap<T> forward(const Tensor3<T>& input);
  ProbMap<T> forward(const SliceStack& stack) { return forward(to_tensor<T>(stack)); }

  // Inference-only forward pass, safe to call concurrently.
  ProbMap<T> infer(const Tensor3<T>& input) const;

  // Accumulates d(loss)/d(param) given d(loss)/d(probability map) of the most
  // recent forward().
  void backward(const ProbMap<T>& prob_grad);
  // Same, starting from d(loss)/d(logits) (channel layout of the output).
  void backward_logits(const ProbMap<T>& logit_grad);

  // On/off state of every ReLU plus the winning element of every 2x2 pool
  // window for `input`. Two inputs (or parameter sets) with equal patterns lie
  // in the same smooth piece of the network function.
  std::vector<std::uint8_t> activation_pattern(const Tensor3<T>& input) const;

  void zero_grad();
  bool has_gradients() const { return has_gradients_; }
  void clear_gradient_flag() { has_gradients_ = false; }

 private:
  struct Conv {
    int in = 0;
    int out = 0;
    int kernel = 0;
    std::size_t weight = 0;  // index into params_
    std::size_t bias = 0;
  };
  struct Node {
    int level = 0;
    int column = 0;
    int in_channels = 0;
    int channels = 0;
    Conv conv1;
    Conv conv2;
  };
  struct Activations {
    Tensor3<T> input;
    Tensor3<T> mid;
    Tensor3<T> output;
  };

  Conv add_conv(const std::string& name, int in, int out, int kernel);
  std::size_t node_slot(int level, int column) const;
  void check_input(const Tensor3<T>& input) const;

  // Full forward pass; returns every node's activations.
  std::vector<Activations> run(const Tensor3<T>& input, ProbMap<T>& prob) const;
  void backward_head(Tensor3<T> grad_logits);

  ModelConfig config_;
  std::vector<Parameter<T>> params_;
  std::vector<Node> nodes_;  // forward order
  std::vector<std::size_t> slots_;  // (level, column) -> index into nodes_
  Conv head_;
  std::vector<Activations> cache_;  // indexed by node_slot
  ProbMap<T> cached_prob_;
  bool has_forward_ = false;
  bool has_gradients_ = false;
};

// buffer <- momentum * buffer + (grad + weight_decay * param)
// param  <- param - lr * buffer
// Gradients are cleared afterwards.
template <typename T>
void sgd_step(NestedUNet<T>& model, double lr, double momentum = 0.99,
              double weight_decay = 1e-8);

// base_lr * gamma^(floor(epoch / step_size))
double step_lr(int epoch, double base_lr = 0.001, double gamma = 0.1, int step_size = 20);

// Checkpoint container, all integers little-endian:
//   magic "VSEGCKPT" (8 bytes), u32 version (= 1)
//   i32 depth, base_channels, max_channels, radius, in_channels, out_channels
//   i32 epoch, i32 stage, u32 parameter count
//   per parameter: u32 name length, name bytes, u32 rank, i32 dims[rank],
//                  f32 values[n], f32 momentum[n]
struct CheckpointMeta {
  int epoch = 0;
  int stage = 0;
};

void save_checkpoint(const std::filesystem::path& path, const NestedUNet<float>& model,
                     const CheckpointMeta& meta);

struct Checkpoint {
  NestedUNet<float> model;
  CheckpointMeta meta;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace vseg
