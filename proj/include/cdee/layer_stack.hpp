#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "cdee/layers.hpp"
#include "cdee/optim.hpp"

namespace cdee {

// Numeric codes are part of the checkpoint format; never renumber.
enum class LayerKind : std::uint8_t {
  conv2d = 1,
  maxpool = 2,
  dense = 3,
  relu = 4,
  sigmoid = 5,
  flatten = 6,
  upsample = 7,
  reshape = 8,
  softmax = 9,
};

const char* layer_kind_name(LayerKind kind);

template <typename T>
struct ParamRef {
  BasicTensor<T>* value;
  BasicTensor<T>* grad;
};

// A stateful layer: forward() caches whatever backward() needs, backward()
// overwrites the parameter gradients and returns the input gradient.
// Shapes passed to output_shape() exclude the batch axis.
template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;

  virtual LayerKind kind() const = 0;
  virtual Shape output_shape(const Shape& input) const = 0;
  virtual BasicTensor<T> forward(const BasicTensor<T>& input) = 0;
  virtual BasicTensor<T> backward(const BasicTensor<T>& grad_out) = 0;
  virtual std::vector<ParamRef<T>> params() { return {}; }
  virtual std::size_t parameter_count() const { return 0; }
  // Hyperparameters that, with the kind code, rebuild the layer.
  virtual std::vector<std::uint32_t> config() const { return {}; }
  virtual std::unique_ptr<Layer> clone() const = 0;
};

template <typename T>
std::unique_ptr<Layer<T>> make_conv2d(std::size_t in_channels,
                                      std::size_t out_channels,
                                      std::size_t kernel_size = 3);
template <typename T>
std::unique_ptr<Layer<T>> make_maxpool(std::size_t window);
template <typename T>
std::unique_ptr<Layer<T>> make_dense(std::size_t in_features,
                                     std::size_t out_features);
template <typename T>
std::unique_ptr<Layer<T>> make_upsample(std::size_t factor);
template <typename T>
std::unique_ptr<Layer<T>> make_reshape(const Shape& target);
template <typename T>
std::unique_ptr<Layer<T>> make_activation(LayerKind kind);
template <typename T>
std::unique_ptr<Layer<T>> make_flatten();

// Rebuilds a layer (with zeroed parameters) from its kind code and config.
template <typename T>
std::unique_ptr<Layer<T>> make_layer(LayerKind kind,
                                     const std::vector<std::uint32_t>& config);

// One row per conv / pool / dense layer, activations folded into the row of
// the layer they follow.
struct LayerSummaryRow {
  std::string type;
  Shape output_shape;
  std::size_t parameters = 0;
};

template <typename T>
class LayerStack {
 public:
  LayerStack() = default;
  explicit LayerStack(Shape input_shape) : input_shape_(std::move(input_shape)) {}

  LayerStack(const LayerStack& other);
  LayerStack& operator=(const LayerStack& other);
  LayerStack(LayerStack&&) noexcept = default;
  LayerStack& operator=(LayerStack&&) noexcept = default;

  LayerStack& add(std::unique_ptr<Layer<T>> layer);

  const Shape& input_shape() const { return input_shape_; }
  void set_input_shape(Shape s) { input_shape_ = std::move(s); }
  std::size_t layer_count() const { return layers_.size(); }
  Layer<T>& layer(std::size_t i) { return *layers_.at(i); }
  const Layer<T>& layer(std::size_t i) const { return *layers_.at(i); }

  // Per-layer output shapes for the stored input shape; no allocation.
  std::vector<Shape> shape_chain() const;
  Shape output_shape() const;
  std::vector<LayerSummaryRow> summary() const;

  // Full forward pass, including a terminal softmax if present.
  BasicTensor<T> forward(const BasicTensor<T>& input);
  // Forward pass stopping before a terminal softmax layer.
  BasicTensor<T> forward_logits(const BasicTensor<T>& input);
  // Backward from the gradient of the forward_logits() output.
  BasicTensor<T> backward_from_logits(const BasicTensor<T>& grad);
  // Backward from the gradient of the full forward() output.
  BasicTensor<T> backward(const BasicTensor<T>& grad);

  std::vector<ParamRef<T>> params();
  std::size_t parameter_count() const;

  template <typename U>
  LayerStack<U> cast() const;

 private:
  bool ends_with_softmax() const;
  void check_input(const BasicTensor<T>& input) const;
  BasicTensor<T> run_forward(const BasicTensor<T>& input, std::size_t end);
  BasicTensor<T> run_backward(const BasicTensor<T>& grad, std::size_t end);

  Shape input_shape_;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

// One Adam state per parameter tensor, in params() order.
template <typename T>
std::vector<AdamState<T>> make_adam_states(LayerStack<T>& model,
                                           const AdamConfig& config);

// Applies one Adam step to every parameter using the gradients left by the
// last backward pass.
template <typename T>
void adam_update(LayerStack<T>& model, std::vector<AdamState<T>>& states);

}  // namespace cdee
