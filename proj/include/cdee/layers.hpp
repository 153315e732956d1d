#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cdee/tensor.hpp"

namespace cdee {

// 3x3 (or any odd square) convolution, stride 1, zero padding that keeps the
// spatial size. Kernels are stored (out_channels, in_channels, k_h, k_w).
// The kernel is applied as cross-correlation, the usual deep-learning
// convention.
template <typename T>
struct Conv2dLayer {
  BasicTensor<T> kernels;
  BasicTensor<T> bias;

  Conv2dLayer() = default;
  Conv2dLayer(std::size_t in_channels, std::size_t out_channels,
              std::size_t kernel_size = 3);

  std::size_t out_channels() const { return kernels.dim(0); }
  std::size_t in_channels() const { return kernels.dim(1); }
  std::size_t kernel_size() const { return kernels.dim(2); }
  std::size_t parameter_count() const { return kernels.size() + bias.size(); }
};

template <typename T>
struct Conv2dGrads {
  BasicTensor<T> input;
  BasicTensor<T> kernels;
  BasicTensor<T> bias;
};

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input,
                              const Conv2dLayer<T>& layer);

template <typename T>
Conv2dGrads<T> conv2d_backward(const BasicTensor<T>& input,
                               const Conv2dLayer<T>& layer,
                               const BasicTensor<T>& grad_out);

// Non-overlapping max pooling; stride must equal the window.
struct MaxPoolLayer {
  std::size_t window = 2;
  std::size_t stride = 2;

  static constexpr std::size_t parameter_count() { return 0; }
};

// Flat input offsets of the winning element of each pooling window, plus the
// shape of the input they index into.
struct PoolIndices {
  Shape input_shape;
  std::vector<std::size_t> argmax;
};

template <typename T>
struct MaxPoolResult {
  BasicTensor<T> output;
  PoolIndices indices;
};

template <typename T>
MaxPoolResult<T> maxpool_forward(const BasicTensor<T>& input,
                                 const MaxPoolLayer& layer);

template <typename T>
BasicTensor<T> maxpool_backward(const PoolIndices& indices,
                                const BasicTensor<T>& grad_out);

template <typename T>
struct DenseLayer {
  BasicTensor<T> weights;  // (in_features, out_features)
  BasicTensor<T> bias;     // (out_features)

  DenseLayer() = default;
  DenseLayer(std::size_t in_features, std::size_t out_features);

  std::size_t in_features() const { return weights.dim(0); }
  std::size_t out_features() const { return weights.dim(1); }
  std::size_t parameter_count() const { return weights.size() + bias.size(); }
};

template <typename T>
struct DenseGrads {
  BasicTensor<T> input;
  BasicTensor<T> weights;
  BasicTensor<T> bias;
};

template <typename T>
BasicTensor<T> dense_forward(const BasicTensor<T>& input,
                             const DenseLayer<T>& layer);

template <typename T>
DenseGrads<T> dense_backward(const BasicTensor<T>& input,
                             const DenseLayer<T>& layer,
                             const BasicTensor<T>& grad_out);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x,
                             const BasicTensor<T>& grad_out);

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x);
// Takes the forward output, not the input.
template <typename T>
BasicTensor<T> sigmoid_backward(const BasicTensor<T>& y,
                                const BasicTensor<T>& grad_out);

// Row-wise softmax over the last axis of a (rows, classes) tensor.
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);
template <typename T>
BasicTensor<T> softmax_backward(const BasicTensor<T>& y,
                                const BasicTensor<T>& grad_out);

// Nearest-neighbour upsampling of NHWC maps by an integer factor.
template <typename T>
BasicTensor<T> upsample_forward(const BasicTensor<T>& input,
                                std::size_t factor);
template <typename T>
BasicTensor<T> upsample_backward(const BasicTensor<T>& grad_out,
                                 std::size_t factor);

template <typename T>
struct LossResult {
  double loss = 0.0;
  BasicTensor<T> grad;
};

// Mean over the batch of -log softmax(logits)[label]. The gradient is taken
// with respect to the logits.
template <typename T>
LossResult<T> sparse_ce_loss(const BasicTensor<T>& logits,
                             std::span<const int> labels);

// Mean squared error over all elements.
template <typename T>
LossResult<T> mse_loss(const BasicTensor<T>& prediction,
                       const BasicTensor<T>& target);

}  // namespace cdee
