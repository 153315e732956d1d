#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cdee/image.hpp"
#include "cdee/layer_stack.hpp"

namespace cdee {

struct TrainConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 16;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  std::size_t patch_size = 64;
  std::vector<std::size_t> pool_chain;  // empty: default_pool_chain()

  void validate() const;
  AdamConfig adam() const {
    return {learning_rate, beta1, beta2, epsilon};
  }
};

// 5/5/5 for 1000-pixel patches (1000 -> 200 -> 40 -> 8); 4/2/2 for the
// 64-pixel desk scale; 2/2/2 for other sizes divisible by 8.
std::vector<std::size_t> default_pool_chain(std::size_t patch_size);

// Three conv(3x3, same)+ReLU+maxpool blocks with 32, 32 and 64 filters,
// then flatten, dense 128 + ReLU, dense `classes` + softmax. Hidden layers
// use He-uniform weights, the output layer Glorot-uniform, biases zero.
template <typename T>
LayerStack<T> build_model(std::size_t patch_size,
                          std::span<const std::size_t> pool_chain,
                          std::uint64_t seed, std::size_t channels = 3,
                          std::size_t classes = 3);

struct LabeledImage {
  RgbImage image;
  int label = 0;
};

struct EpochStats {
  double loss = 0.0;
  double accuracy = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  std::vector<AdamState<float>> optimizer;
};

// Seeded shuffled mini-batches; forward, sparse cross-entropy, backward and
// one Adam step per batch. Epoch stats average over the batches seen.
TrainResult train(LayerStack<float>& model,
                  std::span<const LabeledImage> dataset,
                  const TrainConfig& config);

// Per-patch class-probability rows, (n, classes).
Tensor predict(LayerStack<float>& model, std::span<const RgbImage> patches,
               std::size_t batch_size = 32);

std::vector<int> argmax_rows(const Tensor& probabilities);

}  // namespace cdee
