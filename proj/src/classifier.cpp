#include "cdee/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "cdee/rng.hpp"

namespace cdee {

void TrainConfig::validate() const {
  if (!(learning_rate > 0) || !(epsilon > 0) || !(beta1 >= 0 && beta1 < 1) ||
      !(beta2 >= 0 && beta2 < 1)) {
    throw std::invalid_argument(
        "train config: learning_rate and epsilon must be > 0, betas in [0, 1)");
  }
  if (batch_size == 0 || epochs == 0 || patch_size == 0) {
    throw std::invalid_argument(
        "train config: batch_size, epochs and patch_size must be >= 1");
  }
}

std::vector<std::size_t> default_pool_chain(std::size_t patch_size) {
  if (patch_size == 1000) return {5, 5, 5};
  if (patch_size % 16 == 0) return {4, 2, 2};
  if (patch_size % 8 == 0) return {2, 2, 2};
  throw std::invalid_argument("no default pool chain for patch size " +
                              std::to_string(patch_size) +
                              "; configure pool_chain explicitly");
}

namespace {

template <typename T>
void init_uniform(BasicTensor<T>& t, double limit, Rng& rng) {
  for (T& v : t.data()) v = static_cast<T>(rng.uniform(-limit, limit));
}

}  // namespace

template <typename T>
LayerStack<T> build_model(std::size_t patch_size,
                          std::span<const std::size_t> pool_chain,
                          std::uint64_t seed, std::size_t channels,
                          std::size_t classes) {
  if (pool_chain.size() != 3) {
    throw std::invalid_argument("pool chain must have three entries");
  }
  std::size_t side = patch_size;
  std::ostringstream chain;
  chain << patch_size;
  for (std::size_t w : pool_chain) {
    if (w == 0 || side % w != 0) {
      chain << " -> " << side << "/" << w << " (not divisible)";
      throw std::invalid_argument("patch size " + std::to_string(patch_size) +
                                  " does not fit the pool chain: " +
                                  chain.str());
    }
    side /= w;
    chain << " -> " << side;
  }

  constexpr std::size_t kFilters[3] = {32, 32, 64};
  LayerStack<T> model(Shape{patch_size, patch_size, channels});
  std::size_t in = channels;
  for (int b = 0; b < 3; ++b) {
    model.add(make_conv2d<T>(in, kFilters[b]))
        .add(make_activation<T>(LayerKind::relu))
        .add(make_maxpool<T>(pool_chain[b]));
    in = kFilters[b];
  }
  const std::size_t flat = side * side * in;
  model.add(make_flatten<T>())
      .add(make_dense<T>(flat, 128))
      .add(make_activation<T>(LayerKind::relu))
      .add(make_dense<T>(128, classes))
      .add(make_activation<T>(LayerKind::softmax));

  Rng rng(derive_seed(seed, "init"));
  auto params = model.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    BasicTensor<T>& p = *params[i].value;
    if (p.rank() == 1) continue;  // biases stay zero
    const bool output_layer = i + 2 == params.size();
    if (p.rank() == 4) {
      const double fan_in = static_cast<double>(p.dim(1) * p.dim(2) * p.dim(3));
      init_uniform(p, std::sqrt(6.0 / fan_in), rng);
    } else if (output_layer) {
      init_uniform(p, std::sqrt(6.0 / static_cast<double>(p.dim(0) + p.dim(1))),
                   rng);
    } else {
      init_uniform(p, std::sqrt(6.0 / static_cast<double>(p.dim(0))), rng);
    }
  }
  return model;
}

template LayerStack<float> build_model<float>(std::size_t,
                                              std::span<const std::size_t>,
                                              std::uint64_t, std::size_t,
                                              std::size_t);
template LayerStack<double> build_model<double>(std::size_t,
                                                std::span<const std::size_t>,
                                                std::uint64_t, std::size_t,
                                                std::size_t);

TrainResult train(LayerStack<float>& model,
                  std::span<const LabeledImage> dataset,
                  const TrainConfig& config) {
  config.validate();
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");

  TrainResult result;
  result.optimizer = make_adam_states(model, config.adam());
  Rng rng(derive_seed(config.seed, "shuffle"));
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<RgbImage> batch_images;
  std::vector<int> batch_labels;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size();
         start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch_images.clear();
      batch_labels.clear();
      for (std::size_t i = start; i < end; ++i) {
        batch_images.push_back(dataset[order[i]].image);
        batch_labels.push_back(dataset[order[i]].label);
      }
      const Tensor x = images_to_tensor(batch_images);
      const Tensor logits = model.forward_logits(x);
      LossResult<float> loss = sparse_ce_loss<float>(logits, batch_labels);
      model.backward_from_logits(loss.grad);
      adam_update(model, result.optimizer);

      loss_sum += loss.loss * static_cast<double>(end - start);
      const std::vector<int> pred = argmax_rows(logits);
      for (std::size_t i = 0; i < pred.size(); ++i)
        correct += pred[i] == batch_labels[i];
    }
    const double n = static_cast<double>(dataset.size());
    result.history.push_back({loss_sum / n, static_cast<double>(correct) / n});
  }
  return result;
}

Tensor predict(LayerStack<float>& model, std::span<const RgbImage> patches,
               std::size_t batch_size) {
  if (patches.empty()) throw std::invalid_argument("predict: no patches");
  const Shape& in = model.input_shape();
  for (const RgbImage& p : patches) {
    if (p.height() != in.at(0) || p.width() != in.at(1)) {
      throw std::invalid_argument(
          "predict: model expects " + std::to_string(in[1]) + "x" +
          std::to_string(in[0]) + " patches, got " +
          std::to_string(p.width()) + "x" + std::to_string(p.height()));
    }
  }
  const std::size_t classes = model.output_shape().at(0);
  Tensor out({patches.size(), classes});
  for (std::size_t start = 0; start < patches.size(); start += batch_size) {
    const std::size_t end = std::min(patches.size(), start + batch_size);
    const Tensor probs =
        model.forward(images_to_tensor(patches.subspan(start, end - start)));
    std::copy(probs.data().begin(), probs.data().end(),
              out.data().begin() + start * classes);
  }
  return out;
}

std::vector<int> argmax_rows(const Tensor& probabilities) {
  const std::size_t rows = probabilities.dim(0), cols = probabilities.dim(1);
  std::vector<int> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* row = probabilities.data().data() + r * cols;
    out[r] = static_cast<int>(std::max_element(row, row + cols) - row);
  }
  return out;
}

}  // namespace cdee
