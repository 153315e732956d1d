#include "cdee/patch_filter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "cdee/rng.hpp"

namespace cdee {

namespace {

void init_uniform(Tensor& t, double limit, Rng& rng) {
  for (float& v : t.data()) v = static_cast<float>(rng.uniform(-limit, limit));
}

double fan_in(const Tensor& w) {
  return w.rank() == 4 ? static_cast<double>(w.dim(1) * w.dim(2) * w.dim(3))
                       : static_cast<double>(w.dim(0));
}

double fan_out(const Tensor& w) {
  return w.rank() == 4 ? static_cast<double>(w.dim(0) * w.dim(2) * w.dim(3))
                       : static_cast<double>(w.dim(1));
}

// He-uniform for weights feeding a ReLU, Glorot-uniform otherwise.
void init_stack(LayerStack<float>& stack, Rng& rng) {
  for (std::size_t i = 0; i < stack.layer_count(); ++i) {
    auto p = stack.layer(i).params();
    if (p.empty()) continue;
    const bool relu_next = i + 1 < stack.layer_count() &&
                           stack.layer(i + 1).kind() == LayerKind::relu;
    Tensor& w = *p[0].value;
    const double limit = relu_next
                             ? std::sqrt(6.0 / fan_in(w))
                             : std::sqrt(6.0 / (fan_in(w) + fan_out(w)));
    init_uniform(w, limit, rng);
  }
}

std::vector<RgbImage> downscale_all(std::span<const RgbImage> patches,
                                    std::size_t side) {
  std::vector<RgbImage> out;
  out.reserve(patches.size());
  for (const RgbImage& p : patches) out.push_back(resize_area(p, side, side));
  return out;
}

double squared_distance(const double* a, const double* b, std::size_t dim) {
  double s = 0.0;
  for (std::size_t d = 0; d < dim; ++d) {
    const double diff = a[d] - b[d];
    s += diff * diff;
  }
  return s;
}

}  // namespace

AutoencoderModel build_autoencoder(std::uint64_t seed, std::size_t input_size,
                                   std::size_t embedding_dim) {
  if (input_size == 0 || input_size % 4 != 0) {
    throw std::invalid_argument("autoencoder input size must be a multiple of 4");
  }
  const std::size_t q = input_size / 4;
  AutoencoderModel m;
  m.embedding_dim = embedding_dim;
  m.encoder = LayerStack<float>(Shape{input_size, input_size, 3});
  m.encoder.add(make_conv2d<float>(3, 16))
      .add(make_activation<float>(LayerKind::relu))
      .add(make_maxpool<float>(2))
      .add(make_conv2d<float>(16, 8))
      .add(make_activation<float>(LayerKind::relu))
      .add(make_maxpool<float>(2))
      .add(make_flatten<float>())
      .add(make_dense<float>(q * q * 8, embedding_dim));

  m.decoder = LayerStack<float>(Shape{embedding_dim});
  m.decoder.add(make_dense<float>(embedding_dim, q * q * 8))
      .add(make_activation<float>(LayerKind::relu))
      .add(make_reshape<float>(Shape{q, q, 8}))
      .add(make_upsample<float>(2))
      .add(make_conv2d<float>(8, 16))
      .add(make_activation<float>(LayerKind::relu))
      .add(make_upsample<float>(2))
      .add(make_conv2d<float>(16, 3))
      .add(make_activation<float>(LayerKind::sigmoid));

  Rng rng(derive_seed(seed, "autoencoder-init"));
  init_stack(m.encoder, rng);
  init_stack(m.decoder, rng);
  return m;
}

AutoencoderTrainResult train_autoencoder(std::span<const RgbImage> patches,
                                         const AutoencoderConfig& config) {
  if (patches.empty()) {
    throw std::invalid_argument("train_autoencoder: no patches");
  }
  if (config.epochs == 0 || config.batch_size == 0) {
    throw std::invalid_argument(
        "train_autoencoder: epochs and batch_size must be >= 1");
  }
  AutoencoderTrainResult r{build_autoencoder(config.seed), {}, 0.0};
  const std::size_t side = r.model.encoder.input_shape()[0];
  const std::vector<RgbImage> small = downscale_all(patches, side);

  auto enc_states = make_adam_states(r.model.encoder, config.adam);
  auto dec_states = make_adam_states(r.model.decoder, config.adam);
  Rng rng(derive_seed(config.seed, "autoencoder-shuffle"));
  std::vector<std::size_t> order(small.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<RgbImage> batch;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(small[order[i]]);
      const Tensor x = images_to_tensor(batch);
      const Tensor z = r.model.encoder.forward(x);
      const Tensor y = r.model.decoder.forward(z);
      LossResult<float> loss = mse_loss(y, x);
      r.model.encoder.backward(r.model.decoder.backward(loss.grad));
      adam_update(r.model.encoder, enc_states);
      adam_update(r.model.decoder, dec_states);
      total += loss.loss * static_cast<double>(end - start);
    }
    r.epoch_loss.push_back(total / static_cast<double>(small.size()));
  }
  r.final_loss = r.epoch_loss.back();
  return r;
}

Tensor encode(AutoencoderModel& model, std::span<const RgbImage> patches) {
  if (patches.empty()) throw std::invalid_argument("encode: no patches");
  const std::size_t side = model.encoder.input_shape()[0];
  const std::vector<RgbImage> small = downscale_all(patches, side);
  Tensor out({small.size(), model.embedding_dim});
  constexpr std::size_t kChunk = 32;
  for (std::size_t start = 0; start < small.size(); start += kChunk) {
    const std::size_t end = std::min(small.size(), start + kChunk);
    const Tensor z = model.encoder.forward(images_to_tensor(
        std::span<const RgbImage>(small).subspan(start, end - start)));
    std::copy(z.data().begin(), z.data().end(),
              out.data().begin() + start * model.embedding_dim);
  }
  return out;
}

Tensor reconstruct(AutoencoderModel& model, const Tensor& input) {
  return model.decoder.forward(model.encoder.forward(input));
}

PointSet to_points(const Tensor& embeddings) {
  if (embeddings.rank() != 2) {
    throw std::invalid_argument("embeddings must be (n, dim), got " +
                                shape_string(embeddings.shape()));
  }
  return {embeddings.dim(1),
          std::vector<double>(embeddings.data().begin(),
                              embeddings.data().end())};
}

std::vector<double> kmeans_plus_plus(const PointSet& points, std::size_t k,
                                     std::uint64_t seed) {
  const std::size_t n = points.size(), dim = points.dim;
  if (k == 0 || n < k) {
    throw std::invalid_argument("k-means needs at least k=" +
                                std::to_string(k) + " points, got " +
                                std::to_string(n));
  }
  Rng rng(derive_seed(seed, "kmeans++"));
  std::vector<double> centroids;
  centroids.reserve(k * dim);
  const std::size_t first = rng.below(n);
  centroids.insert(centroids.end(), points.row(first), points.row(first) + dim);

  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  for (std::size_t c = 1; c < k; ++c) {
    const double* last = centroids.data() + (c - 1) * dim;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(points.row(i), last, dim));
      total += d2[i];
    }
    std::size_t pick = n - 1;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double cum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        cum += d2[i];
        if (cum > target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.below(n);
    }
    centroids.insert(centroids.end(), points.row(pick), points.row(pick) + dim);
  }
  return centroids;
}

std::vector<int> kmeans_assign(const KMeansModel& model,
                               const PointSet& points) {
  if (points.dim != model.dim) {
    throw std::invalid_argument("k-means: point dim " +
                                std::to_string(points.dim) +
                                " does not match centroid dim " +
                                std::to_string(model.dim));
  }
  std::vector<int> labels(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < model.k; ++c) {
      const double d = squared_distance(points.row(i), model.centroid(c),
                                        model.dim);
      if (d < best) {
        best = d;
        labels[i] = static_cast<int>(c);
      }
    }
  }
  return labels;
}

KMeansFit kmeans_lloyd(const PointSet& points, std::vector<double> centroids,
                       std::size_t k) {
  const std::size_t n = points.size(), dim = points.dim;
  if (k == 0 || n < k) {
    throw std::invalid_argument("k-means needs at least k=" +
                                std::to_string(k) + " points, got " +
                                std::to_string(n));
  }
  if (centroids.size() != k * dim) {
    throw std::invalid_argument("k-means: initial centroids have wrong size");
  }
  KMeansFit fit;
  fit.model = {k, dim, std::move(centroids), -1};

  auto objective = [&](const std::vector<int>& labels) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      s += squared_distance(points.row(i),
                            fit.model.centroid(static_cast<std::size_t>(labels[i])),
                            dim);
    return s;
  };

  std::vector<double> sums(k * dim);
  std::vector<std::size_t> counts(k);
  while (fit.iterations < kKMeansMaxIterations) {
    fit.labels = kmeans_assign(fit.model, points);
    fit.objective.push_back(objective(fit.labels));

    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(fit.labels[i]);
      ++counts[c];
      for (std::size_t d = 0; d < dim; ++d) sums[c * dim + d] += points.row(i)[d];
    }
    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its centroid
      double s2 = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double updated = sums[c * dim + d] / static_cast<double>(counts[c]);
        const double delta = updated - fit.model.centroids[c * dim + d];
        s2 += delta * delta;
        fit.model.centroids[c * dim + d] = updated;
      }
      shift = std::max(shift, std::sqrt(s2));
    }
    ++fit.iterations;
    if (shift < kKMeansTolerance) break;
  }
  fit.labels = kmeans_assign(fit.model, points);
  fit.objective.push_back(objective(fit.labels));
  return fit;
}

KMeansFit kmeans_fit(const PointSet& points, std::size_t k,
                     std::uint64_t seed) {
  return kmeans_lloyd(points, kmeans_plus_plus(points, k, seed), k);
}

KMeansModel select_useful_cluster(KMeansModel model,
                                  std::span<const RgbImage> patches,
                                  std::span<const int> assignments) {
  if (patches.size() != assignments.size()) {
    throw std::invalid_argument("select_useful_cluster: " +
                                std::to_string(patches.size()) +
                                " patches but " +
                                std::to_string(assignments.size()) +
                                " assignments");
  }
  std::vector<double> sum(model.k, 0.0);
  std::vector<std::size_t> count(model.k, 0);
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const int c = assignments[i];
    if (c < 0 || static_cast<std::size_t>(c) >= model.k) {
      throw std::invalid_argument("select_useful_cluster: bad cluster index " +
                                  std::to_string(c));
    }
    sum[static_cast<std::size_t>(c)] += pixel_stddev(patches[i]);
    ++count[static_cast<std::size_t>(c)];
  }
  double best = -1.0;
  for (std::size_t c = 0; c < model.k; ++c) {
    if (count[c] == 0) {
      throw std::invalid_argument("select_useful_cluster: cluster " +
                                  std::to_string(c) + " is empty");
    }
    const double mean = sum[c] / static_cast<double>(count[c]);
    if (mean > best) {
      best = mean;
      model.useful_cluster = static_cast<int>(c);
    }
  }
  return model;
}

FilterResult filter_patches(std::span<const RgbImage> patches,
                            const FilterConfig& config) {
  if (patches.size() < 2) {
    throw std::invalid_argument("filter_patches: need at least 2 patches");
  }
  FilterResult r;
  r.autoencoder = train_autoencoder(patches, config.autoencoder);
  const PointSet points = to_points(encode(r.autoencoder.model, patches));
  r.kmeans = kmeans_fit(points, 2, config.seed);
  r.kmeans.model =
      select_useful_cluster(r.kmeans.model, patches, r.kmeans.labels);
  r.useful.resize(patches.size());
  for (std::size_t i = 0; i < patches.size(); ++i)
    r.useful[i] = r.kmeans.labels[i] == r.kmeans.model.useful_cluster;
  return r;
}

}  // namespace cdee
