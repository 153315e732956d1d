#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cdee/image.hpp"
#include "cdee/layer_stack.hpp"

namespace cdee {

inline constexpr std::size_t kAutoencoderInput = 64;
inline constexpr std::size_t kEmbeddingDim = 64;

// Encoder: conv16+ReLU, 2x2 pool, conv8+ReLU, 2x2 pool, flatten, dense 64.
// Decoder: dense + ReLU, reshape, two upsample+conv stages, sigmoid.
struct AutoencoderModel {
  LayerStack<float> encoder;
  LayerStack<float> decoder;
  std::size_t embedding_dim = kEmbeddingDim;
};

AutoencoderModel build_autoencoder(std::uint64_t seed,
                                   std::size_t input_size = kAutoencoderInput,
                                   std::size_t embedding_dim = kEmbeddingDim);

struct AutoencoderConfig {
  std::size_t epochs = 5;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  AdamConfig adam;
};

struct AutoencoderTrainResult {
  AutoencoderModel model;
  std::vector<double> epoch_loss;  // mean reconstruction MSE per epoch
  double final_loss = 0.0;
};

// Patches are area-averaged down to the autoencoder input size first.
AutoencoderTrainResult train_autoencoder(std::span<const RgbImage> patches,
                                         const AutoencoderConfig& config);

// (n, embedding_dim) embeddings.
Tensor encode(AutoencoderModel& model, std::span<const RgbImage> patches);

// Reconstructions for already-downscaled NHWC input in [0, 1].
Tensor reconstruct(AutoencoderModel& model, const Tensor& input);

// Row-major (n, dim) points in double precision.
struct PointSet {
  std::size_t dim = 0;
  std::vector<double> values;

  std::size_t size() const { return dim ? values.size() / dim : 0; }
  const double* row(std::size_t i) const { return values.data() + i * dim; }
};

PointSet to_points(const Tensor& embeddings);

struct KMeansModel {
  std::size_t k = 0;
  std::size_t dim = 0;
  std::vector<double> centroids;  // (k, dim)
  int useful_cluster = -1;

  const double* centroid(std::size_t c) const {
    return centroids.data() + c * dim;
  }
};

struct KMeansFit {
  KMeansModel model;
  std::vector<int> labels;
  // Within-cluster sum of squares after each assignment step.
  std::vector<double> objective;
  std::size_t iterations = 0;
};

inline constexpr double kKMeansTolerance = 1e-4;
inline constexpr std::size_t kKMeansMaxIterations = 300;

// Seeded k-means++ initialization followed by Lloyd iterations until the
// largest centroid shift drops below 1e-4 or 300 iterations pass.
KMeansFit kmeans_fit(const PointSet& points, std::size_t k, std::uint64_t seed);

// Lloyd iterations from the given initial centroids.
KMeansFit kmeans_lloyd(const PointSet& points, std::vector<double> centroids,
                       std::size_t k);

std::vector<double> kmeans_plus_plus(const PointSet& points, std::size_t k,
                                     std::uint64_t seed);

// Nearest centroid, lowest index on ties.
std::vector<int> kmeans_assign(const KMeansModel& model,
                               const PointSet& points);

// The useful cluster is the one whose patches have the higher mean per-patch
// pixel standard deviation: tissue is textured, background near-uniform.
KMeansModel select_useful_cluster(KMeansModel model,
                                  std::span<const RgbImage> patches,
                                  std::span<const int> assignments);

struct FilterConfig {
  AutoencoderConfig autoencoder;
  std::uint64_t seed = 0;
};

struct FilterResult {
  AutoencoderTrainResult autoencoder;
  KMeansFit kmeans;
  std::vector<bool> useful;  // per input patch
};

// Autoencoder embedding, 2-means clustering and useful-cluster selection.
FilterResult filter_patches(std::span<const RgbImage> patches,
                            const FilterConfig& config);

}  // namespace cdee
