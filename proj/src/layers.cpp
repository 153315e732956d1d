#include "cdee/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

namespace cdee {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

template <typename T>
bool all_finite(const BasicTensor<T>& t) {
  return std::all_of(t.data().begin(), t.data().end(),
                     [](T v) { return std::isfinite(v); });
}

namespace {

void require_rank(const Shape& shape, std::size_t rank, const char* what) {
  if (shape.size() != rank) {
    throw std::invalid_argument(std::string(what) + ": expected rank " +
                                std::to_string(rank) + " tensor, got " +
                                shape_string(shape));
  }
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                shape_string(a) + " vs " + shape_string(b));
  }
}

// Kernels rearranged as a (k*k*in, out) matrix so the innermost loop runs
// over output channels contiguously.
template <typename T>
std::vector<T> kernel_matrix(const Conv2dLayer<T>& layer) {
  const std::size_t co = layer.out_channels();
  const std::size_t ci = layer.in_channels();
  const std::size_t k = layer.kernel_size();
  std::vector<T> m(k * k * ci * co);
  for (std::size_t j = 0; j < co; ++j)
    for (std::size_t i = 0; i < ci; ++i)
      for (std::size_t ky = 0; ky < k; ++ky)
        for (std::size_t kx = 0; kx < k; ++kx)
          m[((ky * k + kx) * ci + i) * co + j] =
              layer.kernels[((j * ci + i) * k + ky) * k + kx];
  return m;
}

template <typename T>
void check_conv_input(const BasicTensor<T>& input,
                      const Conv2dLayer<T>& layer) {
  require_rank(input.shape(), 4, "conv2d");
  if (input.dim(3) != layer.in_channels()) {
    throw std::invalid_argument(
        "conv2d: expected " + std::to_string(layer.in_channels()) +
        " input channels, got " + std::to_string(input.dim(3)));
  }
}

}  // namespace

template <typename T>
Conv2dLayer<T>::Conv2dLayer(std::size_t in_channels, std::size_t out_channels,
                            std::size_t kernel_size)
    : kernels({out_channels, in_channels, kernel_size, kernel_size}),
      bias({out_channels}) {
  if (kernel_size % 2 == 0) {
    throw std::invalid_argument("conv2d kernel size must be odd");
  }
}

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input,
                              const Conv2dLayer<T>& layer) {
  check_conv_input(input, layer);
  const std::size_t batch = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t ci = layer.in_channels(), co = layer.out_channels();
  const std::size_t k = layer.kernel_size();
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  const std::vector<T> km = kernel_matrix(layer);
  const T* bias = layer.bias.data().data();

  BasicTensor<T> out({batch, h, w, co});
  const T* in = input.data().data();
  T* o = out.data().data();
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        T* dst = o + ((n * h + y) * w + x) * co;
        std::copy(bias, bias + co, dst);
        for (std::size_t ky = 0; ky < k; ++ky) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - pad;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            const std::ptrdiff_t sx =
                static_cast<std::ptrdiff_t>(x + kx) - pad;
            if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
            const T* src = in + ((n * h + sy) * w + sx) * ci;
            const T* rows = km.data() + (ky * k + kx) * ci * co;
            for (std::size_t i = 0; i < ci; ++i) {
              const T v = src[i];
              const T* row = rows + i * co;
              for (std::size_t j = 0; j < co; ++j) dst[j] += v * row[j];
            }
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
Conv2dGrads<T> conv2d_backward(const BasicTensor<T>& input,
                               const Conv2dLayer<T>& layer,
                               const BasicTensor<T>& grad_out) {
  check_conv_input(input, layer);
  const std::size_t batch = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t ci = layer.in_channels(), co = layer.out_channels();
  const std::size_t k = layer.kernel_size();
  require_same_shape(grad_out.shape(), Shape{batch, h, w, co},
                     "conv2d_backward grad_out");
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  const std::vector<T> km = kernel_matrix(layer);

  Conv2dGrads<T> g{BasicTensor<T>(input.shape()),
                   BasicTensor<T>(layer.kernels.shape()),
                   BasicTensor<T>(layer.bias.shape())};
  std::vector<T> gkm(km.size(), T{});
  const T* in = input.data().data();
  const T* go = grad_out.data().data();
  T* gi = g.input.data().data();
  T* gb = g.bias.data().data();

  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const T* gout = go + ((n * h + y) * w + x) * co;
        for (std::size_t j = 0; j < co; ++j) gb[j] += gout[j];
        for (std::size_t ky = 0; ky < k; ++ky) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - pad;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            const std::ptrdiff_t sx =
                static_cast<std::ptrdiff_t>(x + kx) - pad;
            if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
            const std::size_t off = ((n * h + sy) * w + sx) * ci;
            const T* src = in + off;
            T* gsrc = gi + off;
            const std::size_t base = (ky * k + kx) * ci * co;
            for (std::size_t i = 0; i < ci; ++i) {
              const T v = src[i];
              const T* row = km.data() + base + i * co;
              T* grow = gkm.data() + base + i * co;
              T acc{};
              for (std::size_t j = 0; j < co; ++j) {
                grow[j] += v * gout[j];
                acc += row[j] * gout[j];
              }
              gsrc[i] += acc;
            }
          }
        }
      }
    }
  }

  for (std::size_t j = 0; j < co; ++j)
    for (std::size_t i = 0; i < ci; ++i)
      for (std::size_t ky = 0; ky < k; ++ky)
        for (std::size_t kx = 0; kx < k; ++kx)
          g.kernels[((j * ci + i) * k + ky) * k + kx] =
              gkm[((ky * k + kx) * ci + i) * co + j];
  return g;
}

template <typename T>
MaxPoolResult<T> maxpool_forward(const BasicTensor<T>& input,
                                 const MaxPoolLayer& layer) {
  require_rank(input.shape(), 4, "maxpool");
  if (layer.window == 0 || layer.stride != layer.window) {
    throw std::invalid_argument(
        "maxpool: stride must equal a positive window size");
  }
  const std::size_t batch = input.dim(0), h = input.dim(1), w = input.dim(2),
                    c = input.dim(3), win = layer.window;
  if (h % win != 0 || w % win != 0) {
    throw std::invalid_argument(
        "maxpool: spatial dims " + std::to_string(h) + "x" +
        std::to_string(w) + " must be divisible by window " +
        std::to_string(win));
  }
  const std::size_t oh = h / win, ow = w / win;
  MaxPoolResult<T> r{BasicTensor<T>({batch, oh, ow, c}),
                     PoolIndices{input.shape(), {}}};
  r.indices.argmax.resize(r.output.size());
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x)
        for (std::size_t ch = 0; ch < c; ++ch) {
          std::size_t best = ((n * h + y * win) * w + x * win) * c + ch;
          T best_v = input[best];
          for (std::size_t dy = 0; dy < win; ++dy)
            for (std::size_t dx = 0; dx < win; ++dx) {
              const std::size_t idx =
                  ((n * h + y * win + dy) * w + x * win + dx) * c + ch;
              // Strict comparison: the first maximum in scan order wins.
              if (input[idx] > best_v) {
                best_v = input[idx];
                best = idx;
              }
            }
          const std::size_t o = ((n * oh + y) * ow + x) * c + ch;
          r.output[o] = best_v;
          r.indices.argmax[o] = best;
        }
  return r;
}

template <typename T>
BasicTensor<T> maxpool_backward(const PoolIndices& indices,
                                const BasicTensor<T>& grad_out) {
  if (grad_out.size() != indices.argmax.size()) {
    throw std::invalid_argument(
        "maxpool_backward: grad_out " + shape_string(grad_out.shape()) +
        " does not match the pooled output size " +
        std::to_string(indices.argmax.size()));
  }
  BasicTensor<T> gi(indices.input_shape);
  for (std::size_t o = 0; o < grad_out.size(); ++o)
    gi[indices.argmax[o]] += grad_out[o];
  return gi;
}

template <typename T>
DenseLayer<T>::DenseLayer(std::size_t in_features, std::size_t out_features)
    : weights({in_features, out_features}), bias({out_features}) {}

template <typename T>
BasicTensor<T> dense_forward(const BasicTensor<T>& input,
                             const DenseLayer<T>& layer) {
  require_rank(input.shape(), 2, "dense");
  if (input.dim(1) != layer.in_features()) {
    throw std::invalid_argument(
        "dense: expected " + std::to_string(layer.in_features()) +
        " input features, got " + std::to_string(input.dim(1)));
  }
  const std::size_t batch = input.dim(0), fi = layer.in_features(),
                    fo = layer.out_features();
  BasicTensor<T> out({batch, fo});
  const T* wt = layer.weights.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    T* dst = out.data().data() + b * fo;
    std::copy(layer.bias.data().begin(), layer.bias.data().end(), dst);
    const T* src = input.data().data() + b * fi;
    for (std::size_t i = 0; i < fi; ++i) {
      const T v = src[i];
      if (v == T{}) continue;
      const T* row = wt + i * fo;
      for (std::size_t o = 0; o < fo; ++o) dst[o] += v * row[o];
    }
  }
  return out;
}

template <typename T>
DenseGrads<T> dense_backward(const BasicTensor<T>& input,
                             const DenseLayer<T>& layer,
                             const BasicTensor<T>& grad_out) {
  require_rank(input.shape(), 2, "dense_backward");
  const std::size_t batch = input.dim(0), fi = layer.in_features(),
                    fo = layer.out_features();
  if (input.dim(1) != fi) {
    throw std::invalid_argument(
        "dense_backward: expected " + std::to_string(fi) +
        " input features, got " + std::to_string(input.dim(1)));
  }
  require_same_shape(grad_out.shape(), Shape{batch, fo},
                     "dense_backward grad_out");
  DenseGrads<T> g{BasicTensor<T>(input.shape()),
                  BasicTensor<T>(layer.weights.shape()),
                  BasicTensor<T>(layer.bias.shape())};
  const T* wt = layer.weights.data().data();
  T* gw = g.weights.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    const T* gout = grad_out.data().data() + b * fo;
    const T* src = input.data().data() + b * fi;
    T* gsrc = g.input.data().data() + b * fi;
    for (std::size_t o = 0; o < fo; ++o) g.bias[o] += gout[o];
    for (std::size_t i = 0; i < fi; ++i) {
      const T v = src[i];
      const T* row = wt + i * fo;
      T* grow = gw + i * fo;
      T acc{};
      for (std::size_t o = 0; o < fo; ++o) {
        grow[o] += v * gout[o];
        acc += row[o] * gout[o];
      }
      gsrc[i] = acc;
    }
  }
  return g;
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  BasicTensor<T> y = x;
  for (T& v : y.data()) v = v > T{} ? v : T{};
  return y;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x,
                             const BasicTensor<T>& grad_out) {
  require_same_shape(x.shape(), grad_out.shape(), "relu_backward");
  BasicTensor<T> g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i)
    g[i] = x[i] > T{} ? grad_out[i] : T{};
  return g;
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
  BasicTensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T v = x[i];
    // Branches keep exp() from overflowing for large |v|.
    if (v >= T{}) {
      y[i] = T{1} / (T{1} + std::exp(-v));
    } else {
      const T e = std::exp(v);
      y[i] = e / (T{1} + e);
    }
  }
  return y;
}

template <typename T>
BasicTensor<T> sigmoid_backward(const BasicTensor<T>& y,
                                const BasicTensor<T>& grad_out) {
  require_same_shape(y.shape(), grad_out.shape(), "sigmoid_backward");
  BasicTensor<T> g(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i)
    g[i] = grad_out[i] * y[i] * (T{1} - y[i]);
  return g;
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
  require_rank(logits.shape(), 2, "softmax");
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  BasicTensor<T> y(logits.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* z = logits.data().data() + r * cols;
    T* p = y.data().data() + r * cols;
    const T mx = *std::max_element(z, z + cols);
    T sum{};
    for (std::size_t c = 0; c < cols; ++c) {
      p[c] = std::exp(z[c] - mx);
      sum += p[c];
    }
    for (std::size_t c = 0; c < cols; ++c) p[c] /= sum;
  }
  return y;
}

template <typename T>
BasicTensor<T> softmax_backward(const BasicTensor<T>& y,
                                const BasicTensor<T>& grad_out) {
  require_rank(y.shape(), 2, "softmax_backward");
  require_same_shape(y.shape(), grad_out.shape(), "softmax_backward");
  const std::size_t rows = y.dim(0), cols = y.dim(1);
  BasicTensor<T> g(y.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    T dot{};
    for (std::size_t c = 0; c < cols; ++c)
      dot += y.at(r, c) * grad_out.at(r, c);
    for (std::size_t c = 0; c < cols; ++c)
      g.at(r, c) = y.at(r, c) * (grad_out.at(r, c) - dot);
  }
  return g;
}

template <typename T>
BasicTensor<T> upsample_forward(const BasicTensor<T>& input,
                                std::size_t factor) {
  require_rank(input.shape(), 4, "upsample");
  if (factor == 0) throw std::invalid_argument("upsample: factor must be > 0");
  const std::size_t batch = input.dim(0), h = input.dim(1), w = input.dim(2),
                    c = input.dim(3);
  BasicTensor<T> out({batch, h * factor, w * factor, c});
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t y = 0; y < h * factor; ++y)
      for (std::size_t x = 0; x < w * factor; ++x) {
        const T* src = &input.at(n, y / factor, x / factor, 0);
        std::copy(src, src + c, &out.at(n, y, x, 0));
      }
  return out;
}

template <typename T>
BasicTensor<T> upsample_backward(const BasicTensor<T>& grad_out,
                                 std::size_t factor) {
  require_rank(grad_out.shape(), 4, "upsample_backward");
  if (factor == 0 || grad_out.dim(1) % factor || grad_out.dim(2) % factor) {
    throw std::invalid_argument("upsample_backward: grad_out " +
                                shape_string(grad_out.shape()) +
                                " is not divisible by factor " +
                                std::to_string(factor));
  }
  const std::size_t batch = grad_out.dim(0), oh = grad_out.dim(1),
                    ow = grad_out.dim(2), c = grad_out.dim(3);
  BasicTensor<T> g({batch, oh / factor, ow / factor, c});
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x)
        for (std::size_t ch = 0; ch < c; ++ch)
          g.at(n, y / factor, x / factor, ch) += grad_out.at(n, y, x, ch);
  return g;
}

template <typename T>
LossResult<T> sparse_ce_loss(const BasicTensor<T>& logits,
                             std::span<const int> labels) {
  require_rank(logits.shape(), 2, "sparse_ce_loss");
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != batch) {
    throw std::invalid_argument("sparse_ce_loss: " +
                                std::to_string(labels.size()) +
                                " labels for a batch of " +
                                std::to_string(batch));
  }
  LossResult<T> r{0.0, softmax(logits)};
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const int label = labels[b];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw std::invalid_argument("sparse_ce_loss: label " +
                                  std::to_string(label) + " outside [0, " +
                                  std::to_string(classes) + ")");
    }
    // log-sum-exp form avoids log(0) when a probability underflows.
    const T* z = logits.data().data() + b * classes;
    const T mx = *std::max_element(z, z + classes);
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c)
      sum += std::exp(static_cast<double>(z[c] - mx));
    total += std::log(sum) - static_cast<double>(z[label] - mx);
    r.grad.at(b, static_cast<std::size_t>(label)) -= T{1};
  }
  const T inv = T{1} / static_cast<T>(batch);
  for (T& v : r.grad.data()) v *= inv;
  r.loss = total / static_cast<double>(batch);
  return r;
}

template <typename T>
LossResult<T> mse_loss(const BasicTensor<T>& prediction,
                       const BasicTensor<T>& target) {
  require_same_shape(prediction.shape(), target.shape(), "mse_loss");
  LossResult<T> r{0.0, BasicTensor<T>(prediction.shape())};
  const double n = static_cast<double>(prediction.size());
  double total = 0.0;
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    const double d =
        static_cast<double>(prediction[i]) - static_cast<double>(target[i]);
    total += d * d;
    r.grad[i] = static_cast<T>(2.0 * d / n);
  }
  r.loss = total / n;
  return r;
}

#define CDEE_INSTANTIATE_LAYERS(T)                                           \
  template bool all_finite(const BasicTensor<T>&);                          \
  template struct Conv2dLayer<T>;                                           \
  template BasicTensor<T> conv2d_forward(const BasicTensor<T>&,             \
                                         const Conv2dLayer<T>&);            \
  template Conv2dGrads<T> conv2d_backward(                                  \
      const BasicTensor<T>&, const Conv2dLayer<T>&, const BasicTensor<T>&); \
  template MaxPoolResult<T> maxpool_forward(const BasicTensor<T>&,          \
                                            const MaxPoolLayer&);           \
  template BasicTensor<T> maxpool_backward(const PoolIndices&,              \
                                           const BasicTensor<T>&);          \
  template struct DenseLayer<T>;                                            \
  template BasicTensor<T> dense_forward(const BasicTensor<T>&,              \
                                        const DenseLayer<T>&);              \
  template DenseGrads<T> dense_backward(                                    \
      const BasicTensor<T>&, const DenseLayer<T>&, const BasicTensor<T>&);  \
  template BasicTensor<T> relu(const BasicTensor<T>&);                      \
  template BasicTensor<T> relu_backward(const BasicTensor<T>&,              \
                                        const BasicTensor<T>&);             \
  template BasicTensor<T> sigmoid(const BasicTensor<T>&);                   \
  template BasicTensor<T> sigmoid_backward(const BasicTensor<T>&,           \
                                           const BasicTensor<T>&);          \
  template BasicTensor<T> softmax(const BasicTensor<T>&);                   \
  template BasicTensor<T> softmax_backward(const BasicTensor<T>&,           \
                                           const BasicTensor<T>&);          \
  template BasicTensor<T> upsample_forward(const BasicTensor<T>&,           \
                                           std::size_t);                    \
  template BasicTensor<T> upsample_backward(const BasicTensor<T>&,          \
                                            std::size_t);                   \
  template LossResult<T> sparse_ce_loss(const BasicTensor<T>&,              \
                                        std::span<const int>);              \
  template LossResult<T> mse_loss(const BasicTensor<T>&, const BasicTensor<T>&);

CDEE_INSTANTIATE_LAYERS(float)
CDEE_INSTANTIATE_LAYERS(double)

#undef CDEE_INSTANTIATE_LAYERS

}  // namespace cdee
