#include "cdee/layer_stack.hpp"

#include <stdexcept>

namespace cdee {

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::dense: return "dense";
    case LayerKind::relu: return "relu";
    case LayerKind::sigmoid: return "sigmoid";
    case LayerKind::flatten: return "flatten";
    case LayerKind::upsample: return "upsample";
    case LayerKind::reshape: return "reshape";
    case LayerKind::softmax: return "softmax";
  }
  return "unknown";
}

namespace {

Shape with_batch(std::size_t batch, const Shape& sample) {
  Shape s{batch};
  s.insert(s.end(), sample.begin(), sample.end());
  return s;
}

void require_sample_rank(const Shape& s, std::size_t rank, const char* what) {
  if (s.size() != rank) {
    throw std::invalid_argument(std::string(what) + ": expected rank-" +
                                std::to_string(rank) + " sample shape, got " +
                                shape_string(s));
  }
}

template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(std::size_t in, std::size_t out, std::size_t k)
      : conv_(in, out, k), grad_(in, out, k) {}

  LayerKind kind() const override { return LayerKind::conv2d; }
  Shape output_shape(const Shape& in) const override {
    require_sample_rank(in, 3, "conv2d");
    if (in[2] != conv_.in_channels()) {
      throw std::invalid_argument(
          "conv2d: expected " + std::to_string(conv_.in_channels()) +
          " input channels, got " + std::to_string(in[2]));
    }
    return {in[0], in[1], conv_.out_channels()};
  }
  BasicTensor<T> forward(const BasicTensor<T>& input) override {
    input_ = input;
    return conv2d_forward(input, conv_);
  }
  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override {
    Conv2dGrads<T> g = conv2d_backward(input_, conv_, grad_out);
    grad_.kernels = std::move(g.kernels);
    grad_.bias = std::move(g.bias);
    return std::move(g.input);
  }
  std::vector<ParamRef<T>> params() override {
    return {{&conv_.kernels, &grad_.kernels}, {&conv_.bias, &grad_.bias}};
  }
  std::size_t parameter_count() const override {
    return conv_.parameter_count();
  }
  std::vector<std::uint32_t> config() const override {
    return {static_cast<std::uint32_t>(conv_.in_channels()),
            static_cast<std::uint32_t>(conv_.out_channels()),
            static_cast<std::uint32_t>(conv_.kernel_size())};
  }
  std::unique_ptr<Layer<T>> clone() const override {
    auto c = std::make_unique<Conv2d>(*this);
    c->input_ = {};
    return c;
  }

 private:
  Conv2dLayer<T> conv_;
  Conv2dLayer<T> grad_;
  BasicTensor<T> input_;
};

template <typename T>
class MaxPool final : public Layer<T> {
 public:
  explicit MaxPool(std::size_t window) : pool_{window, window} {}

  LayerKind kind() const override { return LayerKind::maxpool; }
  Shape output_shape(const Shape& in) const override {
    require_sample_rank(in, 3, "maxpool");
    if (in[0] % pool_.window || in[1] % pool_.window) {
      throw std::invalid_argument(
          "maxpool: spatial dims " + std::to_string(in[0]) + "x" +
          std::to_string(in[1]) + " must be divisible by window " +
          std::to_string(pool_.window));
    }
    return {in[0] / pool_.window, in[1] / pool_.window, in[2]};
  }
  BasicTensor<T> forward(const BasicTensor<T>& input) override {
    MaxPoolResult<T> r = maxpool_forward(input, pool_);
    indices_ = std::move(r.indices);
    return std::move(r.output);
  }
  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override {
    return maxpool_backward(indices_, grad_out);
  }
  std::vector<std::uint32_t> config() const override {
    return {static_cast<std::uint32_t>(pool_.window)};
  }
  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<MaxPool>(pool_.window);
  }

 private:
  MaxPoolLayer pool_;
  PoolIndices indices_;
};

template <typename T>
class Dense final : public Layer<T> {
 public:
  Dense(std::size_t in, std::size_t out) : dense_(in, out), grad_(in, out) {}

  LayerKind kind() const override { return LayerKind::dense; }
  Shape output_shape(const Shape& in) const override {
    require_sample_rank(in, 1, "dense");
    if (in[0] != dense_.in_features()) {
      throw std::invalid_argument(
          "dense: expected " + std::to_string(dense_.in_features()) +
          " input features, got " + std::to_string(in[0]));
    }
    return {dense_.out_features()};
  }
  BasicTensor<T> forward(const BasicTensor<T>& input) override {
    input_ = input;
    return dense_forward(input, dense_);
  }
  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override {
    DenseGrads<T> g = dense_backward(input_, dense_, grad_out);
    grad_.weights = std::move(g.weights);
    grad_.bias = std::move(g.bias);
    return std::move(g.input);
  }
  std::vector<ParamRef<T>> params() override {
    return {{&dense_.weights, &grad_.weights}, {&dense_.bias, &grad_.bias}};
  }
  std::size_t parameter_count() const override {
    return dense_.parameter_count();
  }
  std::vector<std::uint32_t> config() const override {
    return {static_cast<std::uint32_t>(dense_.in_features()),
            static_cast<std::uint32_t>(dense_.out_features())};
  }
  std::unique_ptr<Layer<T>> clone() const override {
    auto c = std::make_unique<Dense>(*this);
    c->input_ = {};
    return c;
  }

 private:
  DenseLayer<T> dense_;
  DenseLayer<T> grad_;
  BasicTensor<T> input_;
};

template <typename T>
class Activation final : public Layer<T> {
 public:
  explicit Activation(LayerKind kind) : kind_(kind) {}

  LayerKind kind() const override { return kind_; }
  Shape output_shape(const Shape& in) const override {
    if (kind_ == LayerKind::softmax) require_sample_rank(in, 1, "softmax");
    return in;
  }
  BasicTensor<T> forward(const BasicTensor<T>& input) override {
    switch (kind_) {
      case LayerKind::relu:
        cache_ = input;
        return relu(input);
      case LayerKind::sigmoid:
        cache_ = sigmoid(input);
        return cache_;
      default:
        cache_ = softmax(input);
        return cache_;
    }
  }
  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override {
    switch (kind_) {
      case LayerKind::relu: return relu_backward(cache_, grad_out);
      case LayerKind::sigmoid: return sigmoid_backward(cache_, grad_out);
      default: return softmax_backward(cache_, grad_out);
    }
  }
  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<Activation>(kind_);
  }

 private:
  LayerKind kind_;
  BasicTensor<T> cache_;
};

// Flatten and Reshape only reinterpret the per-sample shape.
template <typename T>
class Reshape final : public Layer<T> {
 public:
  // An empty target means flatten.
  explicit Reshape(Shape target) : target_(std::move(target)) {}

  LayerKind kind() const override {
    return target_.empty() ? LayerKind::flatten : LayerKind::reshape;
  }
  Shape output_shape(const Shape& in) const override {
    if (target_.empty()) return {shape_size(in)};
    if (shape_size(in) != shape_size(target_)) {
      throw std::invalid_argument("reshape: cannot map " + shape_string(in) +
                                  " to " + shape_string(target_));
    }
    return target_;
  }
  BasicTensor<T> forward(const BasicTensor<T>& input) override {
    input_shape_ = input.shape();
    const Shape sample(input.shape().begin() + 1, input.shape().end());
    return input.reshaped(with_batch(input.dim(0), output_shape(sample)));
  }
  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override {
    return grad_out.reshaped(input_shape_);
  }
  std::vector<std::uint32_t> config() const override {
    return {target_.begin(), target_.end()};
  }
  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<Reshape>(target_);
  }

 private:
  Shape target_;
  Shape input_shape_;
};

template <typename T>
class Upsample final : public Layer<T> {
 public:
  explicit Upsample(std::size_t factor) : factor_(factor) {}

  LayerKind kind() const override { return LayerKind::upsample; }
  Shape output_shape(const Shape& in) const override {
    require_sample_rank(in, 3, "upsample");
    return {in[0] * factor_, in[1] * factor_, in[2]};
  }
  BasicTensor<T> forward(const BasicTensor<T>& input) override {
    return upsample_forward(input, factor_);
  }
  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override {
    return upsample_backward(grad_out, factor_);
  }
  std::vector<std::uint32_t> config() const override {
    return {static_cast<std::uint32_t>(factor_)};
  }
  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<Upsample>(factor_);
  }

 private:
  std::size_t factor_;
};

void require_config(const std::vector<std::uint32_t>& config, std::size_t n,
                    LayerKind kind) {
  if (config.size() != n) {
    throw std::invalid_argument(std::string("layer ") + layer_kind_name(kind) +
                                " expects " + std::to_string(n) +
                                " config values, got " +
                                std::to_string(config.size()));
  }
  for (std::uint32_t v : config) {
    if (v == 0) {
      throw std::invalid_argument(std::string("layer ") +
                                  layer_kind_name(kind) +
                                  " has a zero config value");
    }
  }
}

}  // namespace

template <typename T>
std::unique_ptr<Layer<T>> make_conv2d(std::size_t in, std::size_t out,
                                      std::size_t k) {
  return std::make_unique<Conv2d<T>>(in, out, k);
}
template <typename T>
std::unique_ptr<Layer<T>> make_maxpool(std::size_t window) {
  if (window == 0) throw std::invalid_argument("maxpool window must be > 0");
  return std::make_unique<MaxPool<T>>(window);
}
template <typename T>
std::unique_ptr<Layer<T>> make_dense(std::size_t in, std::size_t out) {
  return std::make_unique<Dense<T>>(in, out);
}
template <typename T>
std::unique_ptr<Layer<T>> make_upsample(std::size_t factor) {
  if (factor == 0) throw std::invalid_argument("upsample factor must be > 0");
  return std::make_unique<Upsample<T>>(factor);
}
template <typename T>
std::unique_ptr<Layer<T>> make_reshape(const Shape& target) {
  if (target.empty()) throw std::invalid_argument("reshape target is empty");
  return std::make_unique<Reshape<T>>(target);
}
template <typename T>
std::unique_ptr<Layer<T>> make_flatten() {
  return std::make_unique<Reshape<T>>(Shape{});
}
template <typename T>
std::unique_ptr<Layer<T>> make_activation(LayerKind kind) {
  if (kind != LayerKind::relu && kind != LayerKind::sigmoid &&
      kind != LayerKind::softmax) {
    throw std::invalid_argument(std::string(layer_kind_name(kind)) +
                                " is not an activation");
  }
  return std::make_unique<Activation<T>>(kind);
}

template <typename T>
std::unique_ptr<Layer<T>> make_layer(LayerKind kind,
                                     const std::vector<std::uint32_t>& c) {
  switch (kind) {
    case LayerKind::conv2d:
      require_config(c, 3, kind);
      return make_conv2d<T>(c[0], c[1], c[2]);
    case LayerKind::maxpool:
      require_config(c, 1, kind);
      return make_maxpool<T>(c[0]);
    case LayerKind::dense:
      require_config(c, 2, kind);
      return make_dense<T>(c[0], c[1]);
    case LayerKind::upsample:
      require_config(c, 1, kind);
      return make_upsample<T>(c[0]);
    case LayerKind::reshape:
      if (c.empty()) throw std::invalid_argument("reshape needs a target");
      require_config(c, c.size(), kind);
      return make_reshape<T>(Shape(c.begin(), c.end()));
    case LayerKind::flatten:
      require_config(c, 0, kind);
      return make_flatten<T>();
    case LayerKind::relu:
    case LayerKind::sigmoid:
    case LayerKind::softmax:
      require_config(c, 0, kind);
      return make_activation<T>(kind);
  }
  throw std::invalid_argument("unknown layer kind code " +
                              std::to_string(static_cast<int>(kind)));
}

template <typename T>
LayerStack<T>::LayerStack(const LayerStack& other)
    : input_shape_(other.input_shape_) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

template <typename T>
LayerStack<T>& LayerStack<T>::operator=(const LayerStack& other) {
  if (this != &other) {
    LayerStack copy(other);
    *this = std::move(copy);
  }
  return *this;
}

template <typename T>
LayerStack<T>& LayerStack<T>::add(std::unique_ptr<Layer<T>> layer) {
  layers_.push_back(std::move(layer));
  return *this;
}

template <typename T>
std::vector<Shape> LayerStack<T>::shape_chain() const {
  std::vector<Shape> chain;
  Shape s = input_shape_;
  for (const auto& l : layers_) {
    s = l->output_shape(s);
    chain.push_back(s);
  }
  return chain;
}

template <typename T>
Shape LayerStack<T>::output_shape() const {
  auto chain = shape_chain();
  return chain.empty() ? input_shape_ : chain.back();
}

template <typename T>
std::vector<LayerSummaryRow> LayerStack<T>::summary() const {
  std::vector<LayerSummaryRow> rows;
  const std::vector<Shape> chain = shape_chain();
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerKind k = layers_[i]->kind();
    if (k == LayerKind::conv2d || k == LayerKind::maxpool ||
        k == LayerKind::dense) {
      rows.push_back({layer_kind_name(k), chain[i],
                      layers_[i]->parameter_count()});
    } else if (!rows.empty() && k != LayerKind::flatten &&
               k != LayerKind::reshape) {
      rows.back().output_shape = chain[i];
    }
  }
  return rows;
}

template <typename T>
bool LayerStack<T>::ends_with_softmax() const {
  return !layers_.empty() && layers_.back()->kind() == LayerKind::softmax;
}

template <typename T>
void LayerStack<T>::check_input(const BasicTensor<T>& input) const {
  if (input.rank() != input_shape_.size() + 1 ||
      !std::equal(input_shape_.begin(), input_shape_.end(),
                  input.shape().begin() + 1)) {
    throw std::invalid_argument("model expects input samples of shape " +
                                shape_string(input_shape_) + ", got batch " +
                                shape_string(input.shape()));
  }
}

template <typename T>
BasicTensor<T> LayerStack<T>::run_forward(const BasicTensor<T>& input,
                                          std::size_t end) {
  check_input(input);
  BasicTensor<T> x = input;
  for (std::size_t i = 0; i < end; ++i) x = layers_[i]->forward(x);
  return x;
}

template <typename T>
BasicTensor<T> LayerStack<T>::run_backward(const BasicTensor<T>& grad,
                                           std::size_t end) {
  BasicTensor<T> g = grad;
  for (std::size_t i = end; i-- > 0;) g = layers_[i]->backward(g);
  return g;
}

template <typename T>
BasicTensor<T> LayerStack<T>::forward(const BasicTensor<T>& input) {
  return run_forward(input, layers_.size());
}

template <typename T>
BasicTensor<T> LayerStack<T>::forward_logits(const BasicTensor<T>& input) {
  return run_forward(input, layers_.size() - (ends_with_softmax() ? 1 : 0));
}

template <typename T>
BasicTensor<T> LayerStack<T>::backward_from_logits(const BasicTensor<T>& grad) {
  return run_backward(grad, layers_.size() - (ends_with_softmax() ? 1 : 0));
}

template <typename T>
BasicTensor<T> LayerStack<T>::backward(const BasicTensor<T>& grad) {
  return run_backward(grad, layers_.size());
}

template <typename T>
std::vector<ParamRef<T>> LayerStack<T>::params() {
  std::vector<ParamRef<T>> out;
  for (auto& l : layers_) {
    auto p = l->params();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

template <typename T>
std::size_t LayerStack<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l->parameter_count();
  return n;
}

template <typename T>
template <typename U>
LayerStack<U> LayerStack<T>::cast() const {
  LayerStack<U> out(input_shape_);
  for (const auto& l : layers_) {
    out.add(make_layer<U>(l->kind(), l->config()));
  }
  auto src = const_cast<LayerStack*>(this)->params();
  auto dst = out.params();
  for (std::size_t i = 0; i < src.size(); ++i) {
    *dst[i].value = src[i].value->template cast<U>();
  }
  return out;
}

template <typename T>
std::vector<AdamState<T>> make_adam_states(LayerStack<T>& model,
                                           const AdamConfig& config) {
  std::vector<AdamState<T>> states;
  for (const ParamRef<T>& p : model.params()) {
    states.emplace_back(p.value->shape(), config);
  }
  return states;
}

template <typename T>
void adam_update(LayerStack<T>& model, std::vector<AdamState<T>>& states) {
  auto params = model.params();
  if (params.size() != states.size()) {
    throw std::invalid_argument("optimizer holds " +
                                std::to_string(states.size()) +
                                " states for " + std::to_string(params.size()) +
                                " parameter tensors");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    adam_step(*params[i].value, *params[i].grad, states[i]);
  }
}

#define CDEE_INSTANTIATE_STACK(T)                                          \
  template std::unique_ptr<Layer<T>> make_conv2d<T>(std::size_t,          \
                                                    std::size_t,          \
                                                    std::size_t);         \
  template std::unique_ptr<Layer<T>> make_maxpool<T>(std::size_t);        \
  template std::unique_ptr<Layer<T>> make_dense<T>(std::size_t,           \
                                                   std::size_t);          \
  template std::unique_ptr<Layer<T>> make_upsample<T>(std::size_t);       \
  template std::unique_ptr<Layer<T>> make_reshape<T>(const Shape&);       \
  template std::unique_ptr<Layer<T>> make_flatten<T>();                   \
  template std::unique_ptr<Layer<T>> make_activation<T>(LayerKind);       \
  template std::unique_ptr<Layer<T>> make_layer<T>(                       \
      LayerKind, const std::vector<std::uint32_t>&);                      \
  template class LayerStack<T>;                                           \
  template std::vector<AdamState<T>> make_adam_states(LayerStack<T>&,     \
                                                      const AdamConfig&); \
  template void adam_update(LayerStack<T>&, std::vector<AdamState<T>>&);

CDEE_INSTANTIATE_STACK(float)
CDEE_INSTANTIATE_STACK(double)

#undef CDEE_INSTANTIATE_STACK

template LayerStack<double> LayerStack<float>::cast<double>() const;
template LayerStack<float> LayerStack<double>::cast<float>() const;

}  // namespace cdee
