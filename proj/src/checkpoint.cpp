#include "cdee/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <limits>

#include "cdee/io.hpp"

namespace cdee {

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { uint_le(v, 2); }
  void u32(std::uint32_t v) { uint_le(v, 4); }
  void u64(std::uint64_t v) { uint_le(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const char* s, std::size_t n) { out_.insert(out_.end(), s, s + n); }

  void dims(const Shape& s) {
    u8(narrow<std::uint8_t>(s.size()));
    for (std::size_t d : s) u32(narrow<std::uint32_t>(d));
  }
  void floats(const Tensor& t) {
    for (float v : t.storage()) f32(v);
  }

  std::vector<std::uint8_t>& buffer() { return out_; }

  template <typename U>
  static U narrow(std::size_t v) {
    if (v > std::numeric_limits<U>::max()) {
      throw std::invalid_argument("checkpoint: value " + std::to_string(v) +
                                  " does not fit its field");
    }
    return static_cast<U>(v);
  }

 private:
  void uint_le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(uint_le(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(uint_le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint_le(4)); }
  std::uint64_t u64() { return uint_le(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }

  Shape dims() {
    const std::size_t rank = u8();
    Shape s(rank);
    for (auto& d : s) {
      d = u32();
      if (d == 0) fail("zero tensor dimension");
    }
    return s;
  }
  Tensor floats(const Shape& shape) {
    const std::size_t n = shape_size(shape);
    need(n * 4);
    std::vector<float> v(n);
    for (auto& x : v) x = f32();
    return Tensor(shape, std::move(v));
  }

  std::size_t offset() const { return pos_; }
  bool at_end() const { return pos_ == b_.size(); }

  [[noreturn]] void fail(const std::string& msg) const {
    throw FormatError("checkpoint: " + msg + " at byte offset " +
                      std::to_string(pos_));
  }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) fail("truncated data");
  }
  std::uint64_t uint_le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t{b_[pos_ + i]} << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes a uInt length; feed large buffers in chunks.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - off, 1u << 30);
    crc = crc32(crc, bytes.data() + off, static_cast<uInt>(n));
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> encode_checkpoint(
    const LayerStack<float>& model,
    const std::vector<AdamState<float>>* optimizer) {
  LayerStack<float> m = model;  // params() needs a mutable stack
  Writer w;
  w.bytes("CDEE", 4);
  w.u16(kCheckpointVersion);
  w.dims(m.input_shape());
  w.u32(Writer::narrow<std::uint32_t>(m.layer_count()));
  for (std::size_t i = 0; i < m.layer_count(); ++i) {
    Layer<float>& l = m.layer(i);
    w.u8(static_cast<std::uint8_t>(l.kind()));
    const auto cfg = l.config();
    w.u8(Writer::narrow<std::uint8_t>(cfg.size()));
    for (auto c : cfg) w.u32(c);
    const auto ps = l.params();
    w.u8(Writer::narrow<std::uint8_t>(ps.size()));
    for (const auto& p : ps) {
      w.dims(p.value->shape());
      w.floats(*p.value);
    }
  }
  if (optimizer) {
    const auto ps = m.params();
    if (optimizer->size() != ps.size()) {
      throw std::invalid_argument(
          "checkpoint: " + std::to_string(optimizer->size()) +
          " optimizer states for " + std::to_string(ps.size()) + " parameters");
    }
    w.u8(1);
    w.u32(Writer::narrow<std::uint32_t>(ps.size()));
    for (std::size_t i = 0; i < ps.size(); ++i) {
      const AdamState<float>& s = (*optimizer)[i];
      if (s.m.shape() != ps[i].value->shape() ||
          s.v.shape() != ps[i].value->shape()) {
        throw std::invalid_argument("checkpoint: optimizer state " +
                                    std::to_string(i) +
                                    " does not match its parameter shape");
      }
      w.u64(s.t);
      w.f64(s.config.alpha);
      w.f64(s.config.beta1);
      w.f64(s.config.beta2);
      w.f64(s.config.epsilon);
      w.floats(s.m);
      w.floats(s.v);
    }
  } else {
    w.u8(0);
  }
  const std::uint32_t crc = crc32_of(w.buffer());
  w.u32(crc);
  return std::move(w.buffer());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 10 || std::memcmp(bytes.data(), "CDEE", 4) != 0) {
    throw FormatError("checkpoint: missing CDEE magic at byte offset 0");
  }
  const std::size_t body = bytes.size() - 4;
  const std::uint32_t stored = Reader(bytes.subspan(body)).u32();
  const std::uint32_t actual = crc32_of(bytes.first(body));
  if (stored != actual) {
    throw FormatError("checkpoint: CRC mismatch (stored " +
                      std::to_string(stored) + ", computed " +
                      std::to_string(actual) + ")");
  }

  Reader r(bytes.first(body));
  for (int i = 0; i < 4; ++i) r.u8();
  const std::uint16_t version = r.u16();
  if (version != kCheckpointVersion) {
    r.fail("unsupported version " + std::to_string(version));
  }
  Checkpoint out;
  out.model.set_input_shape(r.dims());
  const std::uint32_t layers = r.u32();
  for (std::uint32_t i = 0; i < layers; ++i) {
    const auto kind = static_cast<LayerKind>(r.u8());
    std::vector<std::uint32_t> cfg(r.u8());
    for (auto& c : cfg) c = r.u32();
    std::unique_ptr<Layer<float>> layer;
    try {
      layer = make_layer<float>(kind, cfg);
    } catch (const std::invalid_argument& e) {
      r.fail(std::string("layer ") + std::to_string(i) + ": " + e.what());
    }
    const auto ps = layer->params();
    const std::size_t n = r.u8();
    if (n != ps.size()) {
      r.fail("layer " + std::to_string(i) + " expects " +
             std::to_string(ps.size()) + " tensors, found " + std::to_string(n));
    }
    for (const auto& p : ps) {
      const Shape s = r.dims();
      if (s != p.value->shape()) {
        r.fail("layer " + std::to_string(i) + " tensor shape " +
               shape_string(s) + " != expected " +
               shape_string(p.value->shape()));
      }
      *p.value = r.floats(s);
    }
    out.model.add(std::move(layer));
  }
  try {
    out.model.shape_chain();
  } catch (const std::invalid_argument& e) {
    r.fail(std::string("inconsistent layer table: ") + e.what());
  }

  const std::uint8_t has_adam = r.u8();
  if (has_adam > 1) r.fail("bad optimizer flag");
  if (has_adam == 1) {
    const auto ps = out.model.params();
    const std::uint32_t n = r.u32();
    if (n != ps.size()) r.fail("optimizer state count mismatch");
    std::vector<AdamState<float>> states;
    states.reserve(n);
    for (const auto& p : ps) {
      AdamState<float> s;
      s.t = r.u64();
      s.config.alpha = r.f64();
      s.config.beta1 = r.f64();
      s.config.beta2 = r.f64();
      s.config.epsilon = r.f64();
      s.m = r.floats(p.value->shape());
      s.v = r.floats(p.value->shape());
      states.push_back(std::move(s));
    }
    out.optimizer = std::move(states);
  }
  if (!r.at_end()) r.fail("trailing bytes before CRC");
  return out;
}

void save_checkpoint(const std::filesystem::path& path,
                     const LayerStack<float>& model,
                     const std::vector<AdamState<float>>* optimizer) {
  write_file_atomic(path, encode_checkpoint(model, optimizer));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace cdee
