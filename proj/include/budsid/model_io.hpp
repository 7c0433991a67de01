#pragma once

// Binary model files. All integers are little-endian u32/i32, all reals
// little-endian IEEE float32, independent of the host byte order.
//
// BIDM: "BIDM" u32 version u32 kind, then
//   cnn: u32 n_samples n_classes filters kernel dense1 dense2, u32 tensor_count,
//        per tensor { u32 count, f32[count] }
//   svm: u32 n_features n_classes n_machines, f32 gamma C cv_accuracy, i32[n_classes] classes,
//        per machine { i32 pos neg, u32 n_sv, f32 rho, f32[n_sv] coef, f32[n_sv*n_features] sv }
// BIDQ: "BIDQ" u32 version, cnn shape header, u32 tensor_count, f32[tensor_count] scales,
//   per weight tensor { u32 count, i8[count] }, per bias tensor { u32 count, f32[count] }

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "budsid/cnn.hpp"
#include "budsid/quant.hpp"
#include "budsid/svm.hpp"

namespace budsid {

inline constexpr std::uint32_t kModelFormatVersion = 1;

enum class ModelKind : std::uint32_t { cnn = 1, svm = 2 };

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void i8(std::int8_t v) { buf_.push_back(static_cast<std::uint8_t>(v)); }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& b) : buf_(b) {}
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw FormatError("model file truncated at byte " + std::to_string(pos_));
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::int8_t i8() {
    need(1);
    return static_cast<std::int8_t>(buf_[pos_++]);
  }
  std::string tag() {
    need(4);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), 4);
    pos_ += 4;
    return s;
  }
  /// Element count bounded by the remaining bytes, so corrupt counts cannot trigger huge allocations.
  std::uint32_t count(std::size_t elem_size) {
    const std::uint32_t n = u32();
    need(static_cast<std::size_t>(n) * elem_size);
    return n;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  const std::vector<std::uint8_t>& buf_;
  std::size_t pos_ = 0;
};

inline void write_shape(ByteWriter& w, const CnnShape& s) {
  for (int v : {s.n_samples, s.n_classes, s.filters, s.kernel, s.dense1, s.dense2}) w.u32(static_cast<std::uint32_t>(v));
}

inline CnnShape read_shape(ByteReader& r) {
  CnnShape s;
  s.n_samples = static_cast<int>(r.u32());
  s.n_classes = static_cast<int>(r.u32());
  s.filters = static_cast<int>(r.u32());
  s.kernel = static_cast<int>(r.u32());
  s.dense1 = static_cast<int>(r.u32());
  s.dense2 = static_cast<int>(r.u32());
  if (!s.valid() || s.n_samples > 1 << 20 || s.filters > 1 << 16 || s.dense1 > 1 << 16 || s.dense2 > 1 << 16 ||
      s.n_classes > 1 << 16)
    throw FormatError("invalid network shape in model file");
  return s;
}

inline void expect_header(ByteReader& r, const char* magic) {
  const auto tag = r.tag();
  if (tag != magic) throw FormatError(std::string("bad magic, expected ") + magic);
  const auto version = r.u32();
  if (version != kModelFormatVersion) throw FormatError("unsupported format version " + std::to_string(version));
}

}  // namespace detail

inline std::vector<std::uint8_t> serialize(const CnnModel<float>& m) {
  detail::ByteWriter w;
  w.bytes("BIDM", 4);
  w.u32(kModelFormatVersion);
  w.u32(static_cast<std::uint32_t>(ModelKind::cnn));
  detail::write_shape(w, m.shape());
  w.u32(kTensorCount);
  for (int t = 0; t < kTensorCount; ++t) {
    const auto v = m.tensor(static_cast<Tensor>(t));
    w.u32(static_cast<std::uint32_t>(v.size()));
    for (float x : v) w.f32(x);
  }
  return w.take();
}

inline std::vector<std::uint8_t> serialize(const SvmModel& m) {
  detail::ByteWriter w;
  w.bytes("BIDM", 4);
  w.u32(kModelFormatVersion);
  w.u32(static_cast<std::uint32_t>(ModelKind::svm));
  w.u32(static_cast<std::uint32_t>(m.n_features));
  w.u32(static_cast<std::uint32_t>(m.classes.size()));
  w.u32(static_cast<std::uint32_t>(m.machines.size()));
  w.f32(static_cast<float>(m.gamma));
  w.f32(static_cast<float>(m.c));
  w.f32(static_cast<float>(m.cv_accuracy));
  for (int c : m.classes) w.i32(c);
  for (const auto& mc : m.machines) {
    w.i32(mc.class_pos);
    w.i32(mc.class_neg);
    w.u32(static_cast<std::uint32_t>(mc.support_vectors.size()));
    w.f32(static_cast<float>(mc.rho));
    for (double c : mc.coef) w.f32(static_cast<float>(c));
    for (const auto& sv : mc.support_vectors)
      for (double x : sv) w.f32(static_cast<float>(x));
  }
  return w.take();
}

inline std::vector<std::uint8_t> serialize(const QuantModel& q) {
  detail::ByteWriter w;
  w.bytes("BIDQ", 4);
  w.u32(kModelFormatVersion);
  detail::write_shape(w, q.shape);
  w.u32(static_cast<std::uint32_t>(q.weights.size()));
  for (const auto& t : q.weights) w.f32(t.scale);
  for (const auto& t : q.weights) {
    w.u32(static_cast<std::uint32_t>(t.codes.size()));
    for (auto c : t.codes) w.i8(c);
  }
  for (const auto& b : q.biases) {
    w.u32(static_cast<std::uint32_t>(b.size()));
    for (float x : b) w.f32(x);
  }
  return w.take();
}

using AnyModel = std::variant<CnnModel<float>, SvmModel, QuantModel>;

inline AnyModel deserialize(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader r(bytes);
  if (bytes.size() < 4) throw FormatError("model file too short");
  const std::string magic(reinterpret_cast<const char*>(bytes.data()), 4);
  AnyModel out;
  if (magic == "BIDM") {
    detail::expect_header(r, "BIDM");
    const auto kind = r.u32();
    if (kind == static_cast<std::uint32_t>(ModelKind::cnn)) {
      CnnModel<float> m(detail::read_shape(r));
      if (r.u32() != kTensorCount) throw FormatError("unexpected tensor count");
      for (int t = 0; t < kTensorCount; ++t) {
        auto dst = m.tensor(static_cast<Tensor>(t));
        if (r.count(4) != dst.size()) throw FormatError("tensor size does not match shape header");
        for (auto& x : dst) x = r.f32();
      }
      out = std::move(m);
    } else if (kind == static_cast<std::uint32_t>(ModelKind::svm)) {
      SvmModel m;
      m.n_features = r.u32();
      const auto n_classes = r.count(4);
      const auto n_machines = r.u32();
      if (n_machines != n_classes * (n_classes - 1) / 2) throw FormatError("machine count does not match class count");
      m.gamma = r.f32();
      m.c = r.f32();
      m.cv_accuracy = r.f32();
      for (std::uint32_t i = 0; i < n_classes; ++i) m.classes.push_back(r.i32());
      for (std::uint32_t i = 0; i < n_machines; ++i) {
        BinarySvm mc;
        mc.class_pos = r.i32();
        mc.class_neg = r.i32();
        const auto n_sv = r.count(4 * (m.n_features + 1));
        mc.rho = r.f32();
        for (std::uint32_t k = 0; k < n_sv; ++k) mc.coef.push_back(r.f32());
        mc.support_vectors.assign(n_sv, std::vector<double>(m.n_features));
        for (auto& sv : mc.support_vectors)
          for (auto& x : sv) x = r.f32();
        m.machines.push_back(std::move(mc));
      }
      out = std::move(m);
    } else {
      throw FormatError("unknown model kind " + std::to_string(kind));
    }
  } else if (magic == "BIDQ") {
    detail::expect_header(r, "BIDQ");
    QuantModel q;
    q.shape = detail::read_shape(r);
    if (r.u32() != q.weights.size()) throw FormatError("unexpected weight tensor count");
    for (auto& t : q.weights) t.scale = r.f32();
    const CnnModel<float> ref(q.shape);
    for (std::size_t i = 0; i < q.weights.size(); ++i) {
      const auto n = r.count(1);
      if (n != ref.tensor(kWeightTensors[i]).size()) throw FormatError("weight tensor size does not match shape header");
      q.weights[i].codes.resize(n);
      for (auto& c : q.weights[i].codes) c = r.i8();
    }
    for (std::size_t i = 0; i < q.biases.size(); ++i) {
      const auto n = r.count(4);
      if (n != ref.tensor(kBiasTensors[i]).size()) throw FormatError("bias size does not match shape header");
      q.biases[i].resize(n);
      for (auto& x : q.biases[i]) x = r.f32();
    }
    out = std::move(q);
  } else {
    throw FormatError("unknown magic '" + magic + "'");
  }
  if (!r.done()) throw FormatError("trailing bytes after model");
  return out;
}

inline void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for reading: " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

template <typename Model>
void save_model(const std::filesystem::path& path, const Model& m) {
  write_bytes(path, serialize(m));
}

inline AnyModel load_model(const std::filesystem::path& path) {
  try {
    return deserialize(read_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(std::string(e.what()) + ": " + path.string());
  }
}

}  // namespace budsid
