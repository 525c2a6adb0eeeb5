// Model file layout, all integers and floats little-endian:
//
//   "PCDN"  u16 version
//   u32 input_dim, u32 n_encoder, u32 widths[n_encoder],
//   u32 n_decoder_hidden, u32 widths[n_decoder_hidden], u32 output_dim,
//   i32 encoder_dropout_layer, i32 decoder_dropout_layer,
//   f64 leaky_alpha, f64 dropout_rate, u64 seed,
//   f64 scaler_mean[7], f64 scaler_std[7],
//   u32 n_layers, then per layer: u32 rows, u32 cols, f64 weight[rows*cols]
//   (row-major), f64 bias[rows]
//   u32 crc32 of every preceding byte

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

#include "pcnet/csv.hpp"
#include "pcnet/error.hpp"
#include "pcnet/pinet.hpp"

namespace pcnet {

namespace {

constexpr char kMagic[4] = {'P', 'C', 'D', 'N'};

class Writer {
 public:
  template <typename T>
  void put(T v) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>>;
    const U bits = std::bit_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      bytes_.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
    }
  }
  void raw(const char* p, std::size_t n) { bytes_.append(p, n); }
  std::string& bytes() { return bytes_; }

 private:
  std::string bytes_;
};

class Parser {
 public:
  Parser(const std::string& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  template <typename T>
  T get() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>>;
    if (pos_ + sizeof(U) > end_) {
      throw Error(ErrorCode::CorruptFile, "model file is truncated");
    }
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      bits |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return std::bit_cast<T>(bits);
  }
  std::size_t pos() const { return pos_; }
  void skip(std::size_t n) { pos_ += n; }

 private:
  const std::string& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(const std::string& bytes, std::size_t n) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(n)));
}

// Guards against absurd sizes in a corrupt-but-checksummed file.
std::uint32_t bounded(std::uint32_t v, const char* what) {
  if (v > (1u << 20)) throw Error(ErrorCode::CorruptFile, std::string("implausible ") + what);
  return v;
}

}  // namespace

void save_model(const PiDnnModel& model, const std::filesystem::path& path) {
  Writer w;
  w.raw(kMagic, 4);
  w.put<std::uint16_t>(kModelFormatVersion);
  const auto& a = model.arch;
  w.put<std::uint32_t>(static_cast<std::uint32_t>(a.input_dim));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(a.encoder_widths.size()));
  for (const int v : a.encoder_widths) w.put<std::uint32_t>(static_cast<std::uint32_t>(v));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(a.decoder_widths.size()));
  for (const int v : a.decoder_widths) w.put<std::uint32_t>(static_cast<std::uint32_t>(v));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(a.output_dim));
  w.put<std::int32_t>(a.encoder_dropout_layer);
  w.put<std::int32_t>(a.decoder_dropout_layer);
  w.put<double>(a.leaky_alpha);
  w.put<double>(a.dropout_rate);
  w.put<std::uint64_t>(model.seed);
  for (const double v : model.scaler.mean) w.put<double>(v);
  for (const double v : model.scaler.std) w.put<double>(v);

  const auto layers = model.params.layers();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(layers.size()));
  for (const auto* l : layers) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(l->weight.rows()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(l->weight.cols()));
    for (Eigen::Index i = 0; i < l->weight.rows(); ++i) {
      for (Eigen::Index j = 0; j < l->weight.cols(); ++j) w.put<double>(l->weight(i, j));
    }
    for (Eigen::Index i = 0; i < l->bias.size(); ++i) w.put<double>(l->bias[i]);
  }
  w.put<std::uint32_t>(crc_of(w.bytes(), w.bytes().size()));

  auto out = csv::open_output(path);
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

PiDnnModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 6 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::CorruptFile, path.string() + ": not a model file");
  }
  const auto version = static_cast<std::uint16_t>(static_cast<unsigned char>(bytes[4]) |
                                                  (static_cast<unsigned char>(bytes[5]) << 8));
  if (version != kModelFormatVersion) {
    throw Error(ErrorCode::VersionMismatch, path.string() + ": format version " +
                                                std::to_string(version) + ", expected " +
                                                std::to_string(kModelFormatVersion));
  }
  if (bytes.size() < 10) throw Error(ErrorCode::CorruptFile, "model file is truncated");
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    stored |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[body + i])) << (8 * i);
  }
  if (stored != crc_of(bytes, body)) {
    throw Error(ErrorCode::CorruptFile, path.string() + ": checksum mismatch");
  }

  Parser p(bytes, body);
  p.skip(6);
  Architecture a;
  a.input_dim = static_cast<int>(bounded(p.get<std::uint32_t>(), "input_dim"));
  a.encoder_widths.resize(bounded(p.get<std::uint32_t>(), "encoder depth"));
  for (auto& v : a.encoder_widths) v = static_cast<int>(bounded(p.get<std::uint32_t>(), "width"));
  a.decoder_widths.resize(bounded(p.get<std::uint32_t>(), "decoder depth"));
  for (auto& v : a.decoder_widths) v = static_cast<int>(bounded(p.get<std::uint32_t>(), "width"));
  a.output_dim = static_cast<int>(bounded(p.get<std::uint32_t>(), "output_dim"));
  a.encoder_dropout_layer = p.get<std::int32_t>();
  a.decoder_dropout_layer = p.get<std::int32_t>();
  a.leaky_alpha = p.get<double>();
  a.dropout_rate = p.get<double>();

  PiDnnModel model = zero_model(a);
  model.seed = p.get<std::uint64_t>();
  for (auto& v : model.scaler.mean) v = p.get<double>();
  for (auto& v : model.scaler.std) v = p.get<double>();

  auto layers = model.params.layers();
  if (p.get<std::uint32_t>() != layers.size()) {
    throw Error(ErrorCode::CorruptFile, "layer manifest does not match architecture");
  }
  for (auto* l : layers) {
    const auto rows = p.get<std::uint32_t>();
    const auto cols = p.get<std::uint32_t>();
    if (rows != l->weight.rows() || cols != l->weight.cols()) {
      throw Error(ErrorCode::CorruptFile, "layer manifest does not match architecture");
    }
    for (Eigen::Index i = 0; i < l->weight.rows(); ++i) {
      for (Eigen::Index j = 0; j < l->weight.cols(); ++j) l->weight(i, j) = p.get<double>();
    }
    for (Eigen::Index i = 0; i < l->bias.size(); ++i) l->bias[i] = p.get<double>();
  }
  if (p.pos() != body) throw Error(ErrorCode::CorruptFile, "trailing bytes in model file");
  return model;
}

bool bitwise_equal(const PiDnnModel& a, const PiDnnModel& b) {
  auto same = [](const auto& x, const auto& y) {
    return x.size() == y.size() &&
           std::memcmp(x.data(), y.data(), sizeof(double) * static_cast<std::size_t>(x.size())) == 0;
  };
  if (!(a.arch == b.arch) || a.seed != b.seed) return false;
  if (std::memcmp(&a.scaler, &b.scaler, sizeof(ScalerStats)) != 0) return false;
  const auto la = a.params.layers();
  const auto lb = b.params.layers();
  if (la.size() != lb.size()) return false;
  for (std::size_t i = 0; i < la.size(); ++i) {
    if (la[i]->weight.rows() != lb[i]->weight.rows()) return false;
    if (!same(la[i]->weight, lb[i]->weight) || !same(la[i]->bias, lb[i]->bias)) return false;
  }
  return true;
}

}  // namespace pcnet
