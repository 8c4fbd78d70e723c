#include "awf/tensor_io.hpp"

#include <cstring>
#include <fstream>

namespace awf {

namespace {

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;
  explicit Reader(const std::string& b) : buf(b) {}

  void need(std::size_t n) {
    if (pos + n > buf.size()) throw FormatError("truncated file");
  }
  std::uint16_t u16() {
    need(2);
    const auto b0 = static_cast<std::uint8_t>(buf[pos]);
    const auto b1 = static_cast<std::uint8_t>(buf[pos + 1]);
    pos += 2;
    return static_cast<std::uint16_t>(b0 | (b1 << 8));
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(buf[pos++]);
  }
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return buf;
}

void write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write '" + path + "'");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw FormatError("write failed for '" + path + "'");
}

constexpr std::uint16_t kTensorVersion = 1;
constexpr std::uint16_t kRangeVersion = 1;

}  // namespace

void save_tensor(const std::string& path, const Tensor& t) {
  std::string out;
  out.reserve(16 + 8 * t.rank() + 4 * t.numel());
  out += "AWTF";
  put_u16(out, kTensorVersion);
  put_u16(out, static_cast<std::uint16_t>(t.rank()));
  for (Dim d : t.shape()) put_u64(out, static_cast<std::uint64_t>(d));
  for (std::size_t i = 0; i < t.numel(); ++i) put_f32(out, static_cast<float>(t[i]));
  write_file(path, out);
}

Tensor load_tensor(const std::string& path) {
  const std::string buf = read_file(path);
  Reader r(buf);
  r.need(4);
  if (buf.compare(0, 4, "AWTF") != 0) throw FormatError("bad tensor magic in '" + path + "'");
  r.pos = 4;
  if (r.u16() != kTensorVersion) throw FormatError("unsupported tensor version in '" + path + "'");
  const std::uint16_t ndim = r.u16();
  std::vector<Dim> shape(ndim);
  for (auto& d : shape) {
    d = static_cast<Dim>(r.u64());
    if (d <= 0) throw FormatError("non-positive dim in '" + path + "'");
  }
  const std::size_t n = shape_numel(shape);
  std::vector<double> data(n);
  for (auto& v : data) v = static_cast<double>(r.f32());
  if (r.pos != buf.size()) throw FormatError("trailing bytes in '" + path + "'");
  return Tensor(std::move(shape), std::move(data));
}

void save_params(const std::string& path, const ParametricMap& map) {
  const auto& p = map.params();
  Tensor t({static_cast<Dim>(std::max<std::size_t>(1, p.size()))});
  for (std::size_t i = 0; i < p.size(); ++i) t[i] = p[i];
  save_tensor(path, t);
}

void load_params(const std::string& path, ParametricMap& map) {
  const Tensor t = load_tensor(path);
  if (map.param_count() == 0) return;
  if (t.numel() != map.param_count())
    throw FormatError("parameter file '" + path + "' holds " + std::to_string(t.numel()) +
                      " values, map expects " + std::to_string(map.param_count()));
  map.set_params(std::vector<double>(t.data(), t.data() + t.numel()));
}

void save_range_image(const std::string& path, const RangeImage& ri) {
  const std::size_t n = static_cast<std::size_t>(ri.config.height * ri.config.width);
  std::string out;
  out.reserve(30 + 9 * n);
  out += "AWRI";
  put_u16(out, kRangeVersion);
  put_u32(out, static_cast<std::uint32_t>(ri.config.height));
  put_u32(out, static_cast<std::uint32_t>(ri.config.width));
  put_f64(out, ri.config.theta_min);
  put_f64(out, ri.config.theta_max);
  for (std::size_t i = 0; i < n; ++i) put_f32(out, static_cast<float>(ri.range[i]));
  for (std::size_t i = 0; i < n; ++i) put_f32(out, static_cast<float>(ri.intensity[i]));
  for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<char>(ri.valid[i]));
  write_file(path, out);
}

RangeImage load_range_image(const std::string& path) {
  const std::string buf = read_file(path);
  Reader r(buf);
  r.need(4);
  if (buf.compare(0, 4, "AWRI") != 0)
    throw FormatError("bad range image magic in '" + path + "'");
  r.pos = 4;
  if (r.u16() != kRangeVersion)
    throw FormatError("unsupported range image version in '" + path + "'");
  ProjectionConfig cfg;
  cfg.height = static_cast<Dim>(r.u32());
  cfg.width = static_cast<Dim>(r.u32());
  cfg.theta_min = r.f64();
  cfg.theta_max = r.f64();
  cfg.validate();
  const std::size_t n = static_cast<std::size_t>(cfg.height * cfg.width);
  RangeImage ri{cfg, Tensor({cfg.height, cfg.width}), Tensor({cfg.height, cfg.width}),
                std::vector<std::uint8_t>(n, 0)};
  for (std::size_t i = 0; i < n; ++i) ri.range[i] = static_cast<double>(r.f32());
  for (std::size_t i = 0; i < n; ++i) ri.intensity[i] = static_cast<double>(r.f32());
  for (std::size_t i = 0; i < n; ++i) ri.valid[i] = r.u8();
  if (r.pos != buf.size()) throw FormatError("trailing bytes in '" + path + "'");
  return ri;
}

}  // namespace awf
