#include "awf/kitti_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace awf {

Calib Calib::identity() {
  Calib c{};
  c.P2 = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0};
  c.R0 = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  c.Tr = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0};
  return c;
}

PointCloud read_velodyne(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() % 16 != 0)
    throw FormatError("velodyne file '" + path + "' size " + std::to_string(buf.size()) +
                      " is not a multiple of 16");
  PointCloud cloud;
  cloud.points.resize(buf.size() / 16);
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    float v[4];
    for (int k = 0; k < 4; ++k) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b)
        bits |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[i * 16 + k * 4 + b]))
                << (8 * b);
      std::memcpy(&v[k], &bits, 4);
    }
    cloud.points[i] = {static_cast<double>(v[0]), static_cast<double>(v[1]),
                       static_cast<double>(v[2]), static_cast<double>(v[3])};
  }
  return cloud;
}

void write_velodyne(const std::string& path, const PointCloud& cloud) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write '" + path + "'");
  for (const LidarPoint& p : cloud.points) {
    const float v[4] = {static_cast<float>(p.x), static_cast<float>(p.y),
                        static_cast<float>(p.z), static_cast<float>(p.intensity)};
    for (int k = 0; k < 4; ++k) {
      std::uint32_t bits;
      std::memcpy(&bits, &v[k], 4);
      for (int b = 0; b < 4; ++b)
        out.put(static_cast<char>((bits >> (8 * b)) & 0xFF));
    }
  }
  if (!out) throw FormatError("write failed for '" + path + "'");
}

std::vector<KittiLabel> read_label(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::vector<KittiLabel> labels;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    std::istringstream is(line);
    KittiLabel lb;
    double fields[14];
    is >> lb.type;
    for (double& f : fields) is >> f;
    if (!is && !is.eof())
      throw FormatError("label line " + std::to_string(line_no) + ": malformed fields");
    if (is.fail())
      throw FormatError("label line " + std::to_string(line_no) + ": expected 15 fields");
    lb.truncated = fields[0];
    lb.occluded = fields[1];
    lb.alpha = fields[2];
    lb.bbox = {fields[3], fields[4], fields[5], fields[6]};
    lb.h = fields[7];
    lb.w = fields[8];
    lb.l = fields[9];
    lb.x = fields[10];
    lb.y = fields[11];
    lb.z = fields[12];
    lb.rotation_y = fields[13];
    double score;
    if (is >> score) lb.score = score;
    lb.dont_care = (lb.type == "DontCare");
    labels.push_back(std::move(lb));
  }
  return labels;
}

namespace {
void parse_mat(const std::string& rest, double* out, std::size_t n, int line_no) {
  std::istringstream is(rest);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(is >> out[i]))
      throw FormatError("calib line " + std::to_string(line_no) + ": expected " +
                        std::to_string(n) + " numbers");
  }
}
}  // namespace

Calib read_calib(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path + "'");
  Calib c = Calib::identity();
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    const std::string key = line.substr(0, colon);
    const std::string rest = line.substr(colon + 1);
    if (key == "P2")
      parse_mat(rest, c.P2.data(), 12, line_no);
    else if (key == "R0_rect" || key == "R_rect" || key == "R0")
      parse_mat(rest, c.R0.data(), 9, line_no);
    else if (key == "Tr_velo_to_cam" || key == "Tr_velo_cam" || key == "Tr")
      parse_mat(rest, c.Tr.data(), 12, line_no);
  }
  return c;
}

Difficulty label_difficulty(const KittiLabel& lb) {
  if (lb.dont_care) return Difficulty::Ignore;
  const double height = lb.bbox[3] - lb.bbox[1];
  if (height >= 40.0 && lb.occluded <= 0.0 && lb.truncated <= 0.15) return Difficulty::Easy;
  if (height >= 25.0 && lb.occluded <= 1.0 && lb.truncated <= 0.30) return Difficulty::Moderate;
  if (height >= 25.0 && lb.occluded <= 2.0 && lb.truncated <= 0.50) return Difficulty::Hard;
  return Difficulty::Ignore;
}

namespace {

// 4x4 row-major inverse by Gauss-Jordan with partial pivoting.
std::array<double, 16> invert4(const std::array<double, 16>& m) {
  std::array<double, 16> a = m;
  std::array<double, 16> inv = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
  for (int col = 0; col < 4; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 4; ++r)
      if (std::fabs(a[r * 4 + col]) > std::fabs(a[pivot * 4 + col])) pivot = r;
    if (std::fabs(a[pivot * 4 + col]) < 1e-12)
      throw std::invalid_argument("calib matrix is singular");
    if (pivot != col)
      for (int k = 0; k < 4; ++k) {
        std::swap(a[pivot * 4 + k], a[col * 4 + k]);
        std::swap(inv[pivot * 4 + k], inv[col * 4 + k]);
      }
    const double d = a[col * 4 + col];
    for (int k = 0; k < 4; ++k) {
      a[col * 4 + k] /= d;
      inv[col * 4 + k] /= d;
    }
    for (int r = 0; r < 4; ++r) {
      if (r == col) continue;
      const double f = a[r * 4 + col];
      for (int k = 0; k < 4; ++k) {
        a[r * 4 + k] -= f * a[col * 4 + k];
        inv[r * 4 + k] -= f * inv[col * 4 + k];
      }
    }
  }
  return inv;
}

std::array<double, 16> mat4_mul(const std::array<double, 16>& a, const std::array<double, 16>& b) {
  std::array<double, 16> out{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double s = 0.0;
      for (int k = 0; k < 4; ++k) s += a[i * 4 + k] * b[k * 4 + j];
      out[i * 4 + j] = s;
    }
  return out;
}

}  // namespace

Box3D box3d_from_label(const KittiLabel& lb, const Calib& calib) {
  // camera frame: x right, y down, z forward; location is the box bottom center
  const double cam[4] = {lb.x, lb.y - lb.h / 2.0, lb.z, 1.0};

  std::array<double, 16> r0_4 = {calib.R0[0], calib.R0[1], calib.R0[2], 0,
                                 calib.R0[3], calib.R0[4], calib.R0[5], 0,
                                 calib.R0[6], calib.R0[7], calib.R0[8], 0,
                                 0,           0,           0,           1};
  std::array<double, 16> tr_4 = {calib.Tr[0], calib.Tr[1], calib.Tr[2],  calib.Tr[3],
                                 calib.Tr[4], calib.Tr[5], calib.Tr[6],  calib.Tr[7],
                                 calib.Tr[8], calib.Tr[9], calib.Tr[10], calib.Tr[11],
                                 0,           0,           0,            1};
  const std::array<double, 16> inv = invert4(mat4_mul(r0_4, tr_4));

  Box3D b;
  b.x = inv[0] * cam[0] + inv[1] * cam[1] + inv[2] * cam[2] + inv[3];
  b.y = inv[4] * cam[0] + inv[5] * cam[1] + inv[6] * cam[2] + inv[7];
  b.z = inv[8] * cam[0] + inv[9] * cam[1] + inv[10] * cam[2] + inv[11];
  b.l = lb.l;
  b.w = lb.w;
  b.h = lb.h;
  b.yaw = wrap_angle(-lb.rotation_y - 3.14159265358979323846 / 2.0);
  b.score = lb.score.value_or(0.0);
  b.difficulty = label_difficulty(lb);
  return b;
}

}  // namespace awf
