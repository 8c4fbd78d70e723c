#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "awf/kitti_io.hpp"
#include "awf/png_io.hpp"
#include "awf/tensor_io.hpp"
#include "oracles.hpp"

using namespace awf;

namespace {

std::string tmp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "awf_io_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

void write_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_SUITE_BEGIN("io");

TEST_CASE("velodyne read/write") {
  SUBCASE("empty file is an empty cloud") {
    const std::string p = tmp_path("empty.bin");
    write_bytes(p, "");
    CHECK(read_velodyne(p).empty());
  }
  SUBCASE("hand-constructed quadruple") {
    // little-endian float32 (1, 2, 3, 0.5)
    const std::string p = tmp_path("one.bin");
    PointCloud one;
    one.points.push_back({1.0, 2.0, 3.0, 0.5});
    write_velodyne(p, one);
    CHECK(read_bytes(p).size() == 16);
    const PointCloud back = read_velodyne(p);
    REQUIRE(back.size() == 1);
    CHECK(back.points[0].x == 1.0);
    CHECK(back.points[0].y == 2.0);
    CHECK(back.points[0].z == 3.0);
    CHECK(back.points[0].intensity == 0.5);
  }
  SUBCASE("round trip at float precision") {
    Rng rng(1);
    PointCloud cloud;
    for (int i = 0; i < 100; ++i)
      cloud.points.push_back({rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-3, 1),
                              rng.next_double()});
    const std::string p = tmp_path("cloud.bin");
    write_velodyne(p, cloud);
    const PointCloud back = read_velodyne(p);
    REQUIRE(back.size() == cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i)
      CHECK(back.points[i].x == static_cast<double>(static_cast<float>(cloud.points[i].x)));
  }
  SUBCASE("misaligned size is a format error") {
    const std::string p = tmp_path("bad.bin");
    write_bytes(p, std::string(15, '\0'));
    CHECK_THROWS_AS(read_velodyne(p), FormatError);
  }
}

TEST_CASE("label parsing") {
  SUBCASE("empty file") {
    const std::string p = tmp_path("empty.txt");
    write_bytes(p, "");
    CHECK(read_label(p).empty());
  }
  SUBCASE("single car line") {
    const std::string p = tmp_path("car.txt");
    write_bytes(p,
                "Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71 46.70 "
                "-1.59\n");
    const auto labels = read_label(p);
    REQUIRE(labels.size() == 1);
    CHECK(labels[0].type == "Car");
    CHECK(labels[0].h == doctest::Approx(1.65));
    CHECK(labels[0].w == doctest::Approx(1.67));
    CHECK(labels[0].l == doctest::Approx(3.64));
    CHECK(labels[0].x == doctest::Approx(-0.65));
    CHECK(labels[0].rotation_y == doctest::Approx(-1.59));
    CHECK_FALSE(labels[0].score.has_value());
    CHECK_FALSE(labels[0].dont_care);
  }
  SUBCASE("DontCare entries are retained and flagged") {
    const std::string p = tmp_path("dc.txt");
    write_bytes(p, "DontCare -1 -1 -10 503.89 169.71 590.61 190.13 -1 -1 -1 -1000 -1000 -1000 "
                   "-10\n");
    const auto labels = read_label(p);
    REQUIRE(labels.size() == 1);
    CHECK(labels[0].dont_care);
    CHECK(label_difficulty(labels[0]) == Difficulty::Ignore);
  }
  SUBCASE("malformed line reports its number") {
    const std::string p = tmp_path("bad.txt");
    write_bytes(p, "Car 0.0 0 -1.58 587.01\n");
    try {
      read_label(p);
      FAIL("expected a parse error");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("line 1") != std::string::npos);
    }
  }
}

TEST_CASE("calib parsing and label conversion") {
  SUBCASE("identity calib maps camera to sensor coordinates directly") {
    const Calib calib = Calib::identity();
    KittiLabel lb;
    lb.type = "Car";
    lb.h = 1.5;
    lb.w = 1.6;
    lb.l = 3.9;
    lb.x = 2.0;
    lb.y = 1.0;
    lb.z = 10.0;
    lb.rotation_y = 0.0;
    lb.bbox = {0, 0, 100, 45};
    const Box3D b = box3d_from_label(lb, calib);
    CHECK(b.x == doctest::Approx(2.0));
    CHECK(b.y == doctest::Approx(1.0 - 0.75));  // bottom center lifted to the box center
    CHECK(b.z == doctest::Approx(10.0));
    CHECK(b.yaw == doctest::Approx(wrap_angle(-3.14159265358979323846 / 2.0)));
    CHECK(b.difficulty == Difficulty::Easy);
  }
  SUBCASE("calib file with explicit matrices") {
    const std::string p = tmp_path("calib.txt");
    write_bytes(p,
                "P2: 1 0 0 0 0 1 0 0 0 0 1 0\n"
                "R0_rect: 1 0 0 0 1 0 0 0 1\n"
                "Tr_velo_to_cam: 0 -1 0 0 0 0 -1 0 1 0 0 0\n");
    const Calib c = read_calib(p);
    CHECK(c.Tr[1] == -1.0);
    CHECK(c.R0[0] == 1.0);
  }
  SUBCASE("malformed calib matrix errors") {
    const std::string p = tmp_path("badcalib.txt");
    write_bytes(p, "P2: 1 0 0\n");
    CHECK_THROWS_AS(read_calib(p), FormatError);
  }
  SUBCASE("difficulty gates") {
    KittiLabel lb;
    lb.bbox = {0, 0, 10, 41};
    lb.occluded = 0;
    lb.truncated = 0.1;
    CHECK(label_difficulty(lb) == Difficulty::Easy);
    lb.occluded = 1;
    CHECK(label_difficulty(lb) == Difficulty::Moderate);
    lb.bbox[3] = 26;
    lb.occluded = 2;
    lb.truncated = 0.45;
    CHECK(label_difficulty(lb) == Difficulty::Hard);
    lb.bbox[3] = 10;
    CHECK(label_difficulty(lb) == Difficulty::Ignore);
  }
}

TEST_CASE("tensor file format") {
  SUBCASE("a one-element tensor takes exactly 20 bytes") {
    const std::string p = tmp_path("scalar.awtf");
    save_tensor(p, Tensor({1}, {3.0}));
    CHECK(read_bytes(p).size() == 20);  // magic 4 + version 2 + ndim 2 + dim 8 + payload 4
    const Tensor t = load_tensor(p);
    CHECK(t.numel() == 1);
    CHECK(t[0] == 3.0);
  }
  SUBCASE("round trip is exact at float32 precision") {
    Rng rng(5);
    const Tensor t = oracle::random_tensor({3, 7, 5}, rng, -100.0, 100.0);
    const std::string p = tmp_path("t.awtf");
    save_tensor(p, t);
    const Tensor back = load_tensor(p);
    REQUIRE(back.shape() == t.shape());
    for (std::size_t i = 0; i < t.numel(); ++i)
      CHECK(back[i] == static_cast<double>(static_cast<float>(t[i])));
  }
  SUBCASE("truncated and corrupt files raise format errors") {
    const std::string p = tmp_path("trunc.awtf");
    save_tensor(p, Tensor({4}, {1, 2, 3, 4}));
    std::string bytes = read_bytes(p);
    write_bytes(p, bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(load_tensor(p), FormatError);
    write_bytes(p, "NOPE" + bytes.substr(4));
    CHECK_THROWS_AS(load_tensor(p), FormatError);
  }
}

TEST_CASE("range image file round trip") {
  Rng rng(9);
  ProjectionConfig cfg;
  cfg.height = 8;
  cfg.width = 16;
  PointCloud cloud;
  for (int i = 0; i < 60; ++i) {
    const double phi = rng.uniform(-3.0, 3.0);
    const double r = rng.uniform(2.0, 40.0);
    cloud.points.push_back({r * std::cos(phi), r * std::sin(phi),
                            r * std::sin(rng.uniform(-0.3, 0.04)), rng.next_double()});
  }
  const RangeImage ri = project(cloud, cfg);
  const std::string p = tmp_path("ri.awri");
  save_range_image(p, ri);
  const RangeImage back = load_range_image(p);
  CHECK(back.config.height == cfg.height);
  CHECK(back.config.width == cfg.width);
  CHECK(back.valid == ri.valid);
  for (std::size_t i = 0; i < ri.range.numel(); ++i)
    CHECK(back.range[i] == static_cast<double>(static_cast<float>(ri.range[i])));
}

TEST_CASE("parameter persistence") {
  ConvStackMap map({2, 3, 2});
  seed_params(map, 42, 0.5);
  const std::string p = tmp_path("params.awtf");
  save_params(p, map);
  ConvStackMap loaded({2, 3, 2});
  load_params(p, loaded);
  REQUIRE(loaded.param_count() == map.param_count());
  for (std::size_t i = 0; i < map.param_count(); ++i)
    CHECK(loaded.params()[i] == static_cast<double>(static_cast<float>(map.params()[i])));
  ConvStackMap wrong({2, 5, 2});
  CHECK_THROWS_AS(load_params(p, wrong), FormatError);
}

TEST_CASE("png export writes valid headers") {
  Rng rng(11);
  const Tensor img = oracle::random_tensor({3, 12, 9}, rng, 0.0, 1.0);
  const std::string p = tmp_path("img.png");
  write_png_rgb8(p, img);
  const std::string bytes = read_bytes(p);
  REQUIRE(bytes.size() > 50);
  const unsigned char sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  for (int i = 0; i < 8; ++i) CHECK(static_cast<unsigned char>(bytes[i]) == sig[i]);
  // IHDR width/height big-endian at offsets 16/20
  const auto be32 = [&](std::size_t off) {
    return (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off])) << 24) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + 1])) << 16) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + 2])) << 8) |
           static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + 3]));
  };
  CHECK(be32(16) == 9);
  CHECK(be32(20) == 12);

  const Tensor gray = oracle::random_tensor({6, 6}, rng, 0.0, 100.0);
  const std::string p16 = tmp_path("gray.png");
  write_png_gray16(p16, gray, 120.0);
  const std::string b16 = read_bytes(p16);
  CHECK(b16.size() > 50);
  CHECK(static_cast<unsigned char>(b16[24]) == 16);  // bit depth
  CHECK(static_cast<unsigned char>(b16[25]) == 0);   // grayscale

  CHECK_THROWS_AS(write_png_gray16(p16, gray, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(write_png_rgb8(p, gray), std::invalid_argument);
}

TEST_SUITE_END();
