// Copyright 2026 The Maskmark Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "maskmark/image_io.hpp"
#include "maskmark/rng.hpp"

using namespace maskmark;

namespace {

std::string tmp_path(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / "maskmark_test_io";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

ImageU8 random_rgb(int h, int w, uint64_t seed) {
  Rng rng(seed);
  ImageU8 img;
  img.h = h;
  img.w = w;
  img.c = 3;
  img.data.resize(size_t(h) * w * 3);
  for (auto& v : img.data) v = uint8_t(rng.uniform_int(0, 255));
  return img;
}

}  // namespace

TEST_CASE("png round trip is lossless for rgb and gray") {
  ImageU8 rgb = random_rgb(21, 13, 1);  // odd sizes on purpose
  const std::string p = tmp_path("rt_rgb.png");
  save_png(p, rgb);
  ImageU8 back = load_image(p);
  CHECK(back.h == rgb.h);
  CHECK(back.w == rgb.w);
  CHECK(back.c == 3);
  CHECK(back.data == rgb.data);

  ImageU8 gray;
  gray.h = 9;
  gray.w = 17;
  gray.c = 1;
  gray.data.resize(9 * 17);
  for (size_t i = 0; i < gray.data.size(); ++i) gray.data[i] = uint8_t(i * 7 % 256);
  const std::string pg = tmp_path("rt_gray.png");
  save_png(pg, gray);
  ImageU8 gback = load_image(pg);
  CHECK(gback.c == 1);
  CHECK(gback.data == gray.data);
}

TEST_CASE("png provenance text chunk is embedded") {
  ImageU8 img = random_rgb(8, 8, 2);
  const std::string p = tmp_path("prov.png");
  save_png(p, img, "digest=deadbeef01234567");
  std::ifstream in(p, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(bytes.find("maskmark") != std::string::npos);
  CHECK(bytes.find("digest=deadbeef01234567") != std::string::npos);
  // And the chunk does not disturb decoding.
  CHECK(load_image(p).data == img.data);
}

TEST_CASE("1-bit mask png stores and reloads the binary map") {
  const int h = 11, w = 19;  // width not a multiple of 8 exercises packing
  std::vector<uint8_t> bits(size_t(h) * w);
  for (size_t i = 0; i < bits.size(); ++i) bits[i] = (i % 3) == 0 ? 1 : 0;
  const std::string p = tmp_path("mask1.png");
  save_png_1bit(p, h, w, bits);
  ImageU8 back = load_image(p);  // expands to 8-bit gray
  REQUIRE(back.c == 1);
  REQUIRE(back.h == h);
  REQUIRE(back.w == w);
  for (size_t i = 0; i < bits.size(); ++i) CHECK((back.data[i] != 0) == (bits[i] != 0));

  CHECK_THROWS(save_png_1bit(tmp_path("bad.png"), 2, 2, {0, 1, 2, 0}));
}

TEST_CASE("jpeg write/read round trip is close for smooth content") {
  ImageU8 img;
  img.h = 32;
  img.w = 32;
  img.c = 3;
  img.data.resize(32 * 32 * 3);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = uint8_t(64 + 2 * y + c * 10);
  const std::string p = tmp_path("rt.jpg");
  save_jpeg(p, img, 95);
  ImageU8 back = load_image(p);
  CHECK(back.h == img.h);
  CHECK(back.c == 3);
  double max_err = 0;
  for (size_t i = 0; i < img.data.size(); ++i)
    max_err = std::max(max_err, std::fabs(double(img.data[i]) - double(back.data[i])));
  CHECK(max_err <= 12.0);  // q95 on a smooth ramp
}

TEST_CASE("format sniffing and corrupt input errors") {
  const std::string p = tmp_path("not_an_image.bin");
  std::ofstream(p, std::ios::binary) << "this is definitely not an image at all";
  CHECK_THROWS_AS(load_image(p), std::runtime_error);

  // Truncated png: magic ok, data missing.
  const std::string p2 = tmp_path("trunc.png");
  {
    ImageU8 img = random_rgb(16, 16, 3);
    save_png(p2, img);
    std::ifstream in(p2, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    std::ofstream out(p2, std::ios::binary);
    out.write(bytes.data(), std::streamsize(bytes.size() / 2));
  }
  CHECK_THROWS_AS(load_image(p2), std::runtime_error);
  CHECK_THROWS_AS(load_image(tmp_path("missing_file.png")), std::runtime_error);
}

TEST_CASE("tensor bridge: range mapping and quantization") {
  ImageU8 img;
  img.h = 1;
  img.w = 4;
  img.c = 3;
  img.data = {0, 0, 0, 127, 127, 127, 128, 128, 128, 255, 255, 255};
  Tensor t = image_to_tensor(img);
  CHECK(t.shape() == std::vector<int>{1, 3, 1, 4});
  CHECK(t.data()[0] == doctest::Approx(-1.0));
  CHECK(t.data()[1] == doctest::Approx(127.0 / 127.5 - 1.0));
  CHECK(t.data()[2] == doctest::Approx(128.0 / 127.5 - 1.0));
  CHECK(t.data()[3] == doctest::Approx(1.0));

  ImageU8 back = tensor_to_image(t);
  CHECK(back.data == img.data);
}

TEST_CASE("tensor round trip within one step for random images") {
  ImageU8 img = random_rgb(15, 10, 4);
  ImageU8 back = tensor_to_image(image_to_tensor(img));
  CHECK(back.data == img.data);

  // Gray images replicate to three identical channels.
  ImageU8 gray;
  gray.h = 4;
  gray.w = 4;
  gray.c = 1;
  gray.data.assign(16, 200);
  Tensor t = image_to_tensor(gray);
  const size_t plane = 16;
  for (size_t p = 0; p < plane; ++p) {
    CHECK(t.data()[p] == t.data()[plane + p]);
    CHECK(t.data()[p] == t.data()[2 * plane + p]);
  }
}

TEST_CASE("quantization clamps out-of-range values") {
  Tensor t = Tensor::from({1, 3, 1, 1}, {real(-2.0), real(0.0), real(3.0)});
  ImageU8 img = tensor_to_image(t);
  CHECK(img.data[0] == 0);
  CHECK(img.data[1] == 128);  // 0 → 127.5 → rounds up
  CHECK(img.data[2] == 255);
}
