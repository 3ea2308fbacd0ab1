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

#include "maskmark/image_io.hpp"

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>

#include <jpeglib.h>
#include <png.h>

#include "maskmark/common.hpp"

namespace maskmark {
namespace {

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "cannot open file: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  check(!bytes.empty(), "empty file: " + path);
  return bytes;
}

// ---- PNG ----

struct PngMemSource {
  const uint8_t* data;
  size_t size;
  size_t pos;
};

void png_mem_read(png_structp png, png_bytep out, png_size_t n) {
  auto* src = static_cast<PngMemSource*>(png_get_io_ptr(png));
  if (src->pos + n > src->size) png_error(png, "png read past end");
  std::memcpy(out, src->data + src->pos, n);
  src->pos += n;
}

ImageU8 decode_png(const std::vector<uint8_t>& bytes) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  check(png != nullptr, "png reader allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("png info allocation failed");
  }
  // libpng reports errors via longjmp; everything allocated before this point
  // is released on the error path below.
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("corrupt png");
  }
  PngMemSource src{bytes.data(), bytes.size(), 0};
  png_set_read_fn(png, &src, png_mem_read);
  png_read_info(png, info);

  png_set_expand(png);        // palette→rgb, gray<8→8, tRNS→alpha
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  ImageU8 img;
  img.h = int(png_get_image_height(png, info));
  img.w = int(png_get_image_width(png, info));
  int channels = int(png_get_channels(png, info));
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("unsupported png channel count after normalization");
  }
  img.c = channels;
  img.data.resize(size_t(img.h) * img.w * img.c);
  std::vector<png_bytep> rows(static_cast<size_t>(img.h));
  for (int y = 0; y < img.h; ++y) rows[size_t(y)] = img.data.data() + size_t(y) * img.w * img.c;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void png_write_to_stream(png_structp png, png_bytep data, png_size_t n) {
  auto* out = static_cast<std::ofstream*>(png_get_io_ptr(png));
  out->write(reinterpret_cast<const char*>(data), std::streamsize(n));
}

void png_flush_stream(png_structp png) {
  static_cast<std::ofstream*>(png_get_io_ptr(png))->flush();
}

void write_png_impl(const std::string& path, int h, int w, int c, int bit_depth,
                    const std::vector<png_bytep>& rows, const std::string& provenance) {
  std::ofstream out(path, std::ios::binary);
  check(out.good(), "cannot write file: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  check(png != nullptr, "png writer allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png info allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("png write failed: " + path);
  }
  png_set_write_fn(png, &out, png_write_to_stream, png_flush_stream);
  int color = c == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
  png_set_IHDR(png, info, png_uint_32(w), png_uint_32(h), bit_depth, color,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_text text;
  std::string key = "maskmark";
  std::string value = provenance;
  if (!provenance.empty()) {
    std::memset(&text, 0, sizeof(text));
    text.compression = PNG_TEXT_COMPRESSION_NONE;
    text.key = key.data();
    text.text = value.data();
    text.text_length = value.size();
    png_set_text(png, info, &text, 1);
  }
  png_write_info(png, info);
  if (bit_depth < 8) png_set_packing(png);  // accept one byte per pixel rows
  png_write_image(png, const_cast<png_bytep*>(rows.data()));
  png_write_end(png, info);
  png_destroy_write_struct(&png, &info);
  check(out.good(), "png write failed: " + path);
}

// ---- JPEG ----

// libjpeg's default error handler exits the process; route through longjmp
// and rethrow as an exception instead.
struct JpegErr {
  jpeg_error_mgr pub;
  jmp_buf env;
  char msg[JMSG_LENGTH_MAX];
};

void jpeg_err_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErr*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->msg);
  longjmp(err->env, 1);
}

ImageU8 decode_jpeg(const std::vector<uint8_t>& bytes) {
  jpeg_decompress_struct cinfo;
  JpegErr jerr;
  cinfo.err = jpeg_std_error(&jerr.pub);
  jerr.pub.error_exit = jpeg_err_exit;
  if (setjmp(jerr.env)) {
    jpeg_destroy_decompress(&cinfo);
    throw std::runtime_error(std::string("corrupt jpeg: ") + jerr.msg);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);

  ImageU8 img;
  img.h = int(cinfo.output_height);
  img.w = int(cinfo.output_width);
  img.c = int(cinfo.output_components);
  img.data.resize(size_t(img.h) * img.w * img.c);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = img.data.data() + size_t(cinfo.output_scanline) * img.w * img.c;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return img;
}

}  // namespace

ImageU8 decode_image(const std::vector<uint8_t>& bytes) {
  check(bytes.size() >= 8, "image too short to identify");
  static const uint8_t png_magic[4] = {0x89, 'P', 'N', 'G'};
  if (std::memcmp(bytes.data(), png_magic, 4) == 0) return decode_png(bytes);
  if (bytes[0] == 0xFF && bytes[1] == 0xD8) return decode_jpeg(bytes);
  throw std::runtime_error("unknown image format (expected png or jpeg)");
}

ImageU8 load_image(const std::string& path) {
  return decode_image(read_file(path));
}

void save_png(const std::string& path, const ImageU8& img, const std::string& provenance) {
  check(img.c == 1 || img.c == 3, "save_png expects gray or rgb");
  check(img.h > 0 && img.w > 0, "save_png: empty image");
  check(img.data.size() == size_t(img.h) * img.w * img.c, "save_png: size mismatch");
  std::vector<png_bytep> rows(static_cast<size_t>(img.h));
  for (int y = 0; y < img.h; ++y)
    rows[size_t(y)] = const_cast<png_bytep>(img.data.data() + size_t(y) * img.w * img.c);
  write_png_impl(path, img.h, img.w, img.c, 8, rows, provenance);
}

void save_png_1bit(const std::string& path, int h, int w, const std::vector<uint8_t>& values01) {
  check(h > 0 && w > 0, "save_png_1bit: empty image");
  check(values01.size() == size_t(h) * w, "save_png_1bit: size mismatch");
  for (uint8_t v : values01) check(v <= 1, "save_png_1bit: values must be 0 or 1");
  std::vector<png_bytep> rows(static_cast<size_t>(h));
  for (int y = 0; y < h; ++y)
    rows[size_t(y)] = const_cast<png_bytep>(values01.data() + size_t(y) * w);
  write_png_impl(path, h, w, 1, 1, rows, "");
}

std::vector<uint8_t> encode_jpeg(const ImageU8& img, int quality) {
  check(img.c == 1 || img.c == 3, "encode_jpeg expects gray or rgb");
  check(quality >= 1 && quality <= 100, "jpeg quality out of range");
  jpeg_compress_struct cinfo;
  JpegErr jerr;
  cinfo.err = jpeg_std_error(&jerr.pub);
  jerr.pub.error_exit = jpeg_err_exit;
  unsigned char* buf = nullptr;
  unsigned long buf_size = 0;
  if (setjmp(jerr.env)) {
    jpeg_destroy_compress(&cinfo);
    if (buf) free(buf);
    throw std::runtime_error(std::string("jpeg encode failed: ") + jerr.msg);
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &buf, &buf_size);
  cinfo.image_width = JDIMENSION(img.w);
  cinfo.image_height = JDIMENSION(img.h);
  cinfo.input_components = img.c;
  cinfo.in_color_space = img.c == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  // 4:4:4 keeps chroma at full resolution; matches the in-process codec used
  // by the distortion layer so the two stay comparable in tests.
  for (int i = 0; i < cinfo.num_components; ++i) {
    cinfo.comp_info[i].h_samp_factor = 1;
    cinfo.comp_info[i].v_samp_factor = 1;
  }
  jpeg_start_compress(&cinfo, TRUE);
  std::vector<uint8_t> rowbuf(size_t(img.w) * img.c);
  while (cinfo.next_scanline < cinfo.image_height) {
    std::memcpy(rowbuf.data(), img.data.data() + size_t(cinfo.next_scanline) * img.w * img.c, rowbuf.size());
    JSAMPROW row = rowbuf.data();
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  std::vector<uint8_t> out(buf, buf + buf_size);
  jpeg_destroy_compress(&cinfo);
  free(buf);
  return out;
}

void save_jpeg(const std::string& path, const ImageU8& img, int quality) {
  std::vector<uint8_t> bytes = encode_jpeg(img, quality);
  std::ofstream out(path, std::ios::binary);
  check(out.good(), "cannot write file: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  check(out.good(), "jpeg write failed: " + path);
}

Tensor image_to_tensor(const ImageU8& img) {
  check(img.c == 1 || img.c == 3, "image_to_tensor expects gray or rgb");
  Tensor t = Tensor::zeros({1, 3, img.h, img.w});
  real* d = t.data();
  const size_t plane = size_t(img.h) * img.w;
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      const size_t p = size_t(y) * img.w + x;
      for (int ch = 0; ch < 3; ++ch) {
        uint8_t u = img.at(y, x, img.c == 1 ? 0 : ch);
        d[size_t(ch) * plane + p] = real(u) / real(127.5) - real(1);
      }
    }
  }
  return t;
}

ImageU8 tensor_to_image(const Tensor& img) {
  const auto& s = img.shape();
  check((s.size() == 4 && s[0] == 1 && s[1] == 3) || (s.size() == 3 && s[0] == 3),
        "tensor_to_image expects [1,3,H,W] or [3,H,W]");
  const int h = int(s[s.size() - 2]), w = int(s[s.size() - 1]);
  ImageU8 out;
  out.h = h;
  out.w = w;
  out.c = 3;
  out.data.resize(size_t(h) * w * 3);
  const real* d = img.data();
  const size_t plane = size_t(h) * w;
  for (int ch = 0; ch < 3; ++ch)
    for (size_t p = 0; p < plane; ++p)
      out.data[p * 3 + size_t(ch)] = quantize_u8(d[size_t(ch) * plane + p]);
  return out;
}

}  // namespace maskmark
