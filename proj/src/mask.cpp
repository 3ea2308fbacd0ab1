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

#include "maskmark/mask.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "maskmark/common.hpp"
#include "maskmark/image_io.hpp"

namespace maskmark {
namespace {

Mask make_blank(int h, int w, MaskKind kind) {
  check(h >= 1 && w >= 1, "mask dimensions must be positive");
  Mask m;
  m.h = h;
  m.w = w;
  m.kind = kind;
  m.data.assign(size_t(h) * w, real(0));
  return m;
}

// Distance from pixel center p to segment [a, b], all in pixel coordinates.
double dist_to_segment(double py, double px, double ay, double ax, double by, double bx) {
  const double dy = by - ay, dx = bx - ax;
  const double len2 = dy * dy + dx * dx;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(((py - ay) * dy + (px - ax) * dx) / len2, 0.0, 1.0);
  const double cy = ay + t * dy, cx = ax + t * dx;
  return std::hypot(py - cy, px - cx);
}

void stamp_capsule(Mask& m, double ay, double ax, double by, double bx, double radius) {
  // A pixel belongs to the stroke when its center lies within the capsule;
  // the 0.5 floor keeps zero-width brushes one pixel wide instead of empty.
  const double r = std::max(radius, 0.5);
  const int y0 = std::max(0, int(std::floor(std::min(ay, by) - r)));
  const int y1 = std::min(m.h - 1, int(std::ceil(std::max(ay, by) + r)));
  const int x0 = std::max(0, int(std::floor(std::min(ax, bx) - r)));
  const int x1 = std::min(m.w - 1, int(std::ceil(std::max(ax, bx) + r)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if (dist_to_segment(y, x, ay, ax, by, bx) <= r) m.at(y, x) = real(1);
}

std::vector<std::string> list_segment_files(const std::string& dir) {
  namespace fs = std::filesystem;
  std::vector<std::string> files;
  std::error_code ec;
  for (const auto& e : fs::directory_iterator(dir, ec)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return char(std::tolower(c)); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") files.push_back(e.path().string());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

const char* mask_kind_name(MaskKind k) {
  switch (k) {
    case MaskKind::full: return "full";
    case MaskKind::rectangle: return "rectangle";
    case MaskKind::irregular: return "irregular";
    case MaskKind::segment: return "segment";
    case MaskKind::composite: return "composite";
  }
  return "?";
}

bool Mask::is_binary() const {
  for (real v : data)
    if (v != real(0) && v != real(1)) return false;
  return true;
}

void MaskGenConfig::validate() const {
  check_arg(rectangle_area_range[0] > 0 && rectangle_area_range[0] <= rectangle_area_range[1] &&
                rectangle_area_range[1] <= 1,
            "rectangle_area_range must satisfy 0 < min <= max <= 1");
  check_arg(irregular_stroke_count_range[0] >= 1 &&
                irregular_stroke_count_range[0] <= irregular_stroke_count_range[1],
            "irregular_stroke_count_range must satisfy 1 <= min <= max");
  check_arg(irregular_brush_width_range[0] >= 0 &&
                irregular_brush_width_range[0] <= irregular_brush_width_range[1] &&
                irregular_brush_width_range[1] <= 1,
            "irregular_brush_width_range must satisfy 0 <= min <= max <= 1");
  real wsum = 0;
  for (real w : type_weights) {
    check_arg(w >= 0, "type_weights must be non-negative");
    wsum += w;
  }
  check_arg(wsum > 0, "type_weights must sum to a positive value");
  check_arg(type_weights[3] == 0 || !segment_source.empty(),
            "segment mask weight requires a segment_source directory");
}

Mask gen_full_mask(int h, int w) {
  Mask m = make_blank(h, w, MaskKind::full);
  std::fill(m.data.begin(), m.data.end(), real(1));
  return m;
}

Mask gen_rectangle_mask(int h, int w, Rng& rng, const MaskGenConfig& cfg) {
  const double lo = double(cfg.rectangle_area_range[0]);
  const double hi = double(cfg.rectangle_area_range[1]);
  check_arg(lo > 0 && lo <= hi && hi <= 1.0, "rectangle_area_range must satisfy 0 < min <= max <= 1");
  const double total = double(h) * double(w);
  check(hi * total >= 0.5, "rectangle area range infeasible for given h, w");

  const double a = rng.uniform(lo, hi);
  // Aspect ratio rw/rh drawn from [0.5, 2], narrowed to the feasible band so
  // neither side has to be clamped (which would break the area contract).
  const double r_min = std::max(0.5, a * double(w) / double(h));
  const double r_max = std::min(2.0, double(w) / (a * double(h)));
  const double r = r_min <= r_max ? rng.uniform(r_min, r_max)
                                  : rng.uniform(a * double(w) / double(h), double(w) / (a * double(h)));
  int rh = std::clamp(int(std::lround(std::sqrt(a * total / r))), 1, h);
  // Recompute the width from the realized height so the area lands within one
  // row of the target despite rounding.
  int rw = std::clamp(int(std::lround(a * total / rh)), 1, w);

  Mask m = make_blank(h, w, MaskKind::rectangle);
  const int top = rng.uniform_int(0, h - rh);
  const int left = rng.uniform_int(0, w - rw);
  for (int y = top; y < top + rh; ++y)
    for (int x = left; x < left + rw; ++x) m.at(y, x) = real(1);
  return m;
}

Mask gen_irregular_mask(int h, int w, Rng& rng, const MaskGenConfig& cfg) {
  check_arg(cfg.irregular_stroke_count_range[0] >= 1 &&
                cfg.irregular_stroke_count_range[0] <= cfg.irregular_stroke_count_range[1],
            "irregular_stroke_count_range must satisfy 1 <= min <= max");
  Mask m = make_blank(h, w, MaskKind::irregular);
  const double min_dim = double(std::min(h, w));
  const int strokes = rng.uniform_int(cfg.irregular_stroke_count_range[0], cfg.irregular_stroke_count_range[1]);
  for (int s = 0; s < strokes; ++s) {
    const int nv = rng.uniform_int(3, 8);
    std::vector<std::pair<double, double>> pts(static_cast<size_t>(nv));
    for (auto& p : pts) {
      p.first = rng.uniform(0.0, double(h - 1));
      p.second = rng.uniform(0.0, double(w - 1));
    }
    const double width = rng.uniform(double(cfg.irregular_brush_width_range[0]),
                                     double(cfg.irregular_brush_width_range[1])) * min_dim;
    for (int i = 0; i + 1 < nv; ++i)
      stamp_capsule(m, pts[size_t(i)].first, pts[size_t(i)].second,
                    pts[size_t(i) + 1].first, pts[size_t(i) + 1].second, width / 2.0);
  }
  return m;
}

Mask gen_segment_mask(int h, int w, Rng& rng, const MaskGenConfig& cfg) {
  check(!cfg.segment_source.empty(), "segment source empty");
  std::vector<std::string> files = list_segment_files(cfg.segment_source);
  check(!files.empty(), "segment source empty");
  const std::string& path = files[size_t(rng.uniform_int(0, int(files.size()) - 1))];
  ImageU8 img = load_image(path);

  Mask m = make_blank(h, w, MaskKind::segment);
  for (int y = 0; y < h; ++y) {
    const int sy = std::min(img.h - 1, int(double(y + 0.5) * img.h / h));
    for (int x = 0; x < w; ++x) {
      const int sx = std::min(img.w - 1, int(double(x + 0.5) * img.w / w));
      int lum = 0;
      for (int c = 0; c < img.c; ++c) lum += img.at(sy, sx, c);
      lum /= img.c;
      m.at(y, x) = lum >= 128 ? real(1) : real(0);  // binarize at 0.5
    }
  }
  return m;
}

Mask sample_training_mask(int h, int w, Rng& rng, const MaskGenConfig& cfg) {
  double wsum = 0;
  for (real v : cfg.type_weights) wsum += double(v);
  check_arg(wsum > 0, "type_weights must sum to a positive value");
  double x = rng.uniform01() * wsum;
  int kind = 0;
  for (; kind < 3; ++kind) {
    x -= double(cfg.type_weights[size_t(kind)]);
    if (x < 0) break;
  }
  switch (kind) {
    case 0: return gen_full_mask(h, w);
    case 1: return gen_rectangle_mask(h, w, rng, cfg);
    case 2: return gen_irregular_mask(h, w, rng, cfg);
    default: return gen_segment_mask(h, w, rng, cfg);
  }
}

Mask invert_mask(const Mask& m) {
  check(m.is_binary(), "invert_mask requires a binary mask");
  Mask out = m;
  out.kind = MaskKind::composite;
  for (real& v : out.data) v = real(1) - v;
  return out;
}

Mask binarize_mask(const Mask& soft, real threshold) {
  Mask out = soft;
  out.kind = MaskKind::composite;
  for (real& v : out.data) v = v > threshold ? real(1) : real(0);
  return out;
}

std::vector<Mask> multi_region_layout(int n, int h, int w, real area_frac) {
  check_arg(n >= 1 && n <= 5, "multi_region_layout: n out of range [1,5]");
  check_arg(area_frac > 0 && double(n) * double(area_frac) <= 1.0,
            "multi_region_layout: total area exceeds the image");
  const int s = std::max(1, int(std::lround(std::sqrt(double(area_frac) * h * w))));
  check_arg(s <= h && s <= w, "multi_region_layout: region does not fit");

  struct Anchor { int top, left; };
  const std::array<Anchor, 5> anchors{{
      {(h - s) / 2, (w - s) / 2},  // center
      {0, 0},                      // top-left
      {0, w - s},                  // top-right
      {h - s, 0},                  // bottom-left
      {h - s, w - s},              // bottom-right
  }};
  // Regions overlap only if the squares collide at this size; reject instead
  // of silently merging watermark slots.
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const bool sep_y = anchors[size_t(i)].top + s <= anchors[size_t(j)].top ||
                         anchors[size_t(j)].top + s <= anchors[size_t(i)].top;
      const bool sep_x = anchors[size_t(i)].left + s <= anchors[size_t(j)].left ||
                         anchors[size_t(j)].left + s <= anchors[size_t(i)].left;
      check_arg(sep_y || sep_x, "multi_region_layout: area infeasible, regions overlap");
    }

  std::vector<Mask> out;
  out.reserve(size_t(n));
  for (int i = 0; i < n; ++i) {
    Mask m = make_blank(h, w, MaskKind::rectangle);
    for (int y = anchors[size_t(i)].top; y < anchors[size_t(i)].top + s; ++y)
      for (int x = anchors[size_t(i)].left; x < anchors[size_t(i)].left + s; ++x) m.at(y, x) = real(1);
    out.push_back(std::move(m));
  }
  return out;
}

double area_ratio(const Mask& m) {
  double sum = 0;
  for (real v : m.data) sum += double(v);
  return sum / (double(m.h) * double(m.w));
}

std::vector<Mask> connected_components(const Mask& m, double min_area_frac) {
  check(m.is_binary(), "connected_components requires a binary mask");
  check_arg(min_area_frac >= 0 && min_area_frac < 1, "min_area_frac out of range");
  const int h = m.h, w = m.w;
  const int64_t floor_px = int64_t(std::ceil(min_area_frac * double(h) * double(w)));

  std::vector<int32_t> label(size_t(h) * w, -1);
  std::vector<Mask> out;
  std::vector<int64_t> sizes;
  std::vector<int32_t> stack;
  int32_t next = 0;
  for (int64_t start = 0; start < int64_t(h) * w; ++start) {
    if (m.data[size_t(start)] != real(1) || label[size_t(start)] >= 0) continue;
    // Flood fill with an explicit stack; 4-neighborhood.
    Mask comp;
    comp.h = h;
    comp.w = w;
    comp.kind = MaskKind::composite;
    comp.data.assign(size_t(h) * w, real(0));
    int64_t count = 0;
    stack.clear();
    stack.push_back(int32_t(start));
    label[size_t(start)] = next;
    while (!stack.empty()) {
      const int32_t p = stack.back();
      stack.pop_back();
      comp.data[size_t(p)] = 1;
      ++count;
      const int y = p / w, x = p % w;
      const int ny[4] = {y - 1, y + 1, y, y};
      const int nx[4] = {x, x, x - 1, x + 1};
      for (int k = 0; k < 4; ++k) {
        if (ny[k] < 0 || ny[k] >= h || nx[k] < 0 || nx[k] >= w) continue;
        const int32_t q = int32_t(ny[k] * w + nx[k]);
        if (m.data[size_t(q)] == real(1) && label[size_t(q)] < 0) {
          label[size_t(q)] = next;
          stack.push_back(q);
        }
      }
    }
    ++next;
    if (count >= floor_px) {
      out.push_back(std::move(comp));
      sizes.push_back(count);
    }
  }

  std::vector<size_t> order(out.size());
  std::iota(order.begin(), order.end(), size_t(0));
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return sizes[a] > sizes[b]; });
  std::vector<Mask> sorted;
  sorted.reserve(out.size());
  for (size_t i : order) sorted.push_back(std::move(out[i]));
  return sorted;
}

Tensor mask_to_tensor(const Mask& m) {
  Tensor t = Tensor::zeros({1, 1, m.h, m.w});
  std::copy(m.data.begin(), m.data.end(), t.data());
  return t;
}

Tensor masks_to_tensor(const std::vector<Mask>& ms) {
  check(!ms.empty(), "masks_to_tensor: empty batch");
  const int h = ms[0].h, w = ms[0].w;
  Tensor t = Tensor::zeros({int(ms.size()), 1, h, w});
  for (size_t i = 0; i < ms.size(); ++i) {
    check(ms[i].h == h && ms[i].w == w, "masks_to_tensor: mixed shapes");
    std::copy(ms[i].data.begin(), ms[i].data.end(), t.data() + i * size_t(h) * w);
  }
  return t;
}

Mask mask_from_tensor(const Tensor& t, int n) {
  const auto& s = t.shape();
  check(s.size() == 4 && s[1] == 1, "mask_from_tensor expects [N,1,H,W]");
  check(n >= 0 && n < int(s[0]), "mask_from_tensor: batch index out of range");
  Mask m;
  m.h = int(s[2]);
  m.w = int(s[3]);
  m.kind = MaskKind::composite;
  const size_t plane = size_t(m.h) * m.w;
  m.data.assign(t.data() + size_t(n) * plane, t.data() + (size_t(n) + 1) * plane);
  return m;
}

}  // namespace maskmark
