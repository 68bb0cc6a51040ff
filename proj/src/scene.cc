// Copyright 2026 The tinydet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tinydet/scene.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

namespace tinydet {
namespace {

Real quantize(Real v) {
  return std::round(std::clamp(v, Real(0), Real(1)) * 255) / 255;
}

// 3x3 box blur with edge clamping, applied in place.
void blur(std::vector<Real>& plane, int n) {
  std::vector<Real> tmp(plane.size());
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      Real s = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = std::clamp(y + dy, 0, n - 1);
          const int xx = std::clamp(x + dx, 0, n - 1);
          s += plane[yy * n + xx];
        }
      }
      tmp[y * n + x] = s / 9;
    }
  }
  plane.swap(tmp);
}

bool outside_exclusion(const SceneConfig& cfg, Real cx, Real cy) {
  if (cfg.center_exclusion <= 0) return true;
  const Real s = static_cast<Real>(cfg.exclusion_stride);
  const Real ox = cx - (std::floor(cx / s) + Real(0.5)) * s;
  const Real oy = cy - (std::floor(cy / s) + Real(0.5)) * s;
  return std::max(std::abs(ox), std::abs(oy)) >= cfg.center_exclusion;
}

bool overlaps(const Box& a, const Box& b) {
  return a.x_min < b.x_max + 1 && b.x_min < a.x_max + 1 &&
         a.y_min < b.y_max + 1 && b.y_min < a.y_max + 1;
}

}  // namespace

void SceneConfig::validate() const {
  if (size <= 0 || size % 32 != 0) {
    throw ConfigError("scene size must be a positive multiple of 32");
  }
  if (min_objects < 0 || max_objects < min_objects) {
    throw ConfigError("scene object count range is invalid");
  }
  if (min_size < 1 || max_size < min_size || 4 * max_size >= size) {
    throw ConfigError("scene object sizes must satisfy 1 <= min <= max < size/4");
  }
  if (clutter < 0 || background < 0 || background > 1) {
    throw ConfigError("scene clutter/background out of range");
  }
  if (center_exclusion < 0 || exclusion_stride <= 0 ||
      2 * center_exclusion >= exclusion_stride) {
    throw ConfigError("scene center exclusion does not fit in a cell");
  }
}

Scene gen_scene(const SceneConfig& cfg, int index) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(index)));
  std::uniform_real_distribution<Real> unit(0, 1);
  const int n = cfg.size;

  std::vector<Real> clutter(static_cast<std::size_t>(n) * n, 0);
  if (cfg.clutter > 0) {
    for (Real& v : clutter) v = unit(rng) * 2 - 1;
    blur(clutter, n);
    blur(clutter, n);
  }

  Scene scene;
  scene.image = FeatureMap({1, 3, n, n});
  for (int c = 0; c < 3; ++c) {
    Real* plane = scene.image.plane(0, c);
    for (int i = 0; i < n * n; ++i) {
      plane[i] = cfg.background + cfg.clutter * clutter[i];
    }
  }

  const int count = std::uniform_int_distribution<int>(cfg.min_objects,
                                                       cfg.max_objects)(rng);
  std::uniform_int_distribution<int> size_dist(cfg.min_size, cfg.max_size);
  for (int o = 0; o < count; ++o) {
    // Rejection sampling: bounded attempts, the object is dropped on failure.
    for (int attempt = 0; attempt < 200; ++attempt) {
      const int w = size_dist(rng);
      const int h = size_dist(rng);
      const int x0 = std::uniform_int_distribution<int>(0, n - w)(rng);
      const int y0 = std::uniform_int_distribution<int>(0, n - h)(rng);
      const bool ellipse = unit(rng) < Real(0.5);
      const Real intensity = Real(0.75) + Real(0.2) * unit(rng);
      const Box box{static_cast<Real>(x0), static_cast<Real>(y0),
                    static_cast<Real>(x0 + w), static_cast<Real>(y0 + h)};
      if (!outside_exclusion(cfg, box.center_x(), box.center_y())) continue;
      if (std::any_of(scene.objects.begin(), scene.objects.end(),
                      [&](const GroundTruth& g) { return overlaps(g.box, box); })) {
        continue;
      }
      // Ellipses inscribed in a w x h box touch every row and column, so the
      // rectangle stays tight to the rendered pixels.
      const Real rx = Real(w) / 2, ry = Real(h) / 2;
      for (int y = y0; y < y0 + h; ++y) {
        for (int x = x0; x < x0 + w; ++x) {
          if (ellipse) {
            const Real dx = (x + Real(0.5) - x0 - rx) / rx;
            const Real dy = (y + Real(0.5) - y0 - ry) / ry;
            const bool on_axis = x - x0 == w / 2 || y - y0 == h / 2;
            if (dx * dx + dy * dy > 1 && !on_axis) continue;
          }
          for (int c = 0; c < 3; ++c) {
            scene.image(0, c, y, x) = intensity - Real(0.05) * c;
          }
        }
      }
      scene.objects.push_back({box, 1, index + 1});
      break;
    }
  }
  for (Real& v : scene.image.values()) v = quantize(v);
  return scene;
}

std::vector<Scene> gen_dataset(const SceneConfig& config, int count) {
  std::vector<Scene> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) out.push_back(gen_scene(config, i));
  return out;
}

void write_ppm(const std::filesystem::path& path, const FeatureMap& image) {
  if (image.batch() != 1 || image.channels() != 3) {
    throw GeometryError("write_ppm expects a (1, 3, H, W) image");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "P6\n" << image.width() << ' ' << image.height() << "\n255\n";
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      for (int c = 0; c < 3; ++c) {
        const Real v = std::clamp(image(0, c, y, x), Real(0), Real(1));
        out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255))));
      }
    }
  }
}

FeatureMap read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255) {
    throw FormatError(path.string() + ": not an 8-bit binary PPM");
  }
  in.get();  // single whitespace before the raster
  FeatureMap image({1, 3, h, w});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        const int byte = in.get();
        if (byte == EOF) throw FormatError(path.string() + ": truncated raster");
        image(0, c, y, x) = static_cast<Real>(byte) / 255;
      }
    }
  }
  return image;
}

void write_dataset(const std::filesystem::path& dir,
                   const std::vector<Scene>& scenes) {
  std::filesystem::create_directories(dir / "images");
  GroundTruthSet set;
  set.categories.push_back({1, "object"});
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "images/%05zu.ppm", i + 1);
    write_ppm(dir / name, scenes[i].image);
    set.images.push_back({static_cast<int>(i + 1), scenes[i].image.width(),
                          scenes[i].image.height(), name});
    for (GroundTruth g : scenes[i].objects) {
      g.image_id = static_cast<int>(i + 1);
      set.annotations.push_back(g);
    }
  }
  write_json_file(dir / "gt.json", ground_truth_to_json(set));
}

std::vector<Scene> read_dataset(const std::filesystem::path& dir) {
  const GroundTruthSet set = ground_truth_from_json(read_json_file(dir / "gt.json"));
  std::vector<Scene> scenes;
  for (const ImageInfo& im : set.images) {
    if (im.file_name.empty()) {
      throw FormatError("gt.json image " + std::to_string(im.id) +
                        " has no file_name");
    }
    Scene s;
    s.image = read_ppm(dir / im.file_name);
    for (const GroundTruth& g : set.annotations) {
      if (g.image_id == im.id) s.objects.push_back(g);
    }
    scenes.push_back(std::move(s));
  }
  return scenes;
}

FeatureMap stack_images(const std::vector<const Scene*>& scenes) {
  if (scenes.empty()) throw GeometryError("stack_images: empty batch");
  const FeatureMap& first = scenes.front()->image;
  FeatureMap out({static_cast<int>(scenes.size()), first.channels(),
                  first.height(), first.width()});
  const std::size_t per = first.size();
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    if (!scenes[i]->image.same_shape(first)) {
      throw GeometryError("stack_images: images differ in shape");
    }
    std::copy(scenes[i]->image.values().begin(), scenes[i]->image.values().end(),
              out.values().begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  return out;
}

}  // namespace tinydet
