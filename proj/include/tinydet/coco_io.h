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

// Minimal COCO-style JSON. Boxes are [x, y, w, h] on disk.

#ifndef TINYDET_COCO_IO_H_
#define TINYDET_COCO_IO_H_

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "tinydet/metrics.h"

namespace tinydet {

struct ImageInfo {
  int id = 0;
  int width = 0;
  int height = 0;
  std::string file_name;  // optional
};

struct CategoryInfo {
  int id = 0;
  std::string name;
};

struct GroundTruthSet {
  std::vector<ImageInfo> images;
  std::vector<GroundTruth> annotations;
  std::vector<CategoryInfo> categories;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

GroundTruthSet ground_truth_from_json(const nlohmann::json& j);
nlohmann::json ground_truth_to_json(const GroundTruthSet& set);

std::vector<Detection> detections_from_json(const nlohmann::json& j);
nlohmann::json detections_to_json(const std::vector<Detection>& dets);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace tinydet

#endif  // TINYDET_COCO_IO_H_
