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

#include "tinydet/coco_io.h"

#include <fstream>

namespace tinydet {
namespace {

Box box_from_json(const nlohmann::json& bbox) {
  if (!bbox.is_array() || bbox.size() != 4) {
    throw FormatError("bbox must be [x, y, w, h]");
  }
  const Real w = bbox[2].get<Real>();
  const Real h = bbox[3].get<Real>();
  if (w < 0 || h < 0) throw FormatError("bbox has negative extent");
  return Box::from_xywh(bbox[0].get<Real>(), bbox[1].get<Real>(), w, h);
}

nlohmann::json box_to_json(const Box& b) {
  return nlohmann::json::array({b.x_min, b.y_min, b.width(), b.height()});
}

}  // namespace

GroundTruthSet ground_truth_from_json(const nlohmann::json& j) {
  GroundTruthSet set;
  try {
    for (const auto& im : j.at("images")) {
      ImageInfo info;
      info.id = im.at("id").get<int>();
      info.width = im.at("width").get<int>();
      info.height = im.at("height").get<int>();
      info.file_name = im.value("file_name", std::string());
      set.images.push_back(std::move(info));
    }
    for (const auto& a : j.at("annotations")) {
      GroundTruth g;
      g.image_id = a.at("image_id").get<int>();
      g.class_id = a.at("category_id").get<int>();
      g.box = box_from_json(a.at("bbox"));
      set.annotations.push_back(g);
    }
    for (const auto& c : j.at("categories")) {
      set.categories.push_back(
          {c.at("id").get<int>(), c.value("name", std::string())});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("ground truth: ") + e.what());
  }
  return set;
}

nlohmann::json ground_truth_to_json(const GroundTruthSet& set) {
  nlohmann::json j;
  j["images"] = nlohmann::json::array();
  for (const ImageInfo& im : set.images) {
    nlohmann::json e = {{"id", im.id}, {"width", im.width}, {"height", im.height}};
    if (!im.file_name.empty()) e["file_name"] = im.file_name;
    j["images"].push_back(std::move(e));
  }
  j["annotations"] = nlohmann::json::array();
  int next_id = 1;
  for (const GroundTruth& g : set.annotations) {
    j["annotations"].push_back({{"id", next_id++},
                                {"image_id", g.image_id},
                                {"category_id", g.class_id},
                                {"bbox", box_to_json(g.box)}});
  }
  j["categories"] = nlohmann::json::array();
  for (const CategoryInfo& c : set.categories) {
    j["categories"].push_back({{"id", c.id}, {"name", c.name}});
  }
  return j;
}

std::vector<Detection> detections_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw FormatError("detections must be a JSON array");
  std::vector<Detection> out;
  try {
    for (const auto& d : j) {
      Detection det;
      det.image_id = d.at("image_id").get<int>();
      det.class_id = d.at("category_id").get<int>();
      det.box = box_from_json(d.at("bbox"));
      det.score = d.at("score").get<Real>();
      out.push_back(det);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("detections: ") + e.what());
  }
  return out;
}

nlohmann::json detections_to_json(const std::vector<Detection>& dets) {
  nlohmann::json j = nlohmann::json::array();
  for (const Detection& d : dets) {
    j.push_back({{"image_id", d.image_id},
                 {"category_id", d.class_id},
                 {"bbox", box_to_json(d.box)},
                 {"score", d.score}});
  }
  return j;
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace tinydet
