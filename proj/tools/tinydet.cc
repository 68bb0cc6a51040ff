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

// tinydet command line: gen-data, train-toy, eval, gradcheck.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "tinydet/coco_io.h"
#include "tinydet/gradcheck_suites.h"
#include "tinydet/metrics.h"
#include "tinydet/scene.h"
#include "tinydet/train.h"

namespace {

using namespace tinydet;

// "2" or "1..3".
void parse_range(const std::string& text, int& lo, int& hi) {
  const auto dots = text.find("..");
  try {
    if (dots == std::string::npos) {
      lo = hi = std::stoi(text);
    } else {
      lo = std::stoi(text.substr(0, dots));
      hi = std::stoi(text.substr(dots + 2));
    }
  } catch (const std::exception&) {
    throw ConfigError("bad range \"" + text + "\", expected N or A..B");
  }
}

struct GenDataArgs {
  std::string out;
  int images = 200;
  SceneConfig scene;
  std::string objects = "1..3";
};

struct TrainArgs {
  std::string data;
  std::string config;
  std::string preset = "full";
  std::string out = "toy_run";
  int epochs = 12;
  int steps = 0;
  int batch_size = 8;
  int images = 200;
  double lr = 0.01;
  std::uint64_t seed = 0;
  bool quiet = false;
};

struct EvalArgs {
  std::string gt;
  std::string dets;
  std::string protocol = "both";
  std::string c = "auto";
};

struct GradcheckArgs {
  std::string module = "all";
  std::uint64_t seed = 0;
};

int run_gen_data(GenDataArgs& a) {
  parse_range(a.objects, a.scene.min_objects, a.scene.max_objects);
  const std::vector<Scene> scenes = gen_dataset(a.scene, a.images);
  write_dataset(a.out, scenes);
  std::size_t boxes = 0;
  for (const Scene& s : scenes) boxes += s.objects.size();
  std::cerr << "wrote " << scenes.size() << " images, " << boxes
            << " boxes to " << a.out << "\n";
  return 0;
}

int run_train(const TrainArgs& a) {
  DetectorConfig cfg = detector_preset(a.preset);
  if (!a.config.empty()) cfg = DetectorConfig::from_json(read_json_file(a.config));

  std::vector<Scene> data;
  if (a.data.empty()) {
    SceneConfig sc;
    sc.size = cfg.image_size;
    sc.seed = a.seed;
    data = gen_dataset(sc, a.images);
  } else {
    data = read_dataset(a.data);
  }

  TrainConfig tc;
  tc.epochs = a.epochs;
  tc.steps = a.steps;
  tc.batch_size = a.batch_size;
  tc.lr = static_cast<Real>(a.lr);
  tc.seed = a.seed;

  Detector model = build_detector(cfg, a.seed);
  const bool quiet = a.quiet;
  const TrainHistory history = train(model, data, tc, [quiet](const StepRecord& r) {
    if (!quiet && (r.step % 25 == 0)) {
      std::cerr << "step " << r.step << " loss " << r.total << " (obj "
                << r.objectness << ", reg " << r.regression << ")\n";
    }
  });

  const std::filesystem::path out(a.out);
  std::filesystem::create_directories(out);
  write_json_file(out / "history.json", history.to_json());
  write_json_file(out / "config.json", cfg.to_json());
  save_weights(out / "weights.bin", out / "weights.manifest.json", model.slots());
  const std::vector<Real> smooth = smoothed_losses(history);
  std::cerr << "done: " << history.steps.size() << " steps in "
            << history.wall_clock_seconds << " s, smoothed loss "
            << (smooth.empty() ? 0 : smooth.back()) << "\n";
  return 0;
}

int run_eval(const EvalArgs& a) {
  const GroundTruthSet gt = ground_truth_from_json(read_json_file(a.gt));
  const std::vector<Detection> dets = detections_from_json(read_json_file(a.dets));
  EvalConfig ec;
  ec.iou = a.protocol == "iou" || a.protocol == "both";
  ec.safit = a.protocol == "safit" || a.protocol == "both";
  if (a.c != "auto") {
    try {
      ec.c = static_cast<Real>(std::stod(a.c));
    } catch (const std::exception&) {
      throw ConfigError("--C must be \"auto\" or a positive number");
    }
    if (!(ec.c > 0)) throw ConfigError("--C must be positive");
  }
  std::cout << evaluate(dets, gt.annotations, ec).to_json().dump(2) << "\n";
  return 0;
}

int run_gradcheck_cmd(const GradcheckArgs& a) {
  const std::vector<GradCheckReport> reports = run_gradcheck(a.module, a.seed);
  nlohmann::json j = nlohmann::json::array();
  bool pass = true;
  for (const GradCheckReport& r : reports) {
    j.push_back(r.to_json());
    pass = pass && r.pass;
  }
  std::cout << nlohmann::json{{"pass", pass}, {"reports", j}}.dump(2) << "\n";
  return pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tinydet: desk-scale tiny object detector"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic scene set");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--images", gen.images, "Image count")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--size", gen.scene.size, "Square image size");
  gen_cmd->add_option("--seed", gen.scene.seed, "Random seed");
  gen_cmd->add_option("--objects", gen.objects, "Objects per image, N or A..B");
  gen_cmd->add_option("--min-size", gen.scene.min_size, "Smallest object side");
  gen_cmd->add_option("--max-size", gen.scene.max_size, "Largest object side");
  gen_cmd->add_option("--clutter", gen.scene.clutter, "Background clutter amplitude");
  gen_cmd->add_option("--center-exclusion", gen.scene.center_exclusion,
                      "Min Chebyshev distance of object centers from cell centers");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train-toy", "Train the toy detector");
  train_cmd->add_option("--data", tr.data, "Dataset directory (default: generate)");
  train_cmd->add_option("--config", tr.config, "Detector config JSON");
  train_cmd->add_option("--preset", tr.preset, "Named config when --config is absent");
  train_cmd->add_option("--out", tr.out, "Output directory");
  train_cmd->add_option("--epochs", tr.epochs, "Epochs");
  train_cmd->add_option("--steps", tr.steps, "Total steps, overrides --epochs");
  train_cmd->add_option("--batch-size", tr.batch_size, "Batch size");
  train_cmd->add_option("--images", tr.images, "Generated image count without --data");
  train_cmd->add_option("--lr", tr.lr, "Learning rate");
  train_cmd->add_option("--seed", tr.seed, "Random seed");
  train_cmd->add_flag("--quiet", tr.quiet, "No per-step progress");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Score detections against ground truth");
  eval_cmd->add_option("--gt", ev.gt, "Ground-truth JSON")->required();
  eval_cmd->add_option("--dets", ev.dets, "Detections JSON")->required();
  eval_cmd->add_option("--protocol", ev.protocol, "iou, safit or both")
      ->check(CLI::IsMember({"iou", "safit", "both"}));
  eval_cmd->add_option("--C", ev.c, "SAFit scale, or auto");

  GradcheckArgs gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  std::vector<std::string> modules = gradcheck_modules();
  modules.push_back("all");
  gc_cmd->add_option("--module", gc.module, "Module to check")
      ->check(CLI::IsMember(modules));
  gc_cmd->add_option("--seed", gc.seed, "Random seed");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen_cmd) return run_gen_data(gen);
    if (*train_cmd) return run_train(tr);
    if (*eval_cmd) return run_eval(ev);
    if (*gc_cmd) return run_gradcheck_cmd(gc);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
