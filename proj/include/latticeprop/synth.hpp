#pragma once

#include <array>
#include <cstdint>
#include <numbers>
#include <vector>

#include "latticeprop/geometry.hpp"
#include "latticeprop/lattice.hpp"
#include "latticeprop/learn.hpp"

namespace latticeprop {

struct SceneConfig {
  int height_px = 512;
  int width_px = 512;
  int factor = 16;
  int n_boxes = 3;
  std::array<double, 2> scale_range = {96, 256};   // long side, pixels
  std::array<double, 2> aspect_range = {1.0, 4.0};  // long / short
  std::array<double, 2> angle_range = {-std::numbers::pi / 3,
                                       std::numbers::pi / 3};
  bool allow_overlap = false;
  double overlap_cap = 0.0;  // max pairwise IoU when overlap is allowed
  int max_retries = 1000;    // per box
};

struct SyntheticScene {
  Lattice lattice;
  std::vector<OrientedBox> gt_boxes;
  SceneLabels labels;
  uint64_t seed = 0;
};

// Rejection-samples boxes that fit the image, cover at least one node and
// respect the overlap policy. Fully determined by the seed.
SyntheticScene generate_scene(uint64_t seed, const SceneConfig& config);

// Analytic stand-in for a trained predictor: covered nodes put a dominant
// logit on the slot that walks toward their center (vertical moves first),
// centers and background stay on SELF.
CorrelationField ideal_field(const Lattice& lattice, const SceneLabels& labels);

inline constexpr double kIdealDominantLogit = 6.0;

}  // namespace latticeprop
