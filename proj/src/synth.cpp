#include "latticeprop/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "latticeprop/log.hpp"
#include "latticeprop/rng.hpp"

namespace latticeprop {

namespace {

bool box_fits(const OrientedBox& box, int width_px, int height_px) {
  for (const auto& [x, y] : box.corners())
    if (x < 0 || y < 0 || x > width_px || y > height_px) return false;
  return true;
}

std::vector<int> coverage_of(const Lattice& lattice, const OrientedBox& box) {
  std::vector<int> out;
  for (int id = 0; id < lattice.node_count(); ++id)
    if (box.contains(lattice.px_x(id), lattice.px_y(id))) out.push_back(id);
  return out;
}

// 4-connectivity over the covered nodes; disconnected coverage cannot route
// greedy paths to the center through the box interior
bool coverage_connected(const Lattice& lattice, const std::vector<int>& nodes) {
  if (nodes.empty()) return false;
  std::vector<uint8_t> in(static_cast<size_t>(lattice.node_count()), 0);
  for (int id : nodes) in[static_cast<size_t>(id)] = 1;
  std::vector<int> stack = {nodes.front()};
  std::vector<uint8_t> seen(static_cast<size_t>(lattice.node_count()), 0);
  seen[static_cast<size_t>(nodes.front())] = 1;
  size_t reached = 1;
  while (!stack.empty()) {
    const int cur = stack.back();
    stack.pop_back();
    for (const auto& ref : neighbors(lattice, cur)) {
      if (!in[static_cast<size_t>(ref.id)] || seen[static_cast<size_t>(ref.id)])
        continue;
      seen[static_cast<size_t>(ref.id)] = 1;
      ++reached;
      stack.push_back(ref.id);
    }
  }
  return reached == nodes.size();
}

}  // namespace

SyntheticScene generate_scene(uint64_t seed, const SceneConfig& config) {
  if (config.n_boxes < 0)
    throw ShapeMismatch("generate_scene: n_boxes must be >= 0");
  if (config.scale_range[0] > config.scale_range[1] ||
      config.aspect_range[0] > config.aspect_range[1] ||
      config.angle_range[0] > config.angle_range[1])
    throw ShapeMismatch("generate_scene: empty sampling range");

  SyntheticScene scene;
  scene.seed = seed;
  scene.lattice =
      build_lattice(config.height_px, config.width_px, config.factor);
  Xoshiro256pp rng(seed);

  for (int b = 0; b < config.n_boxes; ++b) {
    bool placed = false;
    for (int attempt = 0; attempt < config.max_retries; ++attempt) {
      OrientedBox box;
      box.w = rng.uniform(config.scale_range[0], config.scale_range[1]);
      const double aspect =
          rng.uniform(config.aspect_range[0], config.aspect_range[1]);
      box.h = box.w / aspect;
      box.angle = rng.uniform(config.angle_range[0], config.angle_range[1]);

      // rotated half-extents bound the feasible center region
      const double rx = box.w / 2 * std::fabs(std::cos(box.angle)) +
                        box.h / 2 * std::fabs(std::sin(box.angle));
      const double ry = box.w / 2 * std::fabs(std::sin(box.angle)) +
                        box.h / 2 * std::fabs(std::cos(box.angle));
      if (2 * rx >= config.width_px || 2 * ry >= config.height_px) continue;
      box.cx = rng.uniform(rx, config.width_px - rx);
      box.cy = rng.uniform(ry, config.height_px - ry);
      box = canonicalize(box);

      if (!box_fits(box, config.width_px, config.height_px)) continue;
      const std::vector<int> coverage = coverage_of(scene.lattice, box);
      if (coverage.empty()) continue;
      if (!coverage_connected(scene.lattice, coverage)) continue;
      bool clash = false;
      for (const auto& other : scene.gt_boxes) {
        const double overlap = iou(box, other);
        if (overlap > (config.allow_overlap ? config.overlap_cap : 0.0)) {
          clash = true;
          break;
        }
      }
      if (clash) continue;
      scene.gt_boxes.push_back(box);
      placed = true;
      break;
    }
    if (!placed)
      throw PlacementFailed("generate_scene: could not place box " +
                            std::to_string(b) + " after " +
                            std::to_string(config.max_retries) + " attempts");
  }

  scene.labels = label_scene(scene.lattice, scene.gt_boxes);
  return scene;
}

CorrelationField ideal_field(const Lattice& lattice,
                             const SceneLabels& labels) {
  if (labels.node_count() != lattice.node_count())
    throw ShapeMismatch("ideal_field: labels do not match lattice");
  const int n = lattice.node_count();

  // Per center: breadth-first distances over its own coverage, so the chosen
  // hops walk to the center without leaving the box. Rotated boxes are not
  // closed under plain Manhattan descent.
  const CenterSet centers = center_set_from_labels(lattice, labels);
  std::map<int, std::vector<int>> cov_dist;  // center -> per-node distance
  for (const auto& center : centers.centers) {
    std::vector<int>& dist = cov_dist[center.node];
    dist.assign(static_cast<size_t>(n), -1);
    std::vector<uint8_t> in(static_cast<size_t>(n), 0);
    for (int id : center.coverage) in[static_cast<size_t>(id)] = 1;
    std::vector<int> frontier = {center.node};
    dist[static_cast<size_t>(center.node)] = 0;
    while (!frontier.empty()) {
      std::vector<int> next;
      for (int cur : frontier)
        for (const auto& ref : neighbors(lattice, cur)) {
          if (!in[static_cast<size_t>(ref.id)]) continue;
          if (dist[static_cast<size_t>(ref.id)] >= 0) continue;
          dist[static_cast<size_t>(ref.id)] =
              dist[static_cast<size_t>(cur)] + 1;
          next.push_back(ref.id);
        }
      frontier = std::move(next);
    }
  }

  std::vector<SlotWeights> logits(static_cast<size_t>(n), SlotWeights{});
  for (int i = 0; i < n; ++i) {
    Slot dominant = kSelf;
    if (labels.fg_mask[static_cast<size_t>(i)]) {
      // nearest labeled center, Manhattan metric, smaller id on ties
      int center = -1;
      int best = 0;
      for (const auto& [candidate, weight] :
           labels.center_labels[static_cast<size_t>(i)]) {
        (void)weight;
        const int dist = lattice.manhattan(i, candidate);
        if (center < 0 || dist < best) {
          center = candidate;
          best = dist;
        }
      }
      if (center >= 0 && center != i) {
        const int dr = lattice.row_of(center) - lattice.row_of(i);
        const int dc = lattice.col_of(center) - lattice.col_of(i);
        dominant = dr != 0 ? (dr > 0 ? kDown : kUp)
                           : (dc > 0 ? kRight : kLeft);
        // walk inside the coverage when a shortest in-coverage hop exists;
        // vertical moves keep priority
        const auto dist_it = cov_dist.find(center);
        if (dist_it != cov_dist.end() &&
            dist_it->second[static_cast<size_t>(i)] > 0) {
          const std::vector<int>& dist = dist_it->second;
          const auto targets = slot_targets(lattice, i);
          for (Slot s : {kUp, kDown, kLeft, kRight}) {
            if (targets[s] < 0) continue;
            if (dist[static_cast<size_t>(targets[s])] ==
                dist[static_cast<size_t>(i)] - 1) {
              dominant = s;
              break;
            }
          }
        }
      }
    }
    logits[static_cast<size_t>(i)][dominant] = kIdealDominantLogit;
  }
  return normalize_field(lattice, logits);
}

}  // namespace latticeprop
