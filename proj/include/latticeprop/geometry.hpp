#pragma once

#include <array>
#include <optional>
#include <utility>
#include <vector>

#include "latticeprop/cp.hpp"
#include "latticeprop/lattice.hpp"

namespace latticeprop {

// Rotated rectangle. Canonical form keeps angle in (-pi/2, pi/2] with w
// measured along the angle-0 axis; the quarter-turn ambiguity resolves by
// swapping extents.
struct OrientedBox {
  double cx = 0;
  double cy = 0;
  double w = 0;
  double h = 0;
  double angle = 0;  // radians

  double area() const { return w * h; }
  // Counter-clockwise on screen (y grows downward), starting at the corner
  // that is top-left at angle 0.
  std::array<std::pair<double, double>, 4> corners() const;
  bool contains(double x, double y, double eps = 1e-9) const;
};

OrientedBox canonicalize(OrientedBox box);

// Per-anchor side distances in the box frame plus the box angle.
struct BoxGeometry {
  double d_top = 0;
  double d_bottom = 0;
  double d_left = 0;
  double d_right = 0;
  double angle = 0;
};

OrientedBox decode_geometry(double anchor_x, double anchor_y,
                            const BoxGeometry& g);
BoxGeometry encode_geometry(double anchor_x, double anchor_y,
                            const OrientedBox& box);

// Rotated-rectangle IoU by convex polygon clipping.
double iou(const OrientedBox& a, const OrientedBox& b);

struct ScoredBox {
  OrientedBox box;
  double score = 0;
};

// Greedy descending-score suppression at IoU >= iou_thresh; equal scores keep
// insertion order.
std::vector<ScoredBox> nms(std::vector<ScoredBox> boxes, double iou_thresh);

// One box per cluster: fg-confidence-weighted average of the members'
// decoded boxes; angles use the doubled-angle circular mean.
std::vector<ScoredBox> merge_by_center(
    const std::vector<std::optional<BoxGeometry>>& geometries,
    const std::vector<double>& fg_conf, const ClusterAssignment& assignment,
    const Lattice& lattice);

// Principal-axes box over the member nodes' pixel centers, padded by half a
// cell per side so a cluster tiling a rectangle reproduces it.
OrientedBox pca_box_from_cluster(const std::vector<int>& members,
                                 const Lattice& lattice);

struct DetectionMetrics {
  double precision = 0;
  double recall = 0;
  double f_score = 0;
  std::vector<std::pair<int, int>> matches;  // (pred index, gt index)
};

// Greedy one-to-one matching in descending IoU at the given threshold.
DetectionMetrics evaluate(const std::vector<OrientedBox>& preds,
                          const std::vector<OrientedBox>& gts,
                          double iou_thresh);

}  // namespace latticeprop
