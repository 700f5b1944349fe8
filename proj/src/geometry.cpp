#include "latticeprop/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace latticeprop {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kHalfPi = std::numbers::pi / 2;

struct Vec2 {
  double x = 0;
  double y = 0;
};

inline Vec2 rotate(double x, double y, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c * x - s * y, s * x + c * y};
}

}  // namespace

OrientedBox canonicalize(OrientedBox box) {
  double a = box.angle;
  while (a > kHalfPi) a -= kPi;
  while (a <= -kHalfPi) a += kPi;
  // A quarter turn is the same rectangle with swapped extents; fold the
  // boundary onto angle 0 so the representation is unique.
  if (a > kHalfPi - 1e-9) {
    std::swap(box.w, box.h);
    a -= kHalfPi;
  }
  box.angle = a;
  return box;
}

std::array<std::pair<double, double>, 4> OrientedBox::corners() const {
  const double hw = w / 2;
  const double hh = h / 2;
  // top-left, bottom-left, bottom-right, top-right at angle 0
  const double local[4][2] = {
      {-hw, -hh}, {-hw, hh}, {hw, hh}, {hw, -hh}};
  std::array<std::pair<double, double>, 4> out;
  for (int k = 0; k < 4; ++k) {
    const Vec2 p = rotate(local[k][0], local[k][1], angle);
    out[static_cast<size_t>(k)] = {cx + p.x, cy + p.y};
  }
  return out;
}

bool OrientedBox::contains(double x, double y, double eps) const {
  const Vec2 p = rotate(x - cx, y - cy, -angle);
  return std::fabs(p.x) <= w / 2 + eps && std::fabs(p.y) <= h / 2 + eps;
}

OrientedBox decode_geometry(double anchor_x, double anchor_y,
                            const BoxGeometry& g) {
  const double w = g.d_left + g.d_right;
  const double h = g.d_top + g.d_bottom;
  if (w <= 0 || h <= 0)
    throw DegenerateBox("decoded box has extent " + std::to_string(w) + "x" +
                        std::to_string(h));
  // The anchor sits at ((d_left-d_right)/2, (d_top-d_bottom)/2) in the box
  // frame; invert to place the center in image coordinates.
  const Vec2 off = rotate((g.d_right - g.d_left) / 2,
                          (g.d_bottom - g.d_top) / 2, g.angle);
  OrientedBox box;
  box.cx = anchor_x + off.x;
  box.cy = anchor_y + off.y;
  box.w = w;
  box.h = h;
  box.angle = g.angle;
  return canonicalize(box);
}

BoxGeometry encode_geometry(double anchor_x, double anchor_y,
                            const OrientedBox& box) {
  const Vec2 u = rotate(anchor_x - box.cx, anchor_y - box.cy, -box.angle);
  BoxGeometry g;
  g.d_left = box.w / 2 + u.x;
  g.d_right = box.w / 2 - u.x;
  g.d_top = box.h / 2 + u.y;
  g.d_bottom = box.h / 2 - u.y;
  g.angle = box.angle;
  return g;
}

namespace {

using Polygon = std::vector<Vec2>;

double polygon_area(const Polygon& poly) {
  double acc = 0;
  const size_t n = poly.size();
  for (size_t i = 0; i < n; ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % n];
    acc += a.x * b.y - b.x * a.y;
  }
  return std::fabs(acc) / 2;
}

// Sutherland-Hodgman clip of `subject` against the half-plane left of a->b
// (for a counter-clockwise clip polygon in math orientation).
Polygon clip_edge(const Polygon& subject, const Vec2& a, const Vec2& b) {
  Polygon out;
  const size_t n = subject.size();
  if (n == 0) return out;
  auto side = [&](const Vec2& p) {
    return (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
  };
  for (size_t i = 0; i < n; ++i) {
    const Vec2& cur = subject[i];
    const Vec2& nxt = subject[(i + 1) % n];
    const double sc = side(cur);
    const double sn = side(nxt);
    if (sc >= 0) out.push_back(cur);
    if ((sc > 0 && sn < 0) || (sc < 0 && sn > 0)) {
      const double t = sc / (sc - sn);
      out.push_back({cur.x + t * (nxt.x - cur.x), cur.y + t * (nxt.y - cur.y)});
    }
  }
  return out;
}

Polygon box_polygon_ccw(const OrientedBox& box) {
  // corners() is clockwise in math orientation (y-down screen CCW); reverse
  // for the clipper.
  const auto c = box.corners();
  Polygon poly(4);
  for (int k = 0; k < 4; ++k)
    poly[static_cast<size_t>(k)] = {c[static_cast<size_t>(3 - k)].first,
                                    c[static_cast<size_t>(3 - k)].second};
  return poly;
}

double intersection_area(const OrientedBox& a, const OrientedBox& b) {
  Polygon poly = box_polygon_ccw(a);
  const Polygon clip = box_polygon_ccw(b);
  for (size_t i = 0; i < clip.size() && !poly.empty(); ++i)
    poly = clip_edge(poly, clip[i], clip[(i + 1) % clip.size()]);
  if (poly.size() < 3) return 0;
  return polygon_area(poly);
}

}  // namespace

double iou(const OrientedBox& a, const OrientedBox& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0) return 0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<ScoredBox> nms(std::vector<ScoredBox> boxes, double iou_thresh) {
  std::stable_sort(boxes.begin(), boxes.end(),
                   [](const ScoredBox& a, const ScoredBox& b) {
                     return a.score > b.score;
                   });
  std::vector<ScoredBox> kept;
  for (const auto& candidate : boxes) {
    bool suppressed = false;
    for (const auto& k : kept) {
      if (iou(candidate.box, k.box) >= iou_thresh) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(candidate);
  }
  return kept;
}

std::vector<ScoredBox> merge_by_center(
    const std::vector<std::optional<BoxGeometry>>& geometries,
    const std::vector<double>& fg_conf, const ClusterAssignment& assignment,
    const Lattice& lattice) {
  if (geometries.size() != static_cast<size_t>(lattice.node_count()) ||
      fg_conf.size() != geometries.size())
    throw ShapeMismatch("merge_by_center: per-node inputs sized " +
                        std::to_string(geometries.size()) + "/" +
                        std::to_string(fg_conf.size()) + " for " +
                        std::to_string(lattice.node_count()) + " nodes");
  std::vector<ScoredBox> out;
  for (const auto& [center, members] : assignment.clusters) {
    double wsum = 0, cx = 0, cy = 0, w = 0, h = 0;
    double sin2 = 0, cos2 = 0;
    double conf_sum = 0;
    int used = 0;
    for (int node : members) {
      const auto& g = geometries[static_cast<size_t>(node)];
      if (!g.has_value()) continue;
      OrientedBox box;
      try {
        box = decode_geometry(lattice.px_x(node), lattice.px_y(node), *g);
      } catch (const DegenerateBox&) {
        continue;
      }
      const double weight = fg_conf[static_cast<size_t>(node)];
      wsum += weight;
      cx += weight * box.cx;
      cy += weight * box.cy;
      w += weight * box.w;
      h += weight * box.h;
      // doubled angles: rectangle orientation is pi-periodic
      sin2 += weight * std::sin(2 * box.angle);
      cos2 += weight * std::cos(2 * box.angle);
      conf_sum += weight;
      ++used;
    }
    if (used == 0)
      throw EmptyCluster("cluster at center " + std::to_string(center) +
                         " has no decodable geometry");
    if (wsum <= 0) {
      // all-zero confidence degenerates to the unweighted mean
      wsum = 0;
      cx = cy = w = h = sin2 = cos2 = 0;
      for (int node : members) {
        const auto& g = geometries[static_cast<size_t>(node)];
        if (!g.has_value()) continue;
        OrientedBox box;
        try {
          box = decode_geometry(lattice.px_x(node), lattice.px_y(node), *g);
        } catch (const DegenerateBox&) {
          continue;
        }
        wsum += 1;
        cx += box.cx;
        cy += box.cy;
        w += box.w;
        h += box.h;
        sin2 += std::sin(2 * box.angle);
        cos2 += std::cos(2 * box.angle);
      }
    }
    OrientedBox merged;
    merged.cx = cx / wsum;
    merged.cy = cy / wsum;
    merged.w = w / wsum;
    merged.h = h / wsum;
    merged.angle = 0.5 * std::atan2(sin2, cos2);
    out.push_back({canonicalize(merged), conf_sum / members.size()});
  }
  return out;
}

OrientedBox pca_box_from_cluster(const std::vector<int>& members,
                                 const Lattice& lattice) {
  if (members.empty())
    throw EmptyCluster("pca_box_from_cluster: empty cluster");
  const double pad = lattice.factor / 2.0;
  const size_t n = members.size();
  double mx = 0, my = 0;
  for (int node : members) {
    mx += lattice.px_x(node);
    my += lattice.px_y(node);
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);

  double sxx = 0, syy = 0, sxy = 0;
  for (int node : members) {
    const double dx = lattice.px_x(node) - mx;
    const double dy = lattice.px_y(node) - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  sxx /= static_cast<double>(n);
  syy /= static_cast<double>(n);
  sxy /= static_cast<double>(n);

  double angle = 0;
  const double iso_eps = 1e-12;
  if (std::fabs(sxy) > iso_eps || std::fabs(sxx - syy) > iso_eps) {
    angle = 0.5 * std::atan2(2 * sxy, sxx - syy);
    // atan2 picks the axis of the larger eigenvalue; fold into the canonical
    // interval at the end
  }

  const double ux = std::cos(angle), uy = std::sin(angle);
  const double vx = -std::sin(angle), vy = std::cos(angle);
  double umin = HUGE_VAL, umax = -HUGE_VAL, vmin = HUGE_VAL, vmax = -HUGE_VAL;
  for (int node : members) {
    const double px = lattice.px_x(node);
    const double py = lattice.px_y(node);
    const double u = px * ux + py * uy;
    const double v = px * vx + py * vy;
    umin = std::min(umin, u);
    umax = std::max(umax, u);
    vmin = std::min(vmin, v);
    vmax = std::max(vmax, v);
  }
  const double uc = (umin + umax) / 2;
  const double vc = (vmin + vmax) / 2;
  OrientedBox box;
  box.cx = uc * ux + vc * vx;
  box.cy = uc * uy + vc * vy;
  box.w = (umax - umin) + 2 * pad;
  box.h = (vmax - vmin) + 2 * pad;
  box.angle = angle;
  return canonicalize(box);
}

DetectionMetrics evaluate(const std::vector<OrientedBox>& preds,
                          const std::vector<OrientedBox>& gts,
                          double iou_thresh) {
  struct Pair {
    double overlap;
    int pred;
    int gt;
  };
  std::vector<Pair> pairs;
  for (int p = 0; p < static_cast<int>(preds.size()); ++p)
    for (int g = 0; g < static_cast<int>(gts.size()); ++g) {
      const double overlap = iou(preds[static_cast<size_t>(p)],
                                 gts[static_cast<size_t>(g)]);
      if (overlap >= iou_thresh) pairs.push_back({overlap, p, g});
    }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.overlap != b.overlap) return a.overlap > b.overlap;
    if (a.pred != b.pred) return a.pred < b.pred;
    return a.gt < b.gt;
  });
  std::vector<uint8_t> pred_used(preds.size(), 0), gt_used(gts.size(), 0);
  DetectionMetrics metrics;
  for (const auto& pair : pairs) {
    if (pred_used[static_cast<size_t>(pair.pred)] ||
        gt_used[static_cast<size_t>(pair.gt)])
      continue;
    pred_used[static_cast<size_t>(pair.pred)] = 1;
    gt_used[static_cast<size_t>(pair.gt)] = 1;
    metrics.matches.emplace_back(pair.pred, pair.gt);
  }
  const double m = static_cast<double>(metrics.matches.size());
  metrics.precision = preds.empty() ? 0.0 : m / static_cast<double>(preds.size());
  metrics.recall = gts.empty() ? 0.0 : m / static_cast<double>(gts.size());
  metrics.f_score =
      (metrics.precision + metrics.recall) > 0
          ? 2 * metrics.precision * metrics.recall /
                (metrics.precision + metrics.recall)
          : 0.0;
  return metrics;
}

}  // namespace latticeprop
