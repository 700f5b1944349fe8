// Independent reference implementations used only by tests: dense
// matrix-power propagation, brute-force path following, scanline
// rasterization for IoU, a dense Markov-clustering iteration, and finite
// differences over the simplified flow-gradient graph.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "latticeprop/cp.hpp"
#include "latticeprop/geometry.hpp"
#include "latticeprop/lattice.hpp"
#include "latticeprop/learn.hpp"
#include "latticeprop/mcl.hpp"
#include "latticeprop/rng.hpp"

namespace oracle {

using latticeprop::CorrelationField;
using latticeprop::FlowLabels;
using latticeprop::FlowMatrix;
using latticeprop::Lattice;
using latticeprop::OrientedBox;
using latticeprop::SceneLabels;
using latticeprop::SlotWeights;

// Dense state after T synchronous updates from the one-hot identity:
// C_T = A^T where A is the dense transition matrix. Row-major node x center.
inline std::vector<double> dense_cp_power(const Lattice& lat,
                                          const CorrelationField& field,
                                          int steps) {
  const int n = lat.node_count();
  const std::vector<double> a = latticeprop::dense_transition_matrix(lat, field);
  std::vector<double> state(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) state[static_cast<size_t>(i) * n + i] = 1.0;
  std::vector<double> next(state.size());
  for (int t = 0; t < steps; ++t) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double acc = 0;
        for (int k = 0; k < n; ++k)
          acc += a[static_cast<size_t>(i) * n + k] *
                 state[static_cast<size_t>(k) * n + j];
        next[static_cast<size_t>(i) * n + j] = acc;
      }
    state.swap(next);
  }
  return state;
}

// Largest deviation between a sparse state and a dense node x center matrix.
inline double state_vs_dense(const latticeprop::ConfidenceState& state,
                             const std::vector<double>& dense, int n) {
  double worst = 0;
  for (int i = 0; i < n; ++i) {
    std::vector<double> row(dense.begin() + static_cast<long>(i) * n,
                            dense.begin() + static_cast<long>(i + 1) * n);
    for (const auto& [center, value] : state.conf[static_cast<size_t>(i)]) {
      worst = std::max(worst, std::fabs(value - row[static_cast<size_t>(center)]));
      row[static_cast<size_t>(center)] = 0;
    }
    for (double leftover : row) worst = std::max(worst, std::fabs(leftover));
  }
  return worst;
}

// Step-by-step greedy follow, no memoization, no shortcuts.
inline int follow_path(const Lattice& lat, const CorrelationField& field,
                       int start, int* hops = nullptr) {
  int cur = start;
  for (int guard = 0; guard <= lat.node_count(); ++guard) {
    const auto targets = latticeprop::slot_targets(lat, cur);
    int best_slot = latticeprop::kSelf;
    double best = field.weights[static_cast<size_t>(cur)][latticeprop::kSelf];
    for (latticeprop::Slot s : latticeprop::kNeighborSlots) {
      if (targets[s] < 0) continue;
      if (field.weights[static_cast<size_t>(cur)][s] > best) {
        best = field.weights[static_cast<size_t>(cur)][s];
        best_slot = s;
      }
    }
    if (best_slot == latticeprop::kSelf) {
      if (hops) *hops = guard;
      return cur;
    }
    cur = targets[static_cast<size_t>(best_slot)];
  }
  return -1;  // did not settle
}

// Cell-center rasterization IoU on a grid x grid lattice over the joint
// bounding box.
inline double raster_iou(const OrientedBox& a, const OrientedBox& b,
                         int grid = 1000) {
  double x0 = HUGE_VAL, x1 = -HUGE_VAL, y0 = HUGE_VAL, y1 = -HUGE_VAL;
  for (const auto& box : {a, b})
    for (const auto& [x, y] : box.corners()) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  const double dx = (x1 - x0) / grid;
  const double dy = (y1 - y0) / grid;
  long long inter = 0, uni = 0;
  for (int r = 0; r < grid; ++r) {
    const double y = y0 + (r + 0.5) * dy;
    for (int c = 0; c < grid; ++c) {
      const double x = x0 + (c + 0.5) * dx;
      const bool ina = a.contains(x, y, 0.0);
      const bool inb = b.contains(x, y, 0.0);
      if (ina && inb) ++inter;
      if (ina || inb) ++uni;
    }
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// Brute-force coverage of a box: every node whose pixel center lies inside.
inline std::vector<int> brute_coverage(const Lattice& lat,
                                       const OrientedBox& box) {
  std::vector<int> out;
  for (int id = 0; id < lat.node_count(); ++id)
    if (box.contains(lat.px_x(id), lat.px_y(id))) out.push_back(id);
  return out;
}

// Ring sizes |ring_k(center) ∩ coverage| by direct Manhattan enumeration.
inline std::vector<int> ring_sizes(const Lattice& lat, int center,
                                   const std::vector<int>& coverage) {
  std::vector<int> sizes;
  for (int id : coverage) {
    const int k = lat.manhattan(id, center);
    if (k == 0) continue;
    if (static_cast<int>(sizes.size()) < k) sizes.resize(static_cast<size_t>(k), 0);
    ++sizes[static_cast<size_t>(k - 1)];
  }
  return sizes;
}

// Entry-j dynamics restricted to a coverage set with absorbing exterior:
// interior nodes update synchronously, the center stays at 1 and everything
// else stays at 0. Returns the per-step history.
inline std::vector<std::vector<double>> restricted_replay(
    const Lattice& lat, const CorrelationField& field, int center,
    const std::vector<int>& coverage, int steps) {
  const int n = lat.node_count();
  std::vector<uint8_t> interior(static_cast<size_t>(n), 0);
  for (int id : coverage) interior[static_cast<size_t>(id)] = 1;
  interior[static_cast<size_t>(center)] = 0;  // frozen at 1

  std::vector<double> cur(static_cast<size_t>(n), 0.0);
  cur[static_cast<size_t>(center)] = 1.0;
  std::vector<std::vector<double>> history{cur};
  for (int t = 0; t < steps; ++t) {
    std::vector<double> next = cur;
    for (int i = 0; i < n; ++i) {
      if (!interior[static_cast<size_t>(i)]) continue;
      const auto targets = latticeprop::slot_targets(lat, i);
      double acc = field.weights[static_cast<size_t>(i)][latticeprop::kSelf] *
                   cur[static_cast<size_t>(i)];
      for (latticeprop::Slot s : latticeprop::kNeighborSlots) {
        if (targets[s] < 0) continue;
        acc += field.weights[static_cast<size_t>(i)][s] *
               cur[static_cast<size_t>(targets[s])];
      }
      next[static_cast<size_t>(i)] = acc;
    }
    cur = std::move(next);
    history.push_back(cur);
  }
  return history;
}

// Dense reference for the expand/inflate/prune iteration.
inline std::vector<double> dense_mc_iterate(const std::vector<double>& m0,
                                            int size, int max_iters,
                                            double threshold, double tol,
                                            int* iterations = nullptr) {
  std::vector<double> cur = m0;
  std::vector<double> next(cur.size());
  int done = 0;
  for (int t = 0; t < max_iters; ++t) {
    for (int r = 0; r < size; ++r)
      for (int c = 0; c < size; ++c) {
        double acc = 0;
        for (int k = 0; k < size; ++k)
          acc += cur[static_cast<size_t>(r) * size + k] *
                 m0[static_cast<size_t>(k) * size + c];
        next[static_cast<size_t>(r) * size + c] = acc;
      }
    for (int c = 0; c < size; ++c) {
      double sum = 0;
      for (int r = 0; r < size; ++r) sum += next[static_cast<size_t>(r) * size + c];
      if (sum > 0)
        for (int r = 0; r < size; ++r) next[static_cast<size_t>(r) * size + c] /= sum;
    }
    for (double& v : next)
      if (v < threshold) v = 0;
    double change = 0;
    for (size_t i = 0; i < cur.size(); ++i)
      change = std::max(change, std::fabs(next[i] - cur[i]));
    cur = next;
    ++done;
    if (change <= tol) break;
  }
  if (iterations) *iterations = done;
  return cur;
}

// The simplified flow-gradient graph: expansions and prune gates only, the
// normalization treated as identity. Loss is the mean label cross-entropy.
inline double simplified_flow_loss(const std::vector<double>& m0, int size,
                                   const FlowLabels& labels, int iters,
                                   double threshold) {
  std::vector<double> cur = m0;
  std::vector<double> next(cur.size());
  for (int t = 0; t < iters; ++t) {
    for (int r = 0; r < size; ++r)
      for (int c = 0; c < size; ++c) {
        double acc = 0;
        for (int k = 0; k < size; ++k)
          acc += cur[static_cast<size_t>(r) * size + k] *
                 m0[static_cast<size_t>(k) * size + c];
        next[static_cast<size_t>(r) * size + c] = acc;
      }
    for (double& v : next)
      if (v < threshold) v = 0;
    cur = next;
  }
  double loss = 0;
  for (int m = 0; m < size; ++m)
    for (const auto& [attractor, weight] : labels.targets[static_cast<size_t>(m)])
      loss -= weight *
              std::log(std::max(cur[static_cast<size_t>(attractor) * size + m], 1e-12));
  return loss / size;
}

inline std::vector<double> fd_flow_gradient(const std::vector<double>& m0,
                                            int size, const FlowLabels& labels,
                                            int iters, double threshold,
                                            double h) {
  std::vector<double> grad(m0.size(), 0.0);
  std::vector<double> point = m0;
  for (size_t i = 0; i < m0.size(); ++i) {
    if (m0[i] == 0.0) continue;  // structural zeros are not parameters
    const double saved = point[i];
    point[i] = saved + h;
    const double hi = simplified_flow_loss(point, size, labels, iters, threshold);
    point[i] = saved - h;
    const double lo = simplified_flow_loss(point, size, labels, iters, threshold);
    point[i] = saved;
    grad[i] = (hi - lo) / (2 * h);
  }
  return grad;
}

// Random helpers shared by property tests.
inline std::vector<SlotWeights> random_logits(latticeprop::Xoshiro256pp& rng,
                                              int node_count, double lo = -2.0,
                                              double hi = 2.0) {
  std::vector<SlotWeights> logits(static_cast<size_t>(node_count));
  for (auto& row : logits)
    for (int s = 0; s < latticeprop::kSlotCount; ++s)
      row[static_cast<size_t>(s)] = rng.uniform(lo, hi);
  return logits;
}

inline OrientedBox random_box(latticeprop::Xoshiro256pp& rng, double cx_lo,
                              double cx_hi, double cy_lo, double cy_hi,
                              double scale_lo, double scale_hi) {
  OrientedBox box;
  box.cx = rng.uniform(cx_lo, cx_hi);
  box.cy = rng.uniform(cy_lo, cy_hi);
  box.w = rng.uniform(scale_lo, scale_hi);
  box.h = rng.uniform(scale_lo, scale_hi);
  box.angle = rng.uniform(-1.5, 1.5);
  return latticeprop::canonicalize(box);
}

}  // namespace oracle
