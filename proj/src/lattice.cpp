#include "latticeprop/lattice.hpp"

#include <cmath>
#include <string>

namespace latticeprop {

const char* slot_name(Slot s) {
  switch (s) {
    case kSelf:
      return "self";
    case kUp:
      return "up";
    case kDown:
      return "down";
    case kLeft:
      return "left";
    case kRight:
      return "right";
  }
  return "?";
}

Lattice build_lattice(int height_px, int width_px, int factor) {
  if (height_px <= 0 || width_px <= 0 || factor <= 0)
    throw ZeroDimension("lattice dimensions must be positive, got " +
                        std::to_string(height_px) + "x" +
                        std::to_string(width_px) + " factor " +
                        std::to_string(factor));
  if (height_px % factor != 0 || width_px % factor != 0)
    throw NonDivisible("factor " + std::to_string(factor) +
                       " does not divide " + std::to_string(height_px) + "x" +
                       std::to_string(width_px));
  Lattice lat;
  lat.height_px = height_px;
  lat.width_px = width_px;
  lat.factor = factor;
  lat.rows = height_px / factor;
  lat.cols = width_px / factor;
  return lat;
}

std::vector<NeighborRef> neighbors(const Lattice& lattice, int node) {
  lattice.check_node(node);
  const int r = lattice.row_of(node);
  const int c = lattice.col_of(node);
  std::vector<NeighborRef> out;
  out.reserve(4);
  if (r > 0) out.push_back({kUp, node - lattice.cols});
  if (r + 1 < lattice.rows) out.push_back({kDown, node + lattice.cols});
  if (c > 0) out.push_back({kLeft, node - 1});
  if (c + 1 < lattice.cols) out.push_back({kRight, node + 1});
  return out;
}

std::array<int, kSlotCount> slot_targets(const Lattice& lattice, int node) {
  lattice.check_node(node);
  const int r = lattice.row_of(node);
  const int c = lattice.col_of(node);
  std::array<int, kSlotCount> out;
  out[kSelf] = node;
  out[kUp] = r > 0 ? node - lattice.cols : -1;
  out[kDown] = r + 1 < lattice.rows ? node + lattice.cols : -1;
  out[kLeft] = c > 0 ? node - 1 : -1;
  out[kRight] = c + 1 < lattice.cols ? node + 1 : -1;
  return out;
}

CorrelationField normalize_field(const Lattice& lattice,
                                 const std::vector<SlotWeights>& logits) {
  const int n = lattice.node_count();
  if (static_cast<int>(logits.size()) != n)
    throw ShapeMismatch("normalize_field: " + std::to_string(logits.size()) +
                        " logit rows for " + std::to_string(n) + " nodes");
  CorrelationField field;
  field.rows = lattice.rows;
  field.cols = lattice.cols;
  field.logits = logits;
  field.weights.assign(static_cast<size_t>(n), SlotWeights{});
  for (int i = 0; i < n; ++i) {
    const auto targets = slot_targets(lattice, i);
    double maxv = -HUGE_VAL;
    for (int s = 0; s < kSlotCount; ++s) {
      if (!std::isfinite(logits[i][s]))
        throw NonFiniteLogit("non-finite logit at node " + std::to_string(i) +
                             " slot " + slot_name(static_cast<Slot>(s)));
      if (targets[s] >= 0 && logits[i][s] > maxv) maxv = logits[i][s];
    }
    double denom = 0;
    SlotWeights e{};
    for (int s = 0; s < kSlotCount; ++s) {
      if (targets[s] < 0) continue;
      e[s] = std::exp(logits[i][s] - maxv);
      denom += e[s];
    }
    for (int s = 0; s < kSlotCount; ++s)
      field.weights[i][s] = targets[s] < 0 ? 0.0 : e[s] / denom;
  }
  return field;
}

}  // namespace latticeprop
