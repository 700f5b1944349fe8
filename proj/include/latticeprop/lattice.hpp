#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "latticeprop/errors.hpp"

namespace latticeprop {

// Fixed slot order. Serialization, weight layout, tie-breaking and gradient
// accumulation all iterate slots in this order.
enum Slot : int { kSelf = 0, kUp = 1, kDown = 2, kLeft = 3, kRight = 4 };

inline constexpr int kSlotCount = 5;
inline constexpr std::array<Slot, 4> kNeighborSlots = {kUp, kDown, kLeft,
                                                       kRight};

inline Slot opposite(Slot s) {
  switch (s) {
    case kUp:
      return kDown;
    case kDown:
      return kUp;
    case kLeft:
      return kRight;
    case kRight:
      return kLeft;
    default:
      return kSelf;
  }
}

const char* slot_name(Slot s);

using SlotWeights = std::array<double, kSlotCount>;

// The H/D x W/D node grid. Node ids are row-major: id = r * cols + c.
struct Lattice {
  int height_px = 0;
  int width_px = 0;
  int factor = 1;
  int rows = 0;
  int cols = 0;

  int node_count() const { return rows * cols; }
  int to_id(int r, int c) const { return r * cols + c; }
  int row_of(int id) const { return id / cols; }
  int col_of(int id) const { return id % cols; }
  std::pair<int, int> to_rc(int id) const { return {id / cols, id % cols}; }

  // pixel-space center of a node's cell
  double px_x(int id) const { return (col_of(id) + 0.5) * factor; }
  double px_y(int id) const { return (row_of(id) + 0.5) * factor; }

  bool same_grid(const Lattice& other) const {
    return rows == other.rows && cols == other.cols;
  }

  int manhattan(int a, int b) const {
    const int dr = row_of(a) - row_of(b);
    const int dc = col_of(a) - col_of(b);
    return (dr < 0 ? -dr : dr) + (dc < 0 ? -dc : dc);
  }

  void check_node(int id) const {
    if (id < 0 || id >= node_count())
      throw NodeOutOfRange("node id " + std::to_string(id) +
                           " outside lattice of " +
                           std::to_string(node_count()) + " nodes");
  }
};

Lattice build_lattice(int height_px, int width_px, int factor);

struct NeighborRef {
  Slot slot;
  int id;
};

// Existing neighbors in slot order UP, DOWN, LEFT, RIGHT.
std::vector<NeighborRef> neighbors(const Lattice& lattice, int node);

// All five slot targets of a node: index by Slot, -1 marks a missing
// neighbor, slot kSelf maps to the node itself.
std::array<int, kSlotCount> slot_targets(const Lattice& lattice, int node);

// Per-node 5-way weights over {self, up, down, left, right}. Rows are
// normalized over the existing slots; missing slots hold exactly 0.
struct CorrelationField {
  int rows = 0;
  int cols = 0;
  std::vector<SlotWeights> logits;
  std::vector<SlotWeights> weights;

  int node_count() const { return rows * cols; }
  bool matches(const Lattice& lattice) const {
    return rows == lattice.rows && cols == lattice.cols;
  }
};

// Masked softmax per node: slots whose neighbor does not exist are treated
// as -inf logits and come out exactly 0.
CorrelationField normalize_field(const Lattice& lattice,
                                 const std::vector<SlotWeights>& logits);

}  // namespace latticeprop
