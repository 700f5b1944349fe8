#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "latticeprop/cp.hpp"
#include "latticeprop/lattice.hpp"

namespace latticeprop {

struct TrapMap {
  std::vector<int> trap_of;   // -1 = unassigned
  std::vector<int> path_len;  // greedy hops to the trap, 0 off-foreground
  std::vector<int> candidates;
  std::vector<int> cycle_nodes;  // paths that revisited a node
  long long total_hops = 0;
};

// Per-node greedy next-hop following: hop to the argmax slot (ties favor
// SELF, then slot order) until the argmax is SELF. Background nodes are
// skipped; every trap maps to itself.
TrapMap greedy_paths(const Lattice& lattice, const CorrelationField& field,
                     const std::vector<uint8_t>& fg_mask, int threads = 1);

struct MergeResult {
  std::vector<int> candidates;
  std::vector<int> trap_of;
  ClusterAssignment assignment;
  int merges = 0;
};

// Candidate pairs closer than d_T (Chebyshev) are re-examined by running CP
// on the minimal covering sub-lattice; pairs whose argmax centers coincide
// merge into the candidate with the larger basin (ties keep the smaller id).
MergeResult merge_close_candidates(const Lattice& lattice,
                                   const CorrelationField& field,
                                   const TrapMap& traps, double d_T);

// Per-node combined direction (s_right - s_left, s_down - s_up).
struct VectorFieldView {
  std::vector<std::array<double, 2>> omega;
};

VectorFieldView combined_vector_field(const CorrelationField& field);

}  // namespace latticeprop
