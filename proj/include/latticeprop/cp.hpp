#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "latticeprop/lattice.hpp"

namespace latticeprop {

// Sparse per-node center-confidence distributions. Entry lists are sorted by
// candidate-center id; values at or below prune_eps are dropped.
struct ConfidenceState {
  int rows = 0;
  int cols = 0;
  int step = 0;
  double prune_eps = 1e-6;
  std::vector<std::vector<std::pair<int, double>>> conf;

  int node_count() const { return rows * cols; }

  double at(int node, int center) const;
  double total_mass() const;

  bool matches(const Lattice& lattice) const {
    return rows == lattice.rows && cols == lattice.cols;
  }
};

ConfidenceState init_one_hot(const Lattice& lattice, double prune_eps = 1e-6);

// One synchronous update: every node mixes its own and its neighbors'
// previous distributions by its slot weights. Double-buffered; the input
// state is never modified.
ConfidenceState cp_step(const Lattice& lattice, const CorrelationField& field,
                        const ConfidenceState& state, int threads = 1);

struct CpRunResult {
  ConfidenceState state;
  int steps_used = 0;
  long long update_count = 0;
};

// Repeats cp_step until the largest per-entry change drops to tol or
// max_steps is exhausted.
CpRunResult cp_run(const Lattice& lattice, const CorrelationField& field,
                   ConfidenceState init, int max_steps, double tol,
                   int threads = 1);

// Row i holds the contribution weight of every source node to node i.
// Rows of a normalized field sum to 1; used as the dense reference for the
// sparse iteration.
std::vector<double> dense_transition_matrix(const Lattice& lattice,
                                            const CorrelationField& field);

// Largest absolute per-entry difference over the union of supports.
double max_abs_diff(const ConfidenceState& a, const ConfidenceState& b);

struct ClusterAssignment {
  std::vector<int> center_of;  // -1 = unassigned
  std::map<int, std::vector<int>> clusters;
};

// Argmax-center grouping over foreground nodes. Ties break to the smallest
// candidate id; maxima below min_conf stay unassigned.
ClusterAssignment extract_centers(const ConfidenceState& state,
                                  const std::vector<uint8_t>& fg_mask,
                                  double min_conf);

// Selective-summation view: per node, the confidence mass on the tracked
// centers, scaled to a byte.
std::vector<uint8_t> confidence_heatmap(const Lattice& lattice,
                                        const ConfidenceState& state,
                                        const std::vector<int>& tracked);

}  // namespace latticeprop
