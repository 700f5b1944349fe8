#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "latticeprop/cp.hpp"
#include "latticeprop/lattice.hpp"

namespace latticeprop {

// Sparse column-stochastic flow matrix. Column n carries node n's self flow
// and its four directional flows; entries are sorted by row.
struct FlowMatrix {
  int size = 0;
  std::vector<std::vector<std::pair<int, double>>> cols;

  long long nnz() const;
  double at(int row, int col) const;
  std::vector<double> dense() const;  // row-major size x size
};

FlowMatrix build_flow_matrix(const Lattice& lattice,
                             const CorrelationField& field);

struct McCounters {
  long long expand_flops = 0;    // scalar multiply-adds in expansions
  long long inflate_ops = 0;     // scalar divisions in inflations
  long long pruned_entries = 0;
  long long peak_nnz = 0;
  int iterations = 0;
};

struct McResult {
  FlowMatrix m;
  McCounters counters;
};

// expand (M_t = M_{t-1} * M_0), inflate (column renormalization), prune
// (drop entries below threshold), until the largest entry change reaches tol
// or max_iters.
McResult mc_iterate(const FlowMatrix& m0, int max_iters,
                    double prune_threshold, double tol, int threads = 1);

// Node n joins the attractor at the argmax row of column n (ties take the
// smallest row).
ClusterAssignment mc_clusters(const FlowMatrix& mN);

struct FlowLabels {
  // per node: sorted (attractor id, weight), weights sum to 1
  std::vector<std::vector<std::pair<int, double>>> targets;
};

FlowLabels flow_labels_from_centers(
    const std::vector<std::vector<std::pair<int, double>>>& center_labels);

// Mean per-column cross-entropy against the target distributions.
double mc_loss(const FlowMatrix& mN, const FlowLabels& labels);

// Backward pass of the printed recurrence: prune backpropagates as a 0/1
// survival gate, inflate as identity. Returns the dense row-major gradient
// with respect to M_0.
std::vector<double> mc_gradients(const FlowMatrix& m0, const FlowLabels& labels,
                                 int iters, double prune_threshold);

}  // namespace latticeprop
