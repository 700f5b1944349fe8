#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "latticeprop/cp.hpp"
#include "latticeprop/geometry.hpp"
#include "latticeprop/lattice.hpp"

namespace latticeprop {

inline constexpr double kLogFloor = 1e-12;

// Ground truth on the lattice: foreground mask, fractional center labels and
// per-node box geometry targets. Background nodes label themselves.
struct SceneLabels {
  std::vector<uint8_t> fg_mask;
  // sorted (center id, weight) entries; weights per node sum to 1
  std::vector<std::vector<std::pair<int, double>>> center_labels;
  std::vector<BoxGeometry> box_targets;  // meaningful where target_box >= 0
  std::vector<int> target_box;           // index into boxes, -1 on background
  std::vector<int> box_center_node;      // per retained box
  std::vector<std::vector<int>> box_coverage;
  std::vector<OrientedBox> boxes;        // retained (non-empty) boxes
  std::vector<int> skipped_boxes;        // input indices that covered nothing

  int node_count() const { return static_cast<int>(fg_mask.size()); }
  double label_weight(int node, int center) const;
};

SceneLabels label_scene(const Lattice& lattice,
                        const std::vector<OrientedBox>& gt_boxes);

struct LossReport {
  double l_fg = 0;
  double l_center = 0;
  double l_box = 0;
  double alpha = 1;
  double beta = 1;
  double total = 0;
};

// d(loss)/d(s) per node and slot; zero on missing slots.
using GradientField = std::vector<SlotWeights>;

// Ground-truth centers with their coverages split into Manhattan rings.
struct CenterSet {
  struct Center {
    int node = 0;
    std::vector<int> coverage;            // includes the center node
    std::vector<std::vector<int>> rings;  // rings[k-1] = ring k, ascending ids
    int max_ring = 0;
  };
  std::vector<Center> centers;  // ascending center id
};

CenterSet center_set_from_labels(const Lattice& lattice,
                                 const SceneLabels& labels);

// Per-node cross-entropy of the labeled centers against state_t, clamped at
// kLogFloor. state_prev is the preceding step of the same run and is only
// sanity-checked; the loss itself reads state_t.
std::vector<double> center_loss(const ConfidenceState& state_t,
                                const ConfidenceState& state_prev,
                                const SceneLabels& labels);

double mean_of(const std::vector<double>& values);

struct RecursiveGradResult {
  // per node: (tracked center id, confidence at the node's activation time)
  std::vector<std::vector<std::pair<int, double>>> tracked;
  GradientField grad_s;
  std::vector<double> l_c;
  long long touch_count = 0;
  // raw per-center slot contributions, for inspecting the overwrite rule on
  // nodes shared by several boxes
  std::vector<std::pair<int, std::vector<std::pair<int, SlotWeights>>>>
      per_center;
};

// Ring-by-ring confidence updates and loss gradients around every center,
// processed in ascending center order. Self-slot gradients are overwritten
// per pass, neighbor-slot gradients accumulate.
RecursiveGradResult recursive_gradients(const Lattice& lattice,
                                        const CorrelationField& field,
                                        const SceneLabels& labels,
                                        const CenterSet& centers);

// Central differences of the mean center loss after `steps` full cp_step
// iterations (prune_eps = 0), taken in logit space.
GradientField finite_difference_grad(const Lattice& lattice,
                                     const std::vector<SlotWeights>& logits,
                                     const SceneLabels& labels, int steps,
                                     double h);

// Maps s-space slot gradients through the per-node softmax Jacobian of
// normalize_field.
GradientField grad_to_logit_space(const Lattice& lattice,
                                  const CorrelationField& field,
                                  const GradientField& grad_s);

// Combined cost: cross-entropy foreground loss, center loss of the given
// state, and smooth-L1 geometry loss masked by the foreground labels, under
// the 1/node_count prefactor.
LossReport total_loss(const std::vector<std::array<double, 2>>& fg_pred,
                      const ConfidenceState& state,
                      const std::vector<BoxGeometry>& box_preds,
                      const SceneLabels& labels, double alpha, double beta,
                      const Lattice& lattice);

double smooth_l1(double x);

struct TrainConfig {
  double alpha = 1.0;
  double beta = 1.0;
  double lr = 0.5;
  int iters = 200;
  uint64_t seed = 0;
  int threads = 1;
  double merge_distance = 3.0;  // candidate merge gate for the final grouping
};

struct TrainRecord {
  int iter = 0;
  LossReport loss;
};

// Geometry parameters are trained in lattice units: the four side distances
// are stored as pixels/factor, the angle in radians.
struct TrainResult {
  std::vector<SlotWeights> field_logits;
  CorrelationField field;
  std::vector<std::array<double, 2>> fg_logits;
  std::vector<SlotWeights> geo;
  std::vector<TrainRecord> trace;
  ClusterAssignment final_assignment;
};

class DivergedLoss : public Error {
 public:
  DivergedLoss(const std::string& what, std::vector<TrainRecord> trace)
      : Error("DivergedLoss", what), trace_(std::move(trace)) {}
  const std::vector<TrainRecord>& trace() const { return trace_; }

 private:
  std::vector<TrainRecord> trace_;
};

// Plain gradient descent on per-node field logits, foreground logits and
// geometry outputs. The update applies per-node loss gradients (the
// 1/node_count mean prefactor is reported in the trace, not folded into the
// step size).
TrainResult train(const Lattice& lattice, const SceneLabels& labels,
                  const TrainConfig& config);

// Foreground probabilities and geometry predictions derived from trained
// parameters, in the shapes the geometry ops consume.
std::vector<std::array<double, 2>> fg_probabilities(
    const std::vector<std::array<double, 2>>& fg_logits);
std::vector<std::optional<BoxGeometry>> geometry_predictions(
    const Lattice& lattice, const std::vector<SlotWeights>& geo,
    const std::vector<uint8_t>& fg_mask);

}  // namespace latticeprop
