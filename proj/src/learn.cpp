#include "latticeprop/learn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "latticeprop/gps.hpp"
#include "latticeprop/log.hpp"
#include "latticeprop/rng.hpp"

namespace latticeprop {

double SceneLabels::label_weight(int node, int center) const {
  const auto& row = center_labels[static_cast<size_t>(node)];
  auto it = std::lower_bound(
      row.begin(), row.end(), center,
      [](const std::pair<int, double>& e, int key) { return e.first < key; });
  if (it != row.end() && it->first == center) return it->second;
  return 0.0;
}

double mean_of(const std::vector<double>& values) {
  if (values.empty()) return 0;
  double acc = 0;
  for (double v : values) acc += v;
  return acc / static_cast<double>(values.size());
}

SceneLabels label_scene(const Lattice& lattice,
                        const std::vector<OrientedBox>& gt_boxes) {
  const int n = lattice.node_count();
  SceneLabels labels;
  labels.fg_mask.assign(static_cast<size_t>(n), 0);
  labels.center_labels.resize(static_cast<size_t>(n));
  labels.box_targets.resize(static_cast<size_t>(n));
  labels.target_box.assign(static_cast<size_t>(n), -1);

  for (int b = 0; b < static_cast<int>(gt_boxes.size()); ++b) {
    const OrientedBox box = canonicalize(gt_boxes[static_cast<size_t>(b)]);
    for (const auto& [x, y] : box.corners()) {
      if (x < -1e-9 || y < -1e-9 || x > lattice.width_px + 1e-9 ||
          y > lattice.height_px + 1e-9)
        throw BoxOutOfBounds("box " + std::to_string(b) +
                             " extends outside the image");
    }

    // Coverage: nodes whose pixel-center lies inside the rotated rectangle.
    // Restrict the scan to the box's axis-aligned bounds.
    const auto corners = box.corners();
    double x0 = corners[0].first, x1 = corners[0].first;
    double y0 = corners[0].second, y1 = corners[0].second;
    for (const auto& [x, y] : corners) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
    const int c_lo = std::max(0, static_cast<int>(x0 / lattice.factor) - 1);
    const int c_hi = std::min(lattice.cols - 1,
                              static_cast<int>(x1 / lattice.factor) + 1);
    const int r_lo = std::max(0, static_cast<int>(y0 / lattice.factor) - 1);
    const int r_hi = std::min(lattice.rows - 1,
                              static_cast<int>(y1 / lattice.factor) + 1);
    std::vector<int> coverage;
    for (int r = r_lo; r <= r_hi; ++r)
      for (int c = c_lo; c <= c_hi; ++c) {
        const int id = lattice.to_id(r, c);
        if (box.contains(lattice.px_x(id), lattice.px_y(id)))
          coverage.push_back(id);
      }
    if (coverage.empty()) {
      LP_WARN("label_scene: box %d covers no node, skipped", b);
      labels.skipped_boxes.push_back(b);
      continue;
    }

    // center node: covered node closest to the box center, smaller id wins
    int center_node = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int id : coverage) {
      const double dx = lattice.px_x(id) - box.cx;
      const double dy = lattice.px_y(id) - box.cy;
      const double d2 = dx * dx + dy * dy;
      if (d2 < best - 1e-12) {
        best = d2;
        center_node = id;
      }
    }

    labels.boxes.push_back(box);
    labels.box_center_node.push_back(center_node);
    labels.box_coverage.push_back(coverage);
    for (int id : coverage) labels.fg_mask[static_cast<size_t>(id)] = 1;
  }

  // Fractional center labels: a node under k boxes carries k entries of 1/k
  // (repeated centers accumulate). Geometry targets come from the covering
  // box whose center node is nearest.
  std::vector<std::map<int, double>> acc(static_cast<size_t>(n));
  std::vector<int> cover_count(static_cast<size_t>(n), 0);
  for (size_t b = 0; b < labels.box_coverage.size(); ++b)
    for (int id : labels.box_coverage[b])
      ++cover_count[static_cast<size_t>(id)];
  for (size_t b = 0; b < labels.box_coverage.size(); ++b) {
    const int center = labels.box_center_node[b];
    for (int id : labels.box_coverage[b]) {
      acc[static_cast<size_t>(id)][center] +=
          1.0 / cover_count[static_cast<size_t>(id)];
      const int cur = labels.target_box[static_cast<size_t>(id)];
      if (cur < 0) {
        labels.target_box[static_cast<size_t>(id)] = static_cast<int>(b);
      } else {
        const double d_cur =
            lattice.manhattan(id, labels.box_center_node[static_cast<size_t>(cur)]);
        const double d_new = lattice.manhattan(id, center);
        if (d_new < d_cur ||
            (d_new == d_cur &&
             center < labels.box_center_node[static_cast<size_t>(cur)]))
          labels.target_box[static_cast<size_t>(id)] = static_cast<int>(b);
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    auto& row = labels.center_labels[static_cast<size_t>(i)];
    if (labels.fg_mask[static_cast<size_t>(i)]) {
      for (const auto& [center, weight] : acc[static_cast<size_t>(i)])
        row.emplace_back(center, weight);
      const int b = labels.target_box[static_cast<size_t>(i)];
      labels.box_targets[static_cast<size_t>(i)] = encode_geometry(
          lattice.px_x(i), lattice.px_y(i), labels.boxes[static_cast<size_t>(b)]);
    } else {
      row.emplace_back(i, 1.0);
    }
  }
  return labels;
}

CenterSet center_set_from_labels(const Lattice& lattice,
                                 const SceneLabels& labels) {
  std::map<int, std::vector<int>> coverage;
  const int n = lattice.node_count();
  for (int i = 0; i < n; ++i) {
    if (!labels.fg_mask[static_cast<size_t>(i)]) continue;
    for (const auto& [center, weight] : labels.center_labels[static_cast<size_t>(i)]) {
      (void)weight;
      coverage[center].push_back(i);
    }
  }
  CenterSet set;
  for (auto& [center, nodes] : coverage) {
    CenterSet::Center entry;
    entry.node = center;
    if (std::find(nodes.begin(), nodes.end(), center) == nodes.end())
      nodes.push_back(center);
    std::sort(nodes.begin(), nodes.end());
    entry.coverage = nodes;
    for (int id : nodes) {
      const int k = lattice.manhattan(id, center);
      entry.max_ring = std::max(entry.max_ring, k);
      if (k == 0) continue;
      if (static_cast<int>(entry.rings.size()) < k) entry.rings.resize(static_cast<size_t>(k));
      entry.rings[static_cast<size_t>(k - 1)].push_back(id);
    }
    set.centers.push_back(std::move(entry));
  }
  return set;
}

std::vector<double> center_loss(const ConfidenceState& state_t,
                                const ConfidenceState& state_prev,
                                const SceneLabels& labels) {
  const int n = state_t.node_count();
  if (state_prev.node_count() != n || labels.node_count() != n)
    throw ShapeMismatch("center_loss: states and labels disagree on size");
  std::vector<double> out(static_cast<size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    double acc = 0;
    for (const auto& [center, weight] : labels.center_labels[static_cast<size_t>(i)])
      acc -= weight * std::log(std::max(state_t.at(i, center), kLogFloor));
    out[static_cast<size_t>(i)] = acc;
  }
  return out;
}

namespace {

double tracked_at(const std::vector<std::pair<int, double>>& row, int center) {
  auto it = std::lower_bound(
      row.begin(), row.end(), center,
      [](const std::pair<int, double>& e, int key) { return e.first < key; });
  if (it != row.end() && it->first == center) return it->second;
  return 0.0;
}

void tracked_set(std::vector<std::pair<int, double>>& row, int center,
                 double value) {
  auto it = std::lower_bound(
      row.begin(), row.end(), center,
      [](const std::pair<int, double>& e, int key) { return e.first < key; });
  if (it != row.end() && it->first == center)
    it->second = value;
  else
    row.insert(it, {center, value});
}

double label_cross_entropy(
    const std::vector<std::pair<int, double>>& label_row,
    const std::vector<std::pair<int, double>>& tracked_row) {
  double acc = 0;
  for (const auto& [center, weight] : label_row)
    acc -= weight * std::log(std::max(tracked_at(tracked_row, center), kLogFloor));
  return acc;
}

}  // namespace

RecursiveGradResult recursive_gradients(const Lattice& lattice,
                                        const CorrelationField& field,
                                        const SceneLabels& labels,
                                        const CenterSet& centers) {
  const int n = lattice.node_count();
  if (!field.matches(lattice) || labels.node_count() != n)
    throw ShapeMismatch("recursive_gradients: inputs disagree on lattice size");
  for (const auto& center : centers.centers)
    if (!labels.fg_mask[static_cast<size_t>(center.node)])
      throw CenterNotForeground("center node " + std::to_string(center.node) +
                                " is background");

  RecursiveGradResult result;
  result.tracked.resize(static_cast<size_t>(n));
  result.grad_s.assign(static_cast<size_t>(n), SlotWeights{});
  result.l_c.assign(static_cast<size_t>(n), 0.0);

  // Initialization: one-hot confidences, self gradient -1/s_i, zero neighbor
  // gradients. The matching loss value is the one-step self-center loss.
  for (int i = 0; i < n; ++i) {
    result.tracked[static_cast<size_t>(i)] = {{i, 1.0}};
    const double s_self = field.weights[static_cast<size_t>(i)][kSelf];
    result.grad_s[static_cast<size_t>(i)][kSelf] = -1.0 / s_self;
    double acc = 0;
    for (const auto& [center, weight] : labels.center_labels[static_cast<size_t>(i)]) {
      const double value = center == i ? s_self : 0.0;
      acc -= weight * std::log(std::max(value, kLogFloor));
    }
    result.l_c[static_cast<size_t>(i)] = acc;
  }

  // Confidence values "before activation": the one-hot init. During a pass
  // for center j, a node reads entry j of its neighbors' current rows; nodes
  // in the next ring still hold 0 and the center holds 1.
  for (const auto& center : centers.centers) {
    const int j = center.node;
    std::vector<std::pair<int, SlotWeights>> contributions;
    for (int k = 1; k <= center.max_ring; ++k) {
      for (int i : center.rings[static_cast<size_t>(k - 1)]) {
        const auto targets = slot_targets(lattice, i);
        const auto& w = field.weights[static_cast<size_t>(i)];
        const double prev_self = tracked_at(result.tracked[static_cast<size_t>(i)], j);
        double next = w[kSelf] * prev_self;
        for (Slot s : kNeighborSlots) {
          if (targets[s] < 0) continue;
          next += w[s] * tracked_at(result.tracked[static_cast<size_t>(targets[s])], j);
        }
        const double m_ij = labels.label_weight(i, j);
        SlotWeights contrib{};
        // self gradient is assigned (overwritten), neighbor gradients add up
        const double denom = std::max(next, kLogFloor);
        contrib[kSelf] = -m_ij * prev_self / denom;
        result.grad_s[static_cast<size_t>(i)][kSelf] = contrib[kSelf];
        for (Slot s : kNeighborSlots) {
          if (targets[s] < 0) continue;
          const double c_nbr =
              tracked_at(result.tracked[static_cast<size_t>(targets[s])], j);
          contrib[s] = -m_ij * c_nbr / denom;
          result.grad_s[static_cast<size_t>(i)][s] += contrib[s];
        }
        tracked_set(result.tracked[static_cast<size_t>(i)], j, next);
        result.l_c[static_cast<size_t>(i)] = label_cross_entropy(
            labels.center_labels[static_cast<size_t>(i)],
            result.tracked[static_cast<size_t>(i)]);
        ++result.touch_count;
        contributions.emplace_back(i, contrib);
      }
    }
    result.per_center.emplace_back(j, std::move(contributions));
  }
  return result;
}

GradientField grad_to_logit_space(const Lattice& lattice,
                                  const CorrelationField& field,
                                  const GradientField& grad_s) {
  const int n = lattice.node_count();
  GradientField out(static_cast<size_t>(n), SlotWeights{});
  for (int i = 0; i < n; ++i) {
    const auto targets = slot_targets(lattice, i);
    const auto& w = field.weights[static_cast<size_t>(i)];
    const auto& g = grad_s[static_cast<size_t>(i)];
    double mix = 0;
    for (int s = 0; s < kSlotCount; ++s)
      if (targets[s] >= 0) mix += w[s] * g[s];
    for (int s = 0; s < kSlotCount; ++s)
      out[static_cast<size_t>(i)][s] =
          targets[s] < 0 ? 0.0 : w[s] * (g[s] - mix);
  }
  return out;
}

GradientField finite_difference_grad(const Lattice& lattice,
                                     const std::vector<SlotWeights>& logits,
                                     const SceneLabels& labels, int steps,
                                     double h) {
  if (steps < 1) throw ShapeMismatch("finite_difference_grad: steps must be >= 1");
  const int n = lattice.node_count();

  auto mean_lc = [&](const std::vector<SlotWeights>& point) {
    const CorrelationField field = normalize_field(lattice, point);
    ConfidenceState state = init_one_hot(lattice, 0.0);
    ConfidenceState prev = state;
    for (int t = 0; t < steps; ++t) {
      ConfidenceState next = cp_step(lattice, field, state);
      prev = std::move(state);
      state = std::move(next);
    }
    return mean_of(center_loss(state, prev, labels));
  };

  GradientField out(static_cast<size_t>(n), SlotWeights{});
  std::vector<SlotWeights> point = logits;
  for (int i = 0; i < n; ++i) {
    const auto targets = slot_targets(lattice, i);
    for (int s = 0; s < kSlotCount; ++s) {
      if (targets[s] < 0) continue;
      const double saved = point[static_cast<size_t>(i)][s];
      point[static_cast<size_t>(i)][s] = saved + h;
      const double hi = mean_lc(point);
      point[static_cast<size_t>(i)][s] = saved - h;
      const double lo = mean_lc(point);
      point[static_cast<size_t>(i)][s] = saved;
      out[static_cast<size_t>(i)][s] = (hi - lo) / (2 * h);
    }
  }
  return out;
}

double smooth_l1(double x) {
  const double a = std::fabs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

static double smooth_l1_grad(double x) {
  if (x > 1.0) return 1.0;
  if (x < -1.0) return -1.0;
  return x;
}

LossReport total_loss(const std::vector<std::array<double, 2>>& fg_pred,
                      const ConfidenceState& state,
                      const std::vector<BoxGeometry>& box_preds,
                      const SceneLabels& labels, double alpha, double beta,
                      const Lattice& lattice) {
  const int n = lattice.node_count();
  if (static_cast<int>(fg_pred.size()) != n ||
      static_cast<int>(box_preds.size()) != n || labels.node_count() != n ||
      state.node_count() != n)
    throw ShapeMismatch("total_loss: per-node inputs disagree with lattice");

  double l_fg = 0, l_center = 0, l_box = 0;
  const double d = lattice.factor;
  for (int i = 0; i < n; ++i) {
    const int cls = labels.fg_mask[static_cast<size_t>(i)] ? 1 : 0;
    l_fg -= std::log(std::max(fg_pred[static_cast<size_t>(i)][static_cast<size_t>(cls)], kLogFloor));
    for (const auto& [center, weight] : labels.center_labels[static_cast<size_t>(i)])
      l_center -= weight * std::log(std::max(state.at(i, center), kLogFloor));
    if (labels.fg_mask[static_cast<size_t>(i)]) {
      const BoxGeometry& pred = box_preds[static_cast<size_t>(i)];
      const BoxGeometry& target = labels.box_targets[static_cast<size_t>(i)];
      l_box += smooth_l1((pred.d_top - target.d_top) / d);
      l_box += smooth_l1((pred.d_bottom - target.d_bottom) / d);
      l_box += smooth_l1((pred.d_left - target.d_left) / d);
      l_box += smooth_l1((pred.d_right - target.d_right) / d);
      l_box += smooth_l1(pred.angle - target.angle);
    }
  }
  LossReport report;
  report.alpha = alpha;
  report.beta = beta;
  report.l_fg = l_fg / n;
  report.l_center = l_center / n;
  report.l_box = l_box / n;
  report.total = report.l_fg + alpha * report.l_center + beta * report.l_box;
  return report;
}

std::vector<std::array<double, 2>> fg_probabilities(
    const std::vector<std::array<double, 2>>& fg_logits) {
  std::vector<std::array<double, 2>> out(fg_logits.size());
  for (size_t i = 0; i < fg_logits.size(); ++i) {
    const double m = std::max(fg_logits[i][0], fg_logits[i][1]);
    const double e0 = std::exp(fg_logits[i][0] - m);
    const double e1 = std::exp(fg_logits[i][1] - m);
    out[i] = {e0 / (e0 + e1), e1 / (e0 + e1)};
  }
  return out;
}

std::vector<std::optional<BoxGeometry>> geometry_predictions(
    const Lattice& lattice, const std::vector<SlotWeights>& geo,
    const std::vector<uint8_t>& fg_mask) {
  std::vector<std::optional<BoxGeometry>> out(geo.size());
  for (size_t i = 0; i < geo.size(); ++i) {
    if (!fg_mask[i]) continue;
    BoxGeometry g;
    g.d_top = std::max(0.0, geo[i][0]) * lattice.factor;
    g.d_bottom = std::max(0.0, geo[i][1]) * lattice.factor;
    g.d_left = std::max(0.0, geo[i][2]) * lattice.factor;
    g.d_right = std::max(0.0, geo[i][3]) * lattice.factor;
    g.angle = geo[i][4];
    out[i] = g;
  }
  return out;
}

TrainResult train(const Lattice& lattice, const SceneLabels& labels,
                  const TrainConfig& config) {
  if (config.iters < 1) throw ShapeMismatch("train: iters must be >= 1");
  if (config.lr < 0) throw ShapeMismatch("train: lr must be >= 0");
  const int n = lattice.node_count();
  const CenterSet centers = center_set_from_labels(lattice, labels);

  Xoshiro256pp rng(config.seed);
  TrainResult result;
  result.field_logits.assign(static_cast<size_t>(n), SlotWeights{});
  result.fg_logits.assign(static_cast<size_t>(n), {0.0, 0.0});
  result.geo.assign(static_cast<size_t>(n), SlotWeights{});
  for (int i = 0; i < n; ++i) {
    for (int s = 0; s < kSlotCount; ++s)
      result.field_logits[static_cast<size_t>(i)][s] = rng.uniform(-0.05, 0.05);
    result.fg_logits[static_cast<size_t>(i)][0] = rng.uniform(-0.05, 0.05);
    result.fg_logits[static_cast<size_t>(i)][1] = rng.uniform(-0.05, 0.05);
    for (int s = 0; s < kSlotCount; ++s)
      result.geo[static_cast<size_t>(i)][s] = rng.uniform(-0.05, 0.05);
  }

  const double d = lattice.factor;
  for (int iter = 0; iter < config.iters; ++iter) {
    const CorrelationField field = normalize_field(lattice, result.field_logits);
    const RecursiveGradResult grads =
        recursive_gradients(lattice, field, labels, centers);
    const GradientField logit_grad =
        grad_to_logit_space(lattice, field, grads.grad_s);
    const auto fg_prob = fg_probabilities(result.fg_logits);

    double l_fg = 0, l_box = 0;
    const double l_center = mean_of(grads.l_c);
    for (int i = 0; i < n; ++i) {
      const size_t ui = static_cast<size_t>(i);
      const int cls = labels.fg_mask[ui] ? 1 : 0;
      l_fg -= std::log(std::max(fg_prob[ui][static_cast<size_t>(cls)], kLogFloor));

      // foreground head: softmax cross-entropy gradient
      for (int c = 0; c < 2; ++c) {
        const double g = fg_prob[ui][static_cast<size_t>(c)] - (c == cls ? 1.0 : 0.0);
        result.fg_logits[ui][static_cast<size_t>(c)] -= config.lr * g;
      }

      // field logits: recursive center-loss gradients through the softmax
      for (int s = 0; s < kSlotCount; ++s)
        result.field_logits[ui][s] -=
            config.lr * config.alpha * logit_grad[ui][s];

      if (labels.fg_mask[ui]) {
        const BoxGeometry& target = labels.box_targets[ui];
        const double tgt[5] = {target.d_top / d, target.d_bottom / d,
                               target.d_left / d, target.d_right / d,
                               target.angle};
        for (int s = 0; s < kSlotCount; ++s) {
          const double residual = result.geo[ui][s] - tgt[s];
          l_box += smooth_l1(residual);
          result.geo[ui][s] -=
              config.lr * config.beta * smooth_l1_grad(residual);
        }
      }
    }

    TrainRecord record;
    record.iter = iter;
    record.loss.alpha = config.alpha;
    record.loss.beta = config.beta;
    record.loss.l_fg = l_fg / n;
    record.loss.l_center = l_center;
    record.loss.l_box = l_box / n;
    record.loss.total = record.loss.l_fg + config.alpha * record.loss.l_center +
                        config.beta * record.loss.l_box;
    result.trace.push_back(record);
    if (!std::isfinite(record.loss.total))
      throw DivergedLoss("non-finite loss at iteration " + std::to_string(iter),
                         result.trace);
  }

  result.field = normalize_field(lattice, result.field_logits);
  const auto fg_prob = fg_probabilities(result.fg_logits);
  std::vector<uint8_t> fg_mask(static_cast<size_t>(n), 0);
  for (int i = 0; i < n; ++i)
    fg_mask[static_cast<size_t>(i)] = fg_prob[static_cast<size_t>(i)][1] > 0.5;
  const TrapMap traps =
      greedy_paths(lattice, result.field, fg_mask, config.threads);
  result.final_assignment =
      merge_close_candidates(lattice, result.field, traps, config.merge_distance)
          .assignment;
  return result;
}

}  // namespace latticeprop
