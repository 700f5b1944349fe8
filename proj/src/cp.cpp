#include "latticeprop/cp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "latticeprop/parallel.hpp"

namespace latticeprop {

double ConfidenceState::at(int node, int center) const {
  const auto& row = conf[static_cast<size_t>(node)];
  auto it = std::lower_bound(
      row.begin(), row.end(), center,
      [](const std::pair<int, double>& e, int key) { return e.first < key; });
  if (it != row.end() && it->first == center) return it->second;
  return 0.0;
}

double ConfidenceState::total_mass() const {
  double sum = 0;
  for (const auto& row : conf)
    for (const auto& [center, value] : row) sum += value;
  return sum;
}

ConfidenceState init_one_hot(const Lattice& lattice, double prune_eps) {
  ConfidenceState state;
  state.rows = lattice.rows;
  state.cols = lattice.cols;
  state.step = 0;
  state.prune_eps = prune_eps;
  state.conf.resize(static_cast<size_t>(lattice.node_count()));
  for (int i = 0; i < lattice.node_count(); ++i)
    state.conf[static_cast<size_t>(i)] = {{i, 1.0}};
  return state;
}

static void check_pair(const Lattice& lattice, const CorrelationField& field,
                       const ConfidenceState& state) {
  if (!field.matches(lattice))
    throw LatticeMismatch("field shaped " + std::to_string(field.rows) + "x" +
                          std::to_string(field.cols) + " on lattice " +
                          std::to_string(lattice.rows) + "x" +
                          std::to_string(lattice.cols));
  if (!state.matches(lattice))
    throw LatticeMismatch("state shaped " + std::to_string(state.rows) + "x" +
                          std::to_string(state.cols) + " on lattice " +
                          std::to_string(lattice.rows) + "x" +
                          std::to_string(lattice.cols));
}

ConfidenceState cp_step(const Lattice& lattice, const CorrelationField& field,
                        const ConfidenceState& state, int threads) {
  check_pair(lattice, field, state);
  const int n = lattice.node_count();

  ConfidenceState next;
  next.rows = state.rows;
  next.cols = state.cols;
  next.step = state.step + 1;
  next.prune_eps = state.prune_eps;
  next.conf.resize(static_cast<size_t>(n));

  parallel_for(n, threads, [&](int i) {
    // Sources in fixed slot order; accumulation order per entry is therefore
    // deterministic regardless of scheduling.
    const auto targets = slot_targets(lattice, i);
    const std::vector<std::pair<int, double>>* src[kSlotCount] = {};
    double weight[kSlotCount] = {};
    size_t cursor[kSlotCount] = {};
    int active = 0;
    size_t bound = 0;
    for (int s = 0; s < kSlotCount; ++s) {
      if (targets[s] < 0) continue;
      src[s] = &state.conf[static_cast<size_t>(targets[s])];
      weight[s] = field.weights[static_cast<size_t>(i)][s];
      bound += src[s]->size();
      ++active;
    }
    (void)active;

    auto& out = next.conf[static_cast<size_t>(i)];
    out.reserve(bound);
    for (;;) {
      int key = std::numeric_limits<int>::max();
      for (int s = 0; s < kSlotCount; ++s) {
        if (src[s] == nullptr || cursor[s] >= src[s]->size()) continue;
        key = std::min(key, (*src[s])[cursor[s]].first);
      }
      if (key == std::numeric_limits<int>::max()) break;
      double acc = 0;
      for (int s = 0; s < kSlotCount; ++s) {
        if (src[s] == nullptr || cursor[s] >= src[s]->size()) continue;
        if ((*src[s])[cursor[s]].first == key) {
          acc += weight[s] * (*src[s])[cursor[s]].second;
          ++cursor[s];
        }
      }
      if (acc > next.prune_eps) out.emplace_back(key, acc);
    }
  });
  return next;
}

CpRunResult cp_run(const Lattice& lattice, const CorrelationField& field,
                   ConfidenceState init, int max_steps, double tol,
                   int threads) {
  if (max_steps < 1)
    throw ShapeMismatch("cp_run: max_steps must be >= 1");
  CpRunResult result;
  result.state = std::move(init);
  for (int t = 0; t < max_steps; ++t) {
    ConfidenceState next = cp_step(lattice, field, result.state, threads);
    const double change = max_abs_diff(next, result.state);
    result.state = std::move(next);
    ++result.steps_used;
    if (change <= tol) break;
  }
  result.update_count =
      static_cast<long long>(result.steps_used) * lattice.node_count();
  return result;
}

std::vector<double> dense_transition_matrix(const Lattice& lattice,
                                            const CorrelationField& field) {
  const int n = lattice.node_count();
  std::vector<double> m(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    const auto targets = slot_targets(lattice, i);
    for (int s = 0; s < kSlotCount; ++s) {
      if (targets[s] < 0) continue;
      m[static_cast<size_t>(i) * n + targets[s]] +=
          field.weights[static_cast<size_t>(i)][s];
    }
  }
  return m;
}

double max_abs_diff(const ConfidenceState& a, const ConfidenceState& b) {
  if (a.conf.size() != b.conf.size())
    throw LatticeMismatch("max_abs_diff: states of different size");
  double worst = 0;
  for (size_t i = 0; i < a.conf.size(); ++i) {
    const auto& ra = a.conf[i];
    const auto& rb = b.conf[i];
    size_t ia = 0, ib = 0;
    while (ia < ra.size() || ib < rb.size()) {
      double diff;
      if (ib >= rb.size() || (ia < ra.size() && ra[ia].first < rb[ib].first)) {
        diff = std::fabs(ra[ia].second);
        ++ia;
      } else if (ia >= ra.size() || rb[ib].first < ra[ia].first) {
        diff = std::fabs(rb[ib].second);
        ++ib;
      } else {
        diff = std::fabs(ra[ia].second - rb[ib].second);
        ++ia;
        ++ib;
      }
      worst = std::max(worst, diff);
    }
  }
  return worst;
}

ClusterAssignment extract_centers(const ConfidenceState& state,
                                  const std::vector<uint8_t>& fg_mask,
                                  double min_conf) {
  const int n = state.node_count();
  if (static_cast<int>(fg_mask.size()) != n)
    throw ShapeMismatch("extract_centers: mask size " +
                        std::to_string(fg_mask.size()) + " for " +
                        std::to_string(n) + " nodes");
  ClusterAssignment out;
  out.center_of.assign(static_cast<size_t>(n), -1);
  for (int i = 0; i < n; ++i) {
    if (!fg_mask[static_cast<size_t>(i)]) continue;
    int best = -1;
    double best_val = 0;
    for (const auto& [center, value] : state.conf[static_cast<size_t>(i)]) {
      // strict >: entries are sorted by id, so the first maximum (smallest
      // id) wins ties
      if (value > best_val) {
        best_val = value;
        best = center;
      }
    }
    if (best >= 0 && best_val >= min_conf) {
      out.center_of[static_cast<size_t>(i)] = best;
      out.clusters[best].push_back(i);
    }
  }
  return out;
}

std::vector<uint8_t> confidence_heatmap(const Lattice& lattice,
                                        const ConfidenceState& state,
                                        const std::vector<int>& tracked) {
  if (!state.matches(lattice))
    throw LatticeMismatch("confidence_heatmap: state does not match lattice");
  std::vector<uint8_t> bytes(static_cast<size_t>(lattice.node_count()), 0);
  std::vector<int> sorted = tracked;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  for (int i = 0; i < lattice.node_count(); ++i) {
    double mass = 0;
    for (const auto& [center, value] : state.conf[static_cast<size_t>(i)]) {
      if (std::binary_search(sorted.begin(), sorted.end(), center))
        mass += value;
    }
    const double scaled = std::lround(255.0 * mass);
    bytes[static_cast<size_t>(i)] =
        static_cast<uint8_t>(std::clamp(scaled, 0.0, 255.0));
  }
  return bytes;
}

}  // namespace latticeprop
