#include "latticeprop/mcl.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "latticeprop/parallel.hpp"

namespace latticeprop {

long long FlowMatrix::nnz() const {
  long long total = 0;
  for (const auto& col : cols) total += static_cast<long long>(col.size());
  return total;
}

double FlowMatrix::at(int row, int col) const {
  const auto& column = cols[static_cast<size_t>(col)];
  auto it = std::lower_bound(
      column.begin(), column.end(), row,
      [](const std::pair<int, double>& e, int key) { return e.first < key; });
  if (it != column.end() && it->first == row) return it->second;
  return 0.0;
}

std::vector<double> FlowMatrix::dense() const {
  std::vector<double> out(static_cast<size_t>(size) * size, 0.0);
  for (int c = 0; c < size; ++c)
    for (const auto& [r, v] : cols[static_cast<size_t>(c)])
      out[static_cast<size_t>(r) * size + c] = v;
  return out;
}

FlowMatrix build_flow_matrix(const Lattice& lattice,
                             const CorrelationField& field) {
  if (!field.matches(lattice))
    throw LatticeMismatch("build_flow_matrix: field does not match lattice");
  const int n = lattice.node_count();
  FlowMatrix m;
  m.size = n;
  m.cols.resize(static_cast<size_t>(n));
  for (int node = 0; node < n; ++node) {
    const auto targets = slot_targets(lattice, node);
    auto& col = m.cols[static_cast<size_t>(node)];
    for (int s = 0; s < kSlotCount; ++s) {
      if (targets[s] < 0) continue;
      const double w = field.weights[static_cast<size_t>(node)][s];
      if (w == 0.0) continue;  // structural zeros are not stored
      col.emplace_back(targets[s], w);
    }
    std::sort(col.begin(), col.end());
    double sum = 0;
    for (const auto& [r, v] : col) sum += v;
    for (auto& [r, v] : col) v /= sum;
  }
  return m;
}

namespace {

double max_col_diff(const std::vector<std::pair<int, double>>& a,
                    const std::vector<std::pair<int, double>>& b) {
  double worst = 0;
  size_t ia = 0, ib = 0;
  while (ia < a.size() || ib < b.size()) {
    double diff;
    if (ib >= b.size() || (ia < a.size() && a[ia].first < b[ib].first)) {
      diff = std::fabs(a[ia].second);
      ++ia;
    } else if (ia >= a.size() || b[ib].first < a[ia].first) {
      diff = std::fabs(b[ib].second);
      ++ib;
    } else {
      diff = std::fabs(a[ia].second - b[ib].second);
      ++ia;
      ++ib;
    }
    worst = std::max(worst, diff);
  }
  return worst;
}

}  // namespace

McResult mc_iterate(const FlowMatrix& m0, int max_iters, double prune_threshold,
                    double tol, int threads) {
  if (max_iters < 1) throw ShapeMismatch("mc_iterate: max_iters must be >= 1");
  if (prune_threshold < 0 || prune_threshold >= 1)
    throw ShapeMismatch("mc_iterate: prune_threshold must be in [0, 1)");

  McResult result;
  result.m = m0;
  const int n = m0.size;
  result.counters.peak_nnz = m0.nnz();

  std::vector<long long> col_flops(static_cast<size_t>(n));
  std::vector<long long> col_divs(static_cast<size_t>(n));
  std::vector<long long> col_pruned(static_cast<size_t>(n));

  for (int t = 0; t < max_iters; ++t) {
    FlowMatrix next;
    next.size = n;
    next.cols.resize(static_cast<size_t>(n));
    const FlowMatrix& prev = result.m;

    parallel_for(n, threads, [&](int c) {
      // out column c = sum_k M0(k, c) * prev(:, k), merged over sorted columns
      const auto& recipe = m0.cols[static_cast<size_t>(c)];
      std::vector<std::pair<int, double>> acc;
      long long flops = 0;
      for (const auto& [k, w] : recipe) {
        const auto& src = prev.cols[static_cast<size_t>(k)];
        flops += static_cast<long long>(src.size());
        std::vector<std::pair<int, double>> merged;
        merged.reserve(acc.size() + src.size());
        size_t ia = 0, ib = 0;
        while (ia < acc.size() || ib < src.size()) {
          if (ib >= src.size() ||
              (ia < acc.size() && acc[ia].first < src[ib].first)) {
            merged.push_back(acc[ia]);
            ++ia;
          } else if (ia >= acc.size() || src[ib].first < acc[ia].first) {
            merged.emplace_back(src[ib].first, w * src[ib].second);
            ++ib;
          } else {
            merged.emplace_back(acc[ia].first,
                                acc[ia].second + w * src[ib].second);
            ++ia;
            ++ib;
          }
        }
        acc = std::move(merged);
      }

      // inflate
      double sum = 0;
      for (const auto& [r, v] : acc) sum += v;
      long long divs = 0;
      if (sum > 0) {
        for (auto& [r, v] : acc) {
          v /= sum;
          ++divs;
        }
      }

      // prune
      long long dropped = 0;
      std::vector<std::pair<int, double>> kept;
      kept.reserve(acc.size());
      for (const auto& entry : acc) {
        if (entry.second < prune_threshold) {
          ++dropped;
        } else {
          kept.push_back(entry);
        }
      }
      next.cols[static_cast<size_t>(c)] = std::move(kept);
      col_flops[static_cast<size_t>(c)] = flops;
      col_divs[static_cast<size_t>(c)] = divs;
      col_pruned[static_cast<size_t>(c)] = dropped;
    });

    long long nnz_before_prune = 0;
    for (int c = 0; c < n; ++c) {
      result.counters.expand_flops += col_flops[static_cast<size_t>(c)];
      result.counters.inflate_ops += col_divs[static_cast<size_t>(c)];
      result.counters.pruned_entries += col_pruned[static_cast<size_t>(c)];
      nnz_before_prune += col_divs[static_cast<size_t>(c)];
      if (next.cols[static_cast<size_t>(c)].empty())
        throw AllPruned("mc_iterate: column " + std::to_string(c) +
                        " emptied at iteration " + std::to_string(t + 1));
    }
    result.counters.peak_nnz =
        std::max(result.counters.peak_nnz, nnz_before_prune);
    ++result.counters.iterations;

    double change = 0;
    for (int c = 0; c < n; ++c)
      change = std::max(change,
                        max_col_diff(next.cols[static_cast<size_t>(c)],
                                     prev.cols[static_cast<size_t>(c)]));
    result.m = std::move(next);
    if (change <= tol) break;
  }
  return result;
}

ClusterAssignment mc_clusters(const FlowMatrix& mN) {
  ClusterAssignment out;
  out.center_of.assign(static_cast<size_t>(mN.size), -1);
  for (int c = 0; c < mN.size; ++c) {
    int best = -1;
    double best_val = 0;
    for (const auto& [r, v] : mN.cols[static_cast<size_t>(c)]) {
      if (v > best_val) {  // sorted rows: first max = smallest row id
        best_val = v;
        best = r;
      }
    }
    if (best >= 0) {
      out.center_of[static_cast<size_t>(c)] = best;
      out.clusters[best].push_back(c);
    }
  }
  return out;
}

FlowLabels flow_labels_from_centers(
    const std::vector<std::vector<std::pair<int, double>>>& center_labels) {
  FlowLabels labels;
  labels.targets = center_labels;
  return labels;
}

double mc_loss(const FlowMatrix& mN, const FlowLabels& labels) {
  if (static_cast<int>(labels.targets.size()) != mN.size)
    throw ShapeMismatch("mc_loss: label count " +
                        std::to_string(labels.targets.size()) + " for size " +
                        std::to_string(mN.size));
  double acc = 0;
  constexpr double floor = 1e-12;
  for (int m = 0; m < mN.size; ++m)
    for (const auto& [attractor, weight] : labels.targets[static_cast<size_t>(m)])
      acc -= weight * std::log(std::max(mN.at(attractor, m), floor));
  return acc / mN.size;
}

std::vector<double> mc_gradients(const FlowMatrix& m0, const FlowLabels& labels,
                                 int iters, double prune_threshold) {
  if (iters < 1) throw ShapeMismatch("mc_gradients: iters must be >= 1");
  const int n = m0.size;
  const size_t nn = static_cast<size_t>(n) * n;

  // forward, keeping every pruned iterate
  std::vector<FlowMatrix> history;
  history.reserve(static_cast<size_t>(iters) + 1);
  history.push_back(m0);
  for (int t = 1; t <= iters; ++t) {
    const FlowMatrix& prev = history.back();
    FlowMatrix next;
    next.size = n;
    next.cols.resize(static_cast<size_t>(n));
    for (int c = 0; c < n; ++c) {
      std::vector<std::pair<int, double>> acc;
      for (const auto& [k, w] : m0.cols[static_cast<size_t>(c)]) {
        const auto& src = prev.cols[static_cast<size_t>(k)];
        std::vector<std::pair<int, double>> merged;
        merged.reserve(acc.size() + src.size());
        size_t ia = 0, ib = 0;
        while (ia < acc.size() || ib < src.size()) {
          if (ib >= src.size() ||
              (ia < acc.size() && acc[ia].first < src[ib].first)) {
            merged.push_back(acc[ia]);
            ++ia;
          } else if (ia >= acc.size() || src[ib].first < acc[ia].first) {
            merged.emplace_back(src[ib].first, w * src[ib].second);
            ++ib;
          } else {
            merged.emplace_back(acc[ia].first,
                                acc[ia].second + w * src[ib].second);
            ++ia;
            ++ib;
          }
        }
        acc = std::move(merged);
      }
      double sum = 0;
      for (const auto& [r, v] : acc) sum += v;
      std::vector<std::pair<int, double>> kept;
      for (auto& [r, v] : acc) {
        const double inflated = sum > 0 ? v / sum : 0.0;
        if (inflated >= prune_threshold) kept.emplace_back(r, inflated);
      }
      next.cols[static_cast<size_t>(c)] = std::move(kept);
    }
    history.push_back(std::move(next));
  }

  // loss gradient on the final iterate
  const FlowMatrix& m_final = history.back();
  constexpr double floor = 1e-12;
  std::vector<double> g(nn, 0.0);
  for (int m = 0; m < n; ++m)
    for (const auto& [attractor, weight] : labels.targets[static_cast<size_t>(m)]) {
      const double value = m_final.at(attractor, m);
      if (value > floor)
        g[static_cast<size_t>(attractor) * n + m] -= weight / (value * n);
    }

  const std::vector<double> m0_dense = m0.dense();
  std::vector<double> g_m0(nn, 0.0);

  // backward through the expand chain; prune gates by survival, inflate
  // backpropagates as identity
  for (int t = iters; t >= 1; --t) {
    std::vector<double> gated(nn, 0.0);
    const FlowMatrix& survived = history[static_cast<size_t>(t)];
    for (int c = 0; c < n; ++c)
      for (const auto& [r, v] : survived.cols[static_cast<size_t>(c)]) {
        (void)v;
        gated[static_cast<size_t>(r) * n + c] =
            g[static_cast<size_t>(r) * n + c];
      }

    // g_M0(t) = g_t * (M_{t-1})^T
    const std::vector<double> prev_dense = history[static_cast<size_t>(t - 1)].dense();
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) {
        double acc = 0;
        for (int k = 0; k < n; ++k)
          acc += gated[static_cast<size_t>(r) * n + k] *
                 prev_dense[static_cast<size_t>(c) * n + k];
        g_m0[static_cast<size_t>(r) * n + c] += acc;
      }

    // g_{t-1} = M_0^T * g_t
    std::vector<double> g_prev(nn, 0.0);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) {
        double acc = 0;
        for (int k = 0; k < n; ++k)
          acc += m0_dense[static_cast<size_t>(k) * n + r] *
                 gated[static_cast<size_t>(k) * n + c];
        g_prev[static_cast<size_t>(r) * n + c] = acc;
      }
    g = std::move(g_prev);
  }

  // the left end of the chain is M_0 itself
  for (size_t i = 0; i < nn; ++i) g_m0[i] += g[i];

  // only the stored flows are parameters; mask everything else
  std::vector<double> masked(nn, 0.0);
  for (int c = 0; c < n; ++c)
    for (const auto& [r, v] : m0.cols[static_cast<size_t>(c)]) {
      (void)v;
      masked[static_cast<size_t>(r) * n + c] =
          g_m0[static_cast<size_t>(r) * n + c];
    }
  return masked;
}

}  // namespace latticeprop
