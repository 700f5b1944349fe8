#include "latticeprop/gps.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <set>
#include <string>

#include "latticeprop/parallel.hpp"

namespace latticeprop {

namespace {

// Argmax slot of a node's weights; SELF wins ties, then slot order.
Slot next_hop_slot(const SlotWeights& w,
                   const std::array<int, kSlotCount>& targets) {
  Slot best = kSelf;
  double best_w = w[kSelf];
  for (Slot s : kNeighborSlots) {
    if (targets[s] < 0) continue;
    if (w[s] > best_w) {
      best_w = w[s];
      best = s;
    }
  }
  return best;
}

}  // namespace

TrapMap greedy_paths(const Lattice& lattice, const CorrelationField& field,
                     const std::vector<uint8_t>& fg_mask, int threads) {
  const int n = lattice.node_count();
  if (!field.matches(lattice))
    throw LatticeMismatch("greedy_paths: field does not match lattice");
  if (static_cast<int>(fg_mask.size()) != n)
    throw ShapeMismatch("greedy_paths: mask size " +
                        std::to_string(fg_mask.size()) + " for " +
                        std::to_string(n) + " nodes");

  TrapMap traps;
  traps.trap_of.assign(static_cast<size_t>(n), -1);
  traps.path_len.assign(static_cast<size_t>(n), 0);
  std::vector<uint8_t> cycled(static_cast<size_t>(n), 0);
  std::vector<long long> hops(static_cast<size_t>(n), 0);

  parallel_for(n, threads, [&](int i) {
    if (!fg_mask[static_cast<size_t>(i)]) return;
    std::set<int> visited;
    int cur = i;
    int len = 0;
    for (;;) {
      if (!visited.insert(cur).second) {
        cycled[static_cast<size_t>(i)] = 1;
        return;
      }
      const auto targets = slot_targets(lattice, cur);
      const Slot s = next_hop_slot(field.weights[static_cast<size_t>(cur)], targets);
      if (s == kSelf) break;
      cur = targets[s];
      ++len;
    }
    traps.trap_of[static_cast<size_t>(i)] = cur;
    traps.path_len[static_cast<size_t>(i)] = len;
    hops[static_cast<size_t>(i)] = len;
  });

  std::set<int> candidate_set;
  for (int i = 0; i < n; ++i) {
    if (cycled[static_cast<size_t>(i)]) traps.cycle_nodes.push_back(i);
    if (traps.trap_of[static_cast<size_t>(i)] >= 0)
      candidate_set.insert(traps.trap_of[static_cast<size_t>(i)]);
    traps.total_hops += hops[static_cast<size_t>(i)];
  }
  // fixed points map to themselves, foreground or not
  for (int trap : candidate_set) {
    traps.trap_of[static_cast<size_t>(trap)] = trap;
    traps.path_len[static_cast<size_t>(trap)] = 0;
  }
  traps.candidates.assign(candidate_set.begin(), candidate_set.end());
  return traps;
}

namespace {

struct SubLattice {
  Lattice lattice;
  int r0 = 0;
  int c0 = 0;
};

SubLattice clip_window(const Lattice& full, int node_a, int node_b,
                       int margin) {
  const int r0 = std::max(0, std::min(full.row_of(node_a), full.row_of(node_b)) - margin);
  const int r1 = std::min(full.rows - 1,
                          std::max(full.row_of(node_a), full.row_of(node_b)) + margin);
  const int c0 = std::max(0, std::min(full.col_of(node_a), full.col_of(node_b)) - margin);
  const int c1 = std::min(full.cols - 1,
                          std::max(full.col_of(node_a), full.col_of(node_b)) + margin);
  SubLattice sub;
  sub.lattice = build_lattice((r1 - r0 + 1) * full.factor,
                              (c1 - c0 + 1) * full.factor, full.factor);
  sub.r0 = r0;
  sub.c0 = c0;
  return sub;
}

}  // namespace

MergeResult merge_close_candidates(const Lattice& lattice,
                                   const CorrelationField& field,
                                   const TrapMap& traps, double d_T) {
  if (d_T < 0) throw ShapeMismatch("merge_close_candidates: d_T must be >= 0");
  MergeResult result;
  result.trap_of = traps.trap_of;

  std::vector<int> alive = traps.candidates;
  std::map<int, int> remap;  // absorbed candidate -> survivor
  std::map<int, long long> basin;
  for (int t : traps.trap_of)
    if (t >= 0) ++basin[t];

  // ascending (id_i, id_j) pair order keeps merging deterministic
  for (size_t ai = 0; ai < alive.size(); ++ai) {
    for (size_t bi = ai + 1; bi < alive.size(); ++bi) {
      const int a = alive[ai];
      const int b = alive[bi];
      if (a < 0 || b < 0 || a == b) continue;
      const int cheb = std::max(std::abs(lattice.row_of(a) - lattice.row_of(b)),
                                std::abs(lattice.col_of(a) - lattice.col_of(b)));
      if (cheb >= d_T) continue;

      // local CP on the minimal window (1-node margin) around the pair
      const SubLattice sub = clip_window(lattice, a, b, 1);
      std::vector<SlotWeights> sub_logits(
          static_cast<size_t>(sub.lattice.node_count()));
      for (int r = 0; r < sub.lattice.rows; ++r)
        for (int c = 0; c < sub.lattice.cols; ++c)
          sub_logits[static_cast<size_t>(sub.lattice.to_id(r, c))] =
              field.logits[static_cast<size_t>(
                  lattice.to_id(sub.r0 + r, sub.c0 + c))];
      const CorrelationField sub_field = normalize_field(sub.lattice, sub_logits);
      const int sub_n = sub.lattice.node_count();
      const CpRunResult run =
          cp_run(sub.lattice, sub_field, init_one_hot(sub.lattice), 4 * sub_n,
                 1e-9);
      const std::vector<uint8_t> all_fg(static_cast<size_t>(sub_n), 1);
      const ClusterAssignment sub_clusters =
          extract_centers(run.state, all_fg, 0.0);

      const int sub_a = sub.lattice.to_id(lattice.row_of(a) - sub.r0,
                                          lattice.col_of(a) - sub.c0);
      const int sub_b = sub.lattice.to_id(lattice.row_of(b) - sub.r0,
                                          lattice.col_of(b) - sub.c0);
      const int arg_a = sub_clusters.center_of[static_cast<size_t>(sub_a)];
      const int arg_b = sub_clusters.center_of[static_cast<size_t>(sub_b)];
      if (arg_a < 0 || arg_a != arg_b) continue;

      // merge: the larger basin survives, ties keep the smaller id
      const long long basin_a = basin.count(a) ? basin[a] : 0;
      const long long basin_b = basin.count(b) ? basin[b] : 0;
      const int survivor =
          basin_a > basin_b ? a : (basin_b > basin_a ? b : std::min(a, b));
      const int absorbed = survivor == a ? b : a;
      remap[absorbed] = survivor;
      basin[survivor] = basin_a + basin_b;
      basin.erase(absorbed);
      ++result.merges;
      if (absorbed == alive[ai]) {
        alive[ai] = -1;
      } else {
        alive[bi] = -1;
      }
      if (alive[ai] < 0) break;
    }
  }

  auto resolve = [&](int t) {
    while (true) {
      auto it = remap.find(t);
      if (it == remap.end()) return t;
      t = it->second;
    }
  };

  const int n = lattice.node_count();
  result.assignment.center_of.assign(static_cast<size_t>(n), -1);
  for (int i = 0; i < n; ++i) {
    const int t = result.trap_of[static_cast<size_t>(i)];
    if (t < 0) continue;
    const int final_t = resolve(t);
    result.trap_of[static_cast<size_t>(i)] = final_t;
    result.assignment.center_of[static_cast<size_t>(i)] = final_t;
    result.assignment.clusters[final_t].push_back(i);
  }
  for (int c : alive)
    if (c >= 0) result.candidates.push_back(c);
  std::sort(result.candidates.begin(), result.candidates.end());
  return result;
}

VectorFieldView combined_vector_field(const CorrelationField& field) {
  VectorFieldView view;
  view.omega.resize(field.weights.size());
  for (size_t i = 0; i < field.weights.size(); ++i) {
    const auto& w = field.weights[i];
    view.omega[i] = {w[kRight] - w[kLeft], w[kDown] - w[kUp]};
  }
  return view;
}

}  // namespace latticeprop
