#pragma once

#include <cstdint>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "eonbp/combinatorics.hpp"
#include "eonbp/exact.hpp"
#include "eonbp/model.hpp"

namespace eonbp {

// Length of the longest run of free cells in a single-link state.
inline int largest_free_block(std::span<const Cell> link_cells) {
  int best = 0, run = 0;
  for (Cell c : link_cells) {
    run = (c == kFreeCell) ? run + 1 : 0;
    if (run > best) best = run;
  }
  return best;
}

inline int largest_free_block(const std::vector<Cell>& link_cells) {
  return largest_free_block(std::span<const Cell>(link_cells));
}

// All connection-count vectors n >= 0 with n . d = x, in lexicographic
// order. Single-route form of the reduced model.
inline std::vector<std::vector<int>> enumerate_macrostates(
    int capacity, const std::vector<int>& d, int x) {
  if (x < 0 || x > capacity)
    throw std::invalid_argument("occupancy outside [0, C]");
  std::vector<std::vector<int>> out;
  std::vector<int> current(d.size(), 0);
  auto recurse = [&](auto&& self, std::size_t k, int remaining) -> void {
    if (k + 1 == d.size()) {
      if (remaining % d[k] == 0) {
        current[k] = remaining / d[k];
        out.push_back(current);
      }
      return;
    }
    for (int n = 0; n * d[k] <= remaining; ++n) {
      current[k] = n;
      self(self, k + 1, remaining - n * d[k]);
    }
    current[k] = 0;
  };
  recurse(recurse, 0, x);
  return out;
}

namespace detail {

inline int total_connections(const std::vector<int>& n) {
  int total = 0;
  for (int v : n) total += v;
  return total;
}

// Inclusion-exclusion count of empty-slice distributions with at least one
// gap of size >= d_k, for one permutation of the connection pattern.
inline BigInt nonblocking_gap_count(int free_slices, int connections, int dk) {
  BigInt w = 0;
  for (int i = 1; i <= connections + 1; ++i) {
    const BigInt term = binomial(connections + 1, i) *
                        binomial(free_slices + connections -
                                     static_cast<std::int64_t>(i) * dk,
                                 connections);
    w += (i % 2 == 1) ? term : -term;
  }
  return w;
}

}  // namespace detail

// |Omega_S(x)| under the RF policy: permutations of each macrostate times
// the ways of spreading the free slices around the blocks.
inline BigInt count_total(int x, int capacity, const std::vector<int>& d) {
  const int free_slices = capacity - x;
  BigInt total = 0;
  for (const auto& n : enumerate_macrostates(capacity, d, x)) {
    const int connections = detail::total_connections(n);
    total += multinomial(n) * binomial(free_slices + connections, connections);
  }
  return total;
}

// |NB(x, k)| under the RF policy (class index k into d).
inline BigInt count_nonblocking(int x, int k, int capacity,
                                const std::vector<int>& d) {
  BigInt total = 0;
  const int free_slices = capacity - x;
  for (const auto& n : enumerate_macrostates(capacity, d, x)) {
    const int connections = detail::total_connections(n);
    total += multinomial(n) *
             detail::nonblocking_gap_count(free_slices, connections, d[k]);
  }
  return total;
}

// |FB(x, k)|: states with enough free slices but no sufficient run.
inline BigInt count_frag_blocking(int x, int k, int capacity,
                                  const std::vector<int>& d) {
  if (x > capacity - d[k]) return 0;
  return count_total(x, capacity, d) - count_nonblocking(x, k, capacity, d);
}

struct StateClassCounts {
  BigInt total = 0;
  BigInt non_blocking = 0;
  BigInt frag_blocking = 0;
  BigInt resource_blocking = 0;
};

inline StateClassCounts state_class_counts(int x, int k, int capacity,
                                           const std::vector<int>& d) {
  StateClassCounts out;
  out.total = count_total(x, capacity, d);
  if (x <= capacity - d[k]) {
    out.non_blocking = count_nonblocking(x, k, capacity, d);
    out.frag_blocking = out.total - out.non_blocking;
  } else {
    out.resource_blocking = out.total;
  }
  return out;
}

// Explicit closure of single-link states under a policy, classified per
// (x, k). The enumeration is the oracle for the closed-form counts under RF
// and the only available source under FF.
struct LinkEnumeration {
  int capacity = 0;
  std::vector<int> d;
  Policy policy = Policy::kRandomFit;
  std::vector<std::vector<Cell>> states;
  std::vector<std::int64_t> total_by_x;                 // [x]
  std::vector<std::vector<std::int64_t>> non_blocking;  // [k][x]
  std::vector<std::vector<std::int64_t>> frag_blocking;
  std::vector<std::vector<std::int64_t>> resource_blocking;
};

inline LinkEnumeration enumerate_link_states(Policy policy, int capacity,
                                             const std::vector<int>& d,
                                             std::int64_t cap = 2'000'000) {
  Topology topo;
  topo.nodes = {"a", "b"};
  topo.links = {{0, 1}};
  topo.capacity = capacity;
  std::vector<DemandClass> classes;
  for (int width : d) classes.push_back({width, 1.0});
  std::vector<OdPair> od_pairs{{0, 1, {0}, {}}};
  const OperationMode mode{policy, false};

  auto space = build_state_space(topo, classes, od_pairs, mode, cap);

  LinkEnumeration out;
  out.capacity = capacity;
  out.d = d;
  out.policy = policy;
  const int num_classes = static_cast<int>(d.size());
  out.total_by_x.assign(capacity + 1, 0);
  out.non_blocking.assign(num_classes,
                          std::vector<std::int64_t>(capacity + 1, 0));
  out.frag_blocking = out.non_blocking;
  out.resource_blocking = out.non_blocking;

  for (const auto& state : space.states) {
    int occupied = 0;
    for (Cell c : state.cells)
      if (c != kFreeCell) ++occupied;
    const int fm = largest_free_block(state.cells);
    out.total_by_x[occupied] += 1;
    for (int k = 0; k < num_classes; ++k) {
      if (fm >= d[k])
        out.non_blocking[k][occupied] += 1;
      else if (d[k] <= capacity - occupied)
        out.frag_blocking[k][occupied] += 1;
      else
        out.resource_blocking[k][occupied] += 1;
    }
    out.states.push_back(state.cells);
  }
  return out;
}

// CSV dump of the per-(x, k) classification, either the closed-form counts
// (RF) or an enumeration.
inline void write_counts_csv(std::ostream& os, int capacity,
                             const std::vector<int>& d,
                             const LinkEnumeration* enumeration = nullptr) {
  os << "x,k,d_k,total,non_blocking,frag_blocking,resource_blocking\n";
  for (int x = 0; x <= capacity; ++x) {
    if (enumeration) {
      if (enumeration->total_by_x[x] == 0) continue;
      for (std::size_t k = 0; k < d.size(); ++k)
        os << x << ',' << k + 1 << ',' << d[k] << ','
           << enumeration->total_by_x[x] << ','
           << enumeration->non_blocking[k][x] << ','
           << enumeration->frag_blocking[k][x] << ','
           << enumeration->resource_blocking[k][x] << '\n';
    } else {
      if (enumerate_macrostates(capacity, d, x).empty()) continue;
      for (std::size_t k = 0; k < d.size(); ++k) {
        auto counts = state_class_counts(x, static_cast<int>(k), capacity, d);
        os << x << ',' << k + 1 << ',' << d[k] << ',' << counts.total << ','
           << counts.non_blocking << ',' << counts.frag_blocking << ','
           << counts.resource_blocking << '\n';
      }
    }
  }
}

}  // namespace eonbp
