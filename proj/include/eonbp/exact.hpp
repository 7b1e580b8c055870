#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "eonbp/model.hpp"
#include "eonbp/solver.hpp"

namespace eonbp {

// Slice cell of a network state. 0 = free, 1 = continuation of a block,
// >= 2 = first slice of a connection block, tagged with (od pair, class) so
// that classes of equal width stay distinguishable.
using Cell = std::uint16_t;
inline constexpr Cell kFreeCell = 0;
inline constexpr Cell kContCell = 1;

struct CellCodec {
  int num_classes = 1;
  Cell start(int o, int k) const {
    return static_cast<Cell>(2 + o * num_classes + k);
  }
  static bool is_start(Cell c) { return c >= 2; }
  int od_of(Cell c) const { return (c - 2) / num_classes; }
  int class_of(Cell c) const { return (c - 2) % num_classes; }
};

// Full per-slice occupancy of all links, row-major |J| x C.
struct NetworkState {
  std::vector<Cell> cells;
  friend bool operator==(const NetworkState&, const NetworkState&) = default;
};

// Byte-equality key; doubles as the membership test of Algorithm-style
// closure generation.
inline std::string canonical_key(const NetworkState& s) {
  return std::string(reinterpret_cast<const char*>(s.cells.data()),
                     s.cells.size() * sizeof(Cell));
}

// One way of placing a connection: the start slice on each link of its
// route, in route order. Without spectrum conversion all entries coincide.
struct Placement {
  std::vector<int> starts;
  friend bool operator==(const Placement&, const Placement&) = default;
};

class StateCapError : public std::runtime_error {
 public:
  explicit StateCapError(std::int64_t reached)
      : std::runtime_error("state space exceeded the configured cap at " +
                           std::to_string(reached) + " states"),
        reached_(reached) {}
  std::int64_t reached() const { return reached_; }

 private:
  std::int64_t reached_;
};

// Spectrum allocation and deallocation rules, shared verbatim between the
// exact chain generator and the discrete-event simulator.
class AllocationRules {
 public:
  AllocationRules(const Topology& topo, const std::vector<DemandClass>& classes,
                  const std::vector<OdPair>& od_pairs)
      : topo_(&topo),
        classes_(&classes),
        od_pairs_(&od_pairs),
        codec_{static_cast<int>(classes.size())} {}

  int capacity() const { return topo_->capacity; }
  int num_links() const { return topo_->num_links(); }
  const CellCodec& codec() const { return codec_; }

  NetworkState empty_state() const {
    return NetworkState{std::vector<Cell>(
        static_cast<std::size_t>(num_links()) * capacity(), kFreeCell)};
  }

  Cell cell(const NetworkState& s, int link, int slice) const {
    return s.cells[static_cast<std::size_t>(link) * capacity() + slice];
  }

  // Start positions of width-d free runs on one link.
  std::vector<int> link_starts(const NetworkState& s, int link, int d) const {
    std::vector<int> out;
    const int c = capacity();
    int run = 0;
    for (int slice = 0; slice < c; ++slice) {
      run = cell(s, link, slice) == kFreeCell ? run + 1 : 0;
      if (run >= d) out.push_back(slice - d + 1);
    }
    return out;
  }

  // Starts that are free on every link of the route (contiguity plus
  // continuity).
  std::vector<int> aligned_starts(const NetworkState& s,
                                  const std::vector<int>& route, int d) const {
    std::vector<int> out;
    const int c = capacity();
    int run = 0;
    for (int slice = 0; slice < c; ++slice) {
      bool free_everywhere = true;
      for (int link : route)
        if (cell(s, link, slice) != kFreeCell) {
          free_everywhere = false;
          break;
        }
      run = free_everywhere ? run + 1 : 0;
      if (run >= d) out.push_back(slice - d + 1);
    }
    return out;
  }

  // Gamma+ as placements, in deterministic enumeration order. With SC the
  // aligned placements are preferred; only when none exists may each link
  // pick its own block.
  std::vector<Placement> arrival_placements(const NetworkState& s, int o,
                                            int k, OperationMode mode) const {
    const auto& route = (*od_pairs_)[o].route;
    const int d = (*classes_)[k].width;
    const int hops = static_cast<int>(route.size());
    const bool first_fit = mode.policy == Policy::kFirstFit;

    std::vector<Placement> out;
    auto aligned = aligned_starts(s, route, d);
    if (!aligned.empty()) {
      if (first_fit) aligned.resize(1);
      for (int start : aligned)
        out.push_back(Placement{std::vector<int>(hops, start)});
      return out;
    }
    if (!mode.spectrum_conversion) return out;

    std::vector<std::vector<int>> per_link;
    per_link.reserve(hops);
    for (int link : route) {
      auto starts = link_starts(s, link, d);
      if (starts.empty()) return out;
      if (first_fit) starts.resize(1);
      per_link.push_back(std::move(starts));
    }
    // Odometer over the per-link choices.
    std::vector<std::size_t> pos(hops, 0);
    while (true) {
      Placement p;
      p.starts.resize(hops);
      for (int i = 0; i < hops; ++i) p.starts[i] = per_link[i][pos[i]];
      out.push_back(std::move(p));
      int i = hops - 1;
      while (i >= 0 && ++pos[i] == per_link[i].size()) pos[i--] = 0;
      if (i < 0) break;
    }
    return out;
  }

  bool blocked(const NetworkState& s, int o, int k, OperationMode mode) const {
    const auto& route = (*od_pairs_)[o].route;
    const int d = (*classes_)[k].width;
    if (!aligned_starts(s, route, d).empty()) return false;
    if (!mode.spectrum_conversion) return true;
    for (int link : route)
      if (link_starts(s, link, d).empty()) return true;
    return false;
  }

  // Uniform draw from Gamma+ without materializing it; the per-link branch
  // draws each link independently, which is the uniform distribution over
  // the combination set.
  template <typename Rng>
  std::optional<Placement> sample_arrival(const NetworkState& s, int o, int k,
                                          OperationMode mode, Rng& rng) const {
    const auto& route = (*od_pairs_)[o].route;
    const int d = (*classes_)[k].width;
    const int hops = static_cast<int>(route.size());
    const bool first_fit = mode.policy == Policy::kFirstFit;

    auto aligned = aligned_starts(s, route, d);
    if (!aligned.empty()) {
      const int start =
          first_fit ? aligned.front()
                    : aligned[rng.uniform_index(aligned.size())];
      return Placement{std::vector<int>(hops, start)};
    }
    if (!mode.spectrum_conversion) return std::nullopt;
    Placement p;
    p.starts.resize(hops);
    for (int i = 0; i < hops; ++i) {
      auto starts = link_starts(s, route[i], d);
      if (starts.empty()) return std::nullopt;
      p.starts[i] =
          first_fit ? starts.front() : starts[rng.uniform_index(starts.size())];
    }
    return p;
  }

  void apply(NetworkState& s, int o, int k, const Placement& p) const {
    const auto& route = (*od_pairs_)[o].route;
    const int d = (*classes_)[k].width;
    for (std::size_t i = 0; i < route.size(); ++i) {
      auto* row = &s.cells[static_cast<std::size_t>(route[i]) * capacity()];
      row[p.starts[i]] = codec_.start(o, k);
      for (int j = 1; j < d; ++j) row[p.starts[i] + j] = kContCell;
    }
  }

  void remove(NetworkState& s, int o, int k, const Placement& p) const {
    const auto& route = (*od_pairs_)[o].route;
    const int d = (*classes_)[k].width;
    for (std::size_t i = 0; i < route.size(); ++i) {
      auto* row = &s.cells[static_cast<std::size_t>(route[i]) * capacity()];
      for (int j = 0; j < d; ++j) row[p.starts[i] + j] = kFreeCell;
    }
  }

  // Number of (o,k) connections held: start markers on the first route link.
  int held_connections(const NetworkState& s, int o, int k) const {
    const int link = (*od_pairs_)[o].route.front();
    const Cell tag = codec_.start(o, k);
    int n = 0;
    for (int slice = 0; slice < capacity(); ++slice)
      if (cell(s, link, slice) == tag) ++n;
    return n;
  }

  // Gamma- as weighted placements. Without SC a departure removes one
  // aligned block (weight 1). With SC any cross-link block combination may
  // go, and the weights are normalized so that they sum to the number of
  // held connections -- the total departure rate the balance equations
  // require.
  std::vector<std::pair<Placement, double>> departure_placements(
      const NetworkState& s, int o, int k, OperationMode mode) const {
    const auto& route = (*od_pairs_)[o].route;
    const Cell tag = codec_.start(o, k);
    const int hops = static_cast<int>(route.size());

    std::vector<std::vector<int>> per_link(hops);
    for (int i = 0; i < hops; ++i)
      for (int slice = 0; slice < capacity(); ++slice)
        if (cell(s, route[i], slice) == tag) per_link[i].push_back(slice);

    std::vector<std::pair<Placement, double>> out;
    const std::size_t held = per_link[0].size();
    if (held == 0) return out;

    if (!mode.spectrum_conversion || hops == 1) {
      for (int start : per_link[0])
        out.push_back({Placement{std::vector<int>(hops, start)}, 1.0});
      return out;
    }
    double combos = 1.0;
    for (const auto& starts : per_link) combos *= starts.size();
    const double weight = static_cast<double>(held) / combos;
    std::vector<std::size_t> pos(hops, 0);
    while (true) {
      Placement p;
      p.starts.resize(hops);
      for (int i = 0; i < hops; ++i) p.starts[i] = per_link[i][pos[i]];
      out.push_back({std::move(p), weight});
      int i = hops - 1;
      while (i >= 0 && ++pos[i] == per_link[i].size()) pos[i--] = 0;
      if (i < 0) break;
    }
    return out;
  }

 private:
  const Topology* topo_;
  const std::vector<DemandClass>* classes_;
  const std::vector<OdPair>* od_pairs_;
  CellCodec codec_;
};

// Successor states after an arrival (Gamma+), deterministic order.
inline std::vector<NetworkState> allocate_candidates(
    const AllocationRules& rules, const NetworkState& s, int o, int k,
    OperationMode mode) {
  std::vector<NetworkState> out;
  for (const auto& p : rules.arrival_placements(s, o, k, mode)) {
    NetworkState next = s;
    rules.apply(next, o, k, p);
    out.push_back(std::move(next));
  }
  return out;
}

// Successor states after a departure (Gamma-), duplicates merged with summed
// multiplicity.
inline std::vector<std::pair<NetworkState, double>> deallocate_candidates(
    const AllocationRules& rules, const NetworkState& s, int o, int k,
    OperationMode mode) {
  std::vector<std::pair<NetworkState, double>> out;
  std::map<std::string, std::size_t> seen;
  for (const auto& [p, weight] : rules.departure_placements(s, o, k, mode)) {
    NetworkState next = s;
    rules.remove(next, o, k, p);
    auto key = canonical_key(next);
    auto [it, inserted] = seen.try_emplace(key, out.size());
    if (inserted)
      out.push_back({std::move(next), weight});
    else
      out[it->second].second += weight;
  }
  return out;
}

struct Transition {
  std::int32_t from = 0;
  std::int32_t to = 0;
  std::int16_t od = 0;
  std::int16_t cls = 0;
  bool departure = false;
  // Arrivals carry 1/|Gamma+| (the uniform split of the arrival rate),
  // departures the merged multiplicity.
  double weight = 0.0;
};

struct StateSpace {
  int num_links = 0;
  int capacity = 0;
  int num_od = 0;
  int num_classes = 0;
  std::vector<NetworkState> states;
  std::unordered_map<std::string, int> index;
  std::vector<Transition> transitions;
  std::vector<std::uint8_t> blocking;  // i * |O| * K + o * K + k

  std::int64_t size() const { return static_cast<std::int64_t>(states.size()); }
  bool blocked(int i, int o, int k) const {
    return blocking[(static_cast<std::size_t>(i) * num_od + o) * num_classes +
                    k] != 0;
  }
};

// Breadth-complete closure from the empty state under arrivals and
// departures; discovery order is deterministic.
inline StateSpace build_state_space(const Topology& topo,
                                    const std::vector<DemandClass>& classes,
                                    const std::vector<OdPair>& od_pairs,
                                    OperationMode mode,
                                    std::int64_t state_cap = 2'000'000) {
  AllocationRules rules(topo, classes, od_pairs);
  const int num_od = static_cast<int>(od_pairs.size());
  const int num_classes = static_cast<int>(classes.size());

  StateSpace space;
  space.num_links = topo.num_links();
  space.capacity = topo.capacity;
  space.num_od = num_od;
  space.num_classes = num_classes;

  auto intern = [&](NetworkState&& s) -> int {
    auto key = canonical_key(s);
    auto it = space.index.find(key);
    if (it != space.index.end()) return it->second;
    const int id = static_cast<int>(space.states.size());
    if (space.size() + 1 > state_cap) throw StateCapError(space.size() + 1);
    space.states.push_back(std::move(s));
    space.index.emplace(std::move(key), id);
    space.blocking.resize(space.states.size() *
                          static_cast<std::size_t>(num_od) * num_classes);
    return id;
  };

  intern(rules.empty_state());
  for (std::size_t i = 0; i < space.states.size(); ++i) {
    for (int o = 0; o < num_od; ++o)
      for (int k = 0; k < num_classes; ++k) {
        // Copy: intern() may reallocate the state vector.
        const NetworkState current = space.states[i];
        auto successors = allocate_candidates(rules, current, o, k, mode);
        space.blocking[(i * num_od + o) * num_classes + k] =
            successors.empty() ? 1 : 0;
        const double weight = successors.empty()
                                  ? 0.0
                                  : 1.0 / static_cast<double>(successors.size());
        for (auto& next : successors) {
          const int t = intern(std::move(next));
          space.transitions.push_back({static_cast<std::int32_t>(i),
                                       static_cast<std::int32_t>(t),
                                       static_cast<std::int16_t>(o),
                                       static_cast<std::int16_t>(k), false,
                                       weight});
        }
      }
    for (int o = 0; o < num_od; ++o)
      for (int k = 0; k < num_classes; ++k) {
        const NetworkState current = space.states[i];
        for (auto& [next, mult] :
             deallocate_candidates(rules, current, o, k, mode)) {
          const int t = intern(std::move(next));
          space.transitions.push_back({static_cast<std::int32_t>(i),
                                       static_cast<std::int32_t>(t),
                                       static_cast<std::int16_t>(o),
                                       static_cast<std::int16_t>(k), true,
                                       mult});
        }
      }
  }
  return space;
}

inline StateSpace build_state_space(const ScenarioConfig& cfg) {
  return build_state_space(cfg.topology, cfg.classes, cfg.od_pairs, cfg.mode,
                           cfg.state_cap);
}

// Transition-rate matrix: arrivals contribute lambda_k^o / |Gamma+|,
// departures multiplicity * mu_k; diagonal is the negative row sum.
inline SparseRateSystem build_rate_matrix(const StateSpace& space,
                                          const ScenarioConfig& cfg) {
  SparseRateSystem sys;
  sys.dimension = static_cast<int>(space.states.size());
  std::vector<double> row_sum(space.states.size(), 0.0);
  sys.entries.reserve(space.transitions.size() + space.states.size());
  for (const auto& t : space.transitions) {
    const double rate = t.departure
                            ? t.weight * cfg.classes[t.cls].holding_rate
                            : t.weight * cfg.rate(t.od, t.cls);
    if (rate == 0.0) continue;
    sys.entries.emplace_back(t.from, t.to, rate);
    row_sum[t.from] += rate;
  }
  for (int i = 0; i < sys.dimension; ++i)
    if (row_sum[i] != 0.0) sys.entries.emplace_back(i, i, -row_sum[i]);
  return sys;
}

struct BlockingResult {
  std::vector<std::vector<double>> bp;  // [o][k]
  double overall = 0.0;
};

// Ensemble average over blocking states. Classes that never arrive report
// zero.
inline BlockingResult exact_blocking(const StateSpace& space,
                                     const Eigen::VectorXd& pi,
                                     const ScenarioConfig& cfg) {
  BlockingResult out;
  out.bp.assign(space.num_od,
                std::vector<double>(space.num_classes, 0.0));
  for (int o = 0; o < space.num_od; ++o)
    for (int k = 0; k < space.num_classes; ++k) {
      if (cfg.rate(o, k) == 0.0) continue;
      double total = 0.0;
      for (int i = 0; i < space.size(); ++i)
        if (space.blocked(i, o, k)) total += pi[i];
      out.bp[o][k] = total;
    }
  double weighted = 0.0, rate_sum = 0.0;
  for (int o = 0; o < space.num_od; ++o)
    for (int k = 0; k < space.num_classes; ++k) {
      weighted += cfg.rate(o, k) * out.bp[o][k];
      rate_sum += cfg.rate(o, k);
    }
  out.overall = rate_sum > 0 ? weighted / rate_sum : 0.0;
  return out;
}

// One state per line: index, then the canonical cell grid.
inline void dump_states(const StateSpace& space, std::ostream& os) {
  CellCodec codec{space.num_classes};
  for (std::size_t i = 0; i < space.states.size(); ++i) {
    os << i;
    const auto& cells = space.states[i].cells;
    for (int j = 0; j < space.num_links; ++j) {
      os << (j == 0 ? "\t" : " | ");
      for (int c = 0; c < space.capacity; ++c) {
        const Cell cell = cells[static_cast<std::size_t>(j) * space.capacity + c];
        if (c) os << ' ';
        if (cell == kFreeCell)
          os << '0';
        else if (cell == kContCell)
          os << '*';
        else
          os << codec.od_of(cell) + 1 << '.' << codec.class_of(cell) + 1;
      }
    }
    os << '\n';
  }
}

// Links coupled by shared routes must be solved jointly; independent groups
// factorize exactly, which keeps multi-link fixtures with single-hop routes
// tractable.
struct RouteComponent {
  Topology topology;
  std::vector<OdPair> od_pairs;
  std::vector<int> od_ids;  // indices into the parent config
};

inline std::vector<RouteComponent> split_route_components(
    const Topology& topo, const std::vector<OdPair>& od_pairs) {
  const int j = topo.num_links();
  std::vector<int> parent(j);
  for (int i = 0; i < j; ++i) parent[i] = i;
  std::function<int(int)> find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& od : od_pairs)
    for (std::size_t i = 1; i < od.route.size(); ++i)
      parent[find(od.route[i])] = find(od.route[0]);

  std::map<int, std::vector<int>> od_groups;  // component root -> od ids
  for (std::size_t o = 0; o < od_pairs.size(); ++o)
    od_groups[find(od_pairs[o].route.front())].push_back(static_cast<int>(o));

  std::vector<RouteComponent> components;
  for (auto& [root, od_ids] : od_groups) {
    RouteComponent comp;
    comp.od_ids = od_ids;
    std::map<int, int> link_map;
    std::map<int, int> node_map;
    auto map_node = [&](int node) {
      auto [it, inserted] = node_map.try_emplace(
          node, static_cast<int>(comp.topology.nodes.size()));
      if (inserted) comp.topology.nodes.push_back(topo.nodes[node]);
      return it->second;
    };
    comp.topology.capacity = topo.capacity;
    for (int link = 0; link < j; ++link)
      if (find(link) == root) {
        link_map[link] = static_cast<int>(comp.topology.links.size());
        comp.topology.links.push_back(
            {map_node(topo.links[link].src), map_node(topo.links[link].dst)});
      }
    for (int o : od_ids) {
      OdPair od = od_pairs[o];
      od.origin = map_node(od.origin);
      od.destination = map_node(od.destination);
      for (auto& link : od.route) link = link_map.at(link);
      comp.od_pairs.push_back(std::move(od));
    }
    components.push_back(std::move(comp));
  }
  return components;
}

struct ExactSolveResult {
  std::vector<std::vector<double>> bp;  // [o][k]
  double overall = 0.0;
  std::int64_t total_states = 0;
  double max_residual = 0.0;
};

// Full exact pipeline: component split, Algorithm-style closure, rate
// matrix, stationary solve, blocking.
inline ExactSolveResult solve_exact(const ScenarioConfig& cfg) {
  ExactSolveResult out;
  out.bp.assign(cfg.num_od_pairs(),
                std::vector<double>(cfg.num_classes(), 0.0));
  SolveOptions solver_opts;
  solver_opts.tolerance = cfg.solver_tolerance;

  for (const auto& comp :
       split_route_components(cfg.topology, cfg.od_pairs)) {
    ScenarioConfig sub = cfg;
    sub.topology = comp.topology;
    sub.od_pairs = comp.od_pairs;
    auto space = build_state_space(sub);
    out.total_states += space.size();
    auto system = build_rate_matrix(space, sub);
    auto pi = solve_stationary(system, solver_opts);
    out.max_residual = std::max(
        out.max_residual, detail::stationarity_residual(
                              detail::to_sparse(system), pi));
    auto blocking = exact_blocking(space, pi, sub);
    for (std::size_t local = 0; local < comp.od_ids.size(); ++local)
      out.bp[comp.od_ids[local]] = blocking.bp[local];
  }

  double weighted = 0.0, rate_sum = 0.0;
  for (int o = 0; o < cfg.num_od_pairs(); ++o)
    for (int k = 0; k < cfg.num_classes(); ++k) {
      weighted += cfg.rate(o, k) * out.bp[o][k];
      rate_sum += cfg.rate(o, k);
    }
  out.overall = rate_sum > 0 ? weighted / rate_sum : 0.0;
  return out;
}

}  // namespace eonbp
