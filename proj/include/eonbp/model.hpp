#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace eonbp {

// Raised for any schema or semantic problem in a config document. The message
// always starts with the path of the offending field.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

enum class Policy { kRandomFit, kFirstFit };
enum class Engine { kExact, kApprox, kSim };
enum class Variant { kEes, kSoc, kUniform };

// One of the four operation modes: rf, ff, rf-sc, ff-sc.
struct OperationMode {
  Policy policy = Policy::kRandomFit;
  bool spectrum_conversion = false;

  std::string label() const {
    std::string s = policy == Policy::kRandomFit ? "rf" : "ff";
    if (spectrum_conversion) s += "-sc";
    return s;
  }
  static OperationMode parse(const std::string& text) {
    if (text == "rf") return {Policy::kRandomFit, false};
    if (text == "ff") return {Policy::kFirstFit, false};
    if (text == "rf-sc") return {Policy::kRandomFit, true};
    if (text == "ff-sc") return {Policy::kFirstFit, true};
    throw ConfigError("mode", "unknown mode '" + text +
                              "' (expected rf, ff, rf-sc or ff-sc)");
  }
  friend bool operator==(const OperationMode&, const OperationMode&) = default;
};

inline std::string engine_label(Engine e) {
  switch (e) {
    case Engine::kExact: return "exact";
    case Engine::kApprox: return "approx";
    case Engine::kSim: return "sim";
  }
  return "?";
}

inline Engine parse_engine(const std::string& text) {
  if (text == "exact") return Engine::kExact;
  if (text == "approx") return Engine::kApprox;
  if (text == "sim") return Engine::kSim;
  throw ConfigError("engine", "unknown engine '" + text + "'");
}

inline std::string variant_label(Variant v) {
  switch (v) {
    case Variant::kEes: return "ees";
    case Variant::kSoc: return "soc";
    case Variant::kUniform: return "uniform";
  }
  return "?";
}

inline Variant parse_variant(const std::string& text) {
  if (text == "ees") return Variant::kEes;
  if (text == "soc") return Variant::kSoc;
  if (text == "uniform") return Variant::kUniform;
  throw ConfigError("variant", "unknown variant '" + text + "'");
}

// Unidirectional fiber link between two node indices.
struct Link {
  int src = -1;
  int dst = -1;
  friend bool operator==(const Link&, const Link&) = default;
};

struct Topology {
  std::vector<std::string> nodes;
  std::vector<Link> links;
  int capacity = 0;  // C slices, uniform across links

  int node_index(const std::string& name) const {
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i] == name) return static_cast<int>(i);
    return -1;
  }
  std::optional<int> link_between(int src, int dst) const {
    for (std::size_t i = 0; i < links.size(); ++i)
      if (links[i].src == src && links[i].dst == dst)
        return static_cast<int>(i);
    return std::nullopt;
  }
  int num_links() const { return static_cast<int>(links.size()); }
};

// Connection class k: bandwidth d_k in slices, service rate mu_k.
struct DemandClass {
  int width = 0;
  double holding_rate = 1.0;
};

// Origin-destination pair with its fixed route (ordered link indices).
// arrival_rates stays empty until a concrete offered load is applied.
struct OdPair {
  int origin = -1;
  int destination = -1;
  std::vector<int> route;
  std::vector<double> arrival_rates;
};

struct ScenarioConfig {
  Topology topology;
  std::vector<DemandClass> classes;
  std::vector<OdPair> od_pairs;
  OperationMode mode;
  Engine engine = Engine::kApprox;
  Variant variant = Variant::kEes;
  std::vector<double> loads;
  double epsilon = 1e-6;
  int max_iters = 1000;
  double solver_tolerance = 1e-10;
  std::uint64_t seed = 1;
  std::int64_t requests = 1'000'000;
  std::int64_t state_cap = 2'000'000;

  int num_classes() const { return static_cast<int>(classes.size()); }
  int num_od_pairs() const { return static_cast<int>(od_pairs.size()); }

  double rate(int o, int k) const {
    const auto& r = od_pairs[o].arrival_rates;
    return r.empty() ? 0.0 : r[k];
  }

  // Uniform-split convention: lambda_k^o = load / (|O| * K) for every pair
  // and class.
  ScenarioConfig with_load(double offered) const {
    ScenarioConfig out = *this;
    const double rate =
        offered / (static_cast<double>(num_od_pairs()) * num_classes());
    for (auto& od : out.od_pairs)
      od.arrival_rates.assign(classes.size(), rate);
    return out;
  }
};

inline double offered_load(const ScenarioConfig& cfg) {
  double total = 0.0;
  for (const auto& od : cfg.od_pairs)
    for (std::size_t k = 0; k < od.arrival_rates.size(); ++k)
      total += od.arrival_rates[k] / cfg.classes[k].holding_rate;
  return total;
}

// Minimum-hop directed path; ties broken by the lexicographically smallest
// node-name sequence so that fixtures are reproducible. Returns ordered link
// indices. Throws std::runtime_error when no path exists.
inline std::vector<int> shortest_path(const Topology& topo, int origin,
                                      int destination) {
  const int n = static_cast<int>(topo.nodes.size());
  if (origin == destination)
    throw std::runtime_error("origin and destination coincide");

  // Reverse BFS from the destination gives the remaining-hops metric.
  constexpr int kInf = std::numeric_limits<int>::max();
  std::vector<int> dist(n, kInf);
  dist[destination] = 0;
  std::vector<int> frontier{destination};
  while (!frontier.empty()) {
    std::vector<int> next;
    for (int v : frontier)
      for (const auto& link : topo.links)
        if (link.dst == v && dist[link.src] == kInf) {
          dist[link.src] = dist[v] + 1;
          next.push_back(link.src);
        }
    frontier = std::move(next);
  }
  if (dist[origin] == kInf)
    throw std::runtime_error("no path from '" + topo.nodes[origin] +
                             "' to '" + topo.nodes[destination] + "'");

  // Greedy walk: at each step take the smallest-named neighbour that still
  // lies on some shortest path. This realizes the lexicographic tie-break
  // over whole node sequences.
  std::vector<int> route;
  int current = origin;
  while (current != destination) {
    int best_node = -1;
    int best_link = -1;
    for (std::size_t li = 0; li < topo.links.size(); ++li) {
      const auto& link = topo.links[li];
      if (link.src != current) continue;
      if (dist[link.dst] != dist[current] - 1) continue;
      if (best_node < 0 || topo.nodes[link.dst] < topo.nodes[best_node]) {
        best_node = link.dst;
        best_link = static_cast<int>(li);
      }
    }
    route.push_back(best_link);
    current = best_node;
  }
  return route;
}

namespace detail {

inline const nlohmann::json& require_field(const nlohmann::json& doc,
                                           const std::string& name) {
  if (!doc.contains(name)) throw ConfigError(name, "missing required field");
  return doc.at(name);
}

template <typename T>
T field_as(const nlohmann::json& value, const std::string& path) {
  try {
    return value.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(path, "has the wrong type");
  }
}

// Node-name sequence -> ordered link indices, validating connectivity.
inline std::vector<int> route_from_nodes(const Topology& topo,
                                         const std::vector<std::string>& names,
                                         const std::string& path) {
  if (names.size() < 2) throw ConfigError(path, "route needs >= 2 nodes");
  std::vector<int> route;
  for (std::size_t i = 0; i + 1 < names.size(); ++i) {
    int a = topo.node_index(names[i]);
    int b = topo.node_index(names[i + 1]);
    if (a < 0) throw ConfigError(path, "unknown node '" + names[i] + "'");
    if (b < 0) throw ConfigError(path, "unknown node '" + names[i + 1] + "'");
    auto link = topo.link_between(a, b);
    if (!link)
      throw ConfigError(path, "no link " + names[i] + " -> " + names[i + 1]);
    route.push_back(*link);
  }
  return route;
}

}  // namespace detail

inline ScenarioConfig load_config(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("document", std::string("parse error: ") + e.what());
  }

  ScenarioConfig cfg;
  auto& topo = cfg.topology;

  for (const auto& [i, node] :
       detail::require_field(doc, "nodes").items()) {
    auto name = detail::field_as<std::string>(node, "nodes[" + i + "]");
    if (topo.node_index(name) >= 0)
      throw ConfigError("nodes[" + i + "]", "duplicate node '" + name + "'");
    topo.nodes.push_back(name);
  }
  if (topo.nodes.empty()) throw ConfigError("nodes", "empty node list");

  topo.capacity = detail::field_as<int>(detail::require_field(doc, "capacity"),
                                        "capacity");
  if (topo.capacity < 1) throw ConfigError("capacity", "must be >= 1");

  for (const auto& [i, pair] : detail::require_field(doc, "links").items()) {
    const std::string path = "links[" + i + "]";
    auto names = detail::field_as<std::vector<std::string>>(pair, path);
    if (names.size() != 2) throw ConfigError(path, "expected [src, dst]");
    int src = topo.node_index(names[0]);
    int dst = topo.node_index(names[1]);
    if (src < 0) throw ConfigError(path, "unknown node '" + names[0] + "'");
    if (dst < 0) throw ConfigError(path, "unknown node '" + names[1] + "'");
    if (src == dst) throw ConfigError(path, "self-loop link");
    if (topo.link_between(src, dst))
      throw ConfigError(path, "duplicate link");
    topo.links.push_back({src, dst});
  }
  if (topo.links.empty()) throw ConfigError("links", "empty link list");

  for (const auto& [i, cls] : detail::require_field(doc, "classes").items()) {
    const std::string path = "classes[" + i + "]";
    DemandClass dc;
    dc.width = detail::field_as<int>(detail::require_field(cls, "d"),
                                     path + ".d");
    dc.holding_rate = detail::field_as<double>(
        detail::require_field(cls, "mu"), path + ".mu");
    if (dc.width < 1) throw ConfigError(path + ".d", "must be >= 1");
    if (dc.width > topo.capacity)
      throw ConfigError(path + ".d", "class width exceeds capacity");
    if (dc.holding_rate <= 0) throw ConfigError(path + ".mu", "must be > 0");
    cfg.classes.push_back(dc);
  }
  if (cfg.classes.empty()) throw ConfigError("classes", "empty class list");

  for (const auto& [i, od] : detail::require_field(doc, "od_pairs").items()) {
    const std::string path = "od_pairs[" + i + "]";
    OdPair pair;
    auto origin = detail::field_as<std::string>(
        detail::require_field(od, "origin"), path + ".origin");
    auto dest = detail::field_as<std::string>(
        detail::require_field(od, "dest"), path + ".dest");
    pair.origin = topo.node_index(origin);
    pair.destination = topo.node_index(dest);
    if (pair.origin < 0)
      throw ConfigError(path + ".origin", "unknown node '" + origin + "'");
    if (pair.destination < 0)
      throw ConfigError(path + ".dest", "unknown node '" + dest + "'");
    if (pair.origin == pair.destination)
      throw ConfigError(path, "origin equals destination");
    if (od.contains("route")) {
      auto names = detail::field_as<std::vector<std::string>>(od.at("route"),
                                                              path + ".route");
      if (topo.node_index(names.front()) != pair.origin ||
          topo.node_index(names.back()) != pair.destination)
        throw ConfigError(path + ".route", "route endpoints disagree with od");
      pair.route = detail::route_from_nodes(topo, names, path + ".route");
    } else {
      try {
        pair.route = shortest_path(topo, pair.origin, pair.destination);
      } catch (const std::runtime_error& e) {
        throw ConfigError(path, e.what());
      }
    }
    cfg.od_pairs.push_back(std::move(pair));
  }
  if (cfg.od_pairs.empty()) throw ConfigError("od_pairs", "empty od list");

  cfg.mode = OperationMode::parse(detail::field_as<std::string>(
      detail::require_field(doc, "mode"), "mode"));
  if (doc.contains("engine"))
    cfg.engine = parse_engine(
        detail::field_as<std::string>(doc.at("engine"), "engine"));
  if (doc.contains("variant"))
    cfg.variant = parse_variant(
        detail::field_as<std::string>(doc.at("variant"), "variant"));
  if (doc.contains("loads")) {
    cfg.loads =
        detail::field_as<std::vector<double>>(doc.at("loads"), "loads");
    for (std::size_t i = 0; i < cfg.loads.size(); ++i)
      if (cfg.loads[i] < 0)
        throw ConfigError("loads[" + std::to_string(i) + "]",
                          "negative rate");
  }
  if (doc.contains("epsilon")) {
    cfg.epsilon = detail::field_as<double>(doc.at("epsilon"), "epsilon");
    if (cfg.epsilon <= 0) throw ConfigError("epsilon", "must be > 0");
  }
  if (doc.contains("max_iters")) {
    cfg.max_iters = detail::field_as<int>(doc.at("max_iters"), "max_iters");
    if (cfg.max_iters < 1) throw ConfigError("max_iters", "must be >= 1");
  }
  if (doc.contains("solver_tolerance")) {
    cfg.solver_tolerance =
        detail::field_as<double>(doc.at("solver_tolerance"),
                                 "solver_tolerance");
    if (cfg.solver_tolerance <= 0)
      throw ConfigError("solver_tolerance", "must be > 0");
  }
  if (doc.contains("seed"))
    cfg.seed = detail::field_as<std::uint64_t>(doc.at("seed"), "seed");
  if (doc.contains("requests")) {
    cfg.requests =
        detail::field_as<std::int64_t>(doc.at("requests"), "requests");
    if (cfg.requests < 1) throw ConfigError("requests", "must be >= 1");
  }
  if (doc.contains("state_cap")) {
    cfg.state_cap =
        detail::field_as<std::int64_t>(doc.at("state_cap"), "state_cap");
    if (cfg.state_cap < 1) throw ConfigError("state_cap", "must be >= 1");
  }
  return cfg;
}

inline ScenarioConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("document", "cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_config(buf.str());
}

}  // namespace eonbp
