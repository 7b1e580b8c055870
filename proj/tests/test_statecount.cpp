#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "eonbp/statecount.hpp"
#include "test_helpers.hpp"

using namespace eonbp;

namespace {

std::vector<Cell> link_state(std::initializer_list<int> pattern) {
  // 0 = free, 1 = block start, 2 = continuation; class tags do not matter
  // for run-length scanning.
  std::vector<Cell> cells;
  CellCodec codec{1};
  for (int v : pattern)
    cells.push_back(v == 0 ? kFreeCell : (v == 1 ? codec.start(0, 0) : kContCell));
  return cells;
}

// Multi-route generalization of the total count, used only as an oracle:
// connection patterns live over route x class pairs.
BigInt count_total_multiroute(int x, int capacity, const std::vector<int>& d,
                              int routes) {
  std::vector<int> widths;
  for (int r = 0; r < routes; ++r)
    widths.insert(widths.end(), d.begin(), d.end());
  BigInt total = 0;
  for (const auto& n : enumerate_macrostates(capacity, widths, x)) {
    int connections = 0;
    for (int v : n) connections += v;
    total += multinomial(n) *
             binomial(capacity - x + connections, connections);
  }
  return total;
}

}  // namespace

TEST_CASE("macrostate enumeration") {
  CHECK(enumerate_macrostates(7, {3, 4}, 7) ==
        std::vector<std::vector<int>>{{1, 1}});
  CHECK(enumerate_macrostates(10, {3, 4}, 1).empty());
  CHECK(enumerate_macrostates(12, {3, 4}, 12) ==
        std::vector<std::vector<int>>{{0, 3}, {4, 0}});
}

TEST_CASE("total state counts under RF") {
  const std::vector<int> d{3, 4};
  CHECK(count_total(3, 7, d) == 5);
  CHECK(count_total(0, 7, d) == 1);
  BigInt sum = 0;
  for (int x : {0, 3, 4, 6, 7}) sum += count_total(x, 7, d);
  CHECK(sum == 15);
}

TEST_CASE("non-blocking and fragmentation counts under RF") {
  const std::vector<int> d{3, 4};
  CHECK(count_nonblocking(3, 1, 7, d) == 2);
  CHECK(count_nonblocking(0, 0, 7, d) == 1);
  CHECK(count_nonblocking(0, 1, 7, d) == 1);
  CHECK(count_nonblocking(3, 0, 7, d) == 4);

  CHECK(count_frag_blocking(3, 1, 7, d) == 3);
  CHECK(count_frag_blocking(7, 0, 7, d) == 0);
  CHECK(count_frag_blocking(3, 0, 7, d) == 1);
}

TEST_CASE("largest free block") {
  CHECK(largest_free_block(link_state({0, 1, 2, 2, 0, 0, 0})) == 3);
  CHECK(largest_free_block(link_state({0, 0, 0, 0, 0, 0, 0})) == 7);
  CHECK(largest_free_block(link_state({1, 2, 2, 0, 1, 2, 2})) == 1);
}

TEST_CASE("FF enumeration matches the hand-checked C=7 classification") {
  auto ff = enumerate_link_states(Policy::kFirstFit, 7, {3, 4});
  CHECK(ff.total_by_x[3] == 3);
  CHECK(ff.non_blocking[1][3] == 2);
  CHECK(ff.frag_blocking[1][3] == 1);
  CHECK(ff.non_blocking[0][3] == 3);
}

TEST_CASE("trivial single-class enumeration") {
  for (auto policy : {Policy::kRandomFit, Policy::kFirstFit}) {
    auto counts = enumerate_link_states(policy, 3, {3});
    CHECK(counts.states.size() == 2);
    CHECK(counts.non_blocking[0][0] == 1);
    CHECK(counts.resource_blocking[0][3] == 1);
  }
}

TEST_CASE("RF enumeration is the oracle for the closed forms") {
  for (int capacity : {5, 7, 10}) {
    const std::vector<int> d{3, 4};
    auto rf = enumerate_link_states(Policy::kRandomFit, capacity, d);
    for (int x = 0; x <= capacity; ++x)
      for (int k = 0; k < 2; ++k) {
        auto counts = state_class_counts(x, k, capacity, d);
        CHECK(counts.total == rf.total_by_x[x]);
        CHECK(counts.non_blocking == rf.non_blocking[k][x]);
        CHECK(counts.frag_blocking == rf.frag_blocking[k][x]);
        CHECK(counts.resource_blocking == rf.resource_blocking[k][x]);
      }
  }
}

TEST_CASE("partition and monotonicity properties") {
  std::mt19937 gen(3);
  for (int trial = 0; trial < 30; ++trial) {
    const int capacity = 4 + static_cast<int>(gen() % 9);
    std::vector<int> d;
    std::set<int> widths;
    const int num_classes = 1 + static_cast<int>(gen() % 3);
    while (static_cast<int>(widths.size()) < num_classes)
      widths.insert(1 + static_cast<int>(gen() % capacity));
    d.assign(widths.begin(), widths.end());  // ascending widths

    for (int x = 0; x <= capacity; ++x) {
      BigInt prev_nb = -1;
      for (std::size_t k = 0; k < d.size(); ++k) {
        auto c = state_class_counts(x, static_cast<int>(k), capacity, d);
        CHECK(c.non_blocking + c.frag_blocking + c.resource_blocking ==
              c.total);
        CHECK(c.non_blocking <= c.total);
        CHECK(c.non_blocking >= 0);
        if (prev_nb >= 0) CHECK(c.non_blocking <= prev_nb);
        prev_nb = c.non_blocking;
      }
    }
  }
}

TEST_CASE("large-capacity counts stay exact and bounded") {
  const std::vector<int> d{4, 6, 10};
  for (int x : {0, 57, 120, 195, 200}) {
    if (enumerate_macrostates(200, d, x).empty()) continue;
    for (int k = 0; k < 3; ++k) {
      auto c = state_class_counts(x, k, 200, d);
      CHECK(c.total > 0);
      const double ratio = ratio_as_double(c.non_blocking, c.total);
      CHECK(ratio >= 0.0);
      CHECK(ratio <= 1.0);
    }
  }
}

TEST_CASE("multi-route total-count oracle") {
  // Two OD pairs share one link: the closed form generalizes with per-route
  // connection counts; the exact closure is the oracle.
  Topology topo;
  topo.nodes = {"a", "b"};
  topo.links = {{0, 1}};
  topo.capacity = 8;
  std::vector<DemandClass> classes{{3, 1.0}, {4, 1.0}};
  std::vector<OdPair> od_pairs{{0, 1, {0}, {}}, {0, 1, {0}, {}}};
  auto space = build_state_space(topo, classes, od_pairs,
                                 {Policy::kRandomFit, false});

  std::vector<std::int64_t> total_by_x(topo.capacity + 1, 0);
  for (const auto& state : space.states) {
    int occupied = 0;
    for (Cell c : state.cells)
      if (c != kFreeCell) ++occupied;
    total_by_x[occupied] += 1;
  }
  for (int x = 0; x <= topo.capacity; ++x)
    CHECK(count_total_multiroute(x, topo.capacity, {3, 4}, 2) ==
          total_by_x[x]);
}

TEST_CASE("counts CSV dump") {
  std::ostringstream formulas;
  write_counts_csv(formulas, 7, {3, 4});
  CHECK(formulas.str().find("3,2,4,5,2,3,0") != std::string::npos);

  auto ff = enumerate_link_states(Policy::kFirstFit, 7, {3, 4});
  std::ostringstream enumerated;
  write_counts_csv(enumerated, 7, {3, 4}, &ff);
  CHECK(enumerated.str().find("3,2,4,3,2,1,0") != std::string::npos);
}
