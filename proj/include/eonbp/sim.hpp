#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include "eonbp/exact.hpp"
#include "eonbp/model.hpp"

namespace eonbp {

// Philox4x32-10 counter-based generator: replications keyed by (seed,
// stream) are independent by construction, and the sequence is identical
// across platforms.
class Philox4x32 {
 public:
  static constexpr const char* kName = "philox4x32-10";

  Philox4x32(std::uint64_t seed, std::uint64_t stream = 0)
      : key_{static_cast<std::uint32_t>(seed),
             static_cast<std::uint32_t>(seed >> 32)},
        counter_{0, 0, static_cast<std::uint32_t>(stream),
                 static_cast<std::uint32_t>(stream >> 32)} {}

  std::uint32_t next_u32() {
    if (pos_ == 4) refill();
    return block_[pos_++];
  }

  std::uint64_t next_u64() {
    const std::uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }

  // 53-bit uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

  std::size_t uniform_index(std::size_t n) {
    return static_cast<std::size_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

 private:
  static std::uint32_t mulhi(std::uint32_t a, std::uint32_t b) {
    return static_cast<std::uint32_t>(
        (static_cast<std::uint64_t>(a) * b) >> 32);
  }
  static std::uint32_t mullo(std::uint32_t a, std::uint32_t b) {
    return a * b;
  }

  void refill() {
    std::array<std::uint32_t, 4> ctr = counter_;
    std::array<std::uint32_t, 2> key = key_;
    for (int round = 0; round < 10; ++round) {
      const std::uint32_t hi0 = mulhi(0xD2511F53u, ctr[0]);
      const std::uint32_t lo0 = mullo(0xD2511F53u, ctr[0]);
      const std::uint32_t hi1 = mulhi(0xCD9E8D57u, ctr[2]);
      const std::uint32_t lo1 = mullo(0xCD9E8D57u, ctr[2]);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
      key[0] += 0x9E3779B9u;
      key[1] += 0xBB67AE85u;
    }
    block_ = ctr;
    pos_ = 0;
    if (++counter_[0] == 0) ++counter_[1];
  }

  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> counter_;
  std::array<std::uint32_t, 4> block_{};
  int pos_ = 4;
};

// 95% normal-approximation half-width from batch means.
inline double ci_halfwidth(const std::vector<double>& batch_means) {
  if (batch_means.size() < 10)
    throw std::invalid_argument("batch-means CI needs at least 10 batches");
  const double n = static_cast<double>(batch_means.size());
  double mean = 0.0;
  for (double m : batch_means) mean += m;
  mean /= n;
  double var = 0.0;
  for (double m : batch_means) var += (m - mean) * (m - mean);
  var /= n - 1.0;
  return 1.96 * std::sqrt(var / n);
}

struct SimOptions {
  int batches = 30;
  double warmup_fraction = 0.02;
  std::uint64_t stream = 0;
};

struct SimResult {
  std::vector<std::vector<double>> bp;  // [o][k]
  double overall_bp = 0.0;
  double ci = 0.0;                      // overall-BP half-width
  std::vector<std::vector<double>> ci_per_class;  // [o][k] half-widths
  std::vector<double> batch_means;
  std::vector<std::vector<std::vector<double>>> class_batch_means;  // [o][k][]
  std::vector<std::vector<std::int64_t>> offered;  // [o][k], post warm-up
  std::vector<std::vector<std::int64_t>> blocked;
  std::int64_t requests = 0;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  std::string rng = Philox4x32::kName;
};

// Discrete-event simulation of Poisson arrivals with exponential holding,
// allocating through the same rules as the exact chain. Blocked requests
// are lost. Deterministic for a given (seed, stream).
inline SimResult run_sim(const ScenarioConfig& at_load, SimOptions opts = {}) {
  const auto& cfg = at_load;
  const int num_od = cfg.num_od_pairs();
  const int num_classes = cfg.num_classes();

  SimResult result;
  result.requests = cfg.requests;
  result.seed = cfg.seed;
  result.stream = opts.stream;
  result.bp.assign(num_od, std::vector<double>(num_classes, 0.0));
  result.ci_per_class = result.bp;
  result.offered.assign(num_od, std::vector<std::int64_t>(num_classes, 0));
  result.blocked = result.offered;

  // Categorical arrival sampling over (o, k).
  std::vector<double> cumulative;
  std::vector<std::pair<int, int>> kinds;
  double total_rate = 0.0;
  for (int o = 0; o < num_od; ++o)
    for (int k = 0; k < num_classes; ++k) {
      const double rate = cfg.rate(o, k);
      if (rate <= 0.0) continue;
      total_rate += rate;
      cumulative.push_back(total_rate);
      kinds.push_back({o, k});
    }
  if (total_rate <= 0.0) return result;

  AllocationRules rules(cfg.topology, cfg.classes, cfg.od_pairs);
  NetworkState state = rules.empty_state();
  Philox4x32 rng(cfg.seed, opts.stream);

  struct Active {
    int od = 0, cls = 0;
    Placement placement;
  };
  std::vector<Active> slots;
  std::vector<int> free_slots;

  struct Departure {
    double time;
    std::int64_t seq;  // deterministic tie-break
    int slot;
    bool operator>(const Departure& other) const {
      return std::tie(time, seq) > std::tie(other.time, other.seq);
    }
  };
  std::priority_queue<Departure, std::vector<Departure>, std::greater<>> queue;

  const std::int64_t warmup =
      static_cast<std::int64_t>(cfg.requests * opts.warmup_fraction);
  const std::int64_t counted_total = cfg.requests - warmup;
  const int num_batches = opts.batches;
  std::vector<std::int64_t> batch_offered(num_batches, 0);
  std::vector<std::int64_t> batch_blocked(num_batches, 0);
  // Per-(o,k) batch counters for the per-estimate half-widths.
  const int num_kinds = num_od * num_classes;
  std::vector<std::int64_t> batch_offered_ok(
      static_cast<std::size_t>(num_batches) * num_kinds, 0);
  std::vector<std::int64_t> batch_blocked_ok(batch_offered_ok);

  double now = 0.0;
  double next_arrival = rng.exponential(total_rate);
  std::int64_t arrivals = 0;
  std::int64_t seq = 0;

  while (arrivals < cfg.requests) {
    if (!queue.empty() && queue.top().time <= next_arrival) {
      const auto dep = queue.top();
      queue.pop();
      now = dep.time;
      const auto& conn = slots[dep.slot];
      rules.remove(state, conn.od, conn.cls, conn.placement);
      free_slots.push_back(dep.slot);
      continue;
    }
    now = next_arrival;
    next_arrival = now + rng.exponential(total_rate);

    const double pick = rng.uniform() * total_rate;
    const std::size_t which =
        std::lower_bound(cumulative.begin(), cumulative.end(), pick) -
        cumulative.begin();
    const auto [o, k] = kinds[std::min(which, kinds.size() - 1)];

    const std::int64_t counted_index = arrivals - warmup;
    ++arrivals;
    const bool counted = counted_index >= 0;
    const int batch =
        counted ? static_cast<int>(counted_index * num_batches / counted_total)
                : 0;
    if (counted) {
      ++result.offered[o][k];
      ++batch_offered[batch];
      ++batch_offered_ok[static_cast<std::size_t>(batch) * num_kinds +
                         o * num_classes + k];
    }

    auto placement = rules.sample_arrival(state, o, k, cfg.mode, rng);
    if (!placement) {
      if (counted) {
        ++result.blocked[o][k];
        ++batch_blocked[batch];
        ++batch_blocked_ok[static_cast<std::size_t>(batch) * num_kinds +
                           o * num_classes + k];
      }
      continue;
    }
    rules.apply(state, o, k, *placement);
    int slot;
    if (free_slots.empty()) {
      slot = static_cast<int>(slots.size());
      slots.push_back({o, k, *placement});
    } else {
      slot = free_slots.back();
      free_slots.pop_back();
      slots[slot] = {o, k, *placement};
    }
    queue.push({now + rng.exponential(cfg.classes[k].holding_rate), seq++,
                slot});
  }

  std::int64_t offered_sum = 0, blocked_sum = 0;
  for (int o = 0; o < num_od; ++o)
    for (int k = 0; k < num_classes; ++k) {
      offered_sum += result.offered[o][k];
      blocked_sum += result.blocked[o][k];
      if (result.offered[o][k] > 0)
        result.bp[o][k] = static_cast<double>(result.blocked[o][k]) /
                          static_cast<double>(result.offered[o][k]);
    }
  if (offered_sum > 0)
    result.overall_bp =
        static_cast<double>(blocked_sum) / static_cast<double>(offered_sum);
  for (int b = 0; b < num_batches; ++b)
    if (batch_offered[b] > 0)
      result.batch_means.push_back(static_cast<double>(batch_blocked[b]) /
                                   static_cast<double>(batch_offered[b]));
  if (result.batch_means.size() >= 10)
    result.ci = ci_halfwidth(result.batch_means);
  result.class_batch_means.assign(
      num_od, std::vector<std::vector<double>>(num_classes));
  for (int o = 0; o < num_od; ++o)
    for (int k = 0; k < num_classes; ++k) {
      auto& means = result.class_batch_means[o][k];
      for (int b = 0; b < num_batches; ++b) {
        const auto idx =
            static_cast<std::size_t>(b) * num_kinds + o * num_classes + k;
        if (batch_offered_ok[idx] > 0)
          means.push_back(static_cast<double>(batch_blocked_ok[idx]) /
                          static_cast<double>(batch_offered_ok[idx]));
      }
      if (means.size() >= 10) result.ci_per_class[o][k] = ci_halfwidth(means);
    }
  return result;
}

// Pool independent replications (distinct streams) into one estimate.
inline SimResult merge_replications(const std::vector<SimResult>& runs) {
  if (runs.empty()) throw std::invalid_argument("no replications to merge");
  SimResult merged = runs.front();
  for (std::size_t r = 1; r < runs.size(); ++r) {
    const auto& run = runs[r];
    merged.requests += run.requests;
    merged.batch_means.insert(merged.batch_means.end(),
                              run.batch_means.begin(), run.batch_means.end());
    for (std::size_t o = 0; o < merged.offered.size(); ++o)
      for (std::size_t k = 0; k < merged.offered[o].size(); ++k) {
        merged.offered[o][k] += run.offered[o][k];
        merged.blocked[o][k] += run.blocked[o][k];
        auto& pooled = merged.class_batch_means[o][k];
        const auto& extra = run.class_batch_means[o][k];
        pooled.insert(pooled.end(), extra.begin(), extra.end());
      }
  }
  std::int64_t offered_sum = 0, blocked_sum = 0;
  for (std::size_t o = 0; o < merged.offered.size(); ++o)
    for (std::size_t k = 0; k < merged.offered[o].size(); ++k) {
      offered_sum += merged.offered[o][k];
      blocked_sum += merged.blocked[o][k];
      merged.bp[o][k] =
          merged.offered[o][k] > 0
              ? static_cast<double>(merged.blocked[o][k]) /
                    static_cast<double>(merged.offered[o][k])
              : 0.0;
      merged.ci_per_class[o][k] =
          merged.class_batch_means[o][k].size() >= 10
              ? ci_halfwidth(merged.class_batch_means[o][k])
              : 0.0;
    }
  merged.overall_bp = offered_sum > 0 ? static_cast<double>(blocked_sum) /
                                            static_cast<double>(offered_sum)
                                      : 0.0;
  merged.ci = merged.batch_means.size() >= 10
                  ? ci_halfwidth(merged.batch_means)
                  : 0.0;
  return merged;
}

}  // namespace eonbp
