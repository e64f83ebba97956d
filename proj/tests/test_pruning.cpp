#include <cmath>

#include "doctest.h"
#include "spt/errors.hpp"
#include "spt/pruning.hpp"
#include "test_support.hpp"

using namespace spt;
using spt::testing::random_tensor;

namespace {

Tensor row(std::vector<double> v) {
  const auto n = v.size();
  return Tensor({1, n}, std::move(v));
}

std::vector<std::uint8_t> bits_of(const AttentionMask& m) { return {m.bits().begin(), m.bits().end()}; }

// Record whose head average is `avg`; only the average is read by the schedule.
AttentionRecord record_of(const Tensor& avg) {
  const std::vector<Tensor> one{avg};
  return AttentionRecord{stack(one), avg};
}

// Random attention-like map supported exactly on `support`, coarsely
// quantized so that ties occur.
Tensor random_attention(const AttentionMask& support, Rng& rng, int levels = 0) {
  const std::size_t n = support.rows(), m = support.cols();
  std::vector<double> v(n * m, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < m; ++c) {
      if (!support.at(r, c)) continue;
      double x = rng.uniform();
      if (levels > 0) x = std::floor(x * levels) / levels;
      v[r * m + c] = x;
    }
  }
  return Tensor({n, m}, std::move(v));
}

}  // namespace

TEST_CASE("keep_count") {
  CHECK(keep_count(10, 10, 0.6, KMode::support_relative) == 6);
  CHECK(keep_count(36, 100, 0.6, KMode::support_relative) == 22);  // 21.6 -> 22
  CHECK(keep_count(5, 5, 0.5, KMode::support_relative) == 3);      // half away from zero
  CHECK(keep_count(3, 3, 0.01, KMode::support_relative) == 1);     // floor at one
  CHECK(keep_count(60, 100, 0.6, KMode::n_relative) == 60);        // fixed K = round(0.6 * 100)
  CHECK(keep_count(30, 100, 0.6, KMode::n_relative) == 30);        // capped by support
  CHECK_THROWS_AS(keep_count(3, 3, 0.0, KMode::support_relative), ConfigError);
  CHECK_THROWS_AS(keep_count(3, 3, 1.5, KMode::support_relative), ConfigError);
}

TEST_CASE("topk_row_mask examples") {
  SUBCASE("top two of ordered values") {
    const auto m = topk_row_mask(row({0.5, 0.3, 0.15, 0.05}), AttentionMask::ones(1, 4), 0.5);
    CHECK(bits_of(m) == std::vector<std::uint8_t>{1, 1, 0, 0});
  }
  SUBCASE("keep-all ratio returns the previous mask") {
    Rng rng(1);
    const auto prev = topk_row_mask(random_tensor({6, 6}, rng, 0, 1), AttentionMask::ones(6, 6), 0.5);
    CHECK(topk_row_mask(random_tensor({6, 6}, rng, 0, 1), prev, 1.0) == prev);
  }
  SUBCASE("ties go to the lower column") {
    // K = max(1, round(0.34 * 3)) = 1; columns 0 and 1 tie.
    const auto m = topk_row_mask(row({0.4, 0.4, 0.2}), AttentionMask::ones(1, 3), 0.34);
    CHECK(bits_of(m) == std::vector<std::uint8_t>{1, 0, 0});
  }
  SUBCASE("only previously kept columns compete") {
    const auto prev = AttentionMask::from_bits(1, 4, {0, 1, 1, 1});
    const auto m = topk_row_mask(row({0.9, 0.1, 0.5, 0.3}), prev, 0.5);
    CHECK(bits_of(m) == std::vector<std::uint8_t>{0, 0, 1, 1});
  }
  SUBCASE("ratio outside (0, 1]") {
    CHECK_THROWS_AS(topk_row_mask(row({1.0}), AttentionMask::ones(1, 1), 0.0), ConfigError);
    CHECK_THROWS_AS(topk_row_mask(row({1.0}), AttentionMask::ones(1, 1), 1.01), ConfigError);
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(topk_row_mask(row({1.0, 2.0}), AttentionMask::ones(1, 3), 0.5), DimensionError);
  }
}

TEST_CASE("topk_row_mask properties") {
  Rng rng(404);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 1 + rng.below(12);
    const double akr = rng.uniform(0.01, 1.0);
    auto prev = AttentionMask::ones(n, n);
    if (rng.uniform() < 0.5) prev = topk_row_mask(random_attention(prev, rng), prev, rng.uniform(0.2, 1.0));
    const auto scores = random_attention(prev, rng, 4);
    const auto next = topk_row_mask(scores, prev, akr);

    CHECK(next.is_subset_of(prev));
    CHECK(topk_row_mask(scores, prev, akr) == next);
    for (std::size_t r = 0; r < n; ++r) {
      CHECK(next.row_support(r) >= 1);
      CHECK(next.row_support(r) == keep_count(prev.row_support(r), n, akr, KMode::support_relative));
      for (std::size_t kept = 0; kept < n; ++kept) {
        if (!next.at(r, kept)) continue;
        for (std::size_t dropped = 0; dropped < n; ++dropped) {
          if (!prev.at(r, dropped) || next.at(r, dropped)) continue;
          const double a = scores.at(r, kept), b = scores.at(r, dropped);
          CHECK(a >= b);
          if (a == b) CHECK(kept < dropped);
        }
      }
    }
  }
  SUBCASE("all-equal rows keep support") {
    for (double akr : {0.01, 0.3, 1.0}) {
      auto state = AttentionMask::ones(5, 5);
      for (int stage = 0; stage < 6; ++stage) {
        state = topk_row_mask(Tensor::full({5, 5}, 0.2), state, akr);
        for (std::size_t r = 0; r < 5; ++r) CHECK(state.row_support(r) >= 1);
      }
    }
  }
}

TEST_CASE("apply_schedule") {
  Rng rng(9);
  PruneSchedule schedule;
  schedule.akr = 0.6;

  SUBCASE("non-update layer") {
    const auto state = MaskState::initial(10);
    const auto rec = record_of(random_attention(AttentionMask::ones(10, 10), rng));
    const auto next = apply_schedule(2, &rec, state, schedule);
    CHECK(next.stage == 0);
    CHECK(next.current == state.current);
    CHECK(apply_schedule(2, nullptr, state, schedule).stage == 0);
  }
  SUBCASE("update layer with ten tokens") {
    const auto rec = record_of(random_attention(AttentionMask::ones(10, 10), rng));
    const auto next = apply_schedule(3, &rec, MaskState::initial(10), schedule);
    CHECK(next.stage == 1);
    for (std::size_t r = 0; r < 10; ++r) CHECK(next.current.row_support(r) == 6);
  }
  SUBCASE("iterated updates shrink 100 -> 60 -> 36 -> 22") {
    // Oracle: s_{t+1} = round(0.6 * s_t).
    std::vector<std::size_t> expected{100};
    for (int i = 0; i < 3; ++i) expected.push_back(static_cast<std::size_t>(std::round(0.6 * expected.back())));
    CHECK(expected == std::vector<std::size_t>{100, 60, 36, 22});

    auto state = MaskState::initial(100);
    for (std::size_t layer = 1; layer <= 12; ++layer) {
      const auto rec = record_of(random_attention(state.current, rng));
      const auto before = state.current;
      state = apply_schedule(layer, &rec, state, schedule);
      CHECK(state.current.is_subset_of(before));
    }
    REQUIRE(state.stage == 3);
    for (std::size_t s = 0; s <= 3; ++s) {
      for (std::size_t r = 0; r < 100; ++r) CHECK(state.snapshots[s].row_support(r) == expected[s]);
      CHECK(state.history[s] == 100 * expected[s]);
    }
  }
  SUBCASE("visual block offset") {
    // 2 keypoint tokens precede 4 visual tokens; keypoint columns hold the largest values.
    std::vector<double> avg(36, 0.0);
    for (std::size_t r = 0; r < 6; ++r) {
      avg[r * 6 + 0] = 0.9;
      avg[r * 6 + 1] = 0.9;
      avg[r * 6 + 2 + (5 - r) % 4] = 0.5;
    }
    const auto rec = record_of(Tensor({6, 6}, avg));
    PruneSchedule s;
    s.update_layers = {1};
    s.akr = 0.25;
    const auto next = apply_schedule(1, &rec, MaskState::initial(4), s, 2);
    for (std::size_t r = 0; r < 4; ++r) {
      CHECK(next.current.row_support(r) == 1);
      CHECK(next.current.at(r, (5 - (r + 2)) % 4));
    }
  }
  SUBCASE("missing record at an update layer") {
    CHECK_THROWS_AS(apply_schedule(3, nullptr, MaskState::initial(4), schedule), ContractError);
  }
  SUBCASE("n-relative makes later updates vacuous") {
    PruneSchedule fixed = schedule;
    fixed.k_mode = KMode::n_relative;
    auto state = MaskState::initial(100);
    for (std::size_t layer = 1; layer <= 12; ++layer) {
      const auto rec = record_of(random_attention(state.current, rng));
      state = apply_schedule(layer, &rec, state, fixed);
    }
    CHECK(state.history == std::vector<std::size_t>{10000, 6000, 6000, 6000});
  }
}

TEST_CASE("schedule validation") {
  PruneSchedule s;
  CHECK_NOTHROW(s.validate(12));
  CHECK_THROWS_AS(s.validate(8), ConfigError);
  s.update_layers = {3, 3};
  CHECK_THROWS_AS(s.validate(12), ConfigError);
  s.update_layers = {0};
  CHECK_THROWS_AS(s.validate(12), ConfigError);
  s.update_layers = {2};
  s.akr = 0.0;
  CHECK_THROWS_AS(s.validate(12), ConfigError);
  CHECK(parse_k_mode("n-relative") == KMode::n_relative);
  CHECK_THROWS_AS(parse_k_mode("bogus"), ConfigError);
}

TEST_CASE("sparsity_report") {
  Rng rng(5);
  auto run = [&](std::size_t n, const PruneSchedule& s, std::size_t layers) {
    auto state = MaskState::initial(n);
    for (std::size_t layer = 1; layer <= layers; ++layer) {
      const auto rec = record_of(random_attention(state.current, rng));
      state = apply_schedule(layer, &rec, state, s);
    }
    return state;
  };
  SUBCASE("keep-all") {
    PruneSchedule s;
    const auto stats = sparsity_report(run(20, s, 12), s, 12, 4, 8);
    CHECK(stats.stages == 3);
    for (double d : stats.per_stage_density) CHECK(d == 1.0);
    CHECK(stats.layer_weighted_density == 1.0);
    CHECK(stats.mac_ratio == 1.0);
  }
  SUBCASE("single halving update") {
    PruneSchedule s;
    s.update_layers = {1};
    s.akr = 0.5;
    const auto stats = sparsity_report(run(16, s, 2), s, 2);
    CHECK(stats.per_stage_density == std::vector<double>{1.0, 0.5});
  }
  SUBCASE("default schedule at N = 100") {
    PruneSchedule s;
    s.akr = 0.6;
    const auto stats = sparsity_report(run(100, s, 12), s, 12, 16, 192);
    // Per-layer densities: three layers each at 1.0, 0.60, 0.36, 0.22.
    const double oracle = (3 * 1.0 + 3 * 0.60 + 3 * 0.36 + 3 * 0.22) / 12;
    CHECK(std::abs(stats.layer_weighted_density - oracle) < 1e-12);
    CHECK(std::abs(stats.layer_weighted_density - 0.545) < 1e-12);
    // With 16 dense keypoint rows and columns: T = 116.
    const double t2 = 116.0 * 116.0, n2 = 100.0 * 100.0;
    const double sparse = 3 * t2 + 3 * (t2 - n2 + 6000) + 3 * (t2 - n2 + 3600) + 3 * (t2 - n2 + 2200);
    CHECK(stats.mac_ratio == doctest::Approx(sparse / (12 * t2)).epsilon(1e-12));
    CHECK(stats.dense_attention_macs == doctest::Approx(12 * 2 * 192 * t2));
  }
  nlohmann::json j = sparsity_report(MaskState::initial(4), PruneSchedule{}, 12);
  for (const char* key : {"stages", "per_stage_density", "layer_weighted_density", "mac_ratio"}) {
    CHECK(j.contains(key));
  }
}
