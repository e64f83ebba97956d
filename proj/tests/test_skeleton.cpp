#include <filesystem>
#include <set>

#include "doctest.h"
#include "spt/errors.hpp"
#include "spt/skeleton.hpp"
#include "test_support.hpp"

using namespace spt;

namespace {

SkeletonSpec bare(std::size_t j) {
  SkeletonSpec s;
  s.joint_count = j;
  for (std::size_t i = 0; i < j; ++i) s.names.push_back("j" + std::to_string(i));
  return s;
}

// Independent row-support recount straight from the edge and pair lists.
std::size_t expected_support(const SkeletonSpec& s, std::size_t i) {
  std::set<std::size_t> neighbours{i};
  for (const auto& [a, b] : s.edges) {
    if (a == i) neighbours.insert(b);
    if (b == i) neighbours.insert(a);
  }
  for (const auto& [a, b] : s.symmetric_pairs) {
    if (a == i) neighbours.insert(b);
    if (b == i) neighbours.insert(a);
  }
  return neighbours.size();
}

SkeletonSpec random_valid_spec(Rng& rng) {
  const std::size_t j = 2 + rng.below(14);
  auto s = bare(j);
  std::set<JointPair> edges;
  for (std::size_t t = rng.below(2 * j); t > 0; --t) {
    std::size_t a = rng.below(j), b = rng.below(j);
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    if (edges.insert({a, b}).second) s.edges.emplace_back(b, a);
  }
  std::vector<bool> used(j, false);
  for (std::size_t t = rng.below(j / 2 + 1); t > 0; --t) {
    const std::size_t a = rng.below(j), b = rng.below(j);
    if (a == b || used[a] || used[b]) continue;
    used[a] = used[b] = true;
    s.symmetric_pairs.emplace_back(a, b);
  }
  return s;
}

}  // namespace

TEST_CASE("compile_joint_mask examples") {
  SUBCASE("two joints, one edge") {
    auto s = bare(2);
    s.edges = {{0, 1}};
    const auto m = compile_joint_mask(s);
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j) CHECK(m.at(i, j));
  }
  SUBCASE("left shoulder keeps elbow, mirror shoulder, thorax and itself") {
    const auto s = mpii_skeleton();
    const auto m = compile_joint_mask(s);
    const auto shoulder = *s.find("l-shoulder");
    std::set<std::string> kept;
    for (std::size_t j = 0; j < 16; ++j)
      if (m.at(shoulder, j)) kept.insert(s.names[j]);
    CHECK(kept == std::set<std::string>{"l-shoulder", "l-elbow", "r-shoulder", "thorax"});
  }
  SUBCASE("MPII row supports match a recount") {
    const auto s = mpii_skeleton();
    const auto m = compile_joint_mask(s);
    for (std::size_t i = 0; i < 16; ++i) {
      std::size_t degree = 0, partner = 0;
      for (const auto& [a, b] : s.edges) degree += (a == i) + (b == i);
      for (const auto& [a, b] : s.symmetric_pairs) partner += (a == i) + (b == i);
      CHECK(m.mask().row_support(i) == 1 + degree + partner);
      CHECK(m.mask().row_support(i) == expected_support(s, i));
    }
  }
  SUBCASE("invalid spec lists each violation") {
    auto s = bare(3);
    s.edges = {{0, 0}, {1, 5}};
    try {
      compile_joint_mask(s);
      FAIL("expected a validation error");
    } catch (const ValidationError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("self-edge at joint 0") != std::string::npos);
      CHECK(msg.find("{1,5}") != std::string::npos);
    }
  }
}

TEST_CASE("validate_spec") {
  CHECK(validate_spec(mpii_skeleton()).empty());
  CHECK(validate_spec(toy_skeleton()).empty());

  auto s = bare(4);
  s.edges = {{0, 0}};
  CHECK(validate_spec(s) == std::vector<std::string>{"self-edge at joint 0"});

  s = bare(4);
  s.symmetric_pairs = {{0, 1}, {0, 2}};
  CHECK(validate_spec(s).size() == 1);

  s = bare(4);
  s.edges = {{0, 1}, {1, 0}};
  CHECK(validate_spec(s) == std::vector<std::string>{"duplicate edge {0,1}"});

  s = bare(4);
  s.names.pop_back();
  CHECK(validate_spec(s).size() == 1);
}

TEST_CASE("joint mask properties over random skeletons") {
  Rng rng(123);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = random_valid_spec(rng);
    REQUIRE(validate_spec(s).empty());
    const auto m = compile_joint_mask(s);
    const std::size_t j = s.joint_count;
    std::size_t ones = 0;
    for (std::size_t a = 0; a < j; ++a) {
      CHECK(m.at(a, a));
      CHECK(m.mask().row_support(a) == expected_support(s, a));
      for (std::size_t b = 0; b < j; ++b) {
        CHECK(m.at(a, b) == m.at(b, a));
        ones += m.at(a, b);
      }
    }
    const std::size_t bound = j + 2 * s.edges.size() + 2 * s.symmetric_pairs.size();
    CHECK(ones <= bound);
    std::set<JointPair> edge_set;
    for (auto [a, b] : s.edges) edge_set.insert({std::min(a, b), std::max(a, b)});
    bool disjoint = true;
    for (auto [a, b] : s.symmetric_pairs) disjoint = disjoint && !edge_set.count({std::min(a, b), std::max(a, b)});
    if (disjoint) CHECK(ones == bound);
    CHECK(compile_joint_mask(s) == m);
  }
}

TEST_CASE("skeleton files") {
  const auto path = std::filesystem::temp_directory_path() / "spt_skeleton.json";
  save_skeleton(path, mpii_skeleton());
  const auto back = load_skeleton(path);
  CHECK(back.names == mpii_skeleton().names);
  CHECK(back.edges == mpii_skeleton().edges);
  CHECK(back.template_pose == mpii_skeleton().template_pose);
  CHECK(compile_joint_mask(back) == compile_joint_mask(mpii_skeleton()));
  CHECK(resolve_skeleton(path.string()).joint_count == 16);
  CHECK(resolve_skeleton("builtin:toy").joint_count == 5);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_skeleton(path), IoError);
}
