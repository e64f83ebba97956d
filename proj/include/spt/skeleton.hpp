#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "spt/mask.hpp"

namespace spt {

using JointPair = std::pair<std::size_t, std::size_t>;

/// Articulated body: kinematic edges plus left/right symmetric pairs.
///
/// `template_pose`, when present, holds one normalized (x, y) in [0, 1] per
/// joint; the synthetic generator poses figures around it.
struct SkeletonSpec {
  std::size_t joint_count = 0;
  std::vector<std::string> names;
  std::vector<JointPair> edges;
  std::vector<JointPair> symmetric_pairs;
  std::vector<std::pair<double, double>> template_pose;

  std::optional<std::size_t> find(const std::string& name) const;
};

/// One human-readable message per broken invariant; empty when the spec is valid.
std::vector<std::string> validate_spec(const SkeletonSpec& spec);

/// The 16-joint MPII layout: r-ankle, r-knee, r-hip, l-hip, l-knee, l-ankle,
/// pelvis, thorax, upper-neck, head-top, r-wrist, r-elbow, r-shoulder,
/// l-shoulder, l-elbow, l-wrist.
SkeletonSpec mpii_skeleton();
/// Five joints (head-top, upper-neck, pelvis, r-wrist, l-wrist) for toy runs.
SkeletonSpec toy_skeleton();
/// "builtin:mpii", "builtin:toy", or a path to a skeleton JSON file.
SkeletonSpec resolve_skeleton(const std::string& ref);

/// Constant J x J mask: joint i attends to j iff i == j, {i, j} is an edge,
/// or {i, j} is a symmetric pair.
class JointMask {
 public:
  std::size_t joint_count() const noexcept { return mask_.rows(); }
  bool at(std::size_t i, std::size_t j) const { return mask_.at(i, j); }
  const AttentionMask& mask() const noexcept { return mask_; }

  friend bool operator==(const JointMask& a, const JointMask& b) { return a.mask_ == b.mask_; }

 private:
  explicit JointMask(AttentionMask mask) : mask_(std::move(mask)) {}
  AttentionMask mask_;
  friend JointMask compile_joint_mask(const SkeletonSpec& spec);
  friend JointMask dense_joint_mask(std::size_t joints);
  friend JointMask identity_joint_mask(std::size_t joints);
};

/// Throws ValidationError listing every violation when `spec` is invalid.
JointMask compile_joint_mask(const SkeletonSpec& spec);
/// All-ones mask; graph attention becomes plain self-attention.
JointMask dense_joint_mask(std::size_t joints);
/// Self-only mask; every keypoint token is isolated.
JointMask identity_joint_mask(std::size_t joints);

void to_json(nlohmann::json& j, const SkeletonSpec& spec);
void from_json(const nlohmann::json& j, SkeletonSpec& spec);
SkeletonSpec load_skeleton(const std::filesystem::path& path);
void save_skeleton(const std::filesystem::path& path, const SkeletonSpec& spec);

}  // namespace spt
