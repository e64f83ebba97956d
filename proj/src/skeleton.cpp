#include "spt/skeleton.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "spt/errors.hpp"
#include "spt/io.hpp"

namespace spt {
namespace {

JointPair ordered(JointPair p) { return p.first <= p.second ? p : JointPair{p.second, p.first}; }

std::string pair_text(JointPair p) {
  return "{" + std::to_string(p.first) + "," + std::to_string(p.second) + "}";
}

}  // namespace

std::optional<std::size_t> SkeletonSpec::find(const std::string& name) const {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names.begin());
}

std::vector<std::string> validate_spec(const SkeletonSpec& spec) {
  std::vector<std::string> violations;
  const std::size_t j = spec.joint_count;
  if (j == 0) violations.push_back("joint_count must be positive");
  if (spec.names.size() != j) {
    violations.push_back("expected " + std::to_string(j) + " joint names, got " + std::to_string(spec.names.size()));
  }
  if (!spec.template_pose.empty() && spec.template_pose.size() != j) {
    violations.push_back("template has " + std::to_string(spec.template_pose.size()) + " points, expected " +
                         std::to_string(j));
  }

  std::set<JointPair> seen_edges;
  for (const auto& e : spec.edges) {
    if (e.first >= j || e.second >= j) {
      violations.push_back("edge " + pair_text(e) + " references a joint outside [0," + std::to_string(j) + ")");
    } else if (e.first == e.second) {
      violations.push_back("self-edge at joint " + std::to_string(e.first));
    } else if (!seen_edges.insert(ordered(e)).second) {
      violations.push_back("duplicate edge " + pair_text(ordered(e)));
    }
  }

  std::set<JointPair> seen_pairs;
  std::vector<int> partner_count(j, 0);
  for (const auto& p : spec.symmetric_pairs) {
    if (p.first >= j || p.second >= j) {
      violations.push_back("symmetric pair " + pair_text(p) + " references a joint outside [0," +
                           std::to_string(j) + ")");
      continue;
    }
    if (p.first == p.second) {
      violations.push_back("self-pair at joint " + std::to_string(p.first));
      continue;
    }
    if (!seen_pairs.insert(ordered(p)).second) {
      violations.push_back("duplicate symmetric pair " + pair_text(ordered(p)));
      continue;
    }
    for (auto joint : {p.first, p.second}) {
      if (++partner_count[joint] == 2) {
        violations.push_back("joint " + std::to_string(joint) + " appears in more than one symmetric pair");
      }
    }
  }
  return violations;
}

SkeletonSpec mpii_skeleton() {
  SkeletonSpec s;
  s.joint_count = 16;
  s.names = {"r-ankle",    "r-knee",   "r-hip",   "l-hip",      "l-knee",     "l-ankle",  "pelvis",  "thorax",
             "upper-neck", "head-top", "r-wrist", "r-elbow",    "r-shoulder", "l-shoulder", "l-elbow", "l-wrist"};
  s.edges = {{0, 1},  {1, 2},  {2, 6},  {3, 6},   {3, 4},   {4, 5},   {6, 7},  {7, 8},
             {8, 9},  {10, 11}, {11, 12}, {12, 7}, {13, 7}, {13, 14}, {14, 15}};
  s.symmetric_pairs = {{0, 5}, {1, 4}, {2, 3}, {10, 15}, {11, 14}, {12, 13}};
  // Frontal figure: the subject's right side appears on the image's left.
  s.template_pose = {{0.39, 0.92}, {0.40, 0.74}, {0.42, 0.56}, {0.58, 0.56}, {0.60, 0.74}, {0.61, 0.92},
                     {0.50, 0.55}, {0.50, 0.30}, {0.50, 0.24}, {0.50, 0.08}, {0.22, 0.58}, {0.28, 0.44},
                     {0.36, 0.30}, {0.64, 0.30}, {0.72, 0.44}, {0.78, 0.58}};
  return s;
}

SkeletonSpec toy_skeleton() {
  SkeletonSpec s;
  s.joint_count = 5;
  s.names = {"head-top", "upper-neck", "pelvis", "r-wrist", "l-wrist"};
  s.edges = {{0, 1}, {1, 2}, {1, 3}, {1, 4}};
  s.symmetric_pairs = {{3, 4}};
  s.template_pose = {{0.50, 0.12}, {0.50, 0.32}, {0.50, 0.72}, {0.20, 0.55}, {0.80, 0.55}};
  return s;
}

SkeletonSpec resolve_skeleton(const std::string& ref) {
  if (ref == "builtin:mpii") return mpii_skeleton();
  if (ref == "builtin:toy") return toy_skeleton();
  return load_skeleton(ref);
}

JointMask compile_joint_mask(const SkeletonSpec& spec) {
  const auto violations = validate_spec(spec);
  if (!violations.empty()) {
    std::ostringstream msg;
    msg << "invalid skeleton spec:";
    for (const auto& v : violations) msg << "\n  - " << v;
    throw ValidationError(msg.str());
  }
  const std::size_t j = spec.joint_count;
  std::vector<std::uint8_t> bits(j * j, 0);
  for (std::size_t i = 0; i < j; ++i) bits[i * j + i] = 1;
  auto connect = [&](const JointPair& p) {
    bits[p.first * j + p.second] = 1;
    bits[p.second * j + p.first] = 1;
  };
  for (const auto& e : spec.edges) connect(e);
  for (const auto& p : spec.symmetric_pairs) connect(p);
  return JointMask(AttentionMask::from_bits(j, j, std::move(bits)));
}

JointMask dense_joint_mask(std::size_t joints) { return JointMask(AttentionMask::ones(joints, joints)); }
JointMask identity_joint_mask(std::size_t joints) { return JointMask(AttentionMask::identity(joints)); }

void to_json(nlohmann::json& j, const SkeletonSpec& spec) {
  auto pairs = [](const std::vector<JointPair>& v) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : v) arr.push_back({p.first, p.second});
    return arr;
  };
  j = nlohmann::json{{"joint_count", spec.joint_count},
                     {"names", spec.names},
                     {"edges", pairs(spec.edges)},
                     {"symmetric_pairs", pairs(spec.symmetric_pairs)}};
  if (!spec.template_pose.empty()) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& [x, y] : spec.template_pose) pts.push_back({x, y});
    j["template"] = pts;
  }
}

void from_json(const nlohmann::json& j, SkeletonSpec& spec) {
  auto pairs = [](const nlohmann::json& arr) {
    std::vector<JointPair> out;
    for (const auto& p : arr) {
      if (!p.is_array() || p.size() != 2) throw ValidationError("joint pairs must be [i, j] arrays");
      out.emplace_back(p[0].get<std::size_t>(), p[1].get<std::size_t>());
    }
    return out;
  };
  spec.joint_count = j.at("joint_count").get<std::size_t>();
  spec.names = j.at("names").get<std::vector<std::string>>();
  spec.edges = pairs(j.at("edges"));
  spec.symmetric_pairs = pairs(j.at("symmetric_pairs"));
  spec.template_pose.clear();
  if (j.contains("template")) {
    for (const auto& p : j.at("template")) spec.template_pose.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
  }
}

SkeletonSpec load_skeleton(const std::filesystem::path& path) {
  const auto text = read_text_file(path);
  try {
    return nlohmann::json::parse(text).get<SkeletonSpec>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void save_skeleton(const std::filesystem::path& path, const SkeletonSpec& spec) {
  write_text_file(path, nlohmann::json(spec).dump(2) + "\n");
}

}  // namespace spt
