#include <filesystem>

#include "doctest.h"
#include "spt/data.hpp"
#include "spt/errors.hpp"
#include "spt/io.hpp"

using namespace spt;

namespace {

SyntheticSceneConfig toy_scene() {
  SyntheticSceneConfig s;
  s.shift = 4;
  s.jitter = 1;
  return s;
}

Annotation single_joint(double x, double y, bool visible = true) {
  Annotation a;
  a.joints = {{x, y}};
  a.visible = {visible};
  a.head_size = 4.0;
  a.image = std::string("a.pgm");
  return a;
}

}  // namespace

TEST_CASE("synthetic samples are deterministic per index") {
  const auto scene = toy_scene();
  const auto skel = toy_skeleton();
  const auto a = generate_sample(scene, skel, 17), b = generate_sample(scene, skel, 17);
  CHECK(a.annotation == b.annotation);
  CHECK(std::equal(a.image.data().begin(), a.image.data().end(), b.image.data().begin()));
  const auto batch = generate_synthetic(scene, 3, 16);
  CHECK(batch[1].annotation == a.annotation);
  auto other = scene;
  other.seed = 2;
  CHECK_FALSE(generate_sample(other, skel, 17).annotation == a.annotation);
}

TEST_CASE("zero shift and jitter reproduce the template pose") {
  auto scene = toy_scene();
  scene.shift = 0;
  scene.jitter = 0;
  const auto skel = toy_skeleton();
  for (std::uint64_t i = 0; i < 5; ++i) {
    const auto s = generate_sample(scene, skel, i);
    for (std::size_t j = 0; j < skel.joint_count; ++j) {
      CHECK(s.annotation.joints[j].first == std::lround(skel.template_pose[j].first * 31));
      CHECK(s.annotation.joints[j].second == std::lround(skel.template_pose[j].second * 31));
    }
  }
}

TEST_CASE("synthetic images peak at visible joints") {
  auto scene = toy_scene();
  scene.occlusion = 0.3;
  std::size_t hidden = 0;
  for (const auto& s : generate_synthetic(scene, 40)) {
    CHECK(s.image.shape() == Shape{1, 32, 32});
    CHECK(validate_annotation(s.annotation, 32, 32).empty());
    for (double v : s.image.data()) CHECK((v >= 0.0 && v <= 1.0));
    for (std::size_t j = 0; j < s.annotation.joints.size(); ++j) {
      const auto [x, y] = s.annotation.joints[j];
      const double v = s.image[static_cast<std::size_t>(y) * 32 + static_cast<std::size_t>(x)];
      if (s.annotation.visible[j]) CHECK(v == 1.0);
      else ++hidden;
    }
    CHECK(s.annotation.head_size >= 1.0);
  }
  CHECK(hidden > 0);
}

TEST_CASE("target heatmaps") {
  SUBCASE("invisible joint gives a zero map") {
    const auto t = render_target_heatmaps(single_joint(10, 10, false), 32, 32, 16, 16, 1.0);
    for (double v : t.data()) CHECK(v == 0.0);
  }
  SUBCASE("peak 1 at the scaled coordinate") {
    const auto t = render_target_heatmaps(single_joint(12, 20), 32, 32, 16, 16, 1.0);
    CHECK(t.shape() == Shape{1, 16, 16});
    CHECK(t[10 * 16 + 6] == 1.0);
    const auto best = std::max_element(t.data().begin(), t.data().end()) - t.data().begin();
    CHECK(best == 10 * 16 + 6);
  }
  SUBCASE("mass of an interior Gaussian is 2 pi sigma^2") {
    const auto t = render_target_heatmaps(single_joint(32, 32), 64, 64, 32, 32, 2.0);
    double total = 0.0;
    for (double v : t.data()) total += v;
    CHECK(total == doctest::Approx(2.0 * M_PI * 4.0).epsilon(0.02));
  }
  SUBCASE("fractional center peaks at the nearest pixel") {
    const auto t = render_target_heatmaps(single_joint(9.4, 5.8), 16, 16, 16, 16, 1.5);
    const auto best = std::max_element(t.data().begin(), t.data().end()) - t.data().begin();
    CHECK(best == 6 * 16 + 9);
  }
}

TEST_CASE("annotation validation") {
  auto a = single_joint(3, 4);
  CHECK(validate_annotation(a).empty());
  a.head_size = 0.0;
  CHECK_FALSE(validate_annotation(a).empty());
  a = single_joint(32, 4);
  CHECK(validate_annotation(a).empty());
  CHECK_FALSE(validate_annotation(a, 32, 32).empty());
  CHECK(validate_annotation(single_joint(32, 4, false), 32, 32).empty());
  a = single_joint(3, 4);
  a.visible.push_back(true);
  CHECK_FALSE(validate_annotation(a).empty());
}

TEST_CASE("annotation JSON") {
  CHECK(parse_annotations("[]").empty());

  std::vector<Annotation> anns{single_joint(1.5, 2.25), single_joint(3, 4, false)};
  anns[1].image = SyntheticRef{3, 9};
  const nlohmann::json j = anns;
  CHECK(parse_annotations(j.dump()) == anns);

  const auto dir = std::filesystem::temp_directory_path() / "spt_test_annotations";
  std::filesystem::create_directories(dir);
  save_annotations(dir / "a.json", anns);
  CHECK(load_annotations(dir / "a.json") == anns);
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(load_annotations(dir / "a.json"), IoError);

  nlohmann::json bad = anns;
  bad[1]["head_size"] = 0;
  try {
    parse_annotations(bad.dump(), "bad.json");
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("record 1") != std::string::npos);
  }
  try {
    parse_annotations("[\n {\"joints\": [[1, 2]],\n  \"visible\": [true] \"x\"}]", "broken.json");
    FAIL("expected a parse error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("broken.json:3:") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_annotations("{}"), ValidationError);
}

TEST_CASE("datasets round trip through disk") {
  const auto dir = std::filesystem::temp_directory_path() / "spt_test_dataset";
  std::filesystem::remove_all(dir);
  const auto samples = generate_synthetic(toy_scene(), 6, 100);
  const auto digest = write_dataset(dir, samples);
  CHECK(digest == dataset_digest(samples));
  CHECK(std::filesystem::exists(dir / "images" / "000000.pgm"));
  const auto loaded = load_dataset(dir);
  REQUIRE(loaded.size() == 6);
  CHECK(dataset_digest(loaded) == digest);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(loaded[i].annotation.joints == samples[i].annotation.joints);
    // PGM stores 8 bits per pixel.
    double worst = 0.0;
    for (std::size_t k = 0; k < samples[i].image.size(); ++k)
      worst = std::max(worst, std::abs(loaded[i].image[k] - samples[i].image[k]));
    CHECK(worst <= 0.5 / 255.0 + 1e-12);
  }

  auto reseeded = toy_scene();
  reseeded.seed = 5;
  CHECK(dataset_digest(generate_synthetic(reseeded, 6, 100)) != digest);

  // Synthetic references regenerate from the scene.
  nlohmann::json refs = nlohmann::json::array();
  for (const auto& s : samples) {
    nlohmann::json a = s.annotation;
    refs.push_back(a);
  }
  write_text_file(dir / "refs.json", refs.dump());
  const auto scene = toy_scene();
  const auto regenerated = load_dataset(dir / "refs.json", &scene);
  CHECK(dataset_digest(regenerated) == digest);
  CHECK_THROWS_AS(load_dataset(dir / "refs.json"), ValidationError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("training samples") {
  ModelConfig c;
  c.image_h = c.image_w = 32;
  c.channels = 1;
  c.pool = 1;
  c.joint_count = 5;
  c.heatmap_h = c.heatmap_w = 16;
  const auto samples = generate_synthetic(toy_scene(), 2);
  const auto t = make_training_samples(samples, c, 0.5);
  CHECK(t[0].target.shape() == Shape{5, 16, 16});
  CHECK(t[0].visible.size() == 5);
  c.joint_count = 4;
  CHECK_THROWS(make_training_samples(samples, c, 0.5));
  c.joint_count = 5;
  c.channels = 3;
  CHECK_THROWS(make_training_samples(samples, c, 0.5));
}

TEST_CASE("scene config") {
  auto s = toy_scene();
  s.validate();
  const nlohmann::json j = s;
  CHECK(nlohmann::json(j.get<SyntheticSceneConfig>()) == j);
  s.occlusion = 1.5;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  nlohmann::json bad = j;
  bad["colour"] = 1;
  CHECK_THROWS_AS(bad.get<SyntheticSceneConfig>(), ConfigError);
}
