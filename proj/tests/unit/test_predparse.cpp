#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "geoperc/error.hpp"
#include "geoperc/predparse.hpp"
#include "test_util.hpp"

using namespace geoperc;
using namespace geoperc::testing;

namespace {

ParseDefect defect_of(auto&& fn) {
  try {
    fn();
  } catch (const ParseError& e) {
    return e.defect();
  }
  FAIL("expected a ParseError");
  return ParseDefect::no_json;
}

void check_array(const OrientedBox3& box, const std::array<double, 9>& expected) {
  const auto got = box.to_array();
  for (int i = 0; i < 9; ++i) CHECK(got[i] == expected[i]);
}

}  // namespace

TEST_CASE("extract_json_block") {
  CHECK(extract_json_block("```json\n{\"frame\": 2}\n```") == "{\"frame\": 2}");
  CHECK(extract_json_block("{\"frame\": 2}") == "{\"frame\": 2}");
  CHECK(extract_json_block("Answer: {\"frame\": 2} thanks") == "{\"frame\": 2}");
  CHECK(extract_json_block("a {\"x\": 1} b {\"label\": \"}{\", \"y\": [1, 2]} c") ==
        "{\"label\": \"}{\", \"y\": [1, 2]}");
  CHECK(extract_json_block("```json\nsure: [1, 2]\n```") == "[1, 2]");
  CHECK(extract_json_block("```python\nx = 1\n```\n```json\n[]\n```") == "[]");
  CHECK(defect_of([] { extract_json_block("no json here"); }) == ParseDefect::no_json);
  CHECK(defect_of([] { extract_json_block("{\"a\": [1, 2}"); }) == ParseDefect::no_json);
}

TEST_CASE("point/label answers") {
  const auto p = parse_point_semantic(
      "```json\n{\"label\": \"monitor\", \"pointmap\": [-0.32, -0.54, 1.69]}\n```");
  CHECK(p.label == "monitor");
  CHECK(p.pointmap.x == -0.32);
  CHECK(p.pointmap.y == -0.54);
  CHECK(p.pointmap.z == 1.69);

  const auto origin = parse_point_semantic("{\"label\": \"x\", \"pointmap\": [0, 0, 0]}");
  CHECK(origin.pointmap.x == 0.0);
  CHECK(origin.pointmap.z == 0.0);

  CHECK(defect_of([] { parse_point_semantic("{\"label\": \"x\", \"pointmap\": [0, 0]}"); }) ==
        ParseDefect::wrong_arity);
  CHECK(defect_of([] { parse_point_semantic("{\"label\": \"x\", \"pointmap\": [0, \"a\", 0]}"); }) ==
        ParseDefect::wrong_type);
  CHECK(defect_of([] { parse_point_semantic("{\"pointmap\": [0, 0, 0]}"); }) ==
        ParseDefect::missing_key);
  CHECK(defect_of([] { parse_point_semantic("{\"label\": 3, \"pointmap\": [0, 0, 0]}"); }) ==
        ParseDefect::wrong_type);
  CHECK(defect_of([] { parse_point_semantic("[1, 2, 3]"); }) == ParseDefect::wrong_structure);
  CHECK(defect_of([] { parse_point_semantic("{\"label\": \"x\", \"pointmap\": [NaN, 0, 0]}"); }) ==
        ParseDefect::invalid_json);
  CHECK(defect_of([] { parse_point_semantic("{\"label\": \"x\", \"pointmap\": [1e999, 0, 0]}"); }) !=
        ParseDefect::no_json);

  CHECK(point_semantic_json({"monitor", {-0.32, -0.54, 1.69}}) ==
        "{\"label\": \"monitor\", \"pointmap\": [-0.32, -0.54, 1.69]}");
  CHECK(point_semantic_json({"chair", {0, 0, 2}}) ==
        "{\"label\": \"chair\", \"pointmap\": [0.0, 0.0, 2.0]}");
}

TEST_CASE("duplicate keys keep the last value") {
  CHECK(parse_frame("{\"frame\": 1, \"frame\": 4}").frame == 4);
}

TEST_CASE("frame answers") {
  CHECK(parse_frame("```json\n{\"frame\": 2}\n```").frame == 2);
  CHECK(parse_frame("{\"frame\": 3.0}").frame == 3);
  CHECK(defect_of([] { parse_frame("{\"frame\": -1}"); }) == ParseDefect::invalid_value);
  CHECK(defect_of([] { parse_frame("{\"frame\": 1.5}"); }) == ParseDefect::invalid_value);
  CHECK(defect_of([] { parse_frame("{\"frame\": \"2\"}"); }) == ParseDefect::wrong_type);
  CHECK(frame_json({2}) == "{\"frame\": 2}");
}

TEST_CASE("bbox answers") {
  const auto b = parse_bbox3d(
      "```json\n{\"bbox_3d\": [-0.39, -0.19, 2.7, 0.6, 1.22, 1.94, 0.79, 1.32, -3.07]}\n```");
  check_array(b.bbox_3d, {-0.39, -0.19, 2.7, 0.6, 1.22, 1.94, 0.79, 1.32, -3.07});
  CHECK(bbox3d_json(b.bbox_3d) ==
        "{\"bbox_3d\": [-0.39, -0.19, 2.7, 0.6, 1.22, 1.94, 0.79, 1.32, -3.07]}");

  for (int slot = 3; slot < 6; ++slot) {
    std::array<double, 9> v{0, 0, 0, 1, 1, 1, 0, 0, 0};
    v[slot] = 0.0;
    std::string text = "{\"bbox_3d\": [";
    for (int i = 0; i < 9; ++i) text += (i ? ", " : "") + std::to_string(v[i]);
    text += "]}";
    CHECK(defect_of([&] { parse_bbox3d(text); }) == ParseDefect::invalid_value);
  }
  CHECK(defect_of([] { parse_bbox3d("{\"bbox_3d\": [0, 0, 0, 1, 1, 1, 0, 0]}"); }) ==
        ParseDefect::wrong_arity);

  // Angles outside (-pi, pi] are wrapped.
  const auto wrapped = parse_bbox3d("{\"bbox_3d\": [0, 0, 0, 1, 1, 1, 4.0, 0, 0]}");
  CHECK(wrapped.bbox_3d.angles().yaw == doctest::Approx(4.0 - 2 * std::numbers::pi));
}

TEST_CASE("detection lists") {
  const auto one = parse_detections(
      "```json\n[\n    {\"label\": \"table\", \"bbox_3d\": [0.32, 0.6, 1.05, 0.86, 1.7, 0.87, "
      "-1.34, 1.08, -2.84]}\n]\n```");
  REQUIRE(one.entries.size() == 1);
  CHECK(one.parse_failures == 0);
  CHECK(one.entries[0].label == "table");
  check_array(one.entries[0].bbox_3d, {0.32, 0.6, 1.05, 0.86, 1.7, 0.87, -1.34, 1.08, -2.84});

  const auto empty = parse_detections("[]");
  CHECK(empty.entries.empty());
  CHECK(empty.parse_failures == 0);

  const auto mixed = parse_detections(
      "[{\"label\": \"a\", \"bbox_3d\": [0, 0, 0, 1, 1, 1, 0, 0, 0]},"
      " {\"label\": \"b\", \"bbox_3d\": [0, 0, 0, 1, 1, 1, 0, 0]},"
      " {\"label\": \"c\", \"bbox_3d\": [1, 0, 0, 1, 1, 1, 0, 0, 0]}]");
  CHECK(mixed.entries.size() == 2);
  CHECK(mixed.parse_failures == 1);
  CHECK(mixed.failure_reasons.size() == 1);

  CHECK(defect_of([] { parse_detections("{\"label\": \"a\"}"); }) == ParseDefect::wrong_structure);
  CHECK(detections_json({}) == "[]");
}

TEST_CASE("serialize then parse is lossless") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const OrientedBox3 box = random_box(rng);
    const auto back = parse_bbox3d(fence_json(bbox3d_json(box))).bbox_3d;
    const auto a = box.to_array();
    const auto b = back.to_array();
    for (int i = 0; i < 9; ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-12);

    const PointSemanticPred p{"label \"" + std::to_string(trial) + "\"\n",
                              random_vec(rng, -5, 5)};
    const auto q = parse_point_semantic(fence_json(point_semantic_json(p)));
    CHECK(q.label == p.label);
    CHECK(std::abs(q.pointmap.x - p.pointmap.x) <= 1e-12);
    CHECK(std::abs(q.pointmap.y - p.pointmap.y) <= 1e-12);
    CHECK(std::abs(q.pointmap.z - p.pointmap.z) <= 1e-12);

    std::vector<DetectionEntry> entries;
    for (int k = 0; k < trial % 4; ++k) entries.push_back({"obj" + std::to_string(k), random_box(rng)});
    const auto dets = parse_detections(fence_json(detections_json(entries)));
    REQUIRE(dets.entries.size() == entries.size());
    for (std::size_t k = 0; k < entries.size(); ++k) {
      CHECK(dets.entries[k].label == entries[k].label);
      CHECK(dets.entries[k].bbox_3d.to_array() == entries[k].bbox_3d.to_array());
    }

    CHECK(parse_frame(fence_json(frame_json({trial}))).frame == trial);
  }
}

TEST_CASE("bare JSON accepted implies fenced JSON accepted") {
  const char* bodies[] = {
      "{\"frame\": 2}",
      "{\"label\": \"monitor\", \"pointmap\": [-0.32, -0.54, 1.69]}",
      "{\"bbox_3d\": [-0.39, -0.19, 2.7, 0.6, 1.22, 1.94, 0.79, 1.32, -3.07]}",
      "[{\"label\": \"table\", \"bbox_3d\": [0.32, 0.6, 1.05, 0.86, 1.7, 0.87, -1.34, 1.08, -2.84]}]",
      "{\"label\": \"has ``` inside\", \"pointmap\": [1, 2, 3]}",
      "  {\"frame\": 0}  ",
  };
  for (const char* body : bodies) {
    CAPTURE(body);
    const std::string bare = extract_json_block(body);
    CHECK(extract_json_block(fence_json(body)) == bare);
  }
}

TEST_CASE("prompt texts") {
  PromptPayload caption{4, std::nullopt, std::nullopt, Vec3{3.45, 0.9, -1.37}};
  const auto text = serialize_prompt(PromptTask::caption, caption);
  CHECK(text.find("located at [3.45, 0.9, -1.37]") != std::string::npos);
  CHECK(text.rfind("<image><image><image><image>\n", 0) == 0);

  PromptPayload stage1{3, std::nullopt, std::string("the brown chair"), std::nullopt};
  const auto s1 = serialize_prompt(PromptTask::grounding_frame, stage1);
  CHECK(s1 ==
        "Frame-0: <image> Frame-1: <image> Frame-2: <image>\n"
        "Localize the first clear frame in the video showing the object described in the text.\n"
        "Text: the brown chair\n"
        "Output a JSON dictionary with the frame index in \"frame\".");

  const auto s2 = serialize_prompt(PromptTask::grounding_box, stage1);
  CHECK(s2.rfind("<image> <image> <image>\nLocalize the object described in the text.", 0) == 0);

  PromptPayload point{4, 1, std::nullopt, std::nullopt};
  const auto pt = serialize_prompt(PromptTask::point_semantic, point);
  CHECK(pt.rfind("<image><marked_image><image><image>\nGiven the images, find the point covered by "
                 "the red cross.",
                 0) == 0);

  CHECK_THROWS_AS(serialize_prompt(PromptTask::caption, PromptPayload{4}), InvalidArgument);
  CHECK_THROWS_AS(serialize_prompt(PromptTask::point_semantic, PromptPayload{4, 4}), InvalidArgument);
  CHECK_THROWS_AS(serialize_prompt(PromptTask::detection, PromptPayload{0}), InvalidArgument);
  CHECK(parse_prompt_task("detection") == PromptTask::detection);
  CHECK_THROWS_AS(parse_prompt_task("nope"), InvalidArgument);
}

TEST_CASE("normalize_label") {
  CHECK(normalize_label("  Office Chair ") == "office chair");
}
