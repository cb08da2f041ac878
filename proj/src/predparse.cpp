#include "geoperc/predparse.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include <json.hpp>

#include "geoperc/error.hpp"
#include "geoperc/frame.hpp"
#include "geoperc/numfmt.hpp"

namespace geoperc {
namespace {

using nlohmann::json;

std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

// End (exclusive) of the balanced value opening at `start`, or npos.
std::size_t match_brackets(std::string_view text, std::size_t start) {
  std::vector<char> stack;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = start; i < text.size(); ++i) {
    const char ch = text[i];
    if (in_string) {
      if (escaped) escaped = false;
      else if (ch == '\\') escaped = true;
      else if (ch == '"') in_string = false;
      continue;
    }
    switch (ch) {
      case '"': in_string = true; break;
      case '{': stack.push_back('}'); break;
      case '[': stack.push_back(']'); break;
      case '}':
      case ']':
        if (stack.empty() || stack.back() != ch) return std::string_view::npos;
        stack.pop_back();
        if (stack.empty()) return i + 1;
        break;
      default: break;
    }
  }
  return std::string_view::npos;
}

std::optional<std::string_view> longest_balanced(std::string_view text) {
  std::optional<std::string_view> best;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '{' || text[i] == '[') {
      const std::size_t end = match_brackets(text, i);
      if (end != std::string_view::npos) {
        const auto candidate = text.substr(i, end - i);
        if (!best || candidate.size() > best->size()) best = candidate;
        i = end;
        continue;
      }
    }
    ++i;
  }
  return best;
}

std::optional<std::string_view> fenced_block(std::string_view text) {
  static constexpr std::string_view kOpen = "```";
  std::size_t pos = 0;
  while ((pos = text.find(kOpen, pos)) != std::string_view::npos) {
    std::size_t tag_end = pos + kOpen.size();
    std::string tag;
    while (tag_end < text.size() && std::isalpha(static_cast<unsigned char>(text[tag_end])))
      tag += static_cast<char>(std::tolower(static_cast<unsigned char>(text[tag_end++])));
    if (tag == "json") {
      // A ``` inside a JSON string must not close the fence: take the first closing
      // candidate whose content parses, else the first one.
      std::optional<std::string_view> first;
      for (std::size_t close = text.find(kOpen, tag_end);; close = text.find(kOpen, close + 1)) {
        const std::size_t end = close == std::string_view::npos ? text.size() : close;
        const auto body = trim(text.substr(tag_end, end - tag_end));
        if (!first) first = body;
        if (json::accept(body)) return body;
        if (close == std::string_view::npos) break;
      }
      return first;
    }
    pos = tag_end;
  }
  return std::nullopt;
}

json parse_json(std::string_view text) {
  const std::string block = extract_json_block(text);
  json j = json::parse(block, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw ParseError(ParseDefect::invalid_json, "answer is not valid JSON");
  return j;
}

const json& require_key(const json& obj, const char* key) {
  if (!obj.is_object())
    throw ParseError(ParseDefect::wrong_structure, "expected a JSON object");
  const auto it = obj.find(key);
  if (it == obj.end())
    throw ParseError(ParseDefect::missing_key, std::string("missing key \"") + key + "\"");
  return *it;
}

std::string require_string(const json& obj, const char* key) {
  const json& v = require_key(obj, key);
  if (!v.is_string())
    throw ParseError(ParseDefect::wrong_type, std::string("\"") + key + "\" must be a string");
  return v.get<std::string>();
}

std::vector<double> require_numbers(const json& obj, const char* key, std::size_t arity) {
  const json& v = require_key(obj, key);
  if (!v.is_array())
    throw ParseError(ParseDefect::wrong_type, std::string("\"") + key + "\" must be a list");
  if (v.size() != arity)
    throw ParseError(ParseDefect::wrong_arity, std::string("\"") + key + "\" needs " +
                                                   std::to_string(arity) + " numbers, got " +
                                                   std::to_string(v.size()));
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number())
      throw ParseError(ParseDefect::wrong_type,
                       std::string("\"") + key + "\" entries must be numbers");
    const double d = e.get<double>();
    if (!std::isfinite(d))
      throw ParseError(ParseDefect::non_finite, std::string("\"") + key + "\" has a non-finite entry");
    out.push_back(d);
  }
  return out;
}

OrientedBox3 box_from_json(const json& obj) {
  const auto v = require_numbers(obj, "bbox_3d", 9);
  if (!(v[3] > 0.0 && v[4] > 0.0 && v[5] > 0.0))
    throw ParseError(ParseDefect::invalid_value, "\"bbox_3d\" sizes must be positive");
  return OrientedBox3::from_array(v);
}

std::string quoted(const std::string& s) { return json(s).dump(); }

std::string number_list(std::span<const double> values) {
  std::string out = "[";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ", ";
    out += format_number(values[i]);
  }
  return out + "]";
}

constexpr std::string_view kBoxFormat =
    "The 3D bounding box format should be "
    "[x_center, y_center, z_center, x_size, y_size, z_size, yaw, pitch, roll].";

std::string repeated_images(int n, std::string_view separator) {
  std::string out;
  for (int i = 0; i < n; ++i) {
    if (i) out += separator;
    out += "<image>";
  }
  return out;
}

}  // namespace

std::string_view to_string(ParseDefect defect) {
  switch (defect) {
    case ParseDefect::no_json: return "no_json";
    case ParseDefect::invalid_json: return "invalid_json";
    case ParseDefect::wrong_structure: return "wrong_structure";
    case ParseDefect::missing_key: return "missing_key";
    case ParseDefect::wrong_type: return "wrong_type";
    case ParseDefect::wrong_arity: return "wrong_arity";
    case ParseDefect::non_finite: return "non_finite";
    case ParseDefect::invalid_value: return "invalid_value";
  }
  return "invalid_json";
}

std::string extract_json_block(std::string_view text) {
  if (const auto fenced = fenced_block(text)) {
    if (!json::accept(*fenced))
      if (const auto inner = longest_balanced(*fenced)) return std::string(*inner);
    return std::string(*fenced);
  }
  if (const auto bare = longest_balanced(text)) return std::string(*bare);
  throw ParseError(ParseDefect::no_json, "no JSON value found in the answer");
}

PointSemanticPred parse_point_semantic(std::string_view text) {
  const json j = parse_json(text);
  PointSemanticPred pred;
  pred.label = require_string(j, "label");
  const auto p = require_numbers(j, "pointmap", 3);
  pred.pointmap = {p[0], p[1], p[2]};
  return pred;
}

FramePred parse_frame(std::string_view text) {
  const json j = parse_json(text);
  const json& v = require_key(j, "frame");
  if (!v.is_number()) throw ParseError(ParseDefect::wrong_type, "\"frame\" must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ParseError(ParseDefect::non_finite, "\"frame\" is not finite");
  if (d != std::floor(d) || d < 0.0 || d > 2147483647.0)
    throw ParseError(ParseDefect::invalid_value, "\"frame\" must be a non-negative integer");
  return {static_cast<int>(d)};
}

BoxPred parse_bbox3d(std::string_view text) { return {box_from_json(parse_json(text))}; }

DetectionPred parse_detections(std::string_view text) {
  const json j = parse_json(text);
  if (!j.is_array()) throw ParseError(ParseDefect::wrong_structure, "expected a JSON list");
  DetectionPred pred;
  for (std::size_t i = 0; i < j.size(); ++i) {
    try {
      pred.entries.push_back({require_string(j[i], "label"), box_from_json(j[i])});
    } catch (const ParseError& e) {
      ++pred.parse_failures;
      pred.failure_reasons.push_back("entry " + std::to_string(i) + ": " + e.what());
    }
  }
  return pred;
}

std::string point_semantic_json(const PointSemanticPred& pred) {
  const double p[3] = {pred.pointmap.x, pred.pointmap.y, pred.pointmap.z};
  return "{\"label\": " + quoted(pred.label) + ", \"pointmap\": " + number_list(p) + "}";
}

std::string frame_json(const FramePred& pred) {
  if (pred.frame < 0) throw InvalidArgument("frame index must be non-negative");
  return "{\"frame\": " + std::to_string(pred.frame) + "}";
}

std::string bbox3d_json(const OrientedBox3& box) {
  const auto v = box.to_array();
  return "{\"bbox_3d\": " + number_list(v) + "}";
}

std::string detections_json(std::span<const DetectionEntry> entries) {
  if (entries.empty()) return "[]";
  std::string out = "[\n";
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto v = entries[i].bbox_3d.to_array();
    out += "    {\"label\": " + quoted(entries[i].label) + ", \"bbox_3d\": " + number_list(v) + "}";
    out += i + 1 < entries.size() ? ",\n" : "\n";
  }
  return out + "]";
}

std::string fence_json(std::string_view body) {
  return "```json\n" + std::string(body) + "\n```";
}

PromptTask parse_prompt_task(std::string_view name) {
  if (name == "point_semantic") return PromptTask::point_semantic;
  if (name == "grounding_frame") return PromptTask::grounding_frame;
  if (name == "grounding_box") return PromptTask::grounding_box;
  if (name == "caption") return PromptTask::caption;
  if (name == "detection") return PromptTask::detection;
  throw InvalidArgument("unknown task '" + std::string(name) + "'");
}

std::string_view to_string(PromptTask task) {
  switch (task) {
    case PromptTask::point_semantic: return "point_semantic";
    case PromptTask::grounding_frame: return "grounding_frame";
    case PromptTask::grounding_box: return "grounding_box";
    case PromptTask::caption: return "caption";
    case PromptTask::detection: return "detection";
  }
  return "point_semantic";
}

std::string serialize_prompt(PromptTask task, const PromptPayload& payload) {
  if (payload.num_frames < 1) throw InvalidArgument("prompt needs at least one frame");
  const int n = payload.num_frames;
  switch (task) {
    case PromptTask::point_semantic: {
      if (!payload.marked_position)
        throw InvalidArgument("point_semantic prompt needs the marked frame position");
      const int marked = *payload.marked_position;
      if (marked < 0 || marked >= n) throw InvalidArgument("marked frame position out of range");
      std::string images;
      for (int i = 0; i < n; ++i) images += i == marked ? "<marked_image>" : "<image>";
      return images +
             "\nGiven the images, find the point covered by the red cross.\n"
             "Output a JSON dictionary with the point's semantic label in \"label\" and the "
             "point's 3D coordinate in \"pointmap\" in the camera coordinate system of the "
             "first frame.";
    }
    case PromptTask::grounding_frame: {
      if (!payload.query) throw InvalidArgument("grounding prompt needs a query");
      std::string images;
      for (int i = 0; i < n; ++i)
        images += (i ? " Frame-" : "Frame-") + std::to_string(i) + ": <image>";
      return images +
             "\nLocalize the first clear frame in the video showing the object described in "
             "the text.\nText: " +
             *payload.query + "\nOutput a JSON dictionary with the frame index in \"frame\".";
    }
    case PromptTask::grounding_box: {
      if (!payload.query) throw InvalidArgument("grounding prompt needs a query");
      return repeated_images(n, " ") + "\nLocalize the object described in the text.\nText: " +
             *payload.query +
             "\nOutput a JSON dictionary with the matched object's 3D bounding box in "
             "\"bbox_3d\" in the camera coordinate system of the first frame.\n" +
             std::string(kBoxFormat);
    }
    case PromptTask::caption: {
      if (!payload.point) throw InvalidArgument("caption prompt needs the object point");
      const double p[3] = {quantize_metric(payload.point->x), quantize_metric(payload.point->y),
                           quantize_metric(payload.point->z)};
      return repeated_images(n, "") +
             "\nCarefully watch the video and describe the object located at " + number_list(p) +
             " in detail.";
    }
    case PromptTask::detection:
      return repeated_images(n, "") +
             "\nDetect the 3D bounding boxes in the camera coordinate system of the first "
             "frame.\nOutput a JSON list where each entry contains the object name in \"label\" "
             "and its 3D bounding box in \"bbox_3d\".\n" +
             std::string(kBoxFormat);
  }
  throw InvalidArgument("unknown prompt task");
}

std::string normalize_label(std::string_view label) {
  std::string out(trim(label));
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace geoperc
