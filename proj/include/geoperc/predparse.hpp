#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "geoperc/geom.hpp"

namespace geoperc {

enum class ParseDefect {
  no_json,          // nothing resembling a JSON value in the text
  invalid_json,     // candidate found but it does not parse
  wrong_structure,  // parsed, but the top-level value has the wrong kind
  missing_key,
  wrong_type,
  wrong_arity,
  non_finite,
  invalid_value,    // e.g. non-positive box size, negative frame index
};

std::string_view to_string(ParseDefect defect);

class ParseError : public std::runtime_error {
 public:
  ParseError(ParseDefect defect, const std::string& message)
      : std::runtime_error(message), defect_(defect) {}
  ParseDefect defect() const { return defect_; }

 private:
  ParseDefect defect_;
};

struct PointSemanticPred {
  std::string label;
  Vec3 pointmap;
};

struct FramePred {
  int frame = 0;
};

struct BoxPred {
  OrientedBox3 bbox_3d;
};

struct DetectionEntry {
  std::string label;
  OrientedBox3 bbox_3d;
};

struct DetectionPred {
  std::vector<DetectionEntry> entries;
  std::size_t parse_failures = 0;
  std::vector<std::string> failure_reasons;  // one per dropped entry
};

/// First ```json fenced block if present, otherwise the longest balanced top-level
/// {...} or [...] span. Throws ParseError(no_json) when neither exists.
std::string extract_json_block(std::string_view text);

PointSemanticPred parse_point_semantic(std::string_view text);
FramePred parse_frame(std::string_view text);
/// Box angles are wrapped into (-pi, pi].
BoxPred parse_bbox3d(std::string_view text);
/// Malformed entries are dropped and counted; only a bad outer list throws.
DetectionPred parse_detections(std::string_view text);

// Answer bodies in the canonical single-line layout, e.g.
// {"label": "monitor", "pointmap": [-0.32, -0.54, 1.69]}
// Numbers print as the shortest decimal that round-trips; callers quantize beforehand.
std::string point_semantic_json(const PointSemanticPred& pred);
std::string frame_json(const FramePred& pred);
std::string bbox3d_json(const OrientedBox3& box);
std::string detections_json(std::span<const DetectionEntry> entries);

/// Wraps a JSON body in a ```json fence.
std::string fence_json(std::string_view body);

enum class PromptTask { point_semantic, grounding_frame, grounding_box, caption, detection };

/// Throws InvalidArgument for unknown names.
PromptTask parse_prompt_task(std::string_view name);
std::string_view to_string(PromptTask task);

struct PromptPayload {
  int num_frames = 0;
  std::optional<int> marked_position;  // point_semantic: window position of the marked frame
  std::optional<std::string> query;    // grounding stages
  std::optional<Vec3> point;           // caption: object center in first-frame coordinates
};

/// Human-turn text for `task`; the caption point is quantized to two decimals.
/// Throws InvalidArgument when the payload lacks a field the task needs.
std::string serialize_prompt(PromptTask task, const PromptPayload& payload);

/// Normalized class label: trimmed and lower-cased.
std::string normalize_label(std::string_view label);

}  // namespace geoperc
