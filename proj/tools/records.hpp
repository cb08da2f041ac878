#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cli.hpp"
#include "geoperc/fusion.hpp"
#include "geoperc/geom.hpp"
#include "geoperc/predparse.hpp"

namespace geoperc::cli {

// Ground-truth JSON-lines records, one per sample, discriminated by "task".

struct GroundingGt {
  std::string sample_id;
  std::string query;
  int num_frames = 0;
  std::optional<int> frame;  // window position of the first clear frame
  OrientedBox3 box;          // in the camera frame of that anchor frame
};

struct DetectionGt {
  std::string sample_id;
  std::string scene_id;
  int num_frames = 0;
  std::vector<DetectionEntry> objects;
};

struct CaptionGt {
  std::string sample_id;
  int num_frames = 0;
  Vec3 point;
  OrientedBox3 box;
  std::vector<std::string> references;
};

struct GtSet {
  std::vector<GroundingGt> grounding;
  std::vector<DetectionGt> detection;
  std::vector<CaptionGt> caption;
};

GtSet load_gt(const std::string& file, std::vector<Diagnostic>& diags);

// Model outputs: {sample_id, task, raw_text} with an optional "bbox_3d" for captions.

struct PredRecord {
  std::string raw_text;
  std::optional<OrientedBox3> box;
};

/// Keyed by (task, sample_id).
using PredSet = std::map<std::pair<std::string, std::string>, PredRecord>;

PredSet load_predictions(const std::string& file, std::vector<Diagnostic>& diags);

struct PointCloudRecord {
  std::string scene_id;
  std::vector<Vec3> points;
};

std::vector<PointCloudRecord> load_point_clouds(const std::string& file,
                                                std::vector<Diagnostic>& diags);

/// One label per line; blank lines and lines starting with '#' are skipped.
std::vector<std::string> load_class_list(const std::string& file, std::vector<Diagnostic>& diags);

/// Scene-pack directories under `root` (itself, or its sorted subdirectories with scene.json).
std::vector<std::filesystem::path> find_scene_dirs(const std::filesystem::path& root);

/// Loads every pack and cross-checks each depth sidecar against the frame intrinsics.
void validate_scene_packs(const std::string& root, std::vector<Diagnostic>& diags);

/// Conversation lines written by gen-sparse.
struct ConversationLine {
  std::string id;
  std::string prompt;
  std::vector<std::string> images;
  std::string answer;
};

std::vector<ConversationLine> load_conversations(const std::string& file,
                                                 std::vector<Diagnostic>& diags);

struct FusionDemoConfig {
  FusionConfig fusion;
  int grid_rows = 4;
  int grid_cols = 4;
  double init_scale = 0.5;
};

FusionDemoConfig load_fusion_demo_config(const std::string& file, std::vector<Diagnostic>& diags);

}  // namespace geoperc::cli
