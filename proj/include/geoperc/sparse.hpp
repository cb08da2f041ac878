#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "geoperc/frame.hpp"
#include "geoperc/geom.hpp"
#include "geoperc/image.hpp"

namespace geoperc {

struct ObjectAnnotation {
  std::string label;
  Vec3 center_world;
  std::optional<OrientedBox3> box_world;
  std::string description;            // grounding query; empty falls back to the label
  std::vector<std::string> captions;  // caption references
};

struct PixelIndex {
  int u = 0;
  int v = 0;
  bool operator==(const PixelIndex&) const = default;
};

struct SparseSample {
  std::string scene_id;
  std::vector<int> frame_indices;  // window, in order; the first one defines the coordinates
  int marked_frame = 0;
  PixelIndex pixel;
  std::string label;
  Vec3 point_first_frame;  // quantized to two decimals
  Vec3 point_raw;          // before quantization
};

struct Message {
  std::string role;  // "human" or "gpt"
  std::string text;
  std::vector<std::string> images;
};

struct ConversationRecord {
  std::string id;
  std::vector<Message> messages;
  std::string target;  // canonical answer body, unfenced
};

/// Frames nearest to a 1/fps grid starting at the first timestamp (ties go to the earlier
/// frame), de-duplicated, then every run of `window` consecutive selected frames.
/// Returns frame indices. Throws InvalidArgument for fps <= 0 or window < 1.
std::vector<std::vector<int>> sample_frames(const ScenePack& pack, double fps, int window);

enum class PixelRejection { behind_camera, out_of_bounds, invalid_depth, occluded };

std::string_view to_string(PixelRejection reason);

struct PixelSelection {
  std::optional<PixelIndex> pixel;
  PixelRejection reason = PixelRejection::out_of_bounds;  // meaningful only when rejected
  Pixel projected;                                        // sub-pixel projection of the center
  double projected_depth = 0.0;
};

constexpr double kDefaultVisibilityTolerance = 0.10;

/// Projects the object center into `frame` and accepts the rounded pixel when it is in bounds
/// and the raster depth there is valid and within `tolerance` of the center's depth.
/// Throws InvalidArgument if the raster does not match the intrinsics.
PixelSelection select_prompt_pixel(const ObjectAnnotation& obj, const FrameRecord& frame,
                                   const DepthRaster& depth,
                                   double tolerance = kDefaultVisibilityTolerance);

/// Depth rasters keyed by frame index.
using DepthSet = std::map<int, DepthRaster>;

/// Uses the first accepting frame of the window; nullopt when every frame rejects.
std::optional<SparseSample> make_sparse_sample(const ObjectAnnotation& obj,
                                               std::span<const int> window, const ScenePack& pack,
                                               const DepthSet& depths,
                                               double tolerance = kDefaultVisibilityTolerance);

constexpr int kMarkArm = 12;
constexpr int kMarkThickness = 3;

/// Red axis-aligned cross centered on `pixel`: two bars of length 2*kMarkArm + kMarkThickness
/// and width kMarkThickness, clipped at the border. Throws InvalidArgument out of bounds.
RgbImage mark_pixel(RgbImage image, PixelIndex pixel);

/// Human turn with the point prompt and one placeholder per window frame, gpt turn with the
/// fenced answer. `images` lists the image path of each window frame.
ConversationRecord emit_conversation(const SparseSample& sample,
                                     const std::vector<std::string>& images);

/// One JSON line: the conversation plus metadata (scene, frames, pixel, unquantized point).
std::string conversation_jsonl(const ConversationRecord& record, const SparseSample& sample);

/// Annotation file: {"<scene_id>": [{"label": ..., "center": [x, y, z], "bbox_3d": [9]?,
/// "description": "..."?, "captions": ["..."]?}]}.
/// Throws DataError on schema violations.
std::map<std::string, std::vector<ObjectAnnotation>> load_annotations(
    const std::filesystem::path& file);

struct SparseGenOptions {
  double fps = 1.0;
  int window = 4;
  double tolerance = kDefaultVisibilityTolerance;
  std::size_t max_samples = 0;  // per scene; 0 keeps all, otherwise a seeded subset
  std::uint64_t seed = 0;
};

struct SparseGenStats {
  std::string scene_id;
  std::size_t attempted = 0;
  std::size_t accepted = 0;
  std::size_t skipped = 0;
};

struct SparseGenResult {
  std::vector<SparseSample> samples;
  SparseGenStats stats;
};

/// Every (window, object) pair of one scene. Depth rasters are read from the pack root.
SparseGenResult generate_scene_samples(const ScenePack& pack,
                                       std::span<const ObjectAnnotation> objects,
                                       const SparseGenOptions& options);

/// Loads the depth raster of every frame of `pack`.
DepthSet load_pack_depths(const ScenePack& pack);

}  // namespace geoperc
