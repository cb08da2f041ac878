#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "geoperc/geom.hpp"

namespace geoperc {

/// Pinhole intrinsics in pixels; pixel centers sit at integer coordinates.
struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  /// Throws InvalidArgument when fx, fy <= 0 or the principal point is outside the image.
  void validate() const;
  bool contains(double u, double v) const {
    return u >= 0.0 && v >= 0.0 && u < width && v < height;
  }
};

struct Pixel {
  double u = 0.0;
  double v = 0.0;
};

struct FrameRecord {
  int index = 0;
  std::string image_ref;  // relative to the pack root
  std::string depth_ref;
  Pose pose;              // camera-to-world
  CameraIntrinsics intrinsics;
  double timestamp = 0.0;
};

struct ScenePack {
  std::string scene_id;
  std::vector<FrameRecord> frames;
  std::filesystem::path root;  // directory holding scene.json; empty for in-memory packs

  /// Throws InvalidArgument on empty packs, duplicate indices or decreasing timestamps.
  void validate() const;
  const FrameRecord& frame(int index) const;  // NotFound if absent
};

/// Metric depth raster stored as 16-bit integers; raw value 0 marks invalid depth.
struct DepthRaster {
  int width = 0;
  int height = 0;
  double depth_scale = 1000.0;  // raw units per meter
  std::vector<std::uint16_t> raw;

  /// Depth in meters at integer pixel (u, v); 0 when invalid.
  double meters(int u, int v) const {
    return raw[static_cast<std::size_t>(v) * width + u] / depth_scale;
  }
};

/// Maps a world point into the camera frame of `first`: R^T (p - t).
Vec3 to_first_frame(const Vec3& point_world, const Pose& first);

/// Re-expresses a box given in the `src` camera frame in the `dst` camera frame.
OrientedBox3 transform_box(const OrientedBox3& box, const Pose& src, const Pose& dst);

/// Camera-frame point from pixel and metric depth. Throws InvalidArgument when depth <= 0,
/// the pixel lies outside the image or intrinsics are invalid.
Vec3 back_project(const Pixel& pixel, double depth, const CameraIntrinsics& intr);

/// Pinhole projection of a camera-frame point (no bounds check; z must be non-zero).
Pixel project(const Vec3& point_camera, const CameraIntrinsics& intr);

/// Moves the frame with `anchor_index` to the front; the rest keep their order.
ScenePack reorder_anchor(const ScenePack& pack, int anchor_index);

/// Rounds to two decimals, half away from zero on the shortest decimal form of the value.
/// Throws InvalidArgument for non-finite input. Never returns negative zero.
double quantize_metric(double value);

/// quantize_metric then shortest decimal text with trailing zeros dropped ("2.7", "0.0").
std::string format_metric(double value);

// Scene-pack directory layout: scene.json plus depth rasters (little-endian uint16) each
// with a "<file>.json" sidecar {width, height, depth_scale}.
ScenePack load_scene_pack(const std::filesystem::path& dir);
void save_scene_pack(const ScenePack& pack, const std::filesystem::path& dir);

DepthRaster load_depth(const std::filesystem::path& file);
void save_depth(const DepthRaster& raster, const std::filesystem::path& file);

}  // namespace geoperc
