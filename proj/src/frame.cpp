#include "geoperc/frame.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <string>

#include "geoperc/error.hpp"
#include "geoperc/numfmt.hpp"

namespace geoperc {

std::string format_number(double value) {
  if (!std::isfinite(value)) throw InvalidArgument("cannot format non-finite number");
  if (value == 0.0) return "0.0";
  char buf[400];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::fixed);
  std::string s(buf, res.ptr);
  if (s.find('.') == std::string::npos) s += ".0";
  return s;
}

void CameraIntrinsics::validate() const {
  if (!(std::isfinite(fx) && fx > 0.0 && std::isfinite(fy) && fy > 0.0))
    throw InvalidArgument("intrinsics: fx and fy must be finite and > 0");
  if (width <= 0 || height <= 0) throw InvalidArgument("intrinsics: width/height must be > 0");
  if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height))
    throw InvalidArgument("intrinsics: principal point outside the image");
}

void ScenePack::validate() const {
  if (frames.empty()) throw InvalidArgument("scene pack '" + scene_id + "' has no frames");
  std::set<int> seen;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& f = frames[i];
    if (f.index < 0) throw InvalidArgument("frame index must be non-negative");
    if (!seen.insert(f.index).second)
      throw InvalidArgument("duplicate frame index " + std::to_string(f.index));
    if (!std::isfinite(f.timestamp)) throw InvalidArgument("frame timestamp must be finite");
    if (i > 0 && f.timestamp < frames[i - 1].timestamp)
      throw InvalidArgument("frame timestamps must be non-decreasing");
    f.intrinsics.validate();
  }
}

const FrameRecord& ScenePack::frame(int index) const {
  const auto it = std::find_if(frames.begin(), frames.end(),
                               [&](const FrameRecord& f) { return f.index == index; });
  if (it == frames.end())
    throw NotFound("frame " + std::to_string(index) + " not in scene '" + scene_id + "'");
  return *it;
}

Vec3 to_first_frame(const Vec3& point_world, const Pose& first) {
  return first.apply_inverse(point_world);
}

OrientedBox3 transform_box(const OrientedBox3& box, const Pose& src, const Pose& dst) {
  const Pose rel = dst.inverse() * src;
  return box.transformed(rel.rotation, rel.translation);
}

Vec3 back_project(const Pixel& pixel, double depth, const CameraIntrinsics& intr) {
  intr.validate();
  if (!(std::isfinite(depth) && depth > 0.0))
    throw InvalidArgument("back_project: depth must be finite and > 0");
  if (!intr.contains(pixel.u, pixel.v))
    throw InvalidArgument("back_project: pixel outside the image");
  return {(pixel.u - intr.cx) * depth / intr.fx, (pixel.v - intr.cy) * depth / intr.fy, depth};
}

Pixel project(const Vec3& p, const CameraIntrinsics& intr) {
  return {intr.fx * p.x / p.z + intr.cx, intr.fy * p.y / p.z + intr.cy};
}

ScenePack reorder_anchor(const ScenePack& pack, int anchor_index) {
  const auto it = std::find_if(pack.frames.begin(), pack.frames.end(),
                               [&](const FrameRecord& f) { return f.index == anchor_index; });
  if (it == pack.frames.end())
    throw NotFound("anchor frame " + std::to_string(anchor_index) + " not in scene '" +
                   pack.scene_id + "'");
  ScenePack out = pack;
  out.frames.clear();
  out.frames.push_back(*it);
  for (const auto& f : pack.frames)
    if (f.index != anchor_index) out.frames.push_back(f);
  return out;
}

double quantize_metric(double value) {
  if (!std::isfinite(value)) throw InvalidArgument("quantize_metric: non-finite value");
  // Beyond this magnitude doubles are spaced too coarsely for a hundredths grid.
  if (std::abs(value) >= 1e13) return value;
  char buf[400];
  const auto res = std::to_chars(buf, buf + sizeof(buf), std::abs(value), std::chars_format::fixed);
  const std::string_view text(buf, static_cast<std::size_t>(res.ptr - buf));
  const auto dot_pos = text.find('.');
  const std::string_view int_part = text.substr(0, dot_pos);
  const std::string_view frac =
      dot_pos == std::string_view::npos ? std::string_view{} : text.substr(dot_pos + 1);
  long long hundredths = 0;
  std::from_chars(int_part.data(), int_part.data() + int_part.size(), hundredths);
  auto digit = [&](std::size_t i) { return i < frac.size() ? frac[i] - '0' : 0; };
  hundredths = hundredths * 100 + digit(0) * 10 + digit(1);
  if (digit(2) >= 5) ++hundredths;  // any tail starting with 5+ is at least half a step
  if (hundredths == 0) return 0.0;
  const double magnitude = static_cast<double>(hundredths) / 100.0;
  return value < 0.0 ? -magnitude : magnitude;
}

std::string format_metric(double value) { return format_number(quantize_metric(value)); }

}  // namespace geoperc
