#include "geoperc/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "geoperc/error.hpp"
#include "geoperc/predparse.hpp"

namespace geoperc {
namespace {

using nlohmann::ordered_json;

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Portable Fisher-Yates; std::shuffle's draw sequence is implementation-defined.
void shuffle_indices(std::vector<std::size_t>& idx, std::mt19937_64& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
}

Vec3 vec_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3)
    throw DataError(what + " must be a list of 3 numbers");
  for (const auto& e : j)
    if (!e.is_number()) throw DataError(what + " must be a list of 3 numbers");
  const Vec3 v{j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
  if (!is_finite(v)) throw DataError(what + " must be finite");
  return v;
}

std::string sample_id(const SparseSample& s) {
  std::string id = s.scene_id + ":";
  for (std::size_t i = 0; i < s.frame_indices.size(); ++i)
    id += (i ? "-" : "") + std::to_string(s.frame_indices[i]);
  return id + ":" + std::to_string(s.pixel.u) + "," + std::to_string(s.pixel.v);
}

}  // namespace

std::vector<std::vector<int>> sample_frames(const ScenePack& pack, double fps, int window) {
  if (!(fps > 0.0) || !std::isfinite(fps)) throw InvalidArgument("sample_frames: fps must be > 0");
  if (window < 1) throw InvalidArgument("sample_frames: window must be >= 1");
  std::vector<std::vector<int>> windows;
  if (pack.frames.empty()) return windows;

  const double t0 = pack.frames.front().timestamp;
  const double t_end = pack.frames.back().timestamp;
  std::vector<std::size_t> selected;
  std::size_t cursor = 0;
  for (long k = 0;; ++k) {
    const double t = t0 + static_cast<double>(k) / fps;
    if (t > t_end + 1e-9) break;
    // Timestamps are non-decreasing, so the nearest frame only moves forward.
    while (cursor + 1 < pack.frames.size() &&
           std::abs(pack.frames[cursor + 1].timestamp - t) < std::abs(pack.frames[cursor].timestamp - t))
      ++cursor;
    if (selected.empty() || selected.back() != cursor) selected.push_back(cursor);
  }
  const auto w = static_cast<std::size_t>(window);
  for (std::size_t start = 0; start + w <= selected.size(); ++start) {
    std::vector<int> win;
    for (std::size_t i = start; i < start + w; ++i) win.push_back(pack.frames[selected[i]].index);
    windows.push_back(std::move(win));
  }
  return windows;
}

std::string_view to_string(PixelRejection reason) {
  switch (reason) {
    case PixelRejection::behind_camera: return "behind_camera";
    case PixelRejection::out_of_bounds: return "out_of_bounds";
    case PixelRejection::invalid_depth: return "invalid_depth";
    case PixelRejection::occluded: return "occluded";
  }
  return "out_of_bounds";
}

PixelSelection select_prompt_pixel(const ObjectAnnotation& obj, const FrameRecord& frame,
                                   const DepthRaster& depth, double tolerance) {
  const auto& intr = frame.intrinsics;
  if (depth.width != intr.width || depth.height != intr.height)
    throw InvalidArgument("depth raster of frame " + std::to_string(frame.index) +
                          " does not match the intrinsics size");
  PixelSelection sel;
  const Vec3 cam = to_first_frame(obj.center_world, frame.pose);
  sel.projected_depth = cam.z;
  if (!(cam.z > 0.0)) {
    sel.reason = PixelRejection::behind_camera;
    return sel;
  }
  sel.projected = project(cam, intr);
  const double u = std::floor(sel.projected.u + 0.5);
  const double v = std::floor(sel.projected.v + 0.5);
  if (!intr.contains(u, v)) {
    sel.reason = PixelRejection::out_of_bounds;
    return sel;
  }
  const PixelIndex px{static_cast<int>(u), static_cast<int>(v)};
  const double d = depth.meters(px.u, px.v);
  if (!(d > 0.0)) {
    sel.reason = PixelRejection::invalid_depth;
    return sel;
  }
  if (std::abs(d - cam.z) > tolerance) {
    sel.reason = PixelRejection::occluded;
    return sel;
  }
  sel.pixel = px;
  return sel;
}

std::optional<SparseSample> make_sparse_sample(const ObjectAnnotation& obj,
                                               std::span<const int> window, const ScenePack& pack,
                                               const DepthSet& depths, double tolerance) {
  if (window.empty()) throw InvalidArgument("make_sparse_sample: empty window");
  const FrameRecord& first = pack.frame(window.front());
  for (int index : window) {
    const FrameRecord& frame = pack.frame(index);
    const auto it = depths.find(index);
    if (it == depths.end())
      throw NotFound("no depth raster for frame " + std::to_string(index));
    const auto sel = select_prompt_pixel(obj, frame, it->second, tolerance);
    if (!sel.pixel) continue;

    const double d = it->second.meters(sel.pixel->u, sel.pixel->v);
    const Vec3 cam = back_project({static_cast<double>(sel.pixel->u),
                                   static_cast<double>(sel.pixel->v)},
                                  d, frame.intrinsics);
    SparseSample s;
    s.scene_id = pack.scene_id;
    s.frame_indices.assign(window.begin(), window.end());
    s.marked_frame = index;
    s.pixel = *sel.pixel;
    s.label = obj.label;
    s.point_raw = to_first_frame(frame.pose.apply(cam), first.pose);
    s.point_first_frame = {quantize_metric(s.point_raw.x), quantize_metric(s.point_raw.y),
                           quantize_metric(s.point_raw.z)};
    return s;
  }
  return std::nullopt;
}

RgbImage mark_pixel(RgbImage image, PixelIndex pixel) {
  if (pixel.u < 0 || pixel.v < 0 || pixel.u >= image.width || pixel.v >= image.height)
    throw InvalidArgument("mark_pixel: pixel outside the image");
  const int half_len = kMarkArm + kMarkThickness / 2;
  const int half_width = kMarkThickness / 2;
  auto paint = [&](int du_lo, int du_hi, int dv_lo, int dv_hi) {
    for (int v = std::max(0, pixel.v + dv_lo); v <= std::min(image.height - 1, pixel.v + dv_hi); ++v)
      for (int u = std::max(0, pixel.u + du_lo); u <= std::min(image.width - 1, pixel.u + du_hi);
           ++u) {
        std::uint8_t* px = image.at(u, v);
        px[0] = 255;
        px[1] = 0;
        px[2] = 0;
      }
  };
  paint(-half_len, half_len, -half_width, half_width);
  paint(-half_width, half_width, -half_len, half_len);
  return image;
}

ConversationRecord emit_conversation(const SparseSample& sample,
                                     const std::vector<std::string>& images) {
  const auto pos = std::find(sample.frame_indices.begin(), sample.frame_indices.end(),
                             sample.marked_frame);
  if (pos == sample.frame_indices.end())
    throw InvalidArgument("emit_conversation: marked frame is not in the window");
  if (images.size() != sample.frame_indices.size())
    throw InvalidArgument("emit_conversation: need one image per window frame");

  PromptPayload payload;
  payload.num_frames = static_cast<int>(sample.frame_indices.size());
  payload.marked_position = static_cast<int>(pos - sample.frame_indices.begin());

  ConversationRecord rec;
  rec.id = sample_id(sample);
  rec.target = point_semantic_json({sample.label, sample.point_first_frame});
  rec.messages.push_back({"human", serialize_prompt(PromptTask::point_semantic, payload), images});
  rec.messages.push_back({"gpt", fence_json(rec.target), {}});
  return rec;
}

std::string conversation_jsonl(const ConversationRecord& record, const SparseSample& sample) {
  ordered_json messages = ordered_json::array();
  for (const auto& m : record.messages)
    messages.push_back({{"from", m.role}, {"value", m.text}, {"images", m.images}});
  const ordered_json line{
      {"id", record.id},
      {"conversations", messages},
      {"target", record.target},
      {"metadata",
       {{"scene_id", sample.scene_id},
        {"frame_indices", sample.frame_indices},
        {"marked_frame", sample.marked_frame},
        {"pixel", {sample.pixel.u, sample.pixel.v}},
        {"label", sample.label},
        {"point_raw", {sample.point_raw.x, sample.point_raw.y, sample.point_raw.z}}}}};
  return line.dump();
}

std::map<std::string, std::vector<ObjectAnnotation>> load_annotations(
    const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open " + file.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(file.string() + ": invalid JSON: " + e.what());
  }
  if (!doc.is_object()) throw DataError(file.string() + ": expected an object keyed by scene id");
  std::map<std::string, std::vector<ObjectAnnotation>> out;
  for (const auto& [scene, objects] : doc.items()) {
    if (!objects.is_array()) throw DataError(file.string() + ": " + scene + " must map to a list");
    auto& list = out[scene];
    for (std::size_t i = 0; i < objects.size(); ++i) {
      const auto& o = objects[i];
      const std::string where = file.string() + ": " + scene + "[" + std::to_string(i) + "]";
      if (!o.is_object() || !o.contains("label") || !o["label"].is_string() ||
          o["label"].get<std::string>().empty())
        throw DataError(where + ": needs a non-empty string \"label\"");
      if (!o.contains("center")) throw DataError(where + ": missing \"center\"");
      ObjectAnnotation a{o["label"].get<std::string>(), vec_from_json(o["center"], where + ".center"),
                         std::nullopt, {}, {}};
      if (o.contains("bbox_3d")) {
        try {
          a.box_world = OrientedBox3::from_array(o["bbox_3d"].get<std::vector<double>>());
        } catch (const std::exception& e) {
          throw DataError(where + ".bbox_3d: " + e.what());
        }
      }
      if (o.contains("description")) {
        if (!o["description"].is_string()) throw DataError(where + ".description: expected a string");
        a.description = o["description"].get<std::string>();
      }
      if (o.contains("captions")) {
        const auto& c = o["captions"];
        if (!c.is_array() || !std::all_of(c.begin(), c.end(), [](const auto& x) { return x.is_string(); }))
          throw DataError(where + ".captions: expected a list of strings");
        a.captions = c.get<std::vector<std::string>>();
      }
      list.push_back(std::move(a));
    }
  }
  return out;
}

DepthSet load_pack_depths(const ScenePack& pack) {
  DepthSet depths;
  for (const auto& f : pack.frames) depths.emplace(f.index, load_depth(pack.root / f.depth_ref));
  return depths;
}

SparseGenResult generate_scene_samples(const ScenePack& pack,
                                       std::span<const ObjectAnnotation> objects,
                                       const SparseGenOptions& options) {
  SparseGenResult result;
  result.stats.scene_id = pack.scene_id;
  const auto windows = sample_frames(pack, options.fps, options.window);
  if (windows.empty() || objects.empty()) return result;
  const DepthSet depths = load_pack_depths(pack);
  for (const auto& window : windows)
    for (const auto& obj : objects) {
      ++result.stats.attempted;
      if (auto s = make_sparse_sample(obj, window, pack, depths, options.tolerance))
        result.samples.push_back(std::move(*s));
      else
        ++result.stats.skipped;
    }

  if (options.max_samples > 0 && result.samples.size() > options.max_samples) {
    std::vector<std::size_t> idx(result.samples.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::mt19937_64 rng(options.seed ^ fnv1a(pack.scene_id));
    shuffle_indices(idx, rng);
    idx.resize(options.max_samples);
    std::sort(idx.begin(), idx.end());
    std::vector<SparseSample> kept;
    for (std::size_t i : idx) kept.push_back(std::move(result.samples[i]));
    // Subsampled-away samples were produced, so they count as skipped.
    result.stats.skipped += result.samples.size() - kept.size();
    result.samples = std::move(kept);
  }
  result.stats.accepted = result.samples.size();
  return result;
}

}  // namespace geoperc
