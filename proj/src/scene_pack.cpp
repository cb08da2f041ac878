#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "geoperc/error.hpp"
#include "geoperc/frame.hpp"

namespace geoperc {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

json read_json_file(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open " + file.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(file.string() + ": invalid JSON: " + e.what());
  }
}

template <typename T>
T field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key))
    throw DataError(where + ": missing field '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw DataError(where + ": field '" + key + "' has the wrong type");
  }
}

FrameRecord parse_frame(const json& j, const std::string& where) {
  FrameRecord f;
  f.index = field<int>(j, "index", where);
  f.image_ref = field<std::string>(j, "image", where);
  f.depth_ref = field<std::string>(j, "depth", where);
  f.timestamp = field<double>(j, "timestamp", where);
  const auto pose = field<std::vector<double>>(j, "pose", where);
  const json intr = j.contains("intrinsics") ? j.at("intrinsics") : json();
  f.intrinsics.fx = field<double>(intr, "fx", where + ".intrinsics");
  f.intrinsics.fy = field<double>(intr, "fy", where + ".intrinsics");
  f.intrinsics.cx = field<double>(intr, "cx", where + ".intrinsics");
  f.intrinsics.cy = field<double>(intr, "cy", where + ".intrinsics");
  f.intrinsics.width = field<int>(intr, "width", where + ".intrinsics");
  f.intrinsics.height = field<int>(intr, "height", where + ".intrinsics");
  try {
    f.pose = Pose::from_matrix4(pose);
  } catch (const InvalidArgument& e) {
    throw DataError(where + ".pose: " + e.what());
  }
  return f;
}

}  // namespace

ScenePack load_scene_pack(const fs::path& dir) {
  const fs::path manifest = dir / "scene.json";
  const json j = read_json_file(manifest);
  const std::string where = manifest.string();
  ScenePack pack;
  pack.root = dir;
  pack.scene_id = field<std::string>(j, "scene_id", where);
  const json& frames = j.contains("frames") ? j.at("frames") : json();
  if (!frames.is_array()) throw DataError(where + ": 'frames' must be a list");
  for (std::size_t i = 0; i < frames.size(); ++i)
    pack.frames.push_back(parse_frame(frames[i], where + ": frames[" + std::to_string(i) + "]"));
  try {
    pack.validate();
  } catch (const InvalidArgument& e) {
    throw DataError(where + ": " + e.what());
  }
  return pack;
}

void save_scene_pack(const ScenePack& pack, const fs::path& dir) {
  fs::create_directories(dir);
  json frames = json::array();
  for (const auto& f : pack.frames) {
    const auto pose = f.pose.to_matrix4();
    frames.push_back({{"index", f.index},
                      {"image", f.image_ref},
                      {"depth", f.depth_ref},
                      {"pose", std::vector<double>(pose.begin(), pose.end())},
                      {"intrinsics",
                       {{"fx", f.intrinsics.fx},
                        {"fy", f.intrinsics.fy},
                        {"cx", f.intrinsics.cx},
                        {"cy", f.intrinsics.cy},
                        {"width", f.intrinsics.width},
                        {"height", f.intrinsics.height}}},
                      {"timestamp", f.timestamp}});
  }
  std::ofstream out(dir / "scene.json");
  out << json{{"scene_id", pack.scene_id}, {"frames", frames}}.dump(2) << '\n';
  if (!out) throw DataError("cannot write " + (dir / "scene.json").string());
}

DepthRaster load_depth(const fs::path& file) {
  fs::path sidecar = file;
  sidecar += ".json";
  const json header = read_json_file(sidecar);
  DepthRaster r;
  r.width = field<int>(header, "width", sidecar.string());
  r.height = field<int>(header, "height", sidecar.string());
  r.depth_scale = header.value("depth_scale", 1000.0);
  if (r.width <= 0 || r.height <= 0 || !(r.depth_scale > 0.0))
    throw DataError(sidecar.string() + ": width, height and depth_scale must be positive");
  const auto count = static_cast<std::size_t>(r.width) * static_cast<std::size_t>(r.height);
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open " + file.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() != count * 2)
    throw DataError(file.string() + ": expected " + std::to_string(count * 2) + " bytes, found " +
                    std::to_string(bytes.size()));
  r.raw.resize(count);
  for (std::size_t i = 0; i < count; ++i)
    r.raw[i] = static_cast<std::uint16_t>(bytes[2 * i] | (bytes[2 * i + 1] << 8));
  return r;
}

void save_depth(const DepthRaster& r, const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::string bytes(r.raw.size() * 2, '\0');
  for (std::size_t i = 0; i < r.raw.size(); ++i) {
    bytes[2 * i] = static_cast<char>(r.raw[i] & 0xff);
    bytes[2 * i + 1] = static_cast<char>(r.raw[i] >> 8);
  }
  std::ofstream out(file, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  fs::path sidecar = file;
  sidecar += ".json";
  std::ofstream side(sidecar);
  side << json{{"width", r.width}, {"height", r.height}, {"depth_scale", r.depth_scale}}.dump()
       << '\n';
  if (!out || !side) throw DataError("cannot write depth raster " + file.string());
}

}  // namespace geoperc
