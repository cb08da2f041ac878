#include "records.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "cli_io.hpp"
#include "geoperc/error.hpp"
#include "geoperc/frame.hpp"

namespace geoperc::cli {
namespace {

namespace fs = std::filesystem;

struct Ctx {
  const std::string& file;
  std::size_t line;
  std::vector<Diagnostic>& diags;

  void fail(const std::string& defect) const { diags.push_back({file, line, defect}); }
};

std::optional<std::string> string_field(const json& rec, const char* key, const Ctx& ctx,
                                        bool allow_empty = false) {
  if (!rec.contains(key)) {
    ctx.fail(std::string("missing field \"") + key + "\"");
    return std::nullopt;
  }
  if (!rec[key].is_string()) {
    ctx.fail(std::string("\"") + key + "\" must be a string");
    return std::nullopt;
  }
  auto s = rec[key].get<std::string>();
  if (!allow_empty && s.empty()) {
    ctx.fail(std::string("\"") + key + "\" must not be empty");
    return std::nullopt;
  }
  return s;
}

std::optional<int> int_field(const json& rec, const char* key, int min_value, const Ctx& ctx) {
  if (!rec.contains(key)) {
    ctx.fail(std::string("missing field \"") + key + "\"");
    return std::nullopt;
  }
  const auto& v = rec[key];
  if (!v.is_number_integer() || v.get<long long>() < min_value) {
    ctx.fail(std::string("\"") + key + "\" must be an integer >= " + std::to_string(min_value));
    return std::nullopt;
  }
  return v.get<int>();
}

std::optional<std::vector<double>> numbers(const json& v, std::size_t arity, const std::string& name,
                                           const Ctx& ctx) {
  if (!v.is_array()) {
    ctx.fail(name + ": expected a list of " + std::to_string(arity) + " numbers");
    return std::nullopt;
  }
  if (v.size() != arity) {
    ctx.fail(name + ": arity " + std::to_string(v.size()) + ", expected " + std::to_string(arity));
    return std::nullopt;
  }
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number() || !std::isfinite(x.get<double>())) {
      ctx.fail(name + ": entries must be finite numbers");
      return std::nullopt;
    }
    out.push_back(x.get<double>());
  }
  return out;
}

std::optional<OrientedBox3> box_value(const json& v, const std::string& name, const Ctx& ctx) {
  const auto vals = numbers(v, 9, name, ctx);
  if (!vals) return std::nullopt;
  if ((*vals)[3] <= 0 || (*vals)[4] <= 0 || (*vals)[5] <= 0) {
    ctx.fail(name + ": sizes must be positive");
    return std::nullopt;
  }
  return OrientedBox3::from_array(*vals);
}

std::optional<OrientedBox3> box_field(const json& rec, const char* key, const Ctx& ctx) {
  if (!rec.contains(key)) {
    ctx.fail(std::string("missing field \"") + key + "\"");
    return std::nullopt;
  }
  return box_value(rec[key], key, ctx);
}

std::optional<Vec3> point_field(const json& rec, const char* key, const Ctx& ctx) {
  if (!rec.contains(key)) {
    ctx.fail(std::string("missing field \"") + key + "\"");
    return std::nullopt;
  }
  const auto v = numbers(rec[key], 3, key, ctx);
  if (!v) return std::nullopt;
  return Vec3{(*v)[0], (*v)[1], (*v)[2]};
}

json read_json_document(const std::string& file, std::vector<Diagnostic>& diags) {
  std::ifstream in(file);
  if (!in) {
    diags.push_back({file, 0, "cannot open file"});
    return nullptr;
  }
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    diags.push_back({file, 0, std::string("invalid JSON: ") + e.what()});
    return nullptr;
  }
}

}  // namespace

GtSet load_gt(const std::string& file, std::vector<Diagnostic>& diags) {
  GtSet gt;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& [line, rec] : read_jsonl(file, diags)) {
    const Ctx ctx{file, line, diags};
    if (!rec.is_object()) {
      ctx.fail("record must be a JSON object");
      continue;
    }
    const auto id = string_field(rec, "sample_id", ctx);
    const auto task = string_field(rec, "task", ctx);
    if (!id || !task) continue;
    if (!seen.insert({*task, *id}).second) {
      ctx.fail("duplicate sample_id \"" + *id + "\" for task " + *task);
      continue;
    }
    const auto n = int_field(rec, "num_frames", 1, ctx);
    if (*task == "grounding") {
      const auto query = string_field(rec, "query", ctx);
      const auto box = box_field(rec, "bbox_3d", ctx);
      std::optional<int> frame;
      bool ok = true;
      if (rec.contains("frame")) {
        frame = int_field(rec, "frame", 0, ctx);
        ok = frame.has_value();
        if (frame && n && *frame >= *n) {
          ctx.fail("\"frame\" must be below num_frames");
          ok = false;
        }
      }
      if (n && query && box && ok) gt.grounding.push_back({*id, *query, *n, frame, *box});
    } else if (*task == "detection") {
      const auto scene = string_field(rec, "scene_id", ctx);
      if (!rec.contains("objects") || !rec["objects"].is_array()) {
        ctx.fail("\"objects\" must be a list");
        continue;
      }
      std::vector<DetectionEntry> objects;
      bool ok = true;
      for (std::size_t i = 0; i < rec["objects"].size(); ++i) {
        const auto& o = rec["objects"][i];
        const std::string where = "objects[" + std::to_string(i) + "]";
        if (!o.is_object() || !o.contains("label") || !o["label"].is_string()) {
          ctx.fail(where + ": needs a string \"label\"");
          ok = false;
          continue;
        }
        if (!o.contains("bbox_3d")) {
          ctx.fail(where + ": missing field \"bbox_3d\"");
          ok = false;
          continue;
        }
        const auto box = box_value(o["bbox_3d"], where + ".bbox_3d", ctx);
        if (!box) {
          ok = false;
          continue;
        }
        objects.push_back({o["label"].get<std::string>(), *box});
      }
      if (n && scene && ok) gt.detection.push_back({*id, *scene, *n, std::move(objects)});
    } else if (*task == "caption") {
      const auto point = point_field(rec, "point", ctx);
      const auto box = box_field(rec, "bbox_3d", ctx);
      const auto& refs = rec.contains("references") ? rec["references"] : json();
      const bool refs_ok = refs.is_array() && !refs.empty() &&
                           std::all_of(refs.begin(), refs.end(), [](const json& r) { return r.is_string(); });
      if (!refs_ok) ctx.fail("\"references\" must be a non-empty list of strings");
      if (n && point && box && refs_ok)
        gt.caption.push_back({*id, *n, *point, *box, refs.get<std::vector<std::string>>()});
    } else {
      ctx.fail("unknown task \"" + *task + "\"");
    }
  }
  return gt;
}

PredSet load_predictions(const std::string& file, std::vector<Diagnostic>& diags) {
  static const std::set<std::string> tasks{"point_semantic", "grounding_frame", "grounding", "detection",
                                           "caption"};
  PredSet preds;
  for (const auto& [line, rec] : read_jsonl(file, diags)) {
    const Ctx ctx{file, line, diags};
    if (!rec.is_object()) {
      ctx.fail("record must be a JSON object");
      continue;
    }
    const auto id = string_field(rec, "sample_id", ctx);
    const auto task = string_field(rec, "task", ctx);
    const auto raw = string_field(rec, "raw_text", ctx, true);
    if (!id || !task || !raw) continue;
    if (!tasks.count(*task)) {
      ctx.fail("unknown task \"" + *task + "\"");
      continue;
    }
    PredRecord p{*raw, std::nullopt};
    if (rec.contains("bbox_3d") && !rec["bbox_3d"].is_null()) {
      p.box = box_value(rec["bbox_3d"], "bbox_3d", ctx);
      if (!p.box) continue;
    }
    if (!preds.emplace(std::pair{*task, *id}, std::move(p)).second)
      ctx.fail("duplicate prediction for sample_id \"" + *id + "\" and task " + *task);
  }
  return preds;
}

std::vector<PointCloudRecord> load_point_clouds(const std::string& file,
                                                std::vector<Diagnostic>& diags) {
  std::vector<PointCloudRecord> out;
  std::set<std::string> seen;
  for (const auto& [line, rec] : read_jsonl(file, diags)) {
    const Ctx ctx{file, line, diags};
    if (!rec.is_object()) {
      ctx.fail("record must be a JSON object");
      continue;
    }
    const auto id = string_field(rec, "scene_id", ctx);
    if (!id) continue;
    if (!seen.insert(*id).second) {
      ctx.fail("duplicate scene_id \"" + *id + "\"");
      continue;
    }
    if (!rec.contains("points") || !rec["points"].is_array() || rec["points"].empty()) {
      ctx.fail("\"points\" must be a non-empty list");
      continue;
    }
    PointCloudRecord pc{*id, {}};
    bool ok = true;
    for (std::size_t i = 0; i < rec["points"].size() && ok; ++i) {
      const auto v = numbers(rec["points"][i], 3, "points[" + std::to_string(i) + "]", ctx);
      ok = v.has_value();
      if (ok) pc.points.push_back({(*v)[0], (*v)[1], (*v)[2]});
    }
    if (ok) out.push_back(std::move(pc));
  }
  return out;
}

std::vector<std::string> load_class_list(const std::string& file, std::vector<Diagnostic>& diags) {
  std::vector<std::string> out;
  std::ifstream in(file);
  if (!in) {
    diags.push_back({file, 0, "cannot open file"});
    return out;
  }
  std::set<std::string> seen;
  std::string text;
  for (std::size_t line = 1; std::getline(in, text); ++line) {
    const auto label = normalize_label(text);
    if (label.empty() || label[0] == '#') continue;
    if (!seen.insert(label).second) {
      diags.push_back({file, line, "duplicate class \"" + label + "\""});
      continue;
    }
    out.push_back(label);
  }
  if (out.empty() && seen.empty()) diags.push_back({file, 0, "class list is empty"});
  return out;
}

std::vector<fs::path> find_scene_dirs(const fs::path& root) {
  if (fs::exists(root / "scene.json")) return {root};
  std::vector<fs::path> dirs;
  if (fs::is_directory(root))
    for (const auto& entry : fs::directory_iterator(root))
      if (entry.is_directory() && fs::exists(entry.path() / "scene.json")) dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

void validate_scene_packs(const std::string& root, std::vector<Diagnostic>& diags) {
  if (!fs::is_directory(root)) {
    diags.push_back({root, 0, "not a directory"});
    return;
  }
  const auto dirs = find_scene_dirs(root);
  if (dirs.empty()) {
    diags.push_back({root, 0, "no scene packs (directories with scene.json) found"});
    return;
  }
  for (const auto& dir : dirs) {
    ScenePack pack;
    try {
      pack = load_scene_pack(dir);
    } catch (const std::exception& e) {
      diags.push_back({(dir / "scene.json").string(), 0, e.what()});
      continue;
    }
    for (const auto& f : pack.frames) {
      fs::path sidecar = pack.root / f.depth_ref;
      sidecar += ".json";
      std::vector<Diagnostic> local;
      const json header = read_json_document(sidecar.string(), local);
      if (!local.empty()) {
        diags.insert(diags.end(), local.begin(), local.end());
        continue;
      }
      bool ok = true;
      for (const auto& [key, expected] : {std::pair{"width", f.intrinsics.width},
                                          std::pair{"height", f.intrinsics.height}}) {
        if (!header.is_object() || !header.contains(key) || !header[key].is_number_integer()) {
          diags.push_back({sidecar.string(), 0, std::string("missing integer field \"") + key + "\""});
          ok = false;
        } else if (header[key].get<long long>() != expected) {
          diags.push_back({sidecar.string(), 0,
                           std::string("\"") + key + "\" is " + std::to_string(header[key].get<long long>()) +
                               " but frame " + std::to_string(f.index) + " intrinsics say " +
                               std::to_string(expected)});
          ok = false;
        }
      }
      if (!ok) continue;
      try {
        load_depth(pack.root / f.depth_ref);
      } catch (const std::exception& e) {
        diags.push_back({(pack.root / f.depth_ref).string(), 0, e.what()});
      }
    }
  }
}

std::vector<ConversationLine> load_conversations(const std::string& file,
                                                 std::vector<Diagnostic>& diags) {
  std::vector<ConversationLine> out;
  for (const auto& [line, rec] : read_jsonl(file, diags)) {
    const Ctx ctx{file, line, diags};
    if (!rec.is_object()) {
      ctx.fail("record must be a JSON object");
      continue;
    }
    const auto id = string_field(rec, "id", ctx);
    if (!id) continue;
    const auto& conv = rec.contains("conversations") ? rec["conversations"] : json();
    auto turn_ok = [](const json& t, const char* role) {
      return t.is_object() && t.value("from", "") == role && t.contains("value") && t["value"].is_string();
    };
    if (!conv.is_array() || conv.size() != 2 || !turn_ok(conv[0], "human") || !turn_ok(conv[1], "gpt")) {
      ctx.fail("\"conversations\" must hold a human turn followed by a gpt turn");
      continue;
    }
    std::vector<std::string> images;
    if (conv[0].contains("images")) {
      const auto& im = conv[0]["images"];
      if (!im.is_array() || !std::all_of(im.begin(), im.end(), [](const json& x) { return x.is_string(); })) {
        ctx.fail("\"images\" must be a list of strings");
        continue;
      }
      images = im.get<std::vector<std::string>>();
    }
    out.push_back({*id, conv[0]["value"].get<std::string>(), std::move(images),
                   conv[1]["value"].get<std::string>()});
  }
  return out;
}

FusionDemoConfig load_fusion_demo_config(const std::string& file, std::vector<Diagnostic>& diags) {
  FusionDemoConfig cfg;
  const json doc = read_json_document(file, diags);
  if (doc.is_null()) return cfg;
  const Ctx ctx{file, 0, diags};
  if (!doc.is_object()) {
    ctx.fail("expected a JSON object");
    return cfg;
  }
  try {
    cfg.fusion.channels = doc.value("channels", 8);
    cfg.fusion.num_layers = doc.value("num_layers", cfg.fusion.num_layers);
    cfg.fusion.inject_layers = doc.value("inject_layers", cfg.fusion.inject_layers);
    cfg.fusion.variant = parse_fusion_variant(doc.value("variant", std::string("gated")));
    if (doc.contains("grid")) {
      const auto grid = doc["grid"].get<std::vector<int>>();
      if (grid.size() != 2) throw InvalidArgument("\"grid\" must be [rows, cols]");
      cfg.grid_rows = grid[0];
      cfg.grid_cols = grid[1];
    }
    cfg.init_scale = doc.value("init_scale", cfg.init_scale);
    cfg.fusion.validate();
    if (cfg.grid_rows < 2 || cfg.grid_cols < 2 || cfg.grid_rows % 2 || cfg.grid_cols % 2)
      throw InvalidArgument("\"grid\" sizes must be even and at least 2");
    if (!(cfg.init_scale > 0.0) || !std::isfinite(cfg.init_scale))
      throw InvalidArgument("\"init_scale\" must be positive");
  } catch (const json::exception& e) {
    ctx.fail(std::string("wrong field type: ") + e.what());
  } catch (const std::exception& e) {
    ctx.fail(e.what());
  }
  return cfg;
}

}  // namespace geoperc::cli
