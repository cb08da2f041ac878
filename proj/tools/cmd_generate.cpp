// gen-sparse and prompt-emit.

#include <algorithm>
#include <ostream>

#include "cli_io.hpp"
#include "commands.hpp"
#include "geoperc/error.hpp"
#include "geoperc/frame.hpp"
#include "geoperc/image.hpp"
#include "geoperc/sparse.hpp"
#include "records.hpp"

namespace geoperc::cli {
namespace {

namespace fs = std::filesystem;

constexpr int kPointmapStride = 4;

std::string window_id(const std::string& scene, std::span<const int> frames) {
  std::string id = scene + ":";
  for (std::size_t i = 0; i < frames.size(); ++i) id += (i ? "-" : "") + std::to_string(frames[i]);
  return id;
}

json box_json(const OrientedBox3& box) {
  const auto a = box.to_array();
  return std::vector<double>(a.begin(), a.end());
}

struct SceneOutput {
  std::vector<std::string> samples;
  SparseGenStats stats;
  std::vector<std::string> grounding, detection, caption, pointmap;
};

// Benchmark records derived from the annotations for every window of the scene.
void derive_tasks(const ScenePack& pack, const DepthSet& depths,
                  std::span<const ObjectAnnotation> objects, const RunConfig& cfg, SceneOutput& out) {
  for (const auto& window : sample_frames(pack, cfg.fps, cfg.window)) {
    const std::string wid = window_id(pack.scene_id, window);
    const int n = static_cast<int>(window.size());
    const Pose& first = pack.frame(window.front()).pose;

    json det_objects = json::array();
    for (std::size_t k = 0; k < objects.size(); ++k) {
      const auto& obj = objects[k];
      if (!obj.box_world) continue;
      std::optional<int> anchor;
      for (int pos = 0; pos < n && !anchor; ++pos) {
        const auto& frame = pack.frame(window[static_cast<std::size_t>(pos)]);
        if (select_prompt_pixel(obj, frame, depths.at(frame.index), cfg.tolerance).pixel) anchor = pos;
      }
      if (!anchor) continue;
      const OrientedBox3 box_first = transform_box(*obj.box_world, Pose{}, first);
      det_objects.push_back({{"label", obj.label}, {"bbox_3d", box_json(box_first)}});

      const std::string oid = wid + ":obj" + std::to_string(k);
      const Pose& anchor_pose = pack.frame(window[static_cast<std::size_t>(*anchor)]).pose;
      ordered_json g{{"sample_id", oid},
                     {"task", "grounding"},
                     {"scene_id", pack.scene_id},
                     {"num_frames", n},
                     {"query", obj.description.empty() ? obj.label : obj.description},
                     {"frame", *anchor},
                     {"bbox_3d", box_json(transform_box(*obj.box_world, Pose{}, anchor_pose))}};
      out.grounding.push_back(g.dump());

      if (!obj.captions.empty()) {
        const Vec3 p = to_first_frame(obj.center_world, first);
        ordered_json c{{"sample_id", oid},
                       {"task", "caption"},
                       {"scene_id", pack.scene_id},
                       {"num_frames", n},
                       {"point", {p.x, p.y, p.z}},
                       {"bbox_3d", box_json(box_first)},
                       {"references", obj.captions}};
        out.caption.push_back(c.dump());
      }
    }
    ordered_json d{{"sample_id", wid},
                   {"task", "detection"},
                   {"scene_id", pack.scene_id},
                   {"num_frames", n},
                   {"objects", det_objects}};
    out.detection.push_back(d.dump());

    json points = json::array();
    for (int idx : window) {
      const auto& frame = pack.frame(idx);
      const auto& depth = depths.at(idx);
      for (int v = 0; v < depth.height; v += kPointmapStride)
        for (int u = 0; u < depth.width; u += kPointmapStride) {
          const double z = depth.meters(u, v);
          if (z <= 0.0) continue;
          const Vec3 cam = back_project({static_cast<double>(u), static_cast<double>(v)}, z, frame.intrinsics);
          const Vec3 p = to_first_frame(frame.pose.apply(cam), first);
          points.push_back({p.x, p.y, p.z});
        }
    }
    out.pointmap.push_back(ordered_json{{"scene_id", wid}, {"points", points}}.dump());
  }
}

SceneOutput process_scene(const fs::path& dir, const fs::path& scenes_root,
                          const std::map<std::string, std::vector<ObjectAnnotation>>& annotations,
                          const RunConfig& cfg) {
  const ScenePack pack = load_scene_pack(dir);
  const DepthSet depths = load_pack_depths(pack);
  const auto it = annotations.find(pack.scene_id);
  const std::vector<ObjectAnnotation> none;
  const auto& objects = it == annotations.end() ? none : it->second;

  SparseGenOptions opts;
  opts.fps = cfg.fps;
  opts.window = cfg.window;
  opts.tolerance = cfg.tolerance;
  opts.max_samples = cfg.max_samples;
  opts.seed = cfg.seed;
  auto result = generate_scene_samples(pack, objects, opts);

  SceneOutput out;
  out.stats = result.stats;
  const fs::path prefix = fs::relative(dir, scenes_root);
  for (const auto& sample : result.samples) {
    std::vector<std::string> images;
    for (int idx : sample.frame_indices) {
      const auto& frame = pack.frame(idx);
      if (idx == sample.marked_frame && !cfg.marked_dir.empty()) {
        const std::string name = pack.scene_id + "_" + std::to_string(idx) + "_" +
                                 std::to_string(sample.pixel.u) + "_" + std::to_string(sample.pixel.v) + ".ppm";
        save_ppm(mark_pixel(load_ppm(pack.root / frame.image_ref), sample.pixel), fs::path(cfg.marked_dir) / name);
        images.push_back((fs::path(cfg.marked_dir) / name).generic_string());
      } else {
        images.push_back((prefix / frame.image_ref).lexically_normal().generic_string());
      }
    }
    out.samples.push_back(conversation_jsonl(emit_conversation(sample, images), sample));
  }
  if (!cfg.tasks_out.empty()) derive_tasks(pack, depths, objects, cfg, out);
  return out;
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string s;
  for (const auto& l : lines) s += l + "\n";
  return s;
}

std::string default_report(const RunConfig& cfg) {
  return cfg.report.empty() ? cfg.out + ".report.json" : cfg.report;
}

}  // namespace

int gen_sparse(const RunConfig& cfg, std::ostream& log) {
  const auto dirs = find_scene_dirs(cfg.scenes);
  const auto annotations = load_annotations(cfg.annotations);
  if (!cfg.marked_dir.empty()) fs::create_directories(cfg.marked_dir);

  std::vector<SceneOutput> results(dirs.size());
  parallel_for(dirs.size(), resolve_threads(cfg.threads),
               [&](std::size_t i) { results[i] = process_scene(dirs[i], cfg.scenes, annotations, cfg); });

  std::vector<std::string> samples, grounding, detection, caption, pointmap;
  ordered_json scenes = ordered_json::array();
  std::size_t attempted = 0, accepted = 0, skipped = 0;
  for (const auto& r : results) {
    samples.insert(samples.end(), r.samples.begin(), r.samples.end());
    grounding.insert(grounding.end(), r.grounding.begin(), r.grounding.end());
    detection.insert(detection.end(), r.detection.begin(), r.detection.end());
    caption.insert(caption.end(), r.caption.begin(), r.caption.end());
    pointmap.insert(pointmap.end(), r.pointmap.begin(), r.pointmap.end());
    scenes.push_back({{"scene_id", r.stats.scene_id},
                      {"attempted", r.stats.attempted},
                      {"accepted", r.stats.accepted},
                      {"skipped", r.stats.skipped}});
    attempted += r.stats.attempted;
    accepted += r.stats.accepted;
    skipped += r.stats.skipped;
  }
  write_atomic(cfg.out, join_lines(samples));

  ordered_json outputs{{"samples", cfg.out}};
  if (!cfg.tasks_out.empty()) {
    const fs::path dir(cfg.tasks_out);
    write_atomic(dir / "grounding.jsonl", join_lines(grounding));
    write_atomic(dir / "detection.jsonl", join_lines(detection));
    write_atomic(dir / "caption.jsonl", join_lines(caption));
    write_atomic(dir / "pointmap.jsonl", join_lines(pointmap));
    outputs["tasks"] = {{"grounding", grounding.size()},
                        {"detection", detection.size()},
                        {"caption", caption.size()},
                        {"pointmap", pointmap.size()}};
  }

  auto report = report_header("gen-sparse", {{"scenes", cfg.scenes},
                                             {"annotations", cfg.annotations},
                                             {"out", cfg.out},
                                             {"tasks_out", cfg.tasks_out},
                                             {"marked_dir", cfg.marked_dir},
                                             {"fps", cfg.fps},
                                             {"window", cfg.window},
                                             {"tolerance", cfg.tolerance},
                                             {"max_samples", cfg.max_samples},
                                             {"seed", cfg.seed}});
  report["totals"] = {{"scenes", results.size()},
                      {"attempted", attempted},
                      {"accepted", accepted},
                      {"skipped", skipped}};
  report["scenes"] = scenes;
  report["outputs"] = outputs;
  write_atomic(default_report(cfg), dump_report(report));
  if (!cfg.markdown.empty())
    write_atomic(cfg.markdown, markdown_table("gen-sparse", {{"scenes", std::to_string(results.size())},
                                                             {"attempted", std::to_string(attempted)},
                                                             {"accepted", std::to_string(accepted)},
                                                             {"skipped", std::to_string(skipped)}}));
  log << "gen-sparse: " << results.size() << " scenes, " << accepted << " samples accepted, " << skipped
      << " skipped of " << attempted << "\n";
  return kOk;
}

int prompt_emit(const RunConfig& cfg, std::ostream& log) {
  std::vector<Diagnostic> ignored;
  std::vector<std::string> lines;
  std::map<std::string, std::size_t> counts;
  auto emit = [&](ordered_json rec) {
    ++counts[rec["task"].get<std::string>()];
    lines.push_back(rec.dump());
  };

  if (!cfg.samples.empty())
    for (const auto& c : load_conversations(cfg.samples, ignored))
      emit({{"sample_id", c.id}, {"task", "point_semantic"}, {"prompt", c.prompt}, {"images", c.images},
            {"answer", c.answer}});

  if (!cfg.gt.empty()) {
    const GtSet gt = load_gt(cfg.gt, ignored);
    for (const auto& g : gt.grounding) {
      PromptPayload p;
      p.num_frames = g.num_frames;
      p.query = g.query;
      if (g.frame)
        emit({{"sample_id", g.sample_id},
              {"task", "grounding_frame"},
              {"prompt", serialize_prompt(PromptTask::grounding_frame, p)},
              {"answer", fence_json(frame_json({*g.frame}))}});
      emit({{"sample_id", g.sample_id},
            {"task", "grounding"},
            {"prompt", serialize_prompt(PromptTask::grounding_box, p)},
            {"answer", fence_json(bbox3d_json(g.box))}});
    }
    for (const auto& d : gt.detection) {
      PromptPayload p;
      p.num_frames = d.num_frames;
      emit({{"sample_id", d.sample_id},
            {"task", "detection"},
            {"prompt", serialize_prompt(PromptTask::detection, p)},
            {"answer", fence_json(detections_json(d.objects))}});
    }
    for (const auto& c : gt.caption) {
      PromptPayload p;
      p.num_frames = c.num_frames;
      p.point = c.point;
      emit({{"sample_id", c.sample_id},
            {"task", "caption"},
            {"prompt", serialize_prompt(PromptTask::caption, p)},
            {"answer", c.references.front()},
            {"answer_bbox_3d", box_json(c.box)}});
    }
  }
  write_atomic(cfg.out, join_lines(lines));

  ordered_json per_task(counts);
  auto report = report_header("prompt-emit", {{"gt", cfg.gt}, {"samples", cfg.samples}, {"out", cfg.out}});
  report["records"] = lines.size();
  report["per_task"] = per_task;
  write_atomic(default_report(cfg), dump_report(report));
  if (!cfg.markdown.empty()) {
    std::vector<std::pair<std::string, std::string>> rows;
    for (const auto& [task, n] : counts) rows.emplace_back(task, std::to_string(n));
    write_atomic(cfg.markdown, markdown_table("prompt-emit", rows));
  }
  log << "prompt-emit: " << lines.size() << " prompts written to " << cfg.out << "\n";
  return kOk;
}

}  // namespace geoperc::cli
