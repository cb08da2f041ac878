// eval-grounding, eval-detection, eval-caption and eval-pointmap.

#include <algorithm>
#include <ostream>
#include <set>

#include "cli_io.hpp"
#include "commands.hpp"
#include "geoperc/error.hpp"
#include "geoperc/metrics.hpp"
#include "records.hpp"

namespace geoperc::cli {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

const PredRecord* find_pred(const PredSet& preds, const std::string& task, const std::string& id) {
  const auto it = preds.find({task, id});
  return it == preds.end() ? nullptr : &it->second;
}

std::size_t count_task(const PredSet& preds, const std::string& task) {
  return static_cast<std::size_t>(std::count_if(preds.begin(), preds.end(),
                                                [&](const auto& kv) { return kv.first.first == task; }));
}

// Predictions whose sample id does not occur in the ground truth for that task.
std::size_t unmatched(const PredSet& preds, const std::string& task, const std::set<std::string>& ids) {
  std::size_t n = 0;
  for (const auto& [key, rec] : preds) n += key.first == task && !ids.count(key.second);
  return n;
}

void write_outputs(const RunConfig& cfg, const ordered_json& report, const std::string& title,
                   const std::vector<std::pair<std::string, std::string>>& rows) {
  write_atomic(cfg.out, dump_report(report));
  if (!cfg.markdown.empty()) write_atomic(cfg.markdown, markdown_table(title, rows));
}

ordered_json stats_json(const DistanceStats& s) { return {{"mean", s.mean}, {"median", s.median}}; }

}  // namespace

int eval_grounding(const RunConfig& cfg, std::ostream& log) {
  std::vector<Diagnostic> ignored;
  const GtSet gt = load_gt(cfg.gt, ignored);
  const PredSet preds = load_predictions(cfg.pred, ignored);
  if (gt.grounding.empty()) throw DataError(cfg.gt + ": no grounding records");

  std::vector<GroundingPrediction> p;
  std::vector<GroundingTruth> g;
  std::map<std::string, std::size_t> defects;
  std::set<std::string> ids;
  std::size_t missing = 0, frame_total = 0, frame_hits = 0;
  for (const auto& rec : gt.grounding) {
    ids.insert(rec.sample_id);
    g.push_back({rec.sample_id, rec.box});
    GroundingPrediction gp{rec.sample_id, std::nullopt};
    if (const auto* pr = find_pred(preds, "grounding", rec.sample_id)) {
      try {
        gp.box = parse_bbox3d(pr->raw_text).bbox_3d;
      } catch (const ParseError& e) {
        ++defects[std::string(to_string(e.defect()))];
      }
    } else {
      ++missing;
    }
    p.push_back(std::move(gp));
    if (rec.frame) {
      ++frame_total;
      if (const auto* pr = find_pred(preds, "grounding_frame", rec.sample_id)) {
        try {
          frame_hits += parse_frame(pr->raw_text).frame == *rec.frame;
        } catch (const ParseError& e) {
          ++defects["frame:" + std::string(to_string(e.defect()))];
        }
      }
    }
  }
  const auto r = grounding_accuracy(p, g);

  auto report = report_header("eval-grounding", {{"pred", cfg.pred}, {"gt", cfg.gt}, {"thresholds", {0.25, 0.5}}});
  ordered_json metrics{{"acc_025", r.acc_025}, {"acc_05", r.acc_05}};
  const bool with_frames = frame_total > 0 && count_task(preds, "grounding_frame") > 0;
  if (with_frames) metrics["frame_accuracy"] = static_cast<double>(frame_hits) / static_cast<double>(frame_total);
  report["metrics"] = metrics;
  report["counts"] = {{"n_samples", r.n_samples},
                      {"n_parse_failures", r.n_parse_failures},
                      {"missing_predictions", missing},
                      {"unmatched_predictions", unmatched(preds, "grounding", ids)}};
  report["parse_failure_defects"] = ordered_json(defects);
  std::vector<std::pair<std::string, std::string>> rows{{"Acc@0.25", fixed(r.acc_025)},
                                                        {"Acc@0.5", fixed(r.acc_05)},
                                                        {"samples", std::to_string(r.n_samples)},
                                                        {"parse failures", std::to_string(r.n_parse_failures)}};
  if (with_frames) rows.emplace_back("frame accuracy", fixed(metrics["frame_accuracy"].get<double>()));
  write_outputs(cfg, report, "eval-grounding", rows);
  log << "eval-grounding: Acc@0.25=" << fixed(r.acc_025) << " Acc@0.5=" << fixed(r.acc_05) << " over "
      << r.n_samples << " samples (" << r.n_parse_failures << " parse failures)\n";
  return kOk;
}

int eval_detection(const RunConfig& cfg, std::ostream& log) {
  std::vector<Diagnostic> ignored;
  const GtSet gt = load_gt(cfg.gt, ignored);
  const PredSet preds = load_predictions(cfg.pred, ignored);
  const auto classes = load_class_list(cfg.classes, ignored);
  if (gt.detection.empty()) throw DataError(cfg.gt + ": no detection records");

  std::vector<DetectionScene> scenes(gt.detection.size());
  std::size_t missing = 0, unparseable = 0;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < gt.detection.size(); ++i) {
    const auto& rec = gt.detection[i];
    ids.insert(rec.sample_id);
    scenes[i].scene_id = rec.sample_id;
    scenes[i].gt = rec.objects;
    if (const auto* pr = find_pred(preds, "detection", rec.sample_id)) {
      try {
        scenes[i].pred = parse_detections(pr->raw_text);
      } catch (const ParseError&) {
        ++unparseable;
      }
    } else {
      ++missing;
    }
  }

  // Per-scene scoring in parallel, summed in input order.
  std::vector<DetectionMetrics> per_scene(scenes.size());
  parallel_for(scenes.size(), resolve_threads(cfg.threads), [&](std::size_t i) {
    per_scene[i] = detection_prf(std::span(&scenes[i], 1), cfg.iou, classes, cfg.strict);
  });
  DetectionMetrics total;
  for (const auto& m : per_scene) {
    total.tp += m.tp;
    total.fp += m.fp;
    total.fn += m.fn;
    total.parse_failures += m.parse_failures;
    total.out_of_list += m.out_of_list;
    for (const auto& [c, k] : m.per_class) {
      auto& t = total.per_class[c];
      t.tp += k.tp;
      t.fp += k.fp;
      t.fn += k.fn;
    }
  }
  // An unparseable output drops the whole answer; strict mode scores it as one unmatched prediction.
  if (cfg.strict) total.fp += unparseable;
  total = finalize_detection(std::move(total));

  auto report = report_header("eval-detection", {{"pred", cfg.pred},
                                                 {"gt", cfg.gt},
                                                 {"classes", cfg.classes},
                                                 {"iou", cfg.iou},
                                                 {"strict", cfg.strict},
                                                 {"matching", "maximum cardinality, ties by total IoU"}});
  report["metrics"] = {{"precision", total.precision}, {"recall", total.recall}, {"f1", total.f1}};
  report["counts"] = {{"tp", total.tp},
                      {"fp", total.fp},
                      {"fn", total.fn},
                      {"samples", scenes.size()},
                      {"parse_failures", total.parse_failures},
                      {"unparseable_outputs", unparseable},
                      {"missing_predictions", missing},
                      {"unmatched_predictions", unmatched(preds, "detection", ids)},
                      {"out_of_list_predictions", total.out_of_list}};
  ordered_json per_class = ordered_json::object();
  for (const auto& [c, k] : total.per_class) per_class[c] = {{"tp", k.tp}, {"fp", k.fp}, {"fn", k.fn}};
  report["per_class"] = per_class;
  write_outputs(cfg, report, "eval-detection",
                {{"precision", fixed(total.precision)},
                 {"recall", fixed(total.recall)},
                 {"F1", fixed(total.f1)},
                 {"tp / fp / fn", std::to_string(total.tp) + " / " + std::to_string(total.fp) + " / " +
                                      std::to_string(total.fn)},
                 {"parse failures", std::to_string(total.parse_failures)}});
  log << "eval-detection: P=" << fixed(total.precision) << " R=" << fixed(total.recall)
      << " F1=" << fixed(total.f1) << " (tp=" << total.tp << " fp=" << total.fp << " fn=" << total.fn
      << ", parse failures " << total.parse_failures << ")\n";
  return kOk;
}

int eval_caption(const RunConfig& cfg, std::ostream& log) {
  std::vector<Diagnostic> ignored;
  const GtSet gt = load_gt(cfg.gt, ignored);
  const PredSet preds = load_predictions(cfg.pred, ignored);
  if (gt.caption.empty()) throw DataError(cfg.gt + ": no caption records");

  std::vector<CaptionSample> samples;
  std::size_t missing = 0, missing_boxes = 0;
  std::set<std::string> ids;
  for (const auto& rec : gt.caption) {
    ids.insert(rec.sample_id);
    CaptionSample s{"", rec.references, 0.0};
    if (const auto* pr = find_pred(preds, "caption", rec.sample_id)) {
      s.candidate = trim(pr->raw_text);
      if (pr->box)
        s.iou = box_iou(*pr->box, rec.box);
      else
        ++missing_boxes;
    } else {
      ++missing;
    }
    samples.push_back(std::move(s));
  }
  const auto sc = caption_scores(samples, cfg.iou);

  auto report = report_header("eval-caption", {{"pred", cfg.pred},
                                               {"gt", cfg.gt},
                                               {"iou", cfg.iou},
                                               {"idf_corpus", "evaluated references"}});
  report["metrics"] = {{"cider", sc.cider}, {"bleu4", sc.bleu4}, {"rouge_l", sc.rouge_l}};
  report["counts"] = {{"n_samples", sc.n_samples},
                      {"n_passing_iou", sc.n_passing},
                      {"missing_predictions", missing},
                      {"missing_boxes", missing_boxes},
                      {"unmatched_predictions", unmatched(preds, "caption", ids)}};
  write_outputs(cfg, report, "eval-caption",
                {{"CIDEr@" + fixed(cfg.iou, 2), fixed(sc.cider)},
                 {"BLEU-4@" + fixed(cfg.iou, 2), fixed(sc.bleu4)},
                 {"ROUGE-L@" + fixed(cfg.iou, 2), fixed(sc.rouge_l)},
                 {"passing IoU", std::to_string(sc.n_passing) + " / " + std::to_string(sc.n_samples)}});
  log << "eval-caption: CIDEr=" << fixed(sc.cider) << " BLEU-4=" << fixed(sc.bleu4)
      << " ROUGE-L=" << fixed(sc.rouge_l) << " (" << sc.n_passing << "/" << sc.n_samples
      << " pass IoU " << fixed(cfg.iou, 2) << ")\n";
  return kOk;
}

int eval_pointmap(const RunConfig& cfg, std::ostream& log) {
  std::vector<Diagnostic> ignored;
  const auto gt = load_point_clouds(cfg.gt, ignored);
  const auto pred = load_point_clouds(cfg.pred, ignored);
  std::map<std::string, const PointCloudRecord*> by_id;
  for (const auto& p : pred) by_id[p.scene_id] = &p;

  std::vector<PointmapMode> modes;
  if (cfg.mode == "both")
    modes = {PointmapMode::aligned, PointmapMode::metric};
  else
    modes = {parse_pointmap_mode(cfg.mode)};

  auto report = report_header("eval-pointmap", {{"pred", cfg.pred},
                                                {"gt", cfg.gt},
                                                {"mode", cfg.mode},
                                                {"median", cfg.pool_medians ? "pooled" : "per-scene mean"}});
  ordered_json results = ordered_json::object();
  std::vector<std::pair<std::string, std::string>> rows;
  std::string summary;
  for (const auto mode : modes) {
    std::vector<PointmapMetrics> per_scene(gt.size());
    parallel_for(gt.size(), resolve_threads(cfg.threads), [&](std::size_t i) {
      per_scene[i] = pointmap_eval(by_id.at(gt[i].scene_id)->points, gt[i].points, mode);
    });
    const auto agg = aggregate_scenes(per_scene, cfg.pool_medians);
    ordered_json scenes = ordered_json::array();
    for (std::size_t i = 0; i < gt.size(); ++i)
      scenes.push_back({{"scene_id", gt[i].scene_id},
                        {"accuracy", stats_json(per_scene[i].accuracy)},
                        {"completeness", stats_json(per_scene[i].completeness)},
                        {"overall", stats_json(per_scene[i].overall)}});
    const std::string name(to_string(mode));
    results[name] = {{"accuracy", stats_json(agg.accuracy)},
                     {"completeness", stats_json(agg.completeness)},
                     {"overall", stats_json(agg.overall)},
                     {"scenes", scenes}};
    rows.emplace_back(name + " accuracy mean / median", fixed(agg.accuracy.mean) + " / " + fixed(agg.accuracy.median));
    rows.emplace_back(name + " completeness mean / median",
                      fixed(agg.completeness.mean) + " / " + fixed(agg.completeness.median));
    rows.emplace_back(name + " overall mean / median", fixed(agg.overall.mean) + " / " + fixed(agg.overall.median));
    summary += " " + name + " overall=" + fixed(agg.overall.mean);
  }
  report["metrics"] = results;
  report["counts"] = {{"scenes", gt.size()}, {"extra_predictions", pred.size() - gt.size()}};
  write_outputs(cfg, report, "eval-pointmap", rows);
  log << "eval-pointmap:" << summary << " over " << gt.size() << " scenes\n";
  return kOk;
}

}  // namespace geoperc::cli
