#include "cli.hpp"

#include <filesystem>
#include <iostream>
#include <set>

#include <CLI11.hpp>

#include "cli_io.hpp"
#include "commands.hpp"
#include "geoperc/error.hpp"
#include "geoperc/metrics.hpp"
#include "geoperc/sparse.hpp"
#include "records.hpp"

namespace geoperc::cli {
namespace {

void check_pointmaps(const RunConfig& cfg, std::vector<Diagnostic>& diags) {
  const auto gt = load_point_clouds(cfg.gt, diags);
  const auto pred = load_point_clouds(cfg.pred, diags);
  std::map<std::string, std::size_t> pred_sizes;
  for (const auto& p : pred) pred_sizes[p.scene_id] = p.points.size();
  for (const auto& g : gt) {
    const auto it = pred_sizes.find(g.scene_id);
    if (it == pred_sizes.end()) {
      diags.push_back({cfg.pred, 0, "no prediction for scene \"" + g.scene_id + "\""});
    } else if (cfg.mode != "metric" && it->second != g.points.size()) {
      diags.push_back({cfg.pred, 0,
                       "scene \"" + g.scene_id + "\": aligned mode needs corresponding points, found " +
                           std::to_string(it->second) + " for " + std::to_string(g.points.size()) +
                           " ground-truth points"});
    }
  }
  if (gt.empty() && diags.empty()) diags.push_back({cfg.gt, 0, "no scenes"});
}

auto open_interval() {
  return CLI::Validator(
      [](std::string& s) -> std::string {
        const double v = std::stod(s);
        return v > 0.0 && v < 1.0 ? "" : "value must lie in (0, 1)";
      },
      "(0,1)");
}

}  // namespace

std::vector<Diagnostic> validate_inputs(const RunConfig& cfg) {
  std::vector<Diagnostic> diags;
  const auto& cmd = cfg.subcommand;
  if (cmd == "gen-sparse") {
    validate_scene_packs(cfg.scenes, diags);
    try {
      load_annotations(cfg.annotations);
    } catch (const std::exception& e) {
      diags.push_back({cfg.annotations, 0, e.what()});
    }
  } else if (cmd == "prompt-emit") {
    if (!cfg.gt.empty()) load_gt(cfg.gt, diags);
    if (!cfg.samples.empty()) load_conversations(cfg.samples, diags);
  } else if (cmd == "eval-grounding" || cmd == "eval-caption" || cmd == "eval-detection") {
    load_gt(cfg.gt, diags);
    load_predictions(cfg.pred, diags);
    if (cmd == "eval-detection") load_class_list(cfg.classes, diags);
  } else if (cmd == "eval-pointmap") {
    check_pointmaps(cfg, diags);
  } else if (cmd == "fusion-demo") {
    load_fusion_demo_config(cfg.config, diags);
  }
  return diags;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  CLI::App app{"geoperc: geometry-aware 3D perception data and evaluation toolkit", "geoperc"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(GEOPERC_VERSION));

  auto common = [&](CLI::App* sub) {
    sub->add_option("--threads", cfg.threads, "Worker threads (default: GEOPERC_THREADS or 1)")
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--markdown", cfg.markdown, "Also write a markdown summary table here");
    sub->add_flag("--validate-only", cfg.validate_only, "Check the inputs and exit");
  };

  auto* gen = app.add_subcommand("gen-sparse", "Generate point-prompted samples from scene packs");
  gen->add_option("--scenes", cfg.scenes, "Scene-pack directory (or a directory of packs)")->required();
  gen->add_option("--annotations", cfg.annotations, "Object annotations JSON")->required();
  gen->add_option("--out", cfg.out, "Output conversation JSON-lines")->required();
  gen->add_option("--report", cfg.report, "Report path (default: <out>.report.json)");
  gen->add_option("--tasks-out", cfg.tasks_out, "Also write grounding/detection/caption/pointmap ground truth here");
  gen->add_option("--marked-dir", cfg.marked_dir, "Write marked frames (red cross) here");
  gen->add_option("--fps", cfg.fps, "Frame sampling rate")->check(CLI::PositiveNumber);
  gen->add_option("--window", cfg.window, "Frames per sample")->check(CLI::Range(1, 64));
  gen->add_option("--tolerance", cfg.tolerance, "Relative depth tolerance for visibility")->check(CLI::PositiveNumber);
  gen->add_option("--max-samples", cfg.max_samples, "Per-scene cap, seeded subset (0 keeps all)");
  gen->add_option("--seed", cfg.seed, "Random seed");
  common(gen);

  auto* emit = app.add_subcommand("prompt-emit", "Write prompts and reference answers");
  emit->add_option("--gt", cfg.gt, "Ground-truth JSON-lines");
  emit->add_option("--samples", cfg.samples, "Conversation JSON-lines from gen-sparse");
  emit->add_option("--out", cfg.out, "Output prompt JSON-lines")->required();
  emit->add_option("--report", cfg.report, "Report path (default: <out>.report.json)");
  common(emit);

  auto eval_io = [&](CLI::App* sub) {
    sub->add_option("--pred", cfg.pred, "Prediction JSON-lines")->required();
    sub->add_option("--gt", cfg.gt, "Ground-truth JSON-lines")->required();
    sub->add_option("--out", cfg.out, "Report JSON")->required();
    common(sub);
  };
  auto* grounding = app.add_subcommand("eval-grounding", "Acc@0.25 / Acc@0.5 of predicted boxes");
  eval_io(grounding);

  auto* detection = app.add_subcommand("eval-detection", "Precision / recall / F1 of detections");
  eval_io(detection);
  detection->add_option("--classes", cfg.classes, "Class list, one label per line")->required();
  detection->add_option("--iou", cfg.iou, "IoU threshold (default 0.25)")->check(open_interval());
  detection->add_flag("--strict", cfg.strict, "Score dropped entries as false positives");

  auto* caption = app.add_subcommand("eval-caption", "IoU-gated CIDEr / BLEU-4 / ROUGE-L");
  eval_io(caption);
  caption->add_option("--iou", cfg.iou, "Box IoU gate (default 0.5)")->check(open_interval());

  auto* pointmap = app.add_subcommand("eval-pointmap", "Accuracy / completeness of point clouds");
  eval_io(pointmap);
  pointmap->add_option("--mode", cfg.mode, "aligned, metric or both")
      ->check(CLI::IsMember({"aligned", "metric", "both"}));
  pointmap->add_flag("--pool-medians", cfg.pool_medians, "Median over all scenes' distances");

  auto* fusion = app.add_subcommand("fusion-demo", "Reference fusion forward pass and gradient check");
  fusion->add_option("--config", cfg.config, "Fusion config JSON")->required();
  fusion->add_option("--out", cfg.out, "Report JSON")->required();
  fusion->add_option("--seed", cfg.seed, "Random seed");
  fusion->add_flag("--grad-check", cfg.grad_check, "Verify gradients by central differences");
  fusion->add_option("--grad-configs", cfg.grad_configs, "Random configurations to check")->check(CLI::Range(1, 100000));
  fusion->add_option("--grad-step", cfg.grad_step, "Central-difference step")->check(CLI::PositiveNumber);
  fusion->add_option("--grad-tol", cfg.grad_tol, "Relative error tolerance")->check(CLI::PositiveNumber);
  fusion->add_option("--params-out", cfg.params_out, "Save the demo parameters (JSON manifest + buffer)");
  common(fusion);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsageError;
  }
  cfg.subcommand = app.get_subcommands().front()->get_name();
  // Both evaluators share cfg.iou, so defaults are applied after parsing.
  if (cfg.iou == 0.0) cfg.iou = cfg.subcommand == "eval-caption" ? 0.5 : 0.25;
  if (cfg.subcommand == "prompt-emit" && cfg.gt.empty() && cfg.samples.empty()) {
    err << "prompt-emit: give --gt and/or --samples\n";
    return kUsageError;
  }

  const auto diags = validate_inputs(cfg);
  if (!diags.empty()) {
    for (const auto& d : diags) err << to_string(d) << "\n";
    err << cfg.subcommand << ": " << diags.size() << " input problem(s)\n";
    return kDataError;
  }
  if (cfg.validate_only) {
    out << cfg.subcommand << ": inputs valid\n";
    return kOk;
  }

  try {
    if (cfg.subcommand == "gen-sparse") return gen_sparse(cfg, out);
    if (cfg.subcommand == "prompt-emit") return prompt_emit(cfg, out);
    if (cfg.subcommand == "eval-grounding") return eval_grounding(cfg, out);
    if (cfg.subcommand == "eval-detection") return eval_detection(cfg, out);
    if (cfg.subcommand == "eval-caption") return eval_caption(cfg, out);
    if (cfg.subcommand == "eval-pointmap") return eval_pointmap(cfg, out);
    if (cfg.subcommand == "fusion-demo") return fusion_demo(cfg, out);
  } catch (const std::exception& e) {
    err << cfg.subcommand << ": error: " << e.what() << "\n";
    return kDataError;
  }
  return kUsageError;
}

int run(int argc, const char* const* argv) {
  return run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}

}  // namespace geoperc::cli
