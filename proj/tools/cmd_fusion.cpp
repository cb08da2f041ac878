// fusion-demo: random-parameter forward pass of the multi-level fusion plus an optional
// gradient check of the merge -> gate -> fuse path.

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>

#include "cli_io.hpp"
#include "commands.hpp"
#include "geoperc/fusion.hpp"
#include "records.hpp"

namespace geoperc::cli {
namespace {

ordered_json grid_summary(const TokenGrid& g) {
  double sum = 0.0, peak = 0.0;
  for (double v : g.data()) {
    sum += v;
    peak = std::max(peak, std::abs(v));
  }
  return {{"shape", {g.rows(), g.cols(), g.channels()}},
          {"mean", sum / static_cast<double>(g.data().size())},
          {"abs_max", peak}};
}

}  // namespace

int fusion_demo(const RunConfig& cfg, std::ostream& log) {
  std::vector<Diagnostic> ignored;
  const FusionDemoConfig demo = load_fusion_demo_config(cfg.config, ignored);
  const FusionConfig& fc = demo.fusion;
  std::mt19937_64 rng(cfg.seed);

  std::map<int, LayerFusionParams> layers;
  std::map<int, TokenGrid> visual, geometric;
  for (int l : MultiLevelFusion::active_layers(fc)) {
    layers.emplace(l, random_layer_params(fc, rng, demo.init_scale));
    visual.emplace(l, random_grid(demo.grid_rows, demo.grid_cols, fc.channels, rng, 1.0));
    geometric.emplace(l, random_grid(demo.grid_rows, demo.grid_cols, fc.channels, rng, 1.0));
  }
  const MultiLevelFusion fusion(fc, layers);
  const auto out = fusion.forward(visual, geometric);
  std::vector<TokenGrid> hidden(fc.inject_layers.size(),
                                TokenGrid(demo.grid_rows / 2, demo.grid_cols / 2, fc.channels));
  const auto injected = fusion.inject(hidden, out);

  ordered_json config{{"config", cfg.config},
                      {"seed", cfg.seed},
                      {"channels", fc.channels},
                      {"num_layers", fc.num_layers},
                      {"inject_layers", fc.inject_layers},
                      {"variant", std::string(to_string(fc.variant))},
                      {"grid", {demo.grid_rows, demo.grid_cols}},
                      {"init_scale", demo.init_scale}};
  if (cfg.grad_check)
    config["grad_check"] = {{"configurations", cfg.grad_configs}, {"step", cfg.grad_step}, {"tolerance", cfg.grad_tol}};
  auto report = report_header("fusion-demo", config);

  ordered_json fused = ordered_json::object();
  for (const auto& [layer, grid] : out.fused) {
    auto entry = grid_summary(grid);
    if (const auto it = out.gates.find(layer); it != out.gates.end())
      entry["gate_mean"] = gate_statistics(std::span(&it->second, 1))[0];
    fused[std::to_string(layer)] = entry;
  }
  report["fused"] = fused;
  ordered_json schedule = ordered_json::array();
  for (const auto& [enc, dec] : deepstack_schedule(fc)) schedule.push_back({{"encoder_layer", enc}, {"decoder_layer", dec}});
  report["deepstack_schedule"] = schedule;
  ordered_json inj = ordered_json::array();
  for (const auto& h : injected) inj.push_back(grid_summary(h));
  report["injected_hidden"] = inj;

  std::string summary = "fusion-demo: " + std::string(to_string(fc.variant)) + " fusion over " +
                        std::to_string(out.fused.size()) + " layers";
  if (cfg.grad_check) {
    double worst = 0.0;
    std::size_t checked = 0;
    int worst_config = -1;
    std::string worst_param;
    for (int k = 0; k < cfg.grad_configs; ++k) {
      const int ch = fc.channels;
      const TokenGrid rv = random_grid(demo.grid_rows, demo.grid_cols, ch, rng, 1.0);
      const TokenGrid rg = random_grid(demo.grid_rows, demo.grid_cols, ch, rng, 1.0);
      const GatedPathParams params{random_merge_params(ch, rng, demo.init_scale),
                                   random_merge_params(ch, rng, demo.init_scale),
                                   random_gate_params(ch, rng, demo.init_scale)};
      LossSpec loss{LossSpec::Kind::squared_error, random_grid(demo.grid_rows / 2, demo.grid_cols / 2, ch, rng, 1.0)};
      const auto r = grad_check(rv, rg, params, loss, cfg.grad_step, cfg.grad_tol);
      checked += r.parameters_checked;
      if (worst_config < 0 || r.max_relative_error > worst) {
        worst = r.max_relative_error;
        worst_config = k;
        worst_param = r.worst_parameter;
      }
    }
    const bool passed = worst <= cfg.grad_tol;
    report["grad_check"] = {{"max_relative_error", worst},
                            {"passed", passed},
                            {"parameters_checked", checked},
                            {"worst_configuration", worst_config},
                            {"worst_parameter", worst_param}};
    summary += ", gradient check max relative error " + std::to_string(worst) + (passed ? " (pass)" : " (FAIL)");
  }
  if (!cfg.params_out.empty()) {
    save_fusion_params(fusion, cfg.params_out);
    report["params"] = cfg.params_out;
  }
  write_atomic(cfg.out, dump_report(report));
  if (!cfg.markdown.empty()) {
    std::vector<std::pair<std::string, std::string>> rows{{"variant", std::string(to_string(fc.variant))},
                                                          {"fused layers", std::to_string(out.fused.size())}};
    if (cfg.grad_check)
      rows.emplace_back("max relative gradient error", report["grad_check"]["max_relative_error"].dump());
    write_atomic(cfg.markdown, markdown_table("fusion-demo", rows));
  }
  log << summary << "\n";
  return kOk;
}

}  // namespace geoperc::cli
