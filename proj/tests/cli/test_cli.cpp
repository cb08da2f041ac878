#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "geoperc/predparse.hpp"
#include "synthetic_scene.hpp"

namespace fs = std::filesystem;
using namespace geoperc;
using geoperc::cli::run;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("geoperc_cli_" + tag + "_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

struct Result {
  int code;
  std::string out, err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "geoperc");
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

void write_file(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

const std::string kBox = "[0.5, 0.5, 2.0, 0.4, 0.4, 0.4, 0, 0, 0]";

// Axis-aligned IoU, closed form.
double aabb_iou(const std::array<double, 9>& a, const std::array<double, 9>& b) {
  double inter = 1.0;
  for (int k = 0; k < 3; ++k) {
    const double lo = std::max(a[k] - a[k + 3] / 2, b[k] - b[k + 3] / 2);
    const double hi = std::min(a[k] + a[k + 3] / 2, b[k] + b[k + 3] / 2);
    inter *= std::max(0.0, hi - lo);
  }
  const double va = a[3] * a[4] * a[5], vb = b[3] * b[4] * b[5];
  return inter / (va + vb - inter);
}

// Largest number of disjoint pairs with iou >= thr, by exhaustive search.
std::size_t brute_matches(const std::vector<std::vector<double>>& iou, double thr, std::size_t row,
                          std::vector<bool>& used) {
  if (row == iou.size()) return 0;
  std::size_t best = brute_matches(iou, thr, row + 1, used);
  for (std::size_t c = 0; c < used.size(); ++c) {
    if (used[c] || iou[row][c] < thr) continue;
    used[c] = true;
    best = std::max(best, 1 + brute_matches(iou, thr, row + 1, used));
    used[c] = false;
  }
  return best;
}

struct Labeled {
  std::string label;
  std::array<double, 9> box;
};

}  // namespace

TEST_CASE("usage errors exit 1") {
  CHECK(invoke({}).code == 1);
  CHECK(invoke({"no-such-command"}).code == 1);
  CHECK(invoke({"eval-grounding", "--gt", "x"}).code == 1);
  CHECK(invoke({"eval-detection", "--pred", "p", "--gt", "g", "--out", "o", "--classes", "c", "--iou", "1.5"}).code == 1);
  CHECK(invoke({"eval-pointmap", "--pred", "p", "--gt", "g", "--out", "o", "--mode", "sideways"}).code == 1);
  CHECK(invoke({"prompt-emit", "--out", "o"}).code == 1);
  CHECK(invoke({"--help"}).code == 0);
}

TEST_CASE("malformed box names the line and the arity") {
  TempDir dir("arity");
  write_file(dir / "gt.jsonl",
             R"({"sample_id":"a","task":"grounding","query":"the cup","num_frames":2,"bbox_3d":)" + kBox + "}\n" +
                 R"({"sample_id":"b","task":"grounding","query":"the cup","num_frames":2,"bbox_3d":[0,0,1,1,1,1,0,0]})" +
                 "\n");
  write_file(dir / "pred.jsonl", "");
  const auto r = invoke({"eval-grounding", "--pred", dir / "pred.jsonl", "--gt", dir / "gt.jsonl", "--out", dir / "r.json"});
  CHECK(r.code == 2);
  CHECK(r.err.find("gt.jsonl:2:") != std::string::npos);
  CHECK(r.err.find("arity 8, expected 9") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "r.json"));
}

TEST_CASE("missing inputs and broken json exit 2") {
  TempDir dir("missing");
  CHECK(invoke({"eval-grounding", "--pred", dir / "nope", "--gt", dir / "nope2", "--out", dir / "r.json"}).code == 2);
  write_file(dir / "gt.jsonl", "{\"sample_id\": \n");
  write_file(dir / "pred.jsonl", "");
  const auto r = invoke({"eval-grounding", "--pred", dir / "pred.jsonl", "--gt", dir / "gt.jsonl", "--out", dir / "r.json"});
  CHECK(r.code == 2);
  CHECK(r.err.find("gt.jsonl:1:") != std::string::npos);
}

TEST_CASE("scene packs: sidecar mismatch is reported by field, clean pack validates") {
  TempDir dir("packs");
  const auto scene = testing::make_synthetic_scene("tiny", 3);
  write_synthetic_scene(scene, dir.path / "scenes" / "tiny");
  testing::write_synthetic_annotations({&scene}, dir.path / "ann.json");

  cli::RunConfig cfg;
  cfg.subcommand = "gen-sparse";
  cfg.scenes = dir / "scenes";
  cfg.annotations = dir / "ann.json";
  CHECK(cli::validate_inputs(cfg).empty());

  const auto ok = invoke({"gen-sparse", "--scenes", cfg.scenes, "--annotations", cfg.annotations, "--out",
                          dir / "s.jsonl", "--validate-only"});
  CHECK(ok.code == 0);
  CHECK_FALSE(fs::exists(dir / "s.jsonl"));

  const fs::path sidecar = dir.path / "scenes" / "tiny" / (scene.pack.frames[1].depth_ref + ".json");
  auto meta = nlohmann::json::parse(slurp(sidecar.string()));
  meta["width"] = meta["width"].get<int>() + 2;
  write_file(sidecar.string(), meta.dump());
  const auto diags = cli::validate_inputs(cfg);
  REQUIRE(diags.size() >= 1);
  CHECK(diags[0].defect.find("width") != std::string::npos);
  CHECK(invoke({"gen-sparse", "--scenes", cfg.scenes, "--annotations", cfg.annotations, "--out", dir / "s.jsonl"})
            .code == 2);
}

TEST_CASE("eval-detection counts match a brute-force oracle and do not depend on threads") {
  TempDir dir("det");
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> pos(0.0, 1.6), size(0.4, 1.2);
  const std::vector<std::string> labels{"chair", "table"};
  auto random_obj = [&] {
    return Labeled{labels[rng() % 2], {pos(rng), pos(rng), pos(rng), size(rng), size(rng), size(rng), 0, 0, 0}};
  };

  std::string gt_lines, pred_lines;
  std::size_t tp = 0, n_gt = 0, n_pred = 0;
  for (int s = 0; s < 40; ++s) {
    std::vector<Labeled> gt(rng() % 5), pred(rng() % 5);
    for (auto& g : gt) g = random_obj();
    for (auto& p : pred) p = random_obj();
    n_gt += gt.size();
    n_pred += pred.size();
    for (const auto& label : labels) {
      std::vector<std::vector<double>> iou;
      std::size_t cols = 0;
      for (const auto& g : gt) cols += g.label == label;
      for (const auto& p : pred) {
        if (p.label != label) continue;
        auto& row = iou.emplace_back();
        for (const auto& g : gt)
          if (g.label == label) row.push_back(aabb_iou(p.box, g.box));
      }
      std::vector<bool> used(cols, false);
      tp += brute_matches(iou, 0.25, 0, used);
    }

    nlohmann::ordered_json objs = nlohmann::ordered_json::array();
    for (const auto& g : gt) objs.push_back({{"label", g.label}, {"bbox_3d", g.box}});
    const std::string id = "s" + std::to_string(s);
    gt_lines += nlohmann::ordered_json{{"sample_id", id}, {"task", "detection"}, {"scene_id", id}, {"num_frames", 4},
                                       {"objects", objs}}.dump() + "\n";
    std::vector<DetectionEntry> entries;
    for (const auto& p : pred) entries.push_back({p.label, OrientedBox3::from_array(p.box)});
    pred_lines += nlohmann::ordered_json{{"sample_id", id}, {"task", "detection"},
                                         {"raw_text", fence_json(detections_json(entries))}}.dump() + "\n";
  }
  write_file(dir / "gt.jsonl", gt_lines);
  write_file(dir / "pred.jsonl", pred_lines);
  write_file(dir / "classes.txt", "# labels\nchair\ntable\n");

  auto eval = [&](const std::string& threads, const std::string& out) {
    return invoke({"eval-detection", "--pred", dir / "pred.jsonl", "--gt", dir / "gt.jsonl", "--classes",
                   dir / "classes.txt", "--out", out, "--threads", threads});
  };
  REQUIRE(eval("1", dir / "r1.json").code == 0);
  REQUIRE(eval("4", dir / "r4.json").code == 0);
  CHECK(slurp(dir / "r1.json") == slurp(dir / "r4.json"));

  const auto report = nlohmann::json::parse(slurp(dir / "r1.json"));
  CHECK(report["counts"]["tp"].get<std::size_t>() == tp);
  CHECK(report["counts"]["fp"].get<std::size_t>() == n_pred - tp);
  CHECK(report["counts"]["fn"].get<std::size_t>() == n_gt - tp);
  CHECK(report["config"]["iou"] == 0.25);
  CHECK(report["tool"] == "geoperc");
  CHECK(report["command"] == "eval-detection");
  CHECK_FALSE(report["config"].contains("threads"));
}

TEST_CASE("gen-sparse output and report do not depend on threads") {
  TempDir dir("gen");
  const auto a = testing::make_synthetic_scene("scene_a", 10);
  const auto b = testing::make_synthetic_scene("scene_b", 12, 0.4);
  write_synthetic_scene(a, dir.path / "scenes" / "scene_a");
  write_synthetic_scene(b, dir.path / "scenes" / "scene_b");
  testing::write_synthetic_annotations({&a, &b}, dir.path / "ann.json");
  for (const std::string t : {"1", "3"}) {
    const auto r = invoke({"gen-sparse", "--scenes", dir / "scenes", "--annotations", dir / "ann.json", "--out",
                           dir / ("s" + t + ".jsonl"), "--report", dir / "report.json", "--tasks-out",
                           dir / ("tasks" + t), "--threads", t});
    REQUIRE(r.code == 0);
    fs::rename(dir / "report.json", dir / ("report" + t + ".json"));
  }
  CHECK_FALSE(slurp(dir / "s1.jsonl").empty());
  CHECK(slurp(dir / "s1.jsonl") == slurp(dir / "s3.jsonl"));
  CHECK(slurp(dir / "tasks1/detection.jsonl") == slurp(dir / "tasks3/detection.jsonl"));
  // Reports echo the tasks directory, which differs between the two runs.
  auto r1 = nlohmann::json::parse(slurp(dir / "report1.json"));
  auto r3 = nlohmann::json::parse(slurp(dir / "report3.json"));
  r1["config"].erase("out");
  r3["config"].erase("out");
  r1["config"].erase("tasks_out");
  r3["config"].erase("tasks_out");
  r1["outputs"].erase("samples");
  r3["outputs"].erase("samples");
  CHECK(r1 == r3);
}
