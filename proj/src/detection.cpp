#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "geoperc/error.hpp"
#include "geoperc/metrics.hpp"

namespace geoperc {
namespace {

// Minimum-cost assignment of every row to a distinct column (rows <= cols), potentials form.
std::vector<int> hungarian(const std::vector<std::vector<double>>& cost) {
  const std::size_t n = cost.size();
  const std::size_t m = n ? cost[0].size() : 0;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> row_to_col(n, -1);
  for (std::size_t j = 1; j <= m; ++j)
    if (p[j]) row_to_col[p[j] - 1] = static_cast<int>(j - 1);
  return row_to_col;
}

}  // namespace

std::vector<std::pair<std::size_t, std::size_t>> max_iou_matching(
    const std::vector<std::vector<double>>& iou, double threshold) {
  const std::size_t rows = iou.size();
  const std::size_t cols = rows ? iou[0].size() : 0;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  if (rows == 0 || cols == 0) return pairs;
  for (const auto& row : iou)
    if (row.size() != cols) throw InvalidArgument("max_iou_matching: ragged IoU matrix");

  // Each admissible edge is worth big + IoU with big above any attainable IoU total, so the
  // optimum has maximum cardinality first and maximum total IoU second.
  const double big = static_cast<double>(std::min(rows, cols)) + 1.0;
  const bool transpose = rows > cols;
  const std::size_t n = transpose ? cols : rows;
  const std::size_t m = transpose ? rows : cols;
  std::vector<std::vector<double>> cost(n, std::vector<double>(m, 0.0));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      if (iou[r][c] >= threshold) (transpose ? cost[c][r] : cost[r][c]) = -(big + iou[r][c]);

  const auto assign = hungarian(cost);
  for (std::size_t i = 0; i < n; ++i) {
    if (assign[i] < 0) continue;
    const auto j = static_cast<std::size_t>(assign[i]);
    const std::size_t r = transpose ? j : i;
    const std::size_t c = transpose ? i : j;
    if (iou[r][c] >= threshold) pairs.emplace_back(r, c);
  }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

DetectionMetrics finalize_detection(DetectionMetrics m) {
  m.precision = m.tp + m.fp ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp) : 0.0;
  m.recall = m.tp + m.fn ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) : 0.0;
  m.f1 = m.precision + m.recall > 0.0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

DetectionMetrics detection_prf(std::span<const DetectionScene> scenes, double iou_threshold,
                               std::span<const std::string> class_list, bool strict) {
  if (class_list.empty()) throw InvalidArgument("detection_prf: empty class list");
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0))
    throw InvalidArgument("detection_prf: IoU threshold must be in (0, 1)");
  std::set<std::string> classes;
  for (const auto& c : class_list) classes.insert(normalize_label(c));

  DetectionMetrics total;
  for (const auto& c : classes) total.per_class[c];
  for (const auto& scene : scenes) {
    total.parse_failures += scene.pred.parse_failures;
    if (strict) total.fp += scene.pred.parse_failures;

    std::map<std::string, std::vector<const OrientedBox3*>> preds, gts;
    for (const auto& e : scene.pred.entries) {
      auto label = normalize_label(e.label);
      if (!classes.count(label)) {
        ++total.out_of_list;
        continue;
      }
      preds[label].push_back(&e.bbox_3d);
    }
    for (const auto& e : scene.gt) {
      auto label = normalize_label(e.label);
      if (classes.count(label)) gts[label].push_back(&e.bbox_3d);
    }
    for (const auto& label : classes) {
      const auto& p = preds[label];
      const auto& g = gts[label];
      std::vector<std::vector<double>> iou(p.size(), std::vector<double>(g.size()));
      for (std::size_t i = 0; i < p.size(); ++i)
        for (std::size_t j = 0; j < g.size(); ++j) iou[i][j] = box_iou(*p[i], *g[j]);
      const std::size_t tp = max_iou_matching(iou, iou_threshold).size();
      auto& counts = total.per_class[label];
      counts.tp += tp;
      counts.fp += p.size() - tp;
      counts.fn += g.size() - tp;
      total.tp += tp;
      total.fp += p.size() - tp;
      total.fn += g.size() - tp;
    }
  }
  return finalize_detection(std::move(total));
}

GroundingResult grounding_accuracy(std::span<const GroundingPrediction> preds,
                                   std::span<const GroundingTruth> gts) {
  if (preds.size() != gts.size())
    throw InvalidArgument("grounding_accuracy: " + std::to_string(preds.size()) +
                          " predictions for " + std::to_string(gts.size()) + " ground truths");
  if (gts.empty()) throw InvalidArgument("grounding_accuracy: no samples");
  GroundingResult r;
  r.n_samples = gts.size();
  std::size_t hit025 = 0, hit05 = 0;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    if (preds[i].sample_id != gts[i].sample_id)
      throw InvalidArgument("grounding_accuracy: sample id mismatch at position " +
                            std::to_string(i) + " ('" + preds[i].sample_id + "' vs '" +
                            gts[i].sample_id + "')");
    if (!preds[i].box) {
      ++r.n_parse_failures;
      r.ious.push_back(0.0);
      continue;
    }
    const double iou = box_iou(*preds[i].box, gts[i].box);
    r.ious.push_back(iou);
    hit025 += iou >= 0.25;
    hit05 += iou >= 0.5;
  }
  r.acc_025 = static_cast<double>(hit025) / static_cast<double>(r.n_samples);
  r.acc_05 = static_cast<double>(hit05) / static_cast<double>(r.n_samples);
  return r;
}

}  // namespace geoperc
