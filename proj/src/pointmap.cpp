#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "geoperc/error.hpp"
#include "geoperc/metrics.hpp"

namespace geoperc {

KdTree3::KdTree3(std::vector<Vec3> points) : points_(std::move(points)) {
  std::vector<std::size_t> idx(points_.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  nodes_.reserve(points_.size());
  root_ = build(idx, 0, idx.size(), 0);
}

int KdTree3::build(std::vector<std::size_t>& idx, std::size_t lo, std::size_t hi, int depth) {
  if (lo >= hi) return -1;
  const int axis = depth % 3;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::nth_element(idx.begin() + static_cast<std::ptrdiff_t>(lo),
                   idx.begin() + static_cast<std::ptrdiff_t>(mid),
                   idx.begin() + static_cast<std::ptrdiff_t>(hi),
                   [&](std::size_t a, std::size_t b) {
                     const double pa = points_[a][axis], pb = points_[b][axis];
                     return pa < pb || (pa == pb && a < b);
                   });
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({idx[mid], axis});
  const int left = build(idx, lo, mid, depth + 1);
  const int right = build(idx, mid + 1, hi, depth + 1);
  nodes_[static_cast<std::size_t>(id)].left = left;
  nodes_[static_cast<std::size_t>(id)].right = right;
  return id;
}

void KdTree3::search(int node, const Vec3& q, std::size_t& best, double& best_d2) const {
  if (node < 0) return;
  const Node& nd = nodes_[static_cast<std::size_t>(node)];
  const Vec3 diff = points_[nd.point] - q;
  const double d2 = dot(diff, diff);
  if (d2 < best_d2 || (d2 == best_d2 && nd.point < best)) {
    best_d2 = d2;
    best = nd.point;
  }
  const double split = q[nd.axis] - points_[nd.point][nd.axis];
  const int near = split < 0 ? nd.left : nd.right;
  const int far = split < 0 ? nd.right : nd.left;
  search(near, q, best, best_d2);
  if (split * split <= best_d2) search(far, q, best, best_d2);
}

std::pair<std::size_t, double> KdTree3::nearest(const Vec3& query) const {
  if (points_.empty()) throw InvalidArgument("KdTree3::nearest on an empty tree");
  std::size_t best = 0;
  double best_d2 = std::numeric_limits<double>::infinity();
  search(root_, query, best, best_d2);
  return {best, std::sqrt(best_d2)};
}

PointmapMode parse_pointmap_mode(std::string_view name) {
  if (name == "aligned") return PointmapMode::aligned;
  if (name == "metric") return PointmapMode::metric;
  throw InvalidArgument("unknown pointmap mode '" + std::string(name) + "'");
}

std::string_view to_string(PointmapMode mode) {
  return mode == PointmapMode::aligned ? "aligned" : "metric";
}

double median(std::vector<double> values) {
  if (values.empty()) throw InvalidArgument("median of an empty set");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

namespace {

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::vector<double> nearest_distances(std::span<const Vec3> from, const KdTree3& to) {
  std::vector<double> out;
  out.reserve(from.size());
  for (const auto& p : from) out.push_back(to.nearest(p).second);
  return out;
}

}  // namespace

PointmapMetrics pointmap_eval(std::span<const Vec3> pred, std::span<const Vec3> gt,
                              PointmapMode mode) {
  if (pred.empty() || gt.empty()) throw InvalidArgument("pointmap_eval: empty point set");
  std::vector<Vec3> moved(pred.begin(), pred.end());
  if (mode == PointmapMode::aligned) {
    if (pred.size() != gt.size())
      throw InvalidArgument("pointmap_eval: aligned mode needs corresponding point sets");
    const Sim3 s = umeyama_sim3(pred, gt);
    for (auto& p : moved) p = s.apply(p);
  }
  PointmapMetrics m;
  m.mode = mode;
  const KdTree3 gt_tree(std::vector<Vec3>(gt.begin(), gt.end()));
  const KdTree3 pred_tree(moved);
  m.accuracy_distances = nearest_distances(moved, gt_tree);
  m.completeness_distances = nearest_distances(gt, pred_tree);
  m.accuracy = {mean_of(m.accuracy_distances), median(m.accuracy_distances)};
  m.completeness = {mean_of(m.completeness_distances), median(m.completeness_distances)};
  m.overall = {0.5 * (m.accuracy.mean + m.completeness.mean),
               0.5 * (m.accuracy.median + m.completeness.median)};
  return m;
}

PointmapMetrics aggregate_scenes(std::span<const PointmapMetrics> per_scene, bool pool_medians) {
  if (per_scene.empty()) throw InvalidArgument("aggregate_scenes: no scenes");
  PointmapMetrics out;
  out.mode = per_scene.front().mode;
  const auto n = static_cast<double>(per_scene.size());
  // Summation in a fixed (sorted) order keeps the result permutation invariant.
  std::vector<double> am, ad, cm, cd;
  for (const auto& s : per_scene) {
    if (s.mode != out.mode) throw InvalidArgument("aggregate_scenes: mixed evaluation modes");
    am.push_back(s.accuracy.mean);
    ad.push_back(s.accuracy.median);
    cm.push_back(s.completeness.mean);
    cd.push_back(s.completeness.median);
  }
  auto sorted_mean = [n](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    double sum = 0.0;
    for (double x : v) sum += x;
    return sum / n;
  };
  out.accuracy = {sorted_mean(am), sorted_mean(ad)};
  out.completeness = {sorted_mean(cm), sorted_mean(cd)};
  if (pool_medians) {
    std::vector<double> acc, comp;
    for (const auto& s : per_scene) {
      acc.insert(acc.end(), s.accuracy_distances.begin(), s.accuracy_distances.end());
      comp.insert(comp.end(), s.completeness_distances.begin(), s.completeness_distances.end());
    }
    if (acc.empty() || comp.empty())
      throw InvalidArgument("aggregate_scenes: pooled medians need per-point distances");
    out.accuracy.median = median(std::move(acc));
    out.completeness.median = median(std::move(comp));
  }
  out.overall = {0.5 * (out.accuracy.mean + out.completeness.mean),
                 0.5 * (out.accuracy.median + out.completeness.median)};
  return out;
}

}  // namespace geoperc
