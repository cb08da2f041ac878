#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "geoperc/geom.hpp"
#include "geoperc/predparse.hpp"

namespace geoperc {

// ---- grounding ----

struct GroundingPrediction {
  std::string sample_id;
  std::optional<OrientedBox3> box;  // nullopt: the answer did not parse
};

struct GroundingTruth {
  std::string sample_id;
  OrientedBox3 box;
};

struct GroundingResult {
  double acc_025 = 0.0;
  double acc_05 = 0.0;
  std::size_t n_samples = 0;
  std::size_t n_parse_failures = 0;
  std::vector<double> ious;  // per sample, 0 for parse failures
};

/// Lists must be aligned by sample id (InvalidArgument otherwise, or when empty).
GroundingResult grounding_accuracy(std::span<const GroundingPrediction> preds,
                                   std::span<const GroundingTruth> gts);

// ---- detection ----

/// Maximum-cardinality matching on pairs with iou >= threshold, ties broken by the largest
/// total IoU. iou is row-major (rows = predictions). Returns (pred, gt) pairs.
std::vector<std::pair<std::size_t, std::size_t>> max_iou_matching(
    const std::vector<std::vector<double>>& iou, double threshold);

struct DetectionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

struct DetectionMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t parse_failures = 0;
  std::size_t out_of_list = 0;  // predictions whose class is not in the class list
  std::map<std::string, DetectionCounts> per_class;
};

struct DetectionScene {
  std::string scene_id;
  DetectionPred pred;
  std::vector<DetectionEntry> gt;
};

/// Per scene and class matching, micro-aggregated. With `strict`, every dropped prediction
/// entry counts as a false positive. Labels are compared after normalize_label.
/// Throws InvalidArgument for an empty class list or a threshold outside (0, 1).
DetectionMetrics detection_prf(std::span<const DetectionScene> scenes, double iou_threshold,
                               std::span<const std::string> class_list, bool strict = false);

/// Precision, recall and F1 from counts (0 for empty denominators).
DetectionMetrics finalize_detection(DetectionMetrics counts);

// ---- captioning ----

/// Lower-cased tokens split on whitespace and ASCII punctuation.
std::vector<std::string> tokenize_caption(std::string_view text);

struct CaptionSample {
  std::string candidate;
  std::vector<std::string> references;
  double iou = 0.0;
};

struct CaptionScores {
  double cider = 0.0;
  double bleu4 = 0.0;
  double rouge_l = 0.0;
  std::size_t n_samples = 0;
  std::size_t n_passing = 0;
};

/// Scores gated by iou >= iou_threshold. BLEU-4 is corpus level over the passing samples
/// scaled by the passing fraction; ROUGE-L and CIDEr-D are per-sample means with gated
/// samples scoring 0. CIDEr document frequencies come from the references of all samples.
/// Throws InvalidArgument when a sample has no references or the list is empty.
CaptionScores caption_scores(std::span<const CaptionSample> samples, double iou_threshold = 0.5);

/// Corpus BLEU-4 without smoothing; brevity penalty uses the closest reference length.
double corpus_bleu4(std::span<const std::vector<std::string>> candidates,
                    std::span<const std::vector<std::vector<std::string>>> references);

/// ROUGE-L F-measure (beta 1.2) against the best-matching references.
double rouge_l(const std::vector<std::string>& candidate,
               const std::vector<std::vector<std::string>>& references);

/// CIDEr-D per sample (scaled by 10), IDF over the given corpus.
std::vector<double> cider_d(std::span<const std::vector<std::string>> candidates,
                            std::span<const std::vector<std::vector<std::string>>> references);

// ---- pointmaps ----

class KdTree3 {
 public:
  explicit KdTree3(std::vector<Vec3> points);
  /// Index of the nearest stored point and its distance. Throws InvalidArgument when empty.
  std::pair<std::size_t, double> nearest(const Vec3& query) const;
  std::size_t size() const { return points_.size(); }

 private:
  struct Node {
    std::size_t point;
    int axis;
    int left = -1;
    int right = -1;
  };
  int build(std::vector<std::size_t>& idx, std::size_t lo, std::size_t hi, int depth);
  void search(int node, const Vec3& q, std::size_t& best, double& best_d2) const;

  std::vector<Vec3> points_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

enum class PointmapMode { aligned, metric };

PointmapMode parse_pointmap_mode(std::string_view name);
std::string_view to_string(PointmapMode mode);

struct DistanceStats {
  double mean = 0.0;
  double median = 0.0;
};

struct PointmapMetrics {
  PointmapMode mode = PointmapMode::metric;
  DistanceStats accuracy;
  DistanceStats completeness;
  DistanceStats overall;
  std::vector<double> accuracy_distances;      // kept for pooled medians
  std::vector<double> completeness_distances;
};

/// Aligned mode fits umeyama_sim3 on corresponding points (equal sizes required) and applies
/// it to the predictions first. Throws InvalidArgument for empty sets.
PointmapMetrics pointmap_eval(std::span<const Vec3> pred, std::span<const Vec3> gt,
                              PointmapMode mode);

/// Unweighted mean of per-scene values. With `pool_medians`, medians are recomputed over all
/// scenes' distances instead. Throws InvalidArgument on an empty list or mixed modes.
PointmapMetrics aggregate_scenes(std::span<const PointmapMetrics> per_scene,
                                 bool pool_medians = false);

double median(std::vector<double> values);

}  // namespace geoperc
