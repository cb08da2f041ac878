// Python bindings. Boxes are 9-element sequences (center, size, yaw/pitch/roll), point sets
// are (N, 3) float arrays and token grids are (rows, cols, channels) arrays.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <random>

#include "geoperc/error.hpp"
#include "geoperc/frame.hpp"
#include "geoperc/fusion.hpp"
#include "geoperc/geom.hpp"
#include "geoperc/metrics.hpp"
#include "geoperc/predparse.hpp"
#include "geoperc/sparse.hpp"

namespace py = pybind11;
using namespace geoperc;
using namespace pybind11::literals;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

OrientedBox3 to_box(const std::vector<double>& v) { return OrientedBox3::from_array(v); }

std::vector<double> from_box(const OrientedBox3& b) {
  const auto a = b.to_array();
  return {a.begin(), a.end()};
}

std::vector<Vec3> to_points(const Array& a) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw InvalidArgument("expected an (N, 3) array of points");
  const auto r = a.unchecked<2>();
  std::vector<Vec3> pts(static_cast<std::size_t>(a.shape(0)));
  for (py::ssize_t i = 0; i < a.shape(0); ++i) pts[i] = {r(i, 0), r(i, 1), r(i, 2)};
  return pts;
}

Array from_matrix(const Mat3& m) {
  Array out({3, 3});
  auto w = out.mutable_unchecked<2>();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) w(i, j) = m[i][j];
  return out;
}

TokenGrid to_grid(const Array& a) {
  if (a.ndim() != 3) throw InvalidArgument("expected a (rows, cols, channels) array");
  return TokenGrid(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)),
                   std::vector<double>(a.data(), a.data() + a.size()));
}

Array from_grid(const TokenGrid& g) {
  Array out({g.rows(), g.cols(), g.channels()});
  std::copy(g.data().begin(), g.data().end(), out.mutable_data());
  return out;
}

Dense<double> to_dense(const Array& w, const Array& b) {
  if (w.ndim() != 2 || b.ndim() != 1 || b.shape(0) != w.shape(0))
    throw InvalidArgument("dense layer needs weight (out, in) and bias (out,)");
  Dense<double> d(static_cast<int>(w.shape(1)), static_cast<int>(w.shape(0)));
  std::copy(w.data(), w.data() + w.size(), d.weight.begin());
  std::copy(b.data(), b.data() + b.size(), d.bias.begin());
  return d;
}

py::dict metrics_dict(const DetectionMetrics& m) {
  py::dict per_class;
  for (const auto& [c, k] : m.per_class) per_class[py::str(c)] = py::dict("tp"_a = k.tp, "fp"_a = k.fp, "fn"_a = k.fn);
  return py::dict("precision"_a = m.precision, "recall"_a = m.recall, "f1"_a = m.f1, "tp"_a = m.tp, "fp"_a = m.fp,
                  "fn"_a = m.fn, "parse_failures"_a = m.parse_failures, "out_of_list"_a = m.out_of_list,
                  "per_class"_a = per_class);
}

py::dict stats_dict(const DistanceStats& s) { return py::dict("mean"_a = s.mean, "median"_a = s.median); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "geoperc core: box geometry, answer parsing, metrics, sparse samples and gated fusion";
  m.attr("__version__") = GEOPERC_VERSION;

  static py::exception<ParseError> parse_error(m, "ParseError", PyExc_ValueError);
  static py::exception<DataError> data_error(m, "DataError", PyExc_RuntimeError);
  static py::exception<DegenerateInput> degenerate(m, "DegenerateInput", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ParseError& e) {
      py::object err = py::reinterpret_borrow<py::object>(parse_error.ptr())(e.what());
      err.attr("defect") = std::string(to_string(e.defect()));
      PyErr_SetObject(parse_error.ptr(), err.ptr());
    } catch (const DegenerateInput& e) {
      degenerate(e.what());
    } catch (const DataError& e) {
      data_error(e.what());
    } catch (const NotFound& e) {
      PyErr_SetString(PyExc_KeyError, e.what());
    } catch (const NumericalFailure& e) {
      PyErr_SetString(PyExc_ArithmeticError, e.what());
    }
  });

  // ---- geometry ----
  m.def("box_iou", [](const std::vector<double>& a, const std::vector<double>& b) { return box_iou(to_box(a), to_box(b)); },
        "a"_a, "b"_a, "Exact IoU of two oriented boxes.");
  m.def("box_intersection_volume",
        [](const std::vector<double>& a, const std::vector<double>& b) {
          return box_intersection_volume(to_box(a), to_box(b));
        },
        "a"_a, "b"_a);
  m.def("box_iou_mc",
        [](const std::vector<double>& a, const std::vector<double>& b, std::uint64_t n, std::uint64_t seed) {
          return box_iou_mc(to_box(a), to_box(b), n, seed);
        },
        "a"_a, "b"_a, "n_samples"_a = 1000000, "seed"_a = 0, "Monte Carlo IoU estimate.");
  m.def("box_corners",
        [](const std::vector<double>& box) {
          const auto c = box_corners(to_box(box));
          Array out({8, 3});
          auto w = out.mutable_unchecked<2>();
          for (int k = 0; k < 8; ++k) {
            w(k, 0) = c[k].x;
            w(k, 1) = c[k].y;
            w(k, 2) = c[k].z;
          }
          return out;
        },
        "box"_a);
  m.def("euler_to_rotation",
        [](double yaw, double pitch, double roll) { return from_matrix(euler_to_rotation({yaw, pitch, roll}).matrix()); },
        "yaw"_a, "pitch"_a, "roll"_a);
  m.def("rotation_to_euler",
        [](const Array& r) {
          if (r.ndim() != 2 || r.shape(0) != 3 || r.shape(1) != 3) throw InvalidArgument("expected a 3x3 matrix");
          Mat3 mat;
          for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) mat[i][j] = r.at(i, j);
          const auto e = rotation_to_euler(RotationMatrix::from_matrix(mat));
          return py::make_tuple(e.yaw, e.pitch, e.roll);
        },
        "rotation"_a);
  m.def("umeyama",
        [](const Array& source, const Array& target) {
          const auto s = umeyama_sim3(to_points(source), to_points(target));
          return py::dict("scale"_a = s.scale, "rotation"_a = from_matrix(s.rotation.matrix()),
                          "translation"_a = py::make_tuple(s.translation.x, s.translation.y, s.translation.z));
        },
        "source"_a, "target"_a, "Similarity transform mapping source onto target in least squares.");

  // ---- answer parsing and serialization ----
  m.def("extract_json_block", [](const std::string& t) { return extract_json_block(t); }, "text"_a);
  m.def("parse_point_semantic",
        [](const std::string& t) {
          const auto p = parse_point_semantic(t);
          return py::make_tuple(p.label, py::make_tuple(p.pointmap.x, p.pointmap.y, p.pointmap.z));
        },
        "text"_a);
  m.def("parse_frame", [](const std::string& t) { return parse_frame(t).frame; }, "text"_a);
  m.def("parse_bbox3d", [](const std::string& t) { return from_box(parse_bbox3d(t).bbox_3d); }, "text"_a);
  m.def("parse_detections",
        [](const std::string& t) {
          const auto d = parse_detections(t);
          py::list entries;
          for (const auto& e : d.entries) entries.append(py::make_tuple(e.label, from_box(e.bbox_3d)));
          return py::make_tuple(entries, d.failure_reasons);
        },
        "text"_a, "Returns (entries, reasons for dropped entries).");
  m.def("point_semantic_json",
        [](const std::string& label, const std::array<double, 3>& p) {
          return point_semantic_json({label, {p[0], p[1], p[2]}});
        },
        "label"_a, "point"_a);
  m.def("frame_json", [](int f) { return frame_json({f}); }, "frame"_a);
  m.def("bbox3d_json", [](const std::vector<double>& box) { return bbox3d_json(to_box(box)); }, "box"_a);
  m.def("detections_json",
        [](const std::vector<std::pair<std::string, std::vector<double>>>& entries) {
          std::vector<DetectionEntry> e;
          for (const auto& [label, box] : entries) e.push_back({label, to_box(box)});
          return detections_json(e);
        },
        "entries"_a);
  m.def("fence_json", [](const std::string& body) { return fence_json(body); }, "body"_a);
  m.def("serialize_prompt",
        [](const std::string& task, int num_frames, std::optional<int> marked, std::optional<std::string> query,
           std::optional<std::array<double, 3>> point) {
          PromptPayload p;
          p.num_frames = num_frames;
          p.marked_position = marked;
          p.query = query;
          if (point) p.point = Vec3{(*point)[0], (*point)[1], (*point)[2]};
          return serialize_prompt(parse_prompt_task(task), p);
        },
        "task"_a, "num_frames"_a, "marked_position"_a = py::none(), "query"_a = py::none(), "point"_a = py::none());
  m.def("normalize_label", [](const std::string& l) { return normalize_label(l); }, "label"_a);

  // ---- metrics ----
  m.def("max_iou_matching", &max_iou_matching, "iou"_a, "threshold"_a,
        "Maximum-cardinality matching over pairs with iou >= threshold, ties broken by total IoU.");
  m.def("detection_prf",
        [](const std::vector<std::pair<std::vector<std::pair<std::string, std::vector<double>>>,
                                       std::vector<std::pair<std::string, std::vector<double>>>>>& scenes,
           const std::vector<std::string>& classes, double iou, bool strict) {
          std::vector<DetectionScene> s;
          for (std::size_t i = 0; i < scenes.size(); ++i) {
            DetectionScene d;
            d.scene_id = std::to_string(i);
            for (const auto& [l, b] : scenes[i].first) d.pred.entries.push_back({l, to_box(b)});
            for (const auto& [l, b] : scenes[i].second) d.gt.push_back({l, to_box(b)});
            s.push_back(std::move(d));
          }
          return metrics_dict(detection_prf(s, iou, classes, strict));
        },
        "scenes"_a, "classes"_a, "iou"_a = 0.25, "strict"_a = false,
        "scenes: list of (predictions, ground truth), each a list of (label, box).");
  m.def("grounding_accuracy",
        [](const std::vector<std::optional<std::vector<double>>>& preds, const std::vector<std::vector<double>>& gts) {
          std::vector<GroundingPrediction> p;
          std::vector<GroundingTruth> g;
          for (std::size_t i = 0; i < gts.size(); ++i) g.push_back({std::to_string(i), to_box(gts[i])});
          for (std::size_t i = 0; i < preds.size(); ++i)
            p.push_back({std::to_string(i), preds[i] ? std::optional(to_box(*preds[i])) : std::nullopt});
          const auto r = grounding_accuracy(p, g);
          return py::dict("acc_025"_a = r.acc_025, "acc_05"_a = r.acc_05, "n_samples"_a = r.n_samples,
                          "n_parse_failures"_a = r.n_parse_failures, "ious"_a = r.ious);
        },
        "predictions"_a, "ground_truth"_a, "Predictions may be None for unparseable answers.");
  m.def("tokenize_caption", [](const std::string& t) { return tokenize_caption(t); }, "text"_a);
  m.def("caption_scores",
        [](const std::vector<std::string>& candidates, const std::vector<std::vector<std::string>>& references,
           const std::vector<double>& ious, double thr) {
          if (candidates.size() != references.size() || candidates.size() != ious.size())
            throw InvalidArgument("candidates, references and ious must have the same length");
          std::vector<CaptionSample> s;
          for (std::size_t i = 0; i < candidates.size(); ++i) s.push_back({candidates[i], references[i], ious[i]});
          const auto r = caption_scores(s, thr);
          return py::dict("cider"_a = r.cider, "bleu4"_a = r.bleu4, "rouge_l"_a = r.rouge_l,
                          "n_samples"_a = r.n_samples, "n_passing"_a = r.n_passing);
        },
        "candidates"_a, "references"_a, "ious"_a, "iou_threshold"_a = 0.5);
  m.def("pointmap_eval",
        [](const Array& pred, const Array& gt, const std::string& mode) {
          const auto r = pointmap_eval(to_points(pred), to_points(gt), parse_pointmap_mode(mode));
          return py::dict("mode"_a = std::string(to_string(r.mode)), "accuracy"_a = stats_dict(r.accuracy),
                          "completeness"_a = stats_dict(r.completeness), "overall"_a = stats_dict(r.overall));
        },
        "pred"_a, "gt"_a, "mode"_a = "metric");

  // ---- sparse sample generation ----
  m.def("generate_samples",
        [](const std::string& scene_dir, const std::string& annotations, double fps, int window, double tolerance,
           std::size_t max_samples, std::uint64_t seed) {
          const ScenePack pack = load_scene_pack(scene_dir);
          const auto ann = load_annotations(annotations);
          const auto it = ann.find(pack.scene_id);
          const std::vector<ObjectAnnotation> none;
          SparseGenOptions opts{fps, window, tolerance, max_samples, seed};
          const auto r = generate_scene_samples(pack, it == ann.end() ? none : it->second, opts);
          py::list samples;
          for (const auto& s : r.samples)
            samples.append(py::dict("scene_id"_a = s.scene_id, "frame_indices"_a = s.frame_indices,
                                    "marked_frame"_a = s.marked_frame, "pixel"_a = py::make_tuple(s.pixel.u, s.pixel.v),
                                    "label"_a = s.label,
                                    "point"_a = py::make_tuple(s.point_first_frame.x, s.point_first_frame.y,
                                                               s.point_first_frame.z),
                                    "point_raw"_a = py::make_tuple(s.point_raw.x, s.point_raw.y, s.point_raw.z)));
          const py::dict stats("attempted"_a = r.stats.attempted, "accepted"_a = r.stats.accepted,
                               "skipped"_a = r.stats.skipped);
          return py::make_tuple(samples, stats);
        },
        "scene_dir"_a, "annotations"_a, "fps"_a = 1.0, "window"_a = 4, "tolerance"_a = kDefaultVisibilityTolerance,
        "max_samples"_a = 0, "seed"_a = 0, "Point-prompted samples of one scene pack; returns (samples, stats).");

  // ---- gated fusion ----
  m.def("gate_coefficients",
        [](const Array& visual, const Array& geometric, const Array& w1, const Array& b1, const Array& w2,
           const Array& b2) {
          GateMlpParams p;
          p.mlp.first = to_dense(w1, b1);
          p.mlp.second = to_dense(w2, b2);
          p.validate();
          return from_grid(gate_coefficients(to_grid(visual), to_grid(geometric), p).values());
        },
        "visual"_a, "geometric"_a, "w1"_a, "b1"_a, "w2"_a, "b2"_a,
        "Per-channel gate of the two-layer GELU perceptron on [visual, geometric].");
  m.def("fuse_gated",
        [](const Array& visual, const Array& geometric, const Array& gate) {
          return from_grid(fuse_gated(to_grid(visual), to_grid(geometric), GateField(to_grid(gate))));
        },
        "visual"_a, "geometric"_a, "gate"_a);
  m.def("grad_check",
        [](int rows, int cols, int channels, std::uint64_t seed, double init_scale, double step, double tolerance) {
          std::mt19937_64 rng(seed);
          const TokenGrid v = random_grid(rows, cols, channels, rng, 1.0);
          const TokenGrid g = random_grid(rows, cols, channels, rng, 1.0);
          const GatedPathParams params{random_merge_params(channels, rng, init_scale),
                                       random_merge_params(channels, rng, init_scale),
                                       random_gate_params(channels, rng, init_scale)};
          const LossSpec loss{LossSpec::Kind::squared_error, random_grid(rows / 2, cols / 2, channels, rng, 1.0)};
          const auto r = grad_check(v, g, params, loss, step, tolerance);
          return py::dict("max_relative_error"_a = r.max_relative_error, "passed"_a = r.passed,
                          "parameters_checked"_a = r.parameters_checked, "worst_parameter"_a = r.worst_parameter);
        },
        "rows"_a = 4, "cols"_a = 4, "channels"_a = 4, "seed"_a = 0, "init_scale"_a = 0.5, "step"_a = 1e-5,
        "tolerance"_a = 1e-5, "Analytic vs central-difference gradients of merge, gate and fuse on random inputs.");
}
