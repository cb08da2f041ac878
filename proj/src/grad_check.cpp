#include <algorithm>
#include <cmath>
#include <string>

#include "geoperc/error.hpp"
#include "geoperc/fusion.hpp"

namespace geoperc {
namespace {

using Mlp = TwoLayerMlp<double>;

struct MlpTrace {
  std::vector<double> input;
  std::vector<double> pre;     // first layer output before activation
  std::vector<double> hidden;  // after activation
  std::vector<double> output;
};

MlpTrace trace_forward(const Mlp& mlp, std::vector<double> x) {
  MlpTrace t;
  t.input = std::move(x);
  t.pre.resize(static_cast<std::size_t>(mlp.first.out));
  mlp.first.apply(t.input, t.pre);
  t.hidden = t.pre;
  if (mlp.activation == Activation::gelu)
    for (auto& h : t.hidden) h = gelu(h);
  t.output.resize(static_cast<std::size_t>(mlp.second.out));
  mlp.second.apply(t.hidden, t.output);
  return t;
}

void accumulate_dense(const Dense<double>& layer, std::span<const double> x,
                      std::span<const double> dy, Dense<double>& grad, std::span<double> dx) {
  for (int o = 0; o < layer.out; ++o) {
    grad.bias[o] += dy[o];
    for (int i = 0; i < layer.in; ++i) {
      const std::size_t w = static_cast<std::size_t>(o) * layer.in + i;
      grad.weight[w] += dy[o] * x[i];
      if (!dx.empty()) dx[i] += layer.weight[w] * dy[o];
    }
  }
}

// Back-propagates dy through one perceptron evaluation; adds into `grad`, returns dL/dx.
std::vector<double> trace_backward(const Mlp& mlp, const MlpTrace& t, std::span<const double> dy,
                                   Mlp& grad) {
  std::vector<double> dhidden(t.hidden.size(), 0.0);
  accumulate_dense(mlp.second, t.hidden, dy, grad.second, dhidden);
  if (mlp.activation == Activation::gelu)
    for (std::size_t i = 0; i < dhidden.size(); ++i) dhidden[i] *= gelu_derivative(t.pre[i]);
  std::vector<double> dx(t.input.size(), 0.0);
  accumulate_dense(mlp.first, t.input, dhidden, grad.first, dx);
  return dx;
}

Mlp zero_like(const Mlp& m) {
  return Mlp{Dense<double>(m.first.in, m.first.out), Dense<double>(m.second.in, m.second.out),
             m.activation};
}

std::vector<MlpTrace> merge_traces(const TokenGrid& raw, const MergeMlpParams& p) {
  const int c = raw.channels();
  std::vector<MlpTrace> traces;
  for (int r = 0; r < raw.rows() / 2; ++r)
    for (int col = 0; col < raw.cols() / 2; ++col) {
      std::vector<double> block;
      block.reserve(static_cast<std::size_t>(4 * c));
      for (int dr = 0; dr < 2; ++dr)
        for (int dc = 0; dc < 2; ++dc) {
          const auto tok = raw.token(2 * r + dr, 2 * col + dc);
          block.insert(block.end(), tok.begin(), tok.end());
        }
      traces.push_back(trace_forward(p.mlp, std::move(block)));
    }
  return traces;
}

double loss_of(const TokenGrid& fused, const LossSpec& loss) {
  if (!fused.same_shape(loss.reference))
    throw InvalidArgument("loss reference grid does not match the fused output shape");
  double total = 0.0;
  for (std::size_t i = 0; i < fused.data().size(); ++i) {
    const double f = fused.data()[i];
    const double ref = loss.reference.data()[i];
    total += loss.kind == LossSpec::Kind::linear ? ref * f : 0.5 * (f - ref) * (f - ref);
  }
  return total;
}

// Extended-precision copies for the finite-difference side: at small steps the
// double-precision loss roundoff would otherwise dominate small gradients.
using Wide = long double;

BasicTokenGrid<Wide> widen(const TokenGrid& g) {
  return {g.rows(), g.cols(), g.channels(), std::vector<Wide>(g.data().begin(), g.data().end())};
}

Dense<Wide> widen(const Dense<double>& d) {
  Dense<Wide> w(d.in, d.out);
  std::copy(d.weight.begin(), d.weight.end(), w.weight.begin());
  std::copy(d.bias.begin(), d.bias.end(), w.bias.begin());
  return w;
}

TwoLayerMlp<Wide> widen(const Mlp& m) { return {widen(m.first), widen(m.second), m.activation}; }

Wide wide_loss(const BasicTokenGrid<Wide>& raw_visual, const BasicTokenGrid<Wide>& raw_geometric,
               const GatedPathParams& params, const LossSpec& loss) {
  const auto v = merge_tokens(raw_visual, BasicMergeMlpParams<Wide>{widen(params.visual_merge.mlp)});
  const auto g =
      merge_tokens(raw_geometric, BasicMergeMlpParams<Wide>{widen(params.geometric_merge.mlp)});
  const auto fused = fuse_gated(v, g, gate_coefficients(v, g, BasicGateMlpParams<Wide>{widen(params.gate.mlp)}));
  if (fused.rows() != loss.reference.rows() || fused.cols() != loss.reference.cols() ||
      fused.channels() != loss.reference.channels())
    throw InvalidArgument("loss reference grid does not match the fused output shape");
  Wide total = 0;
  for (std::size_t i = 0; i < fused.data().size(); ++i) {
    const Wide f = fused.data()[i];
    const Wide ref = loss.reference.data()[i];
    total += loss.kind == LossSpec::Kind::linear ? ref * f : Wide(0.5) * (f - ref) * (f - ref);
  }
  return total;
}

struct NamedVector {
  std::string name;
  std::vector<double>* values;
  const std::vector<double>* gradient;
};

void collect(const std::string& prefix, Mlp& params, const Mlp& grad,
             std::vector<NamedVector>& out) {
  out.push_back({prefix + ".first.weight", &params.first.weight, &grad.first.weight});
  out.push_back({prefix + ".first.bias", &params.first.bias, &grad.first.bias});
  out.push_back({prefix + ".second.weight", &params.second.weight, &grad.second.weight});
  out.push_back({prefix + ".second.bias", &params.second.bias, &grad.second.bias});
}

}  // namespace

double gated_path_loss(const TokenGrid& raw_visual, const TokenGrid& raw_geometric,
                       const GatedPathParams& params, const LossSpec& loss) {
  const TokenGrid v = merge_tokens(raw_visual, params.visual_merge);
  const TokenGrid g = merge_tokens(raw_geometric, params.geometric_merge);
  return loss_of(fuse_gated(v, g, gate_coefficients(v, g, params.gate)), loss);
}

GatedPathParams gated_path_gradient(const TokenGrid& raw_visual, const TokenGrid& raw_geometric,
                                    const GatedPathParams& params, const LossSpec& loss) {
  const TokenGrid v = merge_tokens(raw_visual, params.visual_merge);
  const TokenGrid g = merge_tokens(raw_geometric, params.geometric_merge);
  if (!v.same_shape(loss.reference))
    throw InvalidArgument("loss reference grid does not match the fused output shape");
  const auto vis_traces = merge_traces(raw_visual, params.visual_merge);
  const auto geo_traces = merge_traces(raw_geometric, params.geometric_merge);

  GatedPathParams grad{{zero_like(params.visual_merge.mlp)},
                       {zero_like(params.geometric_merge.mlp)},
                       {zero_like(params.gate.mlp)}};
  const auto c = static_cast<std::size_t>(v.channels());
  for (std::size_t t = 0; t < v.tokens(); ++t) {
    const std::span<const double> vt(v.data().data() + t * c, c);
    const std::span<const double> gt(g.data().data() + t * c, c);
    std::vector<double> joint(vt.begin(), vt.end());
    joint.insert(joint.end(), gt.begin(), gt.end());
    const MlpTrace gate_trace = trace_forward(params.gate.mlp, std::move(joint));

    std::vector<double> dlogit(c), dv(c), dg(c);
    for (std::size_t k = 0; k < c; ++k) {
      const double z = gate_trace.output[k];
      const double gate = sigmoid(z);
      const double fused = gate * vt[k] + (1.0 - gate) * gt[k];
      const double ref = loss.reference.data()[t * c + k];
      const double dfused = loss.kind == LossSpec::Kind::linear ? ref : fused - ref;
      dv[k] = dfused * gate;
      dg[k] = dfused * (1.0 - gate);
      dlogit[k] = dfused * (vt[k] - gt[k]) * sigmoid(z) * sigmoid(-z);
    }
    const auto djoint = trace_backward(params.gate.mlp, gate_trace, dlogit, grad.gate.mlp);
    for (std::size_t k = 0; k < c; ++k) {
      dv[k] += djoint[k];
      dg[k] += djoint[c + k];
    }
    trace_backward(params.visual_merge.mlp, vis_traces[t], dv, grad.visual_merge.mlp);
    trace_backward(params.geometric_merge.mlp, geo_traces[t], dg, grad.geometric_merge.mlp);
  }
  return grad;
}

GradCheckReport grad_check(const TokenGrid& raw_visual, const TokenGrid& raw_geometric,
                           const GatedPathParams& params, const LossSpec& loss, double step,
                           double tolerance, unsigned groups) {
  if (!(step > 0.0)) throw InvalidArgument("grad_check: step must be > 0");
  const double base = gated_path_loss(raw_visual, raw_geometric, params, loss);
  if (!std::isfinite(base)) throw NumericalFailure("grad_check: loss is not finite");

  const GatedPathParams analytic = gated_path_gradient(raw_visual, raw_geometric, params, loss);
  GatedPathParams probe = params;
  std::vector<NamedVector> slots;
  if (groups & kGateParams) collect("gate", probe.gate.mlp, analytic.gate.mlp, slots);
  if (groups & kVisualMergeParams)
    collect("visual_merge", probe.visual_merge.mlp, analytic.visual_merge.mlp, slots);
  if (groups & kGeometricMergeParams)
    collect("geometric_merge", probe.geometric_merge.mlp, analytic.geometric_merge.mlp, slots);

  const auto wide_visual = widen(raw_visual);
  const auto wide_geometric = widen(raw_geometric);
  GradCheckReport report;
  report.tolerance = tolerance;
  for (const auto& slot : slots) {
    for (std::size_t i = 0; i < slot.values->size(); ++i) {
      double& x = (*slot.values)[i];
      const double saved = x;
      // The perturbed values are rounded to double, so the effective step is exact.
      x = saved + step;
      const Wide up_arg = x;
      const Wide up = wide_loss(wide_visual, wide_geometric, probe, loss);
      x = saved - step;
      const Wide down_arg = x;
      const Wide down = wide_loss(wide_visual, wide_geometric, probe, loss);
      x = saved;
      if (!std::isfinite(up) || !std::isfinite(down))
        throw NumericalFailure("grad_check: perturbed loss is not finite");
      const double numeric = static_cast<double>((up - down) / (up_arg - down_arg));
      const double exact = (*slot.gradient)[i];
      const double denom = std::max({std::abs(exact), std::abs(numeric), 1e-8});
      const double rel = std::abs(exact - numeric) / denom;
      ++report.parameters_checked;
      if (rel > report.max_relative_error || report.worst_parameter.empty()) {
        report.max_relative_error = std::max(report.max_relative_error, rel);
        report.worst_parameter = slot.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  report.passed = report.max_relative_error <= tolerance;
  return report;
}

}  // namespace geoperc
