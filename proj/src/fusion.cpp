#include "geoperc/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "geoperc/error.hpp"

namespace geoperc {

// ---- grids ----

template <typename T>
BasicTokenGrid<T>::BasicTokenGrid(int rows, int cols, int channels)
    : rows_(rows), cols_(cols), channels_(channels) {
  if (rows <= 0 || cols <= 0 || channels <= 0)
    throw InvalidArgument("token grid dimensions must be positive");
  data_.assign(static_cast<std::size_t>(rows) * cols * channels, T{});
}

template <typename T>
BasicTokenGrid<T>::BasicTokenGrid(int rows, int cols, int channels, std::vector<T> data)
    : BasicTokenGrid(rows, cols, channels) {
  if (data.size() != data_.size())
    throw InvalidArgument("token grid data length " + std::to_string(data.size()) +
                          " does not match rows*cols*channels = " + std::to_string(data_.size()));
  data_ = std::move(data);
  if (!all_finite()) throw InvalidArgument("token grid data must be finite");
}

template <typename T>
BasicTokenGrid<T> BasicTokenGrid<T>::filled(int rows, int cols, int channels, T value) {
  BasicTokenGrid g(rows, cols, channels);
  std::fill(g.data_.begin(), g.data_.end(), value);
  return g;
}

template <typename T>
bool BasicTokenGrid<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

// ---- perceptrons ----

namespace {

template <typename T>
T sigmoid_of(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
T gelu_of(T x) {
  return T(0.5) * x * std::erfc(-x / std::numbers::sqrt2_v<T>);
}

}  // namespace

double sigmoid(double x) { return sigmoid_of(x); }

double gelu(double x) { return gelu_of(x); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * std::erfc(-x / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

namespace {

template <typename T>
T activate(Activation act, T x) {
  return act == Activation::gelu ? gelu_of(x) : x;
}

// Clamped so saturated gates still honour the open-interval invariant.
template <typename T>
T gate_value(T logit) {
  return std::clamp(sigmoid_of(logit), std::numeric_limits<T>::denorm_min(),
                    std::nextafter(T(1), T(0)));
}

template <typename T>
void check_shapes(const BasicTokenGrid<T>& a, const BasicTokenGrid<T>& b, const char* what) {
  if (!a.same_shape(b)) throw InvalidArgument(std::string(what) + ": grid shapes differ");
}

template <typename T>
void check_dense(const Dense<T>& d, int in, int out, const char* what) {
  if (d.in != in || d.out != out ||
      d.weight.size() != static_cast<std::size_t>(in) * static_cast<std::size_t>(out) ||
      d.bias.size() != static_cast<std::size_t>(out))
    throw InvalidArgument(std::string(what) + ": expected a " + std::to_string(in) + " -> " +
                          std::to_string(out) + " layer");
}

}  // namespace

template <typename T>
void Dense<T>::apply(std::span<const T> x, std::span<T> y) const {
  for (int o = 0; o < out; ++o) {
    T acc = bias[o];
    const T* row = weight.data() + static_cast<std::size_t>(o) * in;
    for (int i = 0; i < in; ++i) acc += row[i] * x[i];
    y[o] = acc;
  }
}

template <typename T>
void TwoLayerMlp<T>::forward(std::span<const T> x, std::span<T> y) const {
  std::vector<T> hidden(static_cast<std::size_t>(first.out));
  first.apply(x, hidden);
  for (auto& h : hidden) h = activate(activation, h);
  second.apply(hidden, y);
}

template <typename T>
BasicMergeMlpParams<T> BasicMergeMlpParams<T>::zeros(int channels, Activation act) {
  if (channels <= 0) throw InvalidArgument("channels must be positive");
  return {TwoLayerMlp<T>{Dense<T>(4 * channels, 4 * channels), Dense<T>(4 * channels, channels),
                         act}};
}

template <typename T>
void BasicMergeMlpParams<T>::validate() const {
  const int c = mlp.second.out;
  if (c <= 0) throw InvalidArgument("merge params: channels must be positive");
  check_dense(mlp.first, 4 * c, 4 * c, "merge params first layer");
  check_dense(mlp.second, 4 * c, c, "merge params second layer");
}

template <typename T>
BasicGateMlpParams<T> BasicGateMlpParams<T>::zeros(int channels, Activation act) {
  if (channels <= 0) throw InvalidArgument("channels must be positive");
  return {TwoLayerMlp<T>{Dense<T>(2 * channels, channels), Dense<T>(channels, channels), act}};
}

template <typename T>
void BasicGateMlpParams<T>::validate() const {
  const int c = mlp.second.out;
  if (c <= 0) throw InvalidArgument("gate params: channels must be positive");
  check_dense(mlp.first, 2 * c, c, "gate params first layer");
  check_dense(mlp.second, c, c, "gate params second layer");
}

template <typename T>
CrossAttentionParams<T> CrossAttentionParams<T>::zeros(int channels) {
  return {Dense<T>(channels, channels), Dense<T>(channels, channels), Dense<T>(channels, channels)};
}

template <typename T>
BasicGateField<T>::BasicGateField(BasicTokenGrid<T> values) : values_(std::move(values)) {
  for (T g : values_.data())
    if (!(g > T(0) && g < T(1))) throw InvalidArgument("gate values must lie strictly in (0, 1)");
}

// ---- config ----

FusionVariant parse_fusion_variant(std::string_view name) {
  if (name == "add") return FusionVariant::add;
  if (name == "weighted") return FusionVariant::weighted;
  if (name == "cross_attention") return FusionVariant::cross_attention;
  if (name == "gated") return FusionVariant::gated;
  throw InvalidArgument("unknown fusion variant '" + std::string(name) + "'");
}

std::string_view to_string(FusionVariant variant) {
  switch (variant) {
    case FusionVariant::add: return "add";
    case FusionVariant::weighted: return "weighted";
    case FusionVariant::cross_attention: return "cross_attention";
    case FusionVariant::gated: return "gated";
  }
  return "gated";
}

void FusionConfig::validate() const {
  if (num_layers <= 0) throw InvalidArgument("fusion config: num_layers must be positive");
  if (channels <= 0) throw InvalidArgument("fusion config: channels must be positive");
  for (std::size_t i = 0; i < inject_layers.size(); ++i) {
    const int l = inject_layers[i];
    if (l < 1 || l >= num_layers)
      throw InvalidArgument("fusion config: inject layer " + std::to_string(l) +
                            " outside [1, num_layers)");
    if (i > 0 && l <= inject_layers[i - 1])
      throw InvalidArgument("fusion config: inject layers must be strictly increasing");
  }
}

// ---- operations ----

template <typename T>
BasicTokenGrid<T> merge_tokens(const BasicTokenGrid<T>& raw, const BasicMergeMlpParams<T>& params) {
  params.validate();
  if (raw.rows() % 2 != 0 || raw.cols() % 2 != 0)
    throw InvalidArgument("merge_tokens: rows and cols must be even");
  const int c = raw.channels();
  if (params.channels() != c) throw InvalidArgument("merge_tokens: channel count mismatch");
  BasicTokenGrid<T> out(raw.rows() / 2, raw.cols() / 2, c);
  std::vector<T> block(static_cast<std::size_t>(4 * c));
  for (int r = 0; r < out.rows(); ++r)
    for (int col = 0; col < out.cols(); ++col) {
      int slot = 0;
      for (int dr = 0; dr < 2; ++dr)
        for (int dc = 0; dc < 2; ++dc, ++slot) {
          const auto tok = raw.token(2 * r + dr, 2 * col + dc);
          std::copy(tok.begin(), tok.end(), block.begin() + slot * c);
        }
      params.mlp.forward(block, out.token(r, col));
    }
  return out;
}

template <typename T>
BasicGateField<T> gate_coefficients(const BasicTokenGrid<T>& visual,
                                    const BasicTokenGrid<T>& geometric,
                                    const BasicGateMlpParams<T>& params) {
  check_shapes(visual, geometric, "gate_coefficients");
  params.validate();
  const int c = visual.channels();
  if (params.channels() != c) throw InvalidArgument("gate_coefficients: channel count mismatch");
  BasicTokenGrid<T> gates(visual.rows(), visual.cols(), c);
  std::vector<T> joint(static_cast<std::size_t>(2 * c));
  std::vector<T> logits(static_cast<std::size_t>(c));
  for (int r = 0; r < visual.rows(); ++r)
    for (int col = 0; col < visual.cols(); ++col) {
      const auto v = visual.token(r, col);
      const auto g = geometric.token(r, col);
      std::copy(v.begin(), v.end(), joint.begin());
      std::copy(g.begin(), g.end(), joint.begin() + c);
      params.mlp.forward(joint, logits);
      auto out = gates.token(r, col);
      for (int k = 0; k < c; ++k) out[k] = gate_value<T>(logits[k]);
    }
  return BasicGateField<T>(std::move(gates));
}

template <typename T>
BasicTokenGrid<T> fuse_gated(const BasicTokenGrid<T>& visual, const BasicTokenGrid<T>& geometric,
                             const BasicGateField<T>& gate) {
  check_shapes(visual, geometric, "fuse_gated");
  check_shapes(visual, gate.values(), "fuse_gated");
  BasicTokenGrid<T> out(visual.rows(), visual.cols(), visual.channels());
  const auto& v = visual.data();
  const auto& g = geometric.data();
  const auto& w = gate.values().data();
  auto& o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const T mixed = w[i] * v[i] + (T(1) - w[i]) * g[i];
    o[i] = std::clamp(mixed, std::min(v[i], g[i]), std::max(v[i], g[i]));
  }
  return out;
}

template <typename T>
BasicTokenGrid<T> deepstack_inject(const BasicTokenGrid<T>& hidden, const BasicTokenGrid<T>& fused) {
  check_shapes(hidden, fused, "deepstack_inject");
  BasicTokenGrid<T> out = hidden;
  for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] += fused.data()[i];
  return out;
}

namespace {

template <typename T>
BasicTokenGrid<T> cross_attend(const BasicTokenGrid<T>& visual, const BasicTokenGrid<T>& geometric,
                               const CrossAttentionParams<T>& p) {
  const int c = visual.channels();
  check_dense(p.query, c, c, "cross attention query");
  check_dense(p.key, c, c, "cross attention key");
  check_dense(p.value, c, c, "cross attention value");
  const std::size_t n = visual.tokens();
  const auto cs = static_cast<std::size_t>(c);
  std::vector<T> q(n * cs), k(n * cs), val(n * cs);
  for (std::size_t i = 0; i < n; ++i) {
    const std::span<const T> vt(visual.data().data() + i * cs, cs);
    const std::span<const T> gt(geometric.data().data() + i * cs, cs);
    p.query.apply(vt, std::span<T>(q.data() + i * cs, cs));
    p.key.apply(gt, std::span<T>(k.data() + i * cs, cs));
    p.value.apply(gt, std::span<T>(val.data() + i * cs, cs));
  }
  BasicTokenGrid<T> out = visual;
  const double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(c));
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t d = 0; d < cs; ++d) s += static_cast<double>(q[i * cs + d] * k[j * cs + d]);
      scores[j] = s * inv_sqrt_c;
      peak = std::max(peak, scores[j]);
    }
    double total = 0.0;
    for (auto& s : scores) total += (s = std::exp(s - peak));
    for (std::size_t j = 0; j < n; ++j) {
      const double a = scores[j] / total;
      for (std::size_t d = 0; d < cs; ++d)
        out.data()[i * cs + d] += static_cast<T>(a * static_cast<double>(val[j * cs + d]));
    }
  }
  return out;
}

}  // namespace

template <typename T>
BasicTokenGrid<T> fuse_variant(const BasicTokenGrid<T>& visual, const BasicTokenGrid<T>& geometric,
                               FusionVariant variant, const VariantParams<T>& params) {
  check_shapes(visual, geometric, "fuse_variant");
  switch (variant) {
    case FusionVariant::add:
      return deepstack_inject(visual, geometric);
    case FusionVariant::weighted: {
      const auto* w = std::get_if<WeightedParams<T>>(&params);
      if (!w) throw InvalidArgument("fuse_variant: weighted fusion needs WeightedParams");
      if (!std::isfinite(w->alpha)) throw InvalidArgument("fuse_variant: alpha must be finite");
      const T mix = static_cast<T>(sigmoid(static_cast<double>(w->alpha)));
      BasicTokenGrid<T> out(visual.rows(), visual.cols(), visual.channels());
      for (std::size_t i = 0; i < out.data().size(); ++i)
        out.data()[i] = mix * visual.data()[i] + (T(1) - mix) * geometric.data()[i];
      return out;
    }
    case FusionVariant::cross_attention: {
      const auto* p = std::get_if<CrossAttentionParams<T>>(&params);
      if (!p) throw InvalidArgument("fuse_variant: cross attention needs CrossAttentionParams");
      return cross_attend(visual, geometric, *p);
    }
    case FusionVariant::gated: {
      const auto* p = std::get_if<BasicGateMlpParams<T>>(&params);
      if (!p) throw InvalidArgument("fuse_variant: gated fusion needs GateMlpParams");
      return fuse_gated(visual, geometric, gate_coefficients(visual, geometric, *p));
    }
  }
  throw InvalidArgument("fuse_variant: unknown variant");
}

std::vector<double> gate_statistics(std::span<const GateField> gates) {
  if (gates.empty()) throw InvalidArgument("gate_statistics: no layers given");
  std::vector<double> means;
  means.reserve(gates.size());
  for (const auto& g : gates) {
    const auto& d = g.values().data();
    means.push_back(std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size()));
  }
  return means;
}

std::vector<std::pair<int, int>> deepstack_schedule(const FusionConfig& config) {
  config.validate();
  std::vector<std::pair<int, int>> schedule;
  for (std::size_t k = 0; k < config.inject_layers.size(); ++k)
    schedule.emplace_back(config.inject_layers[k], static_cast<int>(k));
  return schedule;
}

// ---- multi-level ----

MultiLevelFusion::MultiLevelFusion(FusionConfig config, std::map<int, LayerFusionParams> layers)
    : config_(std::move(config)), layers_(std::move(layers)) {
  config_.validate();
  for (int l : active_layers(config_)) {
    const auto it = layers_.find(l);
    if (it == layers_.end())
      throw InvalidArgument("fusion params missing layer " + std::to_string(l));
    it->second.visual_merge.validate();
    it->second.geometric_merge.validate();
    if (it->second.visual_merge.channels() != config_.channels)
      throw InvalidArgument("fusion params channel count differs from config");
  }
}

std::vector<int> MultiLevelFusion::active_layers(const FusionConfig& config) {
  std::vector<int> layers = config.inject_layers;
  layers.push_back(config.num_layers);
  return layers;
}

MultiLevelOutput MultiLevelFusion::forward(const std::map<int, TokenGrid>& raw_visual,
                                           const std::map<int, TokenGrid>& raw_geometric) const {
  MultiLevelOutput out;
  for (int l : active_layers(config_)) {
    if (!raw_visual.contains(l) || !raw_geometric.contains(l))
      throw InvalidArgument("multi-level fusion: missing raw grids for layer " + std::to_string(l));
    const auto& p = layers_.at(l);
    const TokenGrid v = merge_tokens(raw_visual.at(l), p.visual_merge);
    const TokenGrid g = merge_tokens(raw_geometric.at(l), p.geometric_merge);
    if (config_.variant == FusionVariant::gated) {
      const auto* gp = std::get_if<GateMlpParams>(&p.fusion);
      if (!gp) throw InvalidArgument("gated fusion needs GateMlpParams");
      GateField gate = gate_coefficients(v, g, *gp);
      out.fused.emplace(l, fuse_gated(v, g, gate));
      out.gates.emplace(l, std::move(gate));
    } else {
      out.fused.emplace(l, fuse_variant(v, g, config_.variant, p.fusion));
    }
  }
  return out;
}

std::vector<TokenGrid> MultiLevelFusion::inject(std::vector<TokenGrid> hidden,
                                                const MultiLevelOutput& out) const {
  for (const auto& [encoder_layer, decoder_layer] : deepstack_schedule(config_)) {
    if (static_cast<std::size_t>(decoder_layer) >= hidden.size())
      throw InvalidArgument("deepstack: fewer decoder hidden states than injected layers");
    hidden[decoder_layer] = deepstack_inject(hidden[decoder_layer], out.fused.at(encoder_layer));
  }
  return hidden;
}

// ---- initialization ----

void fill_uniform(std::span<double> values, std::mt19937_64& rng, double scale) {
  constexpr double kInv53 = 1.0 / 9007199254740992.0;
  for (auto& v : values) v = scale * (2.0 * static_cast<double>(rng() >> 11) * kInv53 - 1.0);
}

namespace {
void randomize(TwoLayerMlp<double>& mlp, std::mt19937_64& rng, double scale) {
  fill_uniform(mlp.first.weight, rng, scale);
  fill_uniform(mlp.first.bias, rng, scale);
  fill_uniform(mlp.second.weight, rng, scale);
  fill_uniform(mlp.second.bias, rng, scale);
}
}  // namespace

MergeMlpParams random_merge_params(int channels, std::mt19937_64& rng, double scale,
                                   Activation act) {
  auto p = MergeMlpParams::zeros(channels, act);
  randomize(p.mlp, rng, scale);
  return p;
}

GateMlpParams random_gate_params(int channels, std::mt19937_64& rng, double scale,
                                 Activation act) {
  auto p = GateMlpParams::zeros(channels, act);
  randomize(p.mlp, rng, scale);
  return p;
}

LayerFusionParams random_layer_params(const FusionConfig& config, std::mt19937_64& rng,
                                      double scale) {
  LayerFusionParams p{random_merge_params(config.channels, rng, scale),
                      random_merge_params(config.channels, rng, scale), std::monostate{}};
  switch (config.variant) {
    case FusionVariant::add:
      break;
    case FusionVariant::weighted: {
      double alpha = 0.0;
      fill_uniform(std::span<double>(&alpha, 1), rng, scale);
      p.fusion = WeightedParams<double>{alpha};
      break;
    }
    case FusionVariant::cross_attention: {
      auto ca = CrossAttentionParams<double>::zeros(config.channels);
      for (auto* d : {&ca.query, &ca.key, &ca.value}) {
        fill_uniform(d->weight, rng, scale);
        fill_uniform(d->bias, rng, scale);
      }
      p.fusion = std::move(ca);
      break;
    }
    case FusionVariant::gated:
      p.fusion = random_gate_params(config.channels, rng, scale);
      break;
  }
  return p;
}

TokenGrid random_grid(int rows, int cols, int channels, std::mt19937_64& rng, double scale) {
  TokenGrid g(rows, cols, channels);
  fill_uniform(g.data(), rng, scale);
  return g;
}

// ---- explicit instantiations ----

#define GEOPERC_INSTANTIATE(T)                                                                 \
  template class BasicTokenGrid<T>;                                                            \
  template struct Dense<T>;                                                                    \
  template struct TwoLayerMlp<T>;                                                              \
  template struct BasicMergeMlpParams<T>;                                                      \
  template struct BasicGateMlpParams<T>;                                                       \
  template struct CrossAttentionParams<T>;                                                     \
  template class BasicGateField<T>;                                                            \
  template BasicTokenGrid<T> merge_tokens(const BasicTokenGrid<T>&,                            \
                                          const BasicMergeMlpParams<T>&);                      \
  template BasicGateField<T> gate_coefficients(const BasicTokenGrid<T>&,                       \
                                               const BasicTokenGrid<T>&,                       \
                                               const BasicGateMlpParams<T>&);                  \
  template BasicTokenGrid<T> fuse_gated(const BasicTokenGrid<T>&, const BasicTokenGrid<T>&,    \
                                        const BasicGateField<T>&);                             \
  template BasicTokenGrid<T> fuse_variant(const BasicTokenGrid<T>&, const BasicTokenGrid<T>&,  \
                                          FusionVariant, const VariantParams<T>&);             \
  template BasicTokenGrid<T> deepstack_inject(const BasicTokenGrid<T>&, const BasicTokenGrid<T>&);

GEOPERC_INSTANTIATE(double)
GEOPERC_INSTANTIATE(float)
GEOPERC_INSTANTIATE(long double)

#undef GEOPERC_INSTANTIATE

}  // namespace geoperc
