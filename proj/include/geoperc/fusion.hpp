#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace geoperc {

/// rows x cols grid of channel vectors, row-major with channels innermost.
template <typename T>
class BasicTokenGrid {
 public:
  BasicTokenGrid() = default;
  /// Zero-filled grid. Throws InvalidArgument on non-positive dimensions.
  BasicTokenGrid(int rows, int cols, int channels);
  BasicTokenGrid(int rows, int cols, int channels, std::vector<T> data);
  static BasicTokenGrid filled(int rows, int cols, int channels, T value);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int channels() const { return channels_; }
  std::size_t tokens() const { return static_cast<std::size_t>(rows_) * cols_; }

  std::span<T> token(int r, int c) {
    return {data_.data() + (static_cast<std::size_t>(r) * cols_ + c) * channels_,
            static_cast<std::size_t>(channels_)};
  }
  std::span<const T> token(int r, int c) const {
    return {data_.data() + (static_cast<std::size_t>(r) * cols_ + c) * channels_,
            static_cast<std::size_t>(channels_)};
  }
  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool same_shape(const BasicTokenGrid& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && channels_ == o.channels_;
  }
  bool all_finite() const;
  bool operator==(const BasicTokenGrid&) const = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  int channels_ = 0;
  std::vector<T> data_;
};

using TokenGrid = BasicTokenGrid<double>;

enum class Activation { gelu, identity };

/// y = W x + b with W stored (out x in) row-major.
template <typename T>
struct Dense {
  int in = 0;
  int out = 0;
  std::vector<T> weight;
  std::vector<T> bias;

  Dense() = default;
  Dense(int in_features, int out_features)
      : in(in_features),
        out(out_features),
        weight(static_cast<std::size_t>(in_features) * out_features, T{}),
        bias(static_cast<std::size_t>(out_features), T{}) {}

  void apply(std::span<const T> x, std::span<T> y) const;
};

/// y = second(act(first(x))).
template <typename T>
struct TwoLayerMlp {
  Dense<T> first;
  Dense<T> second;
  Activation activation = Activation::gelu;

  int in_features() const { return first.in; }
  int out_features() const { return second.out; }
  void forward(std::span<const T> x, std::span<T> y) const;
};

/// Token-merge perceptron 4c -> 4c -> c over a concatenated 2x2 block.
template <typename T>
struct BasicMergeMlpParams {
  TwoLayerMlp<T> mlp;

  static BasicMergeMlpParams zeros(int channels, Activation act = Activation::gelu);
  int channels() const { return mlp.out_features(); }
  void validate() const;
};

/// Gate perceptron 2c -> c -> c applied to [visual, geometric].
template <typename T>
struct BasicGateMlpParams {
  TwoLayerMlp<T> mlp;

  static BasicGateMlpParams zeros(int channels, Activation act = Activation::gelu);
  int channels() const { return mlp.out_features(); }
  void validate() const;
};

using MergeMlpParams = BasicMergeMlpParams<double>;
using GateMlpParams = BasicGateMlpParams<double>;

/// Per-token, per-channel gate values, every entry strictly inside (0, 1).
template <typename T>
class BasicGateField {
 public:
  /// Throws InvalidArgument if any entry is outside the open unit interval.
  explicit BasicGateField(BasicTokenGrid<T> values);
  const BasicTokenGrid<T>& values() const { return values_; }

 private:
  BasicTokenGrid<T> values_;
};

using GateField = BasicGateField<double>;

enum class FusionVariant { add, weighted, cross_attention, gated };

/// Throws InvalidArgument for unknown names.
FusionVariant parse_fusion_variant(std::string_view name);
std::string_view to_string(FusionVariant variant);

struct FusionConfig {
  int num_layers = 24;
  std::vector<int> inject_layers{5, 11, 17};
  int channels = 0;
  FusionVariant variant = FusionVariant::gated;

  /// inject_layers strictly increasing within [1, num_layers), channels > 0.
  void validate() const;
};

template <typename T>
struct WeightedParams {
  T alpha{};  // mixing weight sigmoid(alpha) on the visual grid
};

/// Single-head attention: visual queries, geometric keys/values, no output projection.
template <typename T>
struct CrossAttentionParams {
  Dense<T> query;
  Dense<T> key;
  Dense<T> value;

  static CrossAttentionParams zeros(int channels);
};

template <typename T>
using VariantParams = std::variant<std::monostate, WeightedParams<T>, CrossAttentionParams<T>,
                                   BasicGateMlpParams<T>>;

// Numerically stable logistic and the exact-erf GELU used by the perceptrons.
double sigmoid(double x);
double gelu(double x);
double gelu_derivative(double x);

/// 2x2 block merge: output token (r, c) = MLP(concat(in(2r,2c), in(2r,2c+1), in(2r+1,2c),
/// in(2r+1,2c+1))). Throws InvalidArgument for odd sizes or mismatched channels.
template <typename T>
BasicTokenGrid<T> merge_tokens(const BasicTokenGrid<T>& raw, const BasicMergeMlpParams<T>& params);

/// g = sigmoid(MLP([visual, geometric])) per token.
template <typename T>
BasicGateField<T> gate_coefficients(const BasicTokenGrid<T>& visual,
                                    const BasicTokenGrid<T>& geometric,
                                    const BasicGateMlpParams<T>& params);

/// g * visual + (1 - g) * geometric, elementwise; stays within [min, max] of the inputs.
template <typename T>
BasicTokenGrid<T> fuse_gated(const BasicTokenGrid<T>& visual, const BasicTokenGrid<T>& geometric,
                             const BasicGateField<T>& gate);

/// Dispatches on `variant`; params must hold the matching alternative (monostate for add).
template <typename T>
BasicTokenGrid<T> fuse_variant(const BasicTokenGrid<T>& visual, const BasicTokenGrid<T>& geometric,
                               FusionVariant variant, const VariantParams<T>& params);

/// hidden + fused, elementwise.
template <typename T>
BasicTokenGrid<T> deepstack_inject(const BasicTokenGrid<T>& hidden, const BasicTokenGrid<T>& fused);

/// Mean gate value per layer. Throws InvalidArgument on an empty list.
std::vector<double> gate_statistics(std::span<const GateField> gates);

/// Encoder layer feeding each of the first decoder layers: decoder layer k receives the fused
/// grid of config.inject_layers[k].
std::vector<std::pair<int, int>> deepstack_schedule(const FusionConfig& config);

struct LayerFusionParams {
  MergeMlpParams visual_merge;
  MergeMlpParams geometric_merge;
  VariantParams<double> fusion;
};

struct MultiLevelOutput {
  std::map<int, TokenGrid> fused;  // keyed by 1-based encoder layer
  std::map<int, GateField> gates;  // only for the gated variant
  const TokenGrid& primary(const FusionConfig& config) const { return fused.at(config.num_layers); }
};

/// Per-layer fusion of the injected layers and the final layer, each with its own parameters.
class MultiLevelFusion {
 public:
  MultiLevelFusion(FusionConfig config, std::map<int, LayerFusionParams> layers);

  /// Layers that carry parameters: inject_layers plus num_layers.
  static std::vector<int> active_layers(const FusionConfig& config);

  /// Raw patch-resolution grids keyed by encoder layer; must cover active_layers().
  MultiLevelOutput forward(const std::map<int, TokenGrid>& raw_visual,
                           const std::map<int, TokenGrid>& raw_geometric) const;

  /// Adds injected grids to the first decoder hidden states per deepstack_schedule().
  std::vector<TokenGrid> inject(std::vector<TokenGrid> hidden, const MultiLevelOutput& out) const;

  const FusionConfig& config() const { return config_; }
  const std::map<int, LayerFusionParams>& layers() const { return layers_; }

 private:
  FusionConfig config_;
  std::map<int, LayerFusionParams> layers_;
};

// Deterministic parameter initialization: uniform in [-scale, scale].
void fill_uniform(std::span<double> values, std::mt19937_64& rng, double scale);
MergeMlpParams random_merge_params(int channels, std::mt19937_64& rng, double scale,
                                   Activation act = Activation::gelu);
GateMlpParams random_gate_params(int channels, std::mt19937_64& rng, double scale,
                                 Activation act = Activation::gelu);
LayerFusionParams random_layer_params(const FusionConfig& config, std::mt19937_64& rng,
                                      double scale);
TokenGrid random_grid(int rows, int cols, int channels, std::mt19937_64& rng, double scale);

// ---- gradient verification for the merge -> gate -> fuse path ----

struct GatedPathParams {
  MergeMlpParams visual_merge;
  MergeMlpParams geometric_merge;
  GateMlpParams gate;
};

struct LossSpec {
  enum class Kind { squared_error, linear };
  Kind kind = Kind::squared_error;
  TokenGrid reference;  // target (squared_error: 0.5 * sum (f - t)^2) or weights (linear: sum w f)
};

enum ParamGroup : unsigned {
  kGateParams = 1u << 0,
  kVisualMergeParams = 1u << 1,
  kGeometricMergeParams = 1u << 2,
  kAllParams = kGateParams | kVisualMergeParams | kGeometricMergeParams,
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::size_t parameters_checked = 0;
  std::string worst_parameter;
};

/// Loss of the fused output for raw patch-resolution inputs.
double gated_path_loss(const TokenGrid& raw_visual, const TokenGrid& raw_geometric,
                       const GatedPathParams& params, const LossSpec& loss);

/// Analytic gradient by back-propagation; same layout as `params`.
GatedPathParams gated_path_gradient(const TokenGrid& raw_visual, const TokenGrid& raw_geometric,
                                    const GatedPathParams& params, const LossSpec& loss);

/// Compares the analytic gradient with central differences of step `step` on every parameter
/// in `groups`; the differenced losses are evaluated in long double. Relative error per
/// parameter is |a - n| / max(|a|, |n|, 1e-8).
/// Throws NumericalFailure if the loss is not finite.
GradCheckReport grad_check(const TokenGrid& raw_visual, const TokenGrid& raw_geometric,
                           const GatedPathParams& params, const LossSpec& loss, double step,
                           double tolerance, unsigned groups = kAllParams);

// ---- parameter files: JSON manifest + flat little-endian float64 buffer ----

void save_fusion_params(const MultiLevelFusion& fusion, const std::filesystem::path& manifest);
MultiLevelFusion load_fusion_params(const std::filesystem::path& manifest);

}  // namespace geoperc
