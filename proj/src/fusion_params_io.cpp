#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "geoperc/error.hpp"
#include "geoperc/fusion.hpp"

namespace geoperc {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little,
              "parameter buffers are written in native little-endian order");

constexpr const char* kFormat = "geoperc-fusion-params";

struct TensorRef {
  std::string name;
  std::vector<int> shape;
  std::vector<double>* values;
};

void add_dense(const std::string& prefix, Dense<double>& d, std::vector<TensorRef>& out) {
  out.push_back({prefix + ".weight", {d.out, d.in}, &d.weight});
  out.push_back({prefix + ".bias", {d.out}, &d.bias});
}

void add_mlp(const std::string& prefix, TwoLayerMlp<double>& m, std::vector<TensorRef>& out) {
  add_dense(prefix + ".first", m.first, out);
  add_dense(prefix + ".second", m.second, out);
}

// Fixed traversal order shared by save and load.
std::vector<TensorRef> tensor_refs(std::map<int, LayerFusionParams>& layers) {
  std::vector<TensorRef> refs;
  for (auto& [layer, p] : layers) {
    const std::string prefix = "layer" + std::to_string(layer);
    add_mlp(prefix + ".visual_merge", p.visual_merge.mlp, refs);
    add_mlp(prefix + ".geometric_merge", p.geometric_merge.mlp, refs);
    // Weighted alpha is a scalar and handled by the callers.
    if (auto* ca = std::get_if<CrossAttentionParams<double>>(&p.fusion)) {
      add_dense(prefix + ".fusion.query", ca->query, refs);
      add_dense(prefix + ".fusion.key", ca->key, refs);
      add_dense(prefix + ".fusion.value", ca->value, refs);
    } else if (auto* g = std::get_if<GateMlpParams>(&p.fusion)) {
      add_mlp(prefix + ".fusion.gate", g->mlp, refs);
    }
  }
  return refs;
}

Activation activation_of(const std::map<int, LayerFusionParams>& layers) {
  return layers.empty() ? Activation::gelu : layers.begin()->second.visual_merge.mlp.activation;
}

}  // namespace

void save_fusion_params(const MultiLevelFusion& fusion, const fs::path& manifest) {
  auto layers = fusion.layers();
  const auto& cfg = fusion.config();
  std::vector<double> buffer;
  json tensors = json::array();
  auto append = [&](const std::string& name, const std::vector<int>& shape,
                    const std::vector<double>& values) {
    tensors.push_back({{"name", name}, {"shape", shape}, {"offset", buffer.size()}});
    buffer.insert(buffer.end(), values.begin(), values.end());
  };
  for (const auto& ref : tensor_refs(layers)) append(ref.name, ref.shape, *ref.values);
  for (const auto& [layer, p] : layers)
    if (const auto* w = std::get_if<WeightedParams<double>>(&p.fusion))
      append("layer" + std::to_string(layer) + ".fusion.alpha", {1}, {w->alpha});

  fs::path buffer_path = manifest;
  buffer_path.replace_extension(".f64");
  const json doc{{"format", kFormat},
                 {"version", 1},
                 {"num_layers", cfg.num_layers},
                 {"inject_layers", cfg.inject_layers},
                 {"channels", cfg.channels},
                 {"variant", std::string(to_string(cfg.variant))},
                 {"activation",
                  activation_of(layers) == Activation::gelu ? "gelu" : "identity"},
                 {"buffer", buffer_path.filename().string()},
                 {"count", buffer.size()},
                 {"tensors", tensors}};
  if (manifest.has_parent_path()) fs::create_directories(manifest.parent_path());
  std::ofstream out(manifest);
  out << doc.dump(2) << '\n';
  std::ofstream bin(buffer_path, std::ios::binary);
  bin.write(reinterpret_cast<const char*>(buffer.data()),
            static_cast<std::streamsize>(buffer.size() * sizeof(double)));
  if (!out || !bin) throw DataError("cannot write fusion params to " + manifest.string());
}

MultiLevelFusion load_fusion_params(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw DataError("cannot open " + manifest.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(manifest.string() + ": invalid JSON: " + e.what());
  }
  FusionConfig cfg;
  Activation act = Activation::gelu;
  std::vector<double> buffer;
  std::map<std::string, std::pair<std::vector<int>, std::size_t>> index;
  try {
    if (doc.at("format").get<std::string>() != kFormat)
      throw DataError(manifest.string() + ": not a fusion parameter manifest");
    cfg.num_layers = doc.at("num_layers").get<int>();
    cfg.inject_layers = doc.at("inject_layers").get<std::vector<int>>();
    cfg.channels = doc.at("channels").get<int>();
    cfg.variant = parse_fusion_variant(doc.at("variant").get<std::string>());
    const auto act_name = doc.value("activation", std::string("gelu"));
    if (act_name == "identity") act = Activation::identity;
    else if (act_name != "gelu") throw DataError(manifest.string() + ": unknown activation");
    for (const auto& t : doc.at("tensors"))
      index[t.at("name").get<std::string>()] = {t.at("shape").get<std::vector<int>>(),
                                                t.at("offset").get<std::size_t>()};
    const fs::path buffer_path = manifest.parent_path() / doc.at("buffer").get<std::string>();
    std::ifstream bin(buffer_path, std::ios::binary);
    if (!bin) throw DataError("cannot open " + buffer_path.string());
    const auto count = doc.at("count").get<std::size_t>();
    buffer.resize(count);
    bin.read(reinterpret_cast<char*>(buffer.data()),
             static_cast<std::streamsize>(count * sizeof(double)));
    if (bin.gcount() != static_cast<std::streamsize>(count * sizeof(double)))
      throw DataError(buffer_path.string() + ": buffer shorter than manifest count");
  } catch (const json::exception& e) {
    throw DataError(manifest.string() + ": " + e.what());
  } catch (const InvalidArgument& e) {
    throw DataError(manifest.string() + ": " + e.what());
  }

  std::map<int, LayerFusionParams> layers;
  for (int l : MultiLevelFusion::active_layers(cfg)) {
    LayerFusionParams p{MergeMlpParams::zeros(cfg.channels, act),
                        MergeMlpParams::zeros(cfg.channels, act), std::monostate{}};
    if (cfg.variant == FusionVariant::gated) p.fusion = GateMlpParams::zeros(cfg.channels, act);
    if (cfg.variant == FusionVariant::cross_attention)
      p.fusion = CrossAttentionParams<double>::zeros(cfg.channels);
    if (cfg.variant == FusionVariant::weighted) p.fusion = WeightedParams<double>{};
    layers.emplace(l, std::move(p));
  }
  auto read = [&](const std::string& name, const std::vector<int>& shape,
                  std::span<double> values) {
    const auto it = index.find(name);
    if (it == index.end()) throw DataError(manifest.string() + ": missing tensor " + name);
    if (it->second.first != shape)
      throw DataError(manifest.string() + ": tensor " + name + " has the wrong shape");
    if (it->second.second + values.size() > buffer.size())
      throw DataError(manifest.string() + ": tensor " + name + " exceeds the buffer");
    std::copy_n(buffer.begin() + static_cast<std::ptrdiff_t>(it->second.second), values.size(),
                values.begin());
  };
  for (const auto& ref : tensor_refs(layers)) read(ref.name, ref.shape, *ref.values);
  for (auto& [layer, p] : layers)
    if (auto* w = std::get_if<WeightedParams<double>>(&p.fusion))
      read("layer" + std::to_string(layer) + ".fusion.alpha", {1}, std::span<double>(&w->alpha, 1));
  try {
    return MultiLevelFusion(cfg, std::move(layers));
  } catch (const InvalidArgument& e) {
    throw DataError(manifest.string() + ": " + e.what());
  }
}

}  // namespace geoperc
