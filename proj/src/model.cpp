#include "axir/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "axir/error.hpp"

namespace axir {

namespace {

struct KindName {
  SiteKind kind;
  const char* name;
};

constexpr KindName kKindNames[] = {
    {SiteKind::ResidPre, "resid_pre"},   {SiteKind::ResidMid, "resid_mid"},
    {SiteKind::ResidPost, "resid_post"}, {SiteKind::AttnOut, "attn_out"},
    {SiteKind::HeadOut, "head_out"},     {SiteKind::MlpOut, "mlp_out"},
    {SiteKind::AttnPattern, "attn_pattern"},
};

std::size_t parse_index(const std::string& text, const std::string& whole) {
  if (text.empty() || !std::all_of(text.begin(), text.end(), ::isdigit)) {
    throw DataError("bad hook site: " + whole);
  }
  return std::stoul(text);
}

// Hook application for one forward pass: patches are overwritten in place,
// then the (possibly patched) value is recorded.
class Hooks {
 public:
  Hooks(const RecordSet& record, std::span<const Patch> patches)
      : record_(record), patches_(patches) {}

  void apply(const HookSite& site, Tensor& value) {
    for (const Patch& p : patches_) {
      if (p.site != site) continue;
      for (std::size_t pos : p.positions) {
        auto src = p.rows.row(pos);
        std::copy(src.begin(), src.end(), value.row(pos).begin());
      }
    }
    if (record_.wants(site)) recorded_.insert_or_assign(site, value);
  }

  std::map<HookSite, Tensor> take() { return std::move(recorded_); }

 private:
  const RecordSet& record_;
  std::span<const Patch> patches_;
  std::map<HookSite, Tensor> recorded_;
};

}  // namespace

// --- ModelConfig -----------------------------------------------------------

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v < 1) throw DataError(std::string("config: ") + name + " must be >= 1");
  };
  positive(n_layers, "n_layers");
  positive(n_heads, "n_heads");
  positive(d_model, "d_model");
  positive(d_head, "d_head");
  positive(d_ff, "d_ff");
  positive(vocab_size, "vocab_size");
  positive(max_positions, "max_positions");
  if (d_model != n_heads * d_head) {
    throw DataError("config: d_model (" + std::to_string(d_model) +
                    ") != n_heads * d_head (" + std::to_string(n_heads) + " * " +
                    std::to_string(d_head) + ")");
  }
  if (!(ln_eps > 0.0f)) throw DataError("config: ln_eps must be > 0");
  if (fixed_query_coordinate && *fixed_query_coordinate >= d_model) {
    throw DataError("config: fixed_query_coordinate outside d_model");
  }
}

nlohmann::json ModelConfig::to_json() const {
  nlohmann::json j = {
      {"n_layers", n_layers},     {"n_heads", n_heads},
      {"d_model", d_model},       {"d_head", d_head},
      {"d_ff", d_ff},             {"vocab_size", vocab_size},
      {"max_positions", max_positions}, {"ln_eps", ln_eps},
      {"pooling", "cls"},         {"similarity", "dot"},
  };
  if (fixed_query_coordinate) j["fixed_query_coordinate"] = *fixed_query_coordinate;
  return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.n_layers = j.at("n_layers").get<std::size_t>();
    c.n_heads = j.at("n_heads").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.d_head = j.contains("d_head") ? j.at("d_head").get<std::size_t>()
                                    : (c.n_heads ? c.d_model / c.n_heads : 0);
    c.d_ff = j.at("d_ff").get<std::size_t>();
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.max_positions = j.at("max_positions").get<std::size_t>();
    c.ln_eps = j.value("ln_eps", 1e-12f);
    const std::string pooling = j.value("pooling", "cls");
    const std::string similarity = j.value("similarity", "dot");
    if (pooling != "cls") throw DataError("config: unsupported pooling " + pooling);
    if (similarity != "dot") throw DataError("config: unsupported similarity " + similarity);
    if (j.contains("fixed_query_coordinate") && !j["fixed_query_coordinate"].is_null()) {
      c.fixed_query_coordinate = j["fixed_query_coordinate"].get<std::size_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

ModelConfig ModelConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config: " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("config " + path.string() + ": " + e.what());
  }
}

void ModelConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << to_json().dump(2) << '\n';
}

std::string layer_name(std::size_t layer, const std::string& suffix) {
  return "layer." + std::to_string(layer) + "." + suffix;
}

std::vector<std::pair<std::string, Shape>> ModelConfig::required_tensors() const {
  const std::size_t d = d_model;
  std::vector<std::pair<std::string, Shape>> out = {
      {"token_embedding", {vocab_size, d}},
      {"position_embedding", {max_positions, d}},
      {"embed_ln.gamma", {d}},
      {"embed_ln.beta", {d}},
  };
  for (std::size_t l = 0; l < n_layers; ++l) {
    for (const char* p : {"q", "k", "v", "o"}) {
      out.push_back({layer_name(l, std::string("attn.") + p + ".weight"), {d, d}});
      out.push_back({layer_name(l, std::string("attn.") + p + ".bias"), {d}});
    }
    out.push_back({layer_name(l, "ln1.gamma"), {d}});
    out.push_back({layer_name(l, "ln1.beta"), {d}});
    out.push_back({layer_name(l, "mlp.w1.weight"), {d, d_ff}});
    out.push_back({layer_name(l, "mlp.w1.bias"), {d_ff}});
    out.push_back({layer_name(l, "mlp.w2.weight"), {d_ff, d}});
    out.push_back({layer_name(l, "mlp.w2.bias"), {d}});
    out.push_back({layer_name(l, "ln2.gamma"), {d}});
    out.push_back({layer_name(l, "ln2.beta"), {d}});
  }
  return out;
}

// --- HookSite --------------------------------------------------------------

std::string to_string(SiteKind kind) {
  for (const auto& kn : kKindNames)
    if (kn.kind == kind) return kn.name;
  return "?";
}

SiteKind parse_site_kind(const std::string& text) {
  for (const auto& kn : kKindNames)
    if (text == kn.name) return kn.kind;
  throw DataError("unknown hook site kind: " + text);
}

void HookSite::validate(const ModelConfig& config) const {
  if (layer >= config.n_layers) {
    throw DataError("hook site " + str() + ": layer outside [0, " +
                    std::to_string(config.n_layers) + ")");
  }
  if (per_head() != head.has_value()) {
    throw DataError("hook site " + str() + ": head index " +
                    (per_head() ? "required" : "not allowed") + " for this kind");
  }
  if (head && *head >= config.n_heads) {
    throw DataError("hook site " + str() + ": head outside [0, " +
                    std::to_string(config.n_heads) + ")");
  }
}

std::string HookSite::str() const {
  std::string s = to_string(kind) + "." + std::to_string(layer);
  if (head) s += "." + std::to_string(*head);
  return s;
}

HookSite HookSite::parse(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, '.');) parts.push_back(part);
  if (parts.size() < 2 || parts.size() > 3) throw DataError("bad hook site: " + text);
  HookSite site{parse_site_kind(parts[0]), parse_index(parts[1], text), {}};
  if (parts.size() == 3) site.head = parse_index(parts[2], text);
  if (site.per_head() != site.head.has_value()) throw DataError("bad hook site: " + text);
  return site;
}

std::vector<HookSite> all_sites(const ModelConfig& config) {
  std::vector<HookSite> out;
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    out.push_back(HookSite::resid_pre(l));
    for (std::size_t h = 0; h < config.n_heads; ++h) out.push_back(HookSite::attn_pattern(l, h));
    for (std::size_t h = 0; h < config.n_heads; ++h) out.push_back(HookSite::head_out(l, h));
    out.push_back(HookSite::attn_out(l));
    out.push_back(HookSite::resid_mid(l));
    out.push_back(HookSite::mlp_out(l));
    out.push_back(HookSite::resid_post(l));
  }
  return out;
}

const Tensor& ActivationCache::at(const HookSite& site) const {
  auto it = tensors_.find(site);
  if (it == tensors_.end()) throw DataError("activation not recorded: " + site.str());
  return it->second;
}

// --- Model -----------------------------------------------------------------

Model::Model(ModelConfig config, WeightContainer weights)
    : config_(std::move(config)), weights_(std::move(weights)) {
  config_.validate();
  for (const auto& [name, shape] : config_.required_tensors()) {
    const Tensor& t = weights_.get(name);
    if (t.shape() != shape) {
      throw ShapeMismatchError("tensor " + name + ": expected shape " + shape_str(shape) +
                               ", found " + shape_str(t.shape()));
    }
  }
  bind();
}

// layers_ points into weights_, so copies rebind. Moves keep the map nodes.
Model::Model(const Model& other) : config_(other.config_), weights_(other.weights_) { bind(); }

Model& Model::operator=(const Model& other) {
  if (this != &other) {
    config_ = other.config_;
    weights_ = other.weights_;
    bind();
  }
  return *this;
}

Model Model::load(const std::filesystem::path& config_path,
                  const std::filesystem::path& weights_path) {
  return Model(ModelConfig::load(config_path), WeightContainer::load(weights_path));
}

void Model::bind() {
  const std::size_t dh = config_.d_head;
  layers_.clear();
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    auto w = [&](const char* suffix) { return &weights_.get(layer_name(l, suffix)); };
    Layer layer{w("attn.q.weight"), w("attn.q.bias"), w("attn.k.weight"), w("attn.k.bias"),
                w("attn.v.weight"), w("attn.v.bias"), w("attn.o.bias"), {},
                w("ln1.gamma"),     w("ln1.beta"),    w("mlp.w1.weight"), w("mlp.w1.bias"),
                w("mlp.w2.weight"), w("mlp.w2.bias"), w("ln2.gamma"),     w("ln2.beta")};
    const Tensor& wo = *w("attn.o.weight");
    for (std::size_t h = 0; h < config_.n_heads; ++h) {
      layer.wo_heads.push_back(slice_rows(wo, h * dh, (h + 1) * dh));
    }
    layers_.push_back(std::move(layer));
  }
}

void Model::validate_ids(std::span<const int> ids) const {
  if (ids.empty()) throw SequenceError("empty token sequence");
  if (ids.size() > config_.max_positions) {
    throw SequenceError("sequence of " + std::to_string(ids.size()) +
                        " tokens exceeds max_positions " +
                        std::to_string(config_.max_positions));
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= config_.vocab_size) {
      throw SequenceError("token id " + std::to_string(ids[i]) + " at position " +
                          std::to_string(i) + " outside vocabulary of " +
                          std::to_string(config_.vocab_size));
    }
  }
}

std::size_t Model::site_width(const HookSite& site, std::size_t seq_len) const {
  return site.kind == SiteKind::AttnPattern ? seq_len : config_.d_model;
}

EncodeResult Model::encode(std::span<const int> ids, const RecordSet& record) const {
  return encode_with_patches(ids, {}, record);
}

EncodeResult Model::encode_with_patches(std::span<const int> ids,
                                        std::span<const Patch> patches,
                                        const RecordSet& record) const {
  validate_ids(ids);
  const std::size_t n = ids.size();
  const std::size_t d = config_.d_model;
  const std::size_t dh = config_.d_head;
  for (const Patch& p : patches) {
    p.site.validate(config_);
    const std::size_t width = site_width(p.site, n);
    if (p.rows.rank() != 2 || p.rows.dim(0) != n) {
      throw PatchError("patch " + p.site.str() + ": donor rows " + shape_str(p.rows.shape()) +
                       " do not cover recipient length " + std::to_string(n));
    }
    if (p.rows.dim(1) != width) {
      throw PatchError("patch " + p.site.str() + ": row width " +
                       std::to_string(p.rows.dim(1)) + " != site width " +
                       std::to_string(width));
    }
    for (std::size_t pos : p.positions) {
      if (pos >= n) {
        throw PatchError("patch " + p.site.str() + ": position " + std::to_string(pos) +
                         " outside sequence of " + std::to_string(n));
      }
    }
  }

  Hooks hooks(record, patches);

  const Tensor& tok = weights_.get("token_embedding");
  const Tensor& pos = weights_.get("position_embedding");
  Tensor x({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    auto dst = x.row(i);
    auto te = tok.row(static_cast<std::size_t>(ids[i]));
    auto pe = pos.row(i);
    for (std::size_t j = 0; j < d; ++j) dst[j] = te[j] + pe[j];
  }
  x = layer_norm(x, weights_.get("embed_ln.gamma"), weights_.get("embed_ln.beta"),
                 config_.ln_eps);

  const float inv_sqrt_dh = 1.0f / std::sqrt(static_cast<float>(dh));
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    const Layer& L = layers_[l];
    hooks.apply(HookSite::resid_pre(l), x);

    const Tensor q = add_bias_rows(matmul(x, *L.wq), *L.bq);
    const Tensor k = add_bias_rows(matmul(x, *L.wk), *L.bk);
    const Tensor v = add_bias_rows(matmul(x, *L.wv), *L.bv);

    Tensor attn_out({n, d});
    for (std::size_t h = 0; h < config_.n_heads; ++h) {
      const Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
      const Tensor kh = slice_cols(k, h * dh, (h + 1) * dh);
      const Tensor vh = slice_cols(v, h * dh, (h + 1) * dh);
      Tensor pattern = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt_dh));
      hooks.apply(HookSite::attn_pattern(l, h), pattern);
      Tensor head_out = matmul(matmul(pattern, vh), L.wo_heads[h]);
      hooks.apply(HookSite::head_out(l, h), head_out);
      add_inplace(attn_out, head_out);
    }
    attn_out = add_bias_rows(attn_out, *L.bo);
    hooks.apply(HookSite::attn_out(l), attn_out);

    Tensor mid = layer_norm(add(x, attn_out), *L.ln1_g, *L.ln1_b, config_.ln_eps);
    hooks.apply(HookSite::resid_mid(l), mid);

    Tensor mlp = add_bias_rows(
        matmul(gelu(add_bias_rows(matmul(mid, *L.w1), *L.b1)), *L.w2), *L.b2);
    hooks.apply(HookSite::mlp_out(l), mlp);

    x = layer_norm(add(mid, mlp), *L.ln2_g, *L.ln2_b, config_.ln_eps);
    hooks.apply(HookSite::resid_post(l), x);
  }

  auto cls_row = x.row(0);
  Tensor cls({d}, std::vector<float>(cls_row.begin(), cls_row.end()));
  return {cls, ActivationCache(n, hooks.take(), cls)};
}

Tensor Model::encode_query(std::span<const int> ids) const {
  if (config_.fixed_query_coordinate) {
    Tensor e({config_.d_model});
    e.data()[*config_.fixed_query_coordinate] = 1.0f;
    return e;
  }
  return encode(ids, RecordSet::none()).cls;
}

float score(const Tensor& query_vec, const Tensor& doc_vec) {
  return dot(query_vec.data(), doc_vec.data());
}

}  // namespace axir
