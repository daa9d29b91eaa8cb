#pragma once

#include <compare>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "axir/container.hpp"
#include "axir/tensor.hpp"

namespace axir {

enum class Pooling { Cls };
enum class Similarity { Dot };

struct ModelConfig {
  std::size_t n_layers = 0;
  std::size_t n_heads = 0;
  std::size_t d_model = 0;
  std::size_t d_head = 0;
  std::size_t d_ff = 0;
  std::size_t vocab_size = 0;
  std::size_t max_positions = 0;
  float ln_eps = 1e-12f;
  Pooling pooling = Pooling::Cls;
  Similarity similarity = Similarity::Dot;
  // When set, the query side is not encoded: every query maps to the unit
  // vector on this coordinate. Used by constructed models whose score is a
  // single residual coordinate.
  std::optional<std::size_t> fixed_query_coordinate;

  /// Throws DataError on inconsistent extents.
  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  static ModelConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// Every tensor name the forward pass reads, with its required shape.
  std::vector<std::pair<std::string, Shape>> required_tensors() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class SiteKind { ResidPre, ResidMid, ResidPost, AttnOut, HeadOut, MlpOut, AttnPattern };

std::string to_string(SiteKind kind);
SiteKind parse_site_kind(const std::string& text);

/// An addressable activation location in the forward pass.
struct HookSite {
  SiteKind kind = SiteKind::ResidPre;
  std::size_t layer = 0;
  std::optional<std::size_t> head;

  static HookSite resid_pre(std::size_t l) { return {SiteKind::ResidPre, l, {}}; }
  static HookSite resid_mid(std::size_t l) { return {SiteKind::ResidMid, l, {}}; }
  static HookSite resid_post(std::size_t l) { return {SiteKind::ResidPost, l, {}}; }
  static HookSite attn_out(std::size_t l) { return {SiteKind::AttnOut, l, {}}; }
  static HookSite mlp_out(std::size_t l) { return {SiteKind::MlpOut, l, {}}; }
  static HookSite head_out(std::size_t l, std::size_t h) { return {SiteKind::HeadOut, l, h}; }
  static HookSite attn_pattern(std::size_t l, std::size_t h) {
    return {SiteKind::AttnPattern, l, h};
  }

  bool per_head() const {
    return kind == SiteKind::HeadOut || kind == SiteKind::AttnPattern;
  }

  /// Throws DataError when the layer/head is out of range for `config` or the
  /// head field does not match the kind.
  void validate(const ModelConfig& config) const;

  /// "resid_pre.3", "head_out.0.9", ...
  std::string str() const;
  static HookSite parse(const std::string& text);

  auto operator<=>(const HookSite&) const = default;
};

/// Every site of the model, in forward-pass order.
std::vector<HookSite> all_sites(const ModelConfig& config);

/// Which sites a forward pass should record.
class RecordSet {
 public:
  static RecordSet all() { return RecordSet(true, {}); }
  static RecordSet none() { return RecordSet(false, {}); }
  static RecordSet only(std::set<HookSite> sites) { return RecordSet(false, std::move(sites)); }

  bool wants(const HookSite& site) const { return all_ || sites_.contains(site); }

 private:
  RecordSet(bool all, std::set<HookSite> sites) : all_(all), sites_(std::move(sites)) {}
  bool all_;
  std::set<HookSite> sites_;
};

/// Tensors recorded during one forward pass, keyed by site. Residual-width
/// sites are [seq_len × d_model]; AttnPattern sites are per head
/// [seq_len × seq_len].
class ActivationCache {
 public:
  ActivationCache() = default;
  ActivationCache(std::size_t seq_len, std::map<HookSite, Tensor> tensors, Tensor cls)
      : seq_len_(seq_len), tensors_(std::move(tensors)), cls_(std::move(cls)) {}

  std::size_t seq_len() const { return seq_len_; }
  bool contains(const HookSite& site) const { return tensors_.contains(site); }
  /// Throws DataError when the site was not recorded.
  const Tensor& at(const HookSite& site) const;
  const std::map<HookSite, Tensor>& tensors() const { return tensors_; }
  const Tensor& cls() const { return cls_; }

 private:
  std::size_t seq_len_ = 0;
  std::map<HookSite, Tensor> tensors_;
  Tensor cls_;
};

/// Overwrite `positions` of `site` with the same rows of `rows` while the
/// site is computed. `rows` covers the full recipient sequence
/// ([seq_len × width]); positions are aligned by identity.
struct Patch {
  HookSite site;
  std::vector<std::size_t> positions;
  Tensor rows;
};

struct EncodeResult {
  Tensor cls;
  ActivationCache cache;
};

/// DistilBERT-shaped encoder with hook sites (post-LN blocks, learned
/// absolute positions, exact-erf GELU, CLS pooling).
///
///   ResidPre[0]  = LN(tok_emb[id] + pos_emb[pos])
///   HeadOut[h]   = softmax(Q_h K_hᵀ/√d_head) V_h · W_O[h rows]
///   AttnOut      = Σ_h HeadOut[h] + o.bias
///   ResidMid     = LN1(ResidPre + AttnOut)
///   MlpOut       = gelu(ResidMid W1 + b1) W2 + b2
///   ResidPost    = LN2(ResidMid + MlpOut) = ResidPre of the next layer
///
/// Linear weights are stored [in × out]. The handle is immutable and may be
/// shared across threads.
class Model {
 public:
  Model(ModelConfig config, WeightContainer weights);
  Model(const Model& other);
  Model(Model&&) noexcept = default;
  Model& operator=(const Model& other);
  Model& operator=(Model&&) noexcept = default;
  static Model load(const std::filesystem::path& config_path,
                    const std::filesystem::path& weights_path);

  const ModelConfig& config() const { return config_; }
  const WeightContainer& weights() const { return weights_; }

  EncodeResult encode(std::span<const int> ids, const RecordSet& record) const;

  /// As encode, with each patch applied right after its site is computed
  /// and before any consumer reads it.
  EncodeResult encode_with_patches(std::span<const int> ids, std::span<const Patch> patches,
                                   const RecordSet& record = RecordSet::none()) const;

  /// Query-side vector: the CLS vector, or the fixed unit vector when the
  /// config pins the query coordinate.
  Tensor encode_query(std::span<const int> ids) const;

  /// Width of a site's rows: d_model, or seq_len for AttnPattern.
  std::size_t site_width(const HookSite& site, std::size_t seq_len) const;

 private:
  struct Layer {
    const Tensor *wq, *bq, *wk, *bk, *wv, *bv, *bo;
    std::vector<Tensor> wo_heads;  // [d_head × d_model] row block per head
    const Tensor *ln1_g, *ln1_b, *w1, *b1, *w2, *b2, *ln2_g, *ln2_b;
  };

  void validate_ids(std::span<const int> ids) const;
  void bind();

  ModelConfig config_;
  WeightContainer weights_;
  std::vector<Layer> layers_;
};

/// Dot-product similarity.
float score(const Tensor& query_vec, const Tensor& doc_vec);

std::string layer_name(std::size_t layer, const std::string& suffix);

}  // namespace axir
