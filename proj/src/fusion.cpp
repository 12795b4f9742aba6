#include "mivolo/fusion.hpp"

#include <cstring>

namespace mivolo {

Gender parse_gender(const std::string& name) {
  if (name == "male") return Gender::male;
  if (name == "female") return Gender::female;
  throw InputError("unknown gender '" + name + "'");
}

CrossAttentionUnit::CrossAttentionUnit(std::size_t dim, std::size_t heads, double eps,
                                       double init_std, std::mt19937_64& rng)
    : norm_query(dim, eps), norm_context(dim, eps), attention(dim, heads, init_std, rng) {}

Tensor CrossAttentionUnit::forward(const Tensor& query_tokens, const Tensor& context_tokens) const {
  return add(query_tokens, attention.forward(norm_query.forward(query_tokens),
                                             norm_context.forward(context_tokens)));
}

Tensor CrossAttentionUnit::attention_weights(const Tensor& query_tokens,
                                             const Tensor& context_tokens) const {
  return attention.attention_weights(norm_query.forward(query_tokens),
                                     norm_context.forward(context_tokens));
}

void CrossAttentionUnit::collect(const std::string& prefix, ParameterList& out) const {
  norm_query.collect(prefix + ".norm_q", out);
  norm_context.collect(prefix + ".norm_kv", out);
  attention.collect(prefix + ".attn", out);
}

FeatureEnhancer::FeatureEnhancer(const ModelConfig& config, std::mt19937_64& rng)
    : bidirectional_(config.fusion_bidirectional) {
  const std::size_t c = config.embed_dim;
  face_from_body = CrossAttentionUnit(c, config.fusion_heads, config.layer_norm_eps,
                                      config.init_std, rng);
  if (bidirectional_)
    body_from_face = CrossAttentionUnit(c, config.fusion_heads, config.layer_norm_eps,
                                        config.init_std, rng);
  norm = LayerNorm(2 * c, config.layer_norm_eps);
  fusion = Mlp(2 * c, 2 * c, c, config.init_std, rng);
}

TokenGrid FeatureEnhancer::enhance(const TokenGrid& face, const TokenGrid& body,
                                   const ForwardContext& ctx) const {
  if (face.tokens.shape() != body.tokens.shape() || face.height != body.height ||
      face.width != body.width)
    throw DimensionError("enhance: face tokens " + shape_str(face.tokens.shape()) +
                         " and body tokens " + shape_str(body.tokens.shape()) + " differ");
  Tensor face_rich = face_from_body.forward(face.tokens, body.tokens);
  Tensor body_rich = bidirectional_ ? body_from_face.forward(body.tokens, face.tokens) : body.tokens;
  Tensor joint = concat({face_rich, body_rich}, 1);
  return {fusion.forward(norm.forward(joint), ctx), face.height, face.width};
}

void FeatureEnhancer::collect(const std::string& prefix, ParameterList& out) const {
  face_from_body.collect(prefix + ".face_from_body", out);
  if (bidirectional_) body_from_face.collect(prefix + ".body_from_face", out);
  norm.collect(prefix + ".norm", out);
  fusion.collect(prefix + ".mlp", out);
}

// ---- model ------------------------------------------------------------------

MiVolo::MiVolo(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const double std = config_.init_std;
  face_embed = PatchEmbedding(config_.patch_size, 3, config_.embed_dim, std, rng);
  trunk = VoloTrunk(config_, rng);
  head = OutputHead(config_.trunk_dim(), config_.head_hidden, std, rng);
  // The dual-input parts draw last so the shared face/trunk/head weights are
  // identical to a single-input model built from the same seed.
  if (dual_input()) {
    body_embed = PatchEmbedding(config_.patch_size, 3, config_.embed_dim, std, rng);
    enhancer = FeatureEnhancer(config_, rng);
  }
  for (auto& p : parameters())
    p.tensor.set_requires_grad(!(config_.freeze_face_embed && p.name.rfind("face_embed.", 0) == 0));
}

Tensor MiVolo::zero_image() const {
  return Tensor::zeros({3, config_.image_size, config_.image_size});
}

void MiVolo::check_image(const Tensor& image, const char* side) const {
  const Shape expected{3, config_.image_size, config_.image_size};
  if (image.shape() != expected)
    throw DimensionError(std::string(side) + " crop has shape " + shape_str(image.shape()) +
                         ", expected " + shape_str(expected));
}

Prediction MiVolo::forward_tokens(const TokenGrid& face, const TokenGrid& body,
                                  const ForwardContext& ctx) const {
  TokenGrid fused = dual_input() ? enhancer.enhance(face, body, ctx) : face;
  return {head.forward(trunk.forward(fused, ctx))};
}

Prediction MiVolo::forward_pair(const CropPair& pair, const ForwardContext& ctx) const {
  if (!pair.face_present() && !pair.body_present())
    throw InputError("crop pair has neither a face nor a body");
  if (pair.face) check_image(*pair.face, "face");
  if (pair.body) check_image(*pair.body, "body");
  TokenGrid face = face_embed.forward(pair.face ? *pair.face : zero_image());
  if (!dual_input()) return forward_tokens(face, face, ctx);
  TokenGrid body = body_embed.forward(pair.body ? *pair.body : zero_image());
  return forward_tokens(face, body, ctx);
}

TokenGrid MiVolo::cached_zero_embedding(const PatchEmbedding& embed, bool face_side) const {
  ParameterList params;
  embed.collect("", params);
  const std::uint64_t key = hash_values(params);
  std::lock_guard lock(cache_mutex_);
  ZeroCache& cache = face_side ? face_zero_ : body_zero_;
  if (!cache.valid || cache.key != key) {
    cache.grid = embed.forward(zero_image());
    cache.key = key;
    cache.valid = true;
  }
  return cache.grid;
}

Prediction MiVolo::forward_pair_skip(const CropPair& pair) const {
  if (pair.face_present() && pair.body_present())
    throw MisuseError("skip path needs exactly one absent input; both are present");
  if (!pair.face_present() && !pair.body_present())
    throw InputError("crop pair has neither a face nor a body");
  ForwardContext ctx;
  if (!dual_input()) {
    if (pair.face) return forward_pair(pair, ctx);
    TokenGrid face = cached_zero_embedding(face_embed, true);
    return forward_tokens(face, face, ctx);
  }
  if (pair.face) {
    check_image(*pair.face, "face");
    return forward_tokens(face_embed.forward(*pair.face), cached_zero_embedding(body_embed, false),
                          ctx);
  }
  check_image(*pair.body, "body");
  return forward_tokens(cached_zero_embedding(face_embed, true), body_embed.forward(*pair.body),
                        ctx);
}

ParameterList MiVolo::parameters() const {
  ParameterList out;
  face_embed.collect("face_embed", out);
  if (dual_input()) {
    body_embed.collect("body_embed", out);
    enhancer.collect("enhancer", out);
  }
  trunk.collect("trunk", out);
  head.collect("head", out);
  return out;
}

void MiVolo::copy_parameters_from(const MiVolo& other) {
  ParameterList mine = parameters(), theirs = other.parameters();
  if (mine.size() != theirs.size()) throw ConfigError("copy_parameters_from: parameter sets differ");
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (mine[i].name != theirs[i].name || mine[i].tensor.shape() != theirs[i].tensor.shape())
      throw ConfigError("copy_parameters_from: parameter " + mine[i].name + " differs");
    auto src = theirs[i].tensor.data();
    std::copy(src.begin(), src.end(), mine[i].tensor.mutable_data().begin());
  }
}

std::size_t enhancer_parameter_count(const ModelConfig& c) {
  const std::size_t d = c.embed_dim;
  const std::size_t unit = 4 * d + 3 * d * d + linear_parameter_count(d, d);
  return (c.fusion_bidirectional ? 2 : 1) * unit + 2 * (2 * d) +
         linear_parameter_count(2 * d, 2 * d) + linear_parameter_count(2 * d, d);
}

std::size_t model_parameter_count(const ModelConfig& c) {
  std::size_t n = patch_embedding_parameter_count(c) + trunk_parameter_count(c) +
                  head_parameter_count(c);
  if (!c.single_input) n += patch_embedding_parameter_count(c) + enhancer_parameter_count(c);
  return n;
}

std::uint64_t hash_values(const ParameterList& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params) {
    for (double v : p.tensor.data()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      h ^= bits;
      h *= 0x100000001b3ULL;
      h ^= h >> 29;
    }
  }
  return h;
}

}  // namespace mivolo
