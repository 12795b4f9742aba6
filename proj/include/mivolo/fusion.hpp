#pragma once

#include <array>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>

#include "mivolo/volo.hpp"

namespace mivolo {

enum class Gender : int { male = 0, female = 1 };

inline const char* gender_name(Gender g) { return g == Gender::male ? "male" : "female"; }
// Throws InputError for anything but "male" / "female".
Gender parse_gender(const std::string& name);

// A face/body input pair. An absent side carries no pixels; the model treats it
// as the all-zero image.
struct CropPair {
  std::optional<Tensor> face;
  std::optional<Tensor> body;

  bool face_present() const { return face.has_value(); }
  bool body_present() const { return body.has_value(); }
};

// Joint model output: [0:2] gender logits, [2] normalized age.
struct Prediction {
  Tensor output;

  double age_norm() const { return output[2]; }
  std::array<double, 2> gender_logits() const { return {output[0], output[1]}; }
  Gender gender() const { return output[1] > output[0] ? Gender::female : Gender::male; }
  Tensor logits_tensor() const { return reshape(slice(output, 0, 0, 2), {1, 2}); }
  Tensor age_tensor() const { return slice(output, 0, 2, 1); }
};

// Residual cross-attention of one view's tokens onto the other's.
class CrossAttentionUnit {
 public:
  CrossAttentionUnit() = default;
  CrossAttentionUnit(std::size_t dim, std::size_t heads, double eps, double init_std,
                     std::mt19937_64& rng);

  Tensor forward(const Tensor& query_tokens, const Tensor& context_tokens) const;
  Tensor attention_weights(const Tensor& query_tokens, const Tensor& context_tokens) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  LayerNorm norm_query;
  LayerNorm norm_context;
  MultiHeadAttention attention;
};

// Cross-view fusion: face<-body and body<-face cross-attention, channel concat
// to 2C, then an MLP (2C -> 2C -> C) back to width C.
class FeatureEnhancer {
 public:
  FeatureEnhancer() = default;
  FeatureEnhancer(const ModelConfig& config, std::mt19937_64& rng);

  TokenGrid enhance(const TokenGrid& face, const TokenGrid& body,
                    const ForwardContext& ctx = {}) const;
  void collect(const std::string& prefix, ParameterList& out) const;
  bool bidirectional() const { return bidirectional_; }

  CrossAttentionUnit face_from_body;
  CrossAttentionUnit body_from_face;  // unused when one-directional
  LayerNorm norm;
  Mlp fusion;

 private:
  bool bidirectional_ = true;
};

// Dual-input age and gender model. In single_input mode the body branch and the
// enhancer are absent and face tokens feed the trunk directly.
class MiVolo {
 public:
  MiVolo(const ModelConfig& config, std::uint64_t seed);
  MiVolo(const MiVolo&) = delete;
  MiVolo& operator=(const MiVolo&) = delete;

  const ModelConfig& config() const { return config_; }
  bool dual_input() const { return !config_.single_input; }

  // Full path: an absent side goes through its patch embedding as a zero image.
  Prediction forward_pair(const CropPair& pair, const ForwardContext& ctx = {}) const;
  // Inference path for single-input pairs: the absent side's embedding comes
  // from a cache of the zero-image embedding instead of running the projection.
  Prediction forward_pair_skip(const CropPair& pair) const;

  Prediction forward_tokens(const TokenGrid& face, const TokenGrid& body,
                            const ForwardContext& ctx) const;

  ParameterList parameters() const;
  // Deep copy of every parameter value from a model with the same config.
  void copy_parameters_from(const MiVolo& other);
  Tensor zero_image() const;

  PatchEmbedding face_embed;
  PatchEmbedding body_embed;
  FeatureEnhancer enhancer;
  VoloTrunk trunk;
  OutputHead head;

 private:
  void check_image(const Tensor& image, const char* side) const;
  TokenGrid cached_zero_embedding(const PatchEmbedding& embed, bool face_side) const;

  ModelConfig config_;

  struct ZeroCache {
    std::uint64_t key = 0;
    bool valid = false;
    TokenGrid grid;
  };
  mutable std::mutex cache_mutex_;
  mutable ZeroCache face_zero_;
  mutable ZeroCache body_zero_;
};

std::size_t enhancer_parameter_count(const ModelConfig& config);
std::size_t model_parameter_count(const ModelConfig& config);

// Order-sensitive hash over parameter values.
std::uint64_t hash_values(const ParameterList& params);

}  // namespace mivolo
