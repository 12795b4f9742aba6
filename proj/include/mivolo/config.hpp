#pragma once

#include <array>
#include <cstdint>
#include <string>

namespace mivolo {

// Every architecture, preprocessing and training hyperparameter. Serialized as
// JSON; unknown keys are rejected on load.
struct ModelConfig {
  // architecture
  std::size_t image_size = 64;
  std::size_t patch_size = 8;
  std::size_t embed_dim = 64;  // stage-1 width; the transformer stage runs at 2x
  std::size_t outlooker_blocks = 2;
  std::size_t outlook_kernel = 3;
  std::size_t outlook_heads = 1;
  std::size_t transformer_blocks = 2;
  std::size_t transformer_heads = 4;
  double mlp_ratio = 3.0;
  std::size_t head_hidden = 128;
  std::size_t fusion_heads = 4;
  bool fusion_bidirectional = true;
  bool single_input = false;  // plain VOLO: face embedding straight into the trunk
  std::string pooling = "mean";
  double layer_norm_eps = 1e-6;
  double init_std = 0.02;
  double drop_rate = 0.0;
  double drop_path_rate = 0.0;

  // objectives
  double w_gender = 0.03;
  std::string lds_kernel = "gaussian";  // "gaussian" or "none"
  std::size_t lds_kernel_size = 5;
  double lds_sigma = 2.0;
  double lds_bin_width = 1.0;
  double y_min = 0.0;
  double y_max = 100.0;

  // input dropout
  double body_drop_prob = 0.1;
  double face_drop_prob = 0.5;

  // augmentation
  double jitter_shift = 0.45;
  double jitter_scale = 0.45;
  double flip_prob = 0.5;
  double erase_prob = 0.5;
  double erase_area_min = 0.02;
  double erase_area_max = 0.2;
  bool rand_augment = false;  // reserved; the policy set is not implemented
  double rand_augment_magnitude = 22.0;

  // preprocessing
  std::array<double, 3> pixel_mean{0.485, 0.456, 0.406};
  std::array<double, 3> pixel_std{0.229, 0.224, 0.225};
  double trim_threshold = 0.95;
  std::size_t min_crop_side = 16;
  double min_area_fraction = 0.3;

  // optimizer and schedule
  double learning_rate = 1e-5;
  double weight_decay = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double warmup_lr = 1e-6;
  std::size_t warmup_epochs = 25;
  std::size_t warmup_steps = 0;  // overrides warmup_epochs when > 0
  std::size_t lr_base_batch = 192;
  std::string lr_batch_scaling = "linear";  // "linear" or "none"
  std::size_t batch_size = 8;
  std::size_t epochs = 400;
  std::size_t steps = 0;  // overrides epochs when > 0
  bool freeze_face_embed = false;
  std::uint64_t seed = 0;

  std::size_t tokens_per_side() const { return image_size / patch_size; }
  std::size_t trunk_dim() const { return embed_dim * 2; }

  // Throws ConfigError describing the first violated constraint.
  void validate() const;

  std::string to_json() const;
  std::string to_json_line() const;  // same content on one line
  static ModelConfig from_json(const std::string& text);
  static ModelConfig load(const std::string& path);
  void save(const std::string& path) const;

  // FNV-1a over the canonical JSON form.
  std::uint64_t hash() const;
  // Hash of the fields that determine the shared face/trunk/head parameter
  // shapes; checkpoints with equal architecture hashes can exchange weights.
  std::uint64_t architecture_hash() const;

  // Desk-scale default.
  static ModelConfig tiny();
  // VOLO-D1-like scale (224 input, width 192/384, 4 outlookers, 14 transformers).
  static ModelConfig d1();
};

std::string hash_hex(std::uint64_t h);
std::uint64_t fnv1a(const void* data, std::size_t size,
                    std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace mivolo
