#include "mivolo/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mivolo/error.hpp"

namespace mivolo {

using ojson = nlohmann::ordered_json;

namespace {

ojson to_object(const ModelConfig& c) {
  ojson j;
  j["image_size"] = c.image_size;
  j["patch_size"] = c.patch_size;
  j["embed_dim"] = c.embed_dim;
  j["outlooker_blocks"] = c.outlooker_blocks;
  j["outlook_kernel"] = c.outlook_kernel;
  j["outlook_heads"] = c.outlook_heads;
  j["transformer_blocks"] = c.transformer_blocks;
  j["transformer_heads"] = c.transformer_heads;
  j["mlp_ratio"] = c.mlp_ratio;
  j["head_hidden"] = c.head_hidden;
  j["fusion_heads"] = c.fusion_heads;
  j["fusion_bidirectional"] = c.fusion_bidirectional;
  j["single_input"] = c.single_input;
  j["pooling"] = c.pooling;
  j["layer_norm_eps"] = c.layer_norm_eps;
  j["init_std"] = c.init_std;
  j["drop_rate"] = c.drop_rate;
  j["drop_path_rate"] = c.drop_path_rate;
  j["w_gender"] = c.w_gender;
  j["lds_kernel"] = c.lds_kernel;
  j["lds_kernel_size"] = c.lds_kernel_size;
  j["lds_sigma"] = c.lds_sigma;
  j["lds_bin_width"] = c.lds_bin_width;
  j["y_min"] = c.y_min;
  j["y_max"] = c.y_max;
  j["body_drop_prob"] = c.body_drop_prob;
  j["face_drop_prob"] = c.face_drop_prob;
  j["jitter_shift"] = c.jitter_shift;
  j["jitter_scale"] = c.jitter_scale;
  j["flip_prob"] = c.flip_prob;
  j["erase_prob"] = c.erase_prob;
  j["erase_area_min"] = c.erase_area_min;
  j["erase_area_max"] = c.erase_area_max;
  j["rand_augment"] = c.rand_augment;
  j["rand_augment_magnitude"] = c.rand_augment_magnitude;
  j["pixel_mean"] = c.pixel_mean;
  j["pixel_std"] = c.pixel_std;
  j["trim_threshold"] = c.trim_threshold;
  j["min_crop_side"] = c.min_crop_side;
  j["min_area_fraction"] = c.min_area_fraction;
  j["learning_rate"] = c.learning_rate;
  j["weight_decay"] = c.weight_decay;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["adam_eps"] = c.adam_eps;
  j["warmup_lr"] = c.warmup_lr;
  j["warmup_epochs"] = c.warmup_epochs;
  j["warmup_steps"] = c.warmup_steps;
  j["lr_base_batch"] = c.lr_base_batch;
  j["lr_batch_scaling"] = c.lr_batch_scaling;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["steps"] = c.steps;
  j["freeze_face_embed"] = c.freeze_face_embed;
  j["seed"] = c.seed;
  return j;
}

template <class T>
void read(const ojson& j, const char* key, T& out, std::set<std::string>& seen) {
  auto it = j.find(key);
  if (it == j.end()) return;
  seen.insert(key);
  try {
    out = it->template get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

void check_prob(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(name) + " must lie in [0, 1]");
}

}  // namespace

void ModelConfig::validate() const {
  if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0)
    throw ConfigError("image_size must be a positive multiple of patch_size");
  const std::size_t grid = tokens_per_side();
  if (grid % 2 != 0) throw ConfigError("token grid side must be even for downsampling");
  if (outlook_kernel % 2 == 0 || outlook_kernel == 0)
    throw ConfigError("outlook_kernel must be odd");
  if (outlook_kernel > grid) throw ConfigError("outlook_kernel larger than the token grid");
  if (embed_dim == 0 || outlook_heads == 0 || embed_dim % outlook_heads != 0)
    throw ConfigError("embed_dim must be divisible by outlook_heads");
  if (transformer_heads == 0 || trunk_dim() % transformer_heads != 0)
    throw ConfigError("trunk width must be divisible by transformer_heads");
  if (fusion_heads == 0 || embed_dim % fusion_heads != 0)
    throw ConfigError("embed_dim must be divisible by fusion_heads");
  if (!(mlp_ratio > 0.0)) throw ConfigError("mlp_ratio must be positive");
  if (head_hidden == 0) throw ConfigError("head_hidden must be positive");
  if (pooling != "mean") throw ConfigError("pooling must be \"mean\"");
  if (!(y_max > y_min)) throw ConfigError("y_max must exceed y_min");
  if (lds_kernel != "gaussian" && lds_kernel != "none")
    throw ConfigError("lds_kernel must be \"gaussian\" or \"none\"");
  if (lds_kernel == "gaussian" && (lds_kernel_size % 2 == 0 || !(lds_sigma > 0.0)))
    throw ConfigError("lds kernel needs odd size and positive sigma");
  if (!(lds_bin_width > 0.0)) throw ConfigError("lds_bin_width must be positive");
  check_prob(drop_rate, "drop_rate");
  check_prob(drop_path_rate, "drop_path_rate");
  check_prob(body_drop_prob, "body_drop_prob");
  check_prob(face_drop_prob, "face_drop_prob");
  if (body_drop_prob + face_drop_prob > 1.0)
    throw ConfigError("body_drop_prob + face_drop_prob must not exceed 1");
  check_prob(flip_prob, "flip_prob");
  check_prob(erase_prob, "erase_prob");
  check_prob(trim_threshold, "trim_threshold");
  check_prob(min_area_fraction, "min_area_fraction");
  if (drop_rate >= 1.0 || drop_path_rate >= 1.0)
    throw ConfigError("drop rates must be below 1");
  if (!(erase_area_min > 0.0 && erase_area_min <= erase_area_max && erase_area_max < 1.0))
    throw ConfigError("erase area range must satisfy 0 < min <= max < 1");
  if (jitter_shift < 0.0 || jitter_scale < 0.0 || jitter_scale >= 1.0)
    throw ConfigError("jitter magnitudes must be non-negative and scale below 1");
  if (rand_augment) throw ConfigError("rand_augment is reserved and not supported");
  for (double s : pixel_std)
    if (!(s > 0.0)) throw ConfigError("pixel_std entries must be positive");
  if (!(w_gender >= 0.0)) throw ConfigError("w_gender must be non-negative");
  if (!(learning_rate > 0.0) || warmup_lr < 0.0) throw ConfigError("learning rates must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("betas must lie in [0, 1)");
  if (!(adam_eps > 0.0) || weight_decay < 0.0) throw ConfigError("invalid adam_eps/weight_decay");
  if (lr_batch_scaling != "linear" && lr_batch_scaling != "none")
    throw ConfigError("lr_batch_scaling must be \"linear\" or \"none\"");
  if (lr_base_batch == 0 || batch_size == 0) throw ConfigError("batch sizes must be positive");
  if (steps == 0 && epochs == 0) throw ConfigError("either steps or epochs must be positive");
}

std::string ModelConfig::to_json() const { return to_object(*this).dump(2); }
std::string ModelConfig::to_json_line() const { return to_object(*this).dump(); }

ModelConfig ModelConfig::from_json(const std::string& text) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ModelConfig c;
  std::set<std::string> seen;
  read(j, "image_size", c.image_size, seen);
  read(j, "patch_size", c.patch_size, seen);
  read(j, "embed_dim", c.embed_dim, seen);
  read(j, "outlooker_blocks", c.outlooker_blocks, seen);
  read(j, "outlook_kernel", c.outlook_kernel, seen);
  read(j, "outlook_heads", c.outlook_heads, seen);
  read(j, "transformer_blocks", c.transformer_blocks, seen);
  read(j, "transformer_heads", c.transformer_heads, seen);
  read(j, "mlp_ratio", c.mlp_ratio, seen);
  read(j, "head_hidden", c.head_hidden, seen);
  read(j, "fusion_heads", c.fusion_heads, seen);
  read(j, "fusion_bidirectional", c.fusion_bidirectional, seen);
  read(j, "single_input", c.single_input, seen);
  read(j, "pooling", c.pooling, seen);
  read(j, "layer_norm_eps", c.layer_norm_eps, seen);
  read(j, "init_std", c.init_std, seen);
  read(j, "drop_rate", c.drop_rate, seen);
  read(j, "drop_path_rate", c.drop_path_rate, seen);
  read(j, "w_gender", c.w_gender, seen);
  read(j, "lds_kernel", c.lds_kernel, seen);
  read(j, "lds_kernel_size", c.lds_kernel_size, seen);
  read(j, "lds_sigma", c.lds_sigma, seen);
  read(j, "lds_bin_width", c.lds_bin_width, seen);
  read(j, "y_min", c.y_min, seen);
  read(j, "y_max", c.y_max, seen);
  read(j, "body_drop_prob", c.body_drop_prob, seen);
  read(j, "face_drop_prob", c.face_drop_prob, seen);
  read(j, "jitter_shift", c.jitter_shift, seen);
  read(j, "jitter_scale", c.jitter_scale, seen);
  read(j, "flip_prob", c.flip_prob, seen);
  read(j, "erase_prob", c.erase_prob, seen);
  read(j, "erase_area_min", c.erase_area_min, seen);
  read(j, "erase_area_max", c.erase_area_max, seen);
  read(j, "rand_augment", c.rand_augment, seen);
  read(j, "rand_augment_magnitude", c.rand_augment_magnitude, seen);
  read(j, "pixel_mean", c.pixel_mean, seen);
  read(j, "pixel_std", c.pixel_std, seen);
  read(j, "trim_threshold", c.trim_threshold, seen);
  read(j, "min_crop_side", c.min_crop_side, seen);
  read(j, "min_area_fraction", c.min_area_fraction, seen);
  read(j, "learning_rate", c.learning_rate, seen);
  read(j, "weight_decay", c.weight_decay, seen);
  read(j, "beta1", c.beta1, seen);
  read(j, "beta2", c.beta2, seen);
  read(j, "adam_eps", c.adam_eps, seen);
  read(j, "warmup_lr", c.warmup_lr, seen);
  read(j, "warmup_epochs", c.warmup_epochs, seen);
  read(j, "warmup_steps", c.warmup_steps, seen);
  read(j, "lr_base_batch", c.lr_base_batch, seen);
  read(j, "lr_batch_scaling", c.lr_batch_scaling, seen);
  read(j, "batch_size", c.batch_size, seen);
  read(j, "epochs", c.epochs, seen);
  read(j, "steps", c.steps, seen);
  read(j, "freeze_face_embed", c.freeze_face_embed, seen);
  read(j, "seed", c.seed, seen);
  for (const auto& [key, value] : j.items())
    if (!seen.count(key)) throw ConfigError("unknown config key '" + key + "'");
  c.validate();
  return c;
}

ModelConfig ModelConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read config file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_json(buffer.str());
}

void ModelConfig::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write config file " + path);
  out << to_json() << '\n';
}

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t ModelConfig::hash() const {
  const std::string text = to_object(*this).dump();
  return fnv1a(text.data(), text.size());
}

std::uint64_t ModelConfig::architecture_hash() const {
  ojson j;
  j["image_size"] = image_size;
  j["patch_size"] = patch_size;
  j["embed_dim"] = embed_dim;
  j["outlooker_blocks"] = outlooker_blocks;
  j["outlook_kernel"] = outlook_kernel;
  j["outlook_heads"] = outlook_heads;
  j["transformer_blocks"] = transformer_blocks;
  j["transformer_heads"] = transformer_heads;
  j["mlp_ratio"] = mlp_ratio;
  j["head_hidden"] = head_hidden;
  j["pooling"] = pooling;
  const std::string text = j.dump();
  return fnv1a(text.data(), text.size());
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ModelConfig ModelConfig::tiny() { return ModelConfig{}; }

ModelConfig ModelConfig::d1() {
  ModelConfig c;
  c.image_size = 224;
  c.patch_size = 8;
  c.embed_dim = 192;
  c.outlooker_blocks = 4;
  c.outlook_heads = 6;
  c.transformer_blocks = 14;
  c.transformer_heads = 12;
  c.head_hidden = 384;
  c.fusion_heads = 6;
  c.drop_rate = 0.32;
  c.drop_path_rate = 0.32;
  return c;
}

}  // namespace mivolo
