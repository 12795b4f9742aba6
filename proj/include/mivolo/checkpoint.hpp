#pragma once

#include <memory>
#include <string>

#include "mivolo/fusion.hpp"

namespace mivolo {

// Text format: a header with the config JSON and its hashes, then one
// "param <name> <dims> <count>" line per tensor followed by its values as
// hexfloats, so a round trip is bit-exact.
void save_checkpoint(const std::string& path, const MiVolo& model);

// Rebuilds the model from the stored config. Throws InputError on a malformed
// file or a config hash that does not match the stored config.
std::unique_ptr<MiVolo> load_checkpoint(const std::string& path);

// Stored config without reading the weights.
ModelConfig read_checkpoint_config(const std::string& path);

// Dual-input model initialized from a single-input checkpoint: face embedding,
// trunk and head copied, body embedding = face embedding, enhancer drawn from
// `seed`, face embedding frozen. Refuses checkpoints whose architecture hash
// differs from `config`'s.
std::unique_ptr<MiVolo> init_from_single_input(const std::string& path, ModelConfig config,
                                               std::uint64_t seed);
std::unique_ptr<MiVolo> init_from_single_input(const MiVolo& single, ModelConfig config,
                                               std::uint64_t seed);

// Applies config.freeze_face_embed to the face embedding parameters.
void apply_freezing(MiVolo& model);

}  // namespace mivolo
