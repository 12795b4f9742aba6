#include "mivolo/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "mivolo/error.hpp"

namespace mivolo {

namespace {

constexpr const char* kMagic = "mivolo-checkpoint 1";

std::string hexfloat(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

struct Header {
  ModelConfig config;
  std::string config_text;
};

Header read_header(std::istream& in, const std::string& path) {
  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw InputError(path + " is not a checkpoint");
  std::string config_hash, arch_hash, config_text;
  for (int i = 0; i < 3; ++i) {
    if (!std::getline(in, line)) throw InputError("truncated checkpoint header in " + path);
    const auto sp = line.find(' ');
    const std::string key = line.substr(0, sp), value = sp == std::string::npos ? "" : line.substr(sp + 1);
    if (key == "config_hash") config_hash = value;
    else if (key == "arch_hash") arch_hash = value;
    else if (key == "config") config_text = value;
    else throw InputError("unexpected checkpoint header key '" + key + "' in " + path);
  }
  Header h;
  try {
    h.config = ModelConfig::from_json(config_text);
  } catch (const ConfigError& e) {
    throw InputError(path + ": " + e.what());
  }
  h.config_text = config_text;
  if (hash_hex(h.config.hash()) != config_hash)
    throw InputError("config hash mismatch in " + path);
  if (hash_hex(h.config.architecture_hash()) != arch_hash)
    throw InputError("architecture hash mismatch in " + path);
  return h;
}

void copy_values(const ParameterList& from, const ParameterList& to, const std::string& from_prefix,
                 const std::string& to_prefix) {
  for (const auto& src : from) {
    if (src.name.rfind(from_prefix, 0) != 0) continue;
    const std::string target = to_prefix + src.name.substr(from_prefix.size());
    bool found = false;
    for (const auto& dst : to) {
      if (dst.name != target) continue;
      if (dst.tensor.shape() != src.tensor.shape())
        throw DimensionError("shape mismatch copying " + src.name + " to " + target);
      auto d = Tensor(dst.tensor).mutable_data();
      std::copy(src.tensor.data().begin(), src.tensor.data().end(), d.begin());
      found = true;
    }
    if (!found) throw DimensionError("no parameter " + target + " to receive " + src.name);
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const MiVolo& model) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write checkpoint " + path);
  const ModelConfig& c = model.config();
  out << kMagic << '\n';
  out << "config_hash " << hash_hex(c.hash()) << '\n';
  out << "arch_hash " << hash_hex(c.architecture_hash()) << '\n';
  out << "config " << c.to_json_line() << '\n';
  for (const auto& p : model.parameters()) {
    out << "param " << p.name << ' ';
    const auto& shape = p.tensor.shape();
    for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "x" : "") << shape[i];
    out << ' ' << p.tensor.numel() << '\n';
    const auto data = p.tensor.data();
    for (std::size_t i = 0; i < data.size(); ++i) out << (i ? " " : "") << hexfloat(data[i]);
    out << '\n';
  }
  if (!out) throw InputError("failed writing checkpoint " + path);
}

ModelConfig read_checkpoint_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read checkpoint " + path);
  return read_header(in, path).config;
}

std::unique_ptr<MiVolo> load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read checkpoint " + path);
  const Header h = read_header(in, path);
  auto model = std::make_unique<MiVolo>(h.config, 0);
  const ParameterList params = model->parameters();
  std::size_t seen = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream head(line);
    std::string tag, name, dims;
    std::size_t count = 0;
    if (!(head >> tag >> name >> dims >> count) || tag != "param")
      throw InputError("malformed parameter header in " + path);
    const NamedParameter* target = nullptr;
    for (const auto& p : params)
      if (p.name == name) target = &p;
    if (!target) throw InputError("unknown parameter " + name + " in " + path);
    if (target->tensor.numel() != count) throw InputError("size mismatch for " + name + " in " + path);
    std::string values;
    if (!std::getline(in, values)) throw InputError("missing values for " + name + " in " + path);
    auto data = Tensor(target->tensor).mutable_data();
    const char* cursor = values.c_str();
    for (std::size_t i = 0; i < count; ++i) {
      char* end = nullptr;
      data[i] = std::strtod(cursor, &end);
      if (end == cursor) throw InputError("bad value in " + name + " in " + path);
      cursor = end;
    }
    ++seen;
  }
  if (seen != params.size()) throw InputError("checkpoint " + path + " is missing parameters");
  apply_freezing(*model);
  return model;
}

std::unique_ptr<MiVolo> init_from_single_input(const MiVolo& single, ModelConfig config,
                                               std::uint64_t seed) {
  if (!single.config().single_input) throw ConfigError("source checkpoint is not single-input");
  if (single.config().architecture_hash() != config.architecture_hash())
    throw ConfigError("architecture of the single-input checkpoint does not match the config");
  config.single_input = false;
  config.freeze_face_embed = true;
  auto model = std::make_unique<MiVolo>(config, seed);
  const ParameterList from = single.parameters();
  const ParameterList to = model->parameters();
  copy_values(from, to, "face_embed.", "face_embed.");
  copy_values(from, to, "face_embed.", "body_embed.");
  copy_values(from, to, "trunk.", "trunk.");
  copy_values(from, to, "head.", "head.");
  apply_freezing(*model);
  return model;
}

std::unique_ptr<MiVolo> init_from_single_input(const std::string& path, ModelConfig config,
                                               std::uint64_t seed) {
  const auto single = load_checkpoint(path);
  return init_from_single_input(*single, std::move(config), seed);
}

void apply_freezing(MiVolo& model) {
  for (auto& p : model.parameters())
    if (p.name.rfind("face_embed.", 0) == 0) p.tensor.set_requires_grad(!model.config().freeze_face_embed);
}

}  // namespace mivolo
