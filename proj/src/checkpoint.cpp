#include "uwav/checkpoint.hpp"

#include <fstream>

#include "uwav/tensor_io.hpp"

namespace uwav {

using nlohmann::json;

const Tensor& Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw checkpoint_error("checkpoint misses tensor '" + name + "'");
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto data_name = path.filename().string() + ".bin";
  const auto data_path = path.parent_path() / data_name;
  std::ofstream bin(data_path, std::ios::binary);
  if (!bin) throw checkpoint_error("cannot open " + data_path.string());
  json index;
  index["format"] = "uwav-checkpoint";
  index["version"] = 1;
  index["data_file"] = data_name;
  index["meta"] = ckpt.meta;
  json entries = json::array();
  for (const auto& [name, tensor] : ckpt.tensors) {
    entries.push_back({{"name", name}, {"offset", std::size_t(bin.tellp())}});
    write_tensor(bin, tensor);
  }
  index["tensors"] = std::move(entries);
  if (!bin) throw checkpoint_error("write failed for " + data_path.string());
  std::ofstream out(path);
  if (!out) throw checkpoint_error("cannot open " + path.string());
  out << index.dump(1) << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw checkpoint_error("checkpoint not found: " + path.string());
  json index;
  try {
    in >> index;
  } catch (const json::parse_error& e) {
    throw checkpoint_error("malformed checkpoint index " + path.string() + ": " + e.what());
  }
  Checkpoint ckpt;
  try {
    if (index.at("format").get<std::string>() != "uwav-checkpoint")
      throw checkpoint_error("not a checkpoint index: " + path.string());
    if (index.at("version").get<int>() != 1)
      throw checkpoint_error("unsupported checkpoint version in " + path.string());
    ckpt.meta = index.at("meta");
    const auto data_path = path.parent_path() / index.at("data_file").get<std::string>();
    std::ifstream bin(data_path, std::ios::binary);
    if (!bin) throw checkpoint_error("checkpoint data missing: " + data_path.string());
    for (const auto& entry : index.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      bin.seekg(entry.at("offset").get<std::streamoff>());
      ckpt.tensors.emplace_back(name, read_tensor(bin, data_path.string() + ":" + name));
    }
  } catch (const json::exception& e) {
    throw checkpoint_error("checkpoint " + path.string() + ": " + e.what());
  }
  return ckpt;
}

Checkpoint snapshot_model(const NamedParams<float>& params, json meta,
                          const AdamW* optimizer) {
  Checkpoint ckpt;
  ckpt.meta = std::move(meta);
  for (const auto& [name, tensor] : params)
    ckpt.tensors.emplace_back(name, tensor.detached_copy());
  if (optimizer) {
    if (optimizer->size() != params.size())
      throw checkpoint_error("optimizer holds a different parameter count");
    ckpt.meta["optimizer"] = {{"kind", "adamw"}, {"step_count", optimizer->step_count()}};
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& shape = params[i].second.shape();
      ckpt.tensors.emplace_back(
          "opt.m." + params[i].first,
          Tensor::from_data(shape, optimizer->first_moment(i)));
      ckpt.tensors.emplace_back(
          "opt.v." + params[i].first,
          Tensor::from_data(shape, optimizer->second_moment(i)));
    }
  }
  return ckpt;
}

void restore_parameters(const Checkpoint& ckpt, const NamedParams<float>& params) {
  for (const auto& [name, tensor] : params) {
    const Tensor& stored = ckpt.find(name);
    if (stored.shape() != tensor.shape())
      throw checkpoint_error("checkpoint tensor '" + name + "' has shape " +
                             shape_to_string(stored.shape()) + ", expected " +
                             shape_to_string(tensor.shape()));
    const_cast<Tensor&>(tensor).data() = stored.data();
  }
}

void restore_optimizer(const Checkpoint& ckpt, const NamedParams<float>& params,
                       AdamW& optimizer) {
  if (!ckpt.meta.contains("optimizer"))
    throw checkpoint_error("checkpoint carries no optimizer state");
  optimizer.restore_step_count(ckpt.meta["optimizer"].at("step_count").get<std::uint64_t>());
  for (std::size_t i = 0; i < params.size(); ++i) {
    optimizer.restore_state(i, ckpt.find("opt.m." + params[i].first).data(),
                            ckpt.find("opt.v." + params[i].first).data());
  }
}

Checkpoint han_checkpoint(const HanModel& model, const HanConfig& cfg,
                          const std::vector<std::string>& vocabulary, std::size_t epoch,
                          const AdamW* optimizer) {
  json meta;
  meta["model"] = "han";
  meta["epoch"] = epoch;
  meta["visual_dim"] = cfg.visual_dim;
  meta["audio_dim"] = cfg.audio_dim;
  meta["model_dim"] = cfg.model_dim;
  meta["num_classes"] = cfg.num_classes;
  meta["attention_heads"] = cfg.attention_heads;
  meta["vocabulary"] = vocabulary;
  return snapshot_model(model.named_parameters(), std::move(meta), optimizer);
}

HanModel load_han_model(const Checkpoint& ckpt, HanConfig* cfg_out) {
  try {
    if (ckpt.meta.at("model").get<std::string>() != "han")
      throw checkpoint_error("checkpoint does not hold an inference model");
    HanConfig cfg;
    cfg.visual_dim = ckpt.meta.at("visual_dim").get<std::size_t>();
    cfg.audio_dim = ckpt.meta.at("audio_dim").get<std::size_t>();
    cfg.model_dim = ckpt.meta.at("model_dim").get<std::size_t>();
    cfg.num_classes = ckpt.meta.at("num_classes").get<std::size_t>();
    cfg.attention_heads = ckpt.meta.at("attention_heads").get<std::size_t>();
    Rng rng(0);
    HanModel model = make_han_model(cfg, rng);
    restore_parameters(ckpt, model.named_parameters());
    if (cfg_out) *cfg_out = cfg;
    return model;
  } catch (const json::exception& e) {
    throw checkpoint_error(std::string("inference-model checkpoint meta: ") + e.what());
  }
}

Checkpoint pseudo_labeler_checkpoint(const PseudoLabeler& model,
                                     const PseudoLabelerConfig& cfg, std::size_t epoch,
                                     const AdamW* optimizer) {
  json meta;
  meta["model"] = "pseudolabeler";
  meta["epoch"] = epoch;
  meta["visual_width"] = cfg.visual_width;
  meta["audio_width"] = cfg.audio_width;
  meta["encoder_blocks"] = cfg.encoder_blocks;
  meta["attention_heads"] = cfg.attention_heads;
  meta["ffn_multiplier"] = cfg.ffn_multiplier;
  meta["positional_encoding"] = cfg.positional_encoding;
  return snapshot_model(model.named_parameters(), std::move(meta), optimizer);
}

PseudoLabeler load_pseudo_labeler_model(const Checkpoint& ckpt, PseudoLabelerConfig* cfg_out) {
  try {
    if (ckpt.meta.at("model").get<std::string>() != "pseudolabeler")
      throw checkpoint_error("checkpoint does not hold a pseudo-label model");
    PseudoLabelerConfig cfg;
    cfg.visual_width = ckpt.meta.at("visual_width").get<std::size_t>();
    cfg.audio_width = ckpt.meta.at("audio_width").get<std::size_t>();
    cfg.encoder_blocks = ckpt.meta.at("encoder_blocks").get<std::size_t>();
    cfg.attention_heads = ckpt.meta.at("attention_heads").get<std::size_t>();
    cfg.ffn_multiplier = ckpt.meta.at("ffn_multiplier").get<std::size_t>();
    cfg.positional_encoding = ckpt.meta.at("positional_encoding").get<bool>();
    Rng rng(0);
    PseudoLabeler model = make_pseudo_labeler(cfg, rng);
    restore_parameters(ckpt, model.named_parameters());
    if (cfg_out) *cfg_out = cfg;
    return model;
  } catch (const json::exception& e) {
    throw checkpoint_error(std::string("pseudo-label checkpoint meta: ") + e.what());
  }
}

}  // namespace uwav
