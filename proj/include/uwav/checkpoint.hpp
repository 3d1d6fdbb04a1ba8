#pragma once

// Checkpoints: a JSON index next to a binary blob of concatenated tensor
// records. The index carries model metadata, optimizer scalars and rng
// states; every parameter and optimizer moment is a named record.

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "uwav/han.hpp"
#include "uwav/optim.hpp"
#include "uwav/pseudolabeler.hpp"
#include "uwav/tensor.hpp"

namespace uwav {

class checkpoint_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  nlohmann::json meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& find(const std::string& name) const;
};

// Writes <path> (JSON index) and the sibling data file named in the index.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Attaches parameters plus, when an optimizer is given, its moment buffers
// and step counter.
Checkpoint snapshot_model(const NamedParams<float>& params, nlohmann::json meta,
                          const AdamW* optimizer = nullptr);

// Copies checkpoint tensors into an existing parameter list by name.
void restore_parameters(const Checkpoint& ckpt, const NamedParams<float>& params);
// Restores moment buffers and the step counter saved by snapshot_model.
void restore_optimizer(const Checkpoint& ckpt, const NamedParams<float>& params,
                       AdamW& optimizer);

// Model-level helpers: metadata schema shared by save and load.
Checkpoint han_checkpoint(const HanModel& model, const HanConfig& cfg,
                          const std::vector<std::string>& vocabulary, std::size_t epoch,
                          const AdamW* optimizer = nullptr);
HanModel load_han_model(const Checkpoint& ckpt, HanConfig* cfg_out = nullptr);

Checkpoint pseudo_labeler_checkpoint(const PseudoLabeler& model,
                                     const PseudoLabelerConfig& cfg, std::size_t epoch,
                                     const AdamW* optimizer = nullptr);
PseudoLabeler load_pseudo_labeler_model(const Checkpoint& ckpt,
                                        PseudoLabelerConfig* cfg_out = nullptr);

}  // namespace uwav
