#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uwav/tensor.hpp"

namespace uwav {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

// Decoupled-weight-decay Adam with bias-corrected moments. Moment buffers are
// zero-initialized up front so the optimizer state is checkpointable at any
// step, including step 0.
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWConfig cfg);

  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }
  const AdamWConfig& config() const { return cfg_; }

  // One update over all parameters; throws if any gradient is missing.
  void step();
  void zero_grad();

  std::uint64_t step_count() const { return step_count_; }
  std::size_t size() const { return params_.size(); }

  const std::vector<float>& first_moment(std::size_t i) const { return state_[i].m; }
  const std::vector<float>& second_moment(std::size_t i) const { return state_[i].v; }
  void restore_state(std::size_t i, std::vector<float> m, std::vector<float> v);
  void restore_step_count(std::uint64_t steps) { step_count_ = steps; }

 private:
  struct Moments {
    std::vector<float> m, v;
  };
  std::vector<Tensor> params_;
  std::vector<Moments> state_;
  AdamWConfig cfg_;
  std::uint64_t step_count_ = 0;
};

struct ScheduleConfig {
  std::size_t warmup_epochs = 10;
  double peak_lr = 1e-4;
  double min_lr = 1e-5;
  std::size_t total_epochs = 80;
};

// Linear warmup to peak_lr over the first warmup_epochs, then cosine decay
// that lands exactly on min_lr at the final epoch.
double lr_at_epoch(const ScheduleConfig& cfg, std::size_t epoch);

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the scale factor that was applied (1.0 when already within bounds).
double clip_grad_norm(std::vector<Tensor>& params, double max_norm = 1.0);

}  // namespace uwav
