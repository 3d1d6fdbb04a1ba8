#include "uwav/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace uwav {

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  if (!(cfg_.beta1 >= 0 && cfg_.beta1 < 1) || !(cfg_.beta2 >= 0 && cfg_.beta2 < 1))
    throw std::invalid_argument("AdamW betas must lie in [0,1)");
  if (cfg_.eps <= 0) throw std::invalid_argument("AdamW eps must be positive");
  state_.reserve(params_.size());
  for (const auto& p : params_) {
    Moments mo;
    mo.m.assign(p.numel(), 0.0f);
    mo.v.assign(p.numel(), 0.0f);
    state_.push_back(std::move(mo));
  }
}

void AdamW::step() {
  ++step_count_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double bias1 = 1.0 - std::pow(b1, double(step_count_));
  const double bias2 = 1.0 - std::pow(b2, double(step_count_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = params_[k];
    if (!p.has_grad())
      throw std::logic_error("AdamW: parameter " + std::to_string(k) +
                             " has no gradient; run backward() first");
    auto& g = p.grad();
    auto& m = state_[k].m;
    auto& v = state_[k].v;
    auto& x = p.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double gi = double(g[i]);
      const double mi = b1 * double(m[i]) + (1.0 - b1) * gi;
      const double vi = b2 * double(v[i]) + (1.0 - b2) * gi * gi;
      m[i] = float(mi);
      v[i] = float(vi);
      const double m_hat = mi / bias1;
      const double v_hat = vi / bias2;
      double xi = double(x[i]);
      xi -= cfg_.lr * cfg_.weight_decay * xi;
      xi -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
      x[i] = float(xi);
    }
    detail::check_finite(x, "adamw_step");
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void AdamW::restore_state(std::size_t i, std::vector<float> m, std::vector<float> v) {
  if (i >= state_.size()) throw std::out_of_range("AdamW::restore_state index");
  if (m.size() != params_[i].numel() || v.size() != params_[i].numel())
    throw std::invalid_argument("AdamW::restore_state moment size mismatch");
  state_[i].m = std::move(m);
  state_[i].v = std::move(v);
}

double lr_at_epoch(const ScheduleConfig& cfg, std::size_t epoch) {
  if (cfg.warmup_epochs > cfg.total_epochs)
    throw std::invalid_argument("schedule: warmup_epochs exceeds total_epochs");
  if (cfg.min_lr > cfg.peak_lr)
    throw std::invalid_argument("schedule: min_lr exceeds peak_lr");
  if (epoch >= cfg.total_epochs)
    throw std::logic_error("schedule: epoch " + std::to_string(epoch) +
                           " out of range [0," + std::to_string(cfg.total_epochs) + ")");
  if (epoch < cfg.warmup_epochs)
    return cfg.peak_lr * double(epoch + 1) / double(cfg.warmup_epochs);
  const std::size_t decay_span = cfg.total_epochs - cfg.warmup_epochs;
  if (decay_span <= 1) return cfg.peak_lr;
  // Denominator spans the decay epochs so the last epoch sits exactly at
  // min_lr (cosine argument reaches pi).
  const double frac = double(epoch - cfg.warmup_epochs) / double(decay_span - 1);
  return cfg.min_lr +
         0.5 * (cfg.peak_lr - cfg.min_lr) * (1.0 + std::cos(std::numbers::pi * frac));
}

double clip_grad_norm(std::vector<Tensor>& params, double max_norm) {
  if (max_norm <= 0) throw std::invalid_argument("clip_grad_norm: max_norm must be positive");
  double sq = 0.0;
  for (auto& p : params) {
    if (!p.has_grad())
      throw std::logic_error("clip_grad_norm: parameter has no gradient");
    for (float g : p.grad()) sq += double(g) * double(g);
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return 1.0;
  const double scale = max_norm / norm;
  for (auto& p : params)
    for (float& g : p.grad()) g = float(double(g) * scale);
  return scale;
}

}  // namespace uwav
