#pragma once

// Finite-difference verification of reverse-mode gradients.
//
// The analytic side runs the float engine and backward(). The reference side
// re-evaluates the same computation through the double instantiation of the
// engine (central differences, h = 1e-3), so the comparison is limited by
// float-precision of the analytic gradients rather than by quantization of
// the difference quotient. The reported error for each parameter tensor is
//   max_i |g_ad[i] - g_fd[i]| / max(tensor_scale, 0.01 * global_scale, 1e-8)
// where tensor_scale is the max-norm of that tensor's analytic and FD
// gradients and global_scale the max-norm across the whole check. The global
// term keeps structurally-zero gradients (for instance a bias that cancels
// inside a softmax) from turning float cancellation noise into a spurious
// failure. A check passes when the worst tensor stays below the tolerance.
//
// A +-h step that pushes a relu or clamp input across its breakpoint makes
// the central difference estimate a chord across the kink rather than a
// derivative, so such components are detected via the engine's kink trace
// and excluded (counted in `skipped`).

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "uwav/tensor.hpp"

namespace uwav {

struct GradCheckResult {
  std::string name;
  double max_rel_err = 0.0;
  double tolerance = 1e-4;
  bool pass = false;
  std::size_t checked = 0;  // parameter components compared
  std::size_t skipped = 0;  // components whose FD step crossed a kink
};

// f_loss: builds the float loss from the captured float parameters.
// d_loss: evaluates the same loss on the captured double parameters.
// fparams/dparams alias the tensors those closures read, in matching order.
template <class FLoss, class DLoss>
GradCheckResult check_gradients(std::string name, std::vector<Tensor> fparams,
                                std::vector<TensorD> dparams, FLoss&& f_loss,
                                DLoss&& d_loss, double tolerance = 1e-4,
                                double h = 1e-3) {
  if (fparams.size() != dparams.size())
    throw std::invalid_argument("check_gradients: parameter lists differ in length");
  for (auto& p : fparams) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  Tensor loss = f_loss();
  backward(loss);

  GradCheckResult res;
  res.name = std::move(name);
  res.tolerance = tolerance;

  auto eval_signed = [&](std::vector<std::uint8_t>& signature) {
    signature.clear();
    kink_trace = &signature;
    const double v = d_loss();
    kink_trace = nullptr;
    return v;
  };
  std::vector<std::uint8_t> sig_base, sig_up, sig_down;
  (void)eval_signed(sig_base);

  struct TensorErr {
    double max_diff = 0.0, max_mag = 0.0;
  };
  std::vector<TensorErr> per_tensor(fparams.size());
  double global_scale = 0.0;
  for (std::size_t k = 0; k < fparams.size(); ++k) {
    if (fparams[k].numel() != dparams[k].numel())
      throw std::invalid_argument("check_gradients: parameter " + std::to_string(k) +
                                  " sizes differ between float and double sides");
    const auto& ad = fparams[k].grad();
    auto& dv = dparams[k].data();
    for (std::size_t i = 0; i < dv.size(); ++i) {
      const double saved = dv[i];
      dv[i] = saved + h;
      const double up = eval_signed(sig_up);
      dv[i] = saved - h;
      const double down = eval_signed(sig_down);
      dv[i] = saved;
      if (sig_up != sig_base || sig_down != sig_base) {
        ++res.skipped;
        continue;
      }
      ++res.checked;
      const double fd = (up - down) / (2.0 * h);
      per_tensor[k].max_diff = std::max(per_tensor[k].max_diff, std::abs(double(ad[i]) - fd));
      per_tensor[k].max_mag =
          std::max({per_tensor[k].max_mag, std::abs(double(ad[i])), std::abs(fd)});
    }
    global_scale = std::max(global_scale, per_tensor[k].max_mag);
  }
  for (const auto& e : per_tensor)
    res.max_rel_err = std::max(
        res.max_rel_err, e.max_diff / std::max({e.max_mag, 0.01 * global_scale, 1e-8}));
  res.pass = res.max_rel_err < tolerance;
  return res;
}

// Grad-check registry run by the CLI `gradcheck` subcommand and the
// acceptance suite: one entry per op and per composite loss.
std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed);

}  // namespace uwav
