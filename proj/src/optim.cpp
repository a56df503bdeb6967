#include "metadg/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "metadg/common.hpp"

namespace metadg {

namespace {

double store(double x) { return store_rounded(x); }

std::string param_label(std::size_t i, const std::vector<std::string>& names,
                        const Tensor& p) {
  std::string label = i < names.size() ? names[i] : "parameter " + std::to_string(i);
  return label + " (shape " + shape_str(p.shape()) + ")";
}

void check_aligned(const char* op, const std::vector<Tensor>& params,
                   const std::vector<Tensor>& grads,
                   const std::vector<std::string>& names) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument(std::string(op) + ": " + std::to_string(params.size()) +
                                " parameters but " + std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!same_shape(params[i], grads[i])) {
      throw std::invalid_argument(std::string(op) + ": gradient shape " +
                                  shape_str(grads[i].shape()) + " does not match " +
                                  param_label(i, names, params[i]));
    }
    for (double g : grads[i].values()) {
      if (!std::isfinite(g)) {
        throw NumericalError(std::string(op) + ": non-finite gradient for " +
                             param_label(i, names, params[i]));
      }
    }
  }
}

}  // namespace

void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state,
               double lr, double weight_decay, const std::vector<std::string>& names) {
  if (lr <= 0.0) throw std::invalid_argument("adam_step: lr must be positive");
  check_aligned("adam_step", params, grads, names);
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(Tensor::zeros(p.shape()));
      state.v.push_back(Tensor::zeros(p.shape()));
    }
  }
  if (state.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: state built for " + std::to_string(state.m.size()) +
                                " parameters, got " + std::to_string(params.size()));
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* p = params[i].data();
    const auto& g = grads[i].values();
    double* m = state.m[i].data();
    double* v = state.v[i].data();
    for (std::size_t j = 0; j < g.size(); ++j) {
      double pj = p[j];
      if (weight_decay != 0.0) pj = store(pj - lr * weight_decay * pj);
      m[j] = store(state.beta1 * m[j] + (1.0 - state.beta1) * g[j]);
      v[j] = store(state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j]);
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] = store(pj - lr * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

void sgd_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, double lr,
              double weight_decay, const std::vector<std::string>& names) {
  if (lr <= 0.0) throw std::invalid_argument("sgd_step: lr must be positive");
  check_aligned("sgd_step", params, grads, names);
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* p = params[i].data();
    const auto& g = grads[i].values();
    for (std::size_t j = 0; j < g.size(); ++j) {
      double pj = p[j];
      if (weight_decay != 0.0) pj = store(pj - lr * weight_decay * pj);
      p[j] = store(pj - lr * g[j]);
    }
  }
}

double lr_at(const LrSchedule& schedule, std::int64_t step) {
  if (step < 0) throw std::invalid_argument("lr_at: negative step");
  if (schedule.warmup_steps <= 0 || step >= schedule.warmup_steps) return schedule.target_lr;
  const double frac = static_cast<double>(step) / static_cast<double>(schedule.warmup_steps);
  return schedule.start_lr + (schedule.target_lr - schedule.start_lr) * frac;
}

}  // namespace metadg
