#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "metadg/tensor.hpp"

namespace testutil {

// Central finite differences of `loss` with respect to the entries of
// `storage`, rebuilding the forward pass per evaluation.
inline std::vector<double> fd_grad(const std::function<double()>& loss, metadg::Tensor& storage,
                                   double h = 1e-5) {
  std::vector<double> grad(storage.values().size());
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double saved = storage.data()[i];
    storage.data()[i] = saved + h;
    const double up = loss();
    storage.data()[i] = saved - h;
    const double down = loss();
    storage.data()[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

inline double max_rel_err(const std::vector<double>& analytic, const std::vector<double>& fd,
                          double floor = 1e-8) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max(std::max(std::fabs(analytic[i]), std::fabs(fd[i])), floor);
    if (std::fabs(analytic[i]) <= floor && std::fabs(fd[i]) <= floor) continue;
    worst = std::max(worst, std::fabs(analytic[i] - fd[i]) / denom);
  }
  return worst;
}

}  // namespace testutil
