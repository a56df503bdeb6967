#pragma once

#include <functional>
#include <vector>

#include "metadg/tensor.hpp"

namespace metadg {

// Recomputes the meta-train gradient at the parameters' current storage
// values. Used by the exact mode's Hessian-vector probe.
using GradFn = std::function<std::vector<Tensor>()>;

// g_i = g_mtr_i + g_mte_i, parameter-wise. The meta-test gradient is taken
// at the inner-updated parameters and index-matched onto the originals.
std::vector<Tensor> first_order_meta_gradient(const std::vector<Tensor>& g_mtr,
                                              const std::vector<Tensor>& g_mte_prime);

// Differentiates through a plain SGD inner step theta' = theta - alpha*g:
// g = g_mtr + (I - alpha*H)v with v the meta-test gradient at theta'. The
// Hessian-vector product uses central differences of grad_mtr along v with
// step probe/||v||, so it is exact (up to roundoff) for quadratic losses.
// `params` storage is perturbed during the probe and restored bit-exactly.
std::vector<Tensor> exact_meta_gradient(const GradFn& grad_mtr, std::vector<Tensor>& params,
                                        const std::vector<Tensor>& g_mtr,
                                        const std::vector<Tensor>& g_mte_prime, double alpha,
                                        double probe = 1e-2);

}  // namespace metadg
