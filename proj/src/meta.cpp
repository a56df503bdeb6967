#include "metadg/meta.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

#include "metadg/common.hpp"

namespace metadg {

namespace {

void check_matched(const char* op, const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument(std::string(op) + ": " + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + " gradient tensors");
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!same_shape(a[i], b[i])) {
      throw std::invalid_argument(std::string(op) + ": gradient shape mismatch at index " +
                                  std::to_string(i) + ", " + shape_str(a[i].shape()) + " vs " +
                                  shape_str(b[i].shape()));
    }
  }
}

double joint_norm(const std::vector<Tensor>& v) {
  double sq = 0.0;
  for (const auto& t : v) {
    for (double x : t.values()) sq += x * x;
  }
  return std::sqrt(sq);
}

}  // namespace

std::vector<Tensor> first_order_meta_gradient(const std::vector<Tensor>& g_mtr,
                                              const std::vector<Tensor>& g_mte_prime) {
  check_matched("first_order_meta_gradient", g_mtr, g_mte_prime);
  std::vector<Tensor> out;
  out.reserve(g_mtr.size());
  for (std::size_t i = 0; i < g_mtr.size(); ++i) {
    Tensor sum = g_mtr[i].clone();
    double* s = sum.data();
    const auto& b = g_mte_prime[i].values();
    for (std::size_t j = 0; j < b.size(); ++j) s[j] += b[j];
    out.push_back(std::move(sum));
  }
  return out;
}

std::vector<Tensor> exact_meta_gradient(const GradFn& grad_mtr, std::vector<Tensor>& params,
                                        const std::vector<Tensor>& g_mtr,
                                        const std::vector<Tensor>& g_mte_prime, double alpha,
                                        double probe) {
  check_matched("exact_meta_gradient", g_mtr, g_mte_prime);
  if (params.size() != g_mtr.size()) {
    throw std::invalid_argument("exact_meta_gradient: " + std::to_string(params.size()) +
                                " parameters but " + std::to_string(g_mtr.size()) + " gradients");
  }
  if (probe <= 0.0) throw std::invalid_argument("exact_meta_gradient: probe must be positive");

  std::vector<Tensor> out = first_order_meta_gradient(g_mtr, g_mte_prime);
  const double vnorm = joint_norm(g_mte_prime);
  if (vnorm == 0.0 || alpha == 0.0) return out;  // curvature term vanishes

  const double h = probe / vnorm;
  std::vector<std::vector<double>> saved(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) saved[i] = params[i].values();

  auto shift = [&](double scale) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      double* p = params[i].data();
      const auto& v = g_mte_prime[i].values();
      const auto& base = saved[i];
      for (std::size_t j = 0; j < v.size(); ++j) p[j] = base[j] + scale * v[j];
    }
  };

  shift(h);
  std::vector<Tensor> plus = grad_mtr();
  shift(-h);
  std::vector<Tensor> minus = grad_mtr();
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::memcpy(params[i].data(), saved[i].data(), sizeof(double) * saved[i].size());
  }
  check_matched("exact_meta_gradient (probe)", plus, minus);
  if (plus.size() != params.size()) {
    throw std::invalid_argument("exact_meta_gradient: probe returned " +
                                std::to_string(plus.size()) + " gradients for " +
                                std::to_string(params.size()) + " parameters");
  }

  for (std::size_t i = 0; i < out.size(); ++i) {
    double* o = out[i].data();
    const auto& gp = plus[i].values();
    const auto& gm = minus[i].values();
    for (std::size_t j = 0; j < gp.size(); ++j) {
      const double hv = (gp[j] - gm[j]) / (2.0 * h);
      o[j] -= alpha * hv;
      if (!std::isfinite(o[j])) {
        throw NumericalError("exact_meta_gradient: non-finite meta gradient at parameter " +
                             std::to_string(i));
      }
    }
  }
  return out;
}

}  // namespace metadg
