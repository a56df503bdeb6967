#include <cmath>
#include <vector>

#include "doctest.h"
#include "metadg/common.hpp"
#include "metadg/engine.hpp"
#include "metadg/meta.hpp"
#include "metadg/tape.hpp"
#include "metadg/tensor.hpp"

using namespace metadg;

namespace {

// L(theta) = 0.5 * theta A theta^T + theta b^T for symmetric A, so the
// gradient is A theta + b and the Hessian is A exactly.
Tensor quad_loss(Tape& t, const Tensor& theta, const Tensor& A, const Tensor& b) {
  Tensor quad = ops::matmul(t, ops::matmul(t, theta, A), ops::transpose(t, theta));
  Tensor lin = ops::matmul(t, theta, ops::transpose(t, b));
  return ops::add(t, ops::scalar_mul(t, quad, 0.5), lin);
}

std::vector<double> quad_grad(const std::vector<double>& theta, const std::vector<double>& A,
                              const std::vector<double>& b) {
  const std::size_t n = theta.size();
  std::vector<double> g(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    g[i] = b[i];
    for (std::size_t j = 0; j < n; ++j) g[i] += A[i * n + j] * theta[j];
  }
  return g;
}

std::vector<Tensor> tape_grad(Tensor& storage, const std::vector<double>& A,
                              const std::vector<double>& b) {
  const std::int64_t n = storage.shape()[1];
  Tape t;
  Tensor theta = t.leaf(storage, true);
  Tensor At = Tensor({n, n}, A);
  Tensor bt = Tensor({1, n}, b);
  Tensor loss = quad_loss(t, theta, t.constant(At), t.constant(bt));
  GradMap g = t.backward(loss);
  return {g.for_tensor(theta)};
}

}  // namespace

TEST_CASE("first-order meta gradient on a 2-parameter toy matches the hand expression") {
  // L_mtr = x^2 + 2y^2, L_mte = (x-1)^2 + 0.5(y+2)^2, inner step plain SGD.
  const double x = 0.7, y = -0.3, alpha = 0.05;
  const std::vector<double> A1 = {2.0, 0.0, 0.0, 4.0};
  const std::vector<double> b1 = {0.0, 0.0};
  const std::vector<double> A2 = {2.0, 0.0, 0.0, 1.0};
  const std::vector<double> b2 = {-2.0, 2.0};  // expands (x-1)^2 + 0.5(y+2)^2 up to a constant

  Tensor theta({1, 2}, {x, y});
  std::vector<Tensor> g_mtr = tape_grad(theta, A1, b1);

  const std::vector<double> g1 = quad_grad({x, y}, A1, b1);
  Tensor theta_prime({1, 2}, {x - alpha * g1[0], y - alpha * g1[1]});
  std::vector<Tensor> g_mte = tape_grad(theta_prime, A2, b2);

  std::vector<Tensor> g = first_order_meta_gradient(g_mtr, g_mte);
  REQUIRE(g.size() == 1);

  // By hand: g = (2x, 4y) + (2(x'-1), y'+2) with x' = x-2ax, y' = y-4ay.
  const double xp = x - alpha * 2.0 * x;
  const double yp = y - alpha * 4.0 * y;
  const double hand_x = 2.0 * x + 2.0 * (xp - 1.0);
  const double hand_y = 4.0 * y + (yp + 2.0);
  CHECK(std::abs(g[0].at(0, 0) - hand_x) <= 1e-9);
  CHECK(std::abs(g[0].at(0, 1) - hand_y) <= 1e-9);

  // Inputs are left untouched.
  CHECK(g_mtr[0].at(0, 0) == doctest::Approx(2.0 * x).epsilon(1e-12));
  CHECK(g[0].values() != g_mtr[0].values());
}

TEST_CASE("exact meta gradient matches the quadratic closed form") {
  const std::vector<double> A1 = {2.0, 0.5, 0.5, 1.5};
  const std::vector<double> b1 = {0.1, -0.2};
  const std::vector<double> A2 = {1.0, -0.3, -0.3, 2.0};
  const std::vector<double> b2 = {0.05, 0.4};
  const double alpha = 0.1;

  Tensor theta({1, 2}, {0.4, -0.9});
  std::vector<Tensor> params = {theta};
  GradFn grad_fn = [&theta, &A1, &b1]() { return tape_grad(theta, A1, b1); };

  std::vector<Tensor> g_mtr = grad_fn();
  const std::vector<double> g1 = quad_grad(theta.values(), A1, b1);
  Tensor theta_prime({1, 2}, {theta.at(0, 0) - alpha * g1[0], theta.at(0, 1) - alpha * g1[1]});
  std::vector<Tensor> g_mte = tape_grad(theta_prime, A2, b2);
  const std::vector<double> v = quad_grad(theta_prime.values(), A2, b2);

  const std::vector<double> before = theta.values();
  std::vector<Tensor> g = exact_meta_gradient(grad_fn, params, g_mtr, g_mte, alpha);
  REQUIRE(g.size() == 1);
  CHECK(theta.values() == before);  // probe restored bit-exactly

  // Closed form: g = g_mtr + (I - alpha*A1) v.
  for (int i = 0; i < 2; ++i) {
    double hv = 0.0;
    for (int j = 0; j < 2; ++j) hv += A1[static_cast<std::size_t>(i * 2 + j)] * v[static_cast<std::size_t>(j)];
    const double want = g1[static_cast<std::size_t>(i)] + v[static_cast<std::size_t>(i)] - alpha * hv;
    CHECK(std::abs(g[0].at(0, static_cast<std::int64_t>(i)) - want) <= 1e-6);
  }
}

TEST_CASE("exact meta gradient degenerate cases skip the probe") {
  Tensor theta({1, 2}, {0.4, -0.9});
  std::vector<Tensor> params = {theta};
  int calls = 0;
  GradFn grad_fn = [&calls]() -> std::vector<Tensor> {
    ++calls;
    return {Tensor({1, 2}, {1.0, 2.0})};
  };
  std::vector<Tensor> g_mtr = {Tensor({1, 2}, {0.5, -0.5})};

  SUBCASE("zero meta-test gradient") {
    std::vector<Tensor> g_mte = {Tensor::zeros({1, 2})};
    std::vector<Tensor> g = exact_meta_gradient(grad_fn, params, g_mtr, g_mte, 0.1);
    CHECK(calls == 0);
    CHECK(g[0].at(0, 0) == 0.5);
    CHECK(g[0].at(0, 1) == -0.5);
  }
  SUBCASE("alpha zero") {
    std::vector<Tensor> g_mte = {Tensor({1, 2}, {3.0, 4.0})};
    std::vector<Tensor> g = exact_meta_gradient(grad_fn, params, g_mtr, g_mte, 0.0);
    CHECK(calls == 0);
    CHECK(g[0].at(0, 0) == 3.5);
    CHECK(g[0].at(0, 1) == 3.5);
  }
}

TEST_CASE("meta gradient input validation") {
  std::vector<Tensor> a = {Tensor::zeros({1, 2})};
  std::vector<Tensor> b = {Tensor::zeros({1, 3})};
  std::vector<Tensor> two = {Tensor::zeros({1, 2}), Tensor::zeros({1, 2})};
  CHECK_THROWS_AS((void)first_order_meta_gradient(a, b), std::invalid_argument);
  CHECK_THROWS_AS((void)first_order_meta_gradient(a, two), std::invalid_argument);

  Tensor theta({1, 2}, {0.0, 0.0});
  std::vector<Tensor> params = {theta};
  GradFn fn = []() -> std::vector<Tensor> { return {Tensor::zeros({1, 2})}; };
  std::vector<Tensor> g_mte = {Tensor({1, 2}, {1.0, 1.0})};
  CHECK_THROWS_AS((void)exact_meta_gradient(fn, params, a, g_mte, 0.1, 0.0),
                  std::invalid_argument);
  GradFn bad = []() -> std::vector<Tensor> {
    return {Tensor({1, 2}, {std::nan(""), 0.0})};
  };
  CHECK_THROWS_AS((void)exact_meta_gradient(bad, params, a, g_mte, 0.1), NumericalError);
}

TEST_CASE("meta step with a zero meta-test gradient reduces to plain Adam") {
  TrainConfig cfg;
  cfg.vocab = 12;
  ModelDims dims{12, 3, 4, 3, 2};
  RngStream rng(7);
  ModelParams p = init_params(dims, Activation::kTanh, rng, 0.1);
  ModelParams ref = clone_params(p);

  std::vector<Tensor> g_mtr;
  RngStream grng(8);
  for (const auto& t : model_tensors(p)) {
    Tensor g = Tensor::zeros(t.shape());
    for (std::size_t i = 0; i < g.values().size(); ++i) g.data()[i] = grng.normal(0.0, 1.0);
    g_mtr.push_back(g);
  }
  std::vector<Tensor> g_zero;
  for (const auto& t : g_mtr) g_zero.push_back(Tensor::zeros(t.shape()));

  AdamState outer;
  meta_step(p, g_mtr, g_zero, outer, 1e-3, 1e-3, cfg, GradFn{});

  AdamState direct;
  std::vector<Tensor> ref_tensors = model_tensors(ref);
  adam_step(ref_tensors, g_mtr, direct, 1e-3, cfg.weight_decay, model_tensor_names());
  CHECK(params_checksum(p) == params_checksum(ref));
}

TEST_CASE("meta step in exact mode requires the gradient functor") {
  TrainConfig cfg;
  cfg.meta_mode = MetaMode::kExact;
  cfg.inner_opt = InnerOpt::kSgd;
  cfg.vocab = 12;
  ModelDims dims{12, 3, 4, 3, 2};
  RngStream rng(7);
  ModelParams p = init_params(dims, Activation::kTanh, rng, 0.1);
  std::vector<Tensor> g;
  for (const auto& t : model_tensors(p)) g.push_back(Tensor::zeros(t.shape()));
  AdamState outer;
  CHECK_THROWS_AS(meta_step(p, g, g, outer, 1e-3, 1e-3, cfg, GradFn{}), std::invalid_argument);
}
