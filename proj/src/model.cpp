#include "metadg/model.hpp"

#include <stdexcept>

#include "metadg/common.hpp"

namespace metadg {

Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "sigmoid") return Activation::kSigmoid;
  if (name == "identity") return Activation::kIdentity;
  throw ConfigError("unknown activation '" + name + "' (tanh, sigmoid, identity)");
}

const char* activation_name(Activation act) {
  switch (act) {
    case Activation::kTanh: return "tanh";
    case Activation::kSigmoid: return "sigmoid";
    case Activation::kIdentity: return "identity";
  }
  return "tanh";
}

namespace {

Tensor random_matrix(Shape shape, RngStream& rng, double scale) {
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = rng.normal(0.0, scale);
  return Tensor(std::move(shape), std::move(v));
}

}  // namespace

ModelParams init_params(const ModelDims& dims, Activation activation, RngStream& rng,
                        double init_scale) {
  if (dims.vocab < 2 || dims.d_emb < 1 || dims.d_h < 1 || dims.d_f < 1 || dims.n_classes < 2) {
    throw ConfigError("init_params: degenerate model dimensions");
  }
  ModelParams p;
  p.dims = dims;
  p.activation = activation;
  p.encoder.embedding = random_matrix({dims.vocab, dims.d_emb}, rng, init_scale);
  p.encoder.w1 = random_matrix({dims.d_emb, dims.d_h}, rng, init_scale);
  p.encoder.b1 = Tensor::zeros({1, dims.d_h});
  p.encoder.w2 = random_matrix({dims.d_h, dims.d_f}, rng, init_scale);
  p.encoder.b2 = Tensor::zeros({1, dims.d_f});
  p.classifier.w = random_matrix({dims.d_f, dims.n_classes}, rng, init_scale);
  p.classifier.b = Tensor::zeros({1, dims.n_classes});
  return p;
}

std::vector<Tensor> encoder_tensors(const EncoderParams& p) {
  return {p.embedding, p.w1, p.b1, p.w2, p.b2};
}

std::vector<Tensor> model_tensors(const ModelParams& p) {
  auto out = encoder_tensors(p.encoder);
  out.push_back(p.classifier.w);
  out.push_back(p.classifier.b);
  return out;
}

const std::vector<std::string>& encoder_tensor_names() {
  static const std::vector<std::string> names{"encoder.embedding", "encoder.w1", "encoder.b1",
                                             "encoder.w2", "encoder.b2"};
  return names;
}

const std::vector<std::string>& model_tensor_names() {
  static const std::vector<std::string> names{"encoder.embedding", "encoder.w1", "encoder.b1",
                                             "encoder.w2",        "encoder.b2", "classifier.w",
                                             "classifier.b"};
  return names;
}

EncoderParams clone_encoder(const EncoderParams& p) {
  return EncoderParams{p.embedding.clone(), p.w1.clone(), p.b1.clone(), p.w2.clone(),
                       p.b2.clone()};
}

ModelParams clone_params(const ModelParams& p) {
  ModelParams out;
  out.dims = p.dims;
  out.activation = p.activation;
  out.encoder = clone_encoder(p.encoder);
  out.classifier = ClassifierParams{p.classifier.w.clone(), p.classifier.b.clone()};
  return out;
}

std::uint64_t encoder_checksum(const EncoderParams& p) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& t : encoder_tensors(p)) h = fnv1a_mix(h, t.checksum());
  return h;
}

std::uint64_t params_checksum(const ModelParams& p) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& t : model_tensors(p)) h = fnv1a_mix(h, t.checksum());
  return h;
}

EncoderParams bind_encoder(Tape& t, const EncoderParams& p, bool requires_grad) {
  return EncoderParams{t.leaf(p.embedding, requires_grad), t.leaf(p.w1, requires_grad),
                       t.leaf(p.b1, requires_grad), t.leaf(p.w2, requires_grad),
                       t.leaf(p.b2, requires_grad)};
}

ClassifierParams bind_classifier(Tape& t, const ClassifierParams& p, bool requires_grad) {
  return ClassifierParams{t.leaf(p.w, requires_grad), t.leaf(p.b, requires_grad)};
}

namespace {

Tensor apply_activation(Tape& t, const Tensor& x, Activation act) {
  switch (act) {
    case Activation::kTanh: return ops::tanh(t, x);
    case Activation::kSigmoid: return ops::sigmoid(t, x);
    case Activation::kIdentity: return x;
  }
  return x;
}

// x*W + 1*b without broadcasting: the bias row is lifted to B rows through a
// ones-column matmul.
Tensor affine(Tape& t, const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor ones = t.constant(Tensor({x.shape()[0], 1}, 1.0));
  return ops::add(t, ops::matmul(t, x, w), ops::matmul(t, ones, b));
}

}  // namespace

Tensor encode(Tape& t, const EncoderParams& bound, const std::vector<std::vector<int>>& batch,
              Activation activation) {
  if (batch.empty()) throw std::invalid_argument("encode: empty batch");
  std::vector<Tensor> pooled;
  pooled.reserve(batch.size());
  for (const auto& tokens : batch) {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (int id : tokens) {
      if (id != 0) ids.push_back(id);  // drop padding
    }
    if (ids.empty()) throw DataError("encode: sequence contains only padding");
    pooled.push_back(ops::mean_axis(t, ops::gather_rows(t, bound.embedding, ids), 0));
  }
  Tensor x = pooled.size() == 1 ? pooled[0] : ops::concat(t, pooled, 0);
  Tensor h = apply_activation(t, affine(t, x, bound.w1, bound.b1), activation);
  Tensor f = affine(t, h, bound.w2, bound.b2);
  return ops::l2_normalize_rows(t, f);
}

Tensor encode_detached(const EncoderParams& params, const std::vector<std::vector<int>>& batch,
                       Activation activation) {
  Tape local;
  EncoderParams bound = bind_encoder(local, params, false);
  return encode(local, bound, batch, activation).clone();
}

Tensor classify(Tape& t, const ClassifierParams& bound, const Tensor& features) {
  return affine(t, features, bound.w, bound.b);
}

Tensor classification_loss(Tape& t, const Tensor& logits, const std::vector<int>& labels) {
  return ops::cross_entropy_with_logits(t, logits, labels);
}

void momentum_update(EncoderParams& theta_k, const EncoderParams& theta_q, double lambda) {
  if (lambda < 0.0 || lambda > 1.0) {
    throw std::invalid_argument("momentum_update: lambda " + std::to_string(lambda) +
                                " outside [0, 1]");
  }
  auto ks = encoder_tensors(theta_k);
  auto qs = encoder_tensors(theta_q);
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (!same_shape(ks[i], qs[i])) {
      throw std::invalid_argument("momentum_update: structural mismatch at " +
                                  encoder_tensor_names()[i] + ", " + shape_str(ks[i].shape()) +
                                  " vs " + shape_str(qs[i].shape()));
    }
    double* k = ks[i].data();
    const auto& q = qs[i].values();
    for (std::size_t j = 0; j < q.size(); ++j) {
      k[j] = store_rounded(lambda * k[j] + (1.0 - lambda) * q[j]);
    }
  }
}

}  // namespace metadg
