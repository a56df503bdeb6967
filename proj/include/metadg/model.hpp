#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "metadg/rng.hpp"
#include "metadg/tape.hpp"
#include "metadg/tensor.hpp"

namespace metadg {

enum class Activation { kTanh, kSigmoid, kIdentity };

Activation parse_activation(const std::string& name);
const char* activation_name(Activation act);

struct ModelDims {
  int vocab = 0;
  int d_emb = 16;
  int d_h = 32;
  int d_f = 16;
  int n_classes = 2;
};

// Query/key encoder: embedding mean-pool followed by a two-layer MLP and a
// final L2 row normalization.
struct EncoderParams {
  Tensor embedding;  // vocab x d_emb
  Tensor w1, b1;     // d_emb x d_h, 1 x d_h
  Tensor w2, b2;     // d_h x d_f, 1 x d_f
};

struct ClassifierParams {
  Tensor w, b;  // d_f x n_classes, 1 x n_classes
};

struct ModelParams {
  ModelDims dims;
  Activation activation = Activation::kTanh;
  EncoderParams encoder;
  ClassifierParams classifier;
};

// Weights are normal(0, init_scale), biases zero; draw order is fixed so a
// seed pins the whole initialization.
ModelParams init_params(const ModelDims& dims, Activation activation, RngStream& rng,
                        double init_scale = 0.1);

// Flat handle views (shared storage) in a fixed documented order, paired with
// the names used by checkpoints and diagnostics.
std::vector<Tensor> encoder_tensors(const EncoderParams& p);
std::vector<Tensor> model_tensors(const ModelParams& p);
const std::vector<std::string>& encoder_tensor_names();
const std::vector<std::string>& model_tensor_names();

EncoderParams clone_encoder(const EncoderParams& p);
ModelParams clone_params(const ModelParams& p);
std::uint64_t encoder_checksum(const EncoderParams& p);
std::uint64_t params_checksum(const ModelParams& p);

// Tape-bound views of the same storage.
EncoderParams bind_encoder(Tape& t, const EncoderParams& p, bool requires_grad);
ClassifierParams bind_classifier(Tape& t, const ClassifierParams& p, bool requires_grad);

// B x d_f unit-norm feature matrix. Padding ids are dropped from the mean.
Tensor encode(Tape& t, const EncoderParams& bound, const std::vector<std::vector<int>>& batch,
              Activation activation);

// Same forward pass without any gradient bookkeeping (private tape); used for
// the key encoder and evaluation.
Tensor encode_detached(const EncoderParams& params, const std::vector<std::vector<int>>& batch,
                       Activation activation);

Tensor classify(Tape& t, const ClassifierParams& bound, const Tensor& features);

Tensor classification_loss(Tape& t, const Tensor& logits, const std::vector<int>& labels);

// EMA: k <- lambda*k + (1-lambda)*q elementwise, outside any tape.
void momentum_update(EncoderParams& theta_k, const EncoderParams& theta_q, double lambda);

}  // namespace metadg
