#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "metadg/jury.hpp"
#include "metadg/memory_bank.hpp"
#include "metadg/meta.hpp"
#include "metadg/model.hpp"
#include "metadg/optim.hpp"
#include "metadg/rng.hpp"
#include "metadg/text.hpp"

namespace metadg {

// First-order: meta-train and meta-test gradients are summed parameter-wise
// (the default reading). Exact differentiates through a plain SGD inner step
// and is rejected with an Adam inner optimizer.
enum class MetaMode { kFirstOrder, kExact };
enum class InnerOpt { kAdam, kSgd };

MetaMode parse_meta_mode(const std::string& name);
const char* meta_mode_name(MetaMode mode);
InnerOpt parse_inner_opt(const std::string& name);
const char* inner_opt_name(InnerOpt opt);

struct TrainConfig {
  // episodic loop
  int batch_size = 8;
  int epochs = 15;
  double alpha_target = 1e-5;  // inner rate after warmup
  double beta_target = 1e-5;   // outer rate after warmup
  double warmup_start = 1e-6;  // both rates warm up linearly over the first epoch
  double weight_decay = 5e-4;

  // memory bank
  double momentum_m = 0.2;
  bool renormalize_slots = true;

  // jury mechanism
  double tau = 0.05;  // temperature, shared with the memory loss
  double lambda = 0.999;
  int queue_len = 64;
  bool jury_queue_per_stage = false;  // also enqueue after each meta-train stage
  double repetition_rate = 0.32;

  // ablation switches
  bool use_meta = true;
  bool use_memory = true;
  bool use_jury = true;
  MetaMode meta_mode = MetaMode::kFirstOrder;
  InnerOpt inner_opt = InnerOpt::kAdam;
  int warm_start_iters = 0;  // pooled classification-only steps before memory init

  // model
  int vocab = 0;  // set from the loaded vocabulary
  int n_classes = 2;
  int d_emb = 16;
  int d_h = 32;
  int d_f = 16;
  Activation activation = Activation::kTanh;
  double init_scale = 0.1;

  int max_len = 512;
  std::uint64_t seed = 0;

  void validate(int n_domains) const;  // throws ConfigError
};

struct Batch {
  std::vector<std::vector<int>> tokens;
  std::vector<std::vector<int>> augmented;  // repetition twins; empty when jury is off
  std::vector<int> labels;
  std::vector<int> domains;  // per example; uniform except for pooled batches
};

// One training iteration's data: D-1 meta-train domains and one held-out
// meta-test domain, each with a batch of exactly batch_size examples.
struct Episode {
  std::vector<int> mtr_domains;  // ascending
  int mte_domain = -1;
  std::vector<Batch> mtr_batches;
  Batch mte_batch;
};

// Uniform choice of the held-out domain index.
int split_domains(int n_domains, RngStream& rng);

Batch sample_domain_batch(const DomainDataset& dataset, const TrainConfig& cfg, RngStream& rng,
                          bool augment);

Episode make_episode(const std::vector<DomainDataset>& datasets, const TrainConfig& cfg,
                     RngStream& rng);

struct StageTerms {
  double lc = 0.0;
  double lmem = 0.0;
  double ljury = 0.0;
  double total = 0.0;
};

// Output of one loss stage: the tape-bound scalar, term values for metrics,
// and detached feature copies for the post-step memory/queue updates.
struct StageResult {
  Tensor loss;
  StageTerms terms;
  std::vector<Tensor> query_features;  // per batch, detached
  std::vector<Tensor> key_features;    // per batch, detached; empty when jury is off
};

// Mean over the D-1 meta-train domains of L_C + L_Mem + L_Jury. `theta_k`,
// `bank`, `queues` may be null when the matching flag is off.
StageResult meta_train_loss(Tape& t, const EncoderParams& enc, const ClassifierParams& cls,
                            const EncoderParams* theta_k, const Episode& ep,
                            const MemoryBank* bank, const JuryQueues* queues,
                            const TrainConfig& cfg);

// Same composition on the held-out domain, evaluated at the inner-updated
// parameters; the memory term uses the held-out domain's own slots.
StageResult meta_test_loss(Tape& t, const EncoderParams& enc, const ClassifierParams& cls,
                           const EncoderParams* theta_k_prime, const Episode& ep,
                           const MemoryBank* bank, const JuryQueues* queues,
                           const TrainConfig& cfg);

// One optimizer step on a deep clone with a fresh inner state; the original
// parameters are untouched. Exact mode always takes the plain SGD form
// theta' = theta - alpha*g with no weight decay.
ModelParams inner_update(const ModelParams& params, const std::vector<Tensor>& grads, double alpha,
                         const TrainConfig& cfg);

// Combines both stage gradients per the configured mode and applies one
// outer Adam step. `grad_mtr` recomputes the meta-train gradient at the
// current parameter values (used only in exact mode).
void meta_step(ModelParams& params, const std::vector<Tensor>& g_mtr,
               const std::vector<Tensor>& g_mte_prime, AdamState& outer, double beta, double alpha,
               const TrainConfig& cfg, const GradFn& grad_mtr);

struct IterationMetrics {
  std::int64_t iter = 0;  // 1-based
  int epoch = 0;          // 1-based
  int meta_test_domain = -1;
  StageTerms mtr;
  StageTerms mte;
  double lr = 0.0;  // outer rate this iteration
};

// Phase names arrive in the canonical per-iteration order:
//   meta path:   split, sample, meta_train_loss, [enqueue_mtr], inner_update,
//                [key_ema], meta_test_loss, [enqueue], meta_step,
//                [theta_k_ema], [memory_update]
//   single path: sample, loss, [enqueue], step, [theta_k_ema], [memory_update]
// (bracketed phases appear only when the owning flag is on).
struct TrainHooks {
  std::function<void(const char*)> on_phase;
  std::function<void(const IterationMetrics&)> on_iteration;
};

// Everything that evolves across iterations; checkpoints serialize exactly
// this plus the config echo.
struct TrainState {
  ModelParams params;         // theta_q and theta_C
  EncoderParams key_encoder;  // theta_k; tensors undefined when jury is off
  MemoryBank bank;            // empty when memory is off
  JuryQueues queues;          // empty when jury is off
  AdamState outer;
  RngStream rng;
  std::int64_t iter = 0;  // completed training iterations
};

std::int64_t iters_per_epoch(const std::vector<DomainDataset>& datasets, int batch_size);

// Validates config and data, seeds the rng, initializes parameters, runs the
// optional warm start, then memory and queue initialization, in that order.
TrainState init_train_state(const TrainConfig& cfg, const std::vector<DomainDataset>& datasets);

// Advances the state until epochs*iters_per_epoch iterations are complete,
// or until `stop_after` total iterations when nonnegative. Calling again on
// a partially trained state resumes exactly.
void train(TrainState& state, const TrainConfig& cfg, const std::vector<DomainDataset>& datasets,
           const TrainHooks& hooks = {}, std::int64_t stop_after = -1);

struct EvalMetrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> precision;  // per class
  std::vector<double> recall;
  std::vector<double> f1;
  std::int64_t count = 0;
};

// Argmax predictions in evaluation chunks; ties break toward the lower
// class index.
std::vector<int> predict(const ModelParams& params,
                         const std::vector<std::vector<int>>& tokens, int chunk = 64);

EvalMetrics compute_metrics(const std::vector<int>& predictions, const std::vector<int>& labels,
                            int n_classes);

EvalMetrics evaluate(const ModelParams& params, const DomainDataset& dataset);

}  // namespace metadg
