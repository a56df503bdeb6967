#include "metadg/engine.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

#include "metadg/common.hpp"
#include "metadg/tape.hpp"

namespace metadg {

MetaMode parse_meta_mode(const std::string& name) {
  if (name == "first_order") return MetaMode::kFirstOrder;
  if (name == "exact") return MetaMode::kExact;
  throw ConfigError("unknown meta mode '" + name + "' (first_order, exact)");
}

const char* meta_mode_name(MetaMode mode) {
  return mode == MetaMode::kFirstOrder ? "first_order" : "exact";
}

InnerOpt parse_inner_opt(const std::string& name) {
  if (name == "adam") return InnerOpt::kAdam;
  if (name == "sgd") return InnerOpt::kSgd;
  throw ConfigError("unknown inner optimizer '" + name + "' (adam, sgd)");
}

const char* inner_opt_name(InnerOpt opt) { return opt == InnerOpt::kAdam ? "adam" : "sgd"; }

void TrainConfig::validate(int n_domains) const {
  if (n_domains < 2) {
    throw ConfigError("training requires at least 2 source domains, got " +
                      std::to_string(n_domains));
  }
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (alpha_target <= 0.0 || beta_target <= 0.0 || warmup_start <= 0.0) {
    throw ConfigError("learning rates must be positive");
  }
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be nonnegative");
  if (momentum_m < 0.0 || momentum_m > 1.0) throw ConfigError("momentum_m outside [0, 1]");
  if (tau <= 0.0) throw ConfigError("tau must be positive");
  if (lambda < 0.0 || lambda > 1.0) throw ConfigError("lambda outside [0, 1]");
  if (queue_len < 1) throw ConfigError("queue_len must be at least 1");
  if (repetition_rate < 0.0) throw ConfigError("repetition_rate must be nonnegative");
  if (warm_start_iters < 0) throw ConfigError("warm_start_iters must be nonnegative");
  if (vocab < 2) throw ConfigError("vocabulary size not set (needs the reserved ids at least)");
  if (n_classes < 2) throw ConfigError("n_classes must be at least 2");
  if (d_emb < 1 || d_h < 1 || d_f < 1) throw ConfigError("model dimensions must be positive");
  if (init_scale < 0.0) throw ConfigError("init_scale must be nonnegative");
  if (max_len < 1) throw ConfigError("max_len must be at least 1");
  if (meta_mode == MetaMode::kExact && inner_opt == InnerOpt::kAdam) {
    throw ConfigError(
        "exact meta gradients require inner_opt=sgd (differentiating through Adam's moment "
        "state is undefined)");
  }
}

int split_domains(int n_domains, RngStream& rng) {
  if (n_domains < 2) {
    throw ConfigError("domain split requires at least 2 domains, got " +
                      std::to_string(n_domains));
  }
  return static_cast<int>(rng.below(static_cast<std::uint64_t>(n_domains)));
}

Batch sample_domain_batch(const DomainDataset& dataset, const TrainConfig& cfg, RngStream& rng,
                          bool augment) {
  Batch b;
  const std::vector<Example> drawn = sample_batch(dataset, cfg.batch_size, rng);
  b.tokens.reserve(drawn.size());
  b.labels.reserve(drawn.size());
  b.domains.reserve(drawn.size());
  for (const Example& e : drawn) {
    b.tokens.push_back(e.tokens);
    b.labels.push_back(e.label);
    b.domains.push_back(e.domain);
  }
  if (augment) {
    b.augmented.reserve(b.tokens.size());
    for (const auto& toks : b.tokens) {
      b.augmented.push_back(word_repetition(toks, cfg.repetition_rate, rng));
    }
  }
  return b;
}

namespace {

// Sampling order is fixed: meta-train domains ascending, then the held-out
// domain, with each example's augmentation drawn right after its batch.
void fill_episode(Episode& ep, const std::vector<DomainDataset>& datasets,
                  const TrainConfig& cfg, RngStream& rng) {
  ep.mtr_domains.clear();
  ep.mtr_batches.clear();
  for (int d = 0; d < static_cast<int>(datasets.size()); ++d) {
    if (d == ep.mte_domain) continue;
    ep.mtr_domains.push_back(d);
    ep.mtr_batches.push_back(
        sample_domain_batch(datasets[static_cast<std::size_t>(d)], cfg, rng, cfg.use_jury));
  }
  ep.mte_batch = sample_domain_batch(datasets[static_cast<std::size_t>(ep.mte_domain)], cfg, rng,
                                     cfg.use_jury);
}

struct DomainLoss {
  Tensor loss;
  StageTerms terms;
  Tensor query;  // detached
  Tensor keys;   // detached; undefined when jury is off
};

DomainLoss domain_stage_loss(Tape& t, const EncoderParams& enc, const ClassifierParams& cls,
                             const EncoderParams* theta_k, const Batch& batch, int domain,
                             const MemoryBank* bank, const JuryQueues* queues,
                             const TrainConfig& cfg) {
  DomainLoss out;
  Tensor feats = encode(t, enc, batch.tokens, cfg.activation);
  Tensor logits = classify(t, cls, feats);
  Tensor lc = classification_loss(t, logits, batch.labels);
  out.terms.lc = lc.item();
  Tensor total = lc;
  if (cfg.use_memory) {
    Tensor lmem = memory_similarity_loss(t, *bank, feats, batch.labels, domain);
    out.terms.lmem = lmem.item();
    total = ops::add(t, total, lmem);
  }
  if (cfg.use_jury) {
    out.keys = encode_detached(*theta_k, batch.augmented, cfg.activation);
    Tensor lj = jury_loss(t, *queues, feats, out.keys, batch.labels, cfg.tau);
    out.terms.ljury = lj.item();
    total = ops::add(t, total, lj);
  }
  out.terms.total = total.item();
  out.loss = total;
  out.query = feats.clone();
  return out;
}

}  // namespace

Episode make_episode(const std::vector<DomainDataset>& datasets, const TrainConfig& cfg,
                     RngStream& rng) {
  Episode ep;
  ep.mte_domain = split_domains(static_cast<int>(datasets.size()), rng);
  fill_episode(ep, datasets, cfg, rng);
  return ep;
}

StageResult meta_train_loss(Tape& t, const EncoderParams& enc, const ClassifierParams& cls,
                            const EncoderParams* theta_k, const Episode& ep,
                            const MemoryBank* bank, const JuryQueues* queues,
                            const TrainConfig& cfg) {
  if (ep.mtr_domains.empty() || ep.mtr_domains.size() != ep.mtr_batches.size()) {
    throw std::invalid_argument("meta_train_loss: episode has no meta-train batches");
  }
  StageResult r;
  Tensor sum;
  const double n = static_cast<double>(ep.mtr_domains.size());
  for (std::size_t i = 0; i < ep.mtr_domains.size(); ++i) {
    DomainLoss dl = domain_stage_loss(t, enc, cls, theta_k, ep.mtr_batches[i], ep.mtr_domains[i],
                                      bank, queues, cfg);
    sum = sum.defined() ? ops::add(t, sum, dl.loss) : dl.loss;
    r.terms.lc += dl.terms.lc / n;
    r.terms.lmem += dl.terms.lmem / n;
    r.terms.ljury += dl.terms.ljury / n;
    r.query_features.push_back(dl.query);
    if (cfg.use_jury) r.key_features.push_back(dl.keys);
  }
  r.loss = ep.mtr_domains.size() == 1 ? sum : ops::scalar_mul(t, sum, 1.0 / n);
  r.terms.total = r.loss.item();
  return r;
}

StageResult meta_test_loss(Tape& t, const EncoderParams& enc, const ClassifierParams& cls,
                           const EncoderParams* theta_k_prime, const Episode& ep,
                           const MemoryBank* bank, const JuryQueues* queues,
                           const TrainConfig& cfg) {
  if (ep.mte_domain < 0 || ep.mte_batch.tokens.empty()) {
    throw std::invalid_argument("meta_test_loss: episode has no meta-test batch");
  }
  StageResult r;
  DomainLoss dl = domain_stage_loss(t, enc, cls, theta_k_prime, ep.mte_batch, ep.mte_domain, bank,
                                    queues, cfg);
  r.loss = dl.loss;
  r.terms = dl.terms;
  r.query_features.push_back(dl.query);
  if (cfg.use_jury) r.key_features.push_back(dl.keys);
  return r;
}

namespace {

std::vector<Tensor> bound_model_tensors(const EncoderParams& enc, const ClassifierParams& cls) {
  auto out = encoder_tensors(enc);
  out.push_back(cls.w);
  out.push_back(cls.b);
  return out;
}

std::vector<Tensor> collect_grads(const GradMap& g, const std::vector<Tensor>& bound) {
  std::vector<Tensor> out;
  out.reserve(bound.size());
  for (const auto& t : bound) out.push_back(g.for_tensor(t));
  return out;
}

}  // namespace

ModelParams inner_update(const ModelParams& params, const std::vector<Tensor>& grads, double alpha,
                         const TrainConfig& cfg) {
  ModelParams theta = clone_params(params);
  if (alpha == 0.0) return theta;  // null step
  std::vector<Tensor> tensors = model_tensors(theta);
  if (cfg.meta_mode == MetaMode::kExact) {
    sgd_step(tensors, grads, alpha, 0.0, model_tensor_names());
  } else if (cfg.inner_opt == InnerOpt::kAdam) {
    AdamState fresh;
    adam_step(tensors, grads, fresh, alpha, cfg.weight_decay, model_tensor_names());
  } else {
    sgd_step(tensors, grads, alpha, cfg.weight_decay, model_tensor_names());
  }
  return theta;
}

void meta_step(ModelParams& params, const std::vector<Tensor>& g_mtr,
               const std::vector<Tensor>& g_mte_prime, AdamState& outer, double beta, double alpha,
               const TrainConfig& cfg, const GradFn& grad_mtr) {
  std::vector<Tensor> tensors = model_tensors(params);
  std::vector<Tensor> g;
  if (cfg.meta_mode == MetaMode::kFirstOrder) {
    g = first_order_meta_gradient(g_mtr, g_mte_prime);
  } else {
    if (!grad_mtr) {
      throw std::invalid_argument("meta_step: exact mode needs the meta-train gradient functor");
    }
    g = exact_meta_gradient(grad_mtr, tensors, g_mtr, g_mte_prime, alpha);
  }
  adam_step(tensors, g, outer, beta, cfg.weight_decay, model_tensor_names());
}

std::int64_t iters_per_epoch(const std::vector<DomainDataset>& datasets, int batch_size) {
  if (datasets.empty()) throw ConfigError("iters_per_epoch: no datasets");
  std::size_t min_size = datasets.front().size();
  for (const auto& ds : datasets) min_size = std::min(min_size, ds.size());
  if (min_size == 0) throw DataError("iters_per_epoch: a source domain is empty");
  const std::int64_t b = batch_size;
  return (static_cast<std::int64_t>(min_size) + b - 1) / b;
}

namespace {

void check_datasets(const TrainConfig& cfg, const std::vector<DomainDataset>& datasets) {
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    const auto& ds = datasets[d];
    if (ds.domain != static_cast<int>(d)) {
      throw std::invalid_argument("dataset at position " + std::to_string(d) + " is tagged domain " +
                                  std::to_string(ds.domain) + "; retag datasets to their position");
    }
    if (ds.examples.empty()) {
      throw DataError("domain " + std::to_string(ds.domain) + " has no examples");
    }
    for (const Example& e : ds.examples) {
      if (e.domain != ds.domain) {
        throw std::invalid_argument("example in domain " + std::to_string(ds.domain) +
                                    " is tagged domain " + std::to_string(e.domain));
      }
    }
    if (ds.by_class.size() != static_cast<std::size_t>(cfg.n_classes) || !ds.index_consistent()) {
      throw std::invalid_argument("dataset index for domain " + std::to_string(ds.domain) +
                                  " not built for " + std::to_string(cfg.n_classes) + " classes");
    }
  }
}

DomainDataset build_pooled(const std::vector<DomainDataset>& datasets) {
  DomainDataset pool;
  pool.domain = -1;
  for (const auto& ds : datasets) {
    pool.examples.insert(pool.examples.end(), ds.examples.begin(), ds.examples.end());
  }
  return pool;
}

// Grouped row indices by domain tag, ascending, preserving batch order
// within a group.
std::map<int, std::vector<int>> rows_by_domain(const Batch& b) {
  std::map<int, std::vector<int>> groups;
  for (std::size_t i = 0; i < b.domains.size(); ++i) {
    groups[b.domains[i]].push_back(static_cast<int>(i));
  }
  return groups;
}

Tensor gather_values(const Tensor& mat, const std::vector<int>& rows) {
  const std::int64_t cols = mat.shape()[1];
  Tensor out = Tensor::zeros({static_cast<std::int64_t>(rows.size()), cols});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double* src = mat.values().data() + static_cast<std::int64_t>(rows[i]) * cols;
    std::copy(src, src + cols, out.data() + static_cast<std::int64_t>(i) * cols);
  }
  return out;
}

template <typename T>
std::vector<T> subset(const std::vector<T>& v, const std::vector<int>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(v[static_cast<std::size_t>(i)]);
  return out;
}

void check_terms_finite(const StageTerms& terms, std::int64_t iter, const char* stage) {
  const char* name = nullptr;
  if (!std::isfinite(terms.lc)) name = "L_C";
  else if (!std::isfinite(terms.lmem)) name = "L_Mem";
  else if (!std::isfinite(terms.ljury)) name = "L_Jury";
  else if (!std::isfinite(terms.total)) name = "total loss";
  if (name != nullptr) {
    throw NumericalError("iteration " + std::to_string(iter) + " (" + stage +
                         "): non-finite " + name + " term");
  }
}

struct LoopContext {
  const TrainConfig& cfg;
  const std::vector<DomainDataset>& datasets;
  const TrainHooks& hooks;
  const DomainDataset& pooled;
  double alpha = 0.0;
  double beta = 0.0;
};

void run_meta_iteration(TrainState& state, const LoopContext& ctx, IterationMetrics& m) {
  const TrainConfig& cfg = ctx.cfg;
  auto phase = [&](const char* name) {
    if (ctx.hooks.on_phase) ctx.hooks.on_phase(name);
  };
  const MemoryBank* bank = cfg.use_memory ? &state.bank : nullptr;
  const JuryQueues* queues = cfg.use_jury ? &state.queues : nullptr;
  const EncoderParams* theta_k = cfg.use_jury ? &state.key_encoder : nullptr;

  phase("split");
  Episode ep;
  ep.mte_domain = split_domains(static_cast<int>(ctx.datasets.size()), state.rng);
  m.meta_test_domain = ep.mte_domain;

  phase("sample");
  fill_episode(ep, ctx.datasets, cfg, state.rng);

  phase("meta_train_loss");
  Tape t1;
  EncoderParams enc1 = bind_encoder(t1, state.params.encoder, true);
  ClassifierParams cls1 = bind_classifier(t1, state.params.classifier, true);
  StageResult mtr;
  std::vector<Tensor> g_mtr;
  try {
    mtr = meta_train_loss(t1, enc1, cls1, theta_k, ep, bank, queues, cfg);
    g_mtr = collect_grads(t1.backward(mtr.loss), bound_model_tensors(enc1, cls1));
  } catch (const NumericalError& e) {
    throw NumericalError("iteration " + std::to_string(m.iter) + " (meta-train): " + e.what());
  }
  check_terms_finite(mtr.terms, m.iter, "meta-train");
  m.mtr = mtr.terms;

  if (cfg.use_jury && cfg.jury_queue_per_stage) {
    phase("enqueue_mtr");
    for (std::size_t i = 0; i < ep.mtr_domains.size(); ++i) {
      state.queues.enqueue(mtr.key_features[i], ep.mtr_batches[i].labels);
    }
  }

  const std::uint64_t isolation = params_checksum(state.params);

  phase("inner_update");
  ModelParams theta_prime = inner_update(state.params, g_mtr, ctx.alpha, cfg);

  EncoderParams key_prime;
  const EncoderParams* key_prime_ptr = nullptr;
  if (cfg.use_jury) {
    phase("key_ema");
    key_prime = clone_encoder(state.key_encoder);
    momentum_update(key_prime, theta_prime.encoder, cfg.lambda);
    key_prime_ptr = &key_prime;
  }

  phase("meta_test_loss");
  Tape t2;
  EncoderParams enc2 = bind_encoder(t2, theta_prime.encoder, true);
  ClassifierParams cls2 = bind_classifier(t2, theta_prime.classifier, true);
  StageResult mte;
  std::vector<Tensor> g_mte;
  try {
    mte = meta_test_loss(t2, enc2, cls2, key_prime_ptr, ep, bank, queues, cfg);
    g_mte = collect_grads(t2.backward(mte.loss), bound_model_tensors(enc2, cls2));
  } catch (const NumericalError& e) {
    throw NumericalError("iteration " + std::to_string(m.iter) + " (meta-test): " + e.what());
  }
  check_terms_finite(mte.terms, m.iter, "meta-test");
  m.mte = mte.terms;

  if (params_checksum(state.params) != isolation) {
    throw std::logic_error("meta-test stage mutated the original parameters");
  }

  if (cfg.use_jury) {
    phase("enqueue");
    state.queues.enqueue(mte.key_features[0], ep.mte_batch.labels);
  }

  phase("meta_step");
  GradFn grad_fn;
  if (cfg.meta_mode == MetaMode::kExact) {
    grad_fn = [&state, &ep, &cfg, theta_k, bank, queues]() {
      Tape t;
      EncoderParams enc = bind_encoder(t, state.params.encoder, true);
      ClassifierParams cls = bind_classifier(t, state.params.classifier, true);
      StageResult r = meta_train_loss(t, enc, cls, theta_k, ep, bank, queues, cfg);
      return collect_grads(t.backward(r.loss), bound_model_tensors(enc, cls));
    };
  }
  meta_step(state.params, g_mtr, g_mte, state.outer, ctx.beta, ctx.alpha, cfg, grad_fn);

  if (cfg.use_jury) {
    phase("theta_k_ema");
    momentum_update(state.key_encoder, state.params.encoder, cfg.lambda);
  }

  if (cfg.use_memory) {
    phase("memory_update");
    for (std::size_t i = 0; i < ep.mtr_domains.size(); ++i) {
      state.bank.update(mtr.query_features[i], ep.mtr_batches[i].labels, ep.mtr_domains[i]);
    }
    state.bank.update(mte.query_features[0], ep.mte_batch.labels, ep.mte_domain);
  }
}

void run_single_iteration(TrainState& state, const LoopContext& ctx, IterationMetrics& m) {
  const TrainConfig& cfg = ctx.cfg;
  auto phase = [&](const char* name) {
    if (ctx.hooks.on_phase) ctx.hooks.on_phase(name);
  };

  phase("sample");
  Batch b = sample_domain_batch(ctx.pooled, cfg, state.rng, cfg.use_jury);

  phase("loss");
  Tape t;
  EncoderParams enc = bind_encoder(t, state.params.encoder, true);
  ClassifierParams cls = bind_classifier(t, state.params.classifier, true);
  StageTerms terms;
  Tensor query;
  Tensor keys;
  std::vector<Tensor> grads;
  try {
    Tensor feats = encode(t, enc, b.tokens, cfg.activation);
    Tensor logits = classify(t, cls, feats);
    Tensor lc = classification_loss(t, logits, b.labels);
    terms.lc = lc.item();
    Tensor total = lc;
    if (cfg.use_memory) {
      // Pooled batches mix domains; each group scores against its own
      // domain's slots, weighted back to a per-example mean.
      Tensor lmem_sum;
      const double batch_n = static_cast<double>(b.labels.size());
      for (const auto& [domain, rows] : rows_by_domain(b)) {
        Tensor grp = ops::gather_rows(t, feats, rows);
        Tensor lm = memory_similarity_loss(t, state.bank, grp, subset(b.labels, rows), domain);
        Tensor weighted = ops::scalar_mul(t, lm, static_cast<double>(rows.size()) / batch_n);
        lmem_sum = lmem_sum.defined() ? ops::add(t, lmem_sum, weighted) : weighted;
      }
      terms.lmem = lmem_sum.item();
      total = ops::add(t, total, lmem_sum);
    }
    if (cfg.use_jury) {
      keys = encode_detached(state.key_encoder, b.augmented, cfg.activation);
      Tensor lj = jury_loss(t, state.queues, feats, keys, b.labels, cfg.tau);
      terms.ljury = lj.item();
      total = ops::add(t, total, lj);
    }
    terms.total = total.item();
    grads = collect_grads(t.backward(total), bound_model_tensors(enc, cls));
    query = feats.clone();
  } catch (const NumericalError& e) {
    throw NumericalError("iteration " + std::to_string(m.iter) + " (single-stage): " + e.what());
  }
  check_terms_finite(terms, m.iter, "single-stage");
  m.mtr = terms;
  m.meta_test_domain = -1;

  if (cfg.use_jury) {
    phase("enqueue");
    state.queues.enqueue(keys, b.labels);
  }

  phase("step");
  std::vector<Tensor> tensors = model_tensors(state.params);
  adam_step(tensors, grads, state.outer, ctx.beta, cfg.weight_decay, model_tensor_names());

  if (cfg.use_jury) {
    phase("theta_k_ema");
    momentum_update(state.key_encoder, state.params.encoder, cfg.lambda);
  }

  if (cfg.use_memory) {
    phase("memory_update");
    for (const auto& [domain, rows] : rows_by_domain(b)) {
      state.bank.update(gather_values(query, rows), subset(b.labels, rows), domain);
    }
  }
}

}  // namespace

TrainState init_train_state(const TrainConfig& cfg, const std::vector<DomainDataset>& datasets) {
  cfg.validate(static_cast<int>(datasets.size()));
  check_datasets(cfg, datasets);

  TrainState st;
  st.rng = RngStream(cfg.seed);
  const ModelDims dims{cfg.vocab, cfg.d_emb, cfg.d_h, cfg.d_f, cfg.n_classes};
  st.params = init_params(dims, cfg.activation, st.rng, cfg.init_scale);

  if (cfg.warm_start_iters > 0) {
    const DomainDataset pooled = build_pooled(datasets);
    AdamState warm;
    for (int i = 0; i < cfg.warm_start_iters; ++i) {
      Batch b = sample_domain_batch(pooled, cfg, st.rng, false);
      Tape t;
      EncoderParams enc = bind_encoder(t, st.params.encoder, true);
      ClassifierParams cls = bind_classifier(t, st.params.classifier, true);
      Tensor loss =
          classification_loss(t, classify(t, cls, encode(t, enc, b.tokens, cfg.activation)),
                              b.labels);
      std::vector<Tensor> grads = collect_grads(t.backward(loss), bound_model_tensors(enc, cls));
      std::vector<Tensor> tensors = model_tensors(st.params);
      adam_step(tensors, grads, warm, cfg.beta_target, cfg.weight_decay, model_tensor_names());
    }
  }

  if (cfg.use_jury) st.key_encoder = clone_encoder(st.params.encoder);
  if (cfg.use_memory) {
    MemoryConfig mc;
    mc.momentum = cfg.momentum_m;
    mc.tau = cfg.tau;
    mc.renormalize = cfg.renormalize_slots;
    st.bank = init_memory(st.params, datasets, mc);
  }
  if (cfg.use_jury) {
    st.queues = JuryQueues(cfg.n_classes, cfg.queue_len, cfg.d_f, st.rng);
  }
  return st;
}

void train(TrainState& state, const TrainConfig& cfg, const std::vector<DomainDataset>& datasets,
           const TrainHooks& hooks, std::int64_t stop_after) {
  cfg.validate(static_cast<int>(datasets.size()));
  check_datasets(cfg, datasets);
  const std::int64_t ipe = iters_per_epoch(datasets, cfg.batch_size);
  const std::int64_t total = static_cast<std::int64_t>(cfg.epochs) * ipe;
  const std::int64_t bound = stop_after >= 0 ? std::min(stop_after, total) : total;

  const LrSchedule alpha_s{cfg.warmup_start, cfg.alpha_target, ipe};
  const LrSchedule beta_s{cfg.warmup_start, cfg.beta_target, ipe};
  const DomainDataset pooled = cfg.use_meta ? DomainDataset{} : build_pooled(datasets);

  LoopContext ctx{cfg, datasets, hooks, pooled};
  while (state.iter < bound) {
    IterationMetrics m;
    m.iter = state.iter + 1;
    m.epoch = static_cast<int>((m.iter - 1) / ipe) + 1;
    ctx.alpha = lr_at(alpha_s, m.iter - 1);
    ctx.beta = lr_at(beta_s, m.iter - 1);
    m.lr = ctx.beta;
    if (cfg.use_meta) {
      run_meta_iteration(state, ctx, m);
    } else {
      run_single_iteration(state, ctx, m);
    }
    state.iter = m.iter;
    if (hooks.on_iteration) hooks.on_iteration(m);
  }
}

std::vector<int> predict(const ModelParams& params, const std::vector<std::vector<int>>& tokens,
                         int chunk) {
  if (chunk < 1) throw std::invalid_argument("predict: chunk must be positive");
  std::vector<int> preds;
  preds.reserve(tokens.size());
  for (std::size_t start = 0; start < tokens.size(); start += static_cast<std::size_t>(chunk)) {
    const std::size_t stop = std::min(tokens.size(), start + static_cast<std::size_t>(chunk));
    std::vector<std::vector<int>> slab(tokens.begin() + static_cast<std::ptrdiff_t>(start),
                                       tokens.begin() + static_cast<std::ptrdiff_t>(stop));
    Tape t;
    EncoderParams enc = bind_encoder(t, params.encoder, false);
    ClassifierParams cls = bind_classifier(t, params.classifier, false);
    Tensor logits = classify(t, cls, encode(t, enc, slab, params.activation));
    const std::int64_t n_classes = logits.shape()[1];
    for (std::int64_t i = 0; i < logits.shape()[0]; ++i) {
      int best = 0;
      for (std::int64_t c = 1; c < n_classes; ++c) {
        if (logits.at(i, c) > logits.at(i, best)) best = static_cast<int>(c);
      }
      preds.push_back(best);
    }
  }
  return preds;
}

EvalMetrics compute_metrics(const std::vector<int>& predictions, const std::vector<int>& labels,
                            int n_classes) {
  if (predictions.size() != labels.size()) {
    throw std::invalid_argument("compute_metrics: " + std::to_string(predictions.size()) +
                                " predictions vs " + std::to_string(labels.size()) + " labels");
  }
  if (predictions.empty()) throw std::invalid_argument("compute_metrics: empty input");
  if (n_classes < 2) throw std::invalid_argument("compute_metrics: need at least 2 classes");

  std::vector<std::int64_t> tp(static_cast<std::size_t>(n_classes), 0);
  std::vector<std::int64_t> fp(static_cast<std::size_t>(n_classes), 0);
  std::vector<std::int64_t> fn(static_cast<std::size_t>(n_classes), 0);
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const int p = predictions[i];
    const int y = labels[i];
    if (p < 0 || p >= n_classes || y < 0 || y >= n_classes) {
      throw std::invalid_argument("compute_metrics: class id out of range at row " +
                                  std::to_string(i));
    }
    if (p == y) {
      ++correct;
      ++tp[static_cast<std::size_t>(p)];
    } else {
      ++fp[static_cast<std::size_t>(p)];
      ++fn[static_cast<std::size_t>(y)];
    }
  }

  EvalMetrics m;
  m.count = static_cast<std::int64_t>(predictions.size());
  m.accuracy = static_cast<double>(correct) / static_cast<double>(m.count);
  m.precision.resize(static_cast<std::size_t>(n_classes), 0.0);
  m.recall.resize(static_cast<std::size_t>(n_classes), 0.0);
  m.f1.resize(static_cast<std::size_t>(n_classes), 0.0);
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < static_cast<std::size_t>(n_classes); ++c) {
    const double denom_p = static_cast<double>(tp[c] + fp[c]);
    const double denom_r = static_cast<double>(tp[c] + fn[c]);
    m.precision[c] = denom_p > 0.0 ? static_cast<double>(tp[c]) / denom_p : 0.0;
    m.recall[c] = denom_r > 0.0 ? static_cast<double>(tp[c]) / denom_r : 0.0;
    const double pr = m.precision[c] + m.recall[c];
    m.f1[c] = pr > 0.0 ? 2.0 * m.precision[c] * m.recall[c] / pr : 0.0;
    f1_sum += m.f1[c];
  }
  m.macro_f1 = f1_sum / static_cast<double>(n_classes);
  return m;
}

EvalMetrics evaluate(const ModelParams& params, const DomainDataset& dataset) {
  if (dataset.examples.empty()) throw DataError("evaluate: empty dataset");
  std::vector<std::vector<int>> tokens;
  std::vector<int> labels;
  tokens.reserve(dataset.examples.size());
  labels.reserve(dataset.examples.size());
  for (const auto& e : dataset.examples) {
    tokens.push_back(e.tokens);
    labels.push_back(e.label);
  }
  return compute_metrics(predict(params, tokens), labels, params.dims.n_classes);
}

}  // namespace metadg
