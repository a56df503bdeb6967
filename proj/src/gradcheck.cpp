#include "metadg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "metadg/common.hpp"
#include "metadg/engine.hpp"
#include "metadg/tape.hpp"

namespace metadg {

namespace {

// Restores the global precision on scope exit; checks demand 64-bit.
struct PrecisionGuard {
  Precision saved = default_precision();
  PrecisionGuard() { set_default_precision(Precision::f64); }
  ~PrecisionGuard() { set_default_precision(saved); }
};

std::vector<DomainDataset> tiny_datasets(int domains, int vocab, RngStream& rng) {
  std::vector<DomainDataset> out(static_cast<std::size_t>(domains));
  for (int d = 0; d < domains; ++d) {
    DomainDataset& ds = out[static_cast<std::size_t>(d)];
    ds.domain = d;
    for (int cls = 0; cls < 2; ++cls) {
      for (int i = 0; i < 6; ++i) {
        Example e;
        const int len = 5 + static_cast<int>(rng.below(3));
        for (int j = 0; j < len; ++j) {
          e.tokens.push_back(2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab - 2))));
        }
        e.label = cls;
        e.domain = d;
        ds.examples.push_back(std::move(e));
      }
    }
    ds.rebuild_index(2);
  }
  return out;
}

using LossBuilder = std::function<Tensor(Tape&, EncoderParams&, ClassifierParams&)>;

GradcheckTerm check_term(const std::string& name, ModelParams& point, const LossBuilder& build,
                         double tolerance, double h, const GradTamper& tamper) {
  GradcheckTerm term;
  term.name = name;

  Tape t;
  EncoderParams enc = bind_encoder(t, point.encoder, true);
  ClassifierParams cls = bind_classifier(t, point.classifier, true);
  Tensor loss = build(t, enc, cls);
  GradMap gmap = t.backward(loss);
  std::vector<Tensor> bound = encoder_tensors(enc);
  bound.push_back(cls.w);
  bound.push_back(cls.b);
  std::vector<Tensor> grads;
  for (const Tensor& b : bound) grads.push_back(gmap.for_tensor(b).clone());
  if (tamper) tamper(name, grads);

  const auto scalar = [&]() {
    Tape ft;
    EncoderParams fenc = bind_encoder(ft, point.encoder, false);
    ClassifierParams fcls = bind_classifier(ft, point.classifier, false);
    return build(ft, fenc, fcls).item();
  };

  std::vector<Tensor> storage = model_tensors(point);
  for (std::size_t k = 0; k < storage.size(); ++k) {
    double* vals = storage[k].data();
    for (std::size_t i = 0; i < storage[k].values().size(); ++i) {
      const double x0 = vals[i];
      vals[i] = x0 + h;
      const double lp = scalar();
      vals[i] = x0 - h;
      const double lm = scalar();
      vals[i] = x0;
      const double fd = (lp - lm) / (2.0 * h);
      const double a = grads[k].values()[i];
      const double denom = std::max(std::abs(a), std::abs(fd));
      if (denom <= 1e-8) continue;
      term.max_rel_err = std::max(term.max_rel_err, std::abs(a - fd) / denom);
      ++term.checked_coords;
    }
  }
  term.pass = term.max_rel_err <= tolerance;
  return term;
}

}  // namespace

GradcheckReport run_gradcheck(std::uint64_t seed, double tolerance, double h,
                              const GradTamper& tamper) {
  if (tolerance <= 0.0 || h <= 0.0) {
    throw std::invalid_argument("run_gradcheck: tolerance and step must be positive");
  }
  PrecisionGuard precision;

  TrainConfig cfg;
  cfg.batch_size = 3;
  cfg.vocab = 20;
  cfg.n_classes = 2;
  cfg.d_emb = 4;
  cfg.d_h = 5;
  cfg.d_f = 4;
  cfg.queue_len = 6;
  cfg.init_scale = 0.3;
  cfg.max_len = 8;
  cfg.seed = seed;

  RngStream data_rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<DomainDataset> datasets = tiny_datasets(3, cfg.vocab, data_rng);
  TrainState st = init_train_state(cfg, datasets);

  // Give the queues real encoded content so the contrastive targets are not
  // just the random prefill.
  for (const DomainDataset& ds : datasets) {
    Batch b = sample_domain_batch(ds, cfg, st.rng, true);
    st.queues.enqueue(encode_detached(st.key_encoder, b.augmented, cfg.activation), b.labels);
  }

  Episode ep = make_episode(datasets, cfg, st.rng);
  const Batch& first = ep.mtr_batches[0];
  const int first_domain = ep.mtr_domains[0];
  const Tensor jury_keys = encode_detached(st.key_encoder, first.augmented, cfg.activation);

  GradcheckReport report;
  report.tolerance = tolerance;

  report.terms.push_back(check_term(
      "L_C", st.params,
      [&](Tape& t, EncoderParams& enc, ClassifierParams& cls) {
        return classification_loss(t, classify(t, cls, encode(t, enc, first.tokens, cfg.activation)),
                                   first.labels);
      },
      tolerance, h, tamper));

  report.terms.push_back(check_term(
      "L_Mem", st.params,
      [&](Tape& t, EncoderParams& enc, ClassifierParams&) {
        Tensor feats = encode(t, enc, first.tokens, cfg.activation);
        return memory_similarity_loss(t, st.bank, feats, first.labels, first_domain);
      },
      tolerance, h, tamper));

  report.terms.push_back(check_term(
      "L_Jury", st.params,
      [&](Tape& t, EncoderParams& enc, ClassifierParams&) {
        Tensor feats = encode(t, enc, first.tokens, cfg.activation);
        return jury_loss(t, st.queues, feats, jury_keys, first.labels, cfg.tau);
      },
      tolerance, h, tamper));

  report.terms.push_back(check_term(
      "L_mtr", st.params,
      [&](Tape& t, EncoderParams& enc, ClassifierParams& cls) {
        return meta_train_loss(t, enc, cls, &st.key_encoder, ep, &st.bank, &st.queues, cfg).loss;
      },
      tolerance, h, tamper));

  // The combined held-out loss is checked at the inner-updated parameters,
  // the point where its gradient is actually taken during training.
  std::vector<Tensor> g_mtr;
  {
    Tape t;
    EncoderParams enc = bind_encoder(t, st.params.encoder, true);
    ClassifierParams cls = bind_classifier(t, st.params.classifier, true);
    StageResult r = meta_train_loss(t, enc, cls, &st.key_encoder, ep, &st.bank, &st.queues, cfg);
    GradMap g = t.backward(r.loss);
    std::vector<Tensor> bound = encoder_tensors(enc);
    bound.push_back(cls.w);
    bound.push_back(cls.b);
    for (const Tensor& b : bound) g_mtr.push_back(g.for_tensor(b));
  }
  ModelParams theta_prime = inner_update(st.params, g_mtr, 1e-3, cfg);
  EncoderParams key_prime = clone_encoder(st.key_encoder);
  momentum_update(key_prime, theta_prime.encoder, cfg.lambda);

  report.terms.push_back(check_term(
      "L_mte", theta_prime,
      [&](Tape& t, EncoderParams& enc, ClassifierParams& cls) {
        return meta_test_loss(t, enc, cls, &key_prime, ep, &st.bank, &st.queues, cfg).loss;
      },
      tolerance, h, tamper));

  report.pass = true;
  for (const GradcheckTerm& term : report.terms) report.pass = report.pass && term.pass;
  return report;
}

}  // namespace metadg
