#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "metadg/config.hpp"
#include "metadg/engine.hpp"
#include "metadg/gradcheck.hpp"

namespace metadg {

// A generated corpus directory, loaded back: the manifest's spec and seed,
// the deterministic vocabulary derived from the spec, and the tokenized
// per-domain datasets with class indices built.
struct LoadedCorpus {
  CorpusSpec spec;
  std::uint64_t seed = 0;
  Vocab vocab;
  std::vector<std::string> files;
  std::vector<DomainDataset> datasets;
};

LoadedCorpus load_corpus(const RunConfig& cfg);

// Writes one JSONL per domain plus manifest.json into data.dir. Refuses to
// touch existing files unless run.overwrite is set.
void cmd_generate_data(const RunConfig& cfg);

// Full training run into run.out: config echo, per-iteration metrics CSV,
// optional per-epoch eval CSV, periodic and final checkpoints. Resumes from
// the newest checkpoint in the out directory when one matches the config.
// `stop_after` caps total iterations so tests can simulate interruption.
void cmd_train(const RunConfig& cfg, std::int64_t stop_after = -1);

// Evaluates a checkpoint on one JSONL file (data_file empty = data.eval_file).
EvalMetrics cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path,
                     const std::string& data_file = "");

struct LooFold {
  int held_out = -1;
  EvalMetrics metrics;
};

struct LooResult {
  std::vector<LooFold> folds;
  double mean_accuracy = 0.0;
  double mean_macro_f1 = 0.0;
};

// Leave-one-domain-out: for each domain, trains on the others (fold seed =
// base seed + fold index) and evaluates on the held-out one. Per-fold rows
// are flushed as they finish so partial results survive an aborted fold.
LooResult cmd_loo(const RunConfig& cfg);

GradcheckReport cmd_gradcheck(const RunConfig& cfg);

// TSV export of query-encoder features: domain, label, then d_f values per
// example. data_file empty = the whole corpus in domain order. out_path
// empty = run.out/embeddings.tsv.
void cmd_dump_embeddings(const RunConfig& cfg, const std::string& checkpoint_path,
                         const std::string& data_file = "", const std::string& out_path = "");

}  // namespace metadg
