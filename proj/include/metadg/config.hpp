#pragma once

#include <cstdint>
#include <string>

#include "metadg/engine.hpp"
#include "metadg/synthetic.hpp"

namespace metadg {

// Full experiment description: training hyperparameters, corpus spec for
// generation, file locations, and run-level knobs. Parsed from a sectioned
// key=value file; every key has a default so an empty file is valid.
struct RunConfig {
  TrainConfig train;  // vocab stays 0 here; it is derived from the data manifest
  CorpusSpec corpus;
  std::string data_dir = "data";
  std::string eval_file;  // optional held-out eval set, one JSONL
  std::string out_dir = "out";
  std::string mode = "single";  // single | loo
  std::int64_t checkpoint_every = 0;  // iterations between checkpoints, 0 = final only
  int eval_every = 1;  // epochs between eval rows when eval_file is set
  bool overwrite = false;

  void validate() const;  // run-level fields only; throws ConfigError
};

// Parses the sectioned text form. Unknown sections or keys are rejected so
// a typo cannot silently fall back to a default.
RunConfig parse_run_config(const std::string& text);

// Reads and parses a config file; missing file is a data error.
RunConfig load_run_config(const std::string& path);

// Applies one "section.key=value" assignment on top of a parsed config.
void apply_override(RunConfig& cfg, const std::string& spec);

// Complete echo of every key in file form; parsing it back reproduces the
// config exactly, including 17-digit floating-point round trips.
std::string render_run_config(const RunConfig& cfg);

}  // namespace metadg
