#include "metadg/commands.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "json.hpp"
#include "metadg/checkpoint.hpp"
#include "metadg/common.hpp"

namespace metadg {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kMetricsHeader =
    "iter,epoch,meta_test_domain,L_C_mtr,L_Mem_mtr,L_Jury_mtr,L_mtr,"
    "L_C_mte,L_Mem_mte,L_Jury_mte,L_mte,lr";
constexpr const char* kEvalHeader = "epoch,iter,accuracy,macro_f1";

std::string domain_file_name(int d) { return "domain_" + std::to_string(d) + ".jsonl"; }

std::string metrics_row(const IterationMetrics& m) {
  std::ostringstream row;
  row << m.iter << "," << m.epoch << "," << m.meta_test_domain;
  for (const StageTerms* s : {&m.mtr, &m.mte}) {
    row << "," << format_double(s->lc) << "," << format_double(s->lmem) << ","
        << format_double(s->ljury) << "," << format_double(s->total);
  }
  row << "," << format_double(m.lr);
  return row.str();
}

// Rewrites a CSV keeping the header and the rows whose leading integer field
// is <= bound; used when resuming past a checkpoint older than the log.
void trim_csv(const std::string& path, const char* header, std::int64_t bound) {
  std::ifstream in(path);
  std::vector<std::string> keep;
  std::string line;
  if (in) {
    bool first = true;
    while (std::getline(in, line)) {
      if (first) {
        first = false;
        continue;
      }
      if (line.empty()) continue;
      const std::int64_t key = std::strtoll(line.c_str(), nullptr, 10);
      if (key <= bound) keep.push_back(line);
    }
    in.close();
  }
  std::ofstream out(path, std::ios::trunc);
  out << header << "\n";
  for (const std::string& row : keep) out << row << "\n";
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out << content;
  if (!out.flush()) throw DataError("write failed for " + path);
}

// Newest resumable checkpoint in a run directory, empty string if none.
std::string find_latest_checkpoint(const std::string& dir, const TrainConfig& cfg,
                                   std::int64_t* iter_out) {
  std::string best;
  std::int64_t best_iter = -1;
  if (!fs::is_directory(dir)) return best;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name != "final.ckpt" &&
        !(name.rfind("ckpt_", 0) == 0 && name.size() > 10 &&
          name.substr(name.size() - 5) == ".ckpt")) {
      continue;
    }
    CheckpointMeta meta;
    load_checkpoint(entry.path().string(), cfg, &meta);
    if (meta.iter > best_iter) {
      best_iter = meta.iter;
      best = entry.path().string();
    }
  }
  if (iter_out != nullptr) *iter_out = best_iter;
  return best;
}

void remove_run_outputs(const std::string& dir) {
  if (!fs::is_directory(dir)) return;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name == "metrics.csv" || name == "eval.csv" || name == "final.ckpt" ||
        name.rfind("ckpt_", 0) == 0) {
      fs::remove(entry.path());
    }
  }
}

DomainDataset load_eval_dataset(const RunConfig& cfg, const Vocab& vocab,
                                const std::string& path) {
  DomainDataset ds = load_jsonl(path, vocab, 0, cfg.train.max_len);
  if (ds.examples.empty()) throw DataError("eval set " + path + " has no usable examples");
  return ds;
}

}  // namespace

LoadedCorpus load_corpus(const RunConfig& cfg) {
  const std::string manifest_path = cfg.data_dir + "/manifest.json";
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) {
    throw DataError("no manifest.json in " + cfg.data_dir + "; run generate-data first");
  }
  json m;
  try {
    in >> m;
    LoadedCorpus corpus;
    const json& spec = m.at("spec");
    corpus.spec.domains = spec.at("domains").get<int>();
    corpus.spec.classes = spec.at("classes").get<int>();
    corpus.spec.per_class = spec.at("per_class").get<int>();
    corpus.spec.shared_vocab = spec.at("shared_vocab").get<int>();
    corpus.spec.domain_vocab = spec.at("domain_vocab").get<int>();
    corpus.spec.flip_vocab = spec.at("flip_vocab").get<int>();
    corpus.spec.sentence_len = spec.at("sentence_len").get<int>();
    corpus.seed = m.at("seed").get<std::uint64_t>();
    corpus.files = m.at("files").get<std::vector<std::string>>();
    corpus.spec.validate();
    if (corpus.files.size() != static_cast<std::size_t>(corpus.spec.domains)) {
      throw DataError("manifest lists " + std::to_string(corpus.files.size()) + " files for " +
                      std::to_string(corpus.spec.domains) + " domains");
    }
    if (cfg.train.n_classes != corpus.spec.classes) {
      throw ConfigError("configured " + std::to_string(cfg.train.n_classes) +
                        " classes but the corpus manifest says " +
                        std::to_string(corpus.spec.classes));
    }
    corpus.vocab = build_corpus_vocab(corpus.spec);
    for (int d = 0; d < corpus.spec.domains; ++d) {
      DomainDataset ds = load_jsonl(cfg.data_dir + "/" + corpus.files[static_cast<std::size_t>(d)],
                                    corpus.vocab, d, cfg.train.max_len);
      ds.rebuild_index(corpus.spec.classes);
      corpus.datasets.push_back(std::move(ds));
    }
    return corpus;
  } catch (const json::exception& e) {
    throw DataError("manifest " + manifest_path + " is corrupt: " + e.what());
  }
}

void cmd_generate_data(const RunConfig& cfg) {
  cfg.validate();
  cfg.corpus.validate();
  fs::create_directories(cfg.data_dir);

  std::vector<std::string> files;
  for (int d = 0; d < cfg.corpus.domains; ++d) files.push_back(domain_file_name(d));
  if (!cfg.overwrite) {
    for (const std::string& f : files) {
      if (fs::exists(cfg.data_dir + "/" + f)) {
        throw DataError(cfg.data_dir + "/" + f +
                        " already exists; set run.overwrite to regenerate");
      }
    }
    if (fs::exists(cfg.data_dir + "/manifest.json")) {
      throw DataError(cfg.data_dir + "/manifest.json already exists; set run.overwrite to regenerate");
    }
  }

  const std::vector<std::vector<RawRecord>> records =
      generate_synthetic_records(cfg.corpus, cfg.train.seed);
  for (int d = 0; d < cfg.corpus.domains; ++d) {
    std::ostringstream out;
    for (const RawRecord& r : records[static_cast<std::size_t>(d)]) {
      json line;
      line["text"] = r.text;
      line["label"] = r.label;
      out << line.dump() << "\n";
    }
    write_text_file(cfg.data_dir + "/" + files[static_cast<std::size_t>(d)], out.str());
  }

  json manifest;
  manifest["seed"] = cfg.train.seed;
  manifest["files"] = files;
  manifest["spec"] = {{"domains", cfg.corpus.domains},
                      {"classes", cfg.corpus.classes},
                      {"per_class", cfg.corpus.per_class},
                      {"shared_vocab", cfg.corpus.shared_vocab},
                      {"domain_vocab", cfg.corpus.domain_vocab},
                      {"flip_vocab", cfg.corpus.flip_vocab},
                      {"sentence_len", cfg.corpus.sentence_len}};
  write_text_file(cfg.data_dir + "/manifest.json", manifest.dump(2) + "\n");
}

void cmd_train(const RunConfig& cfg, std::int64_t stop_after) {
  cfg.validate();
  LoadedCorpus corpus = load_corpus(cfg);
  TrainConfig tc = cfg.train;
  tc.vocab = corpus.vocab.size();
  tc.validate(static_cast<int>(corpus.datasets.size()));

  fs::create_directories(cfg.out_dir);
  const std::string echo = render_run_config(cfg);

  DomainDataset eval_ds;
  const bool has_eval = !cfg.eval_file.empty();
  if (has_eval) eval_ds = load_eval_dataset(cfg, corpus.vocab, cfg.eval_file);

  if (cfg.overwrite) remove_run_outputs(cfg.out_dir);

  const std::int64_t ipe = iters_per_epoch(corpus.datasets, tc.batch_size);
  const std::int64_t total = static_cast<std::int64_t>(tc.epochs) * ipe;

  TrainState state;
  std::int64_t resume_iter = -1;
  const std::string latest = find_latest_checkpoint(cfg.out_dir, tc, &resume_iter);
  const std::string metrics_path = cfg.out_dir + "/metrics.csv";
  const std::string eval_path = cfg.out_dir + "/eval.csv";
  if (!latest.empty()) {
    CheckpointMeta meta;
    state = load_checkpoint(latest, tc, &meta);
    if (meta.config_echo != echo) {
      throw ConfigError("checkpoint in " + cfg.out_dir +
                        " was written by a different config; use a fresh out directory or set "
                        "run.overwrite");
    }
    trim_csv(metrics_path, kMetricsHeader, state.iter);
    if (has_eval) {
      // Eval rows key on epoch; keep the ones for fully completed epochs.
      trim_csv(eval_path, kEvalHeader, state.iter / ipe);
    }
    if (state.iter >= total) {
      log_warn("run in " + cfg.out_dir + " is already complete at iteration " +
               std::to_string(state.iter));
      return;
    }
  } else {
    state = init_train_state(tc, corpus.datasets);
    write_text_file(metrics_path, std::string(kMetricsHeader) + "\n");
    if (has_eval) write_text_file(eval_path, std::string(kEvalHeader) + "\n");
  }
  write_text_file(cfg.out_dir + "/config.ini", echo);

  std::ofstream metrics_out(metrics_path, std::ios::app);
  std::ofstream eval_out;
  if (has_eval) eval_out.open(eval_path, std::ios::app);

  TrainHooks hooks;
  hooks.on_iteration = [&](const IterationMetrics& m) {
    metrics_out << metrics_row(m) << "\n";
    if (has_eval && m.iter % ipe == 0 && (m.epoch % cfg.eval_every) == 0) {
      const EvalMetrics em = evaluate(state.params, eval_ds);
      eval_out << m.epoch << "," << m.iter << "," << format_double(em.accuracy) << ","
               << format_double(em.macro_f1) << "\n";
      eval_out.flush();
    }
    if (cfg.checkpoint_every > 0 && m.iter % cfg.checkpoint_every == 0 && m.iter < total) {
      metrics_out.flush();
      char name[32];
      std::snprintf(name, sizeof(name), "ckpt_%08lld.ckpt", static_cast<long long>(m.iter));
      save_checkpoint(cfg.out_dir + "/" + name, state, tc, echo);
    }
  };

  train(state, tc, corpus.datasets, hooks, stop_after);
  metrics_out.flush();
  if (!metrics_out) throw DataError("write failed for " + metrics_path);

  if (state.iter >= total) {
    save_checkpoint(cfg.out_dir + "/final.ckpt", state, tc, echo);
  } else {
    char name[32];
    std::snprintf(name, sizeof(name), "ckpt_%08lld.ckpt", static_cast<long long>(state.iter));
    save_checkpoint(cfg.out_dir + "/" + name, state, tc, echo);
  }
}

EvalMetrics cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path,
                     const std::string& data_file) {
  cfg.validate();
  LoadedCorpus corpus = load_corpus(cfg);
  TrainConfig tc = cfg.train;
  tc.vocab = corpus.vocab.size();
  const std::string path = data_file.empty() ? cfg.eval_file : data_file;
  if (path.empty()) {
    throw ConfigError("eval needs a data file (--data or data.eval_file)");
  }
  TrainState state = load_checkpoint(checkpoint_path, tc);
  return evaluate(state.params, load_eval_dataset(cfg, corpus.vocab, path));
}

LooResult cmd_loo(const RunConfig& cfg) {
  cfg.validate();
  LoadedCorpus corpus = load_corpus(cfg);
  const int domains = static_cast<int>(corpus.datasets.size());
  if (domains < 3) {
    throw ConfigError("leave-one-out needs at least 3 domains so every fold keeps 2 sources");
  }
  fs::create_directories(cfg.out_dir);
  write_text_file(cfg.out_dir + "/config.ini", render_run_config(cfg));

  const std::string table_path = cfg.out_dir + "/loo.csv";
  std::ofstream table(table_path, std::ios::trunc);
  if (!table) throw DataError("cannot write " + table_path);
  table << "fold,held_out_domain,accuracy,macro_f1\n";
  table.flush();

  LooResult result;
  for (int fold = 0; fold < domains; ++fold) {
    std::vector<DomainDataset> sources;
    for (int d = 0; d < domains; ++d) {
      if (d == fold) continue;
      DomainDataset ds = corpus.datasets[static_cast<std::size_t>(d)];
      ds.domain = static_cast<int>(sources.size());
      for (Example& e : ds.examples) e.domain = ds.domain;
      sources.push_back(std::move(ds));
    }

    TrainConfig tc = cfg.train;
    tc.vocab = corpus.vocab.size();
    tc.seed = cfg.train.seed + static_cast<std::uint64_t>(fold);
    tc.validate(static_cast<int>(sources.size()));

    const std::string fold_dir = cfg.out_dir + "/fold_" + std::to_string(fold);
    fs::create_directories(fold_dir);
    RunConfig fold_cfg = cfg;
    fold_cfg.train.seed = tc.seed;
    fold_cfg.out_dir = fold_dir;
    const std::string fold_echo = render_run_config(fold_cfg);
    write_text_file(fold_dir + "/config.ini", fold_echo);

    std::ofstream metrics_out(fold_dir + "/metrics.csv", std::ios::trunc);
    metrics_out << kMetricsHeader << "\n";
    TrainHooks hooks;
    hooks.on_iteration = [&metrics_out](const IterationMetrics& m) {
      metrics_out << metrics_row(m) << "\n";
    };

    TrainState st = init_train_state(tc, sources);
    train(st, tc, sources, hooks);
    metrics_out.flush();
    save_checkpoint(fold_dir + "/final.ckpt", st, tc, fold_echo);

    LooFold row;
    row.held_out = fold;
    row.metrics = evaluate(st.params, corpus.datasets[static_cast<std::size_t>(fold)]);
    result.folds.push_back(row);
    table << fold << "," << fold << "," << format_double(row.metrics.accuracy) << ","
          << format_double(row.metrics.macro_f1) << "\n";
    table.flush();
  }

  for (const LooFold& f : result.folds) {
    result.mean_accuracy += f.metrics.accuracy;
    result.mean_macro_f1 += f.metrics.macro_f1;
  }
  result.mean_accuracy /= static_cast<double>(result.folds.size());
  result.mean_macro_f1 /= static_cast<double>(result.folds.size());

  json summary;
  summary["folds"] = domains;
  summary["mean_accuracy"] = result.mean_accuracy;
  summary["mean_macro_f1"] = result.mean_macro_f1;
  write_text_file(cfg.out_dir + "/loo_summary.json", summary.dump(2) + "\n");
  return result;
}

GradcheckReport cmd_gradcheck(const RunConfig& cfg) {
  cfg.validate();
  return run_gradcheck(cfg.train.seed);
}

void cmd_dump_embeddings(const RunConfig& cfg, const std::string& checkpoint_path,
                         const std::string& data_file, const std::string& out_path) {
  cfg.validate();
  LoadedCorpus corpus = load_corpus(cfg);
  TrainConfig tc = cfg.train;
  tc.vocab = corpus.vocab.size();
  TrainState state = load_checkpoint(checkpoint_path, tc);

  std::vector<const DomainDataset*> sets;
  DomainDataset external;
  if (data_file.empty()) {
    for (const DomainDataset& ds : corpus.datasets) sets.push_back(&ds);
  } else {
    external = load_eval_dataset(cfg, corpus.vocab, data_file);
    sets.push_back(&external);
  }

  std::ostringstream out;
  out << "domain\tlabel";
  for (int j = 0; j < tc.d_f; ++j) out << "\tf" << j;
  out << "\n";
  const int chunk = 64;
  for (const DomainDataset* ds : sets) {
    for (std::size_t start = 0; start < ds->examples.size();
         start += static_cast<std::size_t>(chunk)) {
      const std::size_t stop = std::min(ds->examples.size(), start + static_cast<std::size_t>(chunk));
      std::vector<std::vector<int>> tokens;
      for (std::size_t i = start; i < stop; ++i) tokens.push_back(ds->examples[i].tokens);
      const Tensor feats = encode_detached(state.params.encoder, tokens, tc.activation);
      for (std::size_t i = start; i < stop; ++i) {
        out << ds->examples[i].domain << "\t" << ds->examples[i].label;
        const std::int64_t r = static_cast<std::int64_t>(i - start);
        for (std::int64_t j = 0; j < feats.shape()[1]; ++j) {
          out << "\t" << format_double(feats.at(r, j));
        }
        out << "\n";
      }
    }
  }
  std::string target = out_path;
  if (target.empty()) {
    fs::create_directories(cfg.out_dir);
    target = cfg.out_dir + "/embeddings.tsv";
  }
  write_text_file(target, out.str());
}

}  // namespace metadg
