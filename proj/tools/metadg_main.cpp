#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "metadg/commands.hpp"
#include "metadg/common.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  std::string out_dir;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* out_opt = nullptr;
};

void add_common(CLI::App* sub, CommonArgs& a) {
  sub->add_option("--config", a.config_path, "config file; defaults apply when omitted");
  sub->add_option("--override", a.overrides, "section.key=value, repeatable, applied in order");
  a.seed_opt = sub->add_option("--seed", a.seed, "overrides train.seed");
  a.out_opt = sub->add_option("--out", a.out_dir, "overrides run.out");
}

metadg::RunConfig build_config(const CommonArgs& a) {
  metadg::RunConfig cfg;
  if (!a.config_path.empty()) cfg = metadg::load_run_config(a.config_path);
  for (const std::string& ov : a.overrides) metadg::apply_override(cfg, ov);
  if (a.seed_opt->count() > 0) cfg.train.seed = a.seed;
  if (a.out_opt->count() > 0) cfg.out_dir = a.out_dir;
  return cfg;
}

void print_eval(const metadg::EvalMetrics& m) {
  std::printf("examples   %lld\n", static_cast<long long>(m.count));
  std::printf("accuracy   %.6f\n", m.accuracy);
  std::printf("macro F1   %.6f\n", m.macro_f1);
  for (std::size_t c = 0; c < m.f1.size(); ++c) {
    std::printf("class %zu    P %.4f  R %.4f  F1 %.4f\n", c, m.precision[c], m.recall[c], m.f1[c]);
  }
}

void print_loo(const metadg::LooResult& r) {
  for (const metadg::LooFold& f : r.folds) {
    std::printf("fold %d (held-out domain %d): accuracy %.6f  macro F1 %.6f\n", f.held_out,
                f.held_out, f.metrics.accuracy, f.metrics.macro_f1);
  }
  std::printf("mean accuracy %.6f  mean macro F1 %.6f\n", r.mean_accuracy, r.mean_macro_f1);
}

int run_gradcheck_cmd(const metadg::RunConfig& cfg) {
  const metadg::GradcheckReport rep = metadg::cmd_gradcheck(cfg);
  for (const metadg::GradcheckTerm& t : rep.terms) {
    std::printf("%-7s max rel err %.3e over %lld coords  %s\n", t.name.c_str(), t.max_rel_err,
                static_cast<long long>(t.checked_coords), t.pass ? "ok" : "FAIL");
  }
  std::printf("gradcheck %s (tolerance %.1e)\n", rep.pass ? "passed" : "FAILED", rep.tolerance);
  return rep.pass ? metadg::kExitOk : metadg::kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"episodic multi-source trainer for domain-general text classification"};
  app.require_subcommand(1);

  CommonArgs gen_a, train_a, eval_a, loo_a, grad_a, dump_a;
  std::string eval_ckpt, eval_data, dump_ckpt, dump_data;

  CLI::App* gen = app.add_subcommand("generate-data", "write a synthetic corpus into data.dir");
  add_common(gen, gen_a);

  CLI::App* tr = app.add_subcommand("train", "train into run.out (leave-one-out when run.mode=loo)");
  add_common(tr, train_a);

  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on a JSONL file");
  add_common(ev, eval_a);
  ev->add_option("--checkpoint", eval_ckpt, "checkpoint to evaluate")->required();
  ev->add_option("--data", eval_data, "eval JSONL; defaults to data.eval_file");

  CLI::App* lo = app.add_subcommand("loo", "leave-one-domain-out over the corpus");
  add_common(lo, loo_a);

  CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference check of every loss term");
  add_common(gc, grad_a);

  CLI::App* du = app.add_subcommand("dump-embeddings", "export encoder features as TSV");
  add_common(du, dump_a);
  du->add_option("--checkpoint", dump_ckpt, "checkpoint to read weights from")->required();
  du->add_option("--data", dump_data, "JSONL to embed; defaults to the whole corpus");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? metadg::kExitOk : metadg::kExitConfig;
  }

  try {
    if (app.got_subcommand(gen)) {
      const metadg::RunConfig cfg = build_config(gen_a);
      metadg::cmd_generate_data(cfg);
      std::printf("wrote %d domain files and manifest.json to %s\n", cfg.corpus.domains,
                  cfg.data_dir.c_str());
    } else if (app.got_subcommand(tr)) {
      metadg::RunConfig cfg = build_config(train_a);
      if (cfg.mode == "loo") {
        print_loo(metadg::cmd_loo(cfg));
      } else {
        metadg::cmd_train(cfg);
        std::printf("training complete; outputs in %s\n", cfg.out_dir.c_str());
      }
    } else if (app.got_subcommand(ev)) {
      print_eval(metadg::cmd_eval(build_config(eval_a), eval_ckpt, eval_data));
    } else if (app.got_subcommand(lo)) {
      metadg::RunConfig cfg = build_config(loo_a);
      cfg.mode = "loo";
      print_loo(metadg::cmd_loo(cfg));
    } else if (app.got_subcommand(gc)) {
      return run_gradcheck_cmd(build_config(grad_a));
    } else if (app.got_subcommand(du)) {
      const metadg::RunConfig cfg = build_config(dump_a);
      metadg::cmd_dump_embeddings(cfg, dump_ckpt, dump_data);
      std::printf("embeddings written to %s/embeddings.tsv\n", cfg.out_dir.c_str());
    }
    return metadg::kExitOk;
  } catch (const metadg::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return metadg::kExitConfig;
  } catch (const metadg::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return metadg::kExitData;
  } catch (const metadg::NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return metadg::kExitNumerical;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return metadg::kExitInternal;
  }
}
