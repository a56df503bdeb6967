#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "metadg/checkpoint.hpp"
#include "metadg/commands.hpp"
#include "metadg/config.hpp"

using namespace metadg;
namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(static_cast<bool>(in));
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
}

// Fresh scratch directory per test case, removed on destruction.
struct TempDir {
  fs::path root;
  explicit TempDir(const std::string& tag) {
    root = fs::temp_directory_path() / ("metadg_harness_" + tag);
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~TempDir() { fs::remove_all(root); }
  std::string sub(const std::string& name) const { return (root / name).string(); }
};

RunConfig tiny_run_config(const TempDir& tmp) {
  RunConfig cfg;
  cfg.corpus.domains = 3;
  cfg.corpus.classes = 2;
  cfg.corpus.per_class = 12;
  cfg.corpus.shared_vocab = 8;
  cfg.corpus.domain_vocab = 4;
  cfg.corpus.flip_vocab = 6;
  cfg.corpus.sentence_len = 8;
  cfg.train.batch_size = 4;
  cfg.train.epochs = 2;
  cfg.train.alpha_target = 1e-2;
  cfg.train.beta_target = 1e-2;
  cfg.train.warmup_start = 1e-3;
  cfg.train.d_emb = 6;
  cfg.train.d_h = 8;
  cfg.train.d_f = 6;
  cfg.train.queue_len = 8;
  cfg.train.max_len = 16;
  cfg.train.seed = 11;
  cfg.data_dir = tmp.sub("data");
  cfg.out_dir = tmp.sub("out");
  return cfg;
}

std::vector<std::uint64_t> state_checksums(const TrainState& st, const TrainConfig& cfg) {
  std::vector<std::uint64_t> sums;
  sums.push_back(params_checksum(st.params));
  if (cfg.use_jury) {
    sums.push_back(encoder_checksum(st.key_encoder));
    sums.push_back(st.queues.checksum());
  }
  if (cfg.use_memory) sums.push_back(st.bank.checksum());
  sums.push_back(static_cast<std::uint64_t>(st.outer.step));
  for (const Tensor& t : st.outer.m) sums.push_back(t.checksum());
  for (const Tensor& t : st.outer.v) sums.push_back(t.checksum());
  const std::string rng = st.rng.serialize();
  sums.push_back(fnv1a(rng.data(), rng.size()));
  sums.push_back(static_cast<std::uint64_t>(st.iter));
  return sums;
}

}  // namespace

TEST_CASE("run config renders and parses back exactly") {
  RunConfig defaults;
  const std::string rendered = render_run_config(defaults);
  CHECK(render_run_config(parse_run_config(rendered)) == rendered);
  CHECK(render_run_config(parse_run_config("")) == rendered);

  RunConfig cfg;
  cfg.train.batch_size = 5;
  cfg.train.epochs = 7;
  cfg.train.alpha_target = 1.0 / 3.0;
  cfg.train.beta_target = 4.5e-4;
  cfg.train.warmup_start = 9e-7;
  cfg.train.weight_decay = 1.5e-3;
  cfg.train.momentum_m = 0.35;
  cfg.train.renormalize_slots = false;
  cfg.train.tau = 0.07;
  cfg.train.lambda = 0.93;
  cfg.train.queue_len = 48;
  cfg.train.jury_queue_per_stage = true;
  cfg.train.repetition_rate = 0.27;
  cfg.train.use_meta = false;
  cfg.train.use_memory = false;
  cfg.train.use_jury = false;
  cfg.train.meta_mode = MetaMode::kExact;
  cfg.train.inner_opt = InnerOpt::kSgd;
  cfg.train.warm_start_iters = 3;
  cfg.train.n_classes = 3;
  cfg.train.d_emb = 5;
  cfg.train.d_h = 9;
  cfg.train.d_f = 7;
  cfg.train.activation = Activation::kSigmoid;
  cfg.train.init_scale = 0.2;
  cfg.train.max_len = 33;
  cfg.train.seed = 99;
  cfg.corpus.domains = 5;
  cfg.corpus.classes = 3;
  cfg.corpus.per_class = 21;
  cfg.corpus.shared_vocab = 9;
  cfg.corpus.domain_vocab = 5;
  cfg.corpus.flip_vocab = 15;
  cfg.corpus.sentence_len = 11;
  cfg.data_dir = "elsewhere";
  cfg.eval_file = "held_out.jsonl";
  cfg.out_dir = "runs/a";
  cfg.mode = "loo";
  cfg.checkpoint_every = 11;
  cfg.eval_every = 2;
  cfg.overwrite = true;

  const RunConfig back = parse_run_config(render_run_config(cfg));
  CHECK(render_run_config(back) == render_run_config(cfg));
  CHECK(back.train.alpha_target == cfg.train.alpha_target);
  CHECK(back.train.meta_mode == MetaMode::kExact);
  CHECK(back.train.inner_opt == InnerOpt::kSgd);
  CHECK(back.train.activation == Activation::kSigmoid);
  CHECK(back.train.seed == 99);
  CHECK(back.corpus.per_class == 21);
  CHECK(back.eval_file == "held_out.jsonl");
  CHECK(back.mode == "loo");
  CHECK(back.checkpoint_every == 11);
  CHECK(back.overwrite);
}

TEST_CASE("run config rejects unknown keys and malformed text") {
  CHECK_THROWS_AS(parse_run_config("[train]\nbogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[nope]\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("loose = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[train]\nbatch_size = twelve\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[train]\nbatch_size\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[train\nbatch_size = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[train]\nuse_jury = maybe\n"), ConfigError);

  RunConfig cfg;
  apply_override(cfg, "train.batch_size=9");
  CHECK(cfg.train.batch_size == 9);
  apply_override(cfg, "run.mode=loo");
  CHECK(cfg.mode == "loo");
  CHECK_THROWS_AS(apply_override(cfg, "noequals"), ConfigError);
  CHECK_THROWS_AS(apply_override(cfg, "nodot=1"), ConfigError);
  CHECK_THROWS_AS(apply_override(cfg, "train.bogus=1"), ConfigError);
  CHECK_THROWS_AS(apply_override(cfg, "train.epochs=x"), ConfigError);
}

TEST_CASE("checkpoint round trip restores every moving part") {
  TempDir tmp("ckpt");
  RunConfig rc = tiny_run_config(tmp);
  Vocab vocab;
  std::vector<DomainDataset> data =
      generate_synthetic_corpus(rc.corpus, 91, rc.train.max_len, &vocab);
  TrainConfig tc = rc.train;
  tc.vocab = vocab.size();

  TrainState st = init_train_state(tc, data);
  train(st, tc, data, {}, 5);
  const std::string path = tmp.sub("mid.ckpt");
  save_checkpoint(path, st, tc, "echo-text");

  CheckpointMeta meta;
  TrainState back = load_checkpoint(path, tc, &meta);
  CHECK(meta.version == 1);
  CHECK(meta.iter == 5);
  CHECK(meta.config_echo == "echo-text");
  CHECK(back.rng.serialize() == st.rng.serialize());
  CHECK(state_checksums(back, tc) == state_checksums(st, tc));

  train(st, tc, data);
  train(back, tc, data);
  CHECK(state_checksums(back, tc) == state_checksums(st, tc));
}

TEST_CASE("checkpoint rejects mismatched or damaged files") {
  TempDir tmp("ckptbad");
  RunConfig rc = tiny_run_config(tmp);
  Vocab vocab;
  std::vector<DomainDataset> data =
      generate_synthetic_corpus(rc.corpus, 91, rc.train.max_len, &vocab);
  TrainConfig tc = rc.train;
  tc.vocab = vocab.size();
  TrainState st = init_train_state(tc, data);
  train(st, tc, data, {}, 2);
  const std::string path = tmp.sub("a.ckpt");
  save_checkpoint(path, st, tc, "e");
  const std::string raw = read_file(path);
  const std::size_t nl = raw.find('\n');
  REQUIRE(nl != std::string::npos);

  SUBCASE("future version") {
    nlohmann::json header = nlohmann::json::parse(raw.substr(0, nl));
    header["version"] = 7;
    const std::string tam = tmp.sub("v.ckpt");
    write_file(tam, header.dump() + raw.substr(nl));
    CHECK_THROWS_WITH_AS(load_checkpoint(tam, tc), doctest::Contains("version"), ConfigError);
  }
  SUBCASE("different widths") {
    TrainConfig other = tc;
    other.d_h += 1;
    CHECK_THROWS_AS(load_checkpoint(path, other), ConfigError);
  }
  SUBCASE("different flags") {
    TrainConfig other = tc;
    other.use_jury = false;
    CHECK_THROWS_AS(load_checkpoint(path, other), ConfigError);
  }
  SUBCASE("truncated payload") {
    const std::string tam = tmp.sub("t.ckpt");
    write_file(tam, raw.substr(0, raw.size() - 16));
    CHECK_THROWS_AS(load_checkpoint(tam, tc), DataError);
  }
  SUBCASE("trailing bytes") {
    const std::string tam = tmp.sub("x.ckpt");
    write_file(tam, raw + "extra");
    CHECK_THROWS_AS(load_checkpoint(tam, tc), DataError);
  }
  SUBCASE("garbage header") {
    const std::string tam = tmp.sub("g.ckpt");
    write_file(tam, "not json" + raw.substr(nl));
    CHECK_THROWS_AS(load_checkpoint(tam, tc), DataError);
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_checkpoint(tmp.sub("no.ckpt"), tc), DataError); }
}

TEST_CASE("generated corpus is deterministic and guarded") {
  TempDir tmp("gen");
  RunConfig a = tiny_run_config(tmp);
  cmd_generate_data(a);
  RunConfig b = a;
  b.data_dir = tmp.sub("data2");
  cmd_generate_data(b);
  for (const char* name : {"domain_0.jsonl", "domain_1.jsonl", "domain_2.jsonl", "manifest.json"}) {
    CHECK(read_file(a.data_dir + "/" + std::string(name)) ==
          read_file(b.data_dir + "/" + std::string(name)));
  }

  CHECK_THROWS_WITH_AS(cmd_generate_data(a), doctest::Contains("already exists"), DataError);
  a.overwrite = true;
  cmd_generate_data(a);

  LoadedCorpus corpus = load_corpus(a);
  CHECK(corpus.spec.domains == 3);
  CHECK(corpus.spec.per_class == 12);
  CHECK(corpus.seed == a.train.seed);
  CHECK(corpus.datasets.size() == 3);
  for (int d = 0; d < 3; ++d) {
    CHECK(corpus.datasets[d].domain == d);
    CHECK(corpus.datasets[d].size() == 24);
    CHECK(corpus.datasets[d].index_consistent());
  }
  CHECK(corpus.vocab.size() > 2);

  RunConfig wrong = a;
  wrong.train.n_classes = 3;
  CHECK_THROWS_AS(load_corpus(wrong), ConfigError);

  RunConfig nowhere = a;
  nowhere.data_dir = tmp.sub("void");
  CHECK_THROWS_WITH_AS(load_corpus(nowhere), doctest::Contains("manifest"), DataError);

  RunConfig corrupt = a;
  corrupt.data_dir = tmp.sub("bad");
  fs::create_directories(corrupt.data_dir);
  write_file(corrupt.data_dir + "/manifest.json", "{ nope");
  CHECK_THROWS_AS(load_corpus(corrupt), DataError);
}

TEST_CASE("dataset tags must match their positions") {
  TempDir tmp("tags");
  RunConfig rc = tiny_run_config(tmp);
  Vocab vocab;
  std::vector<DomainDataset> data =
      generate_synthetic_corpus(rc.corpus, 91, rc.train.max_len, &vocab);
  TrainConfig tc = rc.train;
  tc.vocab = vocab.size();

  SUBCASE("dataset tag out of place") {
    std::swap(data[0], data[1]);
    CHECK_THROWS_AS(init_train_state(tc, data), std::invalid_argument);
  }
  SUBCASE("one example mistagged") {
    data[2].examples[3].domain = 0;
    CHECK_THROWS_AS(init_train_state(tc, data), std::invalid_argument);
  }
}

TEST_CASE("training command resumes and reruns byte-identically") {
  TempDir tmp("resume");
  RunConfig cfg = tiny_run_config(tmp);
  cmd_generate_data(cfg);
  cfg.eval_file = cfg.data_dir + "/domain_0.jsonl";

  cmd_train(cfg);
  const std::string metrics1 = read_file(cfg.out_dir + "/metrics.csv");
  const std::string eval1 = read_file(cfg.out_dir + "/eval.csv");
  const std::string final1 = read_file(cfg.out_dir + "/final.ckpt");
  CHECK(metrics1.rfind("iter,epoch,meta_test_domain,", 0) == 0);
  CHECK(std::count(metrics1.begin(), metrics1.end(), '\n') == 13);  // header + 12 iterations
  CHECK(std::count(eval1.begin(), eval1.end(), '\n') == 3);         // header + 2 epochs

  SUBCASE("interrupt and resume") {
    fs::remove_all(cfg.out_dir);
    cmd_train(cfg, 7);
    CHECK(fs::exists(cfg.out_dir + "/ckpt_00000007.ckpt"));
    CHECK(!fs::exists(cfg.out_dir + "/final.ckpt"));
    cmd_train(cfg);
    CHECK(read_file(cfg.out_dir + "/metrics.csv") == metrics1);
    CHECK(read_file(cfg.out_dir + "/eval.csv") == eval1);
    CHECK(read_file(cfg.out_dir + "/final.ckpt") == final1);
  }
  SUBCASE("fresh rerun under overwrite") {
    RunConfig again = cfg;
    again.overwrite = true;
    cmd_train(again);
    CHECK(read_file(cfg.out_dir + "/metrics.csv") == metrics1);
    CHECK(read_file(cfg.out_dir + "/eval.csv") == eval1);
  }
  SUBCASE("mismatched config is rejected") {
    RunConfig other = cfg;
    other.train.epochs = 3;
    CHECK_THROWS_WITH_AS(cmd_train(other), doctest::Contains("different config"), ConfigError);
  }
  SUBCASE("completed run is left untouched") {
    cmd_train(cfg);
    CHECK(read_file(cfg.out_dir + "/metrics.csv") == metrics1);
    CHECK(read_file(cfg.out_dir + "/final.ckpt") == final1);
  }
  SUBCASE("evaluation of the final checkpoint is reproducible") {
    const EvalMetrics m1 = cmd_eval(cfg, cfg.out_dir + "/final.ckpt");
    const EvalMetrics m2 = cmd_eval(cfg, cfg.out_dir + "/final.ckpt", cfg.eval_file);
    CHECK(m1.count == 24);
    CHECK(m1.accuracy == m2.accuracy);
    CHECK(m1.macro_f1 == m2.macro_f1);
    RunConfig bare = cfg;
    bare.eval_file.clear();
    CHECK_THROWS_AS(cmd_eval(bare, cfg.out_dir + "/final.ckpt"), ConfigError);
  }
}

TEST_CASE("training command is deterministic across identical reruns") {
  TempDir tmp("det");
  RunConfig cfg = tiny_run_config(tmp);
  cfg.overwrite = true;
  cfg.checkpoint_every = 5;
  cmd_generate_data(cfg);

  cmd_train(cfg);
  const std::string metrics1 = read_file(cfg.out_dir + "/metrics.csv");
  const std::string final1 = read_file(cfg.out_dir + "/final.ckpt");
  const std::string mid1 = read_file(cfg.out_dir + "/ckpt_00000005.ckpt");

  cmd_train(cfg);  // overwrite wipes and repeats the identical run
  CHECK(read_file(cfg.out_dir + "/metrics.csv") == metrics1);
  CHECK(read_file(cfg.out_dir + "/final.ckpt") == final1);
  CHECK(read_file(cfg.out_dir + "/ckpt_00000005.ckpt") == mid1);
}

TEST_CASE("leave one out trains a fold per domain") {
  TempDir tmp("loo");
  RunConfig cfg = tiny_run_config(tmp);
  cfg.train.epochs = 1;
  cmd_generate_data(cfg);

  const LooResult res = cmd_loo(cfg);
  REQUIRE(res.folds.size() == 3);
  double acc = 0.0, f1 = 0.0;
  for (const LooFold& f : res.folds) {
    acc += f.metrics.accuracy;
    f1 += f.metrics.macro_f1;
    CHECK(f.metrics.count == 24);
  }
  CHECK(res.mean_accuracy == doctest::Approx(acc / 3).epsilon(1e-12));
  CHECK(res.mean_macro_f1 == doctest::Approx(f1 / 3).epsilon(1e-12));

  const std::string table = read_file(cfg.out_dir + "/loo.csv");
  CHECK(table.rfind("fold,held_out_domain,accuracy,macro_f1\n", 0) == 0);
  CHECK(std::count(table.begin(), table.end(), '\n') == 4);

  for (int f = 0; f < 3; ++f) {
    const std::string fold_dir = cfg.out_dir + "/fold_" + std::to_string(f);
    CHECK(fs::exists(fold_dir + "/final.ckpt"));
    CHECK(fs::exists(fold_dir + "/metrics.csv"));
    const RunConfig echoed = load_run_config(fold_dir + "/config.ini");
    CHECK(echoed.train.seed == cfg.train.seed + static_cast<std::uint64_t>(f));
  }

  const nlohmann::json summary =
      nlohmann::json::parse(read_file(cfg.out_dir + "/loo_summary.json"));
  CHECK(summary.at("folds").get<int>() == 3);
  CHECK(summary.at("mean_accuracy").get<double>() == res.mean_accuracy);

  RunConfig narrow = cfg;
  narrow.corpus.domains = 2;
  narrow.corpus.flip_vocab = 4;
  narrow.data_dir = tmp.sub("data2");
  narrow.out_dir = tmp.sub("out2");
  cmd_generate_data(narrow);
  CHECK_THROWS_WITH_AS(cmd_loo(narrow), doctest::Contains("3 domains"), ConfigError);
}

TEST_CASE("gradient check command reports per term and catches tampering") {
  const GradcheckReport clean = run_gradcheck(3);
  REQUIRE(clean.terms.size() == 5);
  CHECK(clean.pass);
  for (const GradcheckTerm& t : clean.terms) {
    CHECK(t.pass);
    CHECK(t.checked_coords > 0);
    CHECK(t.max_rel_err < clean.tolerance);
  }

  const GradcheckReport caught =
      run_gradcheck(3, 1e-4, 1e-5, [](const std::string& term, std::vector<Tensor>& grads) {
        if (term == "L_Jury") grads[1].data()[0] += 5e-2;
      });
  CHECK(!caught.pass);
  for (const GradcheckTerm& t : caught.terms) {
    if (t.name == "L_Jury") {
      CHECK(!t.pass);
    } else {
      CHECK(t.pass);
    }
  }
}

TEST_CASE("embedding export is unit norm and reproducible") {
  TempDir tmp("dump");
  RunConfig cfg = tiny_run_config(tmp);
  cfg.train.epochs = 1;
  cmd_generate_data(cfg);
  cmd_train(cfg);
  const std::string ckpt = cfg.out_dir + "/final.ckpt";

  cmd_dump_embeddings(cfg, ckpt);
  const std::string tsv_path = cfg.out_dir + "/embeddings.tsv";
  const std::string tsv = read_file(tsv_path);

  std::istringstream lines(tsv);
  std::string line;
  REQUIRE(std::getline(lines, line));
  CHECK(line == "domain\tlabel\tf0\tf1\tf2\tf3\tf4\tf5");
  int rows = 0;
  while (std::getline(lines, line)) {
    std::istringstream fields(line);
    std::string field;
    std::vector<std::string> parts;
    while (std::getline(fields, field, '\t')) parts.push_back(field);
    REQUIRE(parts.size() == 8);
    double norm2 = 0.0;
    for (std::size_t j = 2; j < parts.size(); ++j) {
      const double v = std::stod(parts[j]);
      norm2 += v * v;
    }
    CHECK(std::sqrt(norm2) == doctest::Approx(1.0).epsilon(1e-9));
    ++rows;
  }
  CHECK(rows == 72);

  const std::string again = tmp.sub("again.tsv");
  cmd_dump_embeddings(cfg, ckpt, "", again);
  CHECK(read_file(again) == tsv);

  cmd_dump_embeddings(cfg, ckpt, cfg.data_dir + "/domain_1.jsonl", tmp.sub("one.tsv"));
  const std::string one = read_file(tmp.sub("one.tsv"));
  CHECK(std::count(one.begin(), one.end(), '\n') == 25);

  RunConfig wrong = cfg;
  wrong.train.d_f = 5;
  CHECK_THROWS_AS(cmd_dump_embeddings(wrong, ckpt), ConfigError);
}
