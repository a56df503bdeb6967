#include "metadg/config.hpp"

#include <cctype>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "metadg/common.hpp"

namespace metadg {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

[[noreturn]] void bad_value(const std::string& where, const std::string& value,
                            const char* expected) {
  throw ConfigError(where + ": cannot parse '" + value + "' as " + expected);
}

double parse_double(const std::string& where, const std::string& value) {
  errno = 0;
  char* end = nullptr;
  const double x = std::strtod(value.c_str(), &end);
  if (errno != 0 || end == value.c_str() || *end != '\0') bad_value(where, value, "a number");
  return x;
}

std::int64_t parse_int(const std::string& where, const std::string& value) {
  errno = 0;
  char* end = nullptr;
  const long long x = std::strtoll(value.c_str(), &end, 10);
  if (errno != 0 || end == value.c_str() || *end != '\0') bad_value(where, value, "an integer");
  return static_cast<std::int64_t>(x);
}

int parse_int32(const std::string& where, const std::string& value) {
  const std::int64_t x = parse_int(where, value);
  if (x < INT32_MIN || x > INT32_MAX) bad_value(where, value, "a 32-bit integer");
  return static_cast<int>(x);
}

bool parse_bool(const std::string& where, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(where, value, "a boolean (true/false)");
}

std::uint64_t parse_seed(const std::string& where, const std::string& value) {
  errno = 0;
  char* end = nullptr;
  const unsigned long long x = std::strtoull(value.c_str(), &end, 10);
  if (errno != 0 || end == value.c_str() || *end != '\0') {
    bad_value(where, value, "an unsigned integer");
  }
  return static_cast<std::uint64_t>(x);
}

void set_key(RunConfig& cfg, const std::string& section, const std::string& key,
             const std::string& value) {
  const std::string where = section + "." + key;
  TrainConfig& t = cfg.train;
  CorpusSpec& c = cfg.corpus;
  if (section == "train") {
    if (key == "batch_size") t.batch_size = parse_int32(where, value);
    else if (key == "epochs") t.epochs = parse_int32(where, value);
    else if (key == "alpha_target") t.alpha_target = parse_double(where, value);
    else if (key == "beta_target") t.beta_target = parse_double(where, value);
    else if (key == "warmup_start") t.warmup_start = parse_double(where, value);
    else if (key == "weight_decay") t.weight_decay = parse_double(where, value);
    else if (key == "momentum_m") t.momentum_m = parse_double(where, value);
    else if (key == "renormalize_slots") t.renormalize_slots = parse_bool(where, value);
    else if (key == "tau") t.tau = parse_double(where, value);
    else if (key == "lambda") t.lambda = parse_double(where, value);
    else if (key == "queue_len") t.queue_len = parse_int32(where, value);
    else if (key == "jury_queue_per_stage") t.jury_queue_per_stage = parse_bool(where, value);
    else if (key == "repetition_rate") t.repetition_rate = parse_double(where, value);
    else if (key == "use_meta") t.use_meta = parse_bool(where, value);
    else if (key == "use_memory") t.use_memory = parse_bool(where, value);
    else if (key == "use_jury") t.use_jury = parse_bool(where, value);
    else if (key == "meta_mode") t.meta_mode = parse_meta_mode(value);
    else if (key == "inner_opt") t.inner_opt = parse_inner_opt(value);
    else if (key == "warm_start_iters") t.warm_start_iters = parse_int32(where, value);
    else throw ConfigError("unknown key " + where);
  } else if (section == "model") {
    if (key == "n_classes") t.n_classes = parse_int32(where, value);
    else if (key == "d_emb") t.d_emb = parse_int32(where, value);
    else if (key == "d_h") t.d_h = parse_int32(where, value);
    else if (key == "d_f") t.d_f = parse_int32(where, value);
    else if (key == "activation") t.activation = parse_activation(value);
    else if (key == "init_scale") t.init_scale = parse_double(where, value);
    else if (key == "max_len") t.max_len = parse_int32(where, value);
    else throw ConfigError("unknown key " + where);
  } else if (section == "data") {
    if (key == "dir") cfg.data_dir = value;
    else if (key == "eval_file") cfg.eval_file = value;
    else throw ConfigError("unknown key " + where);
  } else if (section == "corpus") {
    if (key == "domains") c.domains = parse_int32(where, value);
    else if (key == "classes") c.classes = parse_int32(where, value);
    else if (key == "per_class") c.per_class = parse_int32(where, value);
    else if (key == "shared_vocab") c.shared_vocab = parse_int32(where, value);
    else if (key == "domain_vocab") c.domain_vocab = parse_int32(where, value);
    else if (key == "flip_vocab") c.flip_vocab = parse_int32(where, value);
    else if (key == "sentence_len") c.sentence_len = parse_int32(where, value);
    else throw ConfigError("unknown key " + where);
  } else if (section == "run") {
    if (key == "mode") cfg.mode = value;
    else if (key == "out") cfg.out_dir = value;
    else if (key == "seed") t.seed = parse_seed(where, value);
    else if (key == "checkpoint_every") cfg.checkpoint_every = parse_int(where, value);
    else if (key == "eval_every") cfg.eval_every = parse_int32(where, value);
    else if (key == "overwrite") cfg.overwrite = parse_bool(where, value);
    else throw ConfigError("unknown key " + where);
  } else {
    throw ConfigError("unknown section [" + section + "]");
  }
}

}  // namespace

void RunConfig::validate() const {
  if (mode != "single" && mode != "loo") {
    throw ConfigError("run.mode must be 'single' or 'loo', got '" + mode + "'");
  }
  if (out_dir.empty()) throw ConfigError("run.out must not be empty");
  if (data_dir.empty()) throw ConfigError("data.dir must not be empty");
  if (checkpoint_every < 0) throw ConfigError("run.checkpoint_every must be nonnegative");
  if (eval_every < 1) throw ConfigError("run.eval_every must be at least 1");
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw ConfigError("config line " + std::to_string(lineno) + ": malformed section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section != "train" && section != "model" && section != "data" && section != "corpus" &&
          section != "run") {
        throw ConfigError("config line " + std::to_string(lineno) + ": unknown section [" +
                          section + "]");
      }
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) {
      throw ConfigError("config line " + std::to_string(lineno) + ": key outside any section");
    }
    if (key.empty()) {
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    }
    set_key(cfg, section, key, value);
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

void apply_override(RunConfig& cfg, const std::string& spec) {
  const std::size_t eq = spec.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("override '" + spec + "' must look like section.key=value");
  }
  const std::string path = trim(spec.substr(0, eq));
  const std::string value = trim(spec.substr(eq + 1));
  const std::size_t dot = path.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == path.size()) {
    throw ConfigError("override '" + spec + "' must look like section.key=value");
  }
  set_key(cfg, path.substr(0, dot), path.substr(dot + 1), value);
}

std::string render_run_config(const RunConfig& cfg) {
  const TrainConfig& t = cfg.train;
  const CorpusSpec& c = cfg.corpus;
  std::ostringstream out;
  out << "[train]\n";
  out << "batch_size = " << t.batch_size << "\n";
  out << "epochs = " << t.epochs << "\n";
  out << "alpha_target = " << format_double(t.alpha_target) << "\n";
  out << "beta_target = " << format_double(t.beta_target) << "\n";
  out << "warmup_start = " << format_double(t.warmup_start) << "\n";
  out << "weight_decay = " << format_double(t.weight_decay) << "\n";
  out << "momentum_m = " << format_double(t.momentum_m) << "\n";
  out << "renormalize_slots = " << (t.renormalize_slots ? "true" : "false") << "\n";
  out << "tau = " << format_double(t.tau) << "\n";
  out << "lambda = " << format_double(t.lambda) << "\n";
  out << "queue_len = " << t.queue_len << "\n";
  out << "jury_queue_per_stage = " << (t.jury_queue_per_stage ? "true" : "false") << "\n";
  out << "repetition_rate = " << format_double(t.repetition_rate) << "\n";
  out << "use_meta = " << (t.use_meta ? "true" : "false") << "\n";
  out << "use_memory = " << (t.use_memory ? "true" : "false") << "\n";
  out << "use_jury = " << (t.use_jury ? "true" : "false") << "\n";
  out << "meta_mode = " << meta_mode_name(t.meta_mode) << "\n";
  out << "inner_opt = " << inner_opt_name(t.inner_opt) << "\n";
  out << "warm_start_iters = " << t.warm_start_iters << "\n";
  out << "\n[model]\n";
  out << "n_classes = " << t.n_classes << "\n";
  out << "d_emb = " << t.d_emb << "\n";
  out << "d_h = " << t.d_h << "\n";
  out << "d_f = " << t.d_f << "\n";
  out << "activation = " << activation_name(t.activation) << "\n";
  out << "init_scale = " << format_double(t.init_scale) << "\n";
  out << "max_len = " << t.max_len << "\n";
  out << "\n[data]\n";
  out << "dir = " << cfg.data_dir << "\n";
  out << "eval_file = " << cfg.eval_file << "\n";
  out << "\n[corpus]\n";
  out << "domains = " << c.domains << "\n";
  out << "classes = " << c.classes << "\n";
  out << "per_class = " << c.per_class << "\n";
  out << "shared_vocab = " << c.shared_vocab << "\n";
  out << "domain_vocab = " << c.domain_vocab << "\n";
  out << "flip_vocab = " << c.flip_vocab << "\n";
  out << "sentence_len = " << c.sentence_len << "\n";
  out << "\n[run]\n";
  out << "mode = " << cfg.mode << "\n";
  out << "out = " << cfg.out_dir << "\n";
  out << "seed = " << t.seed << "\n";
  out << "checkpoint_every = " << cfg.checkpoint_every << "\n";
  out << "eval_every = " << cfg.eval_every << "\n";
  out << "overwrite = " << (cfg.overwrite ? "true" : "false") << "\n";
  return out.str();
}

}  // namespace metadg
