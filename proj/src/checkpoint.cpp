#include "metadg/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <utility>
#include <vector>

#include "json.hpp"
#include "metadg/common.hpp"

namespace metadg {

namespace {

using json = nlohmann::json;

constexpr int kVersion = 1;

struct Entry {
  std::string name;
  std::int64_t rows = 0;
  std::int64_t cols = 0;
};

// Header order is the payload order. The expected sequence is derived from
// the config plus two facts recorded in the header: the bank's domain count
// and whether the outer optimizer has moments yet.
std::vector<Entry> expected_entries(const TrainConfig& cfg, int memory_domains,
                                    bool has_moments) {
  const std::int64_t V = cfg.vocab, E = cfg.d_emb, H = cfg.d_h, F = cfg.d_f, C = cfg.n_classes;
  std::vector<Entry> model = {
      {"encoder.embedding", V, E}, {"encoder.w1", E, H}, {"encoder.b1", 1, H},
      {"encoder.w2", H, F},        {"encoder.b2", 1, F}, {"classifier.w", F, C},
      {"classifier.b", 1, C}};
  std::vector<Entry> out = model;
  if (cfg.use_jury) {
    for (int i = 0; i < 5; ++i) out.push_back({"key." + model[static_cast<std::size_t>(i)].name,
                                               model[static_cast<std::size_t>(i)].rows,
                                               model[static_cast<std::size_t>(i)].cols});
  }
  if (has_moments) {
    for (const char* prefix : {"outer.m.", "outer.v."}) {
      for (const Entry& e : model) out.push_back({prefix + e.name, e.rows, e.cols});
    }
  }
  if (cfg.use_memory) {
    for (int d = 0; d < memory_domains; ++d) {
      out.push_back({"memory.d" + std::to_string(d), C, F});
    }
  }
  if (cfg.use_jury) {
    for (int c = 0; c < C; ++c) {
      out.push_back({"jury.c" + std::to_string(c), cfg.queue_len, F});
    }
  }
  return out;
}

// Live tensors in the same order as expected_entries.
std::vector<Tensor> live_tensors(const TrainState& state, const TrainConfig& cfg) {
  const EncoderParams& e = state.params.encoder;
  const ClassifierParams& c = state.params.classifier;
  std::vector<Tensor> out = {e.embedding, e.w1, e.b1, e.w2, e.b2, c.w, c.b};
  if (cfg.use_jury) {
    const EncoderParams& k = state.key_encoder;
    for (const Tensor& t : {k.embedding, k.w1, k.b1, k.w2, k.b2}) out.push_back(t);
  }
  if (!state.outer.m.empty()) {
    for (const Tensor& t : state.outer.m) out.push_back(t);
    for (const Tensor& t : state.outer.v) out.push_back(t);
  }
  if (cfg.use_memory) {
    for (int d = 0; d < state.bank.domains(); ++d) out.push_back(state.bank.slots(d));
  }
  if (cfg.use_jury) {
    for (int cls = 0; cls < state.queues.classes(); ++cls) out.push_back(state.queues.buffer(cls));
  }
  return out;
}

void write_values(std::ofstream& out, const Tensor& t) {
  std::vector<unsigned char> buf;
  buf.reserve(t.values().size() * 8);
  for (double x : t.values()) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(x);
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<unsigned char>((bits >> (8 * i)) & 0xff));
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

std::vector<double> read_values(std::ifstream& in, std::int64_t count, const std::string& path) {
  std::vector<unsigned char> buf(static_cast<std::size_t>(count) * 8);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) {
    throw DataError("checkpoint " + path + " is truncated");
  }
  std::vector<double> out(static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(buf[i * 8 + static_cast<std::size_t>(b)]) << (8 * b);
    }
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

[[noreturn]] void structural_mismatch(const std::string& what) {
  throw ConfigError("checkpoint does not match the config: " + what);
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainState& state, const TrainConfig& cfg,
                     const std::string& config_echo) {
  const bool has_moments = !state.outer.m.empty();
  const int memory_domains = cfg.use_memory ? state.bank.domains() : 0;
  const std::vector<Entry> entries = expected_entries(cfg, memory_domains, has_moments);
  const std::vector<Tensor> tensors = live_tensors(state, cfg);
  if (entries.size() != tensors.size()) {
    throw std::logic_error("save_checkpoint: tensor sequence out of sync");
  }

  json header;
  header["version"] = kVersion;
  header["iter"] = state.iter;
  header["rng"] = state.rng.serialize();
  header["outer"] = {{"step", state.outer.step},
                     {"beta1", state.outer.beta1},
                     {"beta2", state.outer.beta2},
                     {"eps", state.outer.eps},
                     {"has_moments", has_moments}};
  header["model"] = {{"vocab", cfg.vocab},     {"d_emb", cfg.d_emb},
                     {"d_h", cfg.d_h},         {"d_f", cfg.d_f},
                     {"n_classes", cfg.n_classes}, {"activation", activation_name(cfg.activation)}};
  header["flags"] = {{"use_meta", cfg.use_meta},
                     {"use_memory", cfg.use_memory},
                     {"use_jury", cfg.use_jury}};
  if (cfg.use_memory) header["memory"] = {{"domains", memory_domains}};
  if (cfg.use_jury) {
    std::vector<int> cursors;
    for (int c = 0; c < state.queues.classes(); ++c) cursors.push_back(state.queues.cursor(c));
    header["jury"] = {{"queue_len", cfg.queue_len}, {"cursors", cursors}};
  }
  json tens = json::array();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    tens.push_back({{"name", entries[i].name}, {"rows", entries[i].rows},
                    {"cols", entries[i].cols}});
    if (tensors[i].shape()[0] != entries[i].rows || tensors[i].shape()[1] != entries[i].cols) {
      throw std::logic_error("save_checkpoint: shape drift on " + entries[i].name);
    }
  }
  header["tensors"] = std::move(tens);
  header["config"] = config_echo;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path);
  out << header.dump() << "\n";
  for (const Tensor& t : tensors) write_values(out, t);
  out.flush();
  if (!out) throw DataError("write failed for checkpoint " + path);
}

TrainState load_checkpoint(const std::string& path, const TrainConfig& cfg,
                           CheckpointMeta* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("checkpoint " + path + " has no header");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw DataError("checkpoint " + path + " header is corrupt: " + e.what());
  }

  try {
    const int version = header.at("version").get<int>();
    if (version != kVersion) {
      throw ConfigError("checkpoint " + path + " is version " + std::to_string(version) +
                        "; this build reads version " + std::to_string(kVersion));
    }

    const json& model = header.at("model");
    if (model.at("vocab").get<int>() != cfg.vocab) structural_mismatch("vocabulary size");
    if (model.at("d_emb").get<int>() != cfg.d_emb || model.at("d_h").get<int>() != cfg.d_h ||
        model.at("d_f").get<int>() != cfg.d_f) {
      structural_mismatch("model dimensions");
    }
    if (model.at("n_classes").get<int>() != cfg.n_classes) structural_mismatch("class count");
    if (model.at("activation").get<std::string>() != activation_name(cfg.activation)) {
      structural_mismatch("activation");
    }
    const json& flags = header.at("flags");
    if (flags.at("use_memory").get<bool>() != cfg.use_memory) structural_mismatch("memory flag");
    if (flags.at("use_jury").get<bool>() != cfg.use_jury) structural_mismatch("jury flag");
    if (cfg.use_jury && header.at("jury").at("queue_len").get<int>() != cfg.queue_len) {
      structural_mismatch("queue length");
    }

    const bool has_moments = header.at("outer").at("has_moments").get<bool>();
    const int memory_domains =
        cfg.use_memory ? header.at("memory").at("domains").get<int>() : 0;
    if (cfg.use_memory && memory_domains < 1) {
      throw DataError("checkpoint " + path + " records no memory domains");
    }
    const std::vector<Entry> entries = expected_entries(cfg, memory_domains, has_moments);
    const json& tens = header.at("tensors");
    if (tens.size() != entries.size()) structural_mismatch("tensor count");
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (tens[i].at("name").get<std::string>() != entries[i].name ||
          tens[i].at("rows").get<std::int64_t>() != entries[i].rows ||
          tens[i].at("cols").get<std::int64_t>() != entries[i].cols) {
        structural_mismatch("tensor " + entries[i].name);
      }
    }

    std::vector<Tensor> loaded;
    loaded.reserve(entries.size());
    for (const Entry& e : entries) {
      loaded.push_back(Tensor({e.rows, e.cols}, read_values(in, e.rows * e.cols, path)));
    }
    char extra = 0;
    if (in.read(&extra, 1).gcount() != 0) {
      throw DataError("checkpoint " + path + " has trailing bytes");
    }

    TrainState st;
    st.iter = header.at("iter").get<std::int64_t>();
    st.rng.deserialize(header.at("rng").get<std::string>());
    st.params.dims = ModelDims{cfg.vocab, cfg.d_emb, cfg.d_h, cfg.d_f, cfg.n_classes};
    st.params.activation = cfg.activation;
    std::size_t at = 0;
    EncoderParams& enc = st.params.encoder;
    enc.embedding = loaded[at++];
    enc.w1 = loaded[at++];
    enc.b1 = loaded[at++];
    enc.w2 = loaded[at++];
    enc.b2 = loaded[at++];
    st.params.classifier.w = loaded[at++];
    st.params.classifier.b = loaded[at++];
    if (cfg.use_jury) {
      EncoderParams& k = st.key_encoder;
      k.embedding = loaded[at++];
      k.w1 = loaded[at++];
      k.b1 = loaded[at++];
      k.w2 = loaded[at++];
      k.b2 = loaded[at++];
    }
    const json& outer = header.at("outer");
    st.outer.step = outer.at("step").get<std::int64_t>();
    st.outer.beta1 = outer.at("beta1").get<double>();
    st.outer.beta2 = outer.at("beta2").get<double>();
    st.outer.eps = outer.at("eps").get<double>();
    if (has_moments) {
      for (int i = 0; i < 7; ++i) st.outer.m.push_back(loaded[at++]);
      for (int i = 0; i < 7; ++i) st.outer.v.push_back(loaded[at++]);
    }
    if (cfg.use_memory) {
      MemoryConfig mc;
      mc.momentum = cfg.momentum_m;
      mc.tau = cfg.tau;
      mc.renormalize = cfg.renormalize_slots;
      st.bank = MemoryBank(memory_domains, cfg.n_classes, cfg.d_f, mc);
      for (int d = 0; d < memory_domains; ++d) {
        const Tensor& src = loaded[at++];
        std::copy(src.values().begin(), src.values().end(), st.bank.slots(d).data());
      }
    }
    if (cfg.use_jury) {
      RngStream scratch(0);
      st.queues = JuryQueues(cfg.n_classes, cfg.queue_len, cfg.d_f, scratch);
      const std::vector<int> cursors =
          header.at("jury").at("cursors").get<std::vector<int>>();
      if (cursors.size() != static_cast<std::size_t>(cfg.n_classes)) {
        throw DataError("checkpoint " + path + " cursor list has the wrong length");
      }
      for (int c = 0; c < cfg.n_classes; ++c) {
        const Tensor& src = loaded[at++];
        std::copy(src.values().begin(), src.values().end(), st.queues.buffer(c).data());
        st.queues.set_cursor(c, cursors[static_cast<std::size_t>(c)]);
      }
    }

    if (meta != nullptr) {
      meta->version = version;
      meta->iter = st.iter;
      meta->config_echo = header.value("config", std::string());
    }
    return st;
  } catch (const json::exception& e) {
    throw DataError("checkpoint " + path + " header is missing fields: " + e.what());
  }
}

}  // namespace metadg
