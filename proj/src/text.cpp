#include "metadg/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "metadg/common.hpp"

namespace metadg {

Vocab::Vocab() {
  add("<pad>");
  add("<unk>");
}

int Vocab::add(const std::string& token) {
  auto it = to_id_.find(token);
  if (it != to_id_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  to_id_.emplace(token, id);
  tokens_.push_back(token);
  return id;
}

int Vocab::id_of(const std::string& token) const {
  auto it = to_id_.find(token);
  return it == to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token_of(int id) const {
  if (id < 0 || id >= size()) {
    throw std::out_of_range("Vocab: id " + std::to_string(id) + " out of range [0, " +
                            std::to_string(size()) + ")");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

void DomainDataset::rebuild_index(int n_classes) {
  if (n_classes < 1) throw std::invalid_argument("rebuild_index: n_classes must be positive");
  by_class.assign(static_cast<std::size_t>(n_classes), {});
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const int y = examples[i].label;
    if (y < 0 || y >= n_classes) {
      throw DataError("domain " + std::to_string(domain) + ": label " + std::to_string(y) +
                      " out of range [0, " + std::to_string(n_classes) + ")");
    }
    by_class[static_cast<std::size_t>(y)].push_back(static_cast<int>(i));
  }
}

bool DomainDataset::index_consistent() const {
  std::size_t covered = 0;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    for (int i : by_class[c]) {
      if (i < 0 || static_cast<std::size_t>(i) >= examples.size()) return false;
      if (examples[static_cast<std::size_t>(i)].label != static_cast<int>(c)) return false;
      ++covered;
    }
  }
  return covered == examples.size();
}

std::vector<int> tokenize(const std::string& text, const Vocab& vocab, int max_len) {
  if (max_len < 1) throw std::invalid_argument("tokenize: max_len must be at least 1");
  std::vector<int> ids;
  std::string word;
  std::istringstream in(text);
  while (in >> word && static_cast<int>(ids.size()) < max_len) {
    for (auto& ch : word) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    ids.push_back(vocab.id_of(word));
  }
  if (ids.empty()) {
    log_warn("tokenize: empty input, emitting a single unknown token");
    ids.push_back(Vocab::kUnk);
  }
  return ids;
}

std::vector<int> word_repetition(const std::vector<int>& tokens, double r, RngStream& rng) {
  if (tokens.empty()) throw std::invalid_argument("word_repetition: empty token sequence");
  if (r < 0.0 || r > 1.0) {
    throw std::invalid_argument("word_repetition: rate " + std::to_string(r) +
                                " outside [0, 1]");
  }
  const std::int64_t n = static_cast<std::int64_t>(tokens.size());
  std::int64_t hi = std::max<std::int64_t>(2, static_cast<std::int64_t>(r * static_cast<double>(n)));
  hi = std::min(hi, n);
  const std::int64_t k = rng.uniform_int(0, hi);
  std::vector<std::size_t> rep = rng.sample_indices(static_cast<std::size_t>(n),
                                                    static_cast<std::size_t>(k));
  std::sort(rep.begin(), rep.end());
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(n + k));
  std::size_t next = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    out.push_back(tokens[static_cast<std::size_t>(i)]);
    if (next < rep.size() && rep[next] == static_cast<std::size_t>(i)) {
      out.push_back(tokens[static_cast<std::size_t>(i)]);
      ++next;
    }
  }
  return out;
}

std::vector<Example> sample_batch(const DomainDataset& dataset, int batch_size, RngStream& rng) {
  if (batch_size < 1) throw std::invalid_argument("sample_batch: batch size must be positive");
  if (dataset.examples.empty()) {
    throw DataError("sample_batch: domain " + std::to_string(dataset.domain) + " is empty");
  }
  const std::int64_t n = static_cast<std::int64_t>(dataset.examples.size());
  std::vector<Example> batch;
  batch.reserve(static_cast<std::size_t>(batch_size));
  if (batch_size <= n) {
    for (std::size_t i : rng.sample_indices(static_cast<std::size_t>(n),
                                            static_cast<std::size_t>(batch_size))) {
      batch.push_back(dataset.examples[i]);
    }
  } else {
    for (int i = 0; i < batch_size; ++i) {
      batch.push_back(dataset.examples[static_cast<std::size_t>(
          rng.below(static_cast<std::uint64_t>(n)))]);
    }
  }
  return batch;
}

DomainDataset load_jsonl(const std::string& path, const Vocab& vocab, int domain, int max_len,
                         int* malformed_count) {
  std::ifstream in(path);
  if (!in) throw DataError("load_jsonl: cannot open " + path);
  DomainDataset ds;
  ds.domain = domain;
  int malformed = 0;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj = nlohmann::json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object() || !obj.contains("text") ||
        !obj["text"].is_string() || !obj.contains("label") ||
        !obj["label"].is_number_integer() || obj["label"].get<int>() < 0) {
      ++malformed;
      log_warn("load_jsonl: " + path + ":" + std::to_string(line_no) + " malformed, skipped");
      continue;
    }
    Example ex;
    ex.tokens = tokenize(obj["text"].get<std::string>(), vocab, max_len);
    ex.label = obj["label"].get<int>();
    ex.domain = domain;
    ds.examples.push_back(std::move(ex));
  }
  if (ds.examples.empty()) log_warn("load_jsonl: " + path + " produced an empty dataset");
  if (malformed_count) *malformed_count = malformed;
  return ds;
}

}  // namespace metadg
