#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "metadg/rng.hpp"

namespace metadg {

// Token ids are dense; 0 and 1 are reserved.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  Vocab();

  // Adds a token if absent; returns its id either way.
  int add(const std::string& token);
  // Lookup, kUnk for out-of-vocabulary tokens.
  int id_of(const std::string& token) const;
  const std::string& token_of(int id) const;
  bool contains(const std::string& token) const { return to_id_.count(token) > 0; }
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::unordered_map<std::string, int> to_id_;
  std::vector<std::string> tokens_;
};

struct Example {
  std::vector<int> tokens;
  int label = 0;
  int domain = 0;
};

struct DomainDataset {
  int domain = 0;
  std::vector<Example> examples;
  // by_class[c] lists indices into `examples` with label c.
  std::vector<std::vector<int>> by_class;

  void rebuild_index(int n_classes);
  bool index_consistent() const;
  std::size_t size() const { return examples.size(); }
};

// Lowercase, whitespace-split, vocab-mapped, truncated to max_len. Empty
// input degrades to a single unknown token.
std::vector<int> tokenize(const std::string& text, const Vocab& vocab, int max_len);

// Duplicates k tokens in place, k drawn uniformly from [0, max(2, floor(r*N))]
// and capped at N; the duplicated copy sits immediately after the original.
std::vector<int> word_repetition(const std::vector<int>& tokens, double r, RngStream& rng);

// B examples without replacement, falling back to replacement when B exceeds
// the dataset.
std::vector<Example> sample_batch(const DomainDataset& dataset, int batch_size, RngStream& rng);

// One JSON object per line with "text" and "label". Malformed lines are
// skipped; the count is reported through the optional out-param and the log.
DomainDataset load_jsonl(const std::string& path, const Vocab& vocab, int domain, int max_len,
                         int* malformed_count = nullptr);

}  // namespace metadg
