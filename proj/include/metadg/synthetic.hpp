#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "metadg/text.hpp"

namespace metadg {

// Knobs for the generated multi-domain corpus. Three token families drive
// the labels: shared tokens always indicate their class, domain tokens carry
// no class signal, and flip tokens indicate their base class everywhere
// except in their home domain, where the indicated class rotates by one.
struct CorpusSpec {
  int domains = 4;
  int classes = 2;
  int per_class = 200;       // examples per domain per class
  int shared_vocab = 24;     // must divide evenly across classes
  int domain_vocab = 12;     // per-domain token count
  int flip_vocab = 32;       // must divide evenly across classes x domains
  int sentence_len = 16;

  void validate() const;
};

struct RawRecord {
  std::string text;
  int label = 0;
};

// Deterministic token inventory for a spec; independent of the seed so one
// vocab serves every corpus drawn from the same spec.
Vocab build_corpus_vocab(const CorpusSpec& spec);

// Raw per-domain records, pure in (spec, seed). Class balance is exact.
std::vector<std::vector<RawRecord>> generate_synthetic_records(const CorpusSpec& spec,
                                                               std::uint64_t seed);

// Records tokenized against build_corpus_vocab with class indices rebuilt.
std::vector<DomainDataset> generate_synthetic_corpus(const CorpusSpec& spec, std::uint64_t seed,
                                                     int max_len, Vocab* vocab_out = nullptr);

}  // namespace metadg
