#include "metadg/synthetic.hpp"

#include <cmath>
#include <stdexcept>

#include "metadg/common.hpp"

namespace metadg {

namespace {

constexpr int kNeutralVocab = 8;
// Share of flip-token draws that come from the domain's own flip group. Kept
// under one half so the majority reading of a flip token across domains is
// its base class; the minority own-group reading is what a held-out domain
// punishes.
constexpr double kOwnGroupShare = 0.40;
// Sentence slot mix. One slot per family is guaranteed; the rest are drawn
// from this categorical. Flip outweighs shared so a bag-of-words reader that
// trusts flip tokens pays for it on a held-out domain.
constexpr double kShareShared = 0.30;
constexpr double kShareFlip = 0.30;
constexpr double kShareDomain = 0.22;
// Fraction of shared-token draws that point at a wrong class, keeping the
// shared signal real but not fully reliable.
constexpr double kSharedNoise = 0.10;

std::string shared_token(int id) { return "s" + std::to_string(id); }
std::string flip_token(int id) { return "f" + std::to_string(id); }
std::string domain_token(int domain, int slot) {
  return "d" + std::to_string(domain) + "_" + std::to_string(slot);
}
std::string neutral_token(int slot) { return "n" + std::to_string(slot); }

}  // namespace

void CorpusSpec::validate() const {
  if (domains < 2) throw ConfigError("corpus spec: domains must be at least 2");
  if (classes < 2) throw ConfigError("corpus spec: classes must be at least 2");
  if (per_class < 1) throw ConfigError("corpus spec: per_class must be positive");
  if (shared_vocab < 1) throw ConfigError("corpus spec: shared lexicon must be nonempty");
  if (domain_vocab < 1) throw ConfigError("corpus spec: domain lexicon must be nonempty");
  if (flip_vocab < 1) throw ConfigError("corpus spec: flip lexicon must be nonempty");
  if (shared_vocab % classes != 0) {
    throw ConfigError("corpus spec: shared_vocab " + std::to_string(shared_vocab) +
                      " not divisible by classes " + std::to_string(classes));
  }
  if (flip_vocab % (classes * domains) != 0) {
    throw ConfigError("corpus spec: flip_vocab " + std::to_string(flip_vocab) +
                      " not divisible by classes*domains " + std::to_string(classes * domains));
  }
  if (sentence_len < 4) {
    throw ConfigError("corpus spec: sentence_len " + std::to_string(sentence_len) +
                      " too short for the shared/flip/domain mix");
  }
}

Vocab build_corpus_vocab(const CorpusSpec& spec) {
  spec.validate();
  Vocab vocab;
  for (int i = 0; i < spec.shared_vocab; ++i) vocab.add(shared_token(i));
  for (int i = 0; i < spec.flip_vocab; ++i) vocab.add(flip_token(i));
  for (int d = 0; d < spec.domains; ++d)
    for (int j = 0; j < spec.domain_vocab; ++j) vocab.add(domain_token(d, j));
  for (int j = 0; j < kNeutralVocab; ++j) vocab.add(neutral_token(j));
  return vocab;
}

std::vector<std::vector<RawRecord>> generate_synthetic_records(const CorpusSpec& spec,
                                                               std::uint64_t seed) {
  spec.validate();
  RngStream rng(seed);
  const int shared_per_class = spec.shared_vocab / spec.classes;
  const int flip_slots = spec.flip_vocab / (spec.classes * spec.domains);

  // Flip token id for (group, base class, slot); group = (id/classes) mod
  // domains, base = id mod classes.
  auto flip_id = [&](int group, int base, int slot) {
    return (group + spec.domains * slot) * spec.classes + base;
  };

  std::vector<std::vector<RawRecord>> out(static_cast<std::size_t>(spec.domains));
  for (int d = 0; d < spec.domains; ++d) {
    auto& records = out[static_cast<std::size_t>(d)];
    records.reserve(static_cast<std::size_t>(spec.classes * spec.per_class));
    for (int c = 0; c < spec.classes; ++c) {
      for (int i = 0; i < spec.per_class; ++i) {
        auto draw_shared = [&]() {
          int cls = c;
          if (rng.uniform01() < kSharedNoise) {
            cls = (c + 1 + static_cast<int>(rng.below(spec.classes - 1))) % spec.classes;
          }
          const int slot = static_cast<int>(rng.below(shared_per_class));
          return shared_token(cls + spec.classes * slot);
        };
        auto draw_flip = [&]() {
          // Every drawn flip token indicates class c inside domain d: own-group
          // tokens do it through the rotation, foreign ones through their base.
          if (rng.uniform01() < kOwnGroupShare) {
            const int base = (c - 1 + spec.classes) % spec.classes;
            return flip_token(flip_id(d, base, static_cast<int>(rng.below(flip_slots))));
          }
          int group = static_cast<int>(rng.below(spec.domains - 1));
          if (group >= d) ++group;
          return flip_token(flip_id(group, c, static_cast<int>(rng.below(flip_slots))));
        };
        auto draw_domain = [&]() {
          return domain_token(d, static_cast<int>(rng.below(spec.domain_vocab)));
        };
        auto draw_neutral = [&]() {
          return neutral_token(static_cast<int>(rng.below(kNeutralVocab)));
        };

        std::vector<std::string> words;
        words.reserve(static_cast<std::size_t>(spec.sentence_len));
        words.push_back(draw_shared());
        words.push_back(draw_flip());
        words.push_back(draw_domain());
        for (int j = 3; j < spec.sentence_len; ++j) {
          const double u = rng.uniform01();
          if (u < kShareShared) {
            words.push_back(draw_shared());
          } else if (u < kShareShared + kShareFlip) {
            words.push_back(draw_flip());
          } else if (u < kShareShared + kShareFlip + kShareDomain) {
            words.push_back(draw_domain());
          } else {
            words.push_back(draw_neutral());
          }
        }
        rng.shuffle(words);
        std::string text;
        for (std::size_t w = 0; w < words.size(); ++w) {
          if (w) text += ' ';
          text += words[w];
        }
        records.push_back(RawRecord{std::move(text), c});
      }
    }
  }
  return out;
}

std::vector<DomainDataset> generate_synthetic_corpus(const CorpusSpec& spec, std::uint64_t seed,
                                                     int max_len, Vocab* vocab_out) {
  Vocab vocab = build_corpus_vocab(spec);
  auto records = generate_synthetic_records(spec, seed);
  std::vector<DomainDataset> datasets(static_cast<std::size_t>(spec.domains));
  for (int d = 0; d < spec.domains; ++d) {
    auto& ds = datasets[static_cast<std::size_t>(d)];
    ds.domain = d;
    for (const auto& rec : records[static_cast<std::size_t>(d)]) {
      Example ex;
      ex.tokens = tokenize(rec.text, vocab, max_len);
      ex.label = rec.label;
      ex.domain = d;
      ds.examples.push_back(std::move(ex));
    }
    ds.rebuild_index(spec.classes);
  }
  if (vocab_out) *vocab_out = std::move(vocab);
  return datasets;
}

}  // namespace metadg
