#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <vector>

#include "doctest.h"
#include "metadg/common.hpp"
#include "metadg/synthetic.hpp"
#include "metadg/text.hpp"

using namespace metadg;

TEST_CASE("vocab round trip and reserved ids") {
  Vocab v;
  CHECK(v.size() == 2);
  const int good = v.add("good");
  const int book = v.add("book");
  CHECK(v.add("good") == good);
  CHECK(v.id_of("good") == good);
  CHECK(v.id_of("zzz") == Vocab::kUnk);
  CHECK(v.token_of(book) == "book");
  CHECK_THROWS_AS(v.token_of(99), std::out_of_range);
}

TEST_CASE("tokenizer lowercases, maps, truncates") {
  Vocab v;
  v.add("good");
  v.add("book");
  CHECK(tokenize("Good BOOK", v, 512) == std::vector<int>{v.id_of("good"), v.id_of("book")});
  CHECK(tokenize("zzz", v, 512) == std::vector<int>{Vocab::kUnk});
  set_quiet_logging(true);
  CHECK(tokenize("   ", v, 512) == std::vector<int>{Vocab::kUnk});
  set_quiet_logging(false);

  std::string long_text;
  for (int i = 0; i < 600; ++i) long_text += "good ";
  CHECK(tokenize(long_text, v, 512).size() == 512);
}

TEST_CASE("word repetition duplicates in place and preserves order") {
  RngStream rng(11);
  const std::vector<int> input{5, 6, 7, 8, 9, 10, 11, 12, 13, 14};
  for (int trial = 0; trial < 200; ++trial) {
    auto out = word_repetition(input, 0.32, rng);
    const std::size_t k = out.size() - input.size();
    CHECK(k <= 3);  // max(2, floor(0.32*10)) = 3
    // Removing the second half of each adjacent duplicate recovers the input.
    std::vector<int> recovered;
    std::size_t dropped = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (dropped < k && i + 1 < out.size() && out[i + 1] == out[i]) {
        recovered.push_back(out[i]);
        ++i;
        ++dropped;
      } else {
        recovered.push_back(out[i]);
      }
    }
    CHECK(recovered == input);
  }
}

TEST_CASE("word repetition hits its whole k range") {
  RngStream rng(3);
  const std::vector<int> input{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::set<std::size_t> seen;
  for (int trial = 0; trial < 400; ++trial) {
    seen.insert(word_repetition(input, 0.32, rng).size() - input.size());
  }
  CHECK(seen == std::set<std::size_t>{0, 1, 2, 3});
}

TEST_CASE("word repetition at rate zero still allows two copies") {
  RngStream rng(5);
  const std::vector<int> input{1, 2, 3, 4};
  std::set<std::size_t> seen;
  for (int trial = 0; trial < 200; ++trial) {
    seen.insert(word_repetition(input, 0.0, rng).size() - input.size());
  }
  CHECK(seen == std::set<std::size_t>{0, 1, 2});
}

TEST_CASE("word repetition caps k at the sequence length") {
  RngStream rng(7);
  const std::vector<int> input{42};
  for (int trial = 0; trial < 50; ++trial) {
    auto out = word_repetition(input, 1.0, rng);
    CHECK(out.size() <= 2);
  }
  CHECK_THROWS_AS(word_repetition({}, 0.5, rng), std::invalid_argument);
  CHECK_THROWS_AS(word_repetition(input, 1.5, rng), std::invalid_argument);
}

TEST_CASE("batch sampling is deterministic and respects replacement rules") {
  DomainDataset ds;
  ds.domain = 0;
  for (int i = 0; i < 40; ++i) ds.examples.push_back(Example{{i + 2}, i % 2, 0});
  RngStream a(9), b(9);
  auto batch1 = sample_batch(ds, 8, a);
  auto batch2 = sample_batch(ds, 8, b);
  REQUIRE(batch1.size() == 8);
  std::set<int> distinct;
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(batch1[i].tokens == batch2[i].tokens);
    distinct.insert(batch1[i].tokens[0]);
  }
  CHECK(distinct.size() == 8);

  DomainDataset tiny;
  tiny.domain = 1;
  for (int i = 0; i < 3; ++i) tiny.examples.push_back(Example{{i}, 0, 1});
  CHECK(sample_batch(tiny, 5, a).size() == 5);

  DomainDataset empty;
  CHECK_THROWS_AS(sample_batch(empty, 4, a), DataError);
}

TEST_CASE("jsonl loading skips malformed lines with a count") {
  const char* path = "test_text_corpus.jsonl";
  {
    std::ofstream f(path);
    f << R"({"text": "good book", "label": 1})" << "\n";
    f << "not json at all\n";
    f << R"({"text": "bad plot", "label": 0})" << "\n";
    f << R"({"text": 7, "label": 0})" << "\n";
    f << R"({"text": "missing label"})" << "\n";
  }
  Vocab v;
  v.add("good");
  v.add("book");
  v.add("bad");
  v.add("plot");
  set_quiet_logging(true);
  int malformed = 0;
  DomainDataset ds = load_jsonl(path, v, 2, 512, &malformed);
  set_quiet_logging(false);
  std::remove(path);
  CHECK(ds.examples.size() == 2);
  CHECK(malformed == 3);
  CHECK(ds.examples[0].domain == 2);
  CHECK(ds.examples[0].label == 1);
  CHECK(ds.examples[1].tokens == std::vector<int>{v.id_of("bad"), v.id_of("plot")});
  CHECK_THROWS_AS(load_jsonl("no_such_file.jsonl", v, 0, 512, nullptr), DataError);

  const char* empty_path = "test_text_empty.jsonl";
  { std::ofstream f(empty_path); }
  set_quiet_logging(true);
  DomainDataset empty = load_jsonl(empty_path, v, 0, 512, &malformed);
  set_quiet_logging(false);
  std::remove(empty_path);
  CHECK(empty.examples.empty());
  CHECK(malformed == 0);
}

TEST_CASE("class index rebuild verifies labels and coverage") {
  DomainDataset ds;
  ds.domain = 0;
  ds.examples.push_back(Example{{2}, 0, 0});
  ds.examples.push_back(Example{{3}, 1, 0});
  ds.examples.push_back(Example{{4}, 1, 0});
  ds.rebuild_index(2);
  CHECK(ds.by_class[0] == std::vector<int>{0});
  CHECK(ds.by_class[1] == std::vector<int>{1, 2});
  CHECK(ds.index_consistent());
  ds.examples.push_back(Example{{5}, 3, 0});
  CHECK_THROWS_AS(ds.rebuild_index(2), DataError);
}

TEST_CASE("synthetic corpus is balanced and deterministic") {
  CorpusSpec spec;
  spec.per_class = 50;
  auto a = generate_synthetic_records(spec, 7);
  auto b = generate_synthetic_records(spec, 7);
  auto c = generate_synthetic_records(spec, 8);
  REQUIRE(a.size() == 4);
  int total = 0;
  bool differs_by_seed = false;
  for (int d = 0; d < 4; ++d) {
    REQUIRE(a[d].size() == 100);
    int per_class[2] = {0, 0};
    for (std::size_t i = 0; i < a[d].size(); ++i) {
      per_class[a[d][i].label]++;
      CHECK(a[d][i].text == b[d][i].text);
      if (a[d][i].text != c[d][i].text) differs_by_seed = true;
      ++total;
    }
    CHECK(per_class[0] == 50);
    CHECK(per_class[1] == 50);
  }
  CHECK(total == 400);
  CHECK(differs_by_seed);

  CorpusSpec bad = spec;
  bad.shared_vocab = 0;
  CHECK_THROWS_AS(generate_synthetic_records(bad, 7), ConfigError);
  bad = spec;
  bad.flip_vocab = 30;  // not divisible by classes*domains
  CHECK_THROWS_AS(generate_synthetic_records(bad, 7), ConfigError);
}

TEST_CASE("synthetic datasets tokenize fully in vocabulary") {
  CorpusSpec spec;
  spec.per_class = 20;
  Vocab vocab;
  auto datasets = generate_synthetic_corpus(spec, 7, 512, &vocab);
  REQUIRE(datasets.size() == 4);
  for (const auto& ds : datasets) {
    CHECK(ds.index_consistent());
    for (const auto& ex : ds.examples) {
      CHECK(ex.tokens.size() == 16);
      for (int id : ex.tokens) CHECK(id >= 2);  // no pad/unk leakage
    }
  }
}

namespace {

// Bag-of-words multinomial logistic regression, full-batch gradient descent.
// Serves as the reference probe for the domain gap of the generated corpus.
struct LinearProbe {
  int vocab = 0;
  int classes = 0;
  std::vector<double> w;  // classes x vocab
  std::vector<double> b;

  void fit(const std::vector<const Example*>& train, int vocab_size, int n_classes,
           int iters = 300, double lr = 0.5) {
    vocab = vocab_size;
    classes = n_classes;
    w.assign(static_cast<std::size_t>(classes * vocab), 0.0);
    b.assign(static_cast<std::size_t>(classes), 0.0);
    const double n = static_cast<double>(train.size());
    std::vector<double> logits(static_cast<std::size_t>(classes));
    std::vector<double> gw(w.size()), gb(b.size());
    for (int it = 0; it < iters; ++it) {
      std::fill(gw.begin(), gw.end(), 0.0);
      std::fill(gb.begin(), gb.end(), 0.0);
      for (const Example* ex : train) {
        score(*ex, logits);
        double mx = logits[0];
        for (int c = 1; c < classes; ++c) mx = std::max(mx, logits[c]);
        double denom = 0.0;
        for (int c = 0; c < classes; ++c) denom += std::exp(logits[c] - mx);
        for (int c = 0; c < classes; ++c) {
          const double p = std::exp(logits[c] - mx) / denom;
          const double delta = p - (c == ex->label ? 1.0 : 0.0);
          gb[c] += delta / n;
          for (int tok : ex->tokens) gw[static_cast<std::size_t>(c * vocab + tok)] += delta / n;
        }
      }
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * gw[i];
      for (std::size_t i = 0; i < b.size(); ++i) b[i] -= lr * gb[i];
    }
  }

  void score(const Example& ex, std::vector<double>& logits) const {
    for (int c = 0; c < classes; ++c) logits[static_cast<std::size_t>(c)] = b[c];
    for (int tok : ex.tokens)
      for (int c = 0; c < classes; ++c)
        logits[static_cast<std::size_t>(c)] += w[static_cast<std::size_t>(c * vocab + tok)];
  }

  double accuracy(const std::vector<const Example*>& data) const {
    std::vector<double> logits(static_cast<std::size_t>(classes));
    int hits = 0;
    for (const Example* ex : data) {
      score(*ex, logits);
      int argmax = 0;
      for (int c = 1; c < classes; ++c)
        if (logits[c] > logits[argmax]) argmax = c;
      if (argmax == ex->label) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(data.size());
  }
};

}  // namespace

TEST_CASE("linear probe sees a domain gap in the synthetic corpus") {
  CorpusSpec spec;
  Vocab vocab;
  auto datasets = generate_synthetic_corpus(spec, 7, 512, &vocab);
  for (int held_out = 0; held_out < 4; ++held_out) {
    std::vector<const Example*> train, test;
    for (int d = 0; d < 4; ++d) {
      for (const auto& ex : datasets[static_cast<std::size_t>(d)].examples) {
        (d == held_out ? test : train).push_back(&ex);
      }
    }
    LinearProbe probe;
    probe.fit(train, vocab.size(), spec.classes);
    const double in_domain = probe.accuracy(train);
    const double out_domain = probe.accuracy(test);
    INFO("held_out=", held_out, " in=", in_domain, " out=", out_domain);
    CHECK(in_domain >= 0.9);
    CHECK(out_domain <= 0.9);
    CHECK(in_domain - out_domain >= 0.12);
  }
}
