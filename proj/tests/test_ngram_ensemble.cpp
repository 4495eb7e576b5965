#include <doctest.h>

#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "stolen/ensemble.hpp"
#include "stolen/ngram.hpp"
#include "stolen/softmax_probe.hpp"
#include "test_util.hpp"

using namespace stolen;

namespace {

LoadedCorpus corpus_of(const std::string &text, const Vocabulary *vocab = nullptr) {
  std::istringstream in(text);
  return parse_corpus(in, vocab);
}

std::vector<oracle::KneserNey::Sentence> as_strings(const LoadedCorpus &lc) {
  std::vector<oracle::KneserNey::Sentence> out;
  for (const auto &s : lc.corpus.sentences) {
    oracle::KneserNey::Sentence t;
    for (WordId w : s)
      t.push_back(lc.vocab.token(w));
    out.push_back(t);
  }
  return out;
}

double sum_over_vocab(const TrigramModel &m, WordId u, WordId v) {
  double s = 0.0;
  for (WordId w = 0; w < m.vocab().size(); ++w)
    s += m.prob(u, v, w);
  return s;
}

std::string tiny_corpus() {
  std::string text;
  for (int i = 0; i < 10; ++i)
    text += "a b c\n";
  return text;
}

}  // namespace

TEST_CASE("hand-computed conditionals on a tiny corpus") {
  // Every order falls back to D = 0.75 (no count-of-counts at 2 or 3).
  //   P1(c)     = (1 - .75)/4 + (.75*4/4)(1/6)       = 0.1875
  //   P2(c|b)   = (1 - .75)/1 + (.75*1/1)(0.1875)    = 0.390625
  //   P3(c|a b) = (10 - .75)/10 + (.75*1/10)(0.390625) = 0.954296875
  const auto lc = corpus_of(tiny_corpus());
  REQUIRE(lc.vocab.size() == 6);
  const auto m = TrigramModel::fit(lc.corpus, lc.vocab);
  const WordId a = lc.vocab.id("a"), b = lc.vocab.id("b"), c = lc.vocab.id("c");
  CHECK(m.used_fallback());
  CHECK(std::abs(m.prob_unigram(c) - 0.1875) <= 1e-9);
  CHECK(std::abs(m.prob_bigram(b, c) - 0.390625) <= 1e-9);
  CHECK(std::abs(m.prob(a, b, c) - 0.954296875) <= 1e-9);
  CHECK(m.prob(a, b, c) > 0.9);
  CHECK(std::abs(sum_over_vocab(m, a, b) - 1.0) <= 1e-9);
}

TEST_CASE("counts and padding") {
  const auto lc = corpus_of(tiny_corpus());
  const auto m = TrigramModel::fit(lc.corpus, lc.vocab);
  const WordId bos = lc.vocab.id("<s>"), a = lc.vocab.id("a"), b = lc.vocab.id("b");
  CHECK(m.count(bos, bos, a) == 10);
  CHECK(m.count(bos, a, b) == 10);
  CHECK(m.context_count(bos, bos) == 10);
  CHECK(m.continuation_count(a, b) == 1);
  CHECK(m.continuation_count(b) == 1);
  CHECK(m.num_trigram_types() == 4);
}

TEST_CASE("unseen context backs off to the continuation unigram") {
  const auto lc = corpus_of(tiny_corpus());
  const auto m = TrigramModel::fit(lc.corpus, lc.vocab);
  const WordId unk = lc.vocab.id("<unk>");
  for (WordId w = 0; w < lc.vocab.size(); ++w)
    CHECK(m.prob(unk, unk, w) == m.prob_unigram(w));
  CHECK(m.prob_unigram(unk) > 0.0);
}

TEST_CASE("discount estimation") {
  const auto d = estimate_discounts({100, 40, 20, 10});
  const double y = 100.0 / 180.0;
  CHECK(d.d1 == doctest::Approx(1 - 2 * y * 40 / 100));
  CHECK(d.d2 == doctest::Approx(2 - 3 * y * 20 / 40));
  CHECK(d.d3plus == doctest::Approx(3 - 4 * y * 10 / 20));
  CHECK_FALSE(d.fallback);
  CHECK(estimate_discounts({0, 1, 1, 1}).fallback);
  CHECK(estimate_discounts({5, 0, 1, 1}).d1 == kFallbackDiscount);
  CHECK(d(0) == 0.0);
  CHECK(d(1) == d.d1);
  CHECK(d(7) == d.d3plus);
}

TEST_CASE("matches a brute-force Kneser-Ney oracle") {
  const auto lc = load_corpus(testutil::data_dir() / "smoke_corpus.txt");
  const auto m = TrigramModel::fit(lc.corpus, lc.vocab);
  // Unigram continuation counts are too sparse here (D3+ < 0), so only the
  // higher orders use estimated discounts.
  CHECK(m.discounts()[0].fallback);
  CHECK_FALSE(m.discounts()[1].fallback);
  CHECK_FALSE(m.discounts()[2].fallback);
  const oracle::KneserNey ref(as_strings(lc), lc.vocab.tokens());
  std::mt19937_64 rng(1);
  const auto &t = lc.vocab.tokens();
  for (int i = 0; i < 200; ++i) {
    const auto &s = lc.corpus.sentences[rng() % lc.corpus.sentences.size()];
    const std::size_t pos = 1 + rng() % (s.size() - 1);
    const auto [u, v] = trigram_history(s, pos, lc.vocab.id("<s>"));
    const WordId w = rng() % 3 == 0 ? rng() % lc.vocab.size() : s[pos];
    CHECK(std::abs(m.prob(u, v, w) - ref.p3(t[u], t[v], t[w])) <= 1e-12);
  }
  // Unseen trigram contexts and unseen bigram contexts.
  const WordId unk = lc.vocab.id("<unk>");
  for (WordId w = 0; w < lc.vocab.size(); w += 7) {
    CHECK(std::abs(m.prob(unk, 3, w) - ref.p3(t[unk], t[3], t[w])) <= 1e-12);
    CHECK(std::abs(m.prob(3, unk, w) - ref.p3(t[3], t[unk], t[w])) <= 1e-12);
  }
}

TEST_CASE("random contexts are normalized") {
  const auto lc = load_corpus(testutil::data_dir() / "smoke_corpus.txt");
  const auto m = TrigramModel::fit(lc.corpus, lc.vocab);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 50; ++i) {
    const WordId u = rng() % lc.vocab.size(), v = rng() % lc.vocab.size();
    CHECK(std::abs(sum_over_vocab(m, u, v) - 1.0) <= 1e-9);
  }
}

TEST_CASE("counts file round-trip") {
  const auto lc = load_corpus(testutil::data_dir() / "smoke_corpus.txt");
  const auto m = TrigramModel::fit(lc.corpus, lc.vocab);
  std::stringstream buf;
  m.write(buf);
  const auto text = buf.str();
  const auto back = TrigramModel::read(buf);
  CHECK(back.vocab() == m.vocab());
  std::ostringstream again;
  back.write(again);
  CHECK(again.str() == text);
  CHECK(back.prob(0, 0, 5) == m.prob(0, 0, 5));

  std::istringstream broken("\\vocab 3\n<s>\na\nb\n\\counts\n1 a 2\n3 <s> <s> a 1\n");
  CHECK_THROWS_AS(TrigramModel::read(broken), ParseError);
  std::istringstream unknown("\\vocab 1\n<s>\n\\counts\n1 zz 1\n");
  CHECK_THROWS_AS(TrigramModel::read(unknown), ParseError);
}

TEST_CASE("targeted contexts") {
  const auto lc = corpus_of("a b I\nx y z\nq I\n");
  std::vector<HullClassification> labels(lc.vocab.size());
  for (WordId w = 0; w < labels.size(); ++w) {
    labels[w].word = w;
    labels[w].label = HullLabel::vertex;
  }
  CHECK(targeted_contexts(labels, lc.corpus, lc.vocab).empty());

  labels[lc.vocab.id("I")].label = HullLabel::interior;
  const auto got = targeted_contexts(labels, lc.corpus, lc.vocab);
  const WordId bos = lc.vocab.id("<s>");
  CHECK(got.contains({lc.vocab.id("a"), lc.vocab.id("b")}));
  CHECK(got.contains({bos, lc.vocab.id("q")}));
  CHECK(got.size() == 2);
}

TEST_CASE("targeted contexts match a brute-force scan") {
  const auto lc = load_corpus(testutil::data_dir() / "smoke_corpus.txt");
  std::mt19937_64 rng(3);
  std::vector<HullClassification> labels(lc.vocab.size());
  std::set<WordId> interior;
  for (WordId w = 0; w < labels.size(); ++w) {
    labels[w].word = w;
    labels[w].label = rng() % 5 == 0 ? HullLabel::interior : HullLabel::vertex;
    if (labels[w].label == HullLabel::interior)
      interior.insert(w);
  }
  std::set<BigramContext> brute;
  const WordId bos = lc.vocab.id("<s>");
  for (const auto &s : lc.corpus.sentences) {
    std::vector<WordId> padded{bos};
    padded.insert(padded.end(), s.begin(), s.end());
    for (std::size_t i = 2; i < padded.size(); ++i)
      if (interior.contains(padded[i]))
        brute.insert({padded[i - 2], padded[i - 1]});
  }
  CHECK(targeted_contexts(labels, lc.corpus, lc.vocab) == brute);
}

namespace {

struct Fixture {
  LoadedCorpus lc = load_corpus(testutil::data_dir() / "smoke_corpus.txt");
  ToyLM model = [this] {
    ToyLMConfig cfg;
    cfg.epochs = 3;
    return train(lc.corpus, lc.vocab, cfg).model;
  }();
  TrigramModel tg = TrigramModel::fit(lc.corpus, lc.vocab);
  std::vector<HullClassification> labels = [this] {
    std::vector<HullClassification> out(lc.vocab.size());
    for (WordId w = 0; w < out.size(); ++w) {
      out[w].word = w;
      out[w].label = w % 4 == 0 ? HullLabel::interior : HullLabel::vertex;
    }
    return out;
  }();
};

}  // namespace

TEST_CASE("ensemble probabilities") {
  Fixture f;
  EnsembleConfig cfg;
  cfg.mode = EnsembleMode::always;
  const auto &s = f.lc.corpus.sentences[0];
  const auto h = f.model.prediction_point(f.model.context(s, 2));
  const double nnlm = std::exp(log_prob(f.model.space(), s[2], h));
  const auto [u, v] = trigram_history(s, 2, f.lc.vocab.id("<s>"));
  const double kn = f.tg.prob(u, v, s[2]);
  CHECK(ensemble_prob(f.model, f.tg, cfg, s, 2, s[2]) ==
        doctest::Approx(0.8 * nnlm + 0.2 * kn).epsilon(1e-14));
  CHECK(0.8 * 0.1 + 0.2 * 0.5 == doctest::Approx(0.18));

  for (auto mode : {EnsembleMode::always, EnsembleMode::targeted, EnsembleMode::never}) {
    cfg.mode = mode;
    cfg.lambda_nnlm = 1.0;
    CHECK(ensemble_prob(f.model, f.tg, cfg, s, 2, s[2]) == nnlm);
  }

  cfg.lambda_nnlm = 0.8;
  cfg.mode = EnsembleMode::targeted;
  cfg.targeted_contexts = {{u, v}};
  CHECK(std::abs(ensemble_distribution(f.model, f.tg, cfg, s, 2).sum() - 1.0) <= 1e-9);
  CHECK(ensemble_prob(f.model, f.tg, cfg, s, 2, s[2]) ==
        doctest::Approx(0.8 * nnlm + 0.2 * kn).epsilon(1e-14));
  cfg.targeted_contexts.clear();
  CHECK(ensemble_prob(f.model, f.tg, cfg, s, 2, s[2]) == nnlm);

  cfg.lambda_nnlm = 1.5;
  CHECK_THROWS_AS(cfg.validate(), Error);
  CHECK(parse_ensemble_mode("never") == EnsembleMode::never);
  CHECK_THROWS_AS(parse_ensemble_mode("sometimes"), Error);
}

TEST_CASE("ensemble evaluation") {
  Fixture f;
  EnsembleConfig cfg;
  cfg.mode = EnsembleMode::never;
  const auto never = ensemble_eval(f.model, f.tg, cfg, f.lc.corpus, f.labels);
  REQUIRE(never.rows.size() == 3);
  for (const auto &r : never.rows)
    CHECK(r.nnlm == r.ensemble);
  CHECK(never.find("all")->nnlm == doctest::Approx(perplexity(f.model, f.lc.corpus)).epsilon(1e-12));
  CHECK(never.find("interior")->positions + never.find("non-interior")->positions ==
        f.lc.corpus.num_predictions());

  cfg.mode = EnsembleMode::always;
  cfg.lambda_nnlm = 0.0;
  const auto only_kn = ensemble_eval(f.model, f.tg, cfg, f.lc.corpus, f.labels);
  CHECK(only_kn.find("all")->ensemble ==
        doctest::Approx(trigram_perplexity(f.tg, f.lc.corpus)).epsilon(1e-12));

  std::vector<HullClassification> none;
  const auto empty = ensemble_eval(f.model, f.tg, EnsembleConfig{}, f.lc.corpus, none);
  CHECK(empty.interior_empty);
  CHECK(empty.find("interior") == nullptr);

  const auto sweep = sweep_lambda(f.model, f.tg, cfg, f.lc.corpus);
  REQUIRE(sweep.size() == 10);
  CHECK(sweep.front().lambda == 0.5);
  CHECK(sweep.back().lambda == doctest::Approx(0.95));
}
