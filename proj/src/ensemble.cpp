#include "stolen/ensemble.hpp"

#include <cmath>

#include "stolen/parallel.hpp"
#include "stolen/softmax_probe.hpp"

namespace stolen {

std::string to_string(EnsembleMode mode) {
  switch (mode) {
    case EnsembleMode::targeted: return "targeted";
    case EnsembleMode::always: return "always";
    case EnsembleMode::never: return "never";
  }
  return "targeted";
}

EnsembleMode parse_ensemble_mode(std::string_view text) {
  if (text == "targeted")
    return EnsembleMode::targeted;
  if (text == "always")
    return EnsembleMode::always;
  if (text == "never")
    return EnsembleMode::never;
  throw Error("unknown ensemble mode '" + std::string(text) + "'");
}

void EnsembleConfig::validate() const {
  if (!(lambda_nnlm >= 0.0 && lambda_nnlm <= 1.0))
    throw Error("ensemble weight must lie in [0, 1]");
}

std::vector<char> interior_mask(std::span<const HullClassification> labels,
                                std::size_t vocab_size) {
  std::vector<char> mask(vocab_size, 0);
  for (const auto &c : labels) {
    if (c.word >= vocab_size)
      throw Error("classification refers to a word outside the vocabulary");
    if (c.label == HullLabel::interior)
      mask[c.word] = 1;
  }
  return mask;
}

std::set<BigramContext> targeted_contexts(std::span<const HullClassification> labels,
                                          const Corpus &corpus,
                                          const Vocabulary &vocab) {
  const auto interior = interior_mask(labels, vocab.size());
  const WordId bos = vocab.id(kBeginSentence);
  std::set<BigramContext> out;
  for (const auto &sentence : corpus.sentences)
    for (std::size_t t = 1; t < sentence.size(); ++t)
      if (interior.at(sentence[t]))
        out.insert(trigram_history(sentence, t, bos));
  return out;
}

namespace {

  bool use_trigram(const EnsembleConfig &config, const BigramContext &history) {
    switch (config.mode) {
      case EnsembleMode::never: return false;
      case EnsembleMode::always: return true;
      case EnsembleMode::targeted: return config.targeted_contexts.contains(history);
    }
    return false;
  }

}  // namespace

double ensemble_prob(const ToyLM &model, const TrigramModel &trigram,
                     const EnsembleConfig &config,
                     std::span<const WordId> sentence, std::size_t position,
                     WordId word) {
  const auto h = model.prediction_point(model.context(sentence, position));
  const double nnlm = std::exp(log_prob(model.space(), word, h));
  const auto history =
      trigram_history(sentence, position, model.vocab().id(kBeginSentence));
  if (!use_trigram(config, history) || config.lambda_nnlm == 1.0)
    return nnlm;
  return config.lambda_nnlm * nnlm +
         config.lambda_trigram() * trigram.prob(history.first, history.second, word);
}

Eigen::VectorXd ensemble_distribution(const ToyLM &model, const TrigramModel &trigram,
                                      const EnsembleConfig &config,
                                      std::span<const WordId> sentence,
                                      std::size_t position) {
  Eigen::VectorXd p = model.next_word_probs(model.context(sentence, position));
  const auto history =
      trigram_history(sentence, position, model.vocab().id(kBeginSentence));
  if (!use_trigram(config, history) || config.lambda_nnlm == 1.0)
    return p;
  for (Eigen::Index w = 0; w < p.size(); ++w)
    p[w] = config.lambda_nnlm * p[w] +
           config.lambda_trigram() *
               trigram.prob(history.first, history.second, static_cast<WordId>(w));
  return p;
}

const SubsetPerplexity *EnsembleReport::find(std::string_view subset) const {
  for (const auto &r : rows)
    if (r.subset == subset)
      return &r;
  return nullptr;
}

EnsembleReport ensemble_eval(const ToyLM &model, const TrigramModel &trigram,
                             const EnsembleConfig &config, const Corpus &corpus,
                             std::span<const HullClassification> labels) {
  config.validate();
  if (!(model.vocab() == trigram.vocab()))
    throw Error("toy LM and trigram model use different vocabularies");
  const auto interior = interior_mask(labels, model.vocab().size());
  const auto positions = predicted_positions(corpus);

  std::vector<double> nll_nnlm(positions.size()), nll_ens(positions.size());
  parallel_for(positions.size(), [&](std::size_t i) {
    const auto &pos = positions[i];
    const auto &sentence = corpus.sentences[pos.sentence];
    const WordId target = sentence[pos.index];
    const auto h = model.prediction_point(model.context(sentence, pos.index));
    const double nnlm = std::exp(log_prob(model.space(), target, h));
    nll_nnlm[i] = -std::log(nnlm);
    nll_ens[i] = -std::log(ensemble_prob(model, trigram, config, sentence, pos.index, target));
  });

  EnsembleReport report;
  auto accumulate = [&](const std::string &name, auto &&keep) {
    SubsetPerplexity row{name, 0, 0.0, 0.0};
    double a = 0.0, b = 0.0;
    for (std::size_t i = 0; i < positions.size(); ++i) {
      const WordId target = corpus.sentences[positions[i].sentence][positions[i].index];
      if (!keep(target))
        continue;
      a += nll_nnlm[i];
      b += nll_ens[i];
      ++row.positions;
    }
    if (row.positions == 0)
      return false;
    row.nnlm = std::exp(a / static_cast<double>(row.positions));
    row.ensemble = std::exp(b / static_cast<double>(row.positions));
    report.rows.push_back(row);
    return true;
  };
  accumulate("all", [](WordId) { return true; });
  report.interior_empty = !accumulate("interior", [&](WordId w) { return interior[w] != 0; });
  accumulate("non-interior", [&](WordId w) { return interior[w] == 0; });
  return report;
}

std::vector<LambdaPoint> sweep_lambda(const ToyLM &model, const TrigramModel &trigram,
                                      const EnsembleConfig &config,
                                      const Corpus &corpus) {
  std::vector<LambdaPoint> out;
  for (int step = 0; step < 10; ++step) {
    EnsembleConfig c = config;
    c.lambda_nnlm = 0.5 + 0.05 * step;
    auto report = ensemble_eval(model, trigram, c, corpus, {});
    out.push_back({c.lambda_nnlm, report.find("all")->ensemble});
  }
  return out;
}

double trigram_perplexity(const TrigramModel &trigram, const Corpus &corpus) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto &sentence : corpus.sentences)
    for (std::size_t t = 1; t < sentence.size(); ++t) {
      total -= std::log(trigram.prob_at(sentence, t));
      ++count;
    }
  if (count == 0)
    throw Error("trigram perplexity over an empty corpus");
  return std::exp(total / static_cast<double>(count));
}

}  // namespace stolen
