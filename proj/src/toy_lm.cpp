#include "stolen/toy_lm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "stolen/parallel.hpp"
#include "stolen/softmax_probe.hpp"

namespace stolen {

void ToyLMConfig::validate() const {
  if (dim < 2)
    throw Error("toy LM dimension must be at least 2");
  if (context_window < 1)
    throw Error("toy LM context window must be at least 1");
  if (!(learning_rate > 0.0))
    throw Error("toy LM learning rate must be positive");
  if (!(weight_init_scale >= 0.0))
    throw Error("toy LM init scale must be non-negative");
}

TrainingDiverged::TrainingDiverged(std::size_t epoch, std::size_t step)
    : Error("training diverged at epoch " + std::to_string(epoch) + ", step " +
            std::to_string(step)),
      epoch_(epoch), step_(step) {}

ToyLM::ToyLM(ToyLMConfig config, EmbeddingSpace output, Eigen::MatrixXd input,
             Eigen::MatrixXd context_map)
    : config_(config), output_(std::move(output)), input_(std::move(input)),
      context_map_(std::move(context_map)) {
  config_.validate();
  const auto d = static_cast<Eigen::Index>(config_.dim);
  const auto n = static_cast<Eigen::Index>(config_.context_window);
  if (output_.dim() != config_.dim)
    throw Error("output embedding dimension does not match config");
  if (input_.rows() != static_cast<Eigen::Index>(output_.size()) || input_.cols() != d)
    throw Error("input embedding shape does not match vocabulary and config");
  if (context_map_.rows() != d || context_map_.cols() != n * d)
    throw Error("context map must have shape dim x (window * dim)");
  if (!input_.allFinite() || !context_map_.allFinite())
    throw Error("toy LM parameters must be finite");
  if (!output_.vocab().find(kBeginSentence))
    throw Error("toy LM vocabulary lacks <s>");
}

std::vector<WordId> ToyLM::context(std::span<const WordId> sentence,
                                   std::size_t position) const {
  const WordId bos = vocab().id(kBeginSentence);
  const std::size_t n = config_.context_window;
  std::vector<WordId> ctx(n, bos);
  for (std::size_t k = 0; k < n; ++k) {
    // ctx[k] holds w_{position - n + k}
    if (position + k >= n)
      ctx[k] = sentence[position + k - n];
  }
  return ctx;
}

Eigen::VectorXd ToyLM::prediction_point(std::span<const WordId> context) const {
  const auto d = static_cast<Eigen::Index>(config_.dim);
  if (context.size() != config_.context_window)
    throw Error("context length does not match the model window");
  Eigen::VectorXd c(d * static_cast<Eigen::Index>(context.size()));
  for (std::size_t k = 0; k < context.size(); ++k)
    c.segment(static_cast<Eigen::Index>(k) * d, d) =
        input_.row(static_cast<Eigen::Index>(context[k])).transpose();
  return context_map_ * c;
}

Eigen::VectorXd ToyLM::next_word_probs(std::span<const WordId> context) const {
  return softmax_prob(output_, prediction_point(context));
}

ToyLM ToyLM::with_output(EmbeddingSpace output) const {
  return ToyLM(config_, std::move(output), input_, context_map_);
}

bool ToyLM::operator==(const ToyLM &other) const {
  const auto &a = config_;
  const auto &b = other.config_;
  return a.dim == b.dim && a.context_window == b.context_window &&
         a.epochs == b.epochs && a.learning_rate == b.learning_rate &&
         a.seed == b.seed && a.weight_init_scale == b.weight_init_scale &&
         output_ == other.output_ && input_ == other.input_ &&
         context_map_ == other.context_map_;
}

ToyLM initialize_toy_lm(const Vocabulary &vocab, const ToyLMConfig &config) {
  config.validate();
  const auto v = static_cast<Eigen::Index>(vocab.size());
  const auto d = static_cast<Eigen::Index>(config.dim);
  const auto nd = d * static_cast<Eigen::Index>(config.context_window);

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto gaussian = [&](Eigen::Index rows, Eigen::Index cols, double scale) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j)
        m(i, j) = scale * normal(rng);
    return m;
  };
  Eigen::MatrixXd input = gaussian(v, d, config.weight_init_scale);
  Eigen::MatrixXd output = gaussian(v, d, config.weight_init_scale);
  Eigen::MatrixXd context_map = gaussian(d, nd, 1.0 / std::sqrt(static_cast<double>(nd)));
  return ToyLM(config, EmbeddingSpace(vocab, std::move(output)), std::move(input),
               std::move(context_map));
}

std::vector<Position> predicted_positions(const Corpus &corpus) {
  std::vector<Position> out;
  out.reserve(corpus.num_predictions());
  for (std::size_t s = 0; s < corpus.sentences.size(); ++s)
    for (std::size_t t = 1; t < corpus.sentences[s].size(); ++t)
      out.push_back({s, t});
  return out;
}

namespace {

  void check_corpus(const Corpus &corpus, const Vocabulary &vocab) {
    for (const auto &s : corpus.sentences)
      for (WordId w : s)
        if (w >= vocab.size())
          throw Error("corpus token id exceeds the model vocabulary");
  }

}  // namespace

TrainResult train(const Corpus &corpus, const Vocabulary &vocab,
                  const ToyLMConfig &config) {
  if (corpus.num_predictions() == 0)
    throw Error("cannot train on an empty corpus");
  check_corpus(corpus, vocab);

  ToyLM init = initialize_toy_lm(vocab, config);
  Eigen::MatrixXd X = init.space().vectors();
  Eigen::VectorXd bias = init.space().biases();
  Eigen::MatrixXd E = init.input_embeddings();
  Eigen::MatrixXd W = init.context_map();

  TrainResult result{init, {}};
  result.perplexity_trace.push_back(perplexity(init, corpus));

  const auto d = static_cast<Eigen::Index>(config.dim);
  const std::size_t n = config.context_window;
  const double lr = config.learning_rate;
  auto positions = predicted_positions(corpus);
  // Shuffle stream is independent of the initialization stream.
  std::mt19937_64 rng(config.seed ^ 0x5bd1e9955bd1e995ULL);

  Eigen::VectorXd c(d * static_cast<Eigen::Index>(n));
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(positions.begin(), positions.end(), rng);
    for (std::size_t step = 0; step < positions.size(); ++step) {
      const auto &pos = positions[step];
      const auto &sentence = corpus.sentences[pos.sentence];
      const auto ctx = result.model.context(sentence, pos.index);
      for (std::size_t k = 0; k < n; ++k)
        c.segment(static_cast<Eigen::Index>(k) * d, d) =
            E.row(static_cast<Eigen::Index>(ctx[k])).transpose();
      const Eigen::VectorXd h = W * c;
      const Eigen::VectorXd z = X * h + bias;
      const double lse = log_sum_exp(z);
      const auto target = static_cast<Eigen::Index>(sentence[pos.index]);
      const double loss = lse - z[target];
      if (!std::isfinite(loss))
        throw TrainingDiverged(epoch, step);

      Eigen::VectorXd dz = (z.array() - lse).exp().matrix();
      dz[target] -= 1.0;
      const Eigen::VectorXd dh = X.transpose() * dz;
      const Eigen::VectorXd dc = W.transpose() * dh;

      X.noalias() -= lr * dz * h.transpose();
      bias -= lr * dz;
      W.noalias() -= lr * dh * c.transpose();
      for (std::size_t k = 0; k < n; ++k)
        E.row(static_cast<Eigen::Index>(ctx[k])) -=
            lr * dc.segment(static_cast<Eigen::Index>(k) * d, d).transpose();
    }
    if (!X.allFinite() || !bias.allFinite() || !E.allFinite() || !W.allFinite())
      throw TrainingDiverged(epoch, positions.size());

    result.model = ToyLM(config, EmbeddingSpace(vocab, X, bias), E, W);
    result.perplexity_trace.push_back(perplexity(result.model, corpus));
  }
  return result;
}

std::vector<WordMaxProb> empirical_max_prob(const ToyLM &model,
                                            const Corpus &corpus,
                                            bool gold_only) {
  check_corpus(corpus, model.vocab());
  const auto positions = predicted_positions(corpus);
  const std::size_t V = model.vocab().size();

  constexpr std::size_t kChunk = 256;
  const std::size_t chunks = (positions.size() + kChunk - 1) / kChunk;
  std::vector<std::vector<WordMaxProb>> partial(chunks);
  parallel_for(chunks, [&](std::size_t ci) {
    auto &best = partial[ci];
    best.resize(V);
    for (std::size_t w = 0; w < V; ++w)
      best[w].word = w;
    const std::size_t end = std::min(positions.size(), (ci + 1) * kChunk);
    for (std::size_t i = ci * kChunk; i < end; ++i) {
      const auto &pos = positions[i];
      const auto &sentence = corpus.sentences[pos.sentence];
      const auto probs = model.next_word_probs(model.context(sentence, pos.index));
      if (gold_only) {
        const WordId w = sentence[pos.index];
        const double p = probs[static_cast<Eigen::Index>(w)];
        if (!best[w].argmax || p > best[w].max_prob)
          best[w] = {w, p, pos};
        continue;
      }
      for (std::size_t w = 0; w < V; ++w) {
        const double p = probs[static_cast<Eigen::Index>(w)];
        if (!best[w].argmax || p > best[w].max_prob)
          best[w] = {w, p, pos};
      }
    }
  });

  std::vector<WordMaxProb> out(V);
  for (std::size_t w = 0; w < V; ++w)
    out[w].word = w;
  for (const auto &chunk : partial)
    for (std::size_t w = 0; w < V; ++w)
      if (chunk[w].argmax && (!out[w].argmax || chunk[w].max_prob > out[w].max_prob))
        out[w] = chunk[w];
  return out;
}

double perplexity(const ToyLM &model, const Corpus &corpus,
                  const PositionFilter &filter) {
  check_corpus(corpus, model.vocab());
  const auto positions = predicted_positions(corpus);
  std::vector<double> nll(positions.size(), 0.0);
  std::vector<char> keep(positions.size(), 0);
  parallel_for(positions.size(), [&](std::size_t i) {
    const auto &pos = positions[i];
    const auto &sentence = corpus.sentences[pos.sentence];
    const WordId target = sentence[pos.index];
    if (filter && !filter(pos, target))
      return;
    keep[i] = 1;
    const auto h = model.prediction_point(model.context(sentence, pos.index));
    nll[i] = -log_prob(model.space(), target, h);
  });
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (!keep[i])
      continue;
    total += nll[i];
    ++count;
  }
  if (count == 0)
    throw Error("perplexity over an empty position set");
  return std::exp(total / static_cast<double>(count));
}

namespace {

  nlohmann::json matrix_to_json(const Eigen::MatrixXd &m) {
    auto rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      auto row = nlohmann::json::array();
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        row.push_back(m(i, j));
      rows.push_back(std::move(row));
    }
    return rows;
  }

  Eigen::MatrixXd matrix_from_json(const nlohmann::json &j, Eigen::Index rows,
                                   Eigen::Index cols, const char *what) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
      throw Error(std::string("checkpoint field '") + what + "' has the wrong shape");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      const auto &row = j[static_cast<std::size_t>(i)];
      if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
        throw Error(std::string("checkpoint field '") + what + "' has the wrong shape");
      for (Eigen::Index k = 0; k < cols; ++k)
        m(i, k) = row[static_cast<std::size_t>(k)].get<double>();
    }
    return m;
  }

}  // namespace

void save_toy_lm(const ToyLM &model, const std::filesystem::path &dir) {
  std::filesystem::create_directories(dir);
  save_embeddings(model.space(), dir / "output.emb");
  const auto &cfg = model.config();
  nlohmann::json j;
  j["config"] = {{"dim", cfg.dim},
                 {"context_window", cfg.context_window},
                 {"epochs", cfg.epochs},
                 {"learning_rate", cfg.learning_rate},
                 {"seed", cfg.seed},
                 {"weight_init_scale", cfg.weight_init_scale}};
  j["input_embeddings"] = matrix_to_json(model.input_embeddings());
  j["context_map"] = matrix_to_json(model.context_map());
  std::ofstream out(dir / "model.json");
  if (!out)
    throw Error("cannot write checkpoint in '" + dir.string() + "'");
  out << j.dump(1) << '\n';
}

ToyLM load_toy_lm(const std::filesystem::path &dir) {
  EmbeddingSpace output = load_embeddings(dir / "output.emb");
  std::ifstream in(dir / "model.json");
  if (!in)
    throw Error("cannot open checkpoint '" + (dir / "model.json").string() + "'");
  nlohmann::json j;
  try {
    in >> j;
    ToyLMConfig cfg;
    const auto &c = j.at("config");
    cfg.dim = c.at("dim").get<std::size_t>();
    cfg.context_window = c.at("context_window").get<std::size_t>();
    cfg.epochs = c.at("epochs").get<std::size_t>();
    cfg.learning_rate = c.at("learning_rate").get<double>();
    cfg.seed = c.at("seed").get<std::uint64_t>();
    cfg.weight_init_scale = c.at("weight_init_scale").get<double>();
    const auto v = static_cast<Eigen::Index>(output.size());
    const auto d = static_cast<Eigen::Index>(cfg.dim);
    auto input = matrix_from_json(j.at("input_embeddings"), v, d, "input_embeddings");
    auto w = matrix_from_json(j.at("context_map"), d,
                              d * static_cast<Eigen::Index>(cfg.context_window),
                              "context_map");
    return ToyLM(cfg, std::move(output), std::move(input), std::move(w));
  } catch (const nlohmann::json::exception &e) {
    throw Error("malformed checkpoint '" + dir.string() + "': " + e.what());
  }
}

}  // namespace stolen
