#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "stolen/embedding_store.hpp"

namespace stolen {

struct ToyLMConfig {
  std::size_t dim = 8;
  std::size_t context_window = 2;
  std::size_t epochs = 30;
  double learning_rate = 0.05;
  std::uint64_t seed = 1;
  double weight_init_scale = 0.1;

  void validate() const;
};

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(std::size_t epoch, std::size_t step);
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t epoch_;
  std::size_t step_;
};

/// Log-bilinear next-word model: h_t = W [e(w_{t-n}); ...; e(w_{t-1})],
/// P(w | h_t) = softmax(X h_t + b). Input embeddings e and output
/// embeddings X are separate matrices.
class ToyLM {
 public:
  ToyLM(ToyLMConfig config, EmbeddingSpace output, Eigen::MatrixXd input,
        Eigen::MatrixXd context_map);

  const ToyLMConfig &config() const noexcept { return config_; }
  const EmbeddingSpace &space() const noexcept { return output_; }
  const Vocabulary &vocab() const noexcept { return output_.vocab(); }
  const Eigen::MatrixXd &input_embeddings() const noexcept { return input_; }
  const Eigen::MatrixXd &context_map() const noexcept { return context_map_; }

  // The n words before `position`, padded on the left with <s>.
  std::vector<WordId> context(std::span<const WordId> sentence,
                              std::size_t position) const;

  Eigen::VectorXd prediction_point(std::span<const WordId> context) const;
  Eigen::VectorXd next_word_probs(std::span<const WordId> context) const;

  // Same model with a replacement output space (e.g. biases zeroed).
  ToyLM with_output(EmbeddingSpace output) const;

  bool operator==(const ToyLM &other) const;

 private:
  ToyLMConfig config_;
  EmbeddingSpace output_;
  Eigen::MatrixXd input_;
  Eigen::MatrixXd context_map_;
};

struct TrainResult {
  ToyLM model;
  // Entry 0 is the initial model; entry e the model after epoch e.
  std::vector<double> perplexity_trace;
};

ToyLM initialize_toy_lm(const Vocabulary &vocab, const ToyLMConfig &config);

/// Plain SGD on next-word cross-entropy, visiting positions in a seeded
/// shuffle each epoch. Throws TrainingDiverged on a non-finite loss.
TrainResult train(const Corpus &corpus, const Vocabulary &vocab,
                  const ToyLMConfig &config);

struct Position {
  std::size_t sentence = 0;
  std::size_t index = 0;  // index of the predicted token within the sentence
};

std::vector<Position> predicted_positions(const Corpus &corpus);

struct WordMaxProb {
  WordId word = 0;
  double max_prob = 0.0;
  std::optional<Position> argmax;  // empty when no position was scanned
};

/// Per word, the largest P(word | context) over corpus positions. By default
/// every position counts; with `gold_only` only positions whose target is
/// the word itself.
std::vector<WordMaxProb> empirical_max_prob(const ToyLM &model,
                                            const Corpus &corpus,
                                            bool gold_only = false);

using PositionFilter = std::function<bool(const Position &, WordId target)>;

/// exp(mean negative log-probability) over positions passing the filter.
/// Throws Error when no position passes.
double perplexity(const ToyLM &model, const Corpus &corpus,
                  const PositionFilter &filter = {});

// Checkpoint: <dir>/output.emb in the embedding text format plus
// <dir>/model.json with the config, input embeddings, and context map.
void save_toy_lm(const ToyLM &model, const std::filesystem::path &dir);
ToyLM load_toy_lm(const std::filesystem::path &dir);

}  // namespace stolen
