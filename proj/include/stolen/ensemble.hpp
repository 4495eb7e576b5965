#pragma once

#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stolen/hull_geometry.hpp"
#include "stolen/ngram.hpp"
#include "stolen/toy_lm.hpp"

namespace stolen {

using BigramContext = std::pair<WordId, WordId>;

enum class EnsembleMode { targeted, always, never };

std::string to_string(EnsembleMode mode);
EnsembleMode parse_ensemble_mode(std::string_view text);

struct EnsembleConfig {
  double lambda_nnlm = 0.8;  // trigram weight is 1 - lambda_nnlm
  std::set<BigramContext> targeted_contexts;
  EnsembleMode mode = EnsembleMode::targeted;

  double lambda_trigram() const { return 1.0 - lambda_nnlm; }
  void validate() const;
};

// Words labeled interior, as a per-id mask.
std::vector<char> interior_mask(std::span<const HullClassification> labels,
                                std::size_t vocab_size);

/// Histories (w_{t-2}, w_{t-1}), padded with <s>, that precede at least one
/// interior-labeled target somewhere in the corpus.
std::set<BigramContext> targeted_contexts(std::span<const HullClassification> labels,
                                          const Corpus &corpus,
                                          const Vocabulary &vocab);

/// lambda P_nnlm + (1 - lambda) P_kn when the mode and history call for the
/// trigram, P_nnlm otherwise.
double ensemble_prob(const ToyLM &model, const TrigramModel &trigram,
                     const EnsembleConfig &config,
                     std::span<const WordId> sentence, std::size_t position,
                     WordId word);

// Whole next-word distribution at a position.
Eigen::VectorXd ensemble_distribution(const ToyLM &model, const TrigramModel &trigram,
                                      const EnsembleConfig &config,
                                      std::span<const WordId> sentence,
                                      std::size_t position);

struct SubsetPerplexity {
  std::string subset;  // "all", "interior", "non-interior"
  std::size_t positions = 0;
  double nnlm = 0.0;
  double ensemble = 0.0;
};

struct EnsembleReport {
  std::vector<SubsetPerplexity> rows;
  // No position had an interior target; the "interior" row is omitted.
  bool interior_empty = false;

  const SubsetPerplexity *find(std::string_view subset) const;
};

EnsembleReport ensemble_eval(const ToyLM &model, const TrigramModel &trigram,
                             const EnsembleConfig &config, const Corpus &corpus,
                             std::span<const HullClassification> labels);

struct LambdaPoint {
  double lambda = 0.0;
  double perplexity = 0.0;  // all positions, ensemble under the given mode
};

// lambda in {0.50, 0.55, ..., 0.95}; reported only, never applied.
std::vector<LambdaPoint> sweep_lambda(const ToyLM &model, const TrigramModel &trigram,
                                      const EnsembleConfig &config,
                                      const Corpus &corpus);

// Standalone KN3 perplexity over every predicted position.
double trigram_perplexity(const TrigramModel &trigram, const Corpus &corpus);

}  // namespace stolen
