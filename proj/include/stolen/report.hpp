#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stolen/embedding_store.hpp"
#include "stolen/ensemble.hpp"
#include "stolen/hull_geometry.hpp"
#include "stolen/ngram.hpp"
#include "stolen/softmax_probe.hpp"
#include "stolen/toy_lm.hpp"

namespace stolen {

inline constexpr const char *kToolName = "stolenprob";
inline constexpr const char *kToolVersion = "0.1.0";

// Everything a subcommand needs; the manifest is this struct as JSON.
struct RunConfig {
  std::string subcommand;
  std::string embeddings;  // input paths, empty when unused
  std::string corpus;
  std::string model;
  std::filesystem::path out_dir = "out";  // not part of the manifest

  // Detection. A fixed omega wins over the sweep target; with neither the
  // sweep target defaults to max(1, |V| / 20).
  std::optional<double> omega;
  std::optional<std::size_t> target_interior;
  std::size_t bins = 256;
  std::size_t exact_max_dim = 10;

  ProbeMethod probe_method = ProbeMethod::gradient_ascent;
  ProbeBudget probe;

  ToyLMConfig toy;

  double lambda = 0.8;
  EnsembleMode mode = EnsembleMode::targeted;

  std::size_t top_k = 500;
  std::uint64_t seed = 1;

  // illustrate
  std::string preset;
  std::string target_token;
  AxisRange axis_x;
  AxisRange axis_y;
  std::vector<double> z_slices{0.0, 2.0, 4.0, 6.0};

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json &j);

  // Pushes the global seed into every stochastic component.
  void propagate_seed();
};

// A failure inside a named pipeline stage.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string &message);
  const std::string &stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

// ---------------------------------------------------------------------------
// Built-in configurations

// Five fixed words A..E plus F inside (z = 0.5) or outside (z = 1.5) their hull.
EmbeddingSpace pyramid_space(bool f_inside);

// Triangle B(1,-1), C(-1,1), D(1,1) with target A at the corner (-1,-1) or
// at the triangle centroid (1/3, 1/3).
EmbeddingSpace square_space(bool a_at_corner);

// Resolves a preset name: pyramid-inside, pyramid-outside,
// square-corner, square-centroid.
EmbeddingSpace preset_space(const std::string &name);

// ---------------------------------------------------------------------------
// Detection

struct DetectionOutcome {
  std::vector<HullClassification> approximate;
  std::optional<std::vector<HullClassification>> exact;
  double omega = 0.0;
  std::optional<OmegaSweep> sweep;  // without classifications (moved out)
  bool sweep_target_reached = true;
  std::optional<DetectorValidation> validation;

  // Exact labels when available, approximate otherwise.
  const std::vector<HullClassification> &primary() const {
    return exact ? *exact : approximate;
  }
};

DetectionOutcome detect(const EmbeddingSpace &space, const RunConfig &cfg);

// ---------------------------------------------------------------------------
// Ranking

struct RankPoint {
  WordId word = 0;
  double max_prob = 0.0;
};

struct RankSeries {
  std::string name;  // interior, non-interior, random, trigram
  std::size_t set_size = 0;
  std::vector<RankPoint> points;  // non-increasing, length min(top_k, set_size)
  bool omitted = false;           // empty set
  double average() const;
};

struct RankOutcome {
  std::vector<RankSeries> series;
  bool interior_empty = false;
  const RankSeries *find(std::string_view name) const;
};

// Words that occur as a prediction target at least once.
std::vector<char> target_mask(const Corpus &corpus, std::size_t vocab_size);

// Per word, the largest P_KN(word | history) over the corpus histories.
std::vector<double> trigram_max_prob(const TrigramModel &trigram, const Corpus &corpus);

RankOutcome rank_words(std::span<const WordMaxProb> nnlm_max,
                       std::span<const double> trigram_max,
                       std::span<const HullClassification> labels,
                       std::span<const char> rankable, std::size_t top_k,
                       std::uint64_t seed);

// ---------------------------------------------------------------------------
// Bias and norm diagnostics

struct BiasWordCheck {
  WordId word = 0;
  double with_bias = 0.0;
  double zero_bias = 0.0;
  // Log-odds of the two maxima, computed from logits.
  double log_odds_with_bias = 0.0;
  double log_odds_zero_bias = 0.0;
  bool within_odds_bound = true;
};

struct BiasCheck {
  double mean_bias_interior = 0.0;
  double mean_bias_non_interior = 0.0;
  std::size_t interior_count = 0;
  std::size_t non_interior_count = 0;
  double max_abs_bias = 0.0;
  std::vector<BiasWordCheck> words;
  bool odds_bound_holds = true;
};

// Odds of the with-bias maximum stay within exp(+-2 max|b|) of the
// bias-zeroed maximum.
bool within_odds_bound(double with_bias, double zero_bias, double max_abs_bias);
bool within_log_odds_bound(double with_bias, double zero_bias, double max_abs_bias);

// Empirical maxima over corpus positions, with and without output biases.
BiasCheck bias_check(const ToyLM &model, const Corpus &corpus,
                     std::span<const HullClassification> labels);

// Probe maxima over the union of the two searches' argmax points.
BiasCheck bias_check(const EmbeddingSpace &space,
                     std::span<const HullClassification> labels,
                     const ProbeBudget &budget, std::uint64_t seed);

struct NormDiagnostic {
  std::size_t interior_count = 0;
  std::size_t vertex_count = 0;
  double mean_norm_interior = 0.0;
  double mean_norm_vertex = 0.0;
  double median_norm_interior = 0.0;
  double max_prob_interior = 0.0;
  // Vertex words with norm below the interior median whose maximum
  // probability beats every interior word.
  std::vector<WordId> low_norm_strong_vertices;
};

NormDiagnostic norm_diagnostic(const EmbeddingSpace &space,
                               std::span<const HullClassification> labels,
                               std::span<const WordMaxProb> max_probs,
                               std::span<const char> rankable);

// ---------------------------------------------------------------------------
// Writers

void write_classification_csv(const EmbeddingSpace &space,
                              std::span<const HullClassification> labels,
                              std::ostream &out);
nlohmann::json classification_json(const EmbeddingSpace &space,
                                   std::span<const HullClassification> labels);
void write_probe_csv(const EmbeddingSpace &space, std::span<const ProbeResult> results,
                     std::ostream &out);

// ---------------------------------------------------------------------------
// Subcommands. Each writes its part of the bundle into cfg.out_dir.

void cmd_detect(const RunConfig &cfg);
void cmd_probe(const RunConfig &cfg);
void cmd_illustrate(const RunConfig &cfg);
void cmd_train(const RunConfig &cfg);
void cmd_ngram(const RunConfig &cfg);
void cmd_rank(const RunConfig &cfg);
void cmd_bias_check(const RunConfig &cfg);
void cmd_ensemble(const RunConfig &cfg);

struct PipelineOutcome {
  TrainResult training;
  DetectionOutcome detection;
  std::vector<WordMaxProb> max_probs;
  RankOutcome ranking;
  EnsembleReport ensemble;
  BiasCheck bias;
  NormDiagnostic norms;
};

/// train -> detect -> probe -> rank -> ngram -> ensemble, plus the bias and
/// norm diagnostics and manifest.json. A failing stage leaves the outputs
/// written so far and a FAILED marker naming the stage.
PipelineOutcome cmd_pipeline(const RunConfig &cfg);

// Dispatches on cfg.subcommand.
void run_subcommand(const RunConfig &cfg);

}  // namespace stolen
