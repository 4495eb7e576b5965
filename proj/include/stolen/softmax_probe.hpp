#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stolen/embedding_store.hpp"

namespace stolen {

// logits z_i = x_i . h + b_i.
Eigen::VectorXd logits(const EmbeddingSpace &space, const Eigen::VectorXd &h);

// z_i = |x_i| |h| cos(theta_i) + b_i; cos is 0 when either norm is 0.
struct PolarLogits {
  Eigen::VectorXd embedding_norms;
  double h_norm = 0.0;
  Eigen::VectorXd cosines;

  Eigen::VectorXd recompose(const Eigen::VectorXd &biases) const;
};

PolarLogits polar_logits(const EmbeddingSpace &space, const Eigen::VectorXd &h);

// Max-shifted softmax.
Eigen::VectorXd softmax(const Eigen::VectorXd &z);
double log_sum_exp(const Eigen::VectorXd &z);

Eigen::VectorXd softmax_prob(const EmbeddingSpace &space, const Eigen::VectorXd &h);

double log_prob(const EmbeddingSpace &space, WordId word, const Eigen::VectorXd &h);

// d/dh log P(word | h) = x_word - sum_i P(i | h) x_i.
// log(P / (1 - P)) from the logits, finite even where P rounds to 1.
double log_odds(const EmbeddingSpace &space, WordId word, const Eigen::VectorXd &h);

Eigen::VectorXd log_prob_gradient(const EmbeddingSpace &space, WordId word,
                                  const Eigen::VectorXd &h);

/// Bias-free ceiling on P(word | h): 1 / (1 + exp(max_i <h, x_i - p>)).
/// Empty when no other word has a nonnegative gap at this h.
std::optional<double> interior_bound(const EmbeddingSpace &space, WordId word,
                                     const Eigen::VectorXd &h);

// Default |<h, p - x_i>| tolerance for membership in the supporting hyperplane.
double default_face_tol(const EmbeddingSpace &space, const Eigen::VectorXd &h);

/// 1 / |Omega(p, h)| for a supporting direction h at p, where Omega collects
/// the words (p included) on the hyperplane through p normal to h. Empty
/// when some word lies beyond the hyperplane by more than `tol`.
std::optional<double> hull_face_bound(const EmbeddingSpace &space, WordId word,
                                      const Eigen::VectorXd &h, double tol);
std::optional<double> hull_face_bound(const EmbeddingSpace &space, WordId word,
                                      const Eigen::VectorXd &h);

enum class ProbeMethod { grid, gradient_ascent };

std::string to_string(ProbeMethod method);

struct ProbeBudget {
  std::size_t restarts = 8;
  std::size_t steps = 500;
  double radius = 50.0;
  // Lattice points per axis for the grid method, spanning [-radius, radius].
  std::size_t grid_steps = 101;
  double initial_step = 1.0;
  double backtrack = 0.5;
};

struct ProbeResult {
  WordId word = 0;
  double max_prob = 0.0;
  Eigen::VectorXd argmax_h;
  ProbeMethod method = ProbeMethod::gradient_ascent;
  // interior_bound at argmax_h, when the space is bias-free and it applies.
  std::optional<double> bound;
  std::size_t iterations = 0;
};

/// Searches for the prediction point maximizing P(word | h). The gradient
/// method runs projected ascent on log P inside the ball of radius
/// budget.radius from the origin plus restarts-1 seeded random starts. Both
/// methods return a lower bound on the true maximum.
ProbeResult max_prob_search(const EmbeddingSpace &space, WordId word,
                            ProbeMethod method, const ProbeBudget &budget = {},
                            std::uint64_t seed = 0);

std::vector<ProbeResult> max_prob_search_all(const EmbeddingSpace &space,
                                             ProbeMethod method,
                                             const ProbeBudget &budget,
                                             std::uint64_t seed);

struct AxisRange {
  double min = -10.0;
  double max = 10.0;
  std::size_t steps = 101;

  double at(std::size_t i) const;
};

struct IllustrationSpec {
  WordId target = 0;
  AxisRange x;
  AxisRange y;
  // Fixed third coordinate for 3-d spaces.
  std::optional<double> z_slice;
};

struct IllustrationGrid {
  WordId target = 0;
  std::optional<double> z_slice;
  AxisRange x;
  AxisRange y;
  // probs(i, j) is the probability at (x.at(i), y.at(j)).
  Eigen::MatrixXd probs;

  double max() const { return probs.maxCoeff(); }
};

IllustrationGrid illustration(const EmbeddingSpace &space,
                              const IllustrationSpec &spec);

// CSV with header "hx,hy,prob" (2-d) or "hx,hy,hz,prob" (3-d).
void write_illustration_csv(const IllustrationGrid &grid, std::ostream &out);

struct NormAngleDiagnostic {
  double norm_ratio = 0.0;               // |x_A| / |x_B|
  std::optional<double> cosine_ratio;    // cos(theta_B) / cos(theta_A), both cosines positive
  double cos_a = 0.0;
  double cos_b = 0.0;
  bool a_more_probable = false;          // P(A|h) > P(B|h)
  bool a_larger_projection = false;      // |x_A| cos(theta_A) > |x_B| cos(theta_B)
  bool negative_cosine = false;
  bool consistent() const { return a_more_probable == a_larger_projection; }
};

NormAngleDiagnostic norm_angle_diag(const EmbeddingSpace &space,
                                    const Eigen::VectorXd &h, WordId a, WordId b);

}  // namespace stolen
