#include "stolen/softmax_probe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>

#include "stolen/format.hpp"
#include "stolen/parallel.hpp"

namespace stolen {

namespace {

  void check_dim(const EmbeddingSpace &space, const Eigen::VectorXd &h) {
    if (static_cast<std::size_t>(h.size()) != space.dim())
      throw Error("prediction point has dimension " + std::to_string(h.size()) +
                  ", embedding space has " + std::to_string(space.dim()));
  }

  std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  struct Objective {
    double value;
    Eigen::VectorXd gradient;
  };

  Objective log_prob_and_gradient(const EmbeddingSpace &space, WordId word,
                                  const Eigen::VectorXd &h) {
    const Eigen::VectorXd z = logits(space, h);
    const double lse = log_sum_exp(z);
    const Eigen::VectorXd p = (z.array() - lse).exp().matrix();
    Eigen::VectorXd grad = space.vector(word).transpose() - space.vectors().transpose() * p;
    return {z[static_cast<Eigen::Index>(word)] - lse, std::move(grad)};
  }

  void project_to_ball(Eigen::VectorXd &h, double radius) {
    const double n = h.norm();
    if (n > radius)
      h *= radius / n;
  }

}  // namespace

Eigen::VectorXd logits(const EmbeddingSpace &space, const Eigen::VectorXd &h) {
  check_dim(space, h);
  return space.vectors() * h + space.biases();
}

Eigen::VectorXd PolarLogits::recompose(const Eigen::VectorXd &biases) const {
  return (embedding_norms.array() * h_norm * cosines.array()).matrix() + biases;
}

PolarLogits polar_logits(const EmbeddingSpace &space, const Eigen::VectorXd &h) {
  check_dim(space, h);
  PolarLogits out;
  out.h_norm = h.norm();
  out.embedding_norms = space.vectors().rowwise().norm();
  out.cosines = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(space.size()));
  if (out.h_norm == 0.0)
    return out;
  const Eigen::VectorXd dots = space.vectors() * h;
  for (Eigen::Index i = 0; i < dots.size(); ++i) {
    const double n = out.embedding_norms[i];
    if (n > 0.0)
      out.cosines[i] = std::clamp(dots[i] / (n * out.h_norm), -1.0, 1.0);
  }
  return out;
}

double log_sum_exp(const Eigen::VectorXd &z) {
  const double m = z.maxCoeff();
  return m + std::log((z.array() - m).exp().sum());
}

Eigen::VectorXd softmax(const Eigen::VectorXd &z) {
  Eigen::VectorXd e = (z.array() - z.maxCoeff()).exp().matrix();
  return e / e.sum();
}

Eigen::VectorXd softmax_prob(const EmbeddingSpace &space, const Eigen::VectorXd &h) {
  return softmax(logits(space, h));
}

double log_prob(const EmbeddingSpace &space, WordId word, const Eigen::VectorXd &h) {
  const Eigen::VectorXd z = logits(space, h);
  return z[static_cast<Eigen::Index>(word)] - log_sum_exp(z);
}

double log_odds(const EmbeddingSpace &space, WordId word, const Eigen::VectorXd &h) {
  Eigen::VectorXd z = logits(space, h);
  const auto i = static_cast<Eigen::Index>(word);
  if (z.size() == 1)
    return std::numeric_limits<double>::infinity();
  const double zw = z[i];
  z[i] = z[z.size() - 1];
  return zw - log_sum_exp(z.head(z.size() - 1));
}

Eigen::VectorXd log_prob_gradient(const EmbeddingSpace &space, WordId word,
                                  const Eigen::VectorXd &h) {
  check_dim(space, h);
  return log_prob_and_gradient(space, word, h).gradient;
}

std::optional<double> interior_bound(const EmbeddingSpace &space, WordId word,
                                     const Eigen::VectorXd &h) {
  check_dim(space, h);
  const Eigen::VectorXd dots = space.vectors() * h;
  const double p_dot = dots[static_cast<Eigen::Index>(word)];
  double best_gap = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < dots.size(); ++i)
    if (static_cast<WordId>(i) != word)
      best_gap = std::max(best_gap, dots[i] - p_dot);
  if (!(best_gap >= 0.0))
    return std::nullopt;
  // 1 / (1 + e^g), written to stay accurate for large gaps.
  return std::exp(-best_gap) / (1.0 + std::exp(-best_gap));
}

double default_face_tol(const EmbeddingSpace &space, const Eigen::VectorXd &h) {
  const double max_norm = space.vectors().rowwise().norm().maxCoeff();
  return 1e-7 * (1.0 + h.norm()) * (1.0 + max_norm);
}

std::optional<double> hull_face_bound(const EmbeddingSpace &space, WordId word,
                                      const Eigen::VectorXd &h, double tol) {
  check_dim(space, h);
  const Eigen::VectorXd dots = space.vectors() * h;
  const double p_dot = dots[static_cast<Eigen::Index>(word)];
  std::size_t face = 0;
  for (Eigen::Index i = 0; i < dots.size(); ++i) {
    const double gap = dots[i] - p_dot;
    if (gap > tol)
      return std::nullopt;
    if (std::abs(gap) <= tol)
      ++face;
  }
  return 1.0 / static_cast<double>(face);
}

std::optional<double> hull_face_bound(const EmbeddingSpace &space, WordId word,
                                      const Eigen::VectorXd &h) {
  return hull_face_bound(space, word, h, default_face_tol(space, h));
}

std::string to_string(ProbeMethod method) {
  return method == ProbeMethod::grid ? "grid" : "gradient-ascent";
}

double AxisRange::at(std::size_t i) const {
  if (steps < 2)
    return min;
  return min + (max - min) * static_cast<double>(i) / static_cast<double>(steps - 1);
}

namespace {

  ProbeResult grid_search(const EmbeddingSpace &space, WordId word,
                          const ProbeBudget &budget) {
    const std::size_t d = space.dim();
    if (d > 3)
      throw Error("grid probe supports at most 3 dimensions");
    if (budget.grid_steps < 2)
      throw Error("grid probe needs at least 2 steps per axis");
    const AxisRange axis{-budget.radius, budget.radius, budget.grid_steps};

    ProbeResult best;
    best.word = word;
    best.method = ProbeMethod::grid;
    best.max_prob = -1.0;
    std::vector<std::size_t> idx(d, 0);
    Eigen::VectorXd h(static_cast<Eigen::Index>(d));
    std::size_t evaluated = 0;
    while (true) {
      for (std::size_t k = 0; k < d; ++k)
        h[static_cast<Eigen::Index>(k)] = axis.at(idx[k]);
      const double p = std::exp(log_prob(space, word, h));
      ++evaluated;
      if (p > best.max_prob) {
        best.max_prob = p;
        best.argmax_h = h;
      }
      std::size_t k = 0;
      while (k < d && ++idx[k] == axis.steps) {
        idx[k] = 0;
        ++k;
      }
      if (k == d)
        break;
    }
    best.iterations = evaluated;
    return best;
  }

  ProbeResult ascent_search(const EmbeddingSpace &space, WordId word,
                            const ProbeBudget &budget, std::uint64_t seed) {
    const auto d = static_cast<Eigen::Index>(space.dim());
    std::mt19937_64 rng(splitmix64(seed ^ splitmix64(word)));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    ProbeResult best;
    best.word = word;
    best.method = ProbeMethod::gradient_ascent;
    double best_value = -std::numeric_limits<double>::infinity();

    const std::size_t restarts = std::max<std::size_t>(1, budget.restarts);
    for (std::size_t r = 0; r < restarts; ++r) {
      Eigen::VectorXd h = Eigen::VectorXd::Zero(d);
      if (r > 0) {
        for (Eigen::Index k = 0; k < d; ++k)
          h[k] = normal(rng);
        const double radius =
            budget.radius * std::pow(unit(rng), 1.0 / static_cast<double>(d));
        if (h.norm() > 0.0)
          h *= radius / h.norm();
      }
      Objective f = log_prob_and_gradient(space, word, h);
      double step = budget.initial_step;
      for (std::size_t t = 0; t < budget.steps; ++t) {
        bool accepted = false;
        while (step > 1e-14) {
          Eigen::VectorXd candidate = h + step * f.gradient;
          project_to_ball(candidate, budget.radius);
          Objective fc = log_prob_and_gradient(space, word, candidate);
          if (fc.value > f.value) {
            h = std::move(candidate);
            f = std::move(fc);
            step = std::min(step * 2.0, 1e12);
            accepted = true;
            break;
          }
          step *= budget.backtrack;
        }
        ++best.iterations;
        if (!accepted)
          break;
      }
      if (f.value > best_value) {
        best_value = f.value;
        best.argmax_h = h;
      }
    }
    best.max_prob = std::exp(best_value);
    return best;
  }

}  // namespace

ProbeResult max_prob_search(const EmbeddingSpace &space, WordId word,
                            ProbeMethod method, const ProbeBudget &budget,
                            std::uint64_t seed) {
  if (word >= space.size())
    throw Error("word id " + std::to_string(word) + " out of range");
  if (!(budget.radius > 0.0))
    throw Error("probe radius must be positive");
  ProbeResult result = method == ProbeMethod::grid
                           ? grid_search(space, word, budget)
                           : ascent_search(space, word, budget, seed);
  if (space.has_zero_biases())
    result.bound = interior_bound(space, word, result.argmax_h);
  return result;
}

std::vector<ProbeResult> max_prob_search_all(const EmbeddingSpace &space,
                                             ProbeMethod method,
                                             const ProbeBudget &budget,
                                             std::uint64_t seed) {
  std::vector<ProbeResult> out(space.size());
  parallel_for(space.size(), [&](std::size_t i) {
    out[i] = max_prob_search(space, i, method, budget, seed);
  });
  return out;
}

IllustrationGrid illustration(const EmbeddingSpace &space,
                              const IllustrationSpec &spec) {
  const std::size_t d = space.dim();
  if (d != 2 && d != 3)
    throw Error("illustration supports 2- or 3-dimensional spaces only");
  if (d == 3 && !spec.z_slice)
    throw Error("3-dimensional illustration needs a z slice");
  if (spec.x.steps < 2 || spec.y.steps < 2)
    throw Error("illustration axes need at least 2 steps");
  if (spec.target >= space.size())
    throw Error("illustration target out of range");

  IllustrationGrid grid;
  grid.target = spec.target;
  grid.x = spec.x;
  grid.y = spec.y;
  if (d == 3)
    grid.z_slice = spec.z_slice;
  grid.probs.resize(static_cast<Eigen::Index>(spec.x.steps),
                    static_cast<Eigen::Index>(spec.y.steps));
  parallel_for(spec.x.steps, [&](std::size_t i) {
    Eigen::VectorXd h(static_cast<Eigen::Index>(d));
    for (std::size_t j = 0; j < spec.y.steps; ++j) {
      h[0] = spec.x.at(i);
      h[1] = spec.y.at(j);
      if (d == 3)
        h[2] = *spec.z_slice;
      grid.probs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          std::exp(log_prob(space, spec.target, h));
    }
  });
  return grid;
}

void write_illustration_csv(const IllustrationGrid &grid, std::ostream &out) {
  out << (grid.z_slice ? "hx,hy,hz,prob\n" : "hx,hy,prob\n");
  for (std::size_t i = 0; i < grid.x.steps; ++i) {
    for (std::size_t j = 0; j < grid.y.steps; ++j) {
      out << format_double(grid.x.at(i)) << ',' << format_double(grid.y.at(j));
      if (grid.z_slice)
        out << ',' << format_double(*grid.z_slice);
      out << ','
          << format_double(grid.probs(static_cast<Eigen::Index>(i),
                                      static_cast<Eigen::Index>(j)))
          << '\n';
    }
  }
}

NormAngleDiagnostic norm_angle_diag(const EmbeddingSpace &space,
                                    const Eigen::VectorXd &h, WordId a, WordId b) {
  check_dim(space, h);
  const double na = space.vector(a).norm();
  const double nb = space.vector(b).norm();
  const double nh = h.norm();
  if (na == 0.0 || nb == 0.0 || nh == 0.0)
    throw Error("norm/angle diagnostic needs nonzero norms");

  NormAngleDiagnostic out;
  out.cos_a = std::clamp(space.vector(a).dot(h.transpose()) / (na * nh), -1.0, 1.0);
  out.cos_b = std::clamp(space.vector(b).dot(h.transpose()) / (nb * nh), -1.0, 1.0);
  out.norm_ratio = na / nb;
  out.negative_cosine = out.cos_a < 0.0 || out.cos_b < 0.0;
  if (out.cos_a > 0.0 && out.cos_b > 0.0)
    out.cosine_ratio = out.cos_b / out.cos_a;

  const Eigen::VectorXd z = space.vectors() * h;  // bias-free
  out.a_more_probable = z[static_cast<Eigen::Index>(a)] > z[static_cast<Eigen::Index>(b)];
  out.a_larger_projection = na * out.cos_a > nb * out.cos_b;
  return out;
}

}  // namespace stolen
