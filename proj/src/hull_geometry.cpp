#include "stolen/hull_geometry.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <random>

#include "stolen/parallel.hpp"

namespace stolen {

std::string to_string(HullLabel label) {
  switch (label) {
    case HullLabel::vertex: return "vertex";
    case HullLabel::interior: return "interior";
    case HullLabel::undetermined: return "undetermined";
  }
  return "undetermined";
}

std::string to_string(HullMethod method) {
  return method == HullMethod::exact ? "exact" : "approximate";
}

HullLabel parse_hull_label(std::string_view text) {
  if (text == "vertex")
    return HullLabel::vertex;
  if (text == "interior")
    return HullLabel::interior;
  if (text == "undetermined")
    return HullLabel::undetermined;
  throw Error("unknown hull label '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// Exact classification

HullClassification exact_classify(const EmbeddingSpace &space, WordId word,
                                  const ExactOptions &options) {
  if (word >= space.size())
    throw Error("word id " + std::to_string(word) + " out of range");

  HullClassification out;
  out.word = word;
  out.method = HullMethod::exact;

  const auto n = static_cast<Eigen::Index>(space.size());
  const auto d = static_cast<Eigen::Index>(space.dim());
  const Eigen::RowVectorXd p = space.vector(word);

  std::vector<WordId> others;
  others.reserve(space.size() - 1);
  for (WordId j = 0; j < space.size(); ++j)
    if (j != word)
      others.push_back(j);

  Eigen::MatrixXd diff(d, n - 1);
  for (std::size_t c = 0; c < others.size(); ++c)
    diff.col(static_cast<Eigen::Index>(c)) = (space.vector(others[c]) - p).transpose();
  const double scale = diff.size() ? diff.cwiseAbs().maxCoeff() : 0.0;

  if (scale == 0.0) {
    // Every other word coincides with p.
    out.label = HullLabel::interior;
    out.weights.emplace_back(others.front(), 1.0);
    return out;
  }

  Eigen::MatrixXd A(d + 1, n - 1);
  A.topRows(d) = diff / scale;
  A.row(d).setOnes();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(d + 1);
  b[d] = 1.0;

  const FeasibilityResult lp = solve_feasibility(A, b, options.simplex);

  if (lp.status == FeasibilityStatus::iteration_limit) {
    out.label = HullLabel::undetermined;
    return out;
  }

  if (lp.status == FeasibilityStatus::feasible) {
    const double total = lp.x.sum();
    if (!(std::abs(total - 1.0) <= 1e-6)) {
      out.label = HullLabel::undetermined;
      return out;
    }
    Eigen::RowVectorXd combo = Eigen::RowVectorXd::Zero(d);
    for (std::size_t c = 0; c < others.size(); ++c) {
      const double w = lp.x[static_cast<Eigen::Index>(c)] / total;
      if (w > 0.0) {
        out.weights.emplace_back(others[c], w);
        combo += w * space.vector(others[c]);
      }
    }
    double sum = 0.0;
    for (const auto &[id, w] : out.weights)
      sum += w;
    const bool reproduces =
        (combo - p).norm() <= options.reproduction_tol * (1.0 + p.norm());
    if (!reproduces || std::abs(sum - 1.0) > options.weight_sum_tol) {
      out.weights.clear();
      out.label = HullLabel::undetermined;
      return out;
    }
    out.label = HullLabel::interior;
    return out;
  }

  // Infeasible: farkas = (g, s) gives g . (x_j - p) > 0 for all j, so
  // h = -g strictly separates p from the rest.
  Eigen::VectorXd h = -lp.farkas.head(d);
  if (h.norm() > 0.0)
    h /= h.norm();
  const Eigen::VectorXd gaps = diff.transpose() * h;
  if (h.norm() == 0.0 || !(gaps.maxCoeff() < 0.0)) {
    out.label = HullLabel::undetermined;
    return out;
  }
  out.label = HullLabel::vertex;
  out.separating_direction = std::move(h);
  return out;
}

std::vector<HullClassification>
exact_classify_all(const EmbeddingSpace &space, const ExactOptions &options) {
  std::vector<HullClassification> out(space.size());
  parallel_for(space.size(),
               [&](std::size_t i) { out[i] = exact_classify(space, i, options); });
  return out;
}

// ---------------------------------------------------------------------------
// Arc masks

ArcMaskSet::ArcMaskSet(std::vector<Plane> planes, std::size_t bins)
    : planes_(std::move(planes)), bins_(bins),
      words_per_plane_((bins + 63) / 64) {
  reset();
}

void ArcMaskSet::reset() {
  bits_.assign(planes_.size() * words_per_plane_, ~std::uint64_t{0});
  const std::size_t tail = bins_ % 64;
  if (tail != 0)
    for (std::size_t p = 0; p < planes_.size(); ++p)
      bits_[p * words_per_plane_ + words_per_plane_ - 1] =
          (std::uint64_t{1} << tail) - 1;
}

std::pair<std::size_t, std::size_t> arc_bin_range(double phi, double omega,
                                                  std::size_t bins) {
  const double per_radian = static_cast<double>(bins) / (2.0 * std::numbers::pi);
  const double lo = std::floor((phi - omega) * per_radian);
  const double hi = std::ceil((phi + omega) * per_radian);
  const double count = hi - lo;
  if (count >= static_cast<double>(bins))
    return {0, bins};
  const auto b = static_cast<long long>(bins);
  long long first = static_cast<long long>(lo) % b;
  if (first < 0)
    first += b;
  return {static_cast<std::size_t>(first), static_cast<std::size_t>(count)};
}

void ArcMaskSet::clear_arc(std::size_t plane, double phi, double omega) {
  auto [first, count] = arc_bin_range(phi, omega, bins_);
  std::uint64_t *words = bits_.data() + plane * words_per_plane_;
  auto clear_span = [&](std::size_t begin, std::size_t end) {
    while (begin < end) {
      const std::size_t w = begin / 64;
      const std::size_t offset = begin % 64;
      const std::size_t span = std::min<std::size_t>(64 - offset, end - begin);
      const std::uint64_t mask =
          span == 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << span) - 1) << offset;
      words[w] &= ~mask;
      begin += span;
    }
  };
  if (first + count <= bins_) {
    clear_span(first, first + count);
  } else {
    clear_span(first, bins_);
    clear_span(0, first + count - bins_);
  }
}

bool ArcMaskSet::viable(std::size_t plane, std::size_t bin) const {
  const std::uint64_t w = bits_[plane * words_per_plane_ + bin / 64];
  return (w >> (bin % 64)) & 1u;
}

std::size_t ArcMaskSet::surviving(std::size_t plane) const {
  std::size_t total = 0;
  for (std::size_t w = 0; w < words_per_plane_; ++w)
    total += static_cast<std::size_t>(std::popcount(bits_[plane * words_per_plane_ + w]));
  return total;
}

std::size_t ArcMaskSet::surviving() const {
  std::size_t total = 0;
  for (auto w : bits_)
    total += static_cast<std::size_t>(std::popcount(w));
  return total;
}

// ---------------------------------------------------------------------------
// Approximate classification

void DetectionParams::validate() const {
  if (!(omega > 0.0 && omega < std::numbers::pi / 2))
    throw Error("omega must lie strictly between 0 and pi/2");
  if (bins_per_plane < 4 || bins_per_plane % 2 != 0)
    throw Error("bins per plane must be even and at least 4");
  if (!(degeneracy_threshold >= 0.0))
    throw Error("degeneracy threshold must be non-negative");
}

std::vector<Plane> select_planes(std::size_t dim, const DetectionParams &params) {
  std::vector<Plane> all;
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = i + 1; j < dim; ++j)
      all.emplace_back(i, j);

  bool subset = params.plane_selection == PlaneSelection::random_subset ||
                (params.plane_selection == PlaneSelection::automatic && dim > 50);
  if (!subset || params.plane_subset_size >= all.size())
    return all;

  std::mt19937_64 rng(params.plane_seed);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(params.plane_subset_size);
  std::sort(all.begin(), all.end());
  return all;
}

namespace {

  // Projected difference-vector angles of every other word, per plane.
  std::vector<std::vector<double>> plane_angles(const EmbeddingSpace &space,
                                                WordId word,
                                                const std::vector<Plane> &planes,
                                                double threshold) {
    std::vector<std::vector<double>> angles(planes.size());
    const auto p = space.vector(word);
    for (std::size_t k = 0; k < planes.size(); ++k) {
      auto [a, b] = planes[k];
      auto &out = angles[k];
      out.reserve(space.size() - 1);
      for (WordId j = 0; j < space.size(); ++j) {
        if (j == word)
          continue;
        const auto x = space.vector(j);
        const double dx = x[static_cast<Eigen::Index>(a)] - p[static_cast<Eigen::Index>(a)];
        const double dy = x[static_cast<Eigen::Index>(b)] - p[static_cast<Eigen::Index>(b)];
        if (std::hypot(dx, dy) <= threshold)
          continue;
        double phi = std::atan2(dy, dx);
        if (phi < 0.0)
          phi += 2.0 * std::numbers::pi;
        out.push_back(phi);
      }
    }
    return angles;
  }

  // Full mask evaluation; returns the surviving bin count.
  std::size_t surviving_bins(ArcMaskSet &masks,
                             const std::vector<std::vector<double>> &angles,
                             double omega) {
    masks.reset();
    for (std::size_t k = 0; k < angles.size(); ++k)
      for (double phi : angles[k])
        masks.clear_arc(k, phi, omega);
    return masks.surviving();
  }

  // Stops at the first plane that keeps a viable bin.
  bool all_planes_cleared(ArcMaskSet &masks,
                          const std::vector<std::vector<double>> &angles,
                          double omega) {
    masks.reset();
    for (std::size_t k = 0; k < angles.size(); ++k) {
      for (double phi : angles[k])
        masks.clear_arc(k, phi, omega);
      if (!masks.all_cleared(k))
        return false;
    }
    return true;
  }

}  // namespace

std::vector<HullClassification>
approximate_classify(const EmbeddingSpace &space, const DetectionParams &params) {
  params.validate();
  if (space.dim() < 2)
    throw Error("approximate detection needs at least 2 dimensions");
  const auto planes = select_planes(space.dim(), params);

  std::vector<HullClassification> out(space.size());
  parallel_for(space.size(), [&](std::size_t i) {
    ArcMaskSet masks(planes, params.bins_per_plane);
    const auto angles = plane_angles(space, i, planes, params.degeneracy_threshold);
    auto &c = out[i];
    c.word = i;
    c.method = HullMethod::approximate;
    c.surviving_bins = surviving_bins(masks, angles, params.omega);
    c.label = c.surviving_bins == 0 ? HullLabel::interior : HullLabel::vertex;
  });
  return out;
}

double omega_grid_value(std::size_t k) {
  return static_cast<double>(k) * std::numbers::pi / 128.0;
}

OmegaSweep sweep_omega(const EmbeddingSpace &space, const DetectionParams &params,
                       std::size_t target) {
  if (target > space.size())
    throw Error("interior target exceeds vocabulary size");
  if (space.dim() < 2)
    throw Error("approximate detection needs at least 2 dimensions");
  DetectionParams probe = params;
  probe.omega = omega_grid_value(1);
  probe.validate();
  const auto planes = select_planes(space.dim(), params);

  // interior[i][k - 1]: word i is interior at omega_k.
  std::vector<std::vector<char>> interior(space.size());
  parallel_for(space.size(), [&](std::size_t i) {
    ArcMaskSet masks(planes, params.bins_per_plane);
    const auto angles = plane_angles(space, i, planes, params.degeneracy_threshold);
    auto &row = interior[i];
    row.resize(kOmegaGridSteps);
    for (std::size_t k = 1; k <= kOmegaGridSteps; ++k)
      row[k - 1] = all_planes_cleared(masks, angles, omega_grid_value(k)) ? 1 : 0;
  });

  OmegaSweep sweep;
  sweep.interior_counts.assign(kOmegaGridSteps, 0);
  for (const auto &row : interior)
    for (std::size_t k = 0; k < kOmegaGridSteps; ++k)
      sweep.interior_counts[k] += static_cast<std::size_t>(row[k]);

  for (std::size_t k = 1; k <= kOmegaGridSteps; ++k) {
    if (sweep.interior_counts[k - 1] >= target) {
      sweep.reached = true;
      sweep.grid_index = k;
      sweep.omega = omega_grid_value(k);
      DetectionParams chosen = params;
      chosen.omega = sweep.omega;
      sweep.classifications = approximate_classify(space, chosen);
      break;
    }
  }
  return sweep;
}

// ---------------------------------------------------------------------------
// Validation against the exact oracle

DetectorValidation
compare_to_exact(std::span<const HullClassification> approximate,
                 std::span<const HullClassification> exact) {
  if (approximate.size() != exact.size())
    throw Error("classification sets differ in size");
  DetectorValidation v;
  for (std::size_t i = 0; i < exact.size(); ++i) {
    if (approximate[i].word != exact[i].word)
      throw Error("classification sets are not aligned by word id");
    if (exact[i].label == HullLabel::undetermined) {
      ++v.excluded_undetermined;
      continue;
    }
    const bool approx_in = approximate[i].label == HullLabel::interior;
    const bool exact_in = exact[i].label == HullLabel::interior;
    v.approx_interior += approx_in;
    v.exact_interior += exact_in;
    v.true_positive += approx_in && exact_in;
  }
  v.precision_empty = v.approx_interior == 0;
  v.recall_empty = v.exact_interior == 0;
  v.precision = v.precision_empty
                    ? 1.0
                    : static_cast<double>(v.true_positive) / static_cast<double>(v.approx_interior);
  v.recall = v.recall_empty
                 ? 1.0
                 : static_cast<double>(v.true_positive) / static_cast<double>(v.exact_interior);
  return v;
}

DetectorValidation validate_detector(const EmbeddingSpace &space,
                                     const DetectionParams &params,
                                     const ExactOptions &exact) {
  if (space.dim() > 10)
    throw Error("detector validation requires dim <= 10 for the exact oracle");
  const auto approx = approximate_classify(space, params);
  const auto truth = exact_classify_all(space, exact);
  return compare_to_exact(approx, truth);
}

}  // namespace stolen
