#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "stolen/embedding_store.hpp"
#include "stolen/simplex.hpp"

namespace stolen {

enum class HullLabel { vertex, interior, undetermined };
enum class HullMethod { exact, approximate };

std::string to_string(HullLabel label);
std::string to_string(HullMethod method);
HullLabel parse_hull_label(std::string_view text);

struct HullClassification {
  WordId word = 0;
  HullLabel label = HullLabel::undetermined;
  HullMethod method = HullMethod::exact;

  // Exact interior: convex weights over the other words reproducing x_word.
  std::vector<std::pair<WordId, double>> weights;
  // Exact vertex: h with <h, x_i - x_word> < 0 for every other word.
  std::optional<Eigen::VectorXd> separating_direction;
  // Approximate: arc bins left viable across all planes.
  std::size_t surviving_bins = 0;
};

struct ExactOptions {
  SimplexOptions simplex;
  // Reproduction tolerance for interior certificates, relative to 1 + |p|.
  double reproduction_tol = 1e-6;
  double weight_sum_tol = 1e-9;
};

/// Decides whether x_word lies in the convex hull of the other embeddings
/// by solving the feasibility problem sum_j w_j (x_j - p) = 0, sum_j w_j = 1,
/// w >= 0. Certificates are re-checked before a label is committed; a failed
/// solve or check yields `undetermined`.
HullClassification exact_classify(const EmbeddingSpace &space, WordId word,
                                  const ExactOptions &options = {});

std::vector<HullClassification>
exact_classify_all(const EmbeddingSpace &space, const ExactOptions &options = {});

using Plane = std::pair<std::size_t, std::size_t>;

/// Viable-direction bitmaps for the angular elimination test: one circle of
/// `bins` arcs per coordinate plane, bin k covering [2 pi k / B, 2 pi (k+1) / B).
class ArcMaskSet {
 public:
  ArcMaskSet(std::vector<Plane> planes, std::size_t bins);

  const std::vector<Plane> &planes() const noexcept { return planes_; }
  std::size_t bins() const noexcept { return bins_; }

  // Clears every bin that intersects the open arc (phi - omega, phi + omega).
  void clear_arc(std::size_t plane, double phi, double omega);

  bool viable(std::size_t plane, std::size_t bin) const;
  std::size_t surviving(std::size_t plane) const;
  std::size_t surviving() const;
  bool all_cleared(std::size_t plane) const { return surviving(plane) == 0; }

  void reset();

 private:
  std::vector<Plane> planes_;
  std::size_t bins_;
  std::size_t words_per_plane_;
  std::vector<std::uint64_t> bits_;
};

// Half-open bin range [first, first + count) (mod B) touched by the open arc.
std::pair<std::size_t, std::size_t> arc_bin_range(double phi, double omega,
                                                  std::size_t bins);

enum class PlaneSelection { all_pairs, random_subset, automatic };

struct DetectionParams {
  double omega = 55.0 * 3.14159265358979323846 / 128.0;
  std::size_t bins_per_plane = 256;
  PlaneSelection plane_selection = PlaneSelection::automatic;
  // Subset size for random_subset (and for automatic above 50 dimensions).
  std::size_t plane_subset_size = 1225;
  std::uint64_t plane_seed = 0;
  std::optional<std::size_t> min_interior_target;
  double degeneracy_threshold = 1e-10;

  // Throws Error for omega outside (0, pi/2) or an invalid bin count.
  void validate() const;
};

std::vector<Plane> select_planes(std::size_t dim, const DetectionParams &params);

/// Angular elimination: a word is interior when, in every selected
/// coordinate plane, the arcs of half-width omega around each projected
/// difference vector x_i - p cover the full circle.
std::vector<HullClassification>
approximate_classify(const EmbeddingSpace &space, const DetectionParams &params);

inline constexpr std::size_t kOmegaGridSteps = 63;

// The sweep grid value k * pi / 128.
double omega_grid_value(std::size_t k);

struct OmegaSweep {
  bool reached = false;
  std::size_t grid_index = 0;  // k of the chosen omega when reached
  double omega = 0.0;
  // interior_counts[k - 1] is the interior count at omega = k pi / 128.
  std::vector<std::size_t> interior_counts;
  std::vector<HullClassification> classifications;
};

/// Smallest grid omega yielding at least `target` interior words.
OmegaSweep sweep_omega(const EmbeddingSpace &space, const DetectionParams &params,
                       std::size_t target);

struct DetectorValidation {
  double precision = 1.0;
  double recall = 1.0;
  std::size_t approx_interior = 0;
  std::size_t exact_interior = 0;
  std::size_t true_positive = 0;
  std::size_t excluded_undetermined = 0;
  bool precision_empty = false;  // no approximate interior words
  bool recall_empty = false;     // no exact interior words
};

DetectorValidation
compare_to_exact(std::span<const HullClassification> approximate,
                 std::span<const HullClassification> exact);

DetectorValidation validate_detector(const EmbeddingSpace &space,
                                     const DetectionParams &params,
                                     const ExactOptions &exact = {});

}  // namespace stolen
