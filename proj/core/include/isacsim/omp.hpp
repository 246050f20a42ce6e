#ifndef ISACSIM_OMP_HPP
#define ISACSIM_OMP_HPP

#include <vector>

#include "isacsim/array_model.hpp"
#include "isacsim/channel.hpp"
#include "isacsim/metrics.hpp"
#include "isacsim/types.hpp"

namespace isac {

/** Delay steering dictionary over a uniform round-trip range grid. */
struct DelayDictionary {
  CMat matrix;               // S x N, column j = delay phasor at delay_grid(j)
  RVec delay_grid;           // seconds, strictly increasing, uniform
  RVec range_grid;           // meters, delay * c / 2
  double subcarrier_spacing_hz = 0.0;
};

/// Dictionary with n delays spanning [2 r_min / c, 2 r_max / c]; n = 1
/// degenerates to the single delay at r_min.
DelayDictionary build_delay_dictionary(const OfdmConfig& cfg, int n, double r_min, double r_max);

/** Non-negative angle-delay likelihood map |Phi_a^H Ytilde Phi_d^*|^2. */
struct AngleDelayMap {
  RMat values;  // n_theta x n_delay
};

enum class MapBackend {
  kDirect,  // dense products
  kChirp    // chirp-z (Bluestein) transform along the delay dimension
};

AngleDelayMap angle_delay_map(const CMat& filtered, const SteeringDictionary& angle_dict,
                              const DelayDictionary& delay_dict,
                              MapBackend backend = MapBackend::kDirect);

/**
 * Native resolution of the discretized estimator and the derived window
 * half-widths used by the differentiable mode.
 */
struct Resolutions {
  double delta_theta_rad = 0.0;  // 2 / K
  double delta_range_m = 0.0;    // c / (2 S df)
  int window_theta = 0;          // floor(delta_theta * n_theta / theta_span)
  int window_range = 0;          // floor(delta_range * n_range / range_span)
};
Resolutions discrete_resolutions(int antennas, const OfdmConfig& cfg, int n_theta,
                                 double theta_span_rad, int n_range, double range_span_m);

struct Detection {
  double angle_rad = 0.0;
  double delay_s = 0.0;
  cplx gain;    // jointly re-estimated least-squares gain
  int grid_i = -1;  // angle grid index selected by the argmax
  int grid_j = -1;  // delay grid index selected by the argmax
};

struct DetectionResult {
  std::vector<Detection> detections;
  int iterations = 0;
  std::vector<double> entry_peaks;        // map maximum seen at each iteration
  std::vector<double> residual_energies;  // squared Frobenius norm after each update
};

/**
 * Greedy orthogonal matching pursuit on the angle-delay map. Iterates while
 * the (masked) map maximum exceeds `threshold`, up to max_iterations.
 * Already-selected atom pairs are masked out of the argmax. Per-iteration
 * gains are re-estimated jointly by an orthogonal decomposition of the
 * stacked vectorized atoms; a rank-deficient system drops the newest atom
 * and terminates.
 */
DetectionResult omp_baseline(const CMat& filtered, const SteeringDictionary& angle_dict,
                             const DelayDictionary& delay_dict, double threshold,
                             int max_iterations);

/// Baseline run with a known detection count: exactly t iterations (or fewer
/// if the map is exactly zero / the gain system degenerates).
DetectionResult omp_known_count(const CMat& filtered, const SteeringDictionary& angle_dict,
                                const DelayDictionary& delay_dict, int t);

/**
 * Full-depth greedy path, reusable for any threshold: running
 * truncate_path(path, delta) is identical to omp_baseline(..., delta, ...)
 * because the greedy selection order does not depend on the threshold.
 */
struct OmpPath {
  std::vector<Detection> detections;            // greedy order, gains from deepest refit
  std::vector<double> entry_peaks;              // peak before each detection
  std::vector<std::vector<cplx>> prefix_gains;  // prefix_gains[n]: gains of the first n atoms
  std::vector<double> residual_energies;
  /// Number of detections a threshold run would have produced.
  int count_at(double threshold) const;
};
OmpPath omp_path(const CMat& filtered, const SteeringDictionary& angle_dict,
                 const DelayDictionary& delay_dict, int max_iterations);
DetectionResult truncate_path(const OmpPath& path, double threshold);

/**
 * Differentiable-mode forward pass (values only; the training module tapes
 * the same computation). Runs exactly t_true iterations; each estimate is a
 * convex combination of the grid inside a window of half-widths
 * (window_theta, window_range) around the argmax, clipped at the map
 * borders, softmax-weighted at a temperature of noise_level per cell.
 * noise_level is the mean squared-magnitude map value of a noise-only cell,
 * sigma^2 K S in this model; it must be non-negative, and strong peaks cap
 * the temperature so the weights stay finitely sharp at any receive power.
 * Atom and residual updates reuse the on-grid argmax atoms.
 */
DetectionResult omp_differentiable(const CMat& filtered, const SteeringDictionary& angle_dict,
                                   const DelayDictionary& delay_dict, int t_true, int window_theta,
                                   int window_range, double noise_level);

/// Map detections to 2-D positions (R cos theta, R sin theta), R = c tau / 2.
/// Negative delays are clamped to zero; `clamped`, when given, reports it.
std::vector<Point2> to_positions(const DetectionResult& result, bool* clamped = nullptr);

}  // namespace isac

#endif
