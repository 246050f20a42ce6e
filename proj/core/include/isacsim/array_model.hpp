#ifndef ISACSIM_ARRAY_MODEL_HPP
#define ISACSIM_ARRAY_MODEL_HPP

#include "isacsim/rng.hpp"
#include "isacsim/types.hpp"

namespace isac {

/**
 * Uniform-ish linear array described by its inter-element spacings.
 *
 * Element positions are cumulative: p_0 = first_position and
 * p_k = p_0 + sum of the first k spacings. The nominal array has all
 * spacings equal to lambda/2 and is centered around the origin.
 */
class ArrayModel {
 public:
  /// spacings has K-1 entries, all strictly positive.
  ArrayModel(int antennas, double wavelength, RVec spacings, double first_position);

  /// Perfectly calibrated half-wavelength array, centered on the origin.
  static ArrayModel nominal(int antennas, double wavelength);

  int antennas() const { return antennas_; }
  double wavelength() const { return wavelength_; }
  const RVec& spacings() const { return spacings_; }
  double first_position() const { return first_position_; }

  /// Element positions (not centered).
  const RVec& positions() const { return positions_; }

  bool is_nominal(double rel_tol = 1e-12) const;

 private:
  int antennas_;
  double wavelength_;
  RVec spacings_;
  double first_position_;
  RVec positions_;
};

/** Steering matrix over an explicit angular grid. */
struct SteeringDictionary {
  CMat matrix;     // K x N
  RVec angle_grid; // N, radians, strictly increasing
};

/**
 * Array response at the given angle (radians, broadside convention).
 * Positions are centered on their mean before forming the phases, so a
 * rigid translation of the whole array does not change the response.
 */
CVec steering_vector(const ArrayModel& model, double angle_rad);

/// Response for explicit element positions (centered internally).
CVec steering_vector_for_positions(const RVec& positions, double wavelength, double angle_rad);

/// Stack steering vectors over a grid of angles. The grid must be non-empty
/// and strictly increasing.
SteeringDictionary steering_matrix(const ArrayModel& model, const RVec& angle_grid);

/// Uniform angular grid with n points covering [lo, hi], endpoints included.
RVec uniform_angle_grid(int n, double lo, double hi);

/**
 * Draw inter-element spacings around lambda/2 with standard deviation sigma.
 * Draws that are not strictly positive are rejected and redrawn.
 */
RVec sample_impairment(int antennas, double wavelength, double sigma, Rng& rng);

/// Assemble an ArrayModel from sampled spacings, keeping the conventional
/// first-element anchor at -(K-1)*lambda/4.
ArrayModel impaired_array(int antennas, double wavelength, const RVec& spacings);

}  // namespace isac

#endif
