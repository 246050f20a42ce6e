#ifndef ISACSIM_BEAMFORMING_HPP
#define ISACSIM_BEAMFORMING_HPP

#include "isacsim/array_model.hpp"
#include "isacsim/types.hpp"

namespace isac {

/** Power-normalized transmit precoder. */
struct Precoder {
  CVec f;
  double power = 1.0;
};

/**
 * Least-squares beampattern synthesis over the dictionary grid. The desired
 * pattern is K inside [theta_lo, theta_hi] and 0 elsewhere; the returned
 * vector solves min_f || b - Phi^T f || and is not normalized.
 *
 * When the Gram matrix is ill conditioned (condition number above 1e12) a
 * Tikhonov ridge of 1e-8 * trace/K is added before solving.
 * Throws if no grid angle falls inside the interval.
 */
CVec synthesize_beam(const SteeringDictionary& dict, double theta_lo, double theta_hi);

/// The desired beampattern vector used by synthesize_beam.
RVec beampattern_target(const RVec& angle_grid, int antennas, double theta_lo, double theta_hi);

/**
 * Trade-off combination of a sensing and a communication beam:
 *   f = sqrt(P) * (sqrt(eta) f_r/||f_r|| + sqrt(1-eta) e^{j phi} f_c/||f_c||) / ||...||.
 * eta in [0, 1]. Throws when an input or the combination has negligible norm.
 */
Precoder isac_combine(const CVec& f_r, const CVec& f_c, double eta, double phi, double power);

/// Radiated power |a(theta)^T f|^2 over a grid of angles, under `array`.
RVec transmit_response(const ArrayModel& array, const CVec& f, const RVec& angle_grid);

}  // namespace isac

#endif
