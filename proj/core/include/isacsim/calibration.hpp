#ifndef ISACSIM_CALIBRATION_HPP
#define ISACSIM_CALIBRATION_HPP

#include <cstdint>
#include <vector>

#include "isacsim/array_model.hpp"
#include "isacsim/channel.hpp"
#include "isacsim/metrics.hpp"
#include "isacsim/types.hpp"

namespace isac {

/**
 * Greedy coordinate search over the inter-element spacings. A batch of
 * sensing observations is collected once per sweep with the transmit beam
 * built from the nominal array; every candidate spacing is then scored by the
 * mean position error of the known-count greedy receiver under the candidate
 * dictionary, and each spacing in turn is fixed to its best candidate.
 */
struct CalibrationConfig {
  OfdmConfig ofdm;
  int antennas = 16;
  int observations = 64;  // collected per sweep, shared by all candidates
  int candidates = 100;   // grid points per spacing
  int sweeps = 1;
  /// Candidate grid half-width around the nominal spacing; 0 picks
  /// 4 * (wavelength / 15), four standard deviations of the default
  /// imperfection model.
  double candidate_halfspan_m = 0.0;
  int t_max = 5;
  int n_theta = 180;
  int n_range = 50;
  ScenePriors sensing_prior;
  double sector_center_max_rad = 60.0 * kPi / 180.0;
  double sector_width_min_rad = 10.0 * kPi / 180.0;
  double sector_width_max_rad = 20.0 * kPi / 180.0;
  GospaParams gospa;
};

struct CalibrationReport {
  RVec spacings_m;
  double initial_score = 0.0;  // mean error of the nominal assumption
  double final_score = 0.0;    // mean error after the last sweep
  /// Best candidate score recorded when each spacing was fixed, in visit
  /// order across sweeps.
  std::vector<double> step_scores;
};

CalibrationReport calibrate(const CalibrationConfig& cfg, const ArrayModel& true_array,
                            std::uint64_t seed);

}  // namespace isac

#endif
