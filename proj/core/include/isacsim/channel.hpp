#ifndef ISACSIM_CHANNEL_HPP
#define ISACSIM_CHANNEL_HPP

#include <vector>

#include "isacsim/array_model.hpp"
#include "isacsim/rng.hpp"
#include "isacsim/types.hpp"

namespace isac {

/** OFDM frame and power bookkeeping shared by every stage. */
struct OfdmConfig {
  int subcarriers = 256;                 // S
  double subcarrier_spacing_hz = 240e3;  // delta f
  double carrier_hz = 60e9;
  double power_w = 1.0;                  // transmit power P
  double noise_psd = 0.0;                // N0 in W/Hz, set by calibrate_noise
  double mean_rcs_m2 = 1.0;

  double wavelength() const { return kSpeedOfLight / carrier_hz; }
  /// Per-entry complex noise power N0 * S * delta f.
  double noise_var() const { return noise_psd * subcarriers * subcarrier_spacing_hz; }
  /// Cyclic prefix duration; scenes whose delay spread exceeds it are invalid.
  double cyclic_prefix_s() const { return 1.0 / (4.0 * subcarrier_spacing_hz); }
};

/** Priors the scene samplers draw from. */
struct ScenePriors {
  double theta_min_rad = -40.0 * kPi / 180.0;
  double theta_max_rad = -20.0 * kPi / 180.0;
  double range_min_m = 10.0;
  double range_max_m = 43.75;
};

struct Target {
  double angle_rad = 0.0;
  double range_m = 0.0;
  cplx gain;  // psi: radar-equation magnitude, uniform phase
};

struct SensingScene {
  std::vector<Target> targets;
};

struct CommPath {
  double angle_rad = 0.0;
  double delay_s = 0.0;
  cplx gain;  // psi tilde
};

/** Multipath communication channel; paths[0] is always the line of sight. */
struct CommScene {
  std::vector<CommPath> paths;
};

struct CommPriors {
  double theta_min_rad = 40.0 * kPi / 180.0;
  double theta_max_rad = 60.0 * kPi / 180.0;
  double los_range_min_m = 10.0;
  double los_range_max_m = 200.0;
  double scatter_range_min_m = 5.0;
  double scatter_range_max_m = 100.0;
};

/** One OFDM block of unit-modulus pilot symbols, one message per subcarrier. */
struct SymbolBlock {
  std::vector<int> messages;  // in {0, ..., M-1}
  CVec symbols;               // S entries, |x_s| = 1
};

/// Radar-equation power |psi|^2 for a point target.
double target_gain_power(const OfdmConfig& cfg, double rcs_m2, double range_m);

/// Frequency-domain delay phasor: entry s is exp(-j 2 pi s df tau), s = 0..S-1.
CVec delay_phasor(const OfdmConfig& cfg, double delay_s);

/// Draw T ~ U{t_min..t_max} targets from the priors. Throws if a drawn
/// round-trip delay exceeds the cyclic prefix.
SensingScene sample_sensing_scene(const ScenePriors& priors, int t_max, const OfdmConfig& cfg,
                                  Rng& rng, int t_min = 0);

/// Fixed target count variant used when T is forced.
SensingScene sample_sensing_scene_fixed(const ScenePriors& priors, int t, const OfdmConfig& cfg,
                                        Rng& rng);

/**
 * Draw a communication scene: the line of sight is always present, plus
 * 0..(path_max-1) single-bounce scatter paths. Scatterers are drawn uniformly
 * in an annulus around the transmitter and redrawn while the excess path
 * delay violates the cyclic prefix.
 */
CommScene sample_comm_scene(const CommPriors& priors, int path_max, const OfdmConfig& cfg,
                            Rng& rng);

/// Uniform messages mapped through the given constellation size-4 Gray QPSK.
SymbolBlock sample_symbols(int subcarriers, Rng& rng);

/**
 * Reflected monostatic observation, K x S:
 *   Y = sum_t psi_t a(theta_t) a(theta_t)^T f (x .* rho(tau_t))^T + W,
 * with W iid circular complex noise of per-entry power N0 S df.
 * Requires ||f||^2 = P within 1e-9 relative.
 */
CMat sensing_observation(const SensingScene& scene, const ArrayModel& array, const CVec& f,
                         const SymbolBlock& symbols, const OfdmConfig& cfg, Rng& rng);

/// Element-wise removal of the pilot symbols: Y .* (ones * x^H).
CMat matched_filter(const CMat& observation, const SymbolBlock& symbols);

/**
 * Communication observation. Returns the per-subcarrier channel kappa and
 * y = kappa .* x + n, with n iid of per-entry power N0 S df.
 */
struct CommObservation {
  CVec kappa;  // S
  CVec y;      // S
};
CommObservation comm_observation(const CommScene& scene, const ArrayModel& array, const CVec& f,
                                 const SymbolBlock& symbols, const OfdmConfig& cfg, Rng& rng);

/**
 * Noise power density achieving the requested maximum sensing SNR
 *   SNR = P K E[|psi|^2] / (N0 S df),
 * where E[|psi|^2] integrates the radar equation over the range prior and
 * the mean radar cross section. The expectation is evaluated by quadrature.
 */
double calibrate_noise(const OfdmConfig& cfg, int antennas, const ScenePriors& priors,
                       double target_snr_db);

/// E[|psi|^2] under the priors, by quadrature (Simpson) over the range prior.
double mean_target_gain_power(const OfdmConfig& cfg, const ScenePriors& priors);

/// Maximum sensing SNR implied by a given N0 (inverse of calibrate_noise).
double sensing_snr_db(const OfdmConfig& cfg, int antennas, const ScenePriors& priors);

}  // namespace isac

#endif
