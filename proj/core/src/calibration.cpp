#include "isacsim/calibration.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "isacsim/beamforming.hpp"
#include "isacsim/omp.hpp"

namespace isac {

namespace {

struct Observation {
  CMat filtered;
  std::vector<Point2> truth;
  int count = 0;
};

std::vector<Observation> collect(const CalibrationConfig& cfg, const ArrayModel& true_array,
                                 const SteeringDictionary& nominal_dict, std::uint64_t seed,
                                 int sweep) {
  std::vector<Observation> obs;
  obs.reserve(cfg.observations);
  for (int m = 0; m < cfg.observations; ++m) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(sweep),
                          static_cast<std::uint64_t>(m));
    double center = rng.uniform(-cfg.sector_center_max_rad, cfg.sector_center_max_rad);
    double width = rng.uniform(cfg.sector_width_min_rad, cfg.sector_width_max_rad);
    ScenePriors prior = cfg.sensing_prior;
    prior.theta_min_rad = center - width / 2.0;
    prior.theta_max_rad = center + width / 2.0;

    CVec beam = synthesize_beam(nominal_dict, prior.theta_min_rad, prior.theta_max_rad);
    CVec f = std::sqrt(cfg.ofdm.power_w) * beam / beam.norm();

    SensingScene scene = sample_sensing_scene(prior, cfg.t_max, cfg.ofdm, rng, 1);
    SymbolBlock symbols = sample_symbols(cfg.ofdm.subcarriers, rng);
    CMat y = sensing_observation(scene, true_array, f, symbols, cfg.ofdm, rng);

    Observation o;
    o.filtered = matched_filter(y, symbols);
    o.count = static_cast<int>(scene.targets.size());
    o.truth.reserve(scene.targets.size());
    for (const Target& t : scene.targets)
      o.truth.emplace_back(t.range_m * std::cos(t.angle_rad),
                           t.range_m * std::sin(t.angle_rad));
    obs.push_back(std::move(o));
  }
  return obs;
}

double score(const std::vector<Observation>& obs, const SteeringDictionary& dict,
             const DelayDictionary& dd, const GospaParams& gp) {
  double acc = 0.0;
  for (const Observation& o : obs) {
    DetectionResult det = omp_known_count(o.filtered, dict, dd, o.count);
    acc += gospa(to_positions(det), o.truth, gp);
  }
  return acc / static_cast<double>(obs.size());
}

}  // namespace

CalibrationReport calibrate(const CalibrationConfig& cfg, const ArrayModel& true_array,
                            std::uint64_t seed) {
  if (cfg.antennas < 2) throw std::invalid_argument("calibrate: need at least two antennas");
  if (cfg.candidates < 2) throw std::invalid_argument("calibrate: need at least two candidates");
  if (cfg.observations < 1) throw std::invalid_argument("calibrate: need observations");
  if (true_array.antennas() != cfg.antennas)
    throw std::invalid_argument("calibrate: true array antenna mismatch");

  double lam = cfg.ofdm.wavelength();
  double nominal = lam / 2.0;
  double half = cfg.candidate_halfspan_m > 0.0 ? cfg.candidate_halfspan_m : 4.0 * lam / 15.0;
  if (nominal - half <= 0.0)
    throw std::invalid_argument("calibrate: candidate grid reaches non-positive spacings");

  RVec grid = uniform_angle_grid(cfg.n_theta, -kPi / 2.0, kPi / 2.0);
  SteeringDictionary nominal_dict =
      steering_matrix(ArrayModel::nominal(cfg.antennas, lam), grid);
  DelayDictionary dd = build_delay_dictionary(cfg.ofdm, cfg.n_range,
                                              cfg.sensing_prior.range_min_m,
                                              cfg.sensing_prior.range_max_m);

  CalibrationReport report;
  RVec spacings = RVec::Constant(cfg.antennas - 1, nominal);
  for (int sweep = 0; sweep < cfg.sweeps; ++sweep) {
    std::vector<Observation> obs = collect(cfg, true_array, nominal_dict, seed, sweep);
    if (sweep == 0)
      report.initial_score =
          score(obs, steering_matrix(impaired_array(cfg.antennas, lam, spacings), grid), dd,
                cfg.gospa);
    for (int i = 0; i < cfg.antennas - 1; ++i) {
      double best_score = 0.0;
      double best_value = spacings(i);
      for (int c = 0; c < cfg.candidates; ++c) {
        double cand = nominal - half + 2.0 * half * c / (cfg.candidates - 1);
        RVec trial = spacings;
        trial(i) = cand;
        double s = score(obs, steering_matrix(impaired_array(cfg.antennas, lam, trial), grid),
                         dd, cfg.gospa);
        if (c == 0 || s < best_score) {
          best_score = s;
          best_value = cand;
        }
      }
      spacings(i) = best_value;
      report.step_scores.push_back(best_score);
    }
    report.final_score = report.step_scores.back();
  }
  report.spacings_m = spacings;
  return report;
}

}  // namespace isac
