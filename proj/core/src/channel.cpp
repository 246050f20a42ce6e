#include "isacsim/channel.hpp"

#include <cmath>
#include <stdexcept>

#include "isacsim/comm.hpp"

namespace isac {

double target_gain_power(const OfdmConfig& cfg, double rcs_m2, double range_m) {
  double lam = cfg.wavelength();
  double four_pi = 4.0 * kPi;
  return rcs_m2 * lam * lam / (four_pi * four_pi * four_pi * std::pow(range_m, 4.0));
}

CVec delay_phasor(const OfdmConfig& cfg, double delay_s) {
  CVec rho(cfg.subcarriers);
  for (int s = 0; s < cfg.subcarriers; ++s) {
    double phase = -2.0 * kPi * s * cfg.subcarrier_spacing_hz * delay_s;
    rho(s) = cplx(std::cos(phase), std::sin(phase));
  }
  return rho;
}

namespace {

Target draw_target(const ScenePriors& priors, const OfdmConfig& cfg, Rng& rng) {
  Target t;
  t.angle_rad = rng.uniform(priors.theta_min_rad, priors.theta_max_rad);
  t.range_m = rng.uniform(priors.range_min_m, priors.range_max_m);
  double rcs = rng.exponential(cfg.mean_rcs_m2);
  double mag = std::sqrt(target_gain_power(cfg, rcs, t.range_m));
  double ph = rng.phase();
  t.gain = cplx(mag * std::cos(ph), mag * std::sin(ph));
  double delay = 2.0 * t.range_m / kSpeedOfLight;
  if (delay > cfg.cyclic_prefix_s())
    throw std::runtime_error("sample_sensing_scene: round-trip delay exceeds the cyclic prefix");
  return t;
}

}  // namespace

SensingScene sample_sensing_scene(const ScenePriors& priors, int t_max, const OfdmConfig& cfg,
                                  Rng& rng, int t_min) {
  if (t_max < t_min || t_min < 0)
    throw std::invalid_argument("sample_sensing_scene: bad target count bounds");
  int t = t_min + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(t_max - t_min + 1)));
  return sample_sensing_scene_fixed(priors, t, cfg, rng);
}

SensingScene sample_sensing_scene_fixed(const ScenePriors& priors, int t, const OfdmConfig& cfg,
                                        Rng& rng) {
  SensingScene scene;
  scene.targets.reserve(t);
  for (int i = 0; i < t; ++i) scene.targets.push_back(draw_target(priors, cfg, rng));
  return scene;
}

CommScene sample_comm_scene(const CommPriors& priors, int path_max, const OfdmConfig& cfg,
                            Rng& rng) {
  if (path_max < 1) throw std::invalid_argument("sample_comm_scene: need at least the LOS path");
  CommScene scene;
  double lam = cfg.wavelength();

  CommPath los;
  los.angle_rad = rng.uniform(priors.theta_min_rad, priors.theta_max_rad);
  double r1 = rng.uniform(priors.los_range_min_m, priors.los_range_max_m);
  los.delay_s = r1 / kSpeedOfLight;
  double mag = lam / (4.0 * kPi * r1);
  double ph = rng.phase();
  los.gain = cplx(mag * std::cos(ph), mag * std::sin(ph));
  scene.paths.push_back(los);

  double rx_x = r1 * std::cos(los.angle_rad);
  double rx_y = r1 * std::sin(los.angle_rad);
  int nlos = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(path_max)));
  double four_pi = 4.0 * kPi;
  for (int i = 0; i < nlos; ++i) {
    for (int attempt = 0;; ++attempt) {
      if (attempt >= 1000)
        throw std::runtime_error("sample_comm_scene: could not satisfy the cyclic prefix");
      double ang = rng.uniform(-kPi / 2.0, kPi / 2.0);
      double ra = rng.uniform(priors.scatter_range_min_m, priors.scatter_range_max_m);
      double sx = ra * std::cos(ang);
      double sy = ra * std::sin(ang);
      double rb = std::hypot(sx - rx_x, sy - rx_y);
      double excess = (ra + rb - r1) / kSpeedOfLight;
      if (excess > cfg.cyclic_prefix_s()) continue;
      CommPath p;
      p.angle_rad = ang;
      p.delay_s = (ra + rb) / kSpeedOfLight;
      double rcs = rng.exponential(cfg.mean_rcs_m2);
      double m2 = rcs * lam * lam / (four_pi * four_pi * four_pi * ra * ra * rb * rb);
      double phs = rng.phase();
      p.gain = cplx(std::sqrt(m2) * std::cos(phs), std::sqrt(m2) * std::sin(phs));
      scene.paths.push_back(p);
      break;
    }
  }
  return scene;
}

SymbolBlock sample_symbols(int subcarriers, Rng& rng) {
  const Constellation& c = qpsk();
  SymbolBlock block;
  block.messages.resize(subcarriers);
  block.symbols = CVec(subcarriers);
  for (int s = 0; s < subcarriers; ++s) {
    int m = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(c.size())));
    block.messages[s] = m;
    block.symbols(s) = c.point(m);
  }
  return block;
}

namespace {

void check_precoder_power(const CVec& f, const OfdmConfig& cfg, const char* where) {
  double p = f.squaredNorm();
  if (std::abs(p - cfg.power_w) > 1e-9 * cfg.power_w)
    throw std::invalid_argument(std::string(where) + ": precoder power must equal P");
}

}  // namespace

CMat sensing_observation(const SensingScene& scene, const ArrayModel& array, const CVec& f,
                         const SymbolBlock& symbols, const OfdmConfig& cfg, Rng& rng) {
  check_precoder_power(f, cfg, "sensing_observation");
  if (f.size() != array.antennas())
    throw std::invalid_argument("sensing_observation: precoder length mismatch");
  int K = array.antennas();
  int S = cfg.subcarriers;
  CMat y = CMat::Zero(K, S);
  for (const Target& t : scene.targets) {
    CVec a = steering_vector(array, t.angle_rad);
    cplx along = (a.transpose() * f)(0);
    CVec rho = delay_phasor(cfg, 2.0 * t.range_m / kSpeedOfLight);
    CVec row = symbols.symbols.cwiseProduct(rho);
    y.noalias() += (t.gain * along) * (a * row.transpose());
  }
  double var = cfg.noise_var();
  if (var > 0.0) {
    for (int s = 0; s < S; ++s)
      for (int k = 0; k < K; ++k) y(k, s) += rng.cnormal(var);
  }
  return y;
}

CMat matched_filter(const CMat& observation, const SymbolBlock& symbols) {
  if (observation.cols() != symbols.symbols.size())
    throw std::invalid_argument("matched_filter: symbol count mismatch");
  CMat out = observation;
  for (int s = 0; s < out.cols(); ++s) out.col(s) *= std::conj(symbols.symbols(s));
  return out;
}

CommObservation comm_observation(const CommScene& scene, const ArrayModel& array, const CVec& f,
                                 const SymbolBlock& symbols, const OfdmConfig& cfg, Rng& rng) {
  check_precoder_power(f, cfg, "comm_observation");
  if (scene.paths.empty()) throw std::invalid_argument("comm_observation: scene has no paths");
  int S = cfg.subcarriers;
  CommObservation obs;
  obs.kappa = CVec::Zero(S);
  for (const CommPath& p : scene.paths) {
    CVec a = steering_vector(array, p.angle_rad);
    cplx along = (a.transpose() * f)(0);
    obs.kappa += (p.gain * along) * delay_phasor(cfg, p.delay_s);
  }
  obs.y = obs.kappa.cwiseProduct(symbols.symbols);
  double var = cfg.noise_var();
  if (var > 0.0)
    for (int s = 0; s < S; ++s) obs.y(s) += rng.cnormal(var);
  return obs;
}

double mean_target_gain_power(const OfdmConfig& cfg, const ScenePriors& priors) {
  // E[|psi|^2] = E[rcs] * lambda^2 / (4pi)^3 * E[R^-4]; the range expectation
  // is integrated with composite Simpson, which is plenty for 1/R^4.
  double lo = priors.range_min_m, hi = priors.range_max_m;
  if (!(hi > lo)) throw std::invalid_argument("mean_target_gain_power: bad range prior");
  const int n = 2048;  // even
  double h = (hi - lo) / n;
  auto f = [](double r) { return 1.0 / (r * r * r * r); };
  double acc = f(lo) + f(hi);
  for (int i = 1; i < n; ++i) acc += f(lo + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
  double mean_inv_r4 = acc * h / 3.0 / (hi - lo);
  double lam = cfg.wavelength();
  double four_pi = 4.0 * kPi;
  return cfg.mean_rcs_m2 * lam * lam / (four_pi * four_pi * four_pi) * mean_inv_r4;
}

double calibrate_noise(const OfdmConfig& cfg, int antennas, const ScenePriors& priors,
                       double target_snr_db) {
  double num = cfg.power_w * antennas * mean_target_gain_power(cfg, priors);
  return num / (cfg.subcarriers * cfg.subcarrier_spacing_hz * db_to_linear(target_snr_db));
}

double sensing_snr_db(const OfdmConfig& cfg, int antennas, const ScenePriors& priors) {
  if (!(cfg.noise_psd > 0.0)) throw std::invalid_argument("sensing_snr_db: N0 must be positive");
  double num = cfg.power_w * antennas * mean_target_gain_power(cfg, priors);
  return linear_to_db(num / (cfg.noise_psd * cfg.subcarriers * cfg.subcarrier_spacing_hz));
}

}  // namespace isac
