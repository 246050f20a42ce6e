#include "isacsim/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "isacsim/beamforming.hpp"
#include "isacsim/comm.hpp"
#include "isacsim/rng.hpp"

namespace isac {

namespace {

using nlohmann::json;

double deg2rad(double d) { return d * kPi / 180.0; }
double rad2deg(double r) { return r * 180.0 / kPi; }

[[noreturn]] void bad_key(const std::string& section, const std::string& key) {
  throw std::invalid_argument("config: unknown key " + section + "." + key);
}

const json& section_of(const json& j, const char* name) {
  const json& s = j.at(name);
  if (!s.is_object())
    throw std::invalid_argument(std::string("config: section ") + name + " must be an object");
  return s;
}

}  // namespace

std::string version_string() { return "isacsim 0.1.0"; }

std::string system_name(SystemKind kind) {
  switch (kind) {
    case SystemKind::kBaselineKnown: return "baseline_known";
    case SystemKind::kBaselineAgnostic: return "baseline_agnostic";
    case SystemKind::kDictionaryLearned: return "dictionary_learned";
    case SystemKind::kImpairmentLearned: return "impairment_learned";
    case SystemKind::kCalibrated: return "calibrated";
  }
  throw std::logic_error("system_name: bad kind");
}

ExperimentConfig ExperimentConfig::paper() {
  ExperimentConfig c;
  c.train.antennas = 64;
  c.train.n_theta = 720;
  c.train.n_range = 200;
  c.train.batch = 800;
  c.train.iterations = 15000;
  c.eval_batch = 1000;
  c.apply_noise();
  return c;
}

ExperimentConfig ExperimentConfig::desk() {
  ExperimentConfig c;
  c.train.antennas = 16;
  c.train.ofdm.subcarriers = 64;
  c.train.n_theta = 180;
  c.train.n_range = 50;
  c.train.batch = 64;
  c.train.iterations = 2000;
  c.eval_batch = 400;
  // At 2000 iterations the reference dictionary rate cannot move the entries
  // far enough to matter; scale it so total plasticity stays comparable.
  c.lr_dictionary = 1e-4;
  // Batch-64 spacing gradients are far noisier than the reference batch-800
  // run, and Adam's early steps move a full learning rate per coordinate; at
  // 0.2 the spacings random-walk across several half-wavelengths instead of
  // settling. 1e-3 resolves the lambda/50 scale with margin.
  c.lr_impairment = 1e-3;
  c.apply_noise();
  return c;
}

double ExperimentConfig::impairment_sigma_m() const {
  return impairment_sigma_wl * train.ofdm.wavelength();
}

RVec ExperimentConfig::eta_grid() const {
  if (eta_points < 2) throw std::invalid_argument("eta_grid: need at least two points");
  if (!(eta_min > 0.0 && eta_min < 1.0))
    throw std::invalid_argument("eta_grid: eta_min must lie in (0, 1)");
  RVec g(eta_points);
  double l0 = std::log(eta_min);
  for (int i = 0; i < eta_points; ++i)
    g(i) = std::exp(l0 * (1.0 - static_cast<double>(i) / (eta_points - 1)));
  g(eta_points - 1) = 1.0;
  return g;
}

ArrayModel ExperimentConfig::true_array() const {
  double lam = train.ofdm.wavelength();
  Rng rng = Rng::stream(impairment_seed, 0);
  RVec spacings = sample_impairment(train.antennas, lam, impairment_sigma_m(), rng);
  return impaired_array(train.antennas, lam, spacings);
}

TrainConfig ExperimentConfig::train_for(LearnMode mode) const {
  TrainConfig t = train;
  t.lr = mode == LearnMode::kImpairment ? lr_impairment : lr_dictionary;
  return t;
}

CalibrationConfig ExperimentConfig::calibration() const {
  CalibrationConfig c;
  c.ofdm = train.ofdm;
  c.antennas = train.antennas;
  c.observations = calib_observations;
  c.candidates = calib_candidates;
  c.sweeps = calib_sweeps;
  c.t_max = train.t_max;
  c.n_theta = train.n_theta;
  c.n_range = train.n_range;
  c.sensing_prior = train.sensing_prior;
  c.sector_center_max_rad = train.sector_center_max_rad;
  c.sector_width_min_rad = train.sector_width_min_rad;
  c.sector_width_max_rad = train.sector_width_max_rad;
  c.gospa = gospa;
  return c;
}

void ExperimentConfig::apply_noise() {
  train.ofdm.noise_psd = calibrate_noise(train.ofdm, train.antennas, train.sensing_prior, snr_db);
}

namespace {

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["array"] = {{"antennas", c.train.antennas},
                {"impairment_sigma_wl", c.impairment_sigma_wl},
                {"impairment_seed", c.impairment_seed}};
  j["ofdm"] = {{"subcarriers", c.train.ofdm.subcarriers},
               {"subcarrier_spacing_hz", c.train.ofdm.subcarrier_spacing_hz},
               {"carrier_hz", c.train.ofdm.carrier_hz},
               {"power_w", c.train.ofdm.power_w},
               {"mean_rcs_m2", c.train.ofdm.mean_rcs_m2}};
  j["snr_db"] = c.snr_db;
  j["priors"] = {{"sensing",
                  {{"theta_min_deg", rad2deg(c.train.sensing_prior.theta_min_rad)},
                   {"theta_max_deg", rad2deg(c.train.sensing_prior.theta_max_rad)},
                   {"range_min_m", c.train.sensing_prior.range_min_m},
                   {"range_max_m", c.train.sensing_prior.range_max_m}}},
                 {"comm",
                  {{"theta_min_deg", rad2deg(c.train.comm_prior.theta_min_rad)},
                   {"theta_max_deg", rad2deg(c.train.comm_prior.theta_max_rad)},
                   {"los_range_min_m", c.train.comm_prior.los_range_min_m},
                   {"los_range_max_m", c.train.comm_prior.los_range_max_m},
                   {"scatter_range_min_m", c.train.comm_prior.scatter_range_min_m},
                   {"scatter_range_max_m", c.train.comm_prior.scatter_range_max_m}}}};
  j["sectors"] = {{"center_max_deg", rad2deg(c.train.sector_center_max_rad)},
                  {"width_min_deg", rad2deg(c.train.sector_width_min_rad)},
                  {"width_max_deg", rad2deg(c.train.sector_width_max_rad)}};
  j["train"] = {{"batch", c.train.batch},
                {"iterations", c.train.iterations},
                {"t_max", c.train.t_max},
                {"comm_paths_max", c.train.comm_paths_max},
                {"omega", c.train.omega},
                {"eta", c.train.eta},
                {"beam_phase_rad", c.train.beam_phase},
                {"n_theta", c.train.n_theta},
                {"n_range", c.train.n_range},
                {"lr_impairment", c.lr_impairment},
                {"lr_dictionary", c.lr_dictionary},
                {"min_spacing_units", c.train.min_spacing_units}};
  j["eval"] = {{"batch", c.eval_batch},
               {"target_pfa", c.target_pfa},
               {"pfa_rel_tol", c.pfa_rel_tol},
               {"gospa_gamma", c.gospa.gamma},
               {"gospa_mu", c.gospa.mu},
               {"gospa_p", c.gospa.p},
               {"roc_points", c.roc_points}};
  j["isac_sweep"] = {{"eta_points", c.eta_points},
                     {"eta_min", c.eta_min},
                     {"beam_phases_rad", c.beam_phases}};
  j["generalization"] = {{"theta_means_deg", c.gen_theta_means_deg},
                         {"width_deg", c.gen_width_deg}};
  j["calibration"] = {{"observations", c.calib_observations},
                      {"candidates", c.calib_candidates},
                      {"sweeps", c.calib_sweeps}};
  return j;
}

void parse_into(const json& j, ExperimentConfig& c) {
  for (const auto& [sec, val] : j.items()) {
    if (sec == "array") {
      for (const auto& [k, v] : section_of(j, "array").items()) {
        if (k == "antennas") c.train.antennas = v.get<int>();
        else if (k == "impairment_sigma_wl") c.impairment_sigma_wl = v.get<double>();
        else if (k == "impairment_seed") c.impairment_seed = v.get<std::uint64_t>();
        else bad_key(sec, k);
      }
    } else if (sec == "ofdm") {
      for (const auto& [k, v] : section_of(j, "ofdm").items()) {
        if (k == "subcarriers") c.train.ofdm.subcarriers = v.get<int>();
        else if (k == "subcarrier_spacing_hz") c.train.ofdm.subcarrier_spacing_hz = v.get<double>();
        else if (k == "carrier_hz") c.train.ofdm.carrier_hz = v.get<double>();
        else if (k == "power_w") c.train.ofdm.power_w = v.get<double>();
        else if (k == "mean_rcs_m2") c.train.ofdm.mean_rcs_m2 = v.get<double>();
        else bad_key(sec, k);
      }
    } else if (sec == "snr_db") {
      c.snr_db = val.get<double>();
    } else if (sec == "priors") {
      for (const auto& [sub, pv] : section_of(j, "priors").items()) {
        if (sub == "sensing") {
          for (const auto& [k, v] : pv.items()) {
            if (k == "theta_min_deg") c.train.sensing_prior.theta_min_rad = deg2rad(v.get<double>());
            else if (k == "theta_max_deg") c.train.sensing_prior.theta_max_rad = deg2rad(v.get<double>());
            else if (k == "range_min_m") c.train.sensing_prior.range_min_m = v.get<double>();
            else if (k == "range_max_m") c.train.sensing_prior.range_max_m = v.get<double>();
            else bad_key("priors.sensing", k);
          }
        } else if (sub == "comm") {
          for (const auto& [k, v] : pv.items()) {
            if (k == "theta_min_deg") c.train.comm_prior.theta_min_rad = deg2rad(v.get<double>());
            else if (k == "theta_max_deg") c.train.comm_prior.theta_max_rad = deg2rad(v.get<double>());
            else if (k == "los_range_min_m") c.train.comm_prior.los_range_min_m = v.get<double>();
            else if (k == "los_range_max_m") c.train.comm_prior.los_range_max_m = v.get<double>();
            else if (k == "scatter_range_min_m") c.train.comm_prior.scatter_range_min_m = v.get<double>();
            else if (k == "scatter_range_max_m") c.train.comm_prior.scatter_range_max_m = v.get<double>();
            else bad_key("priors.comm", k);
          }
        } else {
          bad_key("priors", sub);
        }
      }
    } else if (sec == "sectors") {
      for (const auto& [k, v] : section_of(j, "sectors").items()) {
        if (k == "center_max_deg") c.train.sector_center_max_rad = deg2rad(v.get<double>());
        else if (k == "width_min_deg") c.train.sector_width_min_rad = deg2rad(v.get<double>());
        else if (k == "width_max_deg") c.train.sector_width_max_rad = deg2rad(v.get<double>());
        else bad_key(sec, k);
      }
    } else if (sec == "train") {
      for (const auto& [k, v] : section_of(j, "train").items()) {
        if (k == "batch") c.train.batch = v.get<int>();
        else if (k == "iterations") c.train.iterations = v.get<int>();
        else if (k == "t_max") c.train.t_max = v.get<int>();
        else if (k == "comm_paths_max") c.train.comm_paths_max = v.get<int>();
        else if (k == "omega") c.train.omega = v.get<double>();
        else if (k == "eta") c.train.eta = v.get<double>();
        else if (k == "beam_phase_rad") c.train.beam_phase = v.get<double>();
        else if (k == "n_theta") c.train.n_theta = v.get<int>();
        else if (k == "n_range") c.train.n_range = v.get<int>();
        else if (k == "lr_impairment") c.lr_impairment = v.get<double>();
        else if (k == "lr_dictionary") c.lr_dictionary = v.get<double>();
        else if (k == "min_spacing_units") c.train.min_spacing_units = v.get<double>();
        else bad_key(sec, k);
      }
    } else if (sec == "eval") {
      for (const auto& [k, v] : section_of(j, "eval").items()) {
        if (k == "batch") c.eval_batch = v.get<int>();
        else if (k == "target_pfa") c.target_pfa = v.get<double>();
        else if (k == "pfa_rel_tol") c.pfa_rel_tol = v.get<double>();
        else if (k == "gospa_gamma") c.gospa.gamma = v.get<double>();
        else if (k == "gospa_mu") c.gospa.mu = v.get<double>();
        else if (k == "gospa_p") c.gospa.p = v.get<double>();
        else if (k == "roc_points") c.roc_points = v.get<int>();
        else bad_key(sec, k);
      }
    } else if (sec == "isac_sweep") {
      for (const auto& [k, v] : section_of(j, "isac_sweep").items()) {
        if (k == "eta_points") c.eta_points = v.get<int>();
        else if (k == "eta_min") c.eta_min = v.get<double>();
        else if (k == "beam_phases_rad") c.beam_phases = v.get<std::vector<double>>();
        else bad_key(sec, k);
      }
    } else if (sec == "generalization") {
      for (const auto& [k, v] : section_of(j, "generalization").items()) {
        if (k == "theta_means_deg") c.gen_theta_means_deg = v.get<std::vector<double>>();
        else if (k == "width_deg") c.gen_width_deg = v.get<double>();
        else bad_key(sec, k);
      }
    } else if (sec == "calibration") {
      for (const auto& [k, v] : section_of(j, "calibration").items()) {
        if (k == "observations") c.calib_observations = v.get<int>();
        else if (k == "candidates") c.calib_candidates = v.get<int>();
        else if (k == "sweeps") c.calib_sweeps = v.get<int>();
        else bad_key(sec, k);
      }
    } else {
      throw std::invalid_argument("config: unknown section " + sec);
    }
  }
}

}  // namespace

std::string config_to_text(const ExperimentConfig& cfg) {
  return config_to_json(cfg).dump(2) + "\n";
}

ExperimentConfig config_from_text(const std::string& text, const ExperimentConfig& base) {
  json j = json::parse(text);
  if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");
  ExperimentConfig c = base;
  parse_into(j, c);
  c.apply_noise();
  return c;
}

ExperimentConfig load_config(const std::string& path, const ExperimentConfig& base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_config: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return config_from_text(text, base);
}

void save_config(const ExperimentConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_config: cannot open " + path);
  out << config_to_text(cfg);
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  std::string text = config_to_text(cfg);
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

std::vector<SystemKind> SystemModels::available() const {
  std::vector<SystemKind> v{SystemKind::kBaselineKnown, SystemKind::kBaselineAgnostic};
  if (dictionary) v.push_back(SystemKind::kDictionaryLearned);
  if (impairment) v.push_back(SystemKind::kImpairmentLearned);
  if (calibrated_spacings_m) v.push_back(SystemKind::kCalibrated);
  return v;
}

SteeringDictionary assumed_dictionary(SystemKind kind, const SystemModels& models,
                                      double wavelength, const RVec& angle_grid) {
  switch (kind) {
    case SystemKind::kBaselineKnown:
      return steering_matrix(models.true_array, angle_grid);
    case SystemKind::kBaselineAgnostic:
      return steering_matrix(ArrayModel::nominal(models.true_array.antennas(), wavelength),
                             angle_grid);
    case SystemKind::kDictionaryLearned: {
      if (!models.dictionary)
        throw std::invalid_argument("assumed_dictionary: no learned dictionary");
      const LearnableParams& p = *models.dictionary;
      if (p.angle_grid.size() != angle_grid.size() ||
          (p.angle_grid - angle_grid).cwiseAbs().maxCoeff() > 1e-12)
        throw std::invalid_argument(
            "assumed_dictionary: learned dictionary is bound to its training grid");
      return {p.dictionary, p.angle_grid};
    }
    case SystemKind::kImpairmentLearned:
      if (!models.impairment)
        throw std::invalid_argument("assumed_dictionary: no learned impairment");
      return steering_matrix(models.impairment->to_array(wavelength), angle_grid);
    case SystemKind::kCalibrated:
      if (!models.calibrated_spacings_m)
        throw std::invalid_argument("assumed_dictionary: no calibrated spacings");
      return steering_matrix(
          impaired_array(models.true_array.antennas(), wavelength, *models.calibrated_spacings_m),
          angle_grid);
  }
  throw std::logic_error("assumed_dictionary: bad kind");
}

std::vector<SystemBatch> run_detection_batch(const ExperimentConfig& cfg,
                                             const SystemModels& models,
                                             const std::vector<SystemKind>& systems,
                                             const RVec& omp_grid, const RVec& beam_grid,
                                             const EvalScenario& scenario, std::uint64_t seed,
                                             std::uint64_t tag) {
  const TrainConfig& tc = cfg.train;
  const OfdmConfig& ofdm = tc.ofdm;
  if (scenario.batch <= 0) throw std::invalid_argument("run_detection_batch: batch must be > 0");
  if (scenario.t_max < 0) throw std::invalid_argument("run_detection_batch: t_max must be >= 0");
  if (!(scenario.eta >= 0.0 && scenario.eta <= 1.0))
    throw std::invalid_argument("run_detection_batch: eta must lie in [0, 1]");
  if (systems.empty()) throw std::invalid_argument("run_detection_batch: no systems");

  double lam = ofdm.wavelength();
  int K = tc.antennas;
  int S = ofdm.subcarriers;
  bool same_grid = omp_grid.size() == beam_grid.size() &&
                   (omp_grid - beam_grid).cwiseAbs().maxCoeff() == 0.0;

  DelayDictionary dd = build_delay_dictionary(ofdm, tc.n_range, tc.sensing_prior.range_min_m,
                                              tc.sensing_prior.range_max_m);

  struct Sys {
    SteeringDictionary dict;
    CVec f;
  };
  std::vector<Sys> sys;
  sys.reserve(systems.size());
  for (SystemKind kind : systems) {
    Sys s;
    s.dict = assumed_dictionary(kind, models, lam, omp_grid);
    SteeringDictionary beam_store;
    const SteeringDictionary* bd = &s.dict;
    if (!same_grid) {
      beam_store = assumed_dictionary(kind, models, lam, beam_grid);
      bd = &beam_store;
    }
    CVec f_r = synthesize_beam(*bd, scenario.radar_lo_rad, scenario.radar_hi_rad);
    CVec f_c = synthesize_beam(*bd, scenario.comm_lo_rad, scenario.comm_hi_rad);
    s.f = isac_combine(f_r, f_c, scenario.eta, scenario.phi, ofdm.power_w).f;
    sys.push_back(std::move(s));
  }

  ScenePriors sp = tc.sensing_prior;
  sp.theta_min_rad = scenario.radar_lo_rad;
  sp.theta_max_rad = scenario.radar_hi_rad;
  CommPriors cp = tc.comm_prior;
  cp.theta_min_rad = scenario.comm_lo_rad;
  cp.theta_max_rad = scenario.comm_hi_rad;
  OfdmConfig quiet = ofdm;
  quiet.noise_psd = 0.0;
  double var = ofdm.noise_var();

  std::vector<SystemBatch> out(systems.size());
  for (size_t si = 0; si < systems.size(); ++si) {
    out[si].system = systems[si];
    out[si].paths.reserve(scenario.batch);
  }

  for (int i = 0; i < scenario.batch; ++i) {
    Rng rng = Rng::stream(seed, tag, static_cast<std::uint64_t>(i));
    SensingScene scene = sample_sensing_scene(sp, scenario.t_max, ofdm, rng, 0);
    CommScene comm = sample_comm_scene(cp, tc.comm_paths_max, ofdm, rng);
    SymbolBlock sym = sample_symbols(S, rng);
    CMat w(K, S);
    for (int s = 0; s < S; ++s)
      for (int k = 0; k < K; ++k) w(k, s) = rng.cnormal(var);
    CVec nc(S);
    for (int s = 0; s < S; ++s) nc(s) = rng.cnormal(var);

    std::vector<Point2> truth;
    truth.reserve(scene.targets.size());
    for (const Target& t : scene.targets)
      truth.emplace_back(t.range_m * std::cos(t.angle_rad), t.range_m * std::sin(t.angle_rad));

    for (size_t si = 0; si < systems.size(); ++si) {
      Rng dead(0);
      CMat y = sensing_observation(scene, models.true_array, sys[si].f, sym, quiet, dead);
      y += w;
      CMat filtered = matched_filter(y, sym);
      out[si].paths.push_back(omp_path(filtered, sys[si].dict, dd, scenario.t_max));
      out[si].t_true.push_back(static_cast<int>(scene.targets.size()));
      out[si].truth.push_back(truth);

      CommObservation co = comm_observation(comm, models.true_array, sys[si].f, sym, quiet, dead);
      co.y += nc;
      out[si].sent.push_back(sym.messages);
      out[si].decoded.push_back(ml_detect(co.y, co.kappa, qpsk()));
    }
  }
  return out;
}

namespace {

std::vector<int> counts_at(const SystemBatch& batch, double threshold) {
  std::vector<int> est(batch.paths.size());
  for (size_t i = 0; i < batch.paths.size(); ++i) est[i] = batch.paths[i].count_at(threshold);
  return est;
}

}  // namespace

ThresholdFit fit_threshold(const SystemBatch& batch, int t_max, double target_pfa,
                           double rel_tol) {
  if (batch.paths.empty() || batch.paths.size() != batch.t_true.size())
    throw std::invalid_argument("fit_threshold: empty or inconsistent batch");
  if (!(target_pfa > 0.0 && target_pfa < 1.0))
    throw std::invalid_argument("fit_threshold: target must lie in (0, 1)");

  auto pfa_at = [&](double delta) {
    return pmd_pfa(batch.t_true, counts_at(batch, delta), t_max).pfa;
  };

  double hi = 0.0;
  for (const OmpPath& p : batch.paths)
    for (double pk : p.entry_peaks) hi = std::max(hi, pk);
  hi = hi > 0.0 ? hi * 1.000001 : 1.0;
  double lo = 0.0;

  ThresholdFit best;
  best.threshold = lo;
  best.pfa = pfa_at(lo);
  if (std::isnan(best.pfa)) return best;  // no false-alarm slots in the batch
  double best_gap = std::abs(best.pfa - target_pfa);

  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    double p = pfa_at(mid);
    if (std::abs(p - target_pfa) < best_gap) {
      best_gap = std::abs(p - target_pfa);
      best.threshold = mid;
      best.pfa = p;
    }
    if (std::abs(p - target_pfa) <= rel_tol * target_pfa) return {mid, p, true};
    if (p > target_pfa)
      lo = mid;
    else
      hi = mid;
  }
  best.converged = best_gap <= rel_tol * target_pfa;
  return best;
}

DetectionRates rates_at(const SystemBatch& batch, int t_max, double threshold) {
  return pmd_pfa(batch.t_true, counts_at(batch, threshold), t_max);
}

RVec gospa_per_item(const SystemBatch& batch, double threshold, const GospaParams& gp) {
  RVec out(static_cast<int>(batch.paths.size()));
  for (size_t i = 0; i < batch.paths.size(); ++i) {
    DetectionResult det = truncate_path(batch.paths[i], threshold);
    out(static_cast<int>(i)) = gospa(to_positions(det), batch.truth[i], gp);
  }
  return out;
}

double mean_gospa_at(const SystemBatch& batch, double threshold, const GospaParams& gp,
                     double* se) {
  RVec g = gospa_per_item(batch, threshold, gp);
  double mean = g.mean();
  if (se) {
    int n = static_cast<int>(g.size());
    *se = n > 1 ? std::sqrt((g.array() - mean).square().sum() / (n - 1) / n) : 0.0;
  }
  return mean;
}

double ser_of(const SystemBatch& batch, double* se) {
  if (batch.sent.empty()) throw std::invalid_argument("ser_of: empty batch");
  int n = static_cast<int>(batch.sent.size());
  RVec item(n);
  for (int i = 0; i < n; ++i) {
    item(i) = ser({batch.sent[i]}, {batch.decoded[i]});
  }
  double mean = item.mean();
  if (se) *se = n > 1 ? std::sqrt((item.array() - mean).square().sum() / (n - 1) / n) : 0.0;
  return mean;
}

std::vector<SensingEvalRow> run_sensing_eval(const ExperimentConfig& cfg,
                                             const SystemModels& models, std::uint64_t seed) {
  std::vector<SystemKind> systems = models.available();
  RVec grid = cfg.train.angle_grid();
  EvalScenario sc;
  sc.radar_lo_rad = cfg.train.sensing_prior.theta_min_rad;
  sc.radar_hi_rad = cfg.train.sensing_prior.theta_max_rad;
  sc.comm_lo_rad = cfg.train.comm_prior.theta_min_rad;
  sc.comm_hi_rad = cfg.train.comm_prior.theta_max_rad;
  sc.eta = 1.0;
  sc.phi = 0.0;
  sc.batch = cfg.eval_batch;

  std::vector<SensingEvalRow> rows;
  for (int tm = 1; tm <= cfg.train.t_max; ++tm) {
    sc.t_max = tm;
    auto batches = run_detection_batch(cfg, models, systems, grid, grid, sc, seed,
                                       1000 + static_cast<std::uint64_t>(tm));
    for (const SystemBatch& b : batches) {
      ThresholdFit fit = fit_threshold(b, tm, cfg.target_pfa, cfg.pfa_rel_tol);
      DetectionRates r = rates_at(b, tm, fit.threshold);
      SensingEvalRow row;
      row.t_max = tm;
      row.system = b.system;
      row.threshold = fit.threshold;
      row.pmd = r.pmd;
      row.pfa = r.pfa;
      row.gospa_mean = mean_gospa_at(b, fit.threshold, cfg.gospa, &row.gospa_se);
      row.pfa_converged = fit.converged;
      rows.push_back(row);
    }
  }
  return rows;
}

std::vector<IsacSweepRow> run_isac_sweep(const ExperimentConfig& cfg, const SystemModels& models,
                                         std::uint64_t seed) {
  std::vector<SystemKind> systems = models.available();
  RVec grid = cfg.train.angle_grid();
  RVec etas = cfg.eta_grid();
  EvalScenario sc;
  sc.radar_lo_rad = cfg.train.sensing_prior.theta_min_rad;
  sc.radar_hi_rad = cfg.train.sensing_prior.theta_max_rad;
  sc.comm_lo_rad = cfg.train.comm_prior.theta_min_rad;
  sc.comm_hi_rad = cfg.train.comm_prior.theta_max_rad;
  sc.t_max = cfg.train.t_max;
  sc.batch = cfg.eval_batch;

  std::vector<IsacSweepRow> rows;
  for (size_t pi = 0; pi < cfg.beam_phases.size(); ++pi) {
    for (int ei = 0; ei < etas.size(); ++ei) {
      sc.eta = etas(ei);
      sc.phi = cfg.beam_phases[pi];
      std::uint64_t tag = 2000 + pi * static_cast<std::uint64_t>(etas.size()) + ei;
      auto batches = run_detection_batch(cfg, models, systems, grid, grid, sc, seed, tag);
      for (const SystemBatch& b : batches) {
        ThresholdFit fit = fit_threshold(b, sc.t_max, cfg.target_pfa, cfg.pfa_rel_tol);
        DetectionRates r = rates_at(b, sc.t_max, fit.threshold);
        IsacSweepRow row;
        row.eta = sc.eta;
        row.phi = sc.phi;
        row.system = b.system;
        row.threshold = fit.threshold;
        row.pmd = r.pmd;
        row.pfa = r.pfa;
        row.gospa_mean = mean_gospa_at(b, fit.threshold, cfg.gospa, nullptr);
        row.ser = ser_of(b, &row.ser_se);
        rows.push_back(row);
      }
    }
  }

  // Pareto flags: within each system, a point survives if no other operating
  // point is at least as good in both pmd and ser and better in one.
  for (size_t i = 0; i < rows.size(); ++i) {
    IsacSweepRow& a = rows[i];
    if (std::isnan(a.pmd)) {
      a.pareto = false;
      continue;
    }
    bool dominated = false;
    for (size_t k = 0; k < rows.size() && !dominated; ++k) {
      if (k == i || rows[k].system != a.system || std::isnan(rows[k].pmd)) continue;
      const IsacSweepRow& o = rows[k];
      if (o.pmd <= a.pmd && o.ser <= a.ser && (o.pmd < a.pmd || o.ser < a.ser)) dominated = true;
    }
    a.pareto = !dominated;
  }
  return rows;
}

std::vector<GeneralizationRow> run_generalization(const ExperimentConfig& cfg,
                                                  const SystemModels& models,
                                                  std::uint64_t seed) {
  std::vector<SystemKind> systems;
  for (SystemKind k : models.available())
    if (k != SystemKind::kDictionaryLearned) systems.push_back(k);
  RVec beam_grid = cfg.train.angle_grid();
  double half = deg2rad(cfg.gen_width_deg) / 2.0;

  std::vector<GeneralizationRow> rows;
  for (size_t mi = 0; mi < cfg.gen_theta_means_deg.size(); ++mi) {
    double lo = deg2rad(cfg.gen_theta_means_deg[mi]) - half;
    double hi = deg2rad(cfg.gen_theta_means_deg[mi]) + half;
    RVec omp_grid = uniform_angle_grid(cfg.train.n_theta, lo, hi);
    EvalScenario sc;
    sc.radar_lo_rad = lo;
    sc.radar_hi_rad = hi;
    sc.comm_lo_rad = lo;
    sc.comm_hi_rad = hi;
    sc.t_max = cfg.train.t_max;
    sc.eta = 1.0;
    sc.batch = cfg.eval_batch;
    auto batches = run_detection_batch(cfg, models, systems, omp_grid, beam_grid, sc, seed,
                                       3000 + static_cast<std::uint64_t>(mi));
    for (const SystemBatch& b : batches) {
      ThresholdFit fit = fit_threshold(b, sc.t_max, cfg.target_pfa, cfg.pfa_rel_tol);
      DetectionRates r = rates_at(b, sc.t_max, fit.threshold);
      GeneralizationRow row;
      row.theta_mean_deg = cfg.gen_theta_means_deg[mi];
      row.system = b.system;
      row.threshold = fit.threshold;
      row.pmd = r.pmd;
      row.gospa_mean = mean_gospa_at(b, fit.threshold, cfg.gospa, &row.gospa_se);
      rows.push_back(row);
    }
  }
  return rows;
}

RocResult run_roc(const ExperimentConfig& cfg, const SystemModels& models, std::uint64_t seed) {
  if (cfg.roc_points < 2) throw std::invalid_argument("run_roc: need at least two points");
  std::vector<SystemKind> systems = models.available();
  RVec grid = cfg.train.angle_grid();
  EvalScenario sc;
  sc.radar_lo_rad = cfg.train.sensing_prior.theta_min_rad;
  sc.radar_hi_rad = cfg.train.sensing_prior.theta_max_rad;
  sc.comm_lo_rad = cfg.train.comm_prior.theta_min_rad;
  sc.comm_hi_rad = cfg.train.comm_prior.theta_max_rad;
  sc.t_max = cfg.train.t_max;
  sc.eta = 1.0;
  sc.batch = cfg.eval_batch;
  auto batches = run_detection_batch(cfg, models, systems, grid, grid, sc, seed, 4000);

  std::vector<double> pool;
  for (const SystemBatch& b : batches)
    for (const OmpPath& p : b.paths)
      for (double pk : p.entry_peaks) pool.push_back(pk);
  if (pool.empty()) throw std::runtime_error("run_roc: no detection peaks recorded");
  std::sort(pool.begin(), pool.end());
  double dmax = pool.back() * 1.000001;
  double dmin = pool[static_cast<size_t>(0.02 * (pool.size() - 1))];
  if (!(dmin > 0.0)) dmin = dmax * 1e-9;
  if (!(dmax > dmin)) dmax = dmin * 10.0;

  RocResult roc;
  roc.thresholds.resize(cfg.roc_points);
  double l0 = std::log(dmin), l1 = std::log(dmax);
  for (int i = 0; i < cfg.roc_points; ++i)
    roc.thresholds(i) = std::exp(l0 + (l1 - l0) * i / (cfg.roc_points - 1));

  for (const SystemBatch& b : batches) {
    for (int i = 0; i < cfg.roc_points; ++i) {
      DetectionRates r = rates_at(b, sc.t_max, roc.thresholds(i));
      roc.rows.push_back({b.system, roc.thresholds(i), r.pmd, r.pfa});
    }
  }
  return roc;
}

std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_csv: cannot open " + path);
  for (size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << "\n";
  for (const auto& row : rows) {
    if (row.size() != header.size())
      throw std::invalid_argument("write_csv: row width mismatch in " + path);
    for (size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << "\n";
  }
}

void write_sensing_eval_csv(const std::string& path, const std::vector<SensingEvalRow>& rows) {
  std::vector<std::vector<std::string>> body;
  for (const SensingEvalRow& r : rows)
    body.push_back({std::to_string(r.t_max), system_name(r.system), fmt_g17(r.threshold),
                    fmt_g17(r.pmd), fmt_g17(r.pfa), fmt_g17(r.gospa_mean), fmt_g17(r.gospa_se),
                    r.pfa_converged ? "1" : "0"});
  write_csv(path,
            {"t_max", "system", "threshold", "pmd", "pfa", "gospa_mean", "gospa_se",
             "pfa_converged"},
            body);
}

void write_isac_sweep_csv(const std::string& path, const std::vector<IsacSweepRow>& rows) {
  std::vector<std::vector<std::string>> body;
  for (const IsacSweepRow& r : rows)
    body.push_back({fmt_g17(r.eta), fmt_g17(r.phi), system_name(r.system), fmt_g17(r.threshold),
                    fmt_g17(r.pmd), fmt_g17(r.pfa), fmt_g17(r.gospa_mean), fmt_g17(r.ser),
                    fmt_g17(r.ser_se), r.pareto ? "1" : "0"});
  write_csv(path,
            {"eta", "phi", "system", "threshold", "pmd", "pfa", "gospa_mean", "ser", "ser_se",
             "pareto"},
            body);
}

void write_generalization_csv(const std::string& path,
                              const std::vector<GeneralizationRow>& rows) {
  std::vector<std::vector<std::string>> body;
  for (const GeneralizationRow& r : rows)
    body.push_back({fmt_g17(r.theta_mean_deg), system_name(r.system), fmt_g17(r.threshold),
                    fmt_g17(r.pmd), fmt_g17(r.gospa_mean), fmt_g17(r.gospa_se)});
  write_csv(path, {"theta_mean_deg", "system", "threshold", "pmd", "gospa_mean", "gospa_se"},
            body);
}

void write_roc_csv(const std::string& path, const RocResult& roc) {
  std::vector<std::vector<std::string>> body;
  for (const RocRow& r : roc.rows)
    body.push_back({system_name(r.system), fmt_g17(r.threshold), fmt_g17(r.pmd), fmt_g17(r.pfa)});
  write_csv(path, {"system", "threshold", "pmd", "pfa"}, body);
}

void write_calibration_csv(const std::string& path, const CalibrationReport& report) {
  // step -1 carries the score of the uncalibrated assumption.
  std::vector<std::vector<std::string>> body;
  body.push_back({"-1", fmt_g17(report.initial_score)});
  for (size_t i = 0; i < report.step_scores.size(); ++i)
    body.push_back({std::to_string(i), fmt_g17(report.step_scores[i])});
  write_csv(path, {"step", "score"}, body);
}

void write_loss_csv(const std::string& path, const std::vector<double>& loss_history) {
  std::vector<std::vector<std::string>> body;
  for (size_t i = 0; i < loss_history.size(); ++i)
    body.push_back({std::to_string(i), fmt_g17(loss_history[i])});
  write_csv(path, {"iteration", "loss"}, body);
}

void write_map_csv(const std::string& path, const AngleDelayMap& map, const RVec& angle_grid,
                   const RVec& range_grid) {
  if (map.values.rows() != angle_grid.size() || map.values.cols() != range_grid.size())
    throw std::invalid_argument("write_map_csv: grid size mismatch");
  std::vector<std::vector<std::string>> body;
  for (int i = 0; i < map.values.rows(); ++i)
    for (int j = 0; j < map.values.cols(); ++j)
      body.push_back({fmt_g17(angle_grid(i)), fmt_g17(range_grid(j)), fmt_g17(map.values(i, j))});
  write_csv(path, {"theta_rad", "range_m", "value"}, body);
}

void write_scene_csv(const std::string& path, const SensingScene& scene) {
  std::vector<std::vector<std::string>> body;
  for (size_t t = 0; t < scene.targets.size(); ++t)
    body.push_back({std::to_string(t), fmt_g17(scene.targets[t].angle_rad),
                    fmt_g17(scene.targets[t].range_m), fmt_g17(scene.targets[t].gain.real()),
                    fmt_g17(scene.targets[t].gain.imag())});
  write_csv(path, {"target", "angle_rad", "range_m", "gain_re", "gain_im"}, body);
}

void write_detections_csv(const std::string& path, const DetectionResult& result) {
  std::vector<std::vector<std::string>> body;
  for (size_t i = 0; i < result.detections.size(); ++i) {
    const Detection& d = result.detections[i];
    body.push_back({std::to_string(i), fmt_g17(d.angle_rad), fmt_g17(d.delay_s),
                    fmt_g17(d.delay_s * kSpeedOfLight / 2.0), fmt_g17(d.gain.real()),
                    fmt_g17(d.gain.imag()), std::to_string(d.grid_i), std::to_string(d.grid_j)});
  }
  write_csv(path,
            {"index", "angle_rad", "delay_s", "range_m", "gain_re", "gain_im", "grid_i",
             "grid_j"},
            body);
}

void write_manifest(const std::string& dir, const ExperimentConfig& cfg, std::uint64_t seed,
                    const std::vector<std::string>& outputs,
                    const std::vector<std::pair<std::string, std::vector<double>>>& extra) {
  json j;
  j["version"] = version_string();
  char hex[32];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(config_hash(cfg)));
  j["config_hash"] = hex;
  j["seed"] = seed;
  j["outputs"] = outputs;
  for (const auto& [name, values] : extra) j[name] = values;
  std::filesystem::path p = std::filesystem::path(dir) / "manifest.json";
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("write_manifest: cannot open " + p.string());
  out << j.dump(2) << "\n";
}

}  // namespace isac
