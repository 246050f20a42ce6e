#ifndef ISACSIM_EXPERIMENT_HPP
#define ISACSIM_EXPERIMENT_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "isacsim/array_model.hpp"
#include "isacsim/calibration.hpp"
#include "isacsim/channel.hpp"
#include "isacsim/metrics.hpp"
#include "isacsim/omp.hpp"
#include "isacsim/training.hpp"
#include "isacsim/types.hpp"

namespace isac {

/// Library version stamped into output manifests.
std::string version_string();

/** Transmit/receive model assumption under evaluation. */
enum class SystemKind {
  kBaselineKnown,     // exact hardware knowledge
  kBaselineAgnostic,  // nominal half-wavelength assumption
  kDictionaryLearned,
  kImpairmentLearned,
  kCalibrated,
};

std::string system_name(SystemKind kind);

/**
 * Everything an experiment run needs, bundled so a run is a pure function of
 * (config, seed). Presets carry the reference parameter set (`paper`) and a
 * reduced set sized for a laptop-class machine (`desk`). Defaults not listed
 * in a config file are taken from the chosen preset.
 */
struct ExperimentConfig {
  TrainConfig train;  // frame, priors, sector sampling, batch/iterations

  double snr_db = 7.05;  // maximum sensing SNR; fixes the noise density
  double impairment_sigma_wl = 1.0 / 15.0;  // spacing std dev, in wavelengths
  std::uint64_t impairment_seed = 7;        // hardware draw; not the run seed
  double lr_impairment = 0.2;
  double lr_dictionary = 1e-5;

  int eval_batch = 400;       // held-out Monte Carlo size per operating point
  double target_pfa = 1e-2;
  double pfa_rel_tol = 0.10;  // relative tolerance of the threshold fit
  GospaParams gospa;          // finite-cutoff evaluation metric

  int eta_points = 8;       // trade-off sweep, log-spaced
  double eta_min = 1e-3;
  std::vector<double> beam_phases{0.0, kPi};

  int roc_points = 25;  // detection-threshold grid, published in the manifest

  std::vector<double> gen_theta_means_deg{0, 10, 20, 30, 40, 50, 60, 70, 80};
  double gen_width_deg = 20.0;

  int calib_observations = 64;
  int calib_candidates = 100;
  int calib_sweeps = 1;

  static ExperimentConfig paper();
  static ExperimentConfig desk();

  double impairment_sigma_m() const;
  /// eta_points log-spaced values covering [eta_min, 1].
  RVec eta_grid() const;
  /// The simulated hardware: spacings drawn from impairment_seed.
  ArrayModel true_array() const;
  /// Training configuration with the mode's learning rate applied.
  TrainConfig train_for(LearnMode mode) const;
  CalibrationConfig calibration() const;
  /// Recompute the noise density from snr_db; presets and the config loader
  /// call this, so loaded configs are always consistent.
  void apply_noise();
};

/// Canonical nested key/value text form (stable key order).
std::string config_to_text(const ExperimentConfig& cfg);
/// Parse a config file on top of `base`; unknown keys are an error.
ExperimentConfig config_from_text(const std::string& text, const ExperimentConfig& base);
ExperimentConfig load_config(const std::string& path, const ExperimentConfig& base);
void save_config(const ExperimentConfig& cfg, const std::string& path);
/// FNV-1a hash of the canonical text, for the run manifest.
std::uint64_t config_hash(const ExperimentConfig& cfg);

/** Trained/calibrated artifacts an evaluation can draw on. */
struct SystemModels {
  ArrayModel true_array;
  std::optional<LearnableParams> dictionary;
  std::optional<LearnableParams> impairment;
  std::optional<RVec> calibrated_spacings_m;

  /// Baselines plus whichever learned/calibrated models are present.
  std::vector<SystemKind> available() const;
};

/**
 * Steering dictionary a system assumes over the given grid. The learned
 * dictionary is bound to its training grid and throws elsewhere; every other
 * system re-synthesizes its model at any grid.
 */
SteeringDictionary assumed_dictionary(SystemKind kind, const SystemModels& models,
                                      double wavelength, const RVec& angle_grid);

/** One evaluation operating point. */
struct EvalScenario {
  double radar_lo_rad = 0.0, radar_hi_rad = 0.0;
  double comm_lo_rad = 0.0, comm_hi_rad = 0.0;
  int t_max = 5;      // scene sizes drawn uniformly from {0, ..., t_max}
  double eta = 1.0;   // beam trade-off; 1 is sensing-only
  double phi = 0.0;
  int batch = 0;
};

/** Per-system Monte Carlo outcome on shared scenes and noise. */
struct SystemBatch {
  SystemKind system = SystemKind::kBaselineKnown;
  std::vector<OmpPath> paths;               // per item, depth t_max
  std::vector<int> t_true;
  std::vector<std::vector<Point2>> truth;   // true target positions
  std::vector<std::vector<int>> sent;       // per item symbol messages
  std::vector<std::vector<int>> decoded;
};

/**
 * Draw `scenario.batch` held-out items (scene, symbols, noise shared across
 * systems) and run every system's transmit beam and greedy receiver on them.
 * `omp_grid` is the receiver's angle grid, `beam_grid` the synthesis grid.
 * Streams are keyed by (seed, tag, item), so equal inputs give equal output.
 */
std::vector<SystemBatch> run_detection_batch(const ExperimentConfig& cfg,
                                             const SystemModels& models,
                                             const std::vector<SystemKind>& systems,
                                             const RVec& omp_grid, const RVec& beam_grid,
                                             const EvalScenario& scenario, std::uint64_t seed,
                                             std::uint64_t tag);

struct ThresholdFit {
  double threshold = 0.0;
  double pfa = 0.0;
  bool converged = false;  // within the relative tolerance of the target
};

/// Bisect the detection threshold until the false-alarm rate over the batch
/// is within rel_tol of target_pfa. Relies on count_at being monotone.
ThresholdFit fit_threshold(const SystemBatch& batch, int t_max, double target_pfa,
                           double rel_tol);

/// Misdetection / false-alarm rates of the batch at a fixed threshold.
DetectionRates rates_at(const SystemBatch& batch, int t_max, double threshold);

/// Mean position error at a fixed threshold; `se` gets the standard error.
double mean_gospa_at(const SystemBatch& batch, double threshold, const GospaParams& gp,
                     double* se = nullptr);

/// Per-item position errors at a fixed threshold (for paired comparisons).
RVec gospa_per_item(const SystemBatch& batch, double threshold, const GospaParams& gp);

/// Symbol error rate with an item-level standard error.
double ser_of(const SystemBatch& batch, double* se = nullptr);

struct SensingEvalRow {
  int t_max = 0;
  SystemKind system = SystemKind::kBaselineKnown;
  double threshold = 0.0;
  double pmd = 0.0, pfa = 0.0;
  double gospa_mean = 0.0, gospa_se = 0.0;
  bool pfa_converged = false;
};

/// Detection performance versus the scene-size bound, all systems at the
/// target false-alarm rate. Scenes with no targets leave pmd as NaN.
std::vector<SensingEvalRow> run_sensing_eval(const ExperimentConfig& cfg,
                                             const SystemModels& models, std::uint64_t seed);

struct IsacSweepRow {
  double eta = 0.0, phi = 0.0;
  SystemKind system = SystemKind::kBaselineKnown;
  double threshold = 0.0;
  double pmd = 0.0, pfa = 0.0;
  double gospa_mean = 0.0;
  double ser = 0.0, ser_se = 0.0;
  bool pareto = false;  // not dominated on (pmd, ser) within its system
};

/// Sensing/communication trade-off over the (eta, phase) grid.
std::vector<IsacSweepRow> run_isac_sweep(const ExperimentConfig& cfg, const SystemModels& models,
                                         std::uint64_t seed);

struct GeneralizationRow {
  double theta_mean_deg = 0.0;
  SystemKind system = SystemKind::kBaselineKnown;
  double threshold = 0.0;
  double pmd = 0.0;
  double gospa_mean = 0.0, gospa_se = 0.0;
};

/// Sensing performance when the sector center moves away from the training
/// regime, fixed sector width. The learned dictionary is grid-bound and is
/// skipped; the receiver grid spans the sector, the beam uses the full grid.
std::vector<GeneralizationRow> run_generalization(const ExperimentConfig& cfg,
                                                  const SystemModels& models, std::uint64_t seed);

struct RocRow {
  SystemKind system = SystemKind::kBaselineKnown;
  double threshold = 0.0;
  double pmd = 0.0, pfa = 0.0;
};

struct RocResult {
  RVec thresholds;  // shared grid, also published in the manifest
  std::vector<RocRow> rows;
};

/// Detection operating curve over a threshold grid derived from the pooled
/// peak distribution (2nd percentile to the maximum, log-spaced).
RocResult run_roc(const ExperimentConfig& cfg, const SystemModels& models, std::uint64_t seed);

/// printf %.17g, the round-trip-exact form used by every CSV writer.
std::string fmt_g17(double v);

/// Write header + rows; an empty table still gets its header line.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

void write_sensing_eval_csv(const std::string& path, const std::vector<SensingEvalRow>& rows);
void write_isac_sweep_csv(const std::string& path, const std::vector<IsacSweepRow>& rows);
void write_generalization_csv(const std::string& path,
                              const std::vector<GeneralizationRow>& rows);
void write_roc_csv(const std::string& path, const RocResult& roc);
void write_calibration_csv(const std::string& path, const CalibrationReport& report);
void write_loss_csv(const std::string& path, const std::vector<double>& loss_history);
void write_map_csv(const std::string& path, const AngleDelayMap& map, const RVec& angle_grid,
                   const RVec& range_grid);
void write_scene_csv(const std::string& path, const SensingScene& scene);
void write_detections_csv(const std::string& path, const DetectionResult& result);

/// manifest.json next to the tables: version, config hash, seed, the files
/// written, plus any named numeric arrays (e.g. the threshold grid).
void write_manifest(const std::string& dir, const ExperimentConfig& cfg, std::uint64_t seed,
                    const std::vector<std::string>& outputs,
                    const std::vector<std::pair<std::string, std::vector<double>>>& extra = {});

}  // namespace isac

#endif
