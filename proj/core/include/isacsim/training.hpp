#ifndef ISACSIM_TRAINING_HPP
#define ISACSIM_TRAINING_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "isacsim/array_model.hpp"
#include "isacsim/channel.hpp"
#include "isacsim/types.hpp"

namespace isac {

enum class LearnMode { kImpairment, kDictionary };

/**
 * What gradient descent adjusts. Impairment mode learns the K-1 inter-element
 * spacings, kept in half-wavelength units so a unit value is the nominal
 * spacing. Dictionary mode learns the full K x N complex steering dictionary
 * over the training angle grid directly.
 */
struct LearnableParams {
  LearnMode mode = LearnMode::kImpairment;
  RVec spacing_units;
  CMat dictionary;
  RVec angle_grid;

  static LearnableParams impairment_init(int antennas, const RVec& grid);
  static LearnableParams dictionary_init(int antennas, double wavelength, const RVec& grid);

  /// Array implied by the learned spacings (impairment mode only).
  ArrayModel to_array(double wavelength) const;
  /// Steering dictionary the receiver and beamformer assume.
  SteeringDictionary to_steering(double wavelength) const;

  int antennas() const;
  /// Number of real degrees of freedom (complex entries count twice).
  int flat_size() const;
  RVec flatten() const;
  void unflatten(const RVec& flat);
};

struct TrainConfig {
  OfdmConfig ofdm;
  int antennas = 16;
  int batch = 64;
  int iterations = 2000;
  int t_max = 5;
  int comm_paths_max = 6;
  double omega = 0.5;  // sensing weight in the loss
  double eta = 0.5;    // beam trade-off while training
  double beam_phase = 0.0;
  int n_theta = 180;
  int n_range = 50;
  ScenePriors sensing_prior;  // ranges; angles are overridden by the sector
  CommPriors comm_prior;      // ranges; angles are overridden by the sector
  double sector_center_max_rad = 60.0 * kPi / 180.0;
  double sector_width_min_rad = 10.0 * kPi / 180.0;
  double sector_width_max_rad = 20.0 * kPi / 180.0;
  double lr = 0.2;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double min_spacing_units = 0.05;
  double cce_guard = 1e-300;
  // Cardinality cut-off used only if the estimator returns fewer points than
  // the scene holds (degenerate gain solve); the usual training loss has no
  // cut-off.
  double gospa_fallback_gamma = 33.75;

  /// Training grid, n_theta points over [-pi/2, pi/2].
  RVec angle_grid() const;
};

/** Fully materialized sample so a loss evaluation is a pure function. */
struct TrainItem {
  SensingScene scene;
  CommScene comm;
  SymbolBlock symbols;
  CMat noise_r;  // K x S, drawn before matched filtering
  CVec noise_c;  // S
};

struct TrainBatch {
  double radar_lo = 0.0, radar_hi = 0.0;
  double comm_lo = 0.0, comm_hi = 0.0;
  std::vector<TrainItem> items;
};

/// One batch per training iteration: a shared random sector pair, then
/// independent per-item streams keyed by (seed, iteration, item).
TrainBatch sample_train_batch(const TrainConfig& cfg, std::uint64_t seed, std::uint64_t iteration);

struct LossValue {
  double total = 0.0;
  double sensing = 0.0;  // batch mean position error
  double comm = 0.0;     // batch mean cross-entropy
};

/** Optional taps into the evaluation, for tests. */
struct EvalDebug {
  CVec f;
  CMat phi;
  std::vector<std::vector<double>> theta_hat;  // per item, per greedy round
  std::vector<std::vector<double>> tau_hat;
  std::vector<double> sensing_loss;
  std::vector<double> comm_loss;
};

struct EvalResult {
  LossValue loss;
  RVec grad;  // layout matches LearnableParams::flatten; empty without gradient
};

/**
 * Loss (and gradient) of the training objective on one batch:
 * omega * mean GOSPA + (1 - omega) * mean cross-entropy, with the greedy
 * detector unrolled for the true target count of every item. Deterministic
 * given (params, cfg, true_array, batch).
 */
EvalResult evaluate_batch(const LearnableParams& params, const TrainConfig& cfg,
                          const ArrayModel& true_array, const TrainBatch& batch,
                          bool want_gradient, EvalDebug* debug = nullptr);

struct AdamState {
  RVec m, v;
  std::int64_t step = 0;
};

/// One Adam update, in place.
void adam_step(RVec& x, const RVec& grad, AdamState& state, double lr, double beta1, double beta2,
               double eps);

struct TrainState {
  LearnableParams params;
  AdamState adam;
  std::int64_t iteration = 0;
};

TrainState make_initial_state(LearnMode mode, const TrainConfig& cfg);

struct TrainOptions {
  std::uint64_t seed = 1;
  std::string checkpoint_path;  // empty disables checkpointing
  int checkpoint_every = 500;
  std::function<void(std::int64_t, const LossValue&)> progress;
  int progress_every = 100;
};

struct TrainResult {
  LearnableParams params;
  std::vector<double> loss_history;
};

/**
 * Stochastic gradient descent from state.iteration up to cfg.iterations.
 * Throws (with the offending iteration in the message) if a loss or gradient
 * turns non-finite. The state is advanced in place so training can resume.
 */
TrainResult train(TrainState& state, const TrainConfig& cfg, const ArrayModel& true_array,
                  const TrainOptions& opt);

void save_checkpoint(const TrainState& state, const std::string& path);
TrainState load_checkpoint(const std::string& path);

}  // namespace isac

#endif
