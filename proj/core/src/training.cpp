#include "isacsim/training.hpp"

#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <utility>

#include <Eigen/SVD>

#include "json.hpp"

#include "isacsim/autodiff.hpp"
#include "isacsim/beamforming.hpp"
#include "isacsim/comm.hpp"
#include "isacsim/metrics.hpp"
#include "isacsim/omp.hpp"
#include "omp_detail.hpp"

namespace isac {

namespace {

RMat as_column(const RVec& v) {
  RMat m(v.size(), 1);
  m.col(0) = v;
  return m;
}

}  // namespace

LearnableParams LearnableParams::impairment_init(int antennas, const RVec& grid) {
  if (antennas < 2) throw std::invalid_argument("impairment_init: need at least two antennas");
  LearnableParams p;
  p.mode = LearnMode::kImpairment;
  p.spacing_units = RVec::Ones(antennas - 1);
  p.angle_grid = grid;
  return p;
}

LearnableParams LearnableParams::dictionary_init(int antennas, double wavelength,
                                                 const RVec& grid) {
  LearnableParams p;
  p.mode = LearnMode::kDictionary;
  p.angle_grid = grid;
  p.dictionary = steering_matrix(ArrayModel::nominal(antennas, wavelength), grid).matrix;
  return p;
}

ArrayModel LearnableParams::to_array(double wavelength) const {
  if (mode != LearnMode::kImpairment)
    throw std::logic_error("to_array: parameters do not describe an array");
  return impaired_array(static_cast<int>(spacing_units.size()) + 1, wavelength,
                        spacing_units * (wavelength / 2.0));
}

SteeringDictionary LearnableParams::to_steering(double wavelength) const {
  if (mode == LearnMode::kDictionary) return SteeringDictionary{dictionary, angle_grid};
  return steering_matrix(to_array(wavelength), angle_grid);
}

int LearnableParams::antennas() const {
  if (mode == LearnMode::kImpairment) return static_cast<int>(spacing_units.size()) + 1;
  return static_cast<int>(dictionary.rows());
}

int LearnableParams::flat_size() const {
  if (mode == LearnMode::kImpairment) return static_cast<int>(spacing_units.size());
  return 2 * static_cast<int>(dictionary.size());
}

RVec LearnableParams::flatten() const {
  if (mode == LearnMode::kImpairment) return spacing_units;
  return Eigen::Map<const RVec>(reinterpret_cast<const double*>(dictionary.data()),
                                2 * dictionary.size());
}

void LearnableParams::unflatten(const RVec& flat) {
  if (flat.size() != flat_size()) throw std::invalid_argument("unflatten: size mismatch");
  if (mode == LearnMode::kImpairment) {
    spacing_units = flat;
    return;
  }
  Eigen::Map<RVec>(reinterpret_cast<double*>(dictionary.data()), 2 * dictionary.size()) = flat;
}

RVec TrainConfig::angle_grid() const { return uniform_angle_grid(n_theta, -kPi / 2.0, kPi / 2.0); }

TrainBatch sample_train_batch(const TrainConfig& cfg, std::uint64_t seed,
                              std::uint64_t iteration) {
  TrainBatch b;
  Rng sec = Rng::stream(seed, iteration, 0);
  double rc = sec.uniform(-cfg.sector_center_max_rad, cfg.sector_center_max_rad);
  double rw = sec.uniform(cfg.sector_width_min_rad, cfg.sector_width_max_rad);
  b.radar_lo = rc - rw / 2.0;
  b.radar_hi = rc + rw / 2.0;
  double cc = sec.uniform(-cfg.sector_center_max_rad, cfg.sector_center_max_rad);
  double cw = sec.uniform(cfg.sector_width_min_rad, cfg.sector_width_max_rad);
  b.comm_lo = cc - cw / 2.0;
  b.comm_hi = cc + cw / 2.0;

  ScenePriors sp = cfg.sensing_prior;
  sp.theta_min_rad = b.radar_lo;
  sp.theta_max_rad = b.radar_hi;
  CommPriors cp = cfg.comm_prior;
  cp.theta_min_rad = b.comm_lo;
  cp.theta_max_rad = b.comm_hi;

  double var = cfg.ofdm.noise_var();
  int K = cfg.antennas;
  int S = cfg.ofdm.subcarriers;
  b.items.reserve(cfg.batch);
  for (int i = 0; i < cfg.batch; ++i) {
    Rng rng = Rng::stream(seed, iteration, 1 + static_cast<std::uint64_t>(i));
    TrainItem item;
    item.scene = sample_sensing_scene(sp, cfg.t_max, cfg.ofdm, rng, 1);
    item.comm = sample_comm_scene(cp, cfg.comm_paths_max, cfg.ofdm, rng);
    item.symbols = sample_symbols(S, rng);
    item.noise_r = CMat(K, S);
    for (int s = 0; s < S; ++s)
      for (int k = 0; k < K; ++k) item.noise_r(k, s) = rng.cnormal(var);
    item.noise_c = CVec(S);
    for (int s = 0; s < S; ++s) item.noise_c(s) = rng.cnormal(var);
    b.items.push_back(std::move(item));
  }
  return b;
}

namespace {

// Taped mirror of synthesize_beam: same Gram, same conditional ridge.
ad::Var taped_beam(ad::Tape& t, ad::Var phi, const RVec& grid, int antennas, double lo, double hi,
                   std::deque<CMat>& keep) {
  RVec b = beampattern_target(grid, antennas, lo, hi);
  keep.push_back(b.cast<cplx>());
  ad::Var conj_phi = t.conj(phi);
  ad::Var gram = t.matmul(conj_phi, t.transpose(phi));
  ad::Var rhs = t.matmul_c(conj_phi, &keep.back());
  const CMat& gv = t.value(gram);
  Eigen::JacobiSVD<CMat> svd(gv);
  double smax = svd.singularValues()(0);
  double smin = svd.singularValues()(svd.singularValues().size() - 1);
  ad::Var g2 = gram;
  if (!(smin > 0.0) || smax / smin > 1e12) {
    ad::RVar tr = t.rtrace_re(gram);
    ad::RVar ridge = t.raffine(tr, 1e-8 / antennas, 0.0);
    g2 = t.add_scaled_identity(gram, ridge, 1.0);
  }
  return t.solve(g2, rhs);
}

struct Stage1 {
  ad::Tape tape;
  ad::RVar spacing;
  ad::Var phi;
  ad::Var f;
  RMat linmap;
  std::deque<CMat> keep;
};

void build_stage1(Stage1& s1, const LearnableParams& params, const TrainConfig& cfg,
                  double radar_lo, double radar_hi, double comm_lo, double comm_hi) {
  int K = cfg.antennas;
  double lam = cfg.ofdm.wavelength();
  const RVec& grid = params.angle_grid;
  ad::Tape& t = s1.tape;

  if (params.mode == LearnMode::kImpairment) {
    // Centered positions are a fixed linear map of the spacings: cumulative
    // sums followed by mean removal (the anchor offset is constant and drops
    // out of the centering).
    RMat cum = RMat::Zero(K, K - 1);
    for (int k = 1; k < K; ++k)
      for (int i = 0; i < k; ++i) cum(k, i) = 1.0;
    RMat cent = RMat::Identity(K, K) - RMat::Constant(K, K, 1.0 / K);
    s1.linmap = cent * cum;
    s1.spacing = t.rleaf(as_column(params.spacing_units));
    ad::RVar pos = t.rlinmap(&s1.linmap, s1.spacing, lam / 2.0);
    RVec srow(grid.size());
    for (int i = 0; i < grid.size(); ++i) srow(i) = -2.0 * kPi * std::sin(grid(i)) / lam;
    ad::RVar phases = t.router(pos, srow);
    s1.phi = t.unit_phasor(phases);
  } else {
    s1.phi = t.leaf(params.dictionary);
  }

  ad::Var f_r = taped_beam(t, s1.phi, grid, K, radar_lo, radar_hi, s1.keep);
  ad::Var f_c = taped_beam(t, s1.phi, grid, K, comm_lo, comm_hi, s1.keep);
  ad::RVar nr = t.norm2(f_r);
  ad::RVar nc = t.norm2(f_c);
  cplx rot =
      std::sqrt(1.0 - cfg.eta) * cplx(std::cos(cfg.beam_phase), std::sin(cfg.beam_phase));
  ad::Var part_r = t.scale(t.div_by_rscalar(f_r, nr), cplx(std::sqrt(cfg.eta), 0.0));
  ad::Var part_c = t.scale(t.div_by_rscalar(f_c, nc), rot);
  ad::Var comb = t.add(part_r, part_c);
  ad::RVar nn = t.norm2(comb);
  s1.f = t.scale(t.div_by_rscalar(comb, nn), cplx(std::sqrt(cfg.ofdm.power_w), 0.0));
}

struct ItemNodes {
  ad::RVar sensing;  // invalid when the sensing term is constant
  ad::RVar comm;
  double sensing_value = 0.0;
  double comm_value = 0.0;
};

ItemNodes tape_item(ad::Tape& t, ad::Var f, ad::Var phi, const TrainItem& item,
                    const TrainConfig& cfg, const ArrayModel& true_array, const RVec& grid,
                    const DelayDictionary& dd, const CMat& phd_conj, const Resolutions& res,
                    std::deque<CMat>& cs, std::deque<RMat>& rs, std::vector<double>* dbg_theta,
                    std::vector<double>* dbg_tau) {
  int S = cfg.ofdm.subcarriers;
  int n_theta = static_cast<int>(grid.size());
  int n_tau = static_cast<int>(dd.delay_grid.size());
  double noise_level = cfg.ofdm.noise_psd * cfg.antennas * S;
  ad::Var phi_h = t.adjoint(phi);

  // Matched-filtered sensing observation with the transmit response taped:
  // each target contributes (psi_t a_t^T f) * (a_t rho_t^T).
  ad::Var ytilde{};
  for (size_t ti = 0; ti < item.scene.targets.size(); ++ti) {
    const Target& tgt = item.scene.targets[ti];
    CVec a = steering_vector(true_array, tgt.angle_rad);
    cs.push_back(a.transpose());
    ad::Var along = t.cmatmul(&cs.back(), f);
    ad::Var psu = t.scale(along, tgt.gain);
    CVec rho = delay_phasor(cfg.ofdm, 2.0 * tgt.range_m / kSpeedOfLight);
    cs.push_back(a * rho.transpose());
    ad::Var term = t.smul_const(psu, &cs.back());
    ytilde = ti == 0 ? term : t.add(ytilde, term);
  }
  CMat ntilde = item.noise_r;
  for (int s = 0; s < S; ++s) ntilde.col(s) *= std::conj(item.symbols.symbols(s));
  cs.push_back(std::move(ntilde));
  ytilde = t.add_const(ytilde, &cs.back());

  // Greedy rounds, one per true target. Each round's window estimate is taped
  // through its map (round one also through the transmit response inside
  // ytilde); the least-squares gains and the residual update run on values
  // only, so later rounds read the cleaned observation as a constant and each
  // round's gradient stays local to its own detection.
  Eigen::Matrix<bool, -1, -1> masked =
      Eigen::Matrix<bool, -1, -1>::Constant(n_theta, n_tau, false);
  int t_true = static_cast<int>(item.scene.targets.size());
  std::vector<ad::RVar> theta_hat, tau_hat;
  const CMat& phi_v = t.value(phi);
  const CMat& yv = t.value(ytilde);
  CMat atoms_a(phi_v.rows(), 0), atoms_d(S, 0);
  const CMat* stage_const = nullptr;
  for (int iter = 0; iter < t_true; ++iter) {
    ad::Var p = stage_const == nullptr
                    ? t.matmul(phi_h, t.matmul_c(ytilde, &phd_conj))
                    : t.matmul_c(phi_h, stage_const);
    ad::RVar map = t.magsq(p);
    ompdetail::ArgmaxResult peak = ompdetail::masked_argmax(t.rvalue(map), masked);
    if (peak.i < 0) break;
    masked(peak.i, peak.j) = true;

    ompdetail::Window w =
        ompdetail::clip_window(peak.i, peak.j, res.window_theta, res.window_range, n_theta, n_tau);
    ad::RVar win = t.rblock(map, w.r0, w.c0, w.rows, w.cols);
    // The temperature is decided on values and enters the tape as a constant.
    RMat blockv = t.rvalue(map).block(w.r0, w.c0, w.rows, w.cols);
    double temp = ompdetail::soft_temperature(blockv.maxCoeff(), noise_level);
    if (!(temp > 0.0)) temp = 1.0;  // all-zero block: uniform weights either way
    ad::RVar soft = t.rsoftmax(t.raffine(win, 1.0 / temp, 0.0));
    RMat wt(w.rows, w.cols), wr(w.rows, w.cols);
    for (int c = 0; c < w.cols; ++c)
      for (int r = 0; r < w.rows; ++r) {
        wt(r, c) = grid(w.r0 + r);
        wr(r, c) = dd.delay_grid(w.c0 + c);
      }
    rs.push_back(std::move(wt));
    ad::RVar th = t.wsum(soft, &rs.back());
    rs.push_back(std::move(wr));
    ad::RVar ta = t.wsum(soft, &rs.back());
    theta_hat.push_back(th);
    tau_hat.push_back(ta);

    atoms_a.conservativeResize(Eigen::NoChange, atoms_a.cols() + 1);
    atoms_d.conservativeResize(Eigen::NoChange, atoms_d.cols() + 1);
    atoms_a.col(atoms_a.cols() - 1) = phi_v.col(peak.i);
    atoms_d.col(atoms_d.cols() - 1) = dd.matrix.col(peak.j);
    ompdetail::GramGains solved = ompdetail::gram_gains(atoms_a, atoms_d, yv);
    if (!solved.ok) {
      theta_hat.pop_back();
      tau_hat.pop_back();
      break;
    }
    if (iter + 1 < t_true) {
      CMat residual = ompdetail::residual_from_gains(yv, atoms_a, atoms_d, solved.gains);
      cs.push_back(residual * phd_conj);
      stage_const = &cs.back();
    }
  }

  ItemNodes out;

  // Position error. The matching is decided on values; only matched pair
  // distances stay on the tape.
  int n_est = static_cast<int>(theta_hat.size());
  std::vector<ad::RVar> xs(n_est), ys(n_est);
  std::vector<Point2> est_pts(n_est);
  for (int e = 0; e < n_est; ++e) {
    ad::RVar range = t.raffine(tau_hat[e], kSpeedOfLight / 2.0, 0.0);
    xs[e] = t.rmul(range, t.rcos(theta_hat[e]));
    ys[e] = t.rmul(range, t.rsin(theta_hat[e]));
    est_pts[e] = Point2(t.rvalue(xs[e])(0, 0), t.rvalue(ys[e])(0, 0));
    if (dbg_theta) dbg_theta->push_back(t.rvalue(theta_hat[e])(0, 0));
    if (dbg_tau) dbg_tau->push_back(t.rvalue(tau_hat[e])(0, 0));
  }
  std::vector<Point2> true_pts(t_true);
  for (int ti = 0; ti < t_true; ++ti) {
    const Target& tgt = item.scene.targets[ti];
    true_pts[ti] = Point2(tgt.range_m * std::cos(tgt.angle_rad),
                          tgt.range_m * std::sin(tgt.angle_rad));
  }
  GospaParams gp;
  gp.gamma = n_est == t_true ? std::numeric_limits<double>::infinity()
                             : cfg.gospa_fallback_gamma;
  if (n_est == 0) {
    out.sensing_value = gospa(est_pts, true_pts, gp);
  } else {
    GospaAssignment assign = gospa_assignment(est_pts, true_pts, gp);
    ad::RVar acc{};
    bool have_acc = false;
    for (size_t si = 0; si < assign.partner.size(); ++si) {
      int e = assign.a_is_smaller ? static_cast<int>(si) : assign.partner[si];
      int ti = assign.a_is_smaller ? assign.partner[si] : static_cast<int>(si);
      ad::RVar dx = t.raffine(xs[e], 1.0, -true_pts[ti].x());
      ad::RVar dy = t.raffine(ys[e], 1.0, -true_pts[ti].y());
      ad::RVar d2 = t.rlincomb2(t.rmul(dx, dx), t.rmul(dy, dy), 1.0, 1.0);
      if (std::isfinite(gp.gamma)) d2 = t.rmin_const(d2, gp.gamma * gp.gamma);
      acc = have_acc ? t.rlincomb2(acc, d2, 1.0, 1.0) : d2;
      have_acc = true;
    }
    double card = std::isfinite(gp.gamma)
                      ? gp.gamma * gp.gamma / gp.mu * std::abs(t_true - n_est)
                      : 0.0;
    out.sensing = t.rsqrt(t.raffine(acc, 1.0, card));
    out.sensing_value = t.rvalue(out.sensing)(0, 0);
  }

  // Cross-entropy of the soft decoder under the taped channel.
  ad::Var kappa{};
  for (size_t pi = 0; pi < item.comm.paths.size(); ++pi) {
    const CommPath& p = item.comm.paths[pi];
    CVec a = steering_vector(true_array, p.angle_rad);
    cs.push_back(a.transpose());
    ad::Var along = t.cmatmul(&cs.back(), f);
    ad::Var su = t.scale(along, p.gain);
    cs.push_back(delay_phasor(cfg.ofdm, p.delay_s));
    ad::Var term = t.smul_const(su, &cs.back());
    kappa = pi == 0 ? term : t.add(kappa, term);
  }
  cs.push_back(item.symbols.symbols);
  ad::Var kx = t.cmul_const(kappa, &cs.back());
  cs.push_back(item.noise_c);
  ad::Var y = t.add_const(kx, &cs.back());
  const Constellation& con = qpsk();
  int m_count = con.size();
  cs.push_back(CMat::Ones(1, m_count));
  ad::Var y_rep = t.matmul_c(y, &cs.back());
  CMat crow(1, m_count);
  for (int m = 0; m < m_count; ++m) crow(0, m) = con.point(m);
  cs.push_back(std::move(crow));
  ad::Var kc = t.matmul_c(kappa, &cs.back());
  ad::Var err = t.sub(y_rep, kc);
  ad::RVar dist = t.magsq(err);
  ad::RVar z = t.raffine(t.rlog_guard(dist, cfg.cce_guard), -1.0, 0.0);
  ad::RVar lse = t.rlse_rows(z);
  ad::RVar z_true = t.rgather_rows(z, item.symbols.messages);
  ad::RVar ce = t.rlincomb2(lse, z_true, 1.0, -1.0);
  out.comm = t.raffine(t.rsum(ce), 1.0 / S, 0.0);
  out.comm_value = t.rvalue(out.comm)(0, 0);
  return out;
}

}  // namespace

EvalResult evaluate_batch(const LearnableParams& params, const TrainConfig& cfg,
                          const ArrayModel& true_array, const TrainBatch& batch,
                          bool want_gradient, EvalDebug* debug) {
  if (batch.items.empty()) throw std::invalid_argument("evaluate_batch: empty batch");
  if (params.antennas() != cfg.antennas)
    throw std::invalid_argument("evaluate_batch: parameter/config antenna mismatch");
  if (true_array.antennas() != cfg.antennas)
    throw std::invalid_argument("evaluate_batch: true array antenna mismatch");
  if (static_cast<int>(params.angle_grid.size()) != cfg.n_theta)
    throw std::invalid_argument("evaluate_batch: parameter grid size mismatch");

  const RVec& grid = params.angle_grid;
  DelayDictionary dd = build_delay_dictionary(cfg.ofdm, cfg.n_range,
                                              cfg.sensing_prior.range_min_m,
                                              cfg.sensing_prior.range_max_m);
  Resolutions res = discrete_resolutions(
      cfg.antennas, cfg.ofdm, cfg.n_theta, grid(grid.size() - 1) - grid(0), cfg.n_range,
      cfg.sensing_prior.range_max_m - cfg.sensing_prior.range_min_m);
  CMat phd_conj = dd.matrix.conjugate();

  Stage1 s1;
  build_stage1(s1, params, cfg, batch.radar_lo, batch.radar_hi, batch.comm_lo, batch.comm_hi);
  const CMat& f_val = s1.tape.value(s1.f);
  const CMat& phi_val = s1.tape.value(s1.phi);

  int B = static_cast<int>(batch.items.size());
  double w_sense = cfg.omega / B;
  double w_comm = (1.0 - cfg.omega) / B;
  CMat g_f = CMat::Zero(f_val.rows(), f_val.cols());
  CMat g_phi = CMat::Zero(phi_val.rows(), phi_val.cols());

  EvalResult out;
  if (debug) {
    debug->f = f_val.col(0);
    debug->phi = phi_val;
    debug->theta_hat.assign(B, {});
    debug->tau_hat.assign(B, {});
    debug->sensing_loss.assign(B, 0.0);
    debug->comm_loss.assign(B, 0.0);
  }
  for (int b = 0; b < B; ++b) {
    ad::Tape t2;
    std::deque<CMat> cs;
    std::deque<RMat> rs;
    ad::Var f2 = t2.leaf(f_val);
    ad::Var phi2 = t2.leaf(phi_val);
    ItemNodes nodes =
        tape_item(t2, f2, phi2, batch.items[b], cfg, true_array, grid, dd, phd_conj, res, cs, rs,
                  debug ? &debug->theta_hat[b] : nullptr, debug ? &debug->tau_hat[b] : nullptr);
    out.loss.sensing += nodes.sensing_value / B;
    out.loss.comm += nodes.comm_value / B;
    if (debug) {
      debug->sensing_loss[b] = nodes.sensing_value;
      debug->comm_loss[b] = nodes.comm_value;
    }
    if (want_gradient) {
      if (nodes.sensing.valid()) t2.seed(nodes.sensing, w_sense);
      t2.seed(nodes.comm, w_comm);
      t2.backward();
      g_f += t2.grad(f2);
      g_phi += t2.grad(phi2);
    }
  }
  out.loss.total = isac_loss(out.loss.sensing, out.loss.comm, cfg.omega);

  if (want_gradient) {
    s1.tape.seed_cgrad(s1.f, g_f);
    s1.tape.seed_cgrad(s1.phi, g_phi);
    s1.tape.backward();
    if (params.mode == LearnMode::kImpairment) {
      out.grad = s1.tape.rgrad(s1.spacing).col(0);
    } else {
      const CMat& gd = s1.tape.grad(s1.phi);
      out.grad = Eigen::Map<const RVec>(reinterpret_cast<const double*>(gd.data()),
                                        2 * gd.size());
    }
  }
  return out;
}

void adam_step(RVec& x, const RVec& grad, AdamState& state, double lr, double beta1, double beta2,
               double eps) {
  if (state.m.size() == 0) {
    state.m = RVec::Zero(x.size());
    state.v = RVec::Zero(x.size());
  }
  if (state.m.size() != x.size() || grad.size() != x.size())
    throw std::invalid_argument("adam_step: size mismatch");
  state.step += 1;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    state.m(i) = beta1 * state.m(i) + (1.0 - beta1) * grad(i);
    state.v(i) = beta2 * state.v(i) + (1.0 - beta2) * grad(i) * grad(i);
    double mh = state.m(i) / bc1;
    double vh = state.v(i) / bc2;
    x(i) -= lr * mh / (std::sqrt(vh) + eps);
  }
}

TrainState make_initial_state(LearnMode mode, const TrainConfig& cfg) {
  TrainState st;
  st.params = mode == LearnMode::kImpairment
                  ? LearnableParams::impairment_init(cfg.antennas, cfg.angle_grid())
                  : LearnableParams::dictionary_init(cfg.antennas, cfg.ofdm.wavelength(),
                                                     cfg.angle_grid());
  return st;
}

TrainResult train(TrainState& state, const TrainConfig& cfg, const ArrayModel& true_array,
                  const TrainOptions& opt) {
  TrainResult out;
  out.loss_history.reserve(
      static_cast<size_t>(std::max<std::int64_t>(0, cfg.iterations - state.iteration)));
  for (; state.iteration < cfg.iterations; ++state.iteration) {
    TrainBatch batch =
        sample_train_batch(cfg, opt.seed, static_cast<std::uint64_t>(state.iteration));
    EvalResult ev = evaluate_batch(state.params, cfg, true_array, batch, true);
    if (!std::isfinite(ev.loss.total) || !ev.grad.allFinite())
      throw std::runtime_error("train: non-finite loss or gradient at iteration " +
                               std::to_string(state.iteration) + " (seed " +
                               std::to_string(opt.seed) + ")");
    RVec flat = state.params.flatten();
    adam_step(flat, ev.grad, state.adam, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    state.params.unflatten(flat);
    if (state.params.mode == LearnMode::kImpairment)
      state.params.spacing_units = state.params.spacing_units.cwiseMax(cfg.min_spacing_units);
    out.loss_history.push_back(ev.loss.total);
    if (opt.progress && opt.progress_every > 0 &&
        (state.iteration + 1) % opt.progress_every == 0)
      opt.progress(state.iteration + 1, ev.loss);
    if (!opt.checkpoint_path.empty() && opt.checkpoint_every > 0 &&
        (state.iteration + 1) % opt.checkpoint_every == 0) {
      TrainState snap = state;
      snap.iteration = state.iteration + 1;
      save_checkpoint(snap, opt.checkpoint_path);
    }
  }
  if (!opt.checkpoint_path.empty()) save_checkpoint(state, opt.checkpoint_path);
  out.params = state.params;
  return out;
}

namespace {

std::vector<double> to_std(const RVec& v) { return {v.data(), v.data() + v.size()}; }

RVec from_std(const std::vector<double>& v) {
  return Eigen::Map<const RVec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

void save_checkpoint(const TrainState& state, const std::string& path) {
  nlohmann::json j;
  j["format"] = "isacsim-checkpoint";
  j["version"] = 1;
  j["mode"] = state.params.mode == LearnMode::kImpairment ? "impairment" : "dictionary";
  j["iteration"] = state.iteration;
  j["angle_grid"] = to_std(state.params.angle_grid);
  if (state.params.mode == LearnMode::kImpairment) {
    j["spacing_units"] = to_std(state.params.spacing_units);
  } else {
    const CMat& d = state.params.dictionary;
    j["dictionary_rows"] = d.rows();
    j["dictionary_cols"] = d.cols();
    std::vector<double> re(d.size()), im(d.size());
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      re[i] = d(i).real();
      im[i] = d(i).imag();
    }
    j["dictionary_re"] = re;
    j["dictionary_im"] = im;
  }
  j["adam"]["step"] = state.adam.step;
  j["adam"]["m"] = to_std(state.adam.m);
  j["adam"]["v"] = to_std(state.adam.v);
  std::ofstream file(path);
  if (!file) throw std::runtime_error("save_checkpoint: cannot open " + path);
  file << j.dump(2) << "\n";
  if (!file) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

TrainState load_checkpoint(const std::string& path) {
  std::ifstream file(path);
  if (!file) throw std::runtime_error("load_checkpoint: cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(file);
  if (j.value("format", "") != "isacsim-checkpoint")
    throw std::runtime_error("load_checkpoint: not a checkpoint file: " + path);
  if (j.value("version", 0) != 1)
    throw std::runtime_error("load_checkpoint: unsupported version in " + path);
  TrainState st;
  st.iteration = j.at("iteration").get<std::int64_t>();
  st.params.angle_grid = from_std(j.at("angle_grid").get<std::vector<double>>());
  std::string mode = j.at("mode").get<std::string>();
  if (mode == "impairment") {
    st.params.mode = LearnMode::kImpairment;
    st.params.spacing_units = from_std(j.at("spacing_units").get<std::vector<double>>());
  } else if (mode == "dictionary") {
    st.params.mode = LearnMode::kDictionary;
    Eigen::Index rows = j.at("dictionary_rows").get<Eigen::Index>();
    Eigen::Index cols = j.at("dictionary_cols").get<Eigen::Index>();
    std::vector<double> re = j.at("dictionary_re").get<std::vector<double>>();
    std::vector<double> im = j.at("dictionary_im").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(re.size()) != rows * cols || re.size() != im.size())
      throw std::runtime_error("load_checkpoint: dictionary size mismatch in " + path);
    st.params.dictionary = CMat(rows, cols);
    for (Eigen::Index i = 0; i < rows * cols; ++i)
      st.params.dictionary(i) = cplx(re[i], im[i]);
  } else {
    throw std::runtime_error("load_checkpoint: unknown mode in " + path);
  }
  st.adam.step = j.at("adam").at("step").get<std::int64_t>();
  st.adam.m = from_std(j.at("adam").at("m").get<std::vector<double>>());
  st.adam.v = from_std(j.at("adam").at("v").get<std::vector<double>>());
  return st;
}

}  // namespace isac
