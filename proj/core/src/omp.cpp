#include "isacsim/omp.hpp"

#include <cmath>
#include <mutex>
#include <stdexcept>

#include <fftw3.h>

#include "omp_detail.hpp"

namespace isac {

using ompdetail::ArgmaxResult;
using ompdetail::GainSolve;
using ompdetail::Window;

DelayDictionary build_delay_dictionary(const OfdmConfig& cfg, int n, double r_min, double r_max) {
  if (n < 1) throw std::invalid_argument("build_delay_dictionary: need at least one delay");
  if (!(r_max > r_min) && n > 1)
    throw std::invalid_argument("build_delay_dictionary: r_max must exceed r_min");
  if (r_min < 0.0) throw std::invalid_argument("build_delay_dictionary: negative range");
  DelayDictionary d;
  d.subcarrier_spacing_hz = cfg.subcarrier_spacing_hz;
  d.delay_grid = RVec(n);
  d.range_grid = RVec(n);
  d.matrix = CMat(cfg.subcarriers, n);
  for (int j = 0; j < n; ++j) {
    double r = n == 1 ? r_min : r_min + (r_max - r_min) * j / (n - 1);
    d.range_grid(j) = r;
    d.delay_grid(j) = 2.0 * r / kSpeedOfLight;
    d.matrix.col(j) = delay_phasor(cfg, d.delay_grid(j));
  }
  return d;
}

namespace {

// ---- chirp-z stage --------------------------------------------------------
//
// [Y Phi_d^*]_{k,j} = sum_s Y_{k,s} exp(+j 2 pi s df tau_j) on a uniform
// delay grid tau_j = tau0 + j dtau is a chirp-z transform in s, evaluated by
// Bluestein's substitution s*j = (s^2 + j^2 - (s-j)^2) / 2 as one linear
// convolution per antenna row.

std::mutex fftw_plan_mutex;

struct FftPlan {
  fftw_plan fwd = nullptr;
  fftw_plan inv = nullptr;
  ~FftPlan() {
    std::lock_guard<std::mutex> lock(fftw_plan_mutex);
    if (fwd) fftw_destroy_plan(fwd);
    if (inv) fftw_destroy_plan(inv);
  }
};

int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

CMat delay_stage_chirp(const CMat& filtered, const DelayDictionary& dd) {
  int S = static_cast<int>(filtered.cols());
  int K = static_cast<int>(filtered.rows());
  int n = static_cast<int>(dd.delay_grid.size());
  double df = dd.subcarrier_spacing_hz;
  double tau0 = dd.delay_grid(0);
  double dtau = n > 1 ? dd.delay_grid(1) - dd.delay_grid(0) : 0.0;
  for (int j = 1; j < n; ++j) {
    double step = dd.delay_grid(j) - dd.delay_grid(j - 1);
    if (std::abs(step - dtau) > 1e-9 * std::max(std::abs(dtau), 1e-30))
      throw std::invalid_argument("angle_delay_map: chirp backend needs a uniform delay grid");
  }
  double omega = 2.0 * kPi * df * dtau;

  int len = next_pow2(S + n - 1);
  std::vector<cplx> a(len, cplx(0, 0)), b(len, cplx(0, 0)), fa(len), fb(len), out(len);

  FftPlan plan;
  {
    std::lock_guard<std::mutex> lock(fftw_plan_mutex);
    plan.fwd = fftw_plan_dft_1d(len, reinterpret_cast<fftw_complex*>(a.data()),
                                reinterpret_cast<fftw_complex*>(fa.data()), FFTW_FORWARD,
                                FFTW_ESTIMATE);
    plan.inv = fftw_plan_dft_1d(len, reinterpret_cast<fftw_complex*>(fa.data()),
                                reinterpret_cast<fftw_complex*>(out.data()), FFTW_BACKWARD,
                                FFTW_ESTIMATE);
  }

  // Even kernel h_t = exp(-j omega t^2 / 2), embedded circularly.
  for (int t = 0; t < n; ++t) {
    double ph = -omega * 0.5 * static_cast<double>(t) * t;
    b[t] = cplx(std::cos(ph), std::sin(ph));
  }
  for (int t = 1; t < S; ++t) {
    double ph = -omega * 0.5 * static_cast<double>(t) * t;
    b[len - t] = cplx(std::cos(ph), std::sin(ph));
  }
  std::copy(b.begin(), b.end(), a.begin());
  fftw_execute_dft(plan.fwd, reinterpret_cast<fftw_complex*>(a.data()),
                   reinterpret_cast<fftw_complex*>(fb.data()));

  CMat result(K, n);
  for (int k = 0; k < K; ++k) {
    std::fill(a.begin(), a.end(), cplx(0, 0));
    for (int s = 0; s < S; ++s) {
      double ph = 2.0 * kPi * df * tau0 * s + omega * 0.5 * static_cast<double>(s) * s;
      a[s] = filtered(k, s) * cplx(std::cos(ph), std::sin(ph));
    }
    fftw_execute_dft(plan.fwd, reinterpret_cast<fftw_complex*>(a.data()),
                     reinterpret_cast<fftw_complex*>(fa.data()));
    for (int t = 0; t < len; ++t) fa[t] *= fb[t];
    fftw_execute_dft(plan.inv, reinterpret_cast<fftw_complex*>(fa.data()),
                     reinterpret_cast<fftw_complex*>(out.data()));
    for (int j = 0; j < n; ++j) {
      double ph = omega * 0.5 * static_cast<double>(j) * j;
      result(k, j) = out[j] / static_cast<double>(len) * cplx(std::cos(ph), std::sin(ph));
    }
  }
  return result;
}

void check_inputs(const CMat& filtered, const SteeringDictionary& sd, const DelayDictionary& dd) {
  if (filtered.rows() != sd.matrix.rows())
    throw std::invalid_argument("omp: antenna count mismatch between observation and dictionary");
  if (filtered.cols() != dd.matrix.rows())
    throw std::invalid_argument(
        "omp: subcarrier count mismatch between observation and dictionary");
}

OmpPath greedy_path(const CMat& filtered, const SteeringDictionary& sd, const DelayDictionary& dd,
                    double threshold, int max_iterations) {
  check_inputs(filtered, sd, dd);
  OmpPath path;
  int n_theta = static_cast<int>(sd.angle_grid.size());
  int n_tau = static_cast<int>(dd.delay_grid.size());
  CMat phi_h = sd.matrix.adjoint();
  CMat phd_conj = dd.matrix.conjugate();
  Eigen::Matrix<bool, -1, -1> masked = Eigen::Matrix<bool, -1, -1>::Constant(n_theta, n_tau, false);
  Eigen::Map<const CVec> y_vec(filtered.data(), filtered.size());

  CMat residual = filtered;
  CMat atoms_a(filtered.rows(), 0), atoms_d(filtered.cols(), 0);
  for (int iter = 0; iter < max_iterations; ++iter) {
    RMat values = ompdetail::map_values(phi_h, residual * phd_conj);
    ArgmaxResult peak = ompdetail::masked_argmax(values, masked);
    if (peak.i < 0 || !(peak.value > threshold)) break;

    atoms_a.conservativeResize(Eigen::NoChange, atoms_a.cols() + 1);
    atoms_d.conservativeResize(Eigen::NoChange, atoms_d.cols() + 1);
    atoms_a.col(atoms_a.cols() - 1) = sd.matrix.col(peak.i);
    atoms_d.col(atoms_d.cols() - 1) = dd.matrix.col(peak.j);
    GainSolve solved = ompdetail::solve_gains(atoms_a, atoms_d, y_vec);
    if (!solved.ok) {
      atoms_a.conservativeResize(Eigen::NoChange, atoms_a.cols() - 1);
      atoms_d.conservativeResize(Eigen::NoChange, atoms_d.cols() - 1);
      break;
    }
    masked(peak.i, peak.j) = true;

    Detection det;
    det.angle_rad = sd.angle_grid(peak.i);
    det.delay_s = dd.delay_grid(peak.j);
    det.grid_i = peak.i;
    det.grid_j = peak.j;
    path.detections.push_back(det);
    path.entry_peaks.push_back(peak.value);
    path.prefix_gains.push_back(solved.gains);

    residual = ompdetail::residual_from_gains(filtered, atoms_a, atoms_d, solved.gains);
    path.residual_energies.push_back(residual.squaredNorm());
  }
  if (!path.detections.empty()) {
    const std::vector<cplx>& last = path.prefix_gains.back();
    for (size_t t = 0; t < path.detections.size(); ++t) path.detections[t].gain = last[t];
  }
  return path;
}

DetectionResult path_to_result(const OmpPath& path, int count) {
  DetectionResult r;
  r.iterations = count;
  r.detections.assign(path.detections.begin(), path.detections.begin() + count);
  if (count > 0) {
    const std::vector<cplx>& g = path.prefix_gains[count - 1];
    for (int t = 0; t < count; ++t) r.detections[t].gain = g[t];
  }
  r.entry_peaks.assign(path.entry_peaks.begin(), path.entry_peaks.begin() + count);
  r.residual_energies.assign(path.residual_energies.begin(),
                             path.residual_energies.begin() + count);
  return r;
}

}  // namespace

AngleDelayMap angle_delay_map(const CMat& filtered, const SteeringDictionary& angle_dict,
                              const DelayDictionary& delay_dict, MapBackend backend) {
  check_inputs(filtered, angle_dict, delay_dict);
  CMat phi_h = angle_dict.matrix.adjoint();
  CMat stage = backend == MapBackend::kChirp ? delay_stage_chirp(filtered, delay_dict)
                                             : CMat(filtered * delay_dict.matrix.conjugate());
  AngleDelayMap m;
  m.values = ompdetail::map_values(phi_h, stage);
  return m;
}

Resolutions discrete_resolutions(int antennas, const OfdmConfig& cfg, int n_theta,
                                 double theta_span_rad, int n_range, double range_span_m) {
  if (!(theta_span_rad > 0.0) || !(range_span_m > 0.0))
    throw std::invalid_argument("discrete_resolutions: spans must be positive");
  Resolutions r;
  r.delta_theta_rad = 2.0 / antennas;
  r.delta_range_m = kSpeedOfLight / (2.0 * cfg.subcarriers * cfg.subcarrier_spacing_hz);
  r.window_theta = static_cast<int>(std::floor(r.delta_theta_rad * n_theta / theta_span_rad));
  r.window_range = static_cast<int>(std::floor(r.delta_range_m * n_range / range_span_m));
  return r;
}

DetectionResult omp_baseline(const CMat& filtered, const SteeringDictionary& angle_dict,
                             const DelayDictionary& delay_dict, double threshold,
                             int max_iterations) {
  OmpPath path = greedy_path(filtered, angle_dict, delay_dict, threshold, max_iterations);
  return path_to_result(path, static_cast<int>(path.detections.size()));
}

DetectionResult omp_known_count(const CMat& filtered, const SteeringDictionary& angle_dict,
                                const DelayDictionary& delay_dict, int t) {
  OmpPath path = greedy_path(filtered, angle_dict, delay_dict, -1.0, t);
  return path_to_result(path, static_cast<int>(path.detections.size()));
}

OmpPath omp_path(const CMat& filtered, const SteeringDictionary& angle_dict,
                 const DelayDictionary& delay_dict, int max_iterations) {
  // Map values are non-negative, so every entry clears the sentinel threshold
  // and the path runs to the iteration cap; thresholds are applied afterwards
  // by truncation.
  return greedy_path(filtered, angle_dict, delay_dict, -1.0, max_iterations);
}

int OmpPath::count_at(double threshold) const {
  int n = 0;
  while (n < static_cast<int>(entry_peaks.size()) && entry_peaks[n] > threshold) ++n;
  return n;
}

DetectionResult truncate_path(const OmpPath& path, double threshold) {
  return path_to_result(path, path.count_at(threshold));
}

DetectionResult omp_differentiable(const CMat& filtered, const SteeringDictionary& angle_dict,
                                   const DelayDictionary& delay_dict, int t_true, int window_theta,
                                   int window_range, double noise_level) {
  check_inputs(filtered, angle_dict, delay_dict);
  if (t_true < 1) throw std::invalid_argument("omp_differentiable: need at least one iteration");
  if (window_theta < 0 || window_range < 0)
    throw std::invalid_argument("omp_differentiable: window radii must be non-negative");
  if (!(noise_level >= 0.0))
    throw std::invalid_argument("omp_differentiable: noise_level must be non-negative");

  int n_theta = static_cast<int>(angle_dict.angle_grid.size());
  int n_tau = static_cast<int>(delay_dict.delay_grid.size());
  CMat phi_h = angle_dict.matrix.adjoint();
  CMat phd_conj = delay_dict.matrix.conjugate();
  Eigen::Matrix<bool, -1, -1> masked = Eigen::Matrix<bool, -1, -1>::Constant(n_theta, n_tau, false);

  DetectionResult result;
  CMat residual = filtered;
  CMat atoms_a(filtered.rows(), 0), atoms_d(filtered.cols(), 0);
  std::vector<cplx> gains;
  for (int iter = 0; iter < t_true; ++iter) {
    RMat values = ompdetail::map_values(phi_h, residual * phd_conj);
    ArgmaxResult peak = ompdetail::masked_argmax(values, masked);
    if (peak.i < 0) break;
    masked(peak.i, peak.j) = true;

    Window w = ompdetail::clip_window(peak.i, peak.j, window_theta, window_range, n_theta, n_tau);
    RMat block = values.block(w.r0, w.c0, w.rows, w.cols);
    RMat weights = ompdetail::soft_window_weights(block, noise_level);
    RMat wt(w.rows, w.cols), wr(w.rows, w.cols);
    for (int c = 0; c < w.cols; ++c)
      for (int r = 0; r < w.rows; ++r) {
        wt(r, c) = angle_dict.angle_grid(w.r0 + r);
        wr(r, c) = delay_dict.delay_grid(w.c0 + c);
      }
    double theta_hat = weights.cwiseProduct(wt).sum();
    double tau_hat = weights.cwiseProduct(wr).sum();

    Detection det;
    det.angle_rad = theta_hat;
    det.delay_s = tau_hat;
    det.grid_i = peak.i;
    det.grid_j = peak.j;
    result.detections.push_back(det);
    result.entry_peaks.push_back(peak.value);

    atoms_a.conservativeResize(Eigen::NoChange, atoms_a.cols() + 1);
    atoms_d.conservativeResize(Eigen::NoChange, atoms_d.cols() + 1);
    atoms_a.col(atoms_a.cols() - 1) = angle_dict.matrix.col(peak.i);
    atoms_d.col(atoms_d.cols() - 1) = delay_dict.matrix.col(peak.j);
    ompdetail::GramGains solved = ompdetail::gram_gains(atoms_a, atoms_d, filtered);
    if (!solved.ok) {
      result.detections.pop_back();
      result.entry_peaks.pop_back();
      break;
    }
    gains = solved.gains;
    residual = ompdetail::residual_from_gains(filtered, atoms_a, atoms_d, gains);
    result.residual_energies.push_back(residual.squaredNorm());
  }
  result.iterations = static_cast<int>(result.detections.size());
  for (int t = 0; t < result.iterations; ++t) result.detections[t].gain = gains[t];
  return result;
}

std::vector<Point2> to_positions(const DetectionResult& result, bool* clamped) {
  if (clamped) *clamped = false;
  std::vector<Point2> p;
  p.reserve(result.detections.size());
  for (const Detection& d : result.detections) {
    double tau = d.delay_s;
    if (tau < 0.0) {
      tau = 0.0;
      if (clamped) *clamped = true;
    }
    double r = kSpeedOfLight * tau / 2.0;
    p.emplace_back(r * std::cos(d.angle_rad), r * std::sin(d.angle_rad));
  }
  return p;
}

}  // namespace isac
