#ifndef ISACSIM_OMP_DETAIL_HPP
#define ISACSIM_OMP_DETAIL_HPP

// Internal helpers shared by the greedy receiver and the taped training
// forward. Not installed.

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/LU>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "isacsim/types.hpp"

namespace isac {
namespace ompdetail {

inline RMat map_values(const CMat& phi_h, const CMat& delay_stage) {
  return (phi_h * delay_stage).cwiseAbs2();
}

struct ArgmaxResult {
  int i = -1, j = -1;
  double value = -1.0;
};

// Row-major scan; the first strict maximum wins.
inline ArgmaxResult masked_argmax(const RMat& values, const Eigen::Matrix<bool, -1, -1>& masked) {
  ArgmaxResult r;
  for (int i = 0; i < values.rows(); ++i)
    for (int j = 0; j < values.cols(); ++j) {
      if (masked(i, j)) continue;
      if (values(i, j) > r.value) {
        r.value = values(i, j);
        r.i = i;
        r.j = j;
      }
    }
  return r;
}

struct GainSolve {
  std::vector<cplx> gains;
  bool ok = true;
};

// Joint least-squares gains over all selected atoms: QR of the stacked
// vectorized atom matrix (atom t is vec of psa_t psd_t^T).
inline GainSolve solve_gains(const CMat& atoms_a, const CMat& atoms_d, const CVec& y_vec) {
  int k = static_cast<int>(atoms_a.rows());
  int s = static_cast<int>(atoms_d.rows());
  int t = static_cast<int>(atoms_a.cols());
  CMat v(k * s, t);
  for (int c = 0; c < t; ++c)
    for (int r = 0; r < s; ++r) v.block(r * k, c, k, 1) = atoms_a.col(c) * atoms_d(r, c);
  Eigen::ColPivHouseholderQR<CMat> qr(v);
  GainSolve out;
  if (qr.rank() < t) {
    out.ok = false;
    return out;
  }
  CVec g = qr.solve(y_vec);
  out.gains.assign(g.data(), g.data() + t);
  return out;
}

// Same expression shape as the taped trainer so both forwards agree bitwise.
inline CMat residual_from_gains(const CMat& filtered, const CMat& atoms_a, const CMat& atoms_d,
                                const std::vector<cplx>& gains) {
  Eigen::Map<const CVec> g(gains.data(), static_cast<Eigen::Index>(gains.size()));
  CMat scaled = (g * CMat::Ones(1, atoms_d.rows())).cwiseProduct(atoms_d.transpose());
  return filtered - atoms_a * scaled;
}

inline bool gain_system_ok(const CMat& gram) {
  Eigen::JacobiSVD<CMat> svd(gram);
  double smax = svd.singularValues()(0);
  double smin = svd.singularValues()(svd.singularValues().size() - 1);
  return std::isfinite(smax) && smax > 0.0 && smin > smax * 1e-12;
}

struct GramGains {
  std::vector<cplx> gains;
  bool ok = true;
};

// Normal-equation form of solve_gains: the Gram of the rank-one atoms
// a_u d_u^T factors into (A^H A) .* (D^H D), and the right side into row sums
// of (A^H Y) .* D^H. The differentiable receiver and the taped trainer both
// use this so their forwards match.
inline GramGains gram_gains(const CMat& atoms_a, const CMat& atoms_d, const CMat& filtered) {
  CMat gram = (atoms_a.adjoint() * atoms_a).cwiseProduct(atoms_d.adjoint() * atoms_d);
  GramGains out;
  if (!gain_system_ok(gram)) {
    out.ok = false;
    return out;
  }
  CMat rhs = (atoms_a.adjoint() * filtered).cwiseProduct(atoms_d.adjoint()) *
             CMat::Ones(filtered.cols(), 1);
  CVec g = gram.partialPivLu().solve(rhs);
  out.gains.assign(g.data(), g.data() + g.size());
  return out;
}

// Softmax temperature for the window weights. The natural unit is the mean
// squared-magnitude map value of a noise-only cell (noise_level = sigma^2 K S
// for K antennas and S subcarriers), so weak peaks spread their weight and a
// strengthening peak tightens the estimate toward it. Once the peak clears
// kSoftSharp noise units the temperature rides the peak instead, which keeps
// the weights scale-aware but finitely sharp for strong returns.
inline constexpr double kSoftSharp = 20.0;

inline double soft_temperature(double peak, double noise_level) {
  return std::max(noise_level, peak / kSoftSharp);
}

// exp((v - v_max) / T), normalized; written as softmax(v / T) with the max
// subtracted after the division so the taped rsoftmax reproduces it exactly.
// An all-zero block (only possible without noise) degenerates to uniform.
inline RMat soft_window_weights(const RMat& block, double noise_level) {
  double temp = soft_temperature(block.maxCoeff(), noise_level);
  if (!(temp > 0.0))
    return RMat::Constant(block.rows(), block.cols(),
                          1.0 / static_cast<double>(block.rows() * block.cols()));
  RMat scaled = block / temp;
  RMat w = (scaled.array() - scaled.maxCoeff()).exp();
  w /= w.sum();
  return w;
}

struct Window {
  int r0 = 0, c0 = 0, rows = 0, cols = 0;
};

inline Window clip_window(int i, int j, int half_theta, int half_range, int n_theta, int n_tau) {
  Window w;
  w.r0 = std::max(0, i - half_theta);
  int r1 = std::min(n_theta - 1, i + half_theta);
  w.c0 = std::max(0, j - half_range);
  int c1 = std::min(n_tau - 1, j + half_range);
  w.rows = r1 - w.r0 + 1;
  w.cols = c1 - w.c0 + 1;
  return w;
}

}  // namespace ompdetail
}  // namespace isac

#endif
