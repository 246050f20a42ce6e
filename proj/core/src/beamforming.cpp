#include "isacsim/beamforming.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/SVD>

namespace isac {

RVec beampattern_target(const RVec& angle_grid, int antennas, double theta_lo, double theta_hi) {
  if (!(theta_hi >= theta_lo)) throw std::invalid_argument("beampattern_target: bad interval");
  RVec b = RVec::Zero(angle_grid.size());
  int inside = 0;
  for (int i = 0; i < angle_grid.size(); ++i) {
    if (angle_grid(i) >= theta_lo && angle_grid(i) <= theta_hi) {
      b(i) = static_cast<double>(antennas);
      ++inside;
    }
  }
  if (inside == 0)
    throw std::invalid_argument("beampattern_target: empty beampattern (interval misses the grid)");
  return b;
}

CVec synthesize_beam(const SteeringDictionary& dict, double theta_lo, double theta_hi) {
  int antennas = static_cast<int>(dict.matrix.rows());
  RVec b = beampattern_target(dict.angle_grid, antennas, theta_lo, theta_hi);

  CMat conj_phi = dict.matrix.conjugate();
  CMat gram = conj_phi * dict.matrix.transpose();
  CVec rhs = conj_phi * b.cast<cplx>();

  Eigen::JacobiSVD<CMat> svd(gram);
  double smax = svd.singularValues()(0);
  double smin = svd.singularValues()(svd.singularValues().size() - 1);
  if (!(smin > 0.0) || smax / smin > 1e12) {
    double ridge = 1e-8 * gram.trace().real() / antennas;
    gram += ridge * CMat::Identity(antennas, antennas);
  }
  return gram.partialPivLu().solve(rhs);
}

Precoder isac_combine(const CVec& f_r, const CVec& f_c, double eta, double phi, double power) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw std::invalid_argument("isac_combine: eta not in [0, 1]");
  if (!(power > 0.0)) throw std::invalid_argument("isac_combine: power must be positive");
  double nr = f_r.norm();
  double nc = f_c.norm();
  if (!(nr > 0.0) || !(nc > 0.0))
    throw std::invalid_argument("isac_combine: beams must have nonzero norm");
  cplx rot(std::cos(phi), std::sin(phi));
  CVec comb = std::sqrt(eta) * (f_r / nr) + std::sqrt(1.0 - eta) * rot * (f_c / nc);
  double n = comb.norm();
  if (n < 1e-12) throw std::invalid_argument("isac_combine: combination cancelled to zero");
  Precoder out;
  out.power = power;
  out.f = std::sqrt(power) * comb / n;
  return out;
}

RVec transmit_response(const ArrayModel& array, const CVec& f, const RVec& angle_grid) {
  RVec r(angle_grid.size());
  for (int i = 0; i < angle_grid.size(); ++i) {
    CVec a = steering_vector(array, angle_grid(i));
    r(i) = std::norm((a.transpose() * f)(0));
  }
  return r;
}

}  // namespace isac
