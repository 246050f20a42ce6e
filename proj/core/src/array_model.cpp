#include "isacsim/array_model.hpp"

#include <cmath>
#include <stdexcept>

namespace isac {

ArrayModel::ArrayModel(int antennas, double wavelength, RVec spacings, double first_position)
    : antennas_(antennas),
      wavelength_(wavelength),
      spacings_(std::move(spacings)),
      first_position_(first_position) {
  if (antennas_ < 1) throw std::invalid_argument("ArrayModel: need at least one antenna");
  if (wavelength_ <= 0.0) throw std::invalid_argument("ArrayModel: wavelength must be positive");
  if (spacings_.size() != antennas_ - 1)
    throw std::invalid_argument("ArrayModel: expected K-1 spacings");
  for (int i = 0; i < spacings_.size(); ++i)
    if (!(spacings_(i) > 0.0))
      throw std::invalid_argument("ArrayModel: spacings must be strictly positive");
  positions_ = RVec(antennas_);
  positions_(0) = first_position_;
  for (int k = 1; k < antennas_; ++k) positions_(k) = positions_(k - 1) + spacings_(k - 1);
}

ArrayModel ArrayModel::nominal(int antennas, double wavelength) {
  RVec d = RVec::Constant(std::max(antennas - 1, 0), wavelength / 2.0);
  double p0 = -(antennas - 1) * wavelength / 4.0;
  return ArrayModel(antennas, wavelength, std::move(d), p0);
}

bool ArrayModel::is_nominal(double rel_tol) const {
  double half = wavelength_ / 2.0;
  for (int i = 0; i < spacings_.size(); ++i)
    if (std::abs(spacings_(i) - half) > rel_tol * half) return false;
  return true;
}

CVec steering_vector_for_positions(const RVec& positions, double wavelength, double angle_rad) {
  // Centering removes the translation degree of freedom from the phases.
  RVec centered = positions.array() - positions.mean();
  double factor = -2.0 * kPi * std::sin(angle_rad) / wavelength;
  CVec a(positions.size());
  for (int k = 0; k < positions.size(); ++k) {
    double phase = factor * centered(k);
    a(k) = cplx(std::cos(phase), std::sin(phase));
  }
  return a;
}

CVec steering_vector(const ArrayModel& model, double angle_rad) {
  return steering_vector_for_positions(model.positions(), model.wavelength(), angle_rad);
}

SteeringDictionary steering_matrix(const ArrayModel& model, const RVec& angle_grid) {
  if (angle_grid.size() == 0) throw std::invalid_argument("steering_matrix: empty angle grid");
  for (int i = 1; i < angle_grid.size(); ++i)
    if (!(angle_grid(i) > angle_grid(i - 1)))
      throw std::invalid_argument("steering_matrix: grid must be strictly increasing");
  SteeringDictionary dict;
  dict.angle_grid = angle_grid;
  dict.matrix = CMat(model.antennas(), angle_grid.size());
  for (int i = 0; i < angle_grid.size(); ++i)
    dict.matrix.col(i) = steering_vector(model, angle_grid(i));
  return dict;
}

RVec uniform_angle_grid(int n, double lo, double hi) {
  if (n < 1) throw std::invalid_argument("uniform_angle_grid: need at least one point");
  if (!(hi > lo) && n > 1) throw std::invalid_argument("uniform_angle_grid: hi must exceed lo");
  RVec g(n);
  if (n == 1) {
    g(0) = lo;
    return g;
  }
  double step = (hi - lo) / (n - 1);
  for (int i = 0; i < n; ++i) g(i) = lo + step * i;
  return g;
}

RVec sample_impairment(int antennas, double wavelength, double sigma, Rng& rng) {
  RVec d(std::max(antennas - 1, 0));
  for (int i = 0; i < d.size(); ++i) {
    double v;
    do {
      v = wavelength / 2.0 + sigma * rng.normal();
    } while (!(v > 0.0));
    d(i) = v;
  }
  return d;
}

ArrayModel impaired_array(int antennas, double wavelength, const RVec& spacings) {
  double p0 = -(antennas - 1) * wavelength / 4.0;
  return ArrayModel(antennas, wavelength, spacings, p0);
}

}  // namespace isac
