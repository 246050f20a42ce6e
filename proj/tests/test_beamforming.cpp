#include <cmath>

#include "doctest.h"
#include "isacsim/beamforming.hpp"

using namespace isac;

namespace {

SteeringDictionary nominal_dict(int antennas, int n) {
  ArrayModel m = ArrayModel::nominal(antennas, 0.005);
  return steering_matrix(m, uniform_angle_grid(n, -kPi / 2, kPi / 2));
}

}  // namespace

TEST_SUITE("beamforming") {

TEST_CASE("beampattern target is an indicator scaled by the array size") {
  RVec grid = uniform_angle_grid(9, -0.8, 0.8);
  RVec b = beampattern_target(grid, 4, -0.15, 0.35);
  for (int i = 0; i < 9; ++i) {
    bool inside = grid(i) >= -0.15 && grid(i) <= 0.35;
    CHECK(b(i) == doctest::Approx(inside ? 4.0 : 0.0));
  }
  CHECK_THROWS(beampattern_target(grid, 4, 0.31, 0.33));  // no grid point inside
}

TEST_CASE("single-antenna synthesis has a closed form") {
  // K = 1: the Gram matrix is the grid size N, the right-hand side is the
  // sum of the target, so f = sum(b) / N.
  SteeringDictionary d = nominal_dict(1, 25);
  double lo = -0.4, hi = 0.2;
  CVec f = synthesize_beam(d, lo, hi);
  RVec b = beampattern_target(d.angle_grid, 1, lo, hi);
  CHECK(f.size() == 1);
  CHECK(std::abs(f(0) - cplx(b.sum() / 25.0, 0.0)) < 1e-12);
}

TEST_CASE("least-squares residual satisfies the normal equations") {
  SteeringDictionary d = nominal_dict(8, 41);
  double lo = -0.6, hi = -0.2;
  CVec f = synthesize_beam(d, lo, hi);
  RVec b = beampattern_target(d.angle_grid, 8, lo, hi);
  CVec resid = b.cast<cplx>() - d.matrix.transpose() * f;
  CVec normal = d.matrix.conjugate() * resid;
  CHECK(normal.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("synthesized beam concentrates power in the sector") {
  SteeringDictionary d = nominal_dict(16, 181);
  double lo = -40.0 * kPi / 180.0, hi = -20.0 * kPi / 180.0;
  CVec f = synthesize_beam(d, lo, hi);
  ArrayModel m = ArrayModel::nominal(16, 0.005);
  RVec resp = transmit_response(m, f, d.angle_grid);
  double inside = 0.0, outside = 0.0;
  int n_in = 0, n_out = 0;
  for (int i = 0; i < d.angle_grid.size(); ++i) {
    double margin = 5.0 * kPi / 180.0;
    if (d.angle_grid(i) >= lo && d.angle_grid(i) <= hi) {
      inside += resp(i);
      ++n_in;
    } else if (d.angle_grid(i) < lo - margin || d.angle_grid(i) > hi + margin) {
      outside += resp(i);
      ++n_out;
    }
  }
  CHECK(inside / n_in > 20.0 * (outside / n_out));
}

TEST_CASE("transmit response matches the quadratic form") {
  SteeringDictionary d = nominal_dict(4, 11);
  ArrayModel m = ArrayModel::nominal(4, 0.005);
  CVec f = synthesize_beam(d, -0.3, 0.3);
  RVec resp = transmit_response(m, f, d.angle_grid);
  for (int i = 0; i < 11; ++i) {
    CVec a = steering_vector(m, d.angle_grid(i));
    CHECK(resp(i) == doctest::Approx(std::norm((a.transpose() * f)(0))).epsilon(1e-10));
  }
}

TEST_CASE("trade-off combination is power normalized") {
  SteeringDictionary d = nominal_dict(8, 61);
  CVec fr = synthesize_beam(d, -0.7, -0.4);
  CVec fc = synthesize_beam(d, 0.4, 0.7);
  for (double eta : {0.0, 0.25, 0.5, 0.9, 1.0}) {
    for (double phi : {0.0, 1.3, kPi}) {
      Precoder p = isac_combine(fr, fc, eta, phi, 2.5);
      CHECK(p.f.squaredNorm() == doctest::Approx(2.5).epsilon(1e-12));
      CHECK(p.power == doctest::Approx(2.5));
    }
  }
}

TEST_CASE("trade-off endpoints reproduce the pure beams") {
  SteeringDictionary d = nominal_dict(8, 61);
  CVec fr = synthesize_beam(d, -0.7, -0.4);
  CVec fc = synthesize_beam(d, 0.4, 0.7);

  Precoder radar = isac_combine(fr, fc, 1.0, 0.7, 1.0);
  CVec want_r = fr / fr.norm();
  CHECK((radar.f - want_r).cwiseAbs().maxCoeff() < 1e-12);

  Precoder comm = isac_combine(fr, fc, 0.0, 0.7, 1.0);
  cplx rot = std::exp(cplx(0.0, 0.7));
  CVec want_c = rot * fc / fc.norm();
  CHECK((comm.f - want_c).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("degenerate combinations throw") {
  SteeringDictionary d = nominal_dict(4, 21);
  CVec fr = synthesize_beam(d, -0.5, -0.1);
  CVec zero = CVec::Zero(4);
  CHECK_THROWS(isac_combine(zero, fr, 0.5, 0.0, 1.0));
  CHECK_THROWS(isac_combine(fr, fr, 0.5, kPi, 1.0));  // exact cancellation
  CHECK_THROWS(isac_combine(fr, fr, 1.5, 0.0, 1.0));
}

TEST_CASE("ill-conditioned grids are still solvable") {
  // Two nearly identical grid angles make the Gram matrix numerically
  // singular; the ridge keeps the solve finite.
  ArrayModel m = ArrayModel::nominal(4, 0.005);
  RVec grid(3);
  grid << -0.2, 0.1, 0.1 + 1e-13;
  SteeringDictionary d = steering_matrix(m, grid);
  CVec f = synthesize_beam(d, -0.3, 0.2);
  CHECK(f.allFinite());
}

}  // TEST_SUITE
