#include "isacsim/comm.hpp"

#include <cmath>
#include <stdexcept>

namespace isac {

Constellation::Constellation(std::vector<cplx> points) : points_(std::move(points)) {
  if (points_.empty()) throw std::invalid_argument("Constellation: no points");
}

const Constellation& qpsk() {
  static const double a = 1.0 / std::sqrt(2.0);
  static const Constellation c({cplx(a, a), cplx(-a, a), cplx(a, -a), cplx(-a, -a)});
  return c;
}

std::vector<int> ml_detect(const CVec& y, const CVec& kappa, const Constellation& c) {
  if (y.size() != kappa.size()) throw std::invalid_argument("ml_detect: length mismatch");
  std::vector<int> out(y.size());
  for (int s = 0; s < y.size(); ++s) {
    int best = 0;
    double best_d = std::norm(y(s) - kappa(s) * c.point(0));
    for (int m = 1; m < c.size(); ++m) {
      double d = std::norm(y(s) - kappa(s) * c.point(m));
      if (d < best_d) {
        best_d = d;
        best = m;
      }
    }
    out[s] = best;
  }
  return out;
}

RVec soft_posterior(cplx y, cplx kappa, const Constellation& c) {
  RVec logits(c.size());
  for (int m = 0; m < c.size(); ++m) {
    double d2 = std::norm(y - kappa * c.point(m));
    logits(m) = -std::log(std::max(d2, 1e-300));
  }
  double mx = logits.maxCoeff();
  RVec p = (logits.array() - mx).exp();
  return p / p.sum();
}

}  // namespace isac
