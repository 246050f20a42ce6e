#ifndef ISACSIM_COMM_HPP
#define ISACSIM_COMM_HPP

#include <vector>

#include "isacsim/types.hpp"

namespace isac {

/** Unit-energy constellation with message indexing. */
class Constellation {
 public:
  explicit Constellation(std::vector<cplx> points);
  int size() const { return static_cast<int>(points_.size()); }
  cplx point(int m) const { return points_[m]; }
  const std::vector<cplx>& points() const { return points_; }

 private:
  std::vector<cplx> points_;
};

/// Gray-mapped QPSK: bit 0 selects the in-phase sign, bit 1 the quadrature.
const Constellation& qpsk();

/**
 * Per-subcarrier maximum-likelihood detection with known channel:
 *   m_hat_s = argmin_m |y_s - kappa_s x(m)|^2,
 * ties resolved toward the lowest message index.
 */
std::vector<int> ml_detect(const CVec& y, const CVec& kappa, const Constellation& c);

/**
 * Soft symbol posterior for one subcarrier: softmax of the negated
 * log squared distances. Squared distances are floored at 1e-300 before the
 * log, so an exact hit concentrates all mass on that symbol.
 */
RVec soft_posterior(cplx y, cplx kappa, const Constellation& c);

}  // namespace isac

#endif
