#ifndef ISACSIM_METRICS_HPP
#define ISACSIM_METRICS_HPP

#include <vector>

#include "isacsim/types.hpp"

namespace isac {

using Point2 = Eigen::Vector2d;

/**
 * Parameters of the generalized optimal sub-pattern assignment distance.
 * gamma may be infinity, in which case both sets must have equal size
 * (no cut-off, no cardinality penalty; used as a training loss).
 */
struct GospaParams {
  double gamma = 33.75;
  double mu = 2.0;
  double p = 2.0;
};

/**
 * GOSPA distance between two point sets. Symmetric in its arguments.
 * Assignment of the smaller set into the larger is exact: exhaustive
 * enumeration up to 5 points in the larger set, Hungarian beyond.
 */
double gospa(const std::vector<Point2>& a, const std::vector<Point2>& b, const GospaParams& prm);

/**
 * Optimal assignment used inside gospa, for callers that differentiate
 * through the matched pairs. Returns, for each point of the smaller set
 * (first return element tells whether that is `a`), the index of its partner
 * in the larger set. Ties resolve to the lexicographically smallest
 * permutation.
 */
struct GospaAssignment {
  bool a_is_smaller = true;
  std::vector<int> partner;  // size = min(|a|, |b|), indices into the larger set
  double value = 0.0;        // the GOSPA distance itself
};
GospaAssignment gospa_assignment(const std::vector<Point2>& a, const std::vector<Point2>& b,
                                 const GospaParams& prm);

namespace detail {
/// Min-cost injection of rows into columns (rows <= cols), exhaustive.
std::pair<std::vector<int>, double> assign_enumerate(const RMat& cost);
/// Same contract, O(n^3) Hungarian with potentials.
std::pair<std::vector<int>, double> assign_hungarian(const RMat& cost);
}  // namespace detail

/// Categorical cross-entropy of a soft posterior against the true index.
double cce(int true_index, const RVec& posterior);

/// Weighted training objective: omega * sensing + (1 - omega) * comm.
double isac_loss(double gospa_value, double cce_value, double omega_r);

/**
 * Misdetection / false-alarm rates over a batch of (true count, estimated
 * count) pairs, with t_max bounding the per-snapshot count. A zero
 * denominator yields a quiet NaN for that rate.
 */
struct DetectionRates {
  double pmd = 0.0;
  double pfa = 0.0;
};
DetectionRates pmd_pfa(const std::vector<int>& t_true, const std::vector<int>& t_est, int t_max);

/// Symbol error rate between two message sequences of equal total length.
double ser(const std::vector<std::vector<int>>& sent, const std::vector<std::vector<int>>& decoded);

}  // namespace isac

#endif
