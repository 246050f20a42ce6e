#include "isacsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace isac {

namespace detail {

std::pair<std::vector<int>, double> assign_enumerate(const RMat& cost) {
  int m = static_cast<int>(cost.rows());
  int n = static_cast<int>(cost.cols());
  if (m > n) throw std::invalid_argument("assign_enumerate: rows must not exceed cols");
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best;
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (int i = 0; i < m; ++i) c += cost(i, perm[i]);
    if (c < best_cost) {
      best_cost = c;
      best.assign(perm.begin(), perm.begin() + m);
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  if (m == 0) best.clear();
  return {best, m == 0 ? 0.0 : best_cost};
}

std::pair<std::vector<int>, double> assign_hungarian(const RMat& cost) {
  int m = static_cast<int>(cost.rows());
  int n = static_cast<int>(cost.cols());
  if (m > n) throw std::invalid_argument("assign_hungarian: rows must not exceed cols");
  if (m == 0) return {{}, 0.0};
  const double inf = std::numeric_limits<double>::infinity();
  // Potentials over rows (u) and columns (v); way[j] remembers the column we
  // came from on the shortest augmenting path. 1-based with a dummy 0 slot.
  std::vector<double> u(m + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> match(n + 1, 0);  // column -> row
  std::vector<int> way(n + 1, 0);
  for (int i = 1; i <= m; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, false);
    do {
      used[j0] = true;
      int i0 = match[j0], j1 = -1;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(m, -1);
  double total = 0.0;
  for (int j = 1; j <= n; ++j) {
    if (match[j] != 0) {
      row_to_col[match[j] - 1] = j - 1;
      total += cost(match[j] - 1, j - 1);
    }
  }
  return {row_to_col, total};
}

}  // namespace detail

namespace {

void validate_gospa(const GospaParams& prm) {
  if (!(prm.gamma > 0.0)) throw std::invalid_argument("gospa: gamma must be positive");
  if (!(prm.mu > 0.0 && prm.mu <= 2.0)) throw std::invalid_argument("gospa: mu must be in (0, 2]");
  if (!(prm.p >= 1.0)) throw std::invalid_argument("gospa: p must be at least 1");
}

GospaAssignment gospa_impl(const std::vector<Point2>& a, const std::vector<Point2>& b,
                           const GospaParams& prm) {
  validate_gospa(prm);
  GospaAssignment out;
  out.a_is_smaller = a.size() <= b.size();
  const std::vector<Point2>& small = out.a_is_smaller ? a : b;
  const std::vector<Point2>& large = out.a_is_smaller ? b : a;
  int m = static_cast<int>(small.size());
  int n = static_cast<int>(large.size());
  bool unbounded = std::isinf(prm.gamma);
  if (unbounded && m != n)
    throw std::invalid_argument("gospa: infinite gamma requires equal cardinalities");

  if (m == 0) {
    out.partner.clear();
    out.value = n == 0 ? 0.0
                       : std::pow(std::pow(prm.gamma, prm.p) / prm.mu * n, 1.0 / prm.p);
    return out;
  }

  RMat cost(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double d = (small[i] - large[j]).norm();
      if (!unbounded) d = std::min(d, prm.gamma);
      cost(i, j) = std::pow(d, prm.p);
    }
  auto [partner, assigned] =
      n <= 5 ? detail::assign_enumerate(cost) : detail::assign_hungarian(cost);
  out.partner = std::move(partner);
  double card = unbounded ? 0.0 : std::pow(prm.gamma, prm.p) / prm.mu * (n - m);
  out.value = std::pow(assigned + card, 1.0 / prm.p);
  return out;
}

}  // namespace

double gospa(const std::vector<Point2>& a, const std::vector<Point2>& b, const GospaParams& prm) {
  return gospa_impl(a, b, prm).value;
}

GospaAssignment gospa_assignment(const std::vector<Point2>& a, const std::vector<Point2>& b,
                                 const GospaParams& prm) {
  return gospa_impl(a, b, prm);
}

double cce(int true_index, const RVec& posterior) {
  if (true_index < 0 || true_index >= posterior.size())
    throw std::invalid_argument("cce: true index out of range");
  return -std::log(std::max(posterior(true_index), 1e-300));
}

double isac_loss(double gospa_value, double cce_value, double omega_r) {
  if (!(omega_r >= 0.0 && omega_r <= 1.0))
    throw std::invalid_argument("isac_loss: omega_r must lie in [0, 1]");
  return omega_r * gospa_value + (1.0 - omega_r) * cce_value;
}

DetectionRates pmd_pfa(const std::vector<int>& t_true, const std::vector<int>& t_est, int t_max) {
  if (t_true.size() != t_est.size()) throw std::invalid_argument("pmd_pfa: length mismatch");
  double num_md = 0.0, den_md = 0.0, num_fa = 0.0, den_fa = 0.0;
  for (size_t i = 0; i < t_true.size(); ++i) {
    if (t_true[i] < 0 || t_est[i] < 0 || t_true[i] > t_max)
      throw std::invalid_argument("pmd_pfa: counts out of range");
    num_md += std::min(t_true[i], t_est[i]);
    den_md += t_true[i];
    num_fa += std::max(t_true[i], t_est[i]) - t_true[i];
    den_fa += t_max - t_true[i];
  }
  DetectionRates r;
  r.pmd = den_md > 0.0 ? 1.0 - num_md / den_md : std::numeric_limits<double>::quiet_NaN();
  r.pfa = den_fa > 0.0 ? num_fa / den_fa : std::numeric_limits<double>::quiet_NaN();
  return r;
}

double ser(const std::vector<std::vector<int>>& sent,
           const std::vector<std::vector<int>>& decoded) {
  if (sent.size() != decoded.size()) throw std::invalid_argument("ser: batch size mismatch");
  std::size_t total = 0, wrong = 0;
  for (size_t i = 0; i < sent.size(); ++i) {
    if (sent[i].size() != decoded[i].size())
      throw std::invalid_argument("ser: sequence length mismatch");
    for (size_t s = 0; s < sent[i].size(); ++s) {
      ++total;
      if (sent[i][s] != decoded[i][s]) ++wrong;
    }
  }
  if (total == 0) throw std::invalid_argument("ser: empty input");
  return static_cast<double>(wrong) / static_cast<double>(total);
}

}  // namespace isac
