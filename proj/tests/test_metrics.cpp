#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "isacsim/metrics.hpp"
#include "isacsim/rng.hpp"

using namespace isac;

namespace {

// Independent assignment oracle: brute force over all injections of rows
// into columns.
double brute_force_assignment(const RMat& cost) {
  int m = static_cast<int>(cost.rows());
  int n = static_cast<int>(cost.cols());
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = m == 0 ? 0.0 : std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (int i = 0; i < m; ++i) c += cost(i, perm[i]);
    best = std::min(best, c);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

std::vector<Point2> random_points(Rng& rng, int n) {
  std::vector<Point2> p;
  for (int i = 0; i < n; ++i) p.emplace_back(rng.uniform(-30.0, 30.0), rng.uniform(-30.0, 30.0));
  return p;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("unmatched point pays the cardinality penalty") {
  GospaParams prm{10.0, 2.0, 2.0};
  std::vector<Point2> a{{3.0, 4.0}};
  std::vector<Point2> b;
  CHECK(gospa(a, b, prm) == doctest::Approx(std::sqrt(50.0)).epsilon(1e-12));
  CHECK(gospa(b, a, prm) == doctest::Approx(std::sqrt(50.0)).epsilon(1e-12));
}

TEST_CASE("matched pairs combine their distances in p-norm") {
  GospaParams prm{10.0, 2.0, 2.0};
  std::vector<Point2> a{{0.0, 0.0}, {10.0, 0.0}};
  std::vector<Point2> b{{3.0, 0.0}, {10.0, 4.0}};
  CHECK(gospa(a, b, prm) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("distances saturate at the cut-off") {
  GospaParams prm{10.0, 2.0, 2.0};
  std::vector<Point2> a{{0.0, 0.0}};
  std::vector<Point2> b{{1000.0, 0.0}};
  CHECK(gospa(a, b, prm) == doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("empty versus empty is zero") {
  GospaParams prm{10.0, 2.0, 2.0};
  CHECK(gospa({}, {}, prm) == 0.0);
}

TEST_CASE("infinite cut-off requires equal cardinalities") {
  GospaParams prm{std::numeric_limits<double>::infinity(), 2.0, 2.0};
  std::vector<Point2> a{{0.0, 0.0}, {1.0, 1.0}};
  std::vector<Point2> b{{0.5, 0.0}, {1.0, 1.5}};
  double direct = std::sqrt(0.25 + 0.25);
  CHECK(gospa(a, b, prm) == doctest::Approx(direct).epsilon(1e-12));
  std::vector<Point2> c{{0.0, 0.0}};
  CHECK_THROWS(gospa(a, c, prm));
}

TEST_CASE("assignment partners are reported for the smaller set") {
  GospaParams prm{10.0, 2.0, 2.0};
  std::vector<Point2> a{{0.0, 0.0}};
  std::vector<Point2> b{{20.0, 20.0}, {0.1, 0.0}};
  GospaAssignment as = gospa_assignment(a, b, prm);
  CHECK(as.a_is_smaller);
  REQUIRE(as.partner.size() == 1);
  CHECK(as.partner[0] == 1);
}

TEST_CASE("Hungarian equals exhaustive search on random instances") {
  Rng rng(31);
  for (int inst = 0; inst < 200; ++inst) {
    int m = static_cast<int>(rng.uniform_int(6));
    int n = m + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(6 - m)));
    if (n == 0) continue;
    RMat cost(m, n);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) cost(i, j) = rng.uniform(0.0, 100.0);
    auto [p_h, c_h] = detail::assign_hungarian(cost);
    auto [p_e, c_e] = detail::assign_enumerate(cost);
    CHECK(std::abs(c_h - c_e) < 1e-9);
    CHECK(static_cast<int>(p_h.size()) == m);
  }
}

TEST_CASE("large equal-cardinality instances agree with brute force") {
  Rng rng(33);
  GospaParams prm{15.0, 2.0, 2.0};
  for (int inst = 0; inst < 10; ++inst) {
    std::vector<Point2> a = random_points(rng, 8);
    std::vector<Point2> b = random_points(rng, 8);
    RMat cost(8, 8);
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j) {
        double d = std::min((a[i] - b[j]).norm(), prm.gamma);
        cost(i, j) = d * d;
      }
    double want = std::sqrt(brute_force_assignment(cost));
    CHECK(gospa(a, b, prm) == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("metric properties hold on random sets") {
  Rng rng(35);
  GospaParams prm{12.0, 2.0, 2.0};
  for (int inst = 0; inst < 50; ++inst) {
    std::vector<Point2> a = random_points(rng, static_cast<int>(rng.uniform_int(4)));
    std::vector<Point2> b = random_points(rng, static_cast<int>(rng.uniform_int(4)));
    double d_ab = gospa(a, b, prm);
    CHECK(d_ab >= 0.0);
    CHECK(gospa(b, a, prm) == doctest::Approx(d_ab).epsilon(1e-12));
    CHECK(gospa(a, a, prm) == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("parameter validation") {
  std::vector<Point2> a{{0.0, 0.0}};
  CHECK_THROWS(gospa(a, a, GospaParams{-1.0, 2.0, 2.0}));
  CHECK_THROWS(gospa(a, a, GospaParams{10.0, 2.5, 2.0}));
  CHECK_THROWS(gospa(a, a, GospaParams{10.0, 2.0, 0.5}));
}

TEST_CASE("cross entropy oracles") {
  RVec uniform = RVec::Constant(4, 0.25);
  CHECK(cce(2, uniform) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  RVec tiny(2);
  tiny << 1e-12, 1.0 - 1e-12;
  CHECK(cce(0, tiny) == doctest::Approx(-std::log(1e-12)).epsilon(1e-12));
  CHECK(cce(0, tiny) == doctest::Approx(27.631021115928547).epsilon(1e-9));
  CHECK_THROWS(cce(5, uniform));
}

TEST_CASE("loss blend is the stated convex combination") {
  CHECK(isac_loss(3.0, 5.0, 1.0) == doctest::Approx(3.0));
  CHECK(isac_loss(3.0, 5.0, 0.0) == doctest::Approx(5.0));
  CHECK(isac_loss(3.0, 5.0, 0.25) == doctest::Approx(0.25 * 3.0 + 0.75 * 5.0));
  CHECK_THROWS(isac_loss(1.0, 1.0, 1.5));
}

TEST_CASE("miss and false-alarm rates, hand-checked") {
  std::vector<int> t_true{2, 1};
  std::vector<int> t_est{1, 3};
  DetectionRates r = pmd_pfa(t_true, t_est, 3);
  CHECK(r.pmd == doctest::Approx(1.0 - 2.0 / 3.0).epsilon(1e-12));
  CHECK(r.pfa == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("undefined rates come back as NaN") {
  DetectionRates none = pmd_pfa({0, 0}, {1, 0}, 2);
  CHECK(std::isnan(none.pmd));
  CHECK(none.pfa == doctest::Approx(0.5 / 2.0).epsilon(1e-12));
  DetectionRates full = pmd_pfa({2, 2}, {2, 1}, 2);
  CHECK(std::isnan(full.pfa));
  CHECK(full.pmd == doctest::Approx(1.0 - 3.0 / 4.0).epsilon(1e-12));
}

TEST_CASE("symbol error rate counts positionwise mismatches") {
  std::vector<std::vector<int>> sent{{0, 1, 2, 3}, {1, 1}};
  std::vector<std::vector<int>> decoded{{0, 2, 2, 0}, {1, 3}};
  CHECK(ser(sent, decoded) == doctest::Approx(3.0 / 6.0).epsilon(1e-12));
  CHECK_THROWS(ser({{0}}, {{0, 1}}));
}

}  // TEST_SUITE
