#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "isacsim/autodiff.hpp"
#include "isacsim/rng.hpp"

using namespace isac;
using ad::RVar;
using ad::Tape;
using ad::Var;

namespace {

using Builder = std::function<RVar(Tape&, const std::vector<Var>&, const std::vector<RVar>&)>;

CMat crand(int r, int c, Rng& rng) {
  CMat m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = rng.cnormal(1.0);
  return m;
}

RMat rrand(int r, int c, Rng& rng) {
  RMat m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = 0.7 * rng.normal();
  return m;
}

double eval_at(const Builder& build, const std::vector<CMat>& cv, const std::vector<RMat>& rv) {
  Tape t;
  std::vector<Var> cs;
  for (const CMat& m : cv) cs.push_back(t.leaf(m));
  std::vector<RVar> rs;
  for (const RMat& m : rv) rs.push_back(t.rleaf(m));
  RVar loss = build(t, cs, rs);
  return t.rvalue(loss)(0, 0);
}

// Central finite differences against the taped gradient of every leaf.
// Complex leaves are perturbed separately along the real and imaginary axes,
// matching the g = dL/dRe + j dL/dIm convention.
void check_gradients(const Builder& build, std::vector<CMat> cv, std::vector<RMat> rv,
                     double h = 1e-6, double tol = 5e-6) {
  Tape t;
  std::vector<Var> cs;
  for (const CMat& m : cv) cs.push_back(t.leaf(m));
  std::vector<RVar> rs;
  for (const RMat& m : rv) rs.push_back(t.rleaf(m));
  RVar loss = build(t, cs, rs);
  t.seed(loss, 1.0);
  t.backward();
  std::vector<CMat> cg;
  for (Var v : cs) cg.push_back(t.grad(v));
  std::vector<RMat> rg;
  for (RVar v : rs) rg.push_back(t.rgrad(v));

  auto close = [tol](double fd, double g) {
    double s = std::max({1.0, std::abs(fd), std::abs(g)});
    CHECK(std::abs(fd - g) <= tol * s);
  };
  for (size_t l = 0; l < cv.size(); ++l)
    for (Eigen::Index j = 0; j < cv[l].cols(); ++j)
      for (Eigen::Index i = 0; i < cv[l].rows(); ++i) {
        cplx keep = cv[l](i, j);
        cv[l](i, j) = keep + h;
        double lp = eval_at(build, cv, rv);
        cv[l](i, j) = keep - h;
        double lm = eval_at(build, cv, rv);
        close((lp - lm) / (2 * h), cg[l](i, j).real());
        cv[l](i, j) = keep + cplx(0.0, h);
        lp = eval_at(build, cv, rv);
        cv[l](i, j) = keep - cplx(0.0, h);
        lm = eval_at(build, cv, rv);
        close((lp - lm) / (2 * h), cg[l](i, j).imag());
        cv[l](i, j) = keep;
      }
  for (size_t l = 0; l < rv.size(); ++l)
    for (Eigen::Index j = 0; j < rv[l].cols(); ++j)
      for (Eigen::Index i = 0; i < rv[l].rows(); ++i) {
        double keep = rv[l](i, j);
        rv[l](i, j) = keep + h;
        double lp = eval_at(build, cv, rv);
        rv[l](i, j) = keep - h;
        double lm = eval_at(build, cv, rv);
        close((lp - lm) / (2 * h), rg[l](i, j));
        rv[l](i, j) = keep;
      }
}

}  // namespace

TEST_SUITE("autodiff") {

TEST_CASE("complex elementwise ops") {
  Rng rng(11);
  CMat C = crand(2, 3, rng);
  RMat W = rrand(2, 3, rng);

  check_gradients(
      [C, W](Tape& t, const std::vector<Var>& cs, const std::vector<RVar>&) {
        Var sum = t.add(cs[0], cs[1]);
        Var diff = t.sub(sum, cs[2]);
        Var shifted = t.add_const(diff, &C);
        Var scaled = t.scale(shifted, cplx(0.7, -0.4));
        return t.wsum(t.magsq(scaled), &W);
      },
      {crand(2, 3, rng), crand(2, 3, rng), crand(2, 3, rng)}, {});

  check_gradients(
      [C, W](Tape& t, const std::vector<Var>& cs, const std::vector<RVar>&) {
        return t.wsum(t.magsq(t.cmul_const(cs[0], &C)), &W);
      },
      {crand(2, 3, rng)}, {});
}

TEST_CASE("scalar-by-constant product") {
  Rng rng(13);
  CMat C = crand(2, 3, rng);
  RMat W = rrand(2, 3, rng);
  check_gradients(
      [C, W](Tape& t, const std::vector<Var>& cs, const std::vector<RVar>&) {
        return t.wsum(t.magsq(t.smul_const(cs[0], &C)), &W);
      },
      {crand(1, 1, rng)}, {});
}

TEST_CASE("matrix products") {
  Rng rng(17);
  CMat C = crand(3, 2, rng);
  CMat D = crand(3, 4, rng);
  RMat W33 = rrand(3, 3, rng);
  RMat W34 = rrand(3, 4, rng);
  RMat W24 = rrand(2, 4, rng);

  check_gradients(
      [C, W33](Tape& t, const std::vector<Var>& cs, const std::vector<RVar>&) {
        return t.wsum(t.magsq(t.cmatmul(&C, cs[0])), &W33);
      },
      {crand(2, 3, rng)}, {});

  check_gradients(
      [D, W24](Tape& t, const std::vector<Var>& cs, const std::vector<RVar>&) {
        return t.wsum(t.magsq(t.matmul_c(cs[0], &D)), &W24);
      },
      {crand(2, 3, rng)}, {});

  check_gradients(
      [W34](Tape& t, const std::vector<Var>& cs, const std::vector<RVar>&) {
        return t.wsum(t.magsq(t.matmul(cs[0], cs[1])), &W34);
      },
      {crand(3, 2, rng), crand(2, 4, rng)}, {});
}

TEST_CASE("conjugation and transposition") {
  Rng rng(19);
  CMat D = crand(3, 2, rng);
  RMat W22 = rrand(2, 2, rng);
  RMat W32 = rrand(3, 2, rng);

  check_gradients(
      [D, W22](Tape& t, const std::vector<Var>& cs, const std::vector<RVar>&) {
        return t.wsum(t.magsq(t.matmul_c(t.conj(cs[0]), &D)), &W22);
      },
      {crand(2, 3, rng)}, {});

  check_gradients(
      [W32](Tape& t, const std::vector<Var>& cs, const std::vector<RVar>&) {
        return t.wsum(t.magsq(t.transpose(cs[0])), &W32);
      },
      {crand(2, 3, rng)}, {});

  check_gradients(
      [D, W22](Tape& t, const std::vector<Var>& cs, const std::vector<RVar>&) {
        return t.wsum(t.magsq(t.matmul_c(t.adjoint(cs[0]), &D)), &W22);
      },
      {crand(3, 2, rng)}, {});
}

TEST_CASE("linear solve") {
  Rng rng(23);
  RMat W = rrand(3, 2, rng);
  CMat g0 = crand(3, 3, rng);
  g0.diagonal().array() += 3.0;
  check_gradients(
      [W](Tape& t, const std::vector<Var>& cs, const std::vector<RVar>&) {
        return t.wsum(t.magsq(t.solve(cs[0], cs[1])), &W);
      },
      {g0, crand(3, 2, rng)}, {});
}

TEST_CASE("regularized solve through a real scalar") {
  Rng rng(29);
  RMat W = rrand(3, 2, rng);
  CMat g0 = crand(3, 3, rng);
  g0.diagonal().array() += 3.0;
  RMat s0(1, 1);
  s0(0, 0) = 0.9;
  check_gradients(
      [W](Tape& t, const std::vector<Var>& cs, const std::vector<RVar>& rs) {
        Var g = t.add_scaled_identity(cs[0], rs[0], 2.0);
        return t.wsum(t.magsq(t.solve(g, cs[1])), &W);
      },
      {g0, crand(3, 2, rng)}, {s0});
}

TEST_CASE("division by a real scalar") {
  Rng rng(31);
  RMat W = rrand(2, 2, rng);
  RMat s0(1, 1);
  s0(0, 0) = 1.7;
  check_gradients(
      [W](Tape& t, const std::vector<Var>& cs, const std::vector<RVar>& rs) {
        return t.wsum(t.magsq(t.div_by_rscalar(cs[0], rs[0])), &W);
      },
      {crand(2, 2, rng)}, {s0});
}

TEST_CASE("unit phasor") {
  Rng rng(37);
  CMat C = crand(2, 3, rng);
  CMat D = crand(2, 3, rng);
  RMat W = rrand(2, 3, rng);
  check_gradients(
      [C, D, W](Tape& t, const std::vector<Var>&, const std::vector<RVar>& rs) {
        Var p = t.unit_phasor(rs[0]);
        return t.wsum(t.magsq(t.add_const(t.cmul_const(p, &C), &D)), &W);
      },
      {}, {rrand(2, 3, rng)});
}

TEST_CASE("complex-to-real bridges") {
  Rng rng(41);
  RMat W = rrand(2, 3, rng);

  check_gradients(
      [W](Tape& t, const std::vector<Var>& cs, const std::vector<RVar>&) {
        return t.wsum(t.magsq(cs[0]), &W);
      },
      {crand(2, 3, rng)}, {});

  check_gradients(
      [](Tape& t, const std::vector<Var>& cs, const std::vector<RVar>&) {
        return t.raffine(t.norm2(cs[0]), 2.0, 0.3);
      },
      {crand(2, 3, rng)}, {});

  check_gradients(
      [](Tape& t, const std::vector<Var>& cs, const std::vector<RVar>&) {
        return t.rtrace_re(t.matmul(cs[0], cs[1]));
      },
      {crand(2, 3, rng), crand(3, 2, rng)}, {});
}

TEST_CASE("real elementwise ops") {
  Rng rng(43);
  RMat W = rrand(2, 3, rng);

  check_gradients(
      [](Tape& t, const std::vector<Var>&, const std::vector<RVar>& rs) {
        return t.rsum(t.raffine(rs[0], -1.3, 0.4));
      },
      {}, {rrand(2, 3, rng)});

  check_gradients(
      [](Tape& t, const std::vector<Var>&, const std::vector<RVar>& rs) {
        return t.rsum(t.rlincomb2(rs[0], rs[1], 0.6, -1.1));
      },
      {}, {rrand(2, 3, rng), rrand(2, 3, rng)});

  check_gradients(
      [W](Tape& t, const std::vector<Var>&, const std::vector<RVar>& rs) {
        return t.wsum(t.rmul(rs[0], rs[1]), &W);
      },
      {}, {rrand(2, 3, rng), rrand(2, 3, rng)});

  RMat pos = rrand(2, 3, rng).cwiseAbs();
  pos.array() += 0.5;
  check_gradients(
      [](Tape& t, const std::vector<Var>&, const std::vector<RVar>& rs) {
        return t.rsum(t.rsqrt(rs[0]));
      },
      {}, {pos});

  check_gradients(
      [](Tape& t, const std::vector<Var>&, const std::vector<RVar>& rs) {
        return t.rsum(t.rlincomb2(t.rsum(t.rcos(rs[0])), t.rsum(t.rsin(rs[0])), 1.0, 1.0));
      },
      {}, {rrand(2, 3, rng)});
}

TEST_CASE("guarded logarithm") {
  Rng rng(47);
  RMat smooth = rrand(2, 3, rng).cwiseAbs();
  smooth.array() += 0.5;
  check_gradients(
      [](Tape& t, const std::vector<Var>&, const std::vector<RVar>& rs) {
        return t.rsum(t.rlog_guard(rs[0], 1e-6));
      },
      {}, {smooth});

  // Entries below the guard clamp to log(guard) and carry no gradient.
  RMat clamped(1, 2);
  clamped << 1e-9, 0.8;
  Tape t;
  RVar a = t.rleaf(clamped);
  RVar l = t.rlog_guard(a, 1e-3);
  CHECK(t.rvalue(l)(0, 0) == doctest::Approx(std::log(1e-3)));
  CHECK(t.rvalue(l)(0, 1) == doctest::Approx(std::log(0.8)));
  t.seed(t.rsum(l), 1.0);
  t.backward();
  CHECK(t.rgrad(a)(0, 0) == 0.0);
  CHECK(t.rgrad(a)(0, 1) == doctest::Approx(1.0 / 0.8));
}

TEST_CASE("elementwise minimum with a constant") {
  RMat v(2, 3);
  v << -0.5, 0.3, 0.2, 0.7, -1.1, 0.05;
  check_gradients(
      [](Tape& t, const std::vector<Var>&, const std::vector<RVar>& rs) {
        return t.rsum(t.rmin_const(rs[0], 0.1));
      },
      {}, {v});
  Tape t;
  RVar a = t.rleaf(v);
  RVar m = t.rmin_const(a, 0.1);
  CHECK(t.rvalue(m)(0, 1) == doctest::Approx(0.1));
  CHECK(t.rvalue(m)(1, 2) == doctest::Approx(0.05));
}

TEST_CASE("softmax, blocks, gathers, log-sum-exp") {
  Rng rng(53);
  RMat W = rrand(2, 3, rng);
  RMat Wc = rrand(2, 1, rng);

  check_gradients(
      [W](Tape& t, const std::vector<Var>&, const std::vector<RVar>& rs) {
        return t.wsum(t.rsoftmax(rs[0]), &W);
      },
      {}, {rrand(2, 3, rng)});

  check_gradients(
      [](Tape& t, const std::vector<Var>&, const std::vector<RVar>& rs) {
        return t.rsum(t.rblock(rs[0], 0, 1, 2, 2));
      },
      {}, {rrand(2, 3, rng)});

  check_gradients(
      [Wc](Tape& t, const std::vector<Var>&, const std::vector<RVar>& rs) {
        return t.wsum(t.rlse_rows(rs[0]), &Wc);
      },
      {}, {rrand(2, 3, rng)});

  check_gradients(
      [Wc](Tape& t, const std::vector<Var>&, const std::vector<RVar>& rs) {
        return t.wsum(t.rgather_rows(rs[0], {2, 0}), &Wc);
      },
      {}, {rrand(2, 3, rng)});

  // Softmax is shift-invariant and stays finite for huge inputs.
  Tape t;
  RMat big(1, 3);
  big << 1e6, 1e6 - 1.0, 1e6 - 2.0;
  RVar sm = t.rsoftmax(t.rleaf(big));
  CHECK(t.rvalue(sm).sum() == doctest::Approx(1.0));
  CHECK(std::isfinite(t.rvalue(sm).maxCoeff()));

  RMat rows(2, 3);
  rows << 0.1, -0.4, 0.8, 2.0, 1.0, 0.0;
  RVar lse = t.rlse_rows(t.rleaf(rows));
  for (int r = 0; r < 2; ++r)
    CHECK(t.rvalue(lse)(r, 0) == doctest::Approx(std::log(rows.row(r).array().exp().sum())));
}

TEST_CASE("real linear maps") {
  Rng rng(59);
  RMat M = rrand(4, 2, rng);
  RMat W43 = rrand(4, 3, rng);
  RMat W34 = rrand(3, 4, rng);
  RVec row = rrand(4, 1, rng).col(0);

  check_gradients(
      [M, W43](Tape& t, const std::vector<Var>&, const std::vector<RVar>& rs) {
        return t.wsum(t.rlinmap(&M, rs[0], -0.8), &W43);
      },
      {}, {rrand(2, 3, rng)});

  check_gradients(
      [row, W34](Tape& t, const std::vector<Var>&, const std::vector<RVar>& rs) {
        return t.wsum(t.router(rs[0], row), &W34);
      },
      {}, {rrand(3, 1, rng)});
}

TEST_CASE("unit phasor forward values") {
  Tape t;
  RMat th(1, 2);
  th << 0.0, kPi / 2;
  Var p = t.unit_phasor(t.rleaf(th));
  CHECK(std::abs(t.value(p)(0, 0) - cplx(1.0, 0.0)) < 1e-15);
  CHECK(std::abs(t.value(p)(0, 1) - cplx(0.0, 1.0)) < 1e-15);
}

TEST_CASE("two-tape chaining matches a single tape") {
  Rng rng(61);
  CMat C = crand(3, 2, rng);
  CMat D = crand(3, 4, rng);
  RMat W = rrand(3, 4, rng);
  CMat x0 = crand(2, 3, rng);

  Tape t;
  Var x = t.leaf(x0);
  Var z = t.matmul_c(t.cmatmul(&C, x), &D);
  RVar loss = t.wsum(t.magsq(z), &W);
  t.seed(loss, 1.0);
  t.backward();
  CMat want = t.grad(x);
  double loss_want = t.rvalue(loss)(0, 0);

  Tape t1;
  Var x1 = t1.leaf(x0);
  Var y1 = t1.cmatmul(&C, x1);
  Tape t2;
  Var yl = t2.leaf(t1.value(y1));
  RVar loss2 = t2.wsum(t2.magsq(t2.matmul_c(yl, &D)), &W);
  t2.seed(loss2, 1.0);
  t2.backward();
  t1.seed_cgrad(y1, t2.grad(yl));
  t1.backward();

  CHECK(t2.rvalue(loss2)(0, 0) == doctest::Approx(loss_want));
  CHECK((t1.grad(x1) - want).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("unused leaves end with zero gradients of the right shape") {
  Tape t;
  Var used = t.leaf(CMat::Ones(2, 2));
  Var unused = t.leaf(CMat::Ones(2, 3));
  RVar loss = t.rsum(t.magsq(used));
  t.seed(loss, 1.0);
  t.backward();
  CHECK(t.grad(unused).rows() == 2);
  CHECK(t.grad(unused).cols() == 3);
  CHECK(t.grad(unused).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("tape guards") {
  Tape t;
  Var a = t.leaf(CMat::Ones(2, 2));
  RVar m = t.magsq(a);
  CHECK_THROWS(t.seed(m, 1.0));  // not a scalar
  RVar loss = t.rsum(m);
  CHECK_THROWS(t.grad(a));  // backward has not run
  t.seed(loss, 1.0);
  t.backward();
  CHECK_THROWS(t.backward());

  Tape t2;
  Var x = t2.leaf(CMat::Ones(2, 2));
  Var y = t2.leaf(CMat::Ones(3, 2));
  CHECK_THROWS(t2.add(x, y));
  CHECK_THROWS(t2.leaf(CMat()));
}

}  // TEST_SUITE
