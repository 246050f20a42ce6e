#include "isacsim/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

#include <Eigen/LU>

namespace isac {
namespace ad {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

Tape::CNode& Tape::cnode(Var v) {
  require(v.id >= 0 && v.id < static_cast<int>(cnodes_.size()), "tape: bad complex node id");
  return cnodes_[v.id];
}

const Tape::CNode& Tape::cnode(Var v) const {
  require(v.id >= 0 && v.id < static_cast<int>(cnodes_.size()), "tape: bad complex node id");
  return cnodes_[v.id];
}

Tape::RNode& Tape::rnode(RVar v) {
  require(v.id >= 0 && v.id < static_cast<int>(rnodes_.size()), "tape: bad real node id");
  return rnodes_[v.id];
}

const Tape::RNode& Tape::rnode(RVar v) const {
  require(v.id >= 0 && v.id < static_cast<int>(rnodes_.size()), "tape: bad real node id");
  return rnodes_[v.id];
}

CMat& Tape::cacc(Var v) {
  CNode& n = cnode(v);
  if (n.grad.size() == 0) n.grad = CMat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

RMat& Tape::racc(RVar v) {
  RNode& n = rnode(v);
  if (n.grad.size() == 0) n.grad = RMat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Var Tape::new_cnode(CMat value) {
  require(value.size() > 0, "tape: empty value");
  cnodes_.push_back(CNode{std::move(value), CMat(), false});
  return Var{static_cast<int>(cnodes_.size()) - 1};
}

RVar Tape::new_rnode(RMat value) {
  require(value.size() > 0, "tape: empty value");
  rnodes_.push_back(RNode{std::move(value), RMat(), false});
  return RVar{static_cast<int>(rnodes_.size()) - 1};
}

void Tape::push_back_fn(std::function<void()> fn) { order_.push_back(std::move(fn)); }

Var Tape::leaf(const CMat& value) {
  Var v = new_cnode(value);
  push_back_fn(nullptr);
  return v;
}

RVar Tape::rleaf(const RMat& value) {
  RVar v = new_rnode(value);
  push_back_fn(nullptr);
  return v;
}

Var Tape::add(Var a, Var b) {
  const CMat& av = cnode(a).value;
  const CMat& bv = cnode(b).value;
  require(av.rows() == bv.rows() && av.cols() == bv.cols(), "add: shape mismatch");
  Var w = new_cnode(av + bv);
  push_back_fn([this, a, b, w] {
    const CMat& g = cnode(w).grad;
    cacc(a) += g;
    cacc(b) += g;
  });
  return w;
}

Var Tape::sub(Var a, Var b) {
  const CMat& av = cnode(a).value;
  const CMat& bv = cnode(b).value;
  require(av.rows() == bv.rows() && av.cols() == bv.cols(), "sub: shape mismatch");
  Var w = new_cnode(av - bv);
  push_back_fn([this, a, b, w] {
    const CMat& g = cnode(w).grad;
    cacc(a) += g;
    cacc(b) -= g;
  });
  return w;
}

Var Tape::add_const(Var a, const CMat* c) {
  const CMat& av = cnode(a).value;
  require(c && av.rows() == c->rows() && av.cols() == c->cols(), "add_const: shape mismatch");
  Var w = new_cnode(av + *c);
  push_back_fn([this, a, w] { cacc(a) += cnode(w).grad; });
  return w;
}

Var Tape::scale(Var a, cplx c) {
  Var w = new_cnode(c * cnode(a).value);
  push_back_fn([this, a, w, c] { cacc(a) += std::conj(c) * cnode(w).grad; });
  return w;
}

Var Tape::smul_const(Var s, const CMat* c) {
  const CMat& sv = cnode(s).value;
  require(sv.rows() == 1 && sv.cols() == 1, "smul_const: scalar operand must be 1x1");
  require(c != nullptr, "smul_const: null constant");
  Var w = new_cnode(sv(0, 0) * (*c));
  push_back_fn([this, s, w, c] {
    cacc(s)(0, 0) += (cnode(w).grad.array() * c->array().conjugate()).sum();
  });
  return w;
}

Var Tape::cmatmul(const CMat* a, Var x) {
  require(a != nullptr, "cmatmul: null constant");
  const CMat& xv = cnode(x).value;
  require(a->cols() == xv.rows(), "cmatmul: inner dimension mismatch");
  Var w = new_cnode(*a * xv);
  push_back_fn([this, a, x, w] { cacc(x).noalias() += a->adjoint() * cnode(w).grad; });
  return w;
}

Var Tape::matmul_c(Var x, const CMat* b) {
  require(b != nullptr, "matmul_c: null constant");
  const CMat& xv = cnode(x).value;
  require(xv.cols() == b->rows(), "matmul_c: inner dimension mismatch");
  Var w = new_cnode(xv * (*b));
  push_back_fn([this, x, b, w] { cacc(x).noalias() += cnode(w).grad * b->adjoint(); });
  return w;
}

Var Tape::matmul(Var a, Var b) {
  const CMat& av = cnode(a).value;
  const CMat& bv = cnode(b).value;
  require(av.cols() == bv.rows(), "matmul: inner dimension mismatch");
  Var w = new_cnode(av * bv);
  push_back_fn([this, a, b, w] {
    const CMat& g = cnode(w).grad;
    cacc(a).noalias() += g * cnode(b).value.adjoint();
    cacc(b).noalias() += cnode(a).value.adjoint() * g;
  });
  return w;
}

Var Tape::conj(Var a) {
  Var w = new_cnode(cnode(a).value.conjugate());
  push_back_fn([this, a, w] { cacc(a) += cnode(w).grad.conjugate(); });
  return w;
}

Var Tape::transpose(Var a) {
  Var w = new_cnode(cnode(a).value.transpose());
  push_back_fn([this, a, w] { cacc(a) += cnode(w).grad.transpose(); });
  return w;
}

Var Tape::adjoint(Var a) {
  Var w = new_cnode(cnode(a).value.adjoint());
  push_back_fn([this, a, w] { cacc(a) += cnode(w).grad.adjoint(); });
  return w;
}

Var Tape::cmul_const(Var a, const CMat* c) {
  const CMat& av = cnode(a).value;
  require(c && av.rows() == c->rows() && av.cols() == c->cols(), "cmul_const: shape mismatch");
  Var w = new_cnode(av.cwiseProduct(*c));
  push_back_fn([this, a, c, w] { cacc(a) += cnode(w).grad.cwiseProduct(c->conjugate()); });
  return w;
}

Var Tape::solve(Var g, Var b) {
  const CMat& gv = cnode(g).value;
  const CMat& bv = cnode(b).value;
  require(gv.rows() == gv.cols(), "solve: matrix must be square");
  require(gv.cols() == bv.rows(), "solve: shape mismatch");
  Var w = new_cnode(gv.partialPivLu().solve(bv));
  push_back_fn([this, g, b, w] {
    CMat tmp = cnode(g).value.adjoint().partialPivLu().solve(cnode(w).grad);
    cacc(b) += tmp;
    cacc(g).noalias() -= tmp * cnode(w).value.adjoint();
  });
  return w;
}

Var Tape::unit_phasor(RVar theta) {
  const RMat& tv = rnode(theta).value;
  CMat value(tv.rows(), tv.cols());
  for (Eigen::Index j = 0; j < tv.cols(); ++j)
    for (Eigen::Index i = 0; i < tv.rows(); ++i)
      value(i, j) = cplx(std::cos(tv(i, j)), std::sin(tv(i, j)));
  Var w = new_cnode(std::move(value));
  push_back_fn([this, theta, w] {
    const CNode& n = cnode(w);
    racc(theta) -= (n.value.array() * n.grad.array().conjugate()).imag().matrix();
  });
  return w;
}

Var Tape::add_scaled_identity(Var g, RVar s, double coeff) {
  const CMat& gv = cnode(g).value;
  const RMat& sv = rnode(s).value;
  require(gv.rows() == gv.cols(), "add_scaled_identity: matrix must be square");
  require(sv.rows() == 1 && sv.cols() == 1, "add_scaled_identity: scalar must be 1x1");
  CMat value = gv;
  value.diagonal().array() += coeff * sv(0, 0);
  Var w = new_cnode(std::move(value));
  push_back_fn([this, g, s, coeff, w] {
    const CMat& gr = cnode(w).grad;
    cacc(g) += gr;
    racc(s)(0, 0) += coeff * gr.trace().real();
  });
  return w;
}

Var Tape::div_by_rscalar(Var v, RVar s) {
  const RMat& sv = rnode(s).value;
  require(sv.rows() == 1 && sv.cols() == 1, "div_by_rscalar: scalar must be 1x1");
  double d = sv(0, 0);
  require(std::abs(d) > 1e-300, "div_by_rscalar: scalar too small");
  Var w = new_cnode(cnode(v).value / d);
  push_back_fn([this, v, s, d, w] {
    const CMat& g = cnode(w).grad;
    cacc(v) += g / d;
    racc(s)(0, 0) -= (g.array() * cnode(v).value.array().conjugate()).sum().real() / (d * d);
  });
  return w;
}

RVar Tape::magsq(Var a) {
  RVar w = new_rnode(cnode(a).value.cwiseAbs2());
  push_back_fn([this, a, w] {
    cacc(a).array() += 2.0 * cnode(a).value.array() * rnode(w).grad.array().cast<cplx>();
  });
  return w;
}

RVar Tape::norm2(Var a) {
  double n = cnode(a).value.norm();
  require(n > 1e-300, "norm2: vanishing norm");
  RMat value(1, 1);
  value(0, 0) = n;
  RVar w = new_rnode(std::move(value));
  push_back_fn([this, a, n, w] {
    cacc(a) += (rnode(w).grad(0, 0) / n) * cnode(a).value;
  });
  return w;
}

RVar Tape::rtrace_re(Var a) {
  const CMat& av = cnode(a).value;
  require(av.rows() == av.cols(), "rtrace_re: matrix must be square");
  RMat value(1, 1);
  value(0, 0) = av.trace().real();
  RVar w = new_rnode(std::move(value));
  push_back_fn([this, a, w] {
    cacc(a).diagonal().array() += rnode(w).grad(0, 0);
  });
  return w;
}

RVar Tape::rblock(RVar a, int r0, int c0, int rows, int cols) {
  const RMat& av = rnode(a).value;
  require(r0 >= 0 && c0 >= 0 && rows > 0 && cols > 0 && r0 + rows <= av.rows() &&
              c0 + cols <= av.cols(),
          "rblock: window out of bounds");
  RVar w = new_rnode(av.block(r0, c0, rows, cols));
  push_back_fn([this, a, r0, c0, rows, cols, w] {
    racc(a).block(r0, c0, rows, cols) += rnode(w).grad;
  });
  return w;
}

RVar Tape::rsoftmax(RVar a) {
  const RMat& av = rnode(a).value;
  double mx = av.maxCoeff();
  RMat e = (av.array() - mx).exp();
  e /= e.sum();
  RVar w = new_rnode(std::move(e));
  push_back_fn([this, a, w] {
    const RNode& n = rnode(w);
    double dot = (n.grad.array() * n.value.array()).sum();
    racc(a).array() += n.value.array() * (n.grad.array() - dot);
  });
  return w;
}

RVar Tape::wsum(RVar a, const RMat* wt) {
  const RMat& av = rnode(a).value;
  require(wt && av.rows() == wt->rows() && av.cols() == wt->cols(), "wsum: shape mismatch");
  RMat value(1, 1);
  value(0, 0) = av.cwiseProduct(*wt).sum();
  RVar w = new_rnode(std::move(value));
  push_back_fn([this, a, wt, w] { racc(a) += rnode(w).grad(0, 0) * (*wt); });
  return w;
}

RVar Tape::rsum(RVar a) {
  RMat value(1, 1);
  value(0, 0) = rnode(a).value.sum();
  RVar w = new_rnode(std::move(value));
  push_back_fn([this, a, w] { racc(a).array() += rnode(w).grad(0, 0); });
  return w;
}

RVar Tape::raffine(RVar a, double m, double c) {
  RVar w = new_rnode(m * rnode(a).value.array() + c);
  push_back_fn([this, a, m, w] { racc(a) += m * rnode(w).grad; });
  return w;
}

RVar Tape::rlincomb2(RVar a, RVar b, double ca, double cb) {
  const RMat& av = rnode(a).value;
  const RMat& bv = rnode(b).value;
  require(av.rows() == bv.rows() && av.cols() == bv.cols(), "rlincomb2: shape mismatch");
  RVar w = new_rnode(ca * av + cb * bv);
  push_back_fn([this, a, b, ca, cb, w] {
    const RMat& g = rnode(w).grad;
    racc(a) += ca * g;
    racc(b) += cb * g;
  });
  return w;
}

RVar Tape::rmul(RVar a, RVar b) {
  const RMat& av = rnode(a).value;
  const RMat& bv = rnode(b).value;
  require(av.rows() == bv.rows() && av.cols() == bv.cols(), "rmul: shape mismatch");
  RVar w = new_rnode(av.cwiseProduct(bv));
  push_back_fn([this, a, b, w] {
    const RMat& g = rnode(w).grad;
    racc(a) += g.cwiseProduct(rnode(b).value);
    racc(b) += g.cwiseProduct(rnode(a).value);
  });
  return w;
}

RVar Tape::rsqrt(RVar a) {
  const RMat& av = rnode(a).value;
  require((av.array() >= 0.0).all(), "rsqrt: negative input");
  RVar w = new_rnode(av.array().sqrt());
  push_back_fn([this, a, w] {
    const RNode& n = rnode(w);
    racc(a).array() += n.grad.array() / (2.0 * n.value.array()).max(1e-300);
  });
  return w;
}

RVar Tape::rcos(RVar a) {
  RVar w = new_rnode(rnode(a).value.array().cos());
  push_back_fn([this, a, w] {
    racc(a).array() -= rnode(w).grad.array() * rnode(a).value.array().sin();
  });
  return w;
}

RVar Tape::rsin(RVar a) {
  RVar w = new_rnode(rnode(a).value.array().sin());
  push_back_fn([this, a, w] {
    racc(a).array() += rnode(w).grad.array() * rnode(a).value.array().cos();
  });
  return w;
}

RVar Tape::rlog_guard(RVar a, double guard) {
  require(guard > 0.0, "rlog_guard: guard must be positive");
  const RMat& av = rnode(a).value;
  RVar w = new_rnode(av.array().max(guard).log());
  push_back_fn([this, a, guard, w] {
    const RMat& av2 = rnode(a).value;
    racc(a).array() +=
        (av2.array() > guard).select(rnode(w).grad.array() / av2.array().max(guard), 0.0);
  });
  return w;
}

RVar Tape::rmin_const(RVar a, double c) {
  RVar w = new_rnode(rnode(a).value.array().min(c));
  push_back_fn([this, a, c, w] {
    racc(a).array() +=
        (rnode(a).value.array() < c).select(rnode(w).grad.array(), 0.0);
  });
  return w;
}

RVar Tape::rlse_rows(RVar a) {
  const RMat& av = rnode(a).value;
  RMat value(av.rows(), 1);
  for (Eigen::Index r = 0; r < av.rows(); ++r) {
    double mx = av.row(r).maxCoeff();
    value(r, 0) = mx + std::log((av.row(r).array() - mx).exp().sum());
  }
  RVar w = new_rnode(std::move(value));
  push_back_fn([this, a, w] {
    const RMat& av2 = rnode(a).value;
    const RNode& n = rnode(w);
    RMat& g = racc(a);
    for (Eigen::Index r = 0; r < av2.rows(); ++r)
      g.row(r).array() += n.grad(r, 0) * (av2.row(r).array() - n.value(r, 0)).exp();
  });
  return w;
}

RVar Tape::rgather_rows(RVar a, std::vector<int> idx) {
  const RMat& av = rnode(a).value;
  require(static_cast<Eigen::Index>(idx.size()) == av.rows(), "rgather_rows: index count");
  RMat value(av.rows(), 1);
  for (Eigen::Index r = 0; r < av.rows(); ++r) {
    require(idx[r] >= 0 && idx[r] < av.cols(), "rgather_rows: index out of range");
    value(r, 0) = av(r, idx[r]);
  }
  RVar w = new_rnode(std::move(value));
  push_back_fn([this, a, idx = std::move(idx), w] {
    RMat& g = racc(a);
    const RMat& gw = rnode(w).grad;
    for (Eigen::Index r = 0; r < g.rows(); ++r) g(r, idx[r]) += gw(r, 0);
  });
  return w;
}

RVar Tape::rlinmap(const RMat* a, RVar x, double scale) {
  require(a != nullptr, "rlinmap: null constant");
  const RMat& xv = rnode(x).value;
  require(a->cols() == xv.rows(), "rlinmap: inner dimension mismatch");
  RVar w = new_rnode(scale * (*a) * xv);
  push_back_fn([this, a, x, scale, w] {
    racc(x).noalias() += scale * a->transpose() * rnode(w).grad;
  });
  return w;
}

RVar Tape::router(RVar x, RVec row) {
  const RMat& xv = rnode(x).value;
  require(xv.cols() == 1, "router: operand must be a column");
  RVar w = new_rnode(xv * row.transpose());
  push_back_fn([this, x, row = std::move(row), w] {
    racc(x).noalias() += rnode(w).grad * row;
  });
  return w;
}

const CMat& Tape::value(Var v) const { return cnode(v).value; }

const RMat& Tape::rvalue(RVar v) const { return rnode(v).value; }

void Tape::seed(RVar loss, double s) {
  RNode& n = rnode(loss);
  require(n.value.rows() == 1 && n.value.cols() == 1, "seed: loss must be scalar");
  racc(loss)(0, 0) += s;
  n.seeded = true;
}

void Tape::seed_cgrad(Var v, const CMat& g) {
  const CNode& n = cnode(v);
  require(n.value.rows() == g.rows() && n.value.cols() == g.cols(), "seed_cgrad: shape mismatch");
  cacc(v) += g;
}

void Tape::backward() {
  require(!ran_backward_, "backward: tape already swept");
  ran_backward_ = true;
  for (CNode& n : cnodes_)
    if (n.grad.size() == 0) n.grad = CMat::Zero(n.value.rows(), n.value.cols());
  for (RNode& n : rnodes_)
    if (n.grad.size() == 0) n.grad = RMat::Zero(n.value.rows(), n.value.cols());
  for (auto it = order_.rbegin(); it != order_.rend(); ++it)
    if (*it) (*it)();
}

const CMat& Tape::grad(Var v) const {
  require(ran_backward_, "grad: backward has not run");
  return cnode(v).grad;
}

const RMat& Tape::rgrad(RVar v) const {
  require(ran_backward_, "rgrad: backward has not run");
  return rnode(v).grad;
}

}  // namespace ad
}  // namespace isac
