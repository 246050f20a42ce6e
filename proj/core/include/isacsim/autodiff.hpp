#ifndef ISACSIM_AUTODIFF_HPP
#define ISACSIM_AUTODIFF_HPP

#include <deque>
#include <functional>
#include <vector>

#include "isacsim/types.hpp"

namespace isac {
namespace ad {

// Reverse-mode tape over dense complex and real matrices.
//
// Gradient convention for complex nodes follows the Wirtinger form
// g = dL/dRe + j dL/dIm = 2 dL/dz*, so a real-valued objective feeding a
// complex leaf leaves its full gradient in g and a real leaf's derivative is
// just the (real) stored gradient. Matrix constants passed to ops by pointer
// must outlive backward().

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

struct RVar {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Tape {
 public:
  Tape() = default;
  // Backward closures capture the tape address, so it must not move.
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(const CMat& value);
  RVar rleaf(const RMat& value);

  // Complex-valued ops.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var add_const(Var a, const CMat* c);
  Var scale(Var a, cplx c);
  // s is 1x1; result is value(s) * (*c).
  Var smul_const(Var s, const CMat* c);
  Var cmatmul(const CMat* a, Var x);
  Var matmul_c(Var x, const CMat* b);
  Var matmul(Var a, Var b);
  Var conj(Var a);
  Var transpose(Var a);
  Var adjoint(Var a);
  Var cmul_const(Var a, const CMat* c);
  // Solves value(g) w = value(b) for w; g must be square.
  Var solve(Var g, Var b);
  // Elementwise exp(j theta) from a real angle matrix.
  Var unit_phasor(RVar theta);
  // g + coeff * value(s) * I with s a real 1x1 node.
  Var add_scaled_identity(Var g, RVar s, double coeff);
  // v / value(s) with s a real positive 1x1 node.
  Var div_by_rscalar(Var v, RVar s);

  // Complex-to-real bridges.
  RVar magsq(Var a);
  RVar norm2(Var a);
  RVar rtrace_re(Var a);

  // Real-valued ops.
  RVar rblock(RVar a, int r0, int c0, int rows, int cols);
  RVar rsoftmax(RVar a);
  RVar wsum(RVar a, const RMat* w);
  RVar rsum(RVar a);
  RVar raffine(RVar a, double m, double c);
  RVar rlincomb2(RVar a, RVar b, double ca, double cb);
  RVar rmul(RVar a, RVar b);
  RVar rsqrt(RVar a);
  RVar rcos(RVar a);
  RVar rsin(RVar a);
  RVar rlog_guard(RVar a, double guard);
  RVar rmin_const(RVar a, double c);
  RVar rlse_rows(RVar a);
  RVar rgather_rows(RVar a, std::vector<int> idx);
  // scale * (*a) * x for a real column/matrix x.
  RVar rlinmap(const RMat* a, RVar x, double scale);
  // Outer product value(x) * row^T for a real column x.
  RVar router(RVar x, RVec row);

  // References stay valid as long as the tape does.
  const CMat& value(Var v) const;
  const RMat& rvalue(RVar v) const;

  void seed(RVar loss, double s);
  /// Injects an externally accumulated gradient (same Wirtinger convention)
  /// before the sweep, e.g. when chaining two tapes.
  void seed_cgrad(Var v, const CMat& g);
  void backward();

  const CMat& grad(Var v) const;
  const RMat& rgrad(RVar v) const;

  int size() const { return static_cast<int>(order_.size()); }

 private:
  struct CNode {
    CMat value;
    CMat grad;
    bool seeded = false;
  };
  struct RNode {
    RMat value;
    RMat grad;
    bool seeded = false;
  };

  CNode& cnode(Var v);
  const CNode& cnode(Var v) const;
  RNode& rnode(RVar v);
  const RNode& rnode(RVar v) const;
  CMat& cacc(Var v);
  RMat& racc(RVar v);
  Var new_cnode(CMat value);
  RVar new_rnode(RMat value);
  void push_back_fn(std::function<void()> fn);

  // Deques so references from value()/rvalue() stay valid while nodes are
  // still being added.
  std::deque<CNode> cnodes_;
  std::deque<RNode> rnodes_;
  // Backward functions in creation order; entries may be empty for leaves.
  std::vector<std::function<void()>> order_;
  bool ran_backward_ = false;
};

}  // namespace ad
}  // namespace isac

#endif
