#pragma once

#include <cstdint>
#include <vector>

#include "ibrl/common.hpp"

namespace ibrl::ad {

// Reverse-mode autodiff on a tape of dense Eigen values. Every node holds a
// matrix; column vectors and 1x1 scalars are the common cases. The tape is
// eager: building an expression computes its value immediately, backward()
// fills adjoints in one reverse sweep.
//
// A tape is confined to one thread. rewind() logically empties the tape while
// keeping node storage, so rebuilding the same graph shape avoids
// reallocation.

enum class Op : std::uint8_t {
  kConstant,
  kParam,
  kAdd,
  kSub,
  kScale,      // c0 * a
  kAddConst,   // a + c0 elementwise
  kCMul,       // elementwise product
  kCDiv,       // elementwise quotient
  kCMax,       // elementwise max, ties route the gradient to the first input
  kCMin,       // elementwise min, ties route the gradient to the first input
  kMatMul,
  kColwiseAdd,  // matrix + column vector broadcast over columns
  kTanh,
  kExp,
  kLog,
  kSqrt,
  kSquare,
  kSoftplus,
  kMaxZero,  // max(x, 0); subgradient at 0 is 0
  kAbs,      // subgradient at 0 is 0
  kSum,
  kMean,
  kDot,
  kNormL2,  // subgradient at the origin is 0
  kNormL1,
  kSliceRows,
  kConcatRows,
  kWeightedSum,  // sum_i w_i * x_i over scalar inputs
};

class Tape;

// Cheap handle to a tape node.
class Var {
 public:
  Var() = default;
  bool valid() const { return tape_ != nullptr; }
  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Eigen::Index size() const { return value().size(); }
  double scalar() const;
  Tape* tape() const { return tape_; }
  int index() const { return idx_; }

 private:
  friend class Tape;
  Var(Tape* tape, int idx) : tape_(tape), idx_(idx) {}
  Tape* tape_ = nullptr;
  int idx_ = -1;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves. Params participate in gradient(), constants do not.
  Var constant(Matrix value);
  Var constant(double value);
  Var param(Matrix value);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var scale(Var a, double c);
  Var neg(Var a) { return scale(a, -1.0); }
  Var add_const(Var a, double c);
  Var cmul(Var a, Var b);
  Var cdiv(Var a, Var b);
  Var cmax(Var a, Var b);
  Var cmin(Var a, Var b);
  Var matmul(Var a, Var b);
  Var colwise_add(Var a, Var b);
  Var tanh(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var sqrt(Var a);
  Var square(Var a);
  Var softplus(Var a);
  Var max_zero(Var a);
  Var abs(Var a);
  Var sum(Var a);
  Var mean(Var a);
  Var dot(Var a, Var b);
  Var norm_l2(Var a);
  Var norm_l1(Var a);
  Var slice_rows(Var a, int start, int len);
  Var concat_rows(const std::vector<Var>& parts);
  Var weighted_sum(const std::vector<Var>& terms,
                   const std::vector<double>& weights);

  // Reverse sweep from a scalar root. Each node at or below the root is
  // processed at most once; nodes that do not feed the root keep an unseeded
  // adjoint and contribute nothing.
  void backward(Var root);

  // Adjoint of a node after backward(); zeros if the node never received one.
  Matrix adjoint(Var v) const;

  // Flat gradient for a list of param nodes, concatenated column-major in the
  // given order. Params the root never touched get zeros.
  Vector gradient(const std::vector<Var>& params) const;

  // Logically empties the tape, keeping node storage for reuse.
  void rewind() { used_ = 0; }

  std::size_t size() const { return used_; }
  std::size_t last_backward_visits() const { return visits_; }

  const Matrix& value_of(int idx) const { return nodes_[idx].value; }

 private:
  struct Node {
    Op op = Op::kConstant;
    int a = -1;
    int b = -1;
    double c0 = 0.0;
    int i0 = 0;
    int i1 = 0;
    std::vector<int> list;
    std::vector<double> weights;
    Matrix value;
    Matrix adjoint;
    bool seeded = false;
    bool needs_grad = false;
  };

  Node& fresh(Op op);
  Var finish(Node& node, int idx);
  int last_index_ = -1;

  void seed_into(Node& parent, const Matrix& contribution);
  void propagate(const Node& node);

  std::vector<Node> nodes_;
  std::size_t used_ = 0;
  std::size_t visits_ = 0;
};

// Free-function spellings so expressions read like the math.
inline Var operator+(Var a, Var b) { return a.tape()->add(a, b); }
inline Var operator-(Var a, Var b) { return a.tape()->sub(a, b); }
inline Var operator-(Var a) { return a.tape()->neg(a); }
inline Var operator*(double c, Var a) { return a.tape()->scale(a, c); }
inline Var operator*(Var a, double c) { return a.tape()->scale(a, c); }
inline Var cmul(Var a, Var b) { return a.tape()->cmul(a, b); }
inline Var cdiv(Var a, Var b) { return a.tape()->cdiv(a, b); }
inline Var cmax(Var a, Var b) { return a.tape()->cmax(a, b); }
inline Var cmin(Var a, Var b) { return a.tape()->cmin(a, b); }
inline Var matmul(Var a, Var b) { return a.tape()->matmul(a, b); }
inline Var tanh(Var a) { return a.tape()->tanh(a); }
inline Var exp(Var a) { return a.tape()->exp(a); }
inline Var log(Var a) { return a.tape()->log(a); }
inline Var sqrt(Var a) { return a.tape()->sqrt(a); }
inline Var square(Var a) { return a.tape()->square(a); }
inline Var softplus(Var a) { return a.tape()->softplus(a); }
inline Var max_zero(Var a) { return a.tape()->max_zero(a); }
inline Var abs(Var a) { return a.tape()->abs(a); }
inline Var sum(Var a) { return a.tape()->sum(a); }
inline Var mean(Var a) { return a.tape()->mean(a); }
inline Var dot(Var a, Var b) { return a.tape()->dot(a, b); }
inline Var norm_l2(Var a) { return a.tape()->norm_l2(a); }
inline Var norm_l1(Var a) { return a.tape()->norm_l1(a); }

// Gradient of a scalar root with respect to a list of param nodes.
// The root must be 1x1.
Vector backward_grad(Tape& tape, Var root, const std::vector<Var>& params);

}  // namespace ibrl::ad
