#include "ibrl/tape.hpp"

#include <cmath>

namespace ibrl::ad {

namespace {

double stable_softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

const Matrix& Var::value() const { return tape_->value_of(idx_); }

double Var::scalar() const {
  const Matrix& v = value();
  require(v.size() == 1, "Var::scalar: node is not 1x1");
  return v(0, 0);
}

Tape::Node& Tape::fresh(Op op) {
  if (used_ == nodes_.size()) nodes_.emplace_back();
  Node& node = nodes_[used_];
  last_index_ = static_cast<int>(used_);
  ++used_;
  node.op = op;
  node.a = node.b = -1;
  node.c0 = 0.0;
  node.i0 = node.i1 = 0;
  node.list.clear();
  node.weights.clear();
  node.seeded = false;
  node.needs_grad = false;
  return node;
}

Var Tape::finish(Node& node, int idx) {
  if (node.a >= 0) node.needs_grad |= nodes_[node.a].needs_grad;
  if (node.b >= 0) node.needs_grad |= nodes_[node.b].needs_grad;
  for (int p : node.list) node.needs_grad |= nodes_[p].needs_grad;
  return Var(this, idx);
}

Var Tape::constant(Matrix value) {
  Node& n = fresh(Op::kConstant);
  n.value = std::move(value);
  return finish(n, last_index_);
}

Var Tape::constant(double value) {
  Node& n = fresh(Op::kConstant);
  n.value.resize(1, 1);
  n.value(0, 0) = value;
  return finish(n, last_index_);
}

Var Tape::param(Matrix value) {
  Node& n = fresh(Op::kParam);
  n.value = std::move(value);
  n.needs_grad = true;
  return Var(this, last_index_);
}

Var Tape::add(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          "add: shape mismatch");
  Node& n = fresh(Op::kAdd);
  n.a = a.index();
  n.b = b.index();
  n.value = nodes_[n.a].value + nodes_[n.b].value;
  return finish(n, last_index_);
}

Var Tape::sub(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          "sub: shape mismatch");
  Node& n = fresh(Op::kSub);
  n.a = a.index();
  n.b = b.index();
  n.value = nodes_[n.a].value - nodes_[n.b].value;
  return finish(n, last_index_);
}

Var Tape::scale(Var a, double c) {
  Node& n = fresh(Op::kScale);
  n.a = a.index();
  n.c0 = c;
  n.value = c * nodes_[n.a].value;
  return finish(n, last_index_);
}

Var Tape::add_const(Var a, double c) {
  Node& n = fresh(Op::kAddConst);
  n.a = a.index();
  n.c0 = c;
  n.value = nodes_[n.a].value.array() + c;
  return finish(n, last_index_);
}

Var Tape::cmul(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          "cmul: shape mismatch");
  Node& n = fresh(Op::kCMul);
  n.a = a.index();
  n.b = b.index();
  n.value = nodes_[n.a].value.array() * nodes_[n.b].value.array();
  return finish(n, last_index_);
}

Var Tape::cdiv(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          "cdiv: shape mismatch");
  Node& n = fresh(Op::kCDiv);
  n.a = a.index();
  n.b = b.index();
  n.value = nodes_[n.a].value.array() / nodes_[n.b].value.array();
  return finish(n, last_index_);
}

Var Tape::cmax(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          "cmax: shape mismatch");
  Node& n = fresh(Op::kCMax);
  n.a = a.index();
  n.b = b.index();
  n.value = nodes_[n.a].value.cwiseMax(nodes_[n.b].value);
  return finish(n, last_index_);
}

Var Tape::cmin(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          "cmin: shape mismatch");
  Node& n = fresh(Op::kCMin);
  n.a = a.index();
  n.b = b.index();
  n.value = nodes_[n.a].value.cwiseMin(nodes_[n.b].value);
  return finish(n, last_index_);
}

Var Tape::matmul(Var a, Var b) {
  require(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  Node& n = fresh(Op::kMatMul);
  n.a = a.index();
  n.b = b.index();
  n.value.resize(nodes_[n.a].value.rows(), nodes_[n.b].value.cols());
  n.value.noalias() = nodes_[n.a].value * nodes_[n.b].value;
  return finish(n, last_index_);
}

Var Tape::colwise_add(Var a, Var b) {
  require(b.cols() == 1 && a.rows() == b.rows(),
          "colwise_add: expected column vector matching matrix rows");
  Node& n = fresh(Op::kColwiseAdd);
  n.a = a.index();
  n.b = b.index();
  n.value = nodes_[n.a].value.colwise() + nodes_[n.b].value.col(0);
  return finish(n, last_index_);
}

Var Tape::tanh(Var a) {
  Node& n = fresh(Op::kTanh);
  n.a = a.index();
  n.value = nodes_[n.a].value.array().tanh();
  return finish(n, last_index_);
}

Var Tape::exp(Var a) {
  Node& n = fresh(Op::kExp);
  n.a = a.index();
  n.value = nodes_[n.a].value.array().exp();
  return finish(n, last_index_);
}

Var Tape::log(Var a) {
  Node& n = fresh(Op::kLog);
  n.a = a.index();
  n.value = nodes_[n.a].value.array().log();
  return finish(n, last_index_);
}

Var Tape::sqrt(Var a) {
  Node& n = fresh(Op::kSqrt);
  n.a = a.index();
  n.value = nodes_[n.a].value.array().sqrt();
  return finish(n, last_index_);
}

Var Tape::square(Var a) {
  Node& n = fresh(Op::kSquare);
  n.a = a.index();
  n.value = nodes_[n.a].value.array().square();
  return finish(n, last_index_);
}

Var Tape::softplus(Var a) {
  Node& n = fresh(Op::kSoftplus);
  n.a = a.index();
  n.value = nodes_[n.a].value.unaryExpr([](double x) {
    return stable_softplus(x);
  });
  return finish(n, last_index_);
}

Var Tape::max_zero(Var a) {
  Node& n = fresh(Op::kMaxZero);
  n.a = a.index();
  n.value = nodes_[n.a].value.cwiseMax(0.0);
  return finish(n, last_index_);
}

Var Tape::abs(Var a) {
  Node& n = fresh(Op::kAbs);
  n.a = a.index();
  n.value = nodes_[n.a].value.cwiseAbs();
  return finish(n, last_index_);
}

Var Tape::sum(Var a) {
  Node& n = fresh(Op::kSum);
  n.a = a.index();
  n.value.resize(1, 1);
  n.value(0, 0) = nodes_[n.a].value.sum();
  return finish(n, last_index_);
}

Var Tape::mean(Var a) {
  Node& n = fresh(Op::kMean);
  n.a = a.index();
  n.value.resize(1, 1);
  n.value(0, 0) = nodes_[n.a].value.mean();
  return finish(n, last_index_);
}

Var Tape::dot(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          "dot: shape mismatch");
  Node& n = fresh(Op::kDot);
  n.a = a.index();
  n.b = b.index();
  n.value.resize(1, 1);
  n.value(0, 0) =
      (nodes_[n.a].value.array() * nodes_[n.b].value.array()).sum();
  return finish(n, last_index_);
}

Var Tape::norm_l2(Var a) {
  Node& n = fresh(Op::kNormL2);
  n.a = a.index();
  n.value.resize(1, 1);
  n.value(0, 0) = nodes_[n.a].value.norm();
  return finish(n, last_index_);
}

Var Tape::norm_l1(Var a) {
  Node& n = fresh(Op::kNormL1);
  n.a = a.index();
  n.value.resize(1, 1);
  n.value(0, 0) = nodes_[n.a].value.cwiseAbs().sum();
  return finish(n, last_index_);
}

Var Tape::slice_rows(Var a, int start, int len) {
  require(start >= 0 && len >= 0 && start + len <= a.rows(),
          "slice_rows: range out of bounds");
  Node& n = fresh(Op::kSliceRows);
  n.a = a.index();
  n.i0 = start;
  n.i1 = len;
  n.value = nodes_[n.a].value.middleRows(start, len);
  return finish(n, last_index_);
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_rows: empty input");
  Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    require(p.cols() == cols, "concat_rows: column count mismatch");
    rows += p.rows();
  }
  Node& n = fresh(Op::kConcatRows);
  n.list.reserve(parts.size());
  for (const Var& p : parts) n.list.push_back(p.index());
  n.value.resize(rows, cols);
  Eigen::Index at = 0;
  for (int idx : n.list) {
    const Matrix& v = nodes_[idx].value;
    n.value.middleRows(at, v.rows()) = v;
    at += v.rows();
  }
  return finish(n, last_index_);
}

Var Tape::weighted_sum(const std::vector<Var>& terms,
                       const std::vector<double>& weights) {
  require(!terms.empty(), "weighted_sum: empty input");
  require(terms.size() == weights.size(),
          "weighted_sum: terms/weights length mismatch");
  Node& n = fresh(Op::kWeightedSum);
  n.list.reserve(terms.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    require(terms[i].size() == 1, "weighted_sum: inputs must be scalars");
    n.list.push_back(terms[i].index());
    acc += weights[i] * nodes_[terms[i].index()].value(0, 0);
  }
  n.weights = weights;
  n.value.resize(1, 1);
  n.value(0, 0) = acc;
  return finish(n, last_index_);
}

void Tape::seed_into(Node& parent, const Matrix& contribution) {
  if (!parent.seeded) {
    parent.adjoint.resize(parent.value.rows(), parent.value.cols());
    parent.adjoint.setZero();
    parent.seeded = true;
  }
  parent.adjoint += contribution;
}

void Tape::propagate(const Node& node) {
  const Matrix& g = node.adjoint;
  Node* pa = node.a >= 0 ? &nodes_[node.a] : nullptr;
  Node* pb = node.b >= 0 ? &nodes_[node.b] : nullptr;
  const bool ga = pa != nullptr && pa->needs_grad;
  const bool gb = pb != nullptr && pb->needs_grad;

  switch (node.op) {
    case Op::kConstant:
    case Op::kParam:
      break;
    case Op::kAdd:
      if (ga) seed_into(*pa, g);
      if (gb) seed_into(*pb, g);
      break;
    case Op::kSub:
      if (ga) seed_into(*pa, g);
      if (gb) seed_into(*pb, -g);
      break;
    case Op::kScale:
      if (ga) seed_into(*pa, node.c0 * g);
      break;
    case Op::kAddConst:
      if (ga) seed_into(*pa, g);
      break;
    case Op::kCMul:
      if (ga) seed_into(*pa, g.cwiseProduct(pb->value));
      if (gb) seed_into(*pb, g.cwiseProduct(pa->value));
      break;
    case Op::kCDiv:
      if (ga) seed_into(*pa, g.cwiseQuotient(pb->value));
      if (gb)
        seed_into(*pb, -(g.array() * pa->value.array() /
                         pb->value.array().square())
                            .matrix());
      break;
    case Op::kCMax:
      if (ga)
        seed_into(*pa, (pa->value.array() >= pb->value.array())
                           .select(g.array(), 0.0)
                           .matrix());
      if (gb)
        seed_into(*pb, (pa->value.array() < pb->value.array())
                           .select(g.array(), 0.0)
                           .matrix());
      break;
    case Op::kCMin:
      if (ga)
        seed_into(*pa, (pa->value.array() <= pb->value.array())
                           .select(g.array(), 0.0)
                           .matrix());
      if (gb)
        seed_into(*pb, (pa->value.array() > pb->value.array())
                           .select(g.array(), 0.0)
                           .matrix());
      break;
    case Op::kMatMul:
      if (ga) seed_into(*pa, g * pb->value.transpose());
      if (gb) seed_into(*pb, pa->value.transpose() * g);
      break;
    case Op::kColwiseAdd:
      if (ga) seed_into(*pa, g);
      if (gb) seed_into(*pb, g.rowwise().sum());
      break;
    case Op::kTanh:
      if (ga) seed_into(*pa, (g.array() * (1.0 - node.value.array().square())).matrix());
      break;
    case Op::kExp:
      if (ga) seed_into(*pa, g.cwiseProduct(node.value));
      break;
    case Op::kLog:
      if (ga) seed_into(*pa, g.cwiseQuotient(pa->value));
      break;
    case Op::kSqrt:
      if (ga) seed_into(*pa, (g.array() / (2.0 * node.value.array())).matrix());
      break;
    case Op::kSquare:
      if (ga) seed_into(*pa, (2.0 * g.array() * pa->value.array()).matrix());
      break;
    case Op::kSoftplus:
      if (ga)
        seed_into(*pa, (g.array() /
                        (1.0 + (-pa->value.array()).exp()))
                           .matrix());
      break;
    case Op::kMaxZero:
      if (ga)
        seed_into(*pa,
                  (pa->value.array() > 0.0).select(g.array(), 0.0).matrix());
      break;
    case Op::kAbs:
      if (ga)
        seed_into(*pa, (g.array() * pa->value.array().sign()).matrix());
      break;
    case Op::kSum:
      if (ga)
        seed_into(*pa, Matrix::Constant(pa->value.rows(), pa->value.cols(),
                                        g(0, 0)));
      break;
    case Op::kMean:
      if (ga)
        seed_into(*pa, Matrix::Constant(pa->value.rows(), pa->value.cols(),
                                        g(0, 0) / pa->value.size()));
      break;
    case Op::kDot:
      if (ga) seed_into(*pa, g(0, 0) * pb->value);
      if (gb) seed_into(*pb, g(0, 0) * pa->value);
      break;
    case Op::kNormL2: {
      const double nv = node.value(0, 0);
      if (ga && nv > 0.0) seed_into(*pa, (g(0, 0) / nv) * pa->value);
      break;
    }
    case Op::kNormL1:
      if (ga)
        seed_into(*pa, (g(0, 0) * pa->value.array().sign()).matrix());
      break;
    case Op::kSliceRows:
      if (ga) {
        if (!pa->seeded) {
          pa->adjoint.resize(pa->value.rows(), pa->value.cols());
          pa->adjoint.setZero();
          pa->seeded = true;
        }
        pa->adjoint.middleRows(node.i0, node.i1) += g;
      }
      break;
    case Op::kConcatRows: {
      Eigen::Index at = 0;
      for (int idx : node.list) {
        Node& p = nodes_[idx];
        if (p.needs_grad) {
          if (!p.seeded) {
            p.adjoint.resize(p.value.rows(), p.value.cols());
            p.adjoint.setZero();
            p.seeded = true;
          }
          p.adjoint += g.middleRows(at, p.value.rows());
        }
        at += p.value.rows();
      }
      break;
    }
    case Op::kWeightedSum: {
      for (std::size_t i = 0; i < node.list.size(); ++i) {
        Node& p = nodes_[node.list[i]];
        if (p.needs_grad) {
          Matrix contrib(1, 1);
          contrib(0, 0) = node.weights[i] * g(0, 0);
          seed_into(p, contrib);
        }
      }
      break;
    }
  }
}

void Tape::backward(Var root) {
  require(root.valid() && root.tape() == this, "backward: foreign root");
  require(root.size() == 1, "backward: root must be a scalar");
  const int r = root.index();
  for (int i = 0; i <= r; ++i) nodes_[i].seeded = false;
  Node& root_node = nodes_[r];
  root_node.adjoint.resize(1, 1);
  root_node.adjoint(0, 0) = 1.0;
  root_node.seeded = true;

  visits_ = 0;
  for (int i = r; i >= 0; --i) {
    Node& node = nodes_[i];
    if (!node.seeded || !node.needs_grad) continue;
    ++visits_;
    propagate(node);
  }
}

Matrix Tape::adjoint(Var v) const {
  const Node& node = nodes_[v.index()];
  if (!node.seeded) return Matrix::Zero(node.value.rows(), node.value.cols());
  return node.adjoint;
}

Vector Tape::gradient(const std::vector<Var>& params) const {
  Eigen::Index total = 0;
  for (const Var& p : params) total += p.size();
  Vector grad(total);
  Eigen::Index at = 0;
  for (const Var& p : params) {
    const Node& node = nodes_[p.index()];
    if (node.seeded) {
      grad.segment(at, node.value.size()) =
          Eigen::Map<const Vector>(node.adjoint.data(), node.adjoint.size());
    } else {
      grad.segment(at, node.value.size()).setZero();
    }
    at += node.value.size();
  }
  return grad;
}

Vector backward_grad(Tape& tape, Var root, const std::vector<Var>& params) {
  require(root.valid(), "backward_grad: invalid root");
  require(root.size() == 1, "backward_grad: loss root must be a scalar");
  tape.backward(root);
  return tape.gradient(params);
}

}  // namespace ibrl::ad
