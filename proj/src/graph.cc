/*
 * Copyright 2026 The milsed Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "milsed/graph.h"

#include <algorithm>
#include <string>

namespace milsed {

Graph& Var::graph() const {
  if (graph_ == nullptr) {
    throw Error("use of an unevaluated Var (no forward pass recorded)");
  }
  return *graph_;
}

const Matrix& Var::value() const { return graph().value(index_); }
const Matrix& Var::grad() const { return graph().grad(index_); }

Var Graph::push(Matrix value, Backprop backprop) {
  if (backward_done_) {
    throw Error("graph: cannot record ops after backward()");
  }
  nodes_.push_back(Node{std::move(value), Matrix(), std::move(backprop), nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::constant(Matrix value) { return push(std::move(value), nullptr); }

Var Graph::parameter(Parameter& param) {
  Var v = push(param.value, nullptr);
  nodes_[v.index()].param = &param;
  return v;
}

void Graph::backward(Var loss) {
  if (!loss.valid()) {
    throw Error("backward called before forward");
  }
  if (&loss.graph() != this) {
    throw Error("backward: loss belongs to a different graph");
  }
  if (backward_done_) {
    throw Error("backward: already run on this graph");
  }
  const Matrix& lv = nodes_[loss.index()].value;
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ShapeError("backward: loss must be scalar (1x1), got " + shape_string(lv));
  }
  const int last = loss.index();
  for (int i = 0; i <= last; ++i) {
    nodes_[i].grad.setZero(nodes_[i].value.rows(), nodes_[i].value.cols());
  }
  nodes_[last].grad(0, 0) = 1.0;
  for (int i = last; i >= 0; --i) {
    if (nodes_[i].backprop) {
      nodes_[i].backprop(*this, i);
    }
  }
  for (int i = 0; i <= last; ++i) {
    Parameter* p = nodes_[i].param;
    if (p == nullptr) {
      continue;
    }
    if (p->grad.rows() != p->value.rows() || p->grad.cols() != p->value.cols()) {
      p->zero_grad();
    }
    p->grad += nodes_[i].grad;
  }
  backward_done_ = true;
}

namespace {

Graph& same_graph(Var a, Var b, const char* op) {
  Graph& g = a.graph();
  if (&b.graph() != &g) {
    throw Error(std::string(op) + ": operands live on different graphs");
  }
  return g;
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                     shape_string(b));
  }
}

void require_row_broadcast(const Matrix& a, const Matrix& row, const char* op) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw ShapeError(std::string(op) + ": expected 1x" + std::to_string(a.cols()) +
                     " row, got " + shape_string(row));
  }
}

void require_nonempty(const Matrix& a, const char* op) {
  if (a.size() == 0) {
    throw ShapeError(std::string(op) + ": empty operand");
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  Graph& g = same_graph(a, b, "matmul");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: shape mismatch " + shape_string(av) + " * " + shape_string(bv));
  }
  const int ai = a.index(), bi = b.index();
  return g.push(av * bv, [ai, bi](Graph& g, int self) {
    const Matrix& up = g.grad(self);
    g.grad_mut(ai).noalias() += up * g.value(bi).transpose();
    g.grad_mut(bi).noalias() += g.value(ai).transpose() * up;
  });
}

Var transpose(Var a) {
  const int ai = a.index();
  return a.graph().push(a.value().transpose(), [ai](Graph& g, int self) {
    g.grad_mut(ai) += g.grad(self).transpose();
  });
}

Var add(Var a, Var b) {
  Graph& g = same_graph(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  const int ai = a.index(), bi = b.index();
  return g.push(a.value() + b.value(), [ai, bi](Graph& g, int self) {
    g.grad_mut(ai) += g.grad(self);
    g.grad_mut(bi) += g.grad(self);
  });
}

Var sub(Var a, Var b) {
  Graph& g = same_graph(a, b, "sub");
  require_same_shape(a.value(), b.value(), "sub");
  const int ai = a.index(), bi = b.index();
  return g.push(a.value() - b.value(), [ai, bi](Graph& g, int self) {
    g.grad_mut(ai) += g.grad(self);
    g.grad_mut(bi) -= g.grad(self);
  });
}

Var cwise_mul(Var a, Var b) {
  Graph& g = same_graph(a, b, "cwise_mul");
  require_same_shape(a.value(), b.value(), "cwise_mul");
  const int ai = a.index(), bi = b.index();
  return g.push(a.value().cwiseProduct(b.value()), [ai, bi](Graph& g, int self) {
    const Matrix& up = g.grad(self);
    g.grad_mut(ai) += up.cwiseProduct(g.value(bi));
    g.grad_mut(bi) += up.cwiseProduct(g.value(ai));
  });
}

Var scale(Var a, double factor) {
  const int ai = a.index();
  return a.graph().push(a.value() * factor, [ai, factor](Graph& g, int self) {
    g.grad_mut(ai) += g.grad(self) * factor;
  });
}

Var add_row(Var a, Var row) {
  Graph& g = same_graph(a, row, "add_row");
  require_row_broadcast(a.value(), row.value(), "add_row");
  const int ai = a.index(), ri = row.index();
  Matrix out = a.value().rowwise() + row.value().row(0);
  return g.push(std::move(out), [ai, ri](Graph& g, int self) {
    const Matrix& up = g.grad(self);
    g.grad_mut(ai) += up;
    g.grad_mut(ri) += up.colwise().sum();
  });
}

Var mul_row(Var a, Var row) {
  Graph& g = same_graph(a, row, "mul_row");
  require_row_broadcast(a.value(), row.value(), "mul_row");
  const int ai = a.index(), ri = row.index();
  Matrix out = a.value().array().rowwise() * row.value().row(0).array();
  return g.push(std::move(out), [ai, ri](Graph& g, int self) {
    const Matrix& up = g.grad(self);
    const Matrix& r = g.value(ri);
    g.grad_mut(ai).array() += up.array().rowwise() * r.row(0).array();
    g.grad_mut(ri) += up.cwiseProduct(g.value(ai)).colwise().sum();
  });
}

Var div_row(Var a, Var row) {
  Graph& g = same_graph(a, row, "div_row");
  require_row_broadcast(a.value(), row.value(), "div_row");
  const int ai = a.index(), ri = row.index();
  Matrix out = a.value().array().rowwise() / row.value().row(0).array();
  return g.push(std::move(out), [ai, ri](Graph& g, int self) {
    const Matrix& up = g.grad(self);
    const Matrix& r = g.value(ri);
    g.grad_mut(ai).array() += up.array().rowwise() / r.row(0).array();
    // d(a/r)/dr = -(a/r)/r
    Matrix t = g.value(self).array().rowwise() / r.row(0).array();
    g.grad_mut(ri) -= up.cwiseProduct(t).colwise().sum();
  });
}

Var sigmoid(Var a) {
  const int ai = a.index();
  Matrix out = a.value().unaryExpr([](double x) { return logistic(x); });
  return a.graph().push(std::move(out), [ai](Graph& g, int self) {
    const Matrix& s = g.value(self);
    g.grad_mut(ai).array() += g.grad(self).array() * s.array() * (1.0 - s.array());
  });
}

Var relu(Var a) {
  const int ai = a.index();
  Matrix out = a.value().cwiseMax(0.0);
  return a.graph().push(std::move(out), [ai](Graph& g, int self) {
    const Matrix& x = g.value(ai);
    g.grad_mut(ai).array() += (x.array() > 0.0).select(g.grad(self).array(), 0.0);
  });
}

Var tanh(Var a) {
  const int ai = a.index();
  Matrix out = a.value().array().tanh().matrix();
  return a.graph().push(std::move(out), [ai](Graph& g, int self) {
    const Matrix& y = g.value(self);
    g.grad_mut(ai).array() += g.grad(self).array() * (1.0 - y.array().square());
  });
}

Var softmax_rows(Var a) {
  const Matrix& x = a.value();
  require_nonempty(x, "softmax_rows");
  Matrix out(x.rows(), x.cols());
  for (Index c = 0; c < x.cols(); ++c) {
    out.col(c) = softmax(x.col(c));
  }
  const int ai = a.index();
  return a.graph().push(std::move(out), [ai](Graph& g, int self) {
    const Matrix& s = g.value(self);
    const Matrix& up = g.grad(self);
    // ds/dx applied column-wise: s * (up - <up, s>)
    RowVector dots = up.cwiseProduct(s).colwise().sum();
    g.grad_mut(ai).array() += s.array() * (up.rowwise() - dots).array();
  });
}

Var max_rows(Var a) {
  const Matrix& x = a.value();
  require_nonempty(x, "max_rows");
  Graph& graph = a.graph();
  Matrix out(1, x.cols());
  std::vector<Index> arg(x.cols());
  for (Index c = 0; c < x.cols(); ++c) {
    Index best = 0;
    for (Index r = 1; r < x.rows(); ++r) {
      if (x(r, c) > x(best, c)) {
        best = r;
      }
    }
    for (Index r = 0; r < x.rows(); ++r) {
      if (r != best && x(best, c) - x(r, c) <= graph.tie_tolerance()) {
        graph.flag_tie();
      }
    }
    arg[c] = best;
    out(0, c) = x(best, c);
  }
  const int ai = a.index();
  return graph.push(std::move(out), [ai, arg = std::move(arg)](Graph& g, int self) {
    const Matrix& up = g.grad(self);
    Matrix& ga = g.grad_mut(ai);
    for (std::size_t c = 0; c < arg.size(); ++c) {
      ga(arg[c], static_cast<Index>(c)) += up(0, static_cast<Index>(c));
    }
  });
}

Var mean_rows(Var a) {
  require_nonempty(a.value(), "mean_rows");
  const int ai = a.index();
  return a.graph().push(a.value().colwise().mean(), [ai](Graph& g, int self) {
    const double n = static_cast<double>(g.value(ai).rows());
    g.grad_mut(ai).rowwise() += g.grad(self).row(0) / n;
  });
}

Var sum_rows(Var a) {
  const int ai = a.index();
  return a.graph().push(a.value().colwise().sum(), [ai](Graph& g, int self) {
    g.grad_mut(ai).rowwise() += g.grad(self).row(0);
  });
}

Var sum_cols(Var a) {
  const int ai = a.index();
  return a.graph().push(a.value().rowwise().sum(), [ai](Graph& g, int self) {
    g.grad_mut(ai).colwise() += g.grad(self).col(0);
  });
}

Var sum_all(Var a) {
  const int ai = a.index();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.graph().push(std::move(out), [ai](Graph& g, int self) {
    g.grad_mut(ai).array() += g.grad(self)(0, 0);
  });
}

Var mean_all(Var a) {
  require_nonempty(a.value(), "mean_all");
  const int ai = a.index();
  Matrix out(1, 1);
  out(0, 0) = a.value().mean();
  return a.graph().push(std::move(out), [ai](Graph& g, int self) {
    g.grad_mut(ai).array() += g.grad(self)(0, 0) / static_cast<double>(g.value(ai).size());
  });
}

Var vcat(std::span<const Var> parts) {
  if (parts.empty()) {
    throw ShapeError("vcat: no operands");
  }
  Graph& g = parts.front().graph();
  const Index cols = parts.front().cols();
  Index rows = 0;
  for (const Var& p : parts) {
    same_graph(parts.front(), p, "vcat");
    if (p.cols() != cols) {
      throw ShapeError("vcat: column mismatch " + shape_string(parts.front().value()) + " vs " +
                       shape_string(p.value()));
    }
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<int> ids;
  Index at = 0;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
    ids.push_back(p.index());
  }
  return g.push(std::move(out), [ids = std::move(ids)](Graph& g, int self) {
    Index at = 0;
    for (int id : ids) {
      const Index n = g.value(id).rows();
      g.grad_mut(id) += g.grad(self).middleRows(at, n);
      at += n;
    }
  });
}

Var row_block(Var a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw ShapeError("row_block: rows [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of " + shape_string(a.value()));
  }
  const int ai = a.index();
  return a.graph().push(a.value().middleRows(start, count),
                        [ai, start, count](Graph& g, int self) {
                          g.grad_mut(ai).middleRows(start, count) += g.grad(self);
                        });
}

Var col_block(Var a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw ShapeError("col_block: cols [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of " + shape_string(a.value()));
  }
  const int ai = a.index();
  return a.graph().push(a.value().middleCols(start, count),
                        [ai, start, count](Graph& g, int self) {
                          g.grad_mut(ai).middleCols(start, count) += g.grad(self);
                        });
}

Var binary_cross_entropy(Var probs, const Matrix& targets, double eps) {
  const Matrix& p = probs.value();
  require_same_shape(p, targets, "binary_cross_entropy");
  require_nonempty(p, "binary_cross_entropy");
  const Matrix clamped = p.cwiseMax(eps).cwiseMin(1.0 - eps);
  const double n = static_cast<double>(p.size());
  Matrix out(1, 1);
  out(0, 0) = -(targets.array() * clamped.array().log() +
                (1.0 - targets.array()) * (1.0 - clamped.array()).log())
                   .sum() /
              n;
  const int pi = probs.index();
  return probs.graph().push(std::move(out), [pi, targets, eps, n](Graph& g, int self) {
    const Matrix& p = g.value(pi);
    const double up = g.grad(self)(0, 0);
    Matrix& gp = g.grad_mut(pi);
    for (Index i = 0; i < p.size(); ++i) {
      const double x = p(i);
      if (x < eps || x > 1.0 - eps) {
        continue;  // clamped: flat
      }
      const double y = targets(i);
      gp(i) += up * (-y / x + (1.0 - y) / (1.0 - x)) / n;
    }
  });
}

Var im2col3x3(Var a, std::span<const Index> lengths, Index bands) {
  const Matrix& x = a.value();
  Index total = 0;
  for (Index t : lengths) {
    if (t < 1) {
      throw ShapeError("im2col3x3: clip length must be >= 1");
    }
    total += t * bands;
  }
  if (bands < 1 || total != x.rows()) {
    throw ShapeError("im2col3x3: " + shape_string(x) + " does not hold the given clips x " +
                     std::to_string(bands) + " bands");
  }
  const Index ch = x.cols();
  // Source row for each (output row, tap), -1 when padded.
  std::vector<Index> src(static_cast<std::size_t>(total) * 9, -1);
  Index base = 0;
  for (Index len : lengths) {
    for (Index t = 0; t < len; ++t) {
      for (Index f = 0; f < bands; ++f) {
        const Index row = base + t * bands + f;
        for (int dt = -1; dt <= 1; ++dt) {
          for (int df = -1; df <= 1; ++df) {
            const Index tt = t + dt, ff = f + df;
            if (tt < 0 || tt >= len || ff < 0 || ff >= bands) {
              continue;
            }
            const int tap = (dt + 1) * 3 + (df + 1);
            src[static_cast<std::size_t>(row * 9 + tap)] = base + tt * bands + ff;
          }
        }
      }
    }
    base += len * bands;
  }
  Matrix out = Matrix::Zero(total, 9 * ch);
  for (Index row = 0; row < total; ++row) {
    for (int tap = 0; tap < 9; ++tap) {
      const Index s = src[static_cast<std::size_t>(row * 9 + tap)];
      if (s >= 0) {
        out.block(row, tap * ch, 1, ch) = x.row(s);
      }
    }
  }
  const int ai = a.index();
  return a.graph().push(std::move(out), [ai, src = std::move(src), ch](Graph& g, int self) {
    const Matrix& up = g.grad(self);
    Matrix& ga = g.grad_mut(ai);
    for (Index row = 0; row < up.rows(); ++row) {
      for (int tap = 0; tap < 9; ++tap) {
        const Index s = src[static_cast<std::size_t>(row * 9 + tap)];
        if (s >= 0) {
          ga.row(s) += up.block(row, tap * ch, 1, ch);
        }
      }
    }
  });
}

Var max_pool_rows(Var a, Index factor) {
  const Matrix& x = a.value();
  if (factor < 1 || x.rows() % factor != 0) {
    throw ShapeError("max_pool_rows: " + std::to_string(x.rows()) +
                     " rows not divisible by pooling factor " + std::to_string(factor));
  }
  Graph& graph = a.graph();
  const Index groups = x.rows() / factor;
  Matrix out(groups, x.cols());
  std::vector<Index> arg(static_cast<std::size_t>(groups * x.cols()));
  for (Index gi = 0; gi < groups; ++gi) {
    for (Index c = 0; c < x.cols(); ++c) {
      Index best = gi * factor;
      for (Index r = best + 1; r < (gi + 1) * factor; ++r) {
        if (x(r, c) > x(best, c)) {
          best = r;
        }
      }
      for (Index r = gi * factor; r < (gi + 1) * factor; ++r) {
        if (r != best && x(best, c) - x(r, c) <= graph.tie_tolerance()) {
          graph.flag_tie();
        }
      }
      arg[static_cast<std::size_t>(gi * x.cols() + c)] = best;
      out(gi, c) = x(best, c);
    }
  }
  const int ai = a.index();
  return graph.push(std::move(out), [ai, arg = std::move(arg)](Graph& g, int self) {
    const Matrix& up = g.grad(self);
    Matrix& ga = g.grad_mut(ai);
    for (Index gi = 0; gi < up.rows(); ++gi) {
      for (Index c = 0; c < up.cols(); ++c) {
        ga(arg[static_cast<std::size_t>(gi * up.cols() + c)], c) += up(gi, c);
      }
    }
  });
}

Var fold_rows(Var a, Index group) {
  const Matrix& x = a.value();
  if (group < 1 || x.rows() % group != 0) {
    throw ShapeError("fold_rows: " + std::to_string(x.rows()) + " rows not divisible by " +
                     std::to_string(group));
  }
  const Index n = x.rows() / group, ch = x.cols();
  Matrix out(n, group * ch);
  for (Index i = 0; i < n; ++i) {
    for (Index f = 0; f < group; ++f) {
      out.block(i, f * ch, 1, ch) = x.row(i * group + f);
    }
  }
  const int ai = a.index();
  return a.graph().push(std::move(out), [ai, group, ch](Graph& g, int self) {
    const Matrix& up = g.grad(self);
    Matrix& ga = g.grad_mut(ai);
    for (Index i = 0; i < up.rows(); ++i) {
      for (Index f = 0; f < group; ++f) {
        ga.row(i * group + f) += up.block(i, f * ch, 1, ch);
      }
    }
  });
}

Var batch_norm(Var x, Var gamma, Var beta, double eps, RowVector* batch_mean,
               RowVector* batch_var) {
  Graph& g = same_graph(x, gamma, "batch_norm");
  same_graph(x, beta, "batch_norm");
  const Matrix& xv = x.value();
  require_nonempty(xv, "batch_norm");
  require_row_broadcast(xv, gamma.value(), "batch_norm");
  require_row_broadcast(xv, beta.value(), "batch_norm");
  const double n = static_cast<double>(xv.rows());
  const RowVector mean = xv.colwise().mean();
  const Matrix centered = xv.rowwise() - mean;
  const RowVector var = centered.array().square().colwise().sum() / n;
  const RowVector inv_std = (var.array() + eps).rsqrt();
  Matrix xhat = centered.array().rowwise() * inv_std.array();
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() +
               beta.value().row(0).array();
  if (batch_mean != nullptr) *batch_mean = mean;
  if (batch_var != nullptr) *batch_var = var;
  const int xi = x.index(), gi = gamma.index(), bi = beta.index();
  return g.push(std::move(out), [xi, gi, bi, xhat = std::move(xhat), inv_std, n](Graph& g,
                                                                               int self) {
    const Matrix& up = g.grad(self);
    const RowVector gam = g.value(gi).row(0);
    g.grad_mut(bi) += up.colwise().sum();
    g.grad_mut(gi) += up.cwiseProduct(xhat).colwise().sum();
    // dx = gamma*inv_std/n * (n*up - sum(up) - xhat*sum(up*xhat))
    const Matrix dxhat = up.array().rowwise() * gam.array();
    const RowVector s1 = dxhat.colwise().sum();
    const RowVector s2 = dxhat.cwiseProduct(xhat).colwise().sum();
    Matrix dx = (dxhat * n).rowwise() - s1;
    dx -= (xhat.array().rowwise() * s2.array()).matrix();
    g.grad_mut(xi).array() += (dx.array().rowwise() * (inv_std.array() / n));
  });
}

}  // namespace milsed
