#include "angrymtl/graph.hpp"

#include <cmath>

#include "angrymtl/errors.hpp"

namespace angrymtl::ag {

namespace {

void check_same_graph(Expr a, Expr b, const char* op) {
  if (a.g == nullptr || b.g == nullptr || a.g != b.g) {
    throw Error(std::string(op) + ": expressions belong to different graphs");
  }
}

void check_same_shape(Expr a, Expr b, const char* op) {
  check_same_graph(a, b, op);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionMismatch(std::string(op) + ": shapes (" + std::to_string(a.rows()) + "x" +
                            std::to_string(a.cols()) + ") vs (" + std::to_string(b.rows()) + "x" +
                            std::to_string(b.cols()) + ")");
  }
}

Expr make(Graph* g, Graph::Node n) { return Expr{g, g->add(std::move(n))}; }

}  // namespace

const Mat& Expr::value() const { return g->node(id).value; }
const Mat& Expr::grad() const { return g->node(id).grad; }
double Expr::scalar() const {
  const Mat& v = value();
  if (v.size() != 1) throw DimensionMismatch("scalar(): value is not 1x1");
  return v(0, 0);
}
long Expr::rows() const { return value().rows(); }
long Expr::cols() const { return value().cols(); }

int Graph::add(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Expr Graph::constant(Mat v) {
  Node n;
  n.value = std::move(v);
  return make(this, std::move(n));
}

Expr Graph::param(Tensor& t) {
  Node n;
  n.value = t.value;
  n.tensor = &t;
  return make(this, std::move(n));
}

Expr Graph::lookup(Tensor& table, const std::vector<int>& row_ids) {
  Node n;
  n.value.resize(static_cast<long>(row_ids.size()), table.value.cols());
  for (size_t i = 0; i < row_ids.size(); ++i) {
    int r = row_ids[i];
    if (r < 0 || r >= table.value.rows()) {
      throw DimensionMismatch("lookup: row id " + std::to_string(r) + " out of range for " +
                              table.name);
    }
    n.value.row(static_cast<long>(i)) = table.value.row(r);
  }
  n.tensor = &table;
  n.lookup_rows.assign(row_ids.begin(), row_ids.end());
  return make(this, std::move(n));
}

void Graph::backward(Expr loss) {
  if (loss.g != this) throw Error("backward: loss from another graph");
  if (node(loss.id).value.size() != 1) throw DimensionMismatch("backward: loss must be scalar");

  for (int i = 0; i <= loss.id; ++i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  }
  nodes_[static_cast<size_t>(loss.id)].grad(0, 0) = 1.0;

  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.backward) n.backward(*this, i);
  }

  for (int i = 0; i <= loss.id; ++i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.tensor == nullptr || !n.tensor->trainable) continue;
    if (n.lookup_rows.empty()) {
      n.tensor->grad += n.grad;
    } else {
      for (size_t r = 0; r < n.lookup_rows.size(); ++r) {
        n.tensor->grad.row(n.lookup_rows[r]) += n.grad.row(static_cast<long>(r));
      }
    }
  }
}

// ---------------------------------------------------------------------------

Expr operator+(Expr a, Expr b) {
  check_same_shape(a, b, "add");
  Graph::Node n;
  n.value = a.value() + b.value();
  n.parents = {a.id, b.id};
  n.backward = [](Graph& g, int self) {
    const auto& s = g.node(self);
    g.node(s.parents[0]).grad += s.grad;
    g.node(s.parents[1]).grad += s.grad;
  };
  return make(a.g, std::move(n));
}

Expr operator-(Expr a, Expr b) {
  check_same_shape(a, b, "sub");
  Graph::Node n;
  n.value = a.value() - b.value();
  n.parents = {a.id, b.id};
  n.backward = [](Graph& g, int self) {
    const auto& s = g.node(self);
    g.node(s.parents[0]).grad += s.grad;
    g.node(s.parents[1]).grad -= s.grad;
  };
  return make(a.g, std::move(n));
}

Expr operator*(Expr a, Expr b) {
  check_same_shape(a, b, "hadamard");
  Graph::Node n;
  n.value = a.value().cwiseProduct(b.value());
  n.parents = {a.id, b.id};
  n.backward = [](Graph& g, int self) {
    const auto& s = g.node(self);
    g.node(s.parents[0]).grad += s.grad.cwiseProduct(g.node(s.parents[1]).value);
    g.node(s.parents[1]).grad += s.grad.cwiseProduct(g.node(s.parents[0]).value);
  };
  return make(a.g, std::move(n));
}

Expr scale(Expr a, double s) {
  Graph::Node n;
  n.value = a.value() * s;
  n.parents = {a.id};
  n.backward = [s](Graph& g, int self) {
    const auto& nd = g.node(self);
    g.node(nd.parents[0]).grad += nd.grad * s;
  };
  return make(a.g, std::move(n));
}

Expr ones_minus(Expr a) {
  Graph::Node n;
  n.value = Mat::Ones(a.rows(), a.cols()) - a.value();
  n.parents = {a.id};
  n.backward = [](Graph& g, int self) {
    const auto& nd = g.node(self);
    g.node(nd.parents[0]).grad -= nd.grad;
  };
  return make(a.g, std::move(n));
}

Expr matmul(Expr a, Expr b) {
  check_same_graph(a, b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionMismatch("matmul: inner dimensions " + std::to_string(a.cols()) + " vs " +
                            std::to_string(b.rows()));
  }
  Graph::Node n;
  n.value = a.value() * b.value();
  n.parents = {a.id, b.id};
  n.backward = [](Graph& g, int self) {
    const auto& s = g.node(self);
    g.node(s.parents[0]).grad += s.grad * g.node(s.parents[1]).value.transpose();
    g.node(s.parents[1]).grad += g.node(s.parents[0]).value.transpose() * s.grad;
  };
  return make(a.g, std::move(n));
}

Expr transpose(Expr a) {
  Graph::Node n;
  n.value = a.value().transpose();
  n.parents = {a.id};
  n.backward = [](Graph& g, int self) {
    const auto& s = g.node(self);
    g.node(s.parents[0]).grad += s.grad.transpose();
  };
  return make(a.g, std::move(n));
}

Expr dot(Expr a, Expr b) {
  check_same_shape(a, b, "dot");
  if (a.cols() != 1) throw DimensionMismatch("dot: expected column vectors");
  Graph::Node n;
  n.value = Mat::Constant(1, 1, a.value().col(0).dot(b.value().col(0)));
  n.parents = {a.id, b.id};
  n.backward = [](Graph& g, int self) {
    const auto& s = g.node(self);
    double go = s.grad(0, 0);
    g.node(s.parents[0]).grad += go * g.node(s.parents[1]).value;
    g.node(s.parents[1]).grad += go * g.node(s.parents[0]).value;
  };
  return make(a.g, std::move(n));
}

Expr sigmoid(Expr x) {
  Graph::Node n;
  n.value = x.value().unaryExpr([](double v) {
    return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  });
  n.parents = {x.id};
  n.backward = [](Graph& g, int self) {
    const auto& s = g.node(self);
    g.node(s.parents[0]).grad +=
        s.grad.cwiseProduct(s.value.cwiseProduct(Mat::Ones(s.value.rows(), s.value.cols()) - s.value));
  };
  return make(x.g, std::move(n));
}

Expr tanh_(Expr x) {
  Graph::Node n;
  n.value = x.value().array().tanh().matrix();
  n.parents = {x.id};
  n.backward = [](Graph& g, int self) {
    const auto& s = g.node(self);
    g.node(s.parents[0]).grad +=
        s.grad.cwiseProduct(Mat::Ones(s.value.rows(), s.value.cols()) - s.value.cwiseProduct(s.value));
  };
  return make(x.g, std::move(n));
}

Expr relu(Expr x) {
  Graph::Node n;
  n.value = x.value().cwiseMax(0.0);
  n.parents = {x.id};
  n.backward = [](Graph& g, int self) {
    const auto& s = g.node(self);
    const Mat& xv = g.node(s.parents[0]).value;
    g.node(s.parents[0]).grad +=
        s.grad.cwiseProduct((xv.array() > 0.0).cast<double>().matrix());
  };
  return make(x.g, std::move(n));
}

namespace {
Eigen::RowVectorXd softmax_row(const Eigen::RowVectorXd& z) {
  double m = z.maxCoeff();
  Eigen::RowVectorXd e = (z.array() - m).exp();
  return e / e.sum();
}
}  // namespace

Expr softmax_vec(Expr x) {
  if (x.cols() != 1) throw DimensionMismatch("softmax_vec: expected a column vector");
  Graph::Node n;
  n.value = softmax_row(x.value().col(0).transpose()).transpose();
  n.parents = {x.id};
  n.backward = [](Graph& g, int self) {
    const auto& s = g.node(self);
    const Mat& y = s.value;
    double inner = y.col(0).dot(s.grad.col(0));
    g.node(s.parents[0]).grad += y.cwiseProduct(s.grad - Mat::Constant(y.rows(), 1, inner));
  };
  return make(x.g, std::move(n));
}

Expr softmax_rows(Expr x) {
  Graph::Node n;
  n.value.resize(x.rows(), x.cols());
  for (long r = 0; r < x.rows(); ++r) n.value.row(r) = softmax_row(x.value().row(r));
  n.parents = {x.id};
  n.backward = [](Graph& g, int self) {
    const auto& s = g.node(self);
    Mat& gx = g.node(s.parents[0]).grad;
    for (long r = 0; r < s.value.rows(); ++r) {
      double inner = s.value.row(r).dot(s.grad.row(r));
      gx.row(r) += s.value.row(r).cwiseProduct(s.grad.row(r).array().matrix() -
                                               Eigen::RowVectorXd::Constant(s.value.cols(), inner));
    }
  };
  return make(x.g, std::move(n));
}

Expr row_as_col(Expr x, long row) {
  if (row < 0 || row >= x.rows()) throw DimensionMismatch("row_as_col: row out of range");
  Graph::Node n;
  n.value = x.value().row(row).transpose();
  n.parents = {x.id};
  n.backward = [row](Graph& g, int self) {
    const auto& s = g.node(self);
    g.node(s.parents[0]).grad.row(row) += s.grad.col(0).transpose();
  };
  return make(x.g, std::move(n));
}

Expr slice_rows(Expr x, long r0, long n_rows) {
  if (r0 < 0 || r0 + n_rows > x.rows()) throw DimensionMismatch("slice_rows: out of range");
  Graph::Node n;
  n.value = x.value().middleRows(r0, n_rows);
  n.parents = {x.id};
  n.backward = [r0, n_rows](Graph& g, int self) {
    const auto& s = g.node(self);
    g.node(s.parents[0]).grad.middleRows(r0, n_rows) += s.grad;
  };
  return make(x.g, std::move(n));
}

Expr slice_cols(Expr x, long c0, long n_cols) {
  if (c0 < 0 || c0 + n_cols > x.cols()) throw DimensionMismatch("slice_cols: out of range");
  Graph::Node n;
  n.value = x.value().middleCols(c0, n_cols);
  n.parents = {x.id};
  n.backward = [c0, n_cols](Graph& g, int self) {
    const auto& s = g.node(self);
    g.node(s.parents[0]).grad.middleCols(c0, n_cols) += s.grad;
  };
  return make(x.g, std::move(n));
}

Expr concat_rows(const std::vector<Expr>& xs) {
  if (xs.empty()) throw DimensionMismatch("concat_rows: empty list");
  long cols = xs[0].cols();
  long rows = 0;
  for (const Expr& e : xs) {
    check_same_graph(xs[0], e, "concat_rows");
    if (e.cols() != cols) throw DimensionMismatch("concat_rows: column counts differ");
    rows += e.rows();
  }
  Graph::Node n;
  n.value.resize(rows, cols);
  long at = 0;
  for (const Expr& e : xs) {
    n.value.middleRows(at, e.rows()) = e.value();
    n.parents.push_back(e.id);
    at += e.rows();
  }
  n.backward = [](Graph& g, int self) {
    const auto& s = g.node(self);
    long at2 = 0;
    for (int p : s.parents) {
      long pr = g.node(p).value.rows();
      g.node(p).grad += s.grad.middleRows(at2, pr);
      at2 += pr;
    }
  };
  return make(xs[0].g, std::move(n));
}

Expr concat_cols(const std::vector<Expr>& xs) {
  if (xs.empty()) throw DimensionMismatch("concat_cols: empty list");
  long rows = xs[0].rows();
  long cols = 0;
  for (const Expr& e : xs) {
    check_same_graph(xs[0], e, "concat_cols");
    if (e.rows() != rows) throw DimensionMismatch("concat_cols: row counts differ");
    cols += e.cols();
  }
  Graph::Node n;
  n.value.resize(rows, cols);
  long at = 0;
  for (const Expr& e : xs) {
    n.value.middleCols(at, e.cols()) = e.value();
    n.parents.push_back(e.id);
    at += e.cols();
  }
  n.backward = [](Graph& g, int self) {
    const auto& s = g.node(self);
    long at2 = 0;
    for (int p : s.parents) {
      long pc = g.node(p).value.cols();
      g.node(p).grad += s.grad.middleCols(at2, pc);
      at2 += pc;
    }
  };
  return make(xs[0].g, std::move(n));
}

Expr add_bias_rows(Expr x, Expr b) {
  check_same_graph(x, b, "add_bias_rows");
  if (b.cols() != 1 || b.rows() != x.cols()) {
    throw DimensionMismatch("add_bias_rows: bias must be (cols x 1)");
  }
  Graph::Node n;
  n.value = x.value().rowwise() + b.value().col(0).transpose();
  n.parents = {x.id, b.id};
  n.backward = [](Graph& g, int self) {
    const auto& s = g.node(self);
    g.node(s.parents[0]).grad += s.grad;
    g.node(s.parents[1]).grad += s.grad.colwise().sum().transpose();
  };
  return make(x.g, std::move(n));
}

Expr scale_cols(Expr x, Expr s) {
  check_same_graph(x, s, "scale_cols");
  if (s.cols() != 1 || s.rows() != x.cols()) {
    throw DimensionMismatch("scale_cols: scale must be (cols x 1)");
  }
  Graph::Node n;
  n.value = x.value().array().rowwise() * s.value().col(0).transpose().array();
  n.parents = {x.id, s.id};
  n.backward = [](Graph& g, int self) {
    const auto& nd = g.node(self);
    const Mat& xv = g.node(nd.parents[0]).value;
    const Mat& sv = g.node(nd.parents[1]).value;
    g.node(nd.parents[0]).grad +=
        (nd.grad.array().rowwise() * sv.col(0).transpose().array()).matrix();
    g.node(nd.parents[1]).grad += nd.grad.cwiseProduct(xv).colwise().sum().transpose();
  };
  return make(x.g, std::move(n));
}

Expr sum_all(Expr x) {
  Graph::Node n;
  n.value = Mat::Constant(1, 1, x.value().sum());
  n.parents = {x.id};
  n.backward = [](Graph& g, int self) {
    const auto& s = g.node(self);
    const Mat& xv = g.node(s.parents[0]).value;
    g.node(s.parents[0]).grad += Mat::Constant(xv.rows(), xv.cols(), s.grad(0, 0));
  };
  return make(x.g, std::move(n));
}

Expr layer_norm_rows(Expr x, double eps) {
  const long d = x.cols();
  if (d < 1) throw DimensionMismatch("layer_norm_rows: empty rows");
  Graph::Node n;
  n.value.resize(x.rows(), d);
  Eigen::VectorXd inv_std(x.rows());
  for (long r = 0; r < x.rows(); ++r) {
    double mu = x.value().row(r).mean();
    double var = (x.value().row(r).array() - mu).square().mean();
    double s = std::sqrt(var + eps);
    inv_std(r) = 1.0 / s;
    n.value.row(r) = (x.value().row(r).array() - mu) / s;
  }
  n.parents = {x.id};
  n.backward = [inv_std](Graph& g, int self) {
    const auto& s = g.node(self);
    Mat& gx = g.node(s.parents[0]).grad;
    const long d2 = s.value.cols();
    for (long r = 0; r < s.value.rows(); ++r) {
      double gmean = s.grad.row(r).mean();
      double gy = s.grad.row(r).cwiseProduct(s.value.row(r)).mean();
      gx.row(r) += inv_std(r) * (s.grad.row(r).array() - gmean - s.value.row(r).array() * gy)
                       .matrix();
      (void)d2;
    }
  };
  return make(x.g, std::move(n));
}

Expr dropout(Expr x, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout: rate must be in [0, 1)");
  if (rate == 0.0) return x;
  Mat mask(x.rows(), x.cols());
  double keep_scale = 1.0 / (1.0 - rate);
  for (long i = 0; i < mask.rows(); ++i) {
    for (long j = 0; j < mask.cols(); ++j) {
      mask(i, j) = rng.uniform() < rate ? 0.0 : keep_scale;
    }
  }
  Graph::Node n;
  n.value = x.value().cwiseProduct(mask);
  n.parents = {x.id};
  n.backward = [mask](Graph& g, int self) {
    const auto& s = g.node(self);
    g.node(s.parents[0]).grad += s.grad.cwiseProduct(mask);
  };
  return make(x.g, std::move(n));
}

Expr cross_entropy_logits(Expr logits, int gold) {
  if (logits.cols() != 1) throw DimensionMismatch("cross_entropy_logits: expected column vector");
  const long m = logits.rows();
  if (gold < 0 || gold >= m) {
    throw InvalidGold("gold class " + std::to_string(gold) + " out of range for m=" +
                      std::to_string(m));
  }
  const Eigen::VectorXd z = logits.value().col(0);
  double zmax = z.maxCoeff();
  Eigen::VectorXd e = (z.array() - zmax).exp();
  double lse = std::log(e.sum()) + zmax;
  Eigen::VectorXd p = e / e.sum();

  Graph::Node n;
  n.value = Mat::Constant(1, 1, lse - z(gold));
  n.parents = {logits.id};
  n.backward = [p, gold](Graph& g, int self) {
    const auto& s = g.node(self);
    Eigen::VectorXd d = p;
    d(gold) -= 1.0;
    g.node(s.parents[0]).grad.col(0) += s.grad(0, 0) * d;
  };
  return make(logits.g, std::move(n));
}

Expr bce_mean_logits(Expr logits, const std::set<int>& gold) {
  if (logits.cols() != 1) throw DimensionMismatch("bce_mean_logits: expected column vector");
  const long m = logits.rows();
  for (int gidx : gold) {
    if (gidx < 0 || gidx >= m) {
      throw InvalidGold("gold class " + std::to_string(gidx) + " out of range for m=" +
                        std::to_string(m));
    }
  }
  Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
  for (int gidx : gold) y(gidx) = 1.0;

  const Eigen::VectorXd z = logits.value().col(0);
  double total = 0.0;
  for (long j = 0; j < m; ++j) {
    // max(z,0) - z*y + log(1 + exp(-|z|))
    total += std::max(z(j), 0.0) - z(j) * y(j) + std::log1p(std::exp(-std::abs(z(j))));
  }
  Graph::Node n;
  n.value = Mat::Constant(1, 1, total / static_cast<double>(m));
  n.parents = {logits.id};
  n.backward = [y, m](Graph& g, int self) {
    const auto& s = g.node(self);
    const Eigen::VectorXd& zv = g.node(s.parents[0]).value.col(0);
    Eigen::VectorXd sig = zv.unaryExpr([](double v) {
      return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    });
    g.node(s.parents[0]).grad.col(0) += s.grad(0, 0) * (sig - y) / static_cast<double>(m);
  };
  return make(logits.g, std::move(n));
}

}  // namespace angrymtl::ag
