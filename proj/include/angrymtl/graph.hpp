#pragma once

#include <functional>
#include <set>
#include <vector>

#include "angrymtl/params.hpp"
#include "angrymtl/rng.hpp"

namespace angrymtl::ag {

using angrymtl::Mat;

class Graph;

// Handle to a node in a Graph. Valid for the graph's lifetime.
struct Expr {
  Graph* g = nullptr;
  int id = -1;

  bool valid() const { return g != nullptr && id >= 0; }
  const Mat& value() const;
  const Mat& grad() const;
  double scalar() const;
  long rows() const;
  long cols() const;
};

// Reverse-mode automatic differentiation over Eigen matrices. Values are
// computed eagerly as nodes are built; backward() runs one reverse sweep and
// flushes parameter gradients into their tensors. Double precision
// throughout, single-threaded, deterministic.
class Graph {
 public:
  struct Node {
    Mat value;
    Mat grad;
    std::vector<int> parents;
    std::function<void(Graph&, int)> backward;  // empty for leaves
    Tensor* tensor = nullptr;                   // parameter / lookup leaves
    std::vector<int> lookup_rows;               // rows gathered, for lookups
  };

  Expr constant(Mat v);
  Expr param(Tensor& t);
  // Gathers table rows into an (ids.size() x table.cols) value.
  Expr lookup(Tensor& table, const std::vector<int>& row_ids);

  // loss must be 1x1; accumulates into each trainable tensor's grad.
  void backward(Expr loss);

  int add(Node n);
  Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }
  size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
};

// ---- elementwise / arithmetic ----
Expr operator+(Expr a, Expr b);
Expr operator-(Expr a, Expr b);
Expr operator*(Expr a, Expr b);  // Hadamard product
Expr scale(Expr a, double s);
Expr ones_minus(Expr a);  // 1 - a, elementwise

// ---- linear algebra ----
Expr matmul(Expr a, Expr b);
Expr transpose(Expr a);
Expr dot(Expr a, Expr b);  // column vectors -> 1x1

// ---- nonlinearities ----
Expr sigmoid(Expr x);
Expr tanh_(Expr x);
Expr relu(Expr x);
Expr softmax_vec(Expr x);   // column vector
Expr softmax_rows(Expr x);  // softmax across each row

// ---- shape ----
Expr row_as_col(Expr x, long row);       // one row, returned as a column
Expr slice_rows(Expr x, long r0, long n);
Expr slice_cols(Expr x, long c0, long n);
Expr concat_rows(const std::vector<Expr>& xs);  // vertical stack
Expr concat_cols(const std::vector<Expr>& xs);  // horizontal stack

// ---- broadcasting over rows (x: n x d, b/s: d x 1) ----
Expr add_bias_rows(Expr x, Expr b);   // x_ij + b_j
Expr scale_cols(Expr x, Expr s);      // x_ij * s_j

// ---- reductions ----
Expr sum_all(Expr x);

// Normalizes each row to zero mean / unit variance (no affine part).
Expr layer_norm_rows(Expr x, double eps = 1e-5);

// Inverted dropout; the mask is sampled from rng at build time and reused in
// the backward pass. rate must be in [0, 1).
Expr dropout(Expr x, double rate, Rng& rng);

// -log softmax(logits)[gold]; logits is a column vector.
Expr cross_entropy_logits(Expr logits, int gold);
// Mean over classes of binary cross-entropy against the indicator of `gold`,
// from logits, using the numerically stable softplus form.
Expr bce_mean_logits(Expr logits, const std::set<int>& gold);

}  // namespace angrymtl::ag
