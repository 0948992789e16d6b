#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "angrymtl/rng.hpp"

namespace angrymtl {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// One named parameter matrix with its gradient accumulator.
struct Tensor {
  std::string name;
  Mat value;
  Mat grad;
  bool trainable = true;

  long size() const { return static_cast<long>(value.size()); }
};

// Owns the model's tensors. Iteration order is insertion order, which keeps
// checkpoints and optimizer sweeps deterministic.
class ParamStore {
 public:
  Tensor& add(const std::string& name, long rows, long cols, bool trainable = true);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) > 0; }

  const std::vector<std::unique_ptr<Tensor>>& tensors() const { return tensors_; }

  void zero_grads();
  long param_count() const;
  double grad_norm() const;
  // Returns the pre-clip norm; grads are rescaled when it exceeds max_norm.
  double clip_grad_norm(double max_norm);

 private:
  std::vector<std::unique_ptr<Tensor>> tensors_;
  std::unordered_map<std::string, size_t> index_;
};

// Initializers. Every tensor is seeded from (seed, tensor name) so the values
// do not depend on construction order.
void fill_normal(Tensor& t, double mean, double stddev, uint64_t seed);
void fill_uniform(Tensor& t, double lo, double hi, uint64_t seed);
// Glorot/fan-based uniform for a (fan_out x fan_in) linear map.
void fill_xavier(Tensor& t, uint64_t seed);

}  // namespace angrymtl
