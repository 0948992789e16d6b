#include "angrymtl/params.hpp"

#include <cmath>

#include "angrymtl/errors.hpp"

namespace angrymtl {

Tensor& ParamStore::add(const std::string& name, long rows, long cols, bool trainable) {
  if (index_.count(name)) throw Error("duplicate tensor name: " + name);
  auto t = std::make_unique<Tensor>();
  t->name = name;
  t->value = Mat::Zero(rows, cols);
  t->grad = Mat::Zero(rows, cols);
  t->trainable = trainable;
  index_[name] = tensors_.size();
  tensors_.push_back(std::move(t));
  return *tensors_.back();
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown tensor: " + name);
  return *tensors_[it->second];
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown tensor: " + name);
  return *tensors_[it->second];
}

void ParamStore::zero_grads() {
  for (auto& t : tensors_) t->grad.setZero();
}

long ParamStore::param_count() const {
  long n = 0;
  for (const auto& t : tensors_) {
    if (t->trainable) n += t->size();
  }
  return n;
}

double ParamStore::grad_norm() const {
  double sq = 0.0;
  for (const auto& t : tensors_) {
    if (t->trainable) sq += t->grad.squaredNorm();
  }
  return std::sqrt(sq);
}

double ParamStore::clip_grad_norm(double max_norm) {
  double norm = grad_norm();
  if (norm > max_norm && norm > 0.0) {
    double scale = max_norm / norm;
    for (auto& t : tensors_) {
      if (t->trainable) t->grad *= scale;
    }
  }
  return norm;
}

void fill_normal(Tensor& t, double mean, double stddev, uint64_t seed) {
  Rng rng(mix_seed(seed, fnv1a(t.name)));
  for (long i = 0; i < t.value.rows(); ++i) {
    for (long j = 0; j < t.value.cols(); ++j) t.value(i, j) = rng.gaussian(mean, stddev);
  }
}

void fill_uniform(Tensor& t, double lo, double hi, uint64_t seed) {
  Rng rng(mix_seed(seed, fnv1a(t.name)));
  for (long i = 0; i < t.value.rows(); ++i) {
    for (long j = 0; j < t.value.cols(); ++j) t.value(i, j) = rng.uniform(lo, hi);
  }
}

void fill_xavier(Tensor& t, uint64_t seed) {
  double bound = std::sqrt(6.0 / static_cast<double>(t.value.rows() + t.value.cols()));
  fill_uniform(t, -bound, bound, seed);
}

}  // namespace angrymtl
